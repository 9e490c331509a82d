//! Cold-item ranking metrics and embedding distance reports.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionDataset, ItemIdx, UserIdx};
use crate::grad::Tape;
use crate::model::{predict, Model};
use crate::{Error, Result};

pub const DEFAULT_KS: [usize; 3] = [5, 10, 20];

/// How the per-item hit rate is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HitRate {
    /// Hits in the top `k` divided by `k`.
    #[default]
    PerK,
    /// Hits in the top `k` divided by `min(k, relevant)`.
    Recall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub per_k: Vec<MetricsAtK>,
    /// Test items that contributed.
    pub n_items: usize,
    /// Test items skipped because none of their users are in the pool.
    pub skipped_items: usize,
    /// Relevant users dropped because they have no training interactions.
    pub dropped_users: usize,
}

impl RankingMetrics {
    pub fn at(&self, k: usize) -> Option<&MetricsAtK> {
        self.per_k.iter().find(|m| m.k == k)
    }
}

/// Candidate users with their embeddings, computed once per evaluation.
pub struct UserPool {
    users: Vec<UserIdx>,
    embeddings: Vec<Vec<f64>>,
    in_pool: Vec<bool>,
}

impl UserPool {
    /// Every user with at least one training interaction.
    pub fn build(model: &Model, train: &InteractionDataset) -> Result<Self> {
        let users = train.active_users();
        if users.is_empty() {
            return Err(Error::Evaluation("no training users to rank".into()));
        }
        let mut embeddings = Vec::with_capacity(users.len());
        let mut in_pool = vec![false; train.n_users()];
        for &u in &users {
            let mut tape = Tape::new();
            let s = model.uce(&mut tape, u, train)?;
            embeddings.push(tape.value(s).to_vec());
            in_pool[u] = true;
        }
        Ok(UserPool {
            users,
            embeddings,
            in_pool,
        })
    }

    pub fn users(&self) -> &[UserIdx] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn contains(&self, u: UserIdx) -> bool {
        self.in_pool.get(u).copied().unwrap_or(false)
    }

    pub fn embedding(&self, u: UserIdx) -> Option<&[f64]> {
        self.users
            .binary_search(&u)
            .ok()
            .map(|i| self.embeddings[i].as_slice())
    }

    pub fn scores(&self, item_embedding: &[f64]) -> Result<Vec<f64>> {
        self.embeddings
            .iter()
            .map(|s| predict(item_embedding, s))
            .collect()
    }
}

/// Users ordered by score, highest first; equal scores keep ascending user
/// index.
pub fn rank_by_scores(users: &[UserIdx], scores: &[f64]) -> Vec<UserIdx> {
    let mut order: Vec<usize> = (0..users.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(users[a].cmp(&users[b]))
    });
    order.into_iter().map(|i| users[i]).collect()
}

/// Content embedding of an item from its attributes alone.
pub fn item_embedding(
    model: &Model,
    attributes_of: &InteractionDataset,
    item: ItemIdx,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let q = model.item_cbce(&mut tape, attributes_of.item_attributes(item)?)?;
    Ok(tape.value(q).to_vec())
}

/// Ranked user list for a cold item, scored by its content embedding.
pub fn rank_users_for_item(
    model: &Model,
    attributes_of: &InteractionDataset,
    item: ItemIdx,
    pool: &UserPool,
) -> Result<Vec<UserIdx>> {
    let q = item_embedding(model, attributes_of, item)?;
    Ok(rank_by_scores(pool.users(), &pool.scores(&q)?))
}

/// 1-based ranks of the relevant users found in `list`.
fn ranks(list: &[UserIdx], relevant: &[UserIdx]) -> Vec<usize> {
    list.iter()
        .enumerate()
        .filter(|(_, u)| relevant.contains(u))
        .map(|(i, _)| i + 1)
        .collect()
}

/// Relevant users ranked within the top `k`, divided by `k`.
pub fn hr_at_k(list: &[UserIdx], relevant: &[UserIdx], k: usize) -> f64 {
    hr_from_ranks(&ranks(list, relevant), relevant.len(), k, HitRate::PerK)
}

/// `(1/|relevant|) * sum over relevant users ranked within k of 1/log2(1 + rank)`.
///
/// There is no ideal-DCG normalizer, so items with several relevant users
/// can stay below 1 even under a perfect ranking.
pub fn ndcg_at_k(list: &[UserIdx], relevant: &[UserIdx], k: usize) -> f64 {
    ndcg_from_ranks(&ranks(list, relevant), relevant.len(), k)
}

fn hr_from_ranks(ranks: &[usize], n_relevant: usize, k: usize, mode: HitRate) -> f64 {
    let hits = ranks.iter().filter(|&&r| r <= k).count() as f64;
    match mode {
        HitRate::PerK => hits / k as f64,
        HitRate::Recall => hits / k.min(n_relevant).max(1) as f64,
    }
}

fn ndcg_from_ranks(ranks: &[usize], n_relevant: usize, k: usize) -> f64 {
    if n_relevant == 0 {
        return 0.0;
    }
    let gain: f64 = ranks
        .iter()
        .filter(|&&r| r <= k)
        .map(|&r| 1.0 / libm::log2(1.0 + r as f64))
        .sum();
    gain / n_relevant as f64
}

/// Metrics of one test item, one value per requested `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemMetrics {
    pub item: ItemIdx,
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub dropped_users: usize,
}

/// Metrics of a single cold item, or `None` when none of its users can be
/// ranked.
pub fn item_metrics(
    model: &Model,
    pool: &UserPool,
    test: &InteractionDataset,
    item: ItemIdx,
    ks: &[usize],
    mode: HitRate,
) -> Result<(Option<ItemMetrics>, usize)> {
    let all = test.users_of_item(item);
    let relevant: Vec<UserIdx> = all.iter().copied().filter(|&u| pool.contains(u)).collect();
    let dropped = all.len() - relevant.len();
    if dropped > 0 {
        debug!("item {item}: {dropped} relevant users absent from training");
    }
    if relevant.is_empty() {
        return Ok((None, dropped));
    }
    let list = rank_users_for_item(model, test, item, pool)?;
    let rk = ranks(&list, &relevant);
    let hr = ks
        .iter()
        .map(|&k| hr_from_ranks(&rk, relevant.len(), k, mode))
        .collect();
    let ndcg = ks
        .iter()
        .map(|&k| ndcg_from_ranks(&rk, relevant.len(), k))
        .collect();
    Ok((
        Some(ItemMetrics {
            item,
            hr,
            ndcg,
            dropped_users: dropped,
        }),
        dropped,
    ))
}

/// Cold test items, checked to have no training interactions.
pub fn test_items(train: &InteractionDataset, test: &InteractionDataset) -> Result<Vec<ItemIdx>> {
    let items = test.active_items();
    if items.is_empty() {
        return Err(Error::Evaluation("empty test split".into()));
    }
    if let Some(v) = items
        .iter()
        .find(|&&v| v < train.n_items() && !train.users_of_item(v).is_empty())
    {
        return Err(Error::Evaluation(format!(
            "test item {v} has training interactions"
        )));
    }
    Ok(items)
}

pub fn validate_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Evaluation(format!(
            "cutoffs must be nonempty and >= 1, got {ks:?}"
        )));
    }
    Ok(())
}

/// Means over items, summed in item order.
pub fn aggregate(
    mut per_item: Vec<ItemMetrics>,
    ks: &[usize],
    skipped: usize,
    dropped: usize,
) -> RankingMetrics {
    per_item.sort_by_key(|m| m.item);
    let n = per_item.len();
    let per_k = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mean = |f: &dyn Fn(&ItemMetrics) -> f64| {
                if n == 0 {
                    0.0
                } else {
                    per_item.iter().map(f).sum::<f64>() / n as f64
                }
            };
            MetricsAtK {
                k,
                hr: mean(&|m| m.hr[i]),
                ndcg: mean(&|m| m.ndcg[i]),
            }
        })
        .collect();
    RankingMetrics {
        per_k,
        n_items: n,
        skipped_items: skipped,
        dropped_users: dropped,
    }
}

/// HR@k and NDCG@k over the cold items of `test`, ranking every training user.
pub fn evaluate(
    model: &Model,
    train: &InteractionDataset,
    test: &InteractionDataset,
    ks: &[usize],
    mode: HitRate,
) -> Result<RankingMetrics> {
    validate_ks(ks)?;
    let items = test_items(train, test)?;
    let pool = UserPool::build(model, train)?;
    let mut per_item = Vec::with_capacity(items.len());
    let (mut skipped, mut dropped) = (0, 0);
    for v in items {
        let (m, d) = item_metrics(model, &pool, test, v, ks, mode)?;
        dropped += d;
        match m {
            Some(m) => per_item.push(m),
            None => skipped += 1,
        }
    }
    if per_item.is_empty() {
        return Err(Error::Evaluation(
            "no test item has a user in the training pool".into(),
        ));
    }
    Ok(aggregate(per_item, ks, skipped, dropped))
}

/// One row of a distance report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub positive: ItemIdx,
    pub negative: ItemIdx,
    /// Distance from the positive item's content embedding to the user.
    pub d_pos: f64,
    pub d_neg: f64,
    /// `d_neg - d_pos`; positive when the liked item sits closer.
    pub diff: f64,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            primitive: "distance",
            detail: format!("{} vs {}", a.len(), b.len()),
        });
    }
    Ok(libm::sqrt(
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
    ))
}

/// Euclidean distances from the user's embedding to the content embeddings
/// of each `(positive, negative)` pair.
pub fn distance_report(
    model: &Model,
    train: &InteractionDataset,
    attributes_of: &InteractionDataset,
    user: UserIdx,
    pairs: &[(ItemIdx, ItemIdx)],
) -> Result<Vec<DistanceRow>> {
    if user >= train.n_users() || train.items_of_user(user).is_empty() {
        return Err(Error::ColdUser(user));
    }
    let mut tape = Tape::new();
    let s = model.uce(&mut tape, user, train)?;
    let s = tape.value(s).to_vec();
    pairs
        .iter()
        .map(|&(p, n)| {
            let d_pos = euclidean(&item_embedding(model, attributes_of, p)?, &s)?;
            let d_neg = euclidean(&item_embedding(model, attributes_of, n)?, &s)?;
            Ok(DistanceRow {
                positive: p,
                negative: n,
                d_pos,
                d_neg,
                diff: d_neg - d_pos,
            })
        })
        .collect()
}

/// Pairs each of up to `n` of the user's relevant items with a random
/// irrelevant item from the same group.
///
/// `candidates` are the items to draw from; `group` assigns each item to a
/// group such as its genre. Positives without a same-group negative are
/// skipped.
pub fn sample_distance_pairs(
    user: UserIdx,
    candidates: &[ItemIdx],
    relevant: &InteractionDataset,
    group: impl Fn(ItemIdx) -> usize,
    n: usize,
    rng: &mut crate::rng::Rng,
) -> Vec<(ItemIdx, ItemIdx)> {
    use rand::seq::{IndexedRandom, SliceRandom};
    let mut pos: Vec<ItemIdx> = candidates
        .iter()
        .copied()
        .filter(|&v| relevant.contains(user, v))
        .collect();
    pos.shuffle(rng);
    let mut out = Vec::new();
    for p in pos {
        if out.len() == n {
            break;
        }
        let g = group(p);
        let negs: Vec<ItemIdx> = candidates
            .iter()
            .copied()
            .filter(|&v| group(v) == g && !relevant.contains(user, v))
            .collect();
        if let Some(&neg) = negs.choose(rng) {
            out.push((p, neg));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Stream};
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn sort_and_tie_break() {
        assert_eq!(rank_by_scores(&[3, 8], &[0.1, 0.9]), vec![8, 3]);
        assert_eq!(rank_by_scores(&[5, 2, 9], &[0.4, 0.4, 0.4]), vec![2, 5, 9]);
        assert_eq!(
            rank_by_scores(&[0, 1, 2, 3], &[0.0, 2.0, 2.0, -1.0]),
            vec![1, 2, 0, 3]
        );
    }

    #[test]
    fn hit_rate_examples() {
        assert!((hr_at_k(&[7, 1, 2, 3, 4], &[7], 5) - 0.2).abs() < 1e-15);
        assert_eq!(hr_at_k(&[1, 2, 3, 4, 5, 6, 7], &[7], 5), 0.0);
        assert!((hr_at_k(&[2, 1, 3, 4], &[1, 4], 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn recall_mode() {
        let rk = ranks(&[2, 1, 3, 4], &[1, 4]);
        assert_eq!(hr_from_ranks(&rk, 2, 2, HitRate::Recall), 0.5);
        assert_eq!(hr_from_ranks(&rk, 2, 4, HitRate::Recall), 1.0);
        assert_eq!(
            hr_from_ranks(&ranks(&[9, 1], &[9]), 1, 5, HitRate::Recall),
            1.0
        );
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[4, 1, 2], &[4], 5), 1.0);
        assert!((ndcg_at_k(&[1, 4, 2], &[4], 2) - 0.630930).abs() < 1e-6);
        assert_eq!(ndcg_at_k(&[1, 2, 4], &[4], 2), 0.0);
        // two relevant users at ranks 1 and 2: the literal formula peaks below 1
        let best = ndcg_at_k(&[1, 2, 3], &[1, 2], 3);
        assert!((best - (1.0 + 1.0 / libm::log2(3.0)) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn literal_ndcg_maximum_by_enumeration() {
        // every ordering of 4 users with 2 relevant, brute force
        let users = [0, 1, 2, 3];
        let relevant = [1, 3];
        let mut best: f64 = 0.0;
        let mut perm = users;
        let mut c = [0usize; 4];
        let mut i = 0;
        best = best.max(ndcg_at_k(&perm, &relevant, 3));
        while i < 4 {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.max(ndcg_at_k(&perm, &relevant, 3));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        assert!((best - (1.0 + 1.0 / libm::log2(3.0)) / 2.0).abs() < 1e-15);
        assert!(best < 1.0);
    }

    proptest! {
        #[test]
        fn metrics_invariant_under_monotone_maps(
            scores in prop::collection::vec(-3.0f64..3.0, 2..30),
            rel_mask in prop::collection::vec(any::<bool>(), 30),
            k in 1usize..10,
            a in 0.1f64..5.0,
            b in -4.0f64..4.0,
        ) {
            let users: Vec<usize> = (0..scores.len()).collect();
            let relevant: Vec<usize> = users.iter().copied().filter(|&u| rel_mask[u]).collect();
            prop_assume!(!relevant.is_empty());
            let base = rank_by_scores(&users, &scores);
            for mapped in [
                scores.iter().map(|s| libm::exp(*s)).collect::<Vec<_>>(),
                scores.iter().map(|s| a * s + b).collect(),
            ] {
                let l = rank_by_scores(&users, &mapped);
                prop_assert_eq!(hr_at_k(&l, &relevant, k), hr_at_k(&base, &relevant, k));
                prop_assert_eq!(ndcg_at_k(&l, &relevant, k), ndcg_at_k(&base, &relevant, k));
            }
            let n = ndcg_at_k(&base, &relevant, k);
            prop_assert!((0.0..=1.0).contains(&n));
            let h = hr_at_k(&base, &relevant, k);
            prop_assert!((0.0..=1.0).contains(&h));
        }
    }

    #[test]
    fn distances() {
        assert_eq!(euclidean(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(euclidean(&[3.0, 4.0, 0.0], &[0.0; 3]).unwrap(), 5.0);
        assert!(euclidean(&[1.0], &[1.0, 2.0]).is_err());
    }

    mod with_model {
        use super::*;
        use crate::data::{AttributeSchema, AttributeValue, FieldSpec};
        use crate::model::{Hyperparams, ModelParams};

        /// 8 users; items 0..4 warm (train), 4..8 cold (test).
        fn fixture() -> (
            InteractionDataset,
            InteractionDataset,
            Hyperparams,
            ModelParams,
        ) {
            let schema = AttributeSchema::new(vec![FieldSpec::dense("f", 3)]).unwrap();
            let records: Vec<Vec<AttributeValue>> = (0..8)
                .map(|v| {
                    vec![AttributeValue::Dense(vec![
                        v as f64 * 0.3 - 1.0,
                        (v % 3) as f64,
                        0.5,
                    ])]
                })
                .collect();
            let mut rng = rng::stream(5, Stream::Synthetic, 0, 0);
            let mut train_pairs = Vec::new();
            let mut test_pairs = Vec::new();
            for u in 0..8 {
                for v in 0..8 {
                    if rng.random_bool(0.4) {
                        if v < 4 {
                            train_pairs.push((u, v))
                        } else {
                            test_pairs.push((u, v))
                        }
                    }
                }
            }
            // user 7 has no training history
            train_pairs.retain(|p| p.0 != 7);
            test_pairs.push((7, 5));
            test_pairs.push((0, 4));
            let full = InteractionDataset::from_pairs(
                8,
                8,
                train_pairs.iter().chain(&test_pairs).copied(),
            )
            .unwrap()
            .with_attributes(&schema, records)
            .unwrap();
            let train = full.restrict_to_items(&[0, 1, 2, 3]);
            let test = full.restrict_to_items(&[4, 5, 6, 7]);
            let hyper = Hyperparams {
                d: 4,
                seed: 3,
                ..Default::default()
            };
            let mut params = ModelParams::init(&schema, 8, 8, &hyper).unwrap();
            let mut rng = rng::stream(9, Stream::Init, 0, 0);
            for id in params.store.ids().collect::<Vec<_>>() {
                params
                    .store
                    .get_mut(id)
                    .data
                    .iter_mut()
                    .for_each(|x| *x = rng.random_range(-1.0..1.0));
            }
            (train, test, hyper, params)
        }

        #[test]
        fn ranking_matches_exhaustive_oracle() {
            let (train, test, hyper, params) = fixture();
            let model = Model::new(&params, &hyper);
            let pool = UserPool::build(&model, &train).unwrap();
            assert!(!pool.contains(7));
            for v in 4..8 {
                let q = item_embedding(&model, &test, v).unwrap();
                let mut scored: Vec<(f64, usize)> = pool
                    .users()
                    .iter()
                    .map(|&u| {
                        let s = pool.embedding(u).unwrap();
                        (q.iter().zip(s).map(|(a, b)| a * b).sum(), u)
                    })
                    .collect();
                scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                let oracle: Vec<usize> = scored.into_iter().map(|p| p.1).collect();
                assert_eq!(
                    rank_users_for_item(&model, &test, v, &pool).unwrap(),
                    oracle
                );
            }
        }

        #[test]
        fn evaluate_matches_enumeration() {
            let (train, test, hyper, params) = fixture();
            let model = Model::new(&params, &hyper);
            let ks = [1, 2, 5];
            let m = evaluate(&model, &train, &test, &ks, HitRate::PerK).unwrap();
            let pool = UserPool::build(&model, &train).unwrap();
            let mut sums = vec![(0.0, 0.0); ks.len()];
            let mut n = 0;
            for v in 4..8 {
                let relevant: Vec<usize> = test
                    .users_of_item(v)
                    .iter()
                    .copied()
                    .filter(|&u| !train.items_of_user(u).is_empty())
                    .collect();
                if relevant.is_empty() {
                    continue;
                }
                n += 1;
                let list = rank_users_for_item(&model, &test, v, &pool).unwrap();
                for (i, &k) in ks.iter().enumerate() {
                    let mut hits = 0.0;
                    let mut gain = 0.0;
                    for (pos, u) in list.iter().enumerate() {
                        if pos < k && relevant.contains(u) {
                            hits += 1.0;
                            gain += 1.0 / libm::log2(pos as f64 + 2.0);
                        }
                    }
                    sums[i].0 += hits / k as f64;
                    sums[i].1 += gain / relevant.len() as f64;
                }
            }
            assert_eq!(m.n_items, n);
            assert!(m.dropped_users >= 1);
            for (i, &k) in ks.iter().enumerate() {
                let at = m.at(k).unwrap();
                assert!((at.hr - sums[i].0 / n as f64).abs() < 1e-12);
                assert!((at.ndcg - sums[i].1 / n as f64).abs() < 1e-12);
            }
        }

        #[test]
        fn single_item_and_order_independence() {
            let (train, test, hyper, params) = fixture();
            let model = Model::new(&params, &hyper);
            let one = test.restrict_to_items(&[4]);
            let m = evaluate(&model, &train, &one, &[5], HitRate::PerK).unwrap();
            let pool = UserPool::build(&model, &train).unwrap();
            let (im, _) = item_metrics(&model, &pool, &one, 4, &[5], HitRate::PerK).unwrap();
            let im = im.unwrap();
            assert_eq!(m.at(5).unwrap().hr, im.hr[0]);
            assert_eq!(m.at(5).unwrap().ndcg, im.ndcg[0]);

            let mut items: Vec<ItemMetrics> = (4..8)
                .filter_map(|v| {
                    item_metrics(&model, &pool, &test, v, &[5], HitRate::PerK)
                        .unwrap()
                        .0
                })
                .collect();
            let fwd = aggregate(items.clone(), &[5], 0, 0);
            items.reverse();
            assert_eq!(aggregate(items, &[5], 0, 0), fwd);
        }

        #[test]
        fn errors() {
            let (train, test, hyper, params) = fixture();
            let model = Model::new(&params, &hyper);
            let empty = test.restrict_to_items(&[]);
            assert!(evaluate(&model, &train, &empty, &[5], HitRate::PerK).is_err());
            // warm items are not a valid test set
            assert!(evaluate(&model, &train, &train, &[5], HitRate::PerK).is_err());
            assert!(evaluate(&model, &train, &test, &[0], HitRate::PerK).is_err());
            let bare = InteractionDataset::from_pairs(8, 8, [(0, 4)]).unwrap();
            assert!(matches!(
                evaluate(&model, &train, &bare, &[5], HitRate::PerK),
                Err(Error::MissingAttributes(4))
            ));
        }

        #[test]
        fn distance_rows() {
            let (train, test, hyper, params) = fixture();
            let model = Model::new(&params, &hyper);
            let rows = distance_report(&model, &train, &test, 0, &[(4, 5), (6, 7)]).unwrap();
            assert_eq!(rows.len(), 2);
            for r in rows {
                assert!((r.diff - (r.d_neg - r.d_pos)).abs() < 1e-15);
            }
            assert!(distance_report(&model, &train, &test, 7, &[(4, 5)]).is_err());
        }
    }
}
