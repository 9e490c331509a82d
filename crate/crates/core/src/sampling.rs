//! Training batches: BPR user pairs and contrastive item sets.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::data::{CoocIndex, InteractionDataset, ItemIdx, UserIdx};
use crate::model::Hyperparams;
use crate::rng::{self, Rng, Stream};
use crate::{Error, Result};

/// One training triple `(item, u+, u-)` with its contrastive samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchEntry {
    pub item: ItemIdx,
    pub pos_user: UserIdx,
    pub neg_user: UserIdx,
    pub positives: Vec<ItemIdx>,
    pub negatives: Vec<ItemIdx>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContrastiveBatch {
    pub entries: Vec<BatchEntry>,
}

impl ContrastiveBatch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of (anchor, positive) pairs.
    pub fn n_pairs(&self) -> usize {
        self.entries.iter().map(|e| e.positives.len()).sum()
    }
}

/// A user outside `users_of_item(item)`, uniform by rejection.
pub fn sample_negative_user(
    item: ItemIdx,
    train: &InteractionDataset,
    rng: &mut Rng,
) -> Result<UserIdx> {
    let n = train.n_users();
    if train.users_of_item(item).len() >= n {
        return Err(Error::NoNegative(format!(
            "every user interacted with item {item}"
        )));
    }
    loop {
        let u = rng.random_range(0..n);
        if !train.contains(u, item) {
            return Ok(u);
        }
    }
}

/// `u+` uniform over the item's users and `u-` uniform over the rest.
pub fn sample_bpr_pair(
    item: ItemIdx,
    train: &InteractionDataset,
    rng: &mut Rng,
) -> Result<(UserIdx, UserIdx)> {
    let users = train.users_of_item(item);
    if users.is_empty() {
        return Err(Error::NoNegative(format!(
            "item {item} has no positive user"
        )));
    }
    let pos = users[rng.random_range(0..users.len())];
    let neg = sample_negative_user(item, train, rng)?;
    Ok((pos, neg))
}

/// `n_pos` co-occurrence positives and `n_neg` negatives for `item`.
///
/// Positives are drawn uniformly from the item's co-occurrence set, with
/// replacement when it is smaller than `n_pos`; an item without positives
/// uses itself. Negatives are drawn uniformly from `train_items` outside the
/// positive set and the item itself.
pub fn sample_contrastive_sets(
    item: ItemIdx,
    cooc: &CoocIndex,
    train_items: &[ItemIdx],
    n_pos: usize,
    n_neg: usize,
    rng: &mut Rng,
) -> Result<(Vec<ItemIdx>, Vec<ItemIdx>)> {
    let pool = cooc.positives(item);
    let positives = if pool.is_empty() {
        vec![item; n_pos]
    } else if pool.len() >= n_pos {
        rand::seq::index::sample(rng, pool.len(), n_pos)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    } else {
        (0..n_pos)
            .map(|_| pool[rng.random_range(0..pool.len())])
            .collect()
    };

    let mut negatives = Vec::with_capacity(n_neg);
    if n_neg > 0 {
        let excluded = pool.len() + usize::from(train_items.binary_search(&item).is_ok());
        if train_items.len() <= excluded {
            return Err(Error::NoNegative(format!(
                "item {item} co-occurs with every training item"
            )));
        }
        while negatives.len() < n_neg {
            let w = train_items[rng.random_range(0..train_items.len())];
            if w != item && !cooc.is_positive(item, w) {
                negatives.push(w);
            }
        }
    }
    Ok((positives, negatives))
}

/// Deterministic batch assembly over the training interactions.
///
/// Epoch `e` visits the interactions in an order drawn from
/// `(seed, e)`; batch `b` of that epoch samples from `(seed, e, b)`, so any
/// batch can be rebuilt without replaying the others.
pub struct Sampler<'a> {
    train: &'a InteractionDataset,
    cooc: &'a CoocIndex,
    train_items: Vec<ItemIdx>,
    n_pos: usize,
    n_neg: usize,
    batch_size: usize,
    seed: u64,
}

impl<'a> Sampler<'a> {
    /// With `contrastive == false` the entries carry no contrastive samples.
    pub fn new(
        train: &'a InteractionDataset,
        cooc: &'a CoocIndex,
        hyper: &Hyperparams,
        contrastive: bool,
    ) -> Self {
        let (n_pos, n_neg) = if contrastive {
            (hyper.n_pos, hyper.n_neg)
        } else {
            (0, 0)
        };
        Sampler {
            train,
            cooc,
            train_items: train.active_items(),
            n_pos,
            n_neg,
            batch_size: hyper.batch_size,
            seed: hyper.seed,
        }
    }

    pub fn train_items(&self) -> &[ItemIdx] {
        &self.train_items
    }

    pub fn n_batches(&self) -> usize {
        self.train.len().div_ceil(self.batch_size)
    }

    /// Shuffled `(user, item)` interactions for `epoch`.
    pub fn epoch_order(&self, epoch: usize) -> Vec<(UserIdx, ItemIdx)> {
        let mut order = self.train.interactions().to_vec();
        order.shuffle(&mut rng::stream(
            self.seed,
            Stream::EpochOrder,
            epoch as u64,
            0,
        ));
        order
    }

    /// Entries for batch `index` of `order`.
    pub fn batch(
        &self,
        order: &[(UserIdx, ItemIdx)],
        epoch: usize,
        index: usize,
    ) -> Result<ContrastiveBatch> {
        let start = index * self.batch_size;
        let end = (start + self.batch_size).min(order.len());
        let mut rng = rng::stream(self.seed, Stream::Batch, epoch as u64, index as u64);
        let mut entries = Vec::with_capacity(end.saturating_sub(start));
        for &(u, v) in &order[start.min(end)..end] {
            // an item every user interacted with has no BPR negative; an item
            // co-occurring with every other item has no contrastive negative
            // and keeps only its BPR terms
            let neg_user = match sample_negative_user(v, self.train, &mut rng) {
                Ok(n) => n,
                Err(Error::NoNegative(_)) => {
                    debug!("item {v}: no negative user, entry skipped");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let (positives, negatives) = match sample_contrastive_sets(
                v,
                self.cooc,
                &self.train_items,
                self.n_pos,
                self.n_neg,
                &mut rng,
            ) {
                Ok(sets) => sets,
                Err(Error::NoNegative(_)) => (Vec::new(), Vec::new()),
                Err(e) => return Err(e),
            };
            entries.push(BatchEntry {
                item: v,
                pos_user: u,
                neg_user,
                positives,
                negatives,
            });
        }
        Ok(ContrastiveBatch { entries })
    }
}
