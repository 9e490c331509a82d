//! Multi-threaded gradient and evaluation paths.
//!
//! A batch is split into contiguous shards. Each shard records its own tape
//! with the contrastive mean taken over the whole batch's pair count, so the
//! shard losses and gradients add up to the batch's. The squared-norm penalty
//! is added once over the union of touched parameters. Shards are merged in
//! index order, so a run with a fixed thread count is reproducible, but
//! floating-point sums differ from the single-threaded path in the last bits.

use ccfc_core::data::InteractionDataset;
use ccfc_core::eval::{self, HitRate, RankingMetrics, UserPool};
use ccfc_core::grad::{GradBag, Touched};
use ccfc_core::model::{Hyperparams, Model};
use ccfc_core::objectives::{l2_penalty, loss_terms, LossReport, TermOptions, Variant};
use ccfc_core::sampling::BatchEntry;
use ccfc_core::train::{BatchGradients, SerialGradients};

#[derive(Debug, Clone, Copy)]
pub struct ShardedGradients {
    pub threads: usize,
}

impl BatchGradients for ShardedGradients {
    fn gradients(
        &self,
        entries: &[BatchEntry],
        model: &Model,
        train: &InteractionDataset,
        hyper: &Hyperparams,
        variant: Variant,
    ) -> ccfc_core::Result<(LossReport, GradBag)> {
        if self.threads <= 1 || entries.len() < 2 {
            return SerialGradients.gradients(entries, model, train, hyper, variant);
        }
        let pair_count = if variant.uses_contrastive() {
            entries.iter().map(|e| e.positives.len()).sum()
        } else {
            0
        };
        let opts = TermOptions {
            pair_count,
            with_penalty: false,
        };
        let chunk = entries.len().div_ceil(self.threads);
        let shards: Vec<ccfc_core::Result<(LossReport, GradBag, Touched)>> =
            std::thread::scope(|s| {
                let handles: Vec<_> = entries
                    .chunks(chunk)
                    .map(|c| {
                        s.spawn(move || {
                            let (report, tape) = loss_terms(c, model, train, hyper, variant, opts)?;
                            let bag = tape.backward(model.params, 1.0)?;
                            Ok((report, bag, tape.touched(model.params)))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("shard thread panicked"))
                    .collect()
            });

        let mut report = LossReport::default();
        let mut bag = GradBag::new();
        let mut touched = Touched::default();
        for shard in shards {
            let (r, b, t) = shard?;
            report.accumulate(&r);
            bag.merge(&b);
            touched.merge(&t);
        }
        let (penalty, grad) = l2_penalty(model.params, &touched, hyper.l2);
        bag.merge(&grad);
        report.penalty = penalty;
        report.total = report.content_bpr
            + report.behaviour_bpr
            + hyper.lambda * report.contrastive
            + hyper.l2 * penalty;
        Ok((report, bag))
    }
}

/// Same result as [`eval::evaluate`], with test items scored across threads.
pub fn evaluate(
    model: &Model,
    train: &InteractionDataset,
    test: &InteractionDataset,
    ks: &[usize],
    mode: HitRate,
    threads: usize,
) -> ccfc_core::Result<RankingMetrics> {
    if threads <= 1 {
        return eval::evaluate(model, train, test, ks, mode);
    }
    eval::validate_ks(ks)?;
    let items = eval::test_items(train, test)?;
    let pool = UserPool::build(model, train)?;
    let chunk = items.len().div_ceil(threads);
    let results: Vec<ccfc_core::Result<Vec<_>>> = std::thread::scope(|s| {
        let pool = &pool;
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                s.spawn(move || {
                    c.iter()
                        .map(|&v| eval::item_metrics(model, pool, test, v, ks, mode))
                        .collect::<ccfc_core::Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect()
    });
    let mut per_item = Vec::new();
    let (mut skipped, mut dropped) = (0, 0);
    for r in results {
        for (m, d) in r? {
            dropped += d;
            match m {
                Some(m) => per_item.push(m),
                None => skipped += 1,
            }
        }
    }
    if per_item.is_empty() {
        return Err(ccfc_core::Error::Evaluation(
            "no test item has a user in the training pool".into(),
        ));
    }
    Ok(eval::aggregate(per_item, ks, skipped, dropped))
}
