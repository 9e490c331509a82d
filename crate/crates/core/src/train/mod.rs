//! Lazy sparse Adam and the training loop.

mod adam;

pub use adam::{adam_step, AdamConfig, AdamState};

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{
    build_cooccurrence_index, AttributeSchema, InteractionDataset, ItemIdx, SplitBundle, UserIdx,
};
use crate::eval::{self, HitRate};
use crate::grad::GradBag;
use crate::model::{Hyperparams, Model, ModelParams};
use crate::objectives::{loss_mf_pretrain, loss_total, LossReport, Variant};
use crate::rng::{self, Stream};
use crate::sampling::{BatchEntry, Sampler};
use crate::{Error, Result};

/// Loss and gradients of one batch.
///
/// The default implementation evaluates the whole batch on one tape; the
/// companion crate provides a sharded, multi-threaded one.
pub trait BatchGradients {
    fn gradients(
        &self,
        entries: &[BatchEntry],
        model: &Model,
        train: &InteractionDataset,
        hyper: &Hyperparams,
        variant: Variant,
    ) -> Result<(LossReport, GradBag)>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SerialGradients;

impl BatchGradients for SerialGradients {
    fn gradients(
        &self,
        entries: &[BatchEntry],
        model: &Model,
        train: &InteractionDataset,
        hyper: &Hyperparams,
        variant: Variant,
    ) -> Result<(LossReport, GradBag)> {
        let (report, tape) = loss_total(entries, model, train, hyper, variant)?;
        Ok((report, tape.backward(model.params, 1.0)?))
    }
}

/// Hooks into the training loop. The core has no clock, so wall time comes
/// from here.
pub trait Observer {
    fn elapsed_secs(&self) -> f64 {
        0.0
    }

    fn pretrain_epoch(&mut self, _epoch: usize, _mean_loss: f64) {}

    fn epoch(&mut self, _record: &EpochRecord) {}
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Silent;

impl Observer for Silent {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean over the epoch's batches.
    pub loss: LossReport,
    pub valid_ndcg10: Option<f64>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunHistory {
    /// Mean per-triple loss of each pretraining epoch.
    pub pretrain: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept, when validation ran.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: ModelParams,
    /// Optimizer state after the last epoch that ran.
    pub adam: AdamState,
    pub history: RunHistory,
}

/// A non-finite loss, gradient or update.
#[derive(Debug, Clone)]
pub struct Diverged {
    pub error: Error,
    /// 1-based epoch in which it happened.
    pub epoch: usize,
    /// Parameters at the end of the last completed epoch.
    pub last_good: ModelParams,
    pub history: RunHistory,
}

#[derive(Debug, Clone)]
pub enum TrainError {
    Invalid(Error),
    Diverged(Box<Diverged>),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Invalid(e) => write!(f, "{e}"),
            TrainError::Diverged(d) => {
                write!(f, "training diverged in epoch {}: {}", d.epoch, d.error)
            }
        }
    }
}

impl core::error::Error for TrainError {}

impl From<Error> for TrainError {
    fn from(e: Error) -> Self {
        TrainError::Invalid(e)
    }
}

/// Negative item for a pretraining triple: uniform over training items the
/// user has not interacted with.
fn sample_negative_item(
    user: UserIdx,
    train: &InteractionDataset,
    items: &[ItemIdx],
    rng: &mut rng::Rng,
) -> Result<ItemIdx> {
    if train.items_of_user(user).len() >= items.len() {
        return Err(Error::NoNegative(format!(
            "user {user} interacted with every item"
        )));
    }
    loop {
        let v = items[rng.random_range(0..items.len())];
        if !train.contains(user, v) {
            return Ok(v);
        }
    }
}

pub struct Trainer<'a> {
    bundle: &'a SplitBundle,
    schema: &'a AttributeSchema,
    hyper: &'a Hyperparams,
    variant: Variant,
    gradients: &'a dyn BatchGradients,
    init: Option<ModelParams>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        bundle: &'a SplitBundle,
        schema: &'a AttributeSchema,
        hyper: &'a Hyperparams,
        variant: Variant,
    ) -> Self {
        Trainer {
            bundle,
            schema,
            hyper,
            variant,
            gradients: &SerialGradients,
            init: None,
        }
    }

    pub fn gradients(mut self, g: &'a dyn BatchGradients) -> Self {
        self.gradients = g;
        self
    }

    /// Start from these parameters instead of a fresh initialization.
    pub fn initial(mut self, params: ModelParams) -> Self {
        self.init = Some(params);
        self
    }

    pub fn run(self, observer: &mut dyn Observer) -> core::result::Result<Trained, TrainError> {
        let hyper = self.hyper;
        hyper.validate()?;
        let train = &self.bundle.train;
        if train.is_empty() {
            return Err(Error::Dataset("empty training split".into()).into());
        }
        let mut params = match self.init {
            Some(p) => p,
            None => ModelParams::init(self.schema, train.n_users(), train.n_items(), hyper)?,
        };
        let mut history = RunHistory::default();

        let diverged =
            |error: Error, epoch: usize, last_good: &ModelParams, history: &RunHistory| {
                if matches!(error, Error::NonFinite(_)) {
                    TrainError::Diverged(Box::new(Diverged {
                        error,
                        epoch,
                        last_good: last_good.clone(),
                        history: history.clone(),
                    }))
                } else {
                    TrainError::Invalid(error)
                }
            };

        if self.variant == Variant::Pretrain {
            let mut state = AdamState::new(&params.store);
            let cfg = AdamConfig::pretrain(hyper);
            let items = train.active_items();
            for epoch in 0..hyper.mf_epochs {
                let last_good = params.clone();
                let mut order = train.interactions().to_vec();
                order.shuffle(&mut rng::stream(
                    hyper.seed,
                    Stream::Pretrain,
                    epoch as u64,
                    u64::MAX,
                ));
                let mut sum = 0.0;
                for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
                    let mut step = || -> Result<f64> {
                        let mut rng =
                            rng::stream(hyper.seed, Stream::Pretrain, epoch as u64, b as u64);
                        let triples = chunk
                            .iter()
                            .map(|&(u, v)| {
                                Ok((u, v, sample_negative_item(u, train, &items, &mut rng)?))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let model = Model::new(&params, hyper);
                        let (loss, tape) = loss_mf_pretrain(&triples, &model, train)?;
                        let bag = tape.backward(&params, 1.0)?;
                        adam_step(&mut params.store, &bag, &mut state, &cfg)?;
                        Ok(loss)
                    };
                    sum += step().map_err(|e| diverged(e, 0, &last_good, &history))?;
                }
                let mean = sum / order.len() as f64;
                info!("pretrain epoch {}: loss {mean:.6}", epoch + 1);
                history.pretrain.push(mean);
                observer.pretrain_epoch(epoch + 1, mean);
            }
        }

        let cooc = build_cooccurrence_index(train);
        let sampler = Sampler::new(train, &cooc, hyper, self.variant.uses_contrastive());
        let n_batches = sampler.n_batches();
        let cfg = AdamConfig::main(hyper);
        let mut adam = AdamState::new(&params.store);
        let validate = !self.bundle.valid.active_items().is_empty();
        let mut best: Option<(f64, usize, ModelParams)> = None;
        let mut stale = 0;

        for epoch in 0..hyper.epochs {
            let last_good = params.clone();
            let order = sampler.epoch_order(epoch);
            let mut sum = LossReport::default();
            for b in 0..n_batches {
                let mut step = || -> Result<LossReport> {
                    let batch = sampler.batch(&order, epoch, b)?;
                    if batch.is_empty() {
                        return Ok(LossReport::default());
                    }
                    let model = Model::new(&params, hyper);
                    let (report, bag) = self.gradients.gradients(
                        &batch.entries,
                        &model,
                        train,
                        hyper,
                        self.variant,
                    )?;
                    if !report.is_finite() {
                        return Err(Error::NonFinite(format!("loss {report:?}")));
                    }
                    adam_step(&mut params.store, &bag, &mut adam, &cfg)?;
                    Ok(report)
                };
                let report = step().map_err(|e| diverged(e, epoch + 1, &last_good, &history))?;
                sum.accumulate(&report);
            }
            let valid_ndcg10 = if validate {
                let model = Model::new(&params, hyper);
                let m = eval::evaluate(&model, train, &self.bundle.valid, &[10], HitRate::PerK)
                    .map_err(|e| diverged(e, epoch + 1, &last_good, &history))?;
                Some(m.per_k[0].ndcg)
            } else {
                None
            };
            let record = EpochRecord {
                epoch: epoch + 1,
                loss: sum.scaled(1.0 / n_batches as f64),
                valid_ndcg10,
                wall_secs: observer.elapsed_secs(),
            };
            info!(
                "epoch {}: loss {:.6} valid ndcg@10 {:?}",
                record.epoch, record.loss.total, record.valid_ndcg10
            );
            observer.epoch(&record);
            history.epochs.push(record);

            if let Some(score) = valid_ndcg10 {
                if best.as_ref().is_none_or(|b| score > b.0) {
                    best = Some((score, epoch + 1, params.clone()));
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= hyper.patience {
                        history.stopped_early = true;
                        break;
                    }
                }
            }
        }

        if let Some((_, epoch, kept)) = best {
            history.best_epoch = Some(epoch);
            params = kept;
        }
        Ok(Trained {
            params,
            adam,
            history,
        })
    }
}

/// Trains single-threaded with no observer.
pub fn train(
    bundle: &SplitBundle,
    schema: &AttributeSchema,
    hyper: &Hyperparams,
    variant: Variant,
) -> core::result::Result<Trained, TrainError> {
    Trainer::new(bundle, schema, hyper, variant).run(&mut Silent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        generate_synthetic, split_by_item, AttributeValue, FieldSpec, SplitRatios, SynthConfig,
    };
    use alloc::vec;

    fn tiny_bundle() -> (SplitBundle, AttributeSchema) {
        let schema = AttributeSchema::new(vec![FieldSpec::one_hot("g", &["a", "b"])]).unwrap();
        let pairs = [(0, 0), (1, 0), (0, 1), (2, 1), (1, 2)];
        let recs = (0..4)
            .map(|v| vec![AttributeValue::OneHot(v % 2)])
            .collect();
        let ds = InteractionDataset::from_pairs(3, 4, pairs)
            .unwrap()
            .with_attributes(&schema, recs)
            .unwrap();
        (
            SplitBundle::from_items(&ds, &[0, 1, 2], &[], &[3], 0),
            schema,
        )
    }

    fn small_hyper() -> Hyperparams {
        Hyperparams {
            d: 4,
            n_pos: 2,
            n_neg: 1,
            batch_size: 2,
            lr: 1e-2,
            epochs: 1,
            mf_epochs: 2,
            ..Default::default()
        }
    }

    #[test]
    fn one_epoch_gives_one_record() {
        let (bundle, schema) = tiny_bundle();
        let out = train(&bundle, &schema, &small_hyper(), Variant::Full).unwrap();
        assert_eq!(out.history.epochs.len(), 1);
        assert_eq!(out.history.epochs[0].epoch, 1);
        assert!(out.history.epochs[0].loss.is_finite());
        assert_eq!(out.adam.t, 3);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let (bundle, schema) = tiny_bundle();
        let h = Hyperparams {
            epochs: 4,
            ..small_hyper()
        };
        for variant in Variant::ALL {
            let a = train(&bundle, &schema, &h, variant).unwrap();
            let b = train(&bundle, &schema, &h, variant).unwrap();
            assert_eq!(a.params.store, b.params.store);
            assert_eq!(a.history, b.history);
        }
    }

    #[test]
    fn pretrain_keeps_item_table_fixed_in_the_main_phase() {
        let (bundle, schema) = tiny_bundle();
        let h = Hyperparams {
            epochs: 3,
            ..small_hyper()
        };
        let pre = Hyperparams {
            epochs: 0,
            ..h.clone()
        };
        let after_mf = train(&bundle, &schema, &pre, Variant::Pretrain).unwrap();
        let fresh = ModelParams::init(&schema, 3, 4, &h).unwrap();
        let t = fresh.layout.item_table;
        assert_ne!(after_mf.params.store.get(t), fresh.store.get(t));
        assert_eq!(after_mf.history.pretrain.len(), 2);
        let full = train(&bundle, &schema, &h, Variant::Pretrain).unwrap();
        assert_eq!(full.params.store.get(t), after_mf.params.store.get(t));
        assert_ne!(
            full.params.store.get(full.params.layout.w1),
            after_mf.params.store.get(after_mf.params.layout.w1)
        );
    }

    #[test]
    fn no_contrastive_leaves_item_table_untouched() {
        let (bundle, schema) = tiny_bundle();
        let h = Hyperparams {
            epochs: 3,
            ..small_hyper()
        };
        let init = ModelParams::init(&schema, 3, 4, &h).unwrap();
        let out = train(&bundle, &schema, &h, Variant::NoContrastive).unwrap();
        let t = init.layout.item_table;
        assert_eq!(out.params.store.get(t), init.store.get(t));
    }

    #[test]
    fn mf_loss_drops_after_one_step() {
        let schema = AttributeSchema::new(vec![FieldSpec::one_hot("g", &["a"])]).unwrap();
        let recs = (0..3).map(|_| vec![AttributeValue::OneHot(0)]).collect();
        let ds = InteractionDataset::from_pairs(2, 3, [(0, 0), (0, 1), (1, 2)])
            .unwrap()
            .with_attributes(&schema, recs)
            .unwrap();
        let h = Hyperparams {
            d: 3,
            mf_lr: 1e-2,
            ..Default::default()
        };
        let mut params = ModelParams::init(&schema, 2, 3, &h).unwrap();
        let triples = [(0, 0, 2), (0, 1, 2), (1, 2, 0)];
        let (before, tape) = loss_mf_pretrain(&triples, &Model::new(&params, &h), &ds).unwrap();
        let bag = tape.backward(&params, 1.0).unwrap();
        let mut st = AdamState::new(&params.store);
        adam_step(&mut params.store, &bag, &mut st, &AdamConfig::pretrain(&h)).unwrap();
        let (after, _) = loss_mf_pretrain(&triples, &Model::new(&params, &h), &ds).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn divergence_keeps_last_good_params() {
        let (bundle, schema) = tiny_bundle();
        let h = Hyperparams {
            epochs: 5,
            lr: 1e300,
            ..small_hyper()
        };
        match train(&bundle, &schema, &h, Variant::Full) {
            Err(TrainError::Diverged(d)) => {
                assert!(d.last_good.store.all_finite());
                assert_eq!(d.history.epochs.len(), d.epoch - 1);
            }
            other => panic!("expected divergence, got {:?}", other.map(|t| t.history)),
        }
    }

    #[test]
    fn invalid_hyperparams_are_rejected() {
        let (bundle, schema) = tiny_bundle();
        let h = Hyperparams {
            tau: 0.0,
            ..small_hyper()
        };
        assert!(matches!(
            train(&bundle, &schema, &h, Variant::Full),
            Err(TrainError::Invalid(_))
        ));
    }

    #[test]
    fn synthetic_loss_descends() {
        let world = generate_synthetic(&SynthConfig::new(200, 300, 0.4, 3)).unwrap();
        let bundle = split_by_item(&world.dataset, SplitRatios::default(), 3).unwrap();
        let h = Hyperparams {
            d: 16,
            n_pos: 5,
            n_neg: 10,
            batch_size: 256,
            lr: 1e-3,
            epochs: 30,
            patience: 1000,
            seed: 3,
            ..Default::default()
        };
        let out = train(&bundle, &world.schema, &h, Variant::Full).unwrap();
        let e = &out.history.epochs;
        assert_eq!(e.len(), 30);
        assert!(
            e[29].loss.total < e[0].loss.total,
            "{} vs {}",
            e[29].loss.total,
            e[0].loss.total
        );
        assert!(e.iter().all(|r| r.valid_ndcg10.is_some()));
    }
}
