use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{InteractionDataset, ItemIdx};
use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Whole items are assigned to a split, so valid/test items are cold.
    #[default]
    ByItem,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            valid: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Self {
        SplitRatios { train, valid, test }
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Split(format!(
                "ratios must be non-negative: {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Item counts: valid and test get `floor(n * ratio)`, train the rest.
    pub fn counts(&self, n_items: usize) -> (usize, usize, usize) {
        let n = n_items as f64;
        let valid = libm::floor(n * self.valid) as usize;
        let test = libm::floor(n * self.test) as usize;
        let train = n_items.saturating_sub(valid + test);
        (train, valid, test)
    }
}

/// Train/valid/test datasets over one index space.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub train: InteractionDataset,
    pub valid: InteractionDataset,
    pub test: InteractionDataset,
    pub split_mode: SplitMode,
    pub seed: u64,
}

impl SplitBundle {
    /// Assembles a bundle from explicit item lists.
    pub fn from_items(
        ds: &InteractionDataset,
        train: &[ItemIdx],
        valid: &[ItemIdx],
        test: &[ItemIdx],
        seed: u64,
    ) -> Self {
        SplitBundle {
            train: ds.restrict_to_items(train),
            valid: ds.restrict_to_items(valid),
            test: ds.restrict_to_items(test),
            split_mode: SplitMode::ByItem,
            seed,
        }
    }
}

/// Partitions items by a seeded shuffle and keeps each item's interactions
/// with its split.
pub fn split_by_item(
    ds: &InteractionDataset,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitBundle> {
    ratios.validate()?;
    if ds.n_items() == 0 || ds.is_empty() {
        return Err(Error::Split("dataset is empty".into()));
    }
    let (n_train, n_valid, n_test) = ratios.counts(ds.n_items());
    for (name, n) in [("train", n_train), ("valid", n_valid), ("test", n_test)] {
        if n == 0 {
            return Err(Error::Split(format!(
                "{name} split receives no items out of {}",
                ds.n_items()
            )));
        }
    }
    let mut items: Vec<ItemIdx> = (0..ds.n_items()).collect();
    items.shuffle(&mut rng::stream(seed, Stream::Split, 0, 0));
    let (train, rest) = items.split_at(n_train);
    let (valid, test) = rest.split_at(n_valid);
    Ok(SplitBundle::from_items(ds, train, valid, test, seed))
}
