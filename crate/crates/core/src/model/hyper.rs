use alloc::format;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Training and architecture settings.
///
/// `Default` is the ML-20M profile (d = 128, lambda = 0.5, 10 positives and
/// 40 negatives per item, lr = 5e-6); [`Hyperparams::amazon_vg`] is the sparse
/// profile. Both use tau = 0.1 and batch size 1024.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Embedding dimensionality.
    pub d: usize,
    /// Hidden width of the content MLP; `None` means `2 * d`.
    pub hidden: Option<usize>,
    /// InfoNCE temperature.
    pub tau: f64,
    /// Weight of the contrastive loss.
    pub lambda: f64,
    /// Coefficient of the squared L2 penalty on touched parameters.
    pub l2: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Maximum number of epochs.
    pub epochs: usize,
    /// Early-stopping patience on validation NDCG@10, in epochs.
    pub patience: usize,
    pub leaky_slope: f64,
    pub seed: u64,
    /// Divide co-occurrence and user embeddings by the number of summed columns.
    pub mean_normalize: bool,
    pub mf_epochs: usize,
    pub mf_lr: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            d: 128,
            hidden: None,
            tau: 0.1,
            lambda: 0.5,
            l2: 1e-4,
            n_pos: 10,
            n_neg: 40,
            batch_size: 1024,
            lr: 5e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 100,
            patience: 5,
            leaky_slope: 0.01,
            seed: 0,
            mean_normalize: false,
            mf_epochs: 20,
            mf_lr: 1e-3,
        }
    }
}

impl Hyperparams {
    pub fn ml20m() -> Self {
        Self::default()
    }

    pub fn amazon_vg() -> Self {
        Hyperparams {
            d: 256,
            lambda: 0.6,
            n_pos: 5,
            n_neg: 40,
            lr: 1e-4,
            ..Self::default()
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.unwrap_or(2 * self.d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Hyperparams(format!("{msg}: {self:?}")));
        if self.d == 0 || self.hidden_width() == 0 || self.batch_size == 0 {
            return bad("d, hidden width and batch_size must be at least 1");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.lambda >= 0.0 && self.l2 >= 0.0) {
            return bad("lambda and l2 must be non-negative");
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad("leaky_slope must lie in (0, 1)");
        }
        if !(self.lr > 0.0 && self.mf_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0)
        {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }
}
