use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grad::{GradBag, ParamId, ParamStore};
use crate::model::Hyperparams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn main(h: &Hyperparams) -> Self {
        AdamConfig {
            lr: h.lr,
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.eps,
        }
    }

    /// Settings of the matrix-factorization pretraining phase.
    pub fn pretrain(h: &Hyperparams) -> Self {
        AdamConfig {
            lr: h.mf_lr,
            ..Self::main(h)
        }
    }
}

/// First and second moments shaped like the parameters, plus the step count.
///
/// Table rows that never receive a gradient keep zero moments and are never
/// written, so a step costs time proportional to the touched rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, p)| alloc::vec![0.0; p.len()])
                .collect()
        };
        AdamState {
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn matches(&self, params: &ParamStore) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .all(|(id, p)| self.m[id.0].len() == p.len() && self.v[id.0].len() == p.len())
    }

    pub fn is_finite(&self) -> bool {
        self.m
            .iter()
            .chain(&self.v)
            .flatten()
            .all(|x| x.is_finite())
    }
}

struct Pending {
    id: ParamId,
    offset: usize,
    theta: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// One bias-corrected Adam step over the coordinates present in `grads`.
///
/// Nothing is written unless every updated value is finite.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &GradBag,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    if !state.matches(params) {
        return Err(Error::Shape {
            primitive: "adam",
            detail: "optimizer state does not match the parameters".into(),
        });
    }
    let t = state.t + 1;
    let c1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, t as f64);

    let update = |id: ParamId, offset: usize, g: &[f64]| -> Result<Pending> {
        let theta = &params.get(id).data[offset..offset + g.len()];
        let m0 = &state.m[id.0][offset..offset + g.len()];
        let v0 = &state.v[id.0][offset..offset + g.len()];
        let mut p = Pending {
            id,
            offset,
            theta: Vec::with_capacity(g.len()),
            m: Vec::with_capacity(g.len()),
            v: Vec::with_capacity(g.len()),
        };
        for i in 0..g.len() {
            let m = cfg.beta1 * m0[i] + (1.0 - cfg.beta1) * g[i];
            let v = cfg.beta2 * v0[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let x = theta[i] - cfg.lr * (m / c1) / (libm::sqrt(v / c2) + cfg.eps);
            if !x.is_finite() || !m.is_finite() || !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "update of {} at {}",
                    params.get(id).name,
                    offset + i
                )));
            }
            p.theta.push(x);
            p.m.push(m);
            p.v.push(v);
        }
        Ok(p)
    };

    let mut pending = Vec::new();
    for (id, g) in grads.dense_iter() {
        if id.0 >= params.len() || g.len() != params.get(id).len() {
            return Err(Error::Shape {
                primitive: "adam",
                detail: format!(
                    "dense gradient of length {} for parameter {}",
                    g.len(),
                    id.0
                ),
            });
        }
        pending.push(update(id, 0, g)?);
    }
    for (id, rows) in grads.sparse_iter() {
        let p = params.get(id);
        for (r, g) in rows {
            if *r >= p.rows || g.len() != p.cols {
                return Err(Error::Shape {
                    primitive: "adam",
                    detail: format!("row {r} of {} with {} columns", p.name, g.len()),
                });
            }
            pending.push(update(id, r * p.cols, g)?);
        }
    }

    for p in pending {
        let n = p.theta.len();
        params.get_mut(p.id).data[p.offset..p.offset + n].copy_from_slice(&p.theta);
        state.m[p.id.0][p.offset..p.offset + n].copy_from_slice(&p.m);
        state.v[p.id.0][p.offset..p.offset + n].copy_from_slice(&p.v);
    }
    state.t = t;
    Ok(())
}
