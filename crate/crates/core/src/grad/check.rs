use alloc::format;
use alloc::vec::Vec;

use super::params::{ParamId, ParamRead, ParamStore};
use super::tape::Tape;
use super::GradBag;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    /// Max of `|analytic - central| / max(|analytic|, |central|, 1e-12)`.
    pub max_rel_err: f64,
    /// Coordinate with the largest error.
    pub worst: Option<(ParamId, usize)>,
    pub checked: usize,
    /// Coordinates skipped because a perturbation moved a leaky-relu input
    /// that sits within `10 h` of the kink.
    pub skipped: usize,
}

fn loss_of(tape: &Tape) -> Result<f64> {
    let root = tape.root().ok_or(Error::NonScalarRoot(0))?;
    let value = tape.value(root);
    if value.len() != 1 {
        return Err(Error::NonScalarRoot(value.len()));
    }
    if !value[0].is_finite() {
        return Err(Error::NonFinite(format!("loss = {}", value[0])));
    }
    Ok(value[0])
}

/// Compares tape gradients with central differences of step `h` at `coords`.
///
/// `build` must be deterministic: it is rebuilt at every perturbed point.
pub fn gradient_check<F>(
    build: F,
    params: &ParamStore,
    coords: &[(ParamId, usize)],
    h: f64,
) -> Result<CheckReport>
where
    F: Fn(&dyn ParamRead) -> Result<Tape>,
{
    let base = build(params)?;
    loss_of(&base)?;
    let analytic = base.backward(params, 1.0)?;
    let kinks = base.leaky_inputs();
    let guard = 10.0 * h;

    let mut work = params.clone();
    let mut report = CheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    for &(id, index) in coords {
        let original = work.get(id).data[index];
        work.get_mut(id).data[index] = original + h;
        let plus = build(&work)?;
        work.get_mut(id).data[index] = original - h;
        let minus = build(&work)?;
        work.get_mut(id).data[index] = original;

        let (kp, km) = (plus.leaky_inputs(), minus.leaky_inputs());
        if kp.len() != kinks.len() || km.len() != kinks.len() {
            return Err(Error::Shape {
                primitive: "gradient-check",
                detail: format!("tape structure changed under perturbation of {id:?}[{index}]"),
            });
        }
        let near_kink = (0..kinks.len()).any(|k| {
            let moved = kp[k] != kinks[k] || km[k] != kinks[k];
            moved
                && (libm::fabs(kinks[k]) < guard
                    || libm::fabs(kp[k]) < guard
                    || libm::fabs(km[k]) < guard)
        });
        if near_kink {
            report.skipped += 1;
            continue;
        }

        let central = (loss_of(&plus)? - loss_of(&minus)?) / (2.0 * h);
        let a = analytic.coordinate(id, index, params);
        let denom = libm::fabs(a).max(libm::fabs(central)).max(1e-12);
        let rel = libm::fabs(a - central) / denom;
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some((id, index));
        }
    }
    Ok(report)
}

/// Up to `n` distinct coordinates drawn uniformly from those `bag` touches.
pub fn sample_coordinates(
    bag: &GradBag,
    params: &ParamStore,
    n: usize,
    rng: &mut Rng,
) -> Vec<(ParamId, usize)> {
    let all = bag.touched_coordinates(params);
    if all.len() <= n {
        return all;
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, all.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i]).collect()
}
