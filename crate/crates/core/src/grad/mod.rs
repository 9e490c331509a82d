//! Reverse-mode differentiation over a fixed set of vector primitives.
//!
//! A [`Tape`] records primitive applications in evaluation order. Values are
//! computed eagerly in `f64`; [`Tape::backward`] walks the tape in reverse and
//! returns a [`GradBag`] holding dense gradients for matrices and per-row
//! gradients for embedding tables.

mod bag;
mod check;
mod params;
mod tape;

pub use bag::GradBag;
pub use check::{gradient_check, sample_coordinates, CheckReport};
pub use params::{Param, ParamId, ParamKind, ParamRead, ParamStore};
pub(crate) use tape::{log_sum_exp, softplus};
pub use tape::{NodeId, Tape, Touched};
