//! Model parameters, hyperparameters and the encoders built on the tape.

mod encoders;
mod hyper;
mod params;

pub use encoders::{content_embedding, predict, Model};
pub use hyper::Hyperparams;
pub use params::{FieldParam, Layout, ModelParams};
