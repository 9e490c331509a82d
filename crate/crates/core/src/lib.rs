//! Contrastive collaborative filtering for cold-start item recommendation.
//!
//! Items are described by attributes. At training time each item also has a
//! behaviour view built from the users who interacted with it. The content
//! encoder is trained jointly with the behaviour encoder through two BPR
//! objectives and an InfoNCE term that pulls the content embedding of an item
//! towards the behaviour embeddings of items that share users with it. At
//! inference time a cold item is scored from its attributes alone.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, checkpoints and
//! the command-line interface live in the companion `ccfc` crate.
//!
//! Module map:
//!
//! - [`data`]: datasets, attribute schemas, cold-item splits, co-occurrence
//!   index and the synthetic genre/star benchmark.
//! - [`grad`]: a small reverse-mode tape over the primitives the model needs.
//! - [`model`]: parameters, hyperparameters and the encoders.
//! - [`sampling`]: BPR user pairs and contrastive item sets.
//! - [`objectives`]: BPR, InfoNCE, the joint loss and the MF pretraining loss.
//! - [`train`]: lazy sparse Adam and the training loop.
//! - [`eval`]: cold-item ranking, HR@k / NDCG@k, distance reports.

#![no_std]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod grad;
pub mod model;
pub mod objectives;
pub mod rng;
pub mod sampling;
pub mod train;

pub use error::{Error, Result};
