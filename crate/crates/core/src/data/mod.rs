//! Datasets and everything derived from interactions alone.

mod cooc;
mod dataset;
mod schema;
mod split;
pub mod synth;

pub use cooc::{build_cooccurrence_index, CoocIndex};
pub use dataset::{Attributes, InteractionDataset, ItemIdx, UserIdx};
pub use schema::{AttributeSchema, AttributeValue, FieldKind, FieldSpec};
pub use split::{split_by_item, SplitBundle, SplitMode, SplitRatios};
pub use synth::{generate_synthetic, SynthConfig, SyntheticWorld};
