use alloc::format;
use alloc::vec::Vec;

use super::hyper::Hyperparams;
use super::params::{FieldParam, Layout, ModelParams};
use crate::data::{AttributeValue, InteractionDataset, ItemIdx, UserIdx};
use crate::grad::{NodeId, ParamRead, Tape};
use crate::{Error, Result};

/// Parameters plus the settings the encoders need.
///
/// Reads go through [`ParamRead`], so any wrapper over [`ModelParams`] can be
/// used to observe which parameters a forward pass touches.
#[derive(Clone, Copy)]
pub struct Model<'a> {
    pub params: &'a dyn ParamRead,
    pub layout: &'a Layout,
    pub leaky_slope: f64,
    pub mean_normalize: bool,
}

impl<'a> Model<'a> {
    pub fn new(params: &'a ModelParams, hyper: &Hyperparams) -> Self {
        Model {
            params,
            layout: &params.layout,
            leaky_slope: hyper.leaky_slope,
            mean_normalize: hyper.mean_normalize,
        }
    }

    pub fn with_reader(params: &'a dyn ParamRead, layout: &'a Layout, hyper: &Hyperparams) -> Self {
        Model {
            params,
            layout,
            leaky_slope: hyper.leaky_slope,
            mean_normalize: hyper.mean_normalize,
        }
    }

    /// One `d`-vector per schema field: the selected row for one-hot, the sum
    /// of selected rows for multi-hot, the projection of the raw vector for
    /// dense fields.
    pub fn embed_attributes(
        &self,
        tape: &mut Tape,
        attrs: &[AttributeValue],
    ) -> Result<Vec<NodeId>> {
        if attrs.len() != self.layout.fields.len() {
            return Err(Error::Shape {
                primitive: "embed-attributes",
                detail: format!(
                    "{} values for {} fields",
                    attrs.len(),
                    self.layout.fields.len()
                ),
            });
        }
        attrs
            .iter()
            .zip(&self.layout.fields)
            .map(|(value, field)| match (field, value) {
                (FieldParam::Table(t), AttributeValue::OneHot(j)) => {
                    tape.lookup(self.params, *t, alloc::vec![(*j, 1.0)])
                }
                (FieldParam::Table(t), AttributeValue::MultiHot(js)) => {
                    tape.lookup(self.params, *t, js.iter().map(|&j| (j, 1.0)).collect())
                }
                (FieldParam::Projection(w), AttributeValue::Dense(x)) => {
                    let x = tape.constant(x.clone());
                    tape.affine(self.params, *w, None, x)
                }
                _ => Err(Error::Shape {
                    primitive: "embed-attributes",
                    detail: "attribute kind does not match its parameter".into(),
                }),
            })
            .collect()
    }

    /// `W2 leaky(W1 c + b1) + b2`.
    pub fn cbce(&self, tape: &mut Tape, content: NodeId) -> Result<NodeId> {
        let l = self.layout;
        let h = tape.affine(self.params, l.w1, Some(l.b1), content)?;
        let a = tape.leaky_relu(h, self.leaky_slope);
        let q = tape.affine(self.params, l.w2, Some(l.b2), a)?;
        if tape.value(q).iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("content-based embedding".into()));
        }
        Ok(q)
    }

    /// Content-based embedding of an item straight from its attributes.
    pub fn item_cbce(&self, tape: &mut Tape, attrs: &[AttributeValue]) -> Result<NodeId> {
        let embs = self.embed_attributes(tape, attrs)?;
        let c = content_embedding(tape, &embs, self.layout.d)?;
        self.cbce(tape, c)
    }

    fn column_sum(&self, ids: &[usize]) -> Vec<(usize, f64)> {
        let w = if self.mean_normalize && !ids.is_empty() {
            1.0 / ids.len() as f64
        } else {
            1.0
        };
        ids.iter().map(|&i| (i, w)).collect()
    }

    /// Co-occurrence embedding: sum of the `item_table` rows of the item's
    /// training users. Only defined for items of the training split.
    pub fn coce(
        &self,
        tape: &mut Tape,
        item: ItemIdx,
        train: &InteractionDataset,
    ) -> Result<NodeId> {
        if item >= train.n_items() || !train.is_member(item) {
            return Err(Error::ColdItem(item));
        }
        let rows = self.column_sum(train.users_of_item(item));
        tape.lookup(self.params, self.layout.item_table, rows)
    }

    /// User embedding: sum of the `user_table` rows of the user's training items.
    pub fn uce(
        &self,
        tape: &mut Tape,
        user: UserIdx,
        train: &InteractionDataset,
    ) -> Result<NodeId> {
        if user >= train.n_users() {
            return Err(Error::ColdUser(user));
        }
        let rows = self.column_sum(train.items_of_user(user));
        tape.lookup(self.params, self.layout.user_table, rows)
    }
}

/// Concatenates `m` attribute embeddings of dimension `d` in field order.
pub fn content_embedding(tape: &mut Tape, embs: &[NodeId], d: usize) -> Result<NodeId> {
    if embs.is_empty() {
        return Err(Error::Shape {
            primitive: "concat",
            detail: "no attribute embeddings".into(),
        });
    }
    if let Some(bad) = embs.iter().find(|n| tape.value(**n).len() != d) {
        return Err(Error::Shape {
            primitive: "concat",
            detail: format!(
                "attribute embedding of length {} != {d}",
                tape.value(*bad).len()
            ),
        });
    }
    Ok(tape.concat(embs))
}

/// Inner-product predictor.
pub fn predict(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            primitive: "inner-product",
            detail: format!("{} vs {}", a.len(), b.len()),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}
