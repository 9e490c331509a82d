use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How a single attribute is encoded.
///
/// Categorical fields carry their vocabulary so that external tokens can be
/// mapped to column indices; the vocabulary size is the column count of the
/// field's embedding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    OneHot { vocab: Vec<String> },
    MultiHot { vocab: Vec<String> },
    Dense { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
}

impl FieldSpec {
    pub fn one_hot(name: &str, vocab: &[&str]) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind: FieldKind::OneHot {
                vocab: vocab.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn multi_hot(name: &str, vocab: &[&str]) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind: FieldKind::MultiHot {
                vocab: vocab.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn dense(name: &str, dim: usize) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind: FieldKind::Dense { dim },
        }
    }

    /// Width of the raw attribute vector: vocabulary size or dense dimension.
    pub fn width(&self) -> usize {
        match &self.kind {
            FieldKind::OneHot { vocab } | FieldKind::MultiHot { vocab } => vocab.len(),
            FieldKind::Dense { dim } => *dim,
        }
    }

    pub fn is_categorical(&self) -> bool {
        !matches!(self.kind, FieldKind::Dense { .. })
    }

    /// Column index of `token`, if the field is categorical and knows it.
    pub fn token_index(&self, token: &str) -> Option<usize> {
        match &self.kind {
            FieldKind::OneHot { vocab } | FieldKind::MultiHot { vocab } => {
                vocab.iter().position(|t| t == token)
            }
            FieldKind::Dense { .. } => None,
        }
    }
}

/// Ordered attribute declarations. Field order fixes the block order of the
/// content embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub fields: Vec<FieldSpec>,
}

impl AttributeSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self> {
        let schema = AttributeSchema { fields };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fields.is_empty() {
            return Err(Error::Schema("at least one field is required".into()));
        }
        let mut names = BTreeSet::new();
        for f in &self.fields {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate field `{}`", f.name)));
            }
            if f.width() == 0 {
                return Err(Error::Schema(format!(
                    "field `{}` must have a vocabulary or dimension of at least 1",
                    f.name
                )));
            }
            if let FieldKind::OneHot { vocab } | FieldKind::MultiHot { vocab } = &f.kind {
                let distinct: BTreeSet<&str> = vocab.iter().map(String::as_str).collect();
                if distinct.len() != vocab.len() {
                    return Err(Error::Schema(format!(
                        "field `{}` has duplicate vocabulary tokens",
                        f.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of fields, `m`.
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, name: &str) -> Option<(usize, &FieldSpec)> {
        self.fields.iter().enumerate().find(|(_, f)| f.name == name)
    }

    /// Checks that `values` is a complete record for this schema.
    pub fn check_record(&self, item: usize, values: &[AttributeValue]) -> Result<()> {
        if values.len() != self.fields.len() {
            return Err(Error::Attribute {
                item,
                field: String::from("*"),
                reason: format!(
                    "expected {} fields, got {}",
                    self.fields.len(),
                    values.len()
                ),
            });
        }
        for (spec, value) in self.fields.iter().zip(values) {
            let err = |reason: String| Error::Attribute {
                item,
                field: spec.name.clone(),
                reason,
            };
            match (&spec.kind, value) {
                (FieldKind::OneHot { vocab }, AttributeValue::OneHot(j)) => {
                    if *j >= vocab.len() {
                        return Err(err(format!(
                            "index {j} outside vocabulary of {}",
                            vocab.len()
                        )));
                    }
                }
                (FieldKind::MultiHot { vocab }, AttributeValue::MultiHot(js)) => {
                    if let Some(j) = js.iter().find(|&&j| j >= vocab.len()) {
                        return Err(err(format!(
                            "index {j} outside vocabulary of {}",
                            vocab.len()
                        )));
                    }
                    if js.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(err("multi-hot indices must be strictly increasing".into()));
                    }
                }
                (FieldKind::Dense { dim }, AttributeValue::Dense(x)) => {
                    if x.len() != *dim {
                        return Err(err(format!("dense dimension {} != {dim}", x.len())));
                    }
                    if x.iter().any(|v| !v.is_finite()) {
                        return Err(err("dense vector contains non-finite values".into()));
                    }
                }
                _ => return Err(err("value kind does not match the schema".into())),
            }
        }
        Ok(())
    }
}

/// One attribute value of one item.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    OneHot(usize),
    /// Sorted, distinct hot indices.
    MultiHot(Vec<usize>),
    Dense(Vec<f64>),
}

impl AttributeValue {
    /// Builds a multi-hot value from arbitrary indices (sorted and deduplicated).
    pub fn multi_hot(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        AttributeValue::MultiHot(indices)
    }

    /// The raw attribute vector of width `width`.
    pub fn to_raw(&self, width: usize) -> Vec<f64> {
        match self {
            AttributeValue::OneHot(j) => {
                let mut x = vec![0.0; width];
                x[*j] = 1.0;
                x
            }
            AttributeValue::MultiHot(js) => {
                let mut x = vec![0.0; width];
                for &j in js {
                    x[j] = 1.0;
                }
                x
            }
            AttributeValue::Dense(v) => v.clone(),
        }
    }
}
