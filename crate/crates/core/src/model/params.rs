use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::hyper::Hyperparams;
use crate::data::{AttributeSchema, FieldKind};
use crate::grad::{Param, ParamId, ParamKind, ParamRead, ParamStore};
use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldParam {
    /// Categorical field: embedding table with one row per vocabulary entry.
    Table(ParamId),
    /// Dense field: `d x dim` projection matrix.
    Projection(ParamId),
}

/// Where each learnable matrix lives in the store.
///
/// Tables are stored entry-major: row `j` of an attribute table is the
/// embedding of token `j`; row `u` of `item_table` is the column that user `u`
/// contributes to co-occurrence embeddings; row `v` of `user_table` is the
/// column item `v` contributes to user embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub fields: Vec<FieldParam>,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub item_table: ParamId,
    pub user_table: ParamId,
    pub d: usize,
    pub hidden: usize,
}

impl Layout {
    /// Parameters of the content encoder, the only ones a cold item needs.
    pub fn content_params(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self
            .fields
            .iter()
            .map(|f| match f {
                FieldParam::Table(id) | FieldParam::Projection(id) => *id,
            })
            .collect();
        ids.extend([self.w1, self.b1, self.w2, self.b2]);
        ids
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub store: ParamStore,
    pub layout: Layout,
}

impl ParamRead for ModelParams {
    fn param(&self, id: ParamId) -> &Param {
        self.store.get(id)
    }
}

fn field_param_name(name: &str, kind: &FieldKind) -> String {
    match kind {
        FieldKind::Dense { .. } => format!("proj.{name}"),
        _ => format!("attr.{name}"),
    }
}

impl ModelParams {
    /// Fresh parameters: Glorot-uniform matrices, zero biases, N(0, 0.01)
    /// embedding tables, all drawn from `hyper.seed`.
    pub fn init(
        schema: &AttributeSchema,
        n_users: usize,
        n_items: usize,
        hyper: &Hyperparams,
    ) -> Result<Self> {
        schema.validate()?;
        hyper.validate()?;
        let (d, h, m) = (hyper.d, hyper.hidden_width(), schema.len());
        let mut rng = rng::stream(hyper.seed, Stream::Init, 0, 0);
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        let table = |rows: usize, rng: &mut rng::Rng| -> Vec<f64> {
            (0..rows * d).map(|_| normal.sample(rng)).collect()
        };
        let glorot = |rows: usize, cols: usize, rng: &mut rng::Rng| -> Vec<f64> {
            let a = libm::sqrt(6.0 / (rows + cols) as f64);
            (0..rows * cols).map(|_| rng.random_range(-a..a)).collect()
        };

        let mut store = ParamStore::new();
        let mut fields = Vec::with_capacity(m);
        for f in &schema.fields {
            let name = field_param_name(&f.name, &f.kind);
            fields.push(match f.kind {
                FieldKind::Dense { dim } => {
                    let data = glorot(d, dim, &mut rng);
                    FieldParam::Projection(store.push(&name, d, dim, ParamKind::Dense, data))
                }
                _ => {
                    let data = table(f.width(), &mut rng);
                    FieldParam::Table(store.push(&name, f.width(), d, ParamKind::Table, data))
                }
            });
        }
        let w1 = store.push(
            "mlp.w1",
            h,
            m * d,
            ParamKind::Dense,
            glorot(h, m * d, &mut rng),
        );
        let b1 = store.push("mlp.b1", 1, h, ParamKind::Dense, alloc::vec![0.0; h]);
        let w2 = store.push("mlp.w2", d, h, ParamKind::Dense, glorot(d, h, &mut rng));
        let b2 = store.push("mlp.b2", 1, d, ParamKind::Dense, alloc::vec![0.0; d]);
        let item_data = table(n_users, &mut rng);
        let item_table = store.push("item_table", n_users, d, ParamKind::Table, item_data);
        let user_data = table(n_items, &mut rng);
        let user_table = store.push("user_table", n_items, d, ParamKind::Table, user_data);
        Ok(ModelParams {
            store,
            layout: Layout {
                fields,
                w1,
                b1,
                w2,
                b2,
                item_table,
                user_table,
                d,
                hidden: h,
            },
        })
    }

    /// Rebuilds the layout of a store read back from disk, checking names and shapes.
    pub fn from_store(
        store: ParamStore,
        schema: &AttributeSchema,
        n_users: usize,
        n_items: usize,
    ) -> Result<Self> {
        let find = |name: &str| -> Result<ParamId> {
            store
                .iter()
                .find(|(_, p)| p.name == name)
                .map(|(id, _)| id)
                .ok_or_else(|| Error::Shape {
                    primitive: "layout",
                    detail: format!("parameter `{name}` missing"),
                })
        };
        let w2 = find("mlp.w2")?;
        let (d, h) = (store.get(w2).rows, store.get(w2).cols);
        let m = schema.len();
        let mut fields = Vec::with_capacity(m);
        let mut expect: Vec<(ParamId, usize, usize, ParamKind)> = Vec::new();
        for f in &schema.fields {
            let id = find(&field_param_name(&f.name, &f.kind))?;
            match f.kind {
                FieldKind::Dense { dim } => {
                    fields.push(FieldParam::Projection(id));
                    expect.push((id, d, dim, ParamKind::Dense));
                }
                _ => {
                    fields.push(FieldParam::Table(id));
                    expect.push((id, f.width(), d, ParamKind::Table));
                }
            }
        }
        let layout = Layout {
            fields,
            w1: find("mlp.w1")?,
            b1: find("mlp.b1")?,
            w2,
            b2: find("mlp.b2")?,
            item_table: find("item_table")?,
            user_table: find("user_table")?,
            d,
            hidden: h,
        };
        expect.extend([
            (layout.w1, h, m * d, ParamKind::Dense),
            (layout.b1, 1, h, ParamKind::Dense),
            (layout.b2, 1, d, ParamKind::Dense),
            (layout.item_table, n_users, d, ParamKind::Table),
            (layout.user_table, n_items, d, ParamKind::Table),
        ]);
        for (id, rows, cols, kind) in expect {
            let p = store.get(id);
            if (p.rows, p.cols, p.kind) != (rows, cols, kind) {
                return Err(Error::Shape {
                    primitive: "layout",
                    detail: format!(
                        "`{}` is {}x{} {:?}, expected {rows}x{cols} {kind:?}",
                        p.name, p.rows, p.cols, p.kind
                    ),
                });
            }
        }
        Ok(ModelParams { store, layout })
    }

    pub fn d(&self) -> usize {
        self.layout.d
    }
}
