//! Binary checkpoints: magic, JSON metadata, then little-endian `f64` arrays.
//!
//! Layout: `CCFC1`, the metadata length as a little-endian `u64`, the
//! metadata JSON, then every parameter array in store order, followed by the
//! Adam first moments and second moments when optimizer state is present.

use std::fs;
use std::path::{Path, PathBuf};

use ccfc_core::data::AttributeSchema;
use ccfc_core::grad::{ParamKind, ParamStore};
use ccfc_core::model::{Hyperparams, ModelParams};
use ccfc_core::objectives::Variant;
use ccfc_core::train::AdamState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ids::IdMap;

pub const MAGIC: &[u8; 5] = b"CCFC1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayMeta {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub table: bool,
}

/// Item indices of each split.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitItems {
    pub seed: u64,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub schema_hash: String,
    pub schema: AttributeSchema,
    pub hyperparams: Hyperparams,
    pub variant: Variant,
    pub users: IdMap,
    pub items: IdMap,
    pub split: SplitItems,
    pub arrays: Vec<ArrayMeta>,
    /// Adam step count; `None` when no optimizer state is stored.
    pub adam_t: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
    pub adam: Option<AdamState>,
}

/// SHA-256 of the schema's JSON form, hex encoded.
pub fn schema_hash(schema: &AttributeSchema) -> String {
    let json = serde_json::to_vec(schema).expect("schema serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        schema: &AttributeSchema,
        hyperparams: &Hyperparams,
        variant: Variant,
        users: &IdMap,
        items: &IdMap,
        split: SplitItems,
        params: ModelParams,
        adam: Option<AdamState>,
    ) -> Self {
        let arrays = params
            .store
            .iter()
            .map(|(_, p)| ArrayMeta {
                name: p.name.clone(),
                rows: p.rows,
                cols: p.cols,
                table: p.kind == ParamKind::Table,
            })
            .collect();
        Checkpoint {
            meta: CheckpointMeta {
                version: VERSION,
                schema_hash: schema_hash(schema),
                schema: schema.clone(),
                hyperparams: hyperparams.clone(),
                variant,
                users: users.clone(),
                items: items.clone(),
                split,
                arrays,
                adam_t: adam.as_ref().map(|a| a.t),
            },
            params,
            adam,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let json = serde_json::to_vec(&self.meta).expect("metadata serializes");
        let mut out = Vec::with_capacity(13 + json.len() + 8 * self.params.store.n_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |xs: &[f64]| {
            xs.iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes()))
        };
        for (_, p) in self.params.store.iter() {
            put(&p.data);
        }
        if let Some(a) = &self.adam {
            a.m.iter().for_each(|m| put(m));
            a.v.iter().for_each(|v| put(v));
        }
        out
    }

    /// Parses a checkpoint. With `expected` set, a different schema is refused.
    pub fn from_bytes(
        path: &Path,
        bytes: &[u8],
        expected: Option<&AttributeSchema>,
    ) -> Result<Self> {
        let corrupt = |reason: String| Error::Corrupt {
            path: path.to_owned(),
            reason,
        };
        if bytes.len() < 13 || &bytes[..5] != MAGIC {
            return Err(corrupt("missing CCFC1 header".into()));
        }
        let len = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes")) as usize;
        let body = &bytes[13..];
        if len > body.len() {
            return Err(corrupt(format!(
                "metadata of {len} bytes, file has {}",
                body.len()
            )));
        }
        let meta: CheckpointMeta =
            serde_json::from_slice(&body[..len]).map_err(|e| corrupt(format!("metadata: {e}")))?;
        let incompatible = |reason: String| Error::Incompatible {
            path: path.to_owned(),
            reason,
        };
        if meta.version != VERSION {
            return Err(incompatible(format!(
                "version {} (expected {VERSION})",
                meta.version
            )));
        }
        if meta.schema_hash != schema_hash(&meta.schema) {
            return Err(corrupt(
                "schema hash does not match the stored schema".into(),
            ));
        }
        if let Some(s) = expected {
            let h = schema_hash(s);
            if h != meta.schema_hash {
                return Err(incompatible(format!(
                    "schema hash {} != {h}",
                    meta.schema_hash
                )));
            }
        }

        let sizes: Vec<usize> = meta.arrays.iter().map(|a| a.rows * a.cols).collect();
        let n: usize = sizes.iter().sum();
        let copies = if meta.adam_t.is_some() { 3 } else { 1 };
        let data = &body[len..];
        if data.len() != 8 * n * copies {
            return Err(corrupt(format!(
                "expected {} array bytes, found {}",
                8 * n * copies,
                data.len()
            )));
        }
        let mut floats = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |k: usize| -> Vec<f64> { floats.by_ref().take(k).collect() };

        let mut store = ParamStore::new();
        for (a, &k) in meta.arrays.iter().zip(&sizes) {
            let kind = if a.table {
                ParamKind::Table
            } else {
                ParamKind::Dense
            };
            store.push(&a.name, a.rows, a.cols, kind, take(k));
        }
        let adam = meta.adam_t.map(|t| AdamState {
            t,
            m: sizes.iter().map(|&k| take(k)).collect(),
            v: sizes.iter().map(|&k| take(k)).collect(),
        });
        let params =
            ModelParams::from_store(store, &meta.schema, meta.users.len(), meta.items.len())
                .map_err(|e| corrupt(e.to_string()))?;
        Ok(Checkpoint { meta, params, adam })
    }
}

/// Writes to a temporary sibling and renames, so a crash never leaves a
/// half-written checkpoint at `path`.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    tmp.as_mut_os_string().push(".tmp");
    fs::write(&tmp, ck.to_bytes()).map_err(Error::io(&tmp))?;
    fs::rename(&tmp, path).map_err(Error::io(path))
}

pub fn load_checkpoint(path: &Path, expected: Option<&AttributeSchema>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    Checkpoint::from_bytes(path, &bytes, expected)
}
