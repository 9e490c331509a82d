//! Interaction TSV, attribute JSON-lines, dense sidecars and schema files.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ccfc_core::data::{AttributeSchema, AttributeValue, FieldKind, InteractionDataset};
use log::debug;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ids::IdMap;

/// A loaded interaction file with its id maps.
#[derive(Debug, Clone)]
pub struct Interactions {
    pub dataset: InteractionDataset,
    pub users: IdMap,
    pub items: IdMap,
    /// Timestamp of the first occurrence of each deduplicated interaction.
    pub timestamps: Vec<i64>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(Error::io(path))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(Error::io(path))?))
}

/// Lines with their 1-based numbers, blank lines skipped.
fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(Error::io(path))?;
        let t = line.trim_end_matches('\r');
        if !t.trim().is_empty() {
            out.push((i + 1, t.to_owned()));
        }
    }
    Ok(out)
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        reason: reason.into(),
    }
}

/// Reads `user<TAB>item<TAB>timestamp` lines.
pub fn load_interactions(path: &Path) -> Result<Interactions> {
    load_interactions_with(path, IdMap::new(), IdMap::new())
}

/// Like [`load_interactions`], extending existing id maps so known ids keep
/// their indices.
pub fn load_interactions_with(
    path: &Path,
    mut users: IdMap,
    mut items: IdMap,
) -> Result<Interactions> {
    let mut pairs = Vec::new();
    let mut stamps = Vec::new();
    let lines = lines(path)?;
    if lines.is_empty() {
        return Err(Error::format(path, "no interactions"));
    }
    for (n, line) in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err(
                path,
                n,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(parse_err(path, n, "empty user or item id"));
        }
        let ts: i64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, n, format!("bad timestamp {:?}", cols[2])))?;
        pairs.push((users.intern(cols[0]), items.intern(cols[1])));
        stamps.push(ts);
    }
    let dataset = InteractionDataset::from_pairs(users.len(), items.len(), pairs.iter().copied())?;
    let mut seen = std::collections::HashSet::new();
    let timestamps = pairs
        .iter()
        .zip(stamps)
        .filter(|(p, _)| seen.insert(**p))
        .map(|(_, t)| t)
        .collect();
    Ok(Interactions {
        dataset,
        users,
        items,
        timestamps,
    })
}

/// Writes interactions in the order stored, with the given timestamps or 0.
pub fn write_interactions(path: &Path, data: &Interactions) -> Result<()> {
    let mut w = create(path)?;
    for (i, &(u, v)) in data.dataset.interactions().iter().enumerate() {
        let ts = data.timestamps.get(i).copied().unwrap_or(0);
        writeln!(
            w,
            "{}\t{}\t{ts}",
            data.users.name(u).unwrap_or_default(),
            data.items.name(v).unwrap_or_default()
        )
        .map_err(Error::io(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn load_schema(path: &Path) -> Result<AttributeSchema> {
    let schema: AttributeSchema =
        serde_json::from_reader(open(path)?).map_err(|e| Error::format(path, e.to_string()))?;
    schema.validate()?;
    Ok(schema)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::format(path, e.to_string()))?;
    writeln!(w).map_err(Error::io(path))?;
    w.flush().map_err(Error::io(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a dense sidecar: `item<TAB>f1,f2,...` with exactly `dim` values.
pub fn load_dense(path: &Path, dim: usize) -> Result<HashMap<String, Vec<f64>>> {
    let mut out = HashMap::new();
    for (n, line) in lines(path)? {
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, n, "expected item<TAB>values"))?;
        let x = values
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, n, format!("item {id}: {e}")))?;
        if x.len() != dim {
            return Err(parse_err(
                path,
                n,
                format!("item {id}: dimension {} != {dim}", x.len()),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, n, format!("item {id}: non-finite value")));
        }
        out.insert(id.to_owned(), x);
    }
    Ok(out)
}

fn tokens(v: &Value) -> Option<Vec<&str>> {
    match v {
        Value::String(s) => Some(vec![s.as_str()]),
        Value::Array(xs) => xs.iter().map(Value::as_str).collect(),
        _ => None,
    }
}

/// Reads one JSON object per line, `{"item_id": ..., "attrs": {...}}`, and
/// returns a complete record for every item of `items`.
///
/// Categorical values are a token or a list of tokens. Dense fields come from
/// `dense` sidecar files, or inline as a list of numbers when no sidecar is
/// given. Records of items not in `items` are ignored.
pub fn load_attributes(
    path: &Path,
    schema: &AttributeSchema,
    items: &IdMap,
    dense: &BTreeMap<String, PathBuf>,
) -> Result<Vec<Vec<AttributeValue>>> {
    let mut sidecars = HashMap::new();
    for (name, file) in dense {
        let Some((_, spec)) = schema.field(name) else {
            return Err(Error::Config(format!(
                "dense file given for unknown field {name:?}"
            )));
        };
        let FieldKind::Dense { dim } = spec.kind else {
            return Err(Error::Config(format!("field {name:?} is not dense")));
        };
        sidecars.insert(name.clone(), load_dense(file, dim)?);
    }

    let mut records: Vec<Option<Vec<AttributeValue>>> = vec![None; items.len()];
    for (n, line) in lines(path)? {
        let obj: Value =
            serde_json::from_str(&line).map_err(|e| parse_err(path, n, e.to_string()))?;
        let id = match obj.get("item_id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(x)) => x.to_string(),
            _ => return Err(parse_err(path, n, "missing item_id")),
        };
        let Some(item) = items.get(&id) else {
            debug!(
                "{}:{n}: item {id} has no interactions, skipped",
                path.display()
            );
            continue;
        };
        let attrs = obj.get("attrs").and_then(Value::as_object);
        let mut record = Vec::with_capacity(schema.len());
        for spec in &schema.fields {
            let err = |reason: String| {
                parse_err(path, n, format!("item {id}, field {}: {reason}", spec.name))
            };
            let raw = attrs.and_then(|a| a.get(&spec.name));
            let value = match &spec.kind {
                FieldKind::Dense { dim } => {
                    if let Some(side) = sidecars.get(&spec.name) {
                        let x = side
                            .get(&id)
                            .ok_or_else(|| err("missing from the dense file".into()))?;
                        AttributeValue::Dense(x.clone())
                    } else {
                        let x: Vec<f64> = raw
                            .and_then(Value::as_array)
                            .and_then(|xs| xs.iter().map(Value::as_f64).collect())
                            .ok_or_else(|| err("expected a list of numbers".into()))?;
                        if x.len() != *dim {
                            return Err(err(format!("dimension {} != {dim}", x.len())));
                        }
                        AttributeValue::Dense(x)
                    }
                }
                FieldKind::OneHot { .. } | FieldKind::MultiHot { .. } => {
                    let toks = raw
                        .and_then(tokens)
                        .ok_or_else(|| err("missing or not a token list".into()))?;
                    let idx = toks
                        .iter()
                        .map(|t| {
                            spec.token_index(t)
                                .ok_or_else(|| err(format!("unknown token {t:?}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if matches!(spec.kind, FieldKind::OneHot { .. }) {
                        if idx.len() != 1 {
                            return Err(err(format!(
                                "one-hot field needs exactly one token, got {}",
                                idx.len()
                            )));
                        }
                        AttributeValue::OneHot(idx[0])
                    } else {
                        AttributeValue::multi_hot(idx)
                    }
                }
            };
            record.push(value);
        }
        schema.check_record(item, &record)?;
        records[item] = Some(record);
    }
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.ok_or_else(|| {
                Error::format(
                    path,
                    format!(
                        "no attribute record for item {}",
                        items.name(i).unwrap_or_default()
                    ),
                )
            })
        })
        .collect()
}

/// Writes attribute records as JSON lines, dense fields inline.
pub fn write_attributes(
    path: &Path,
    schema: &AttributeSchema,
    items: &IdMap,
    records: &[Vec<AttributeValue>],
) -> Result<()> {
    let mut w = create(path)?;
    for (i, rec) in records.iter().enumerate() {
        let mut attrs = serde_json::Map::new();
        for (spec, value) in schema.fields.iter().zip(rec) {
            let vocab = |j: usize| match &spec.kind {
                FieldKind::OneHot { vocab } | FieldKind::MultiHot { vocab } => {
                    Value::from(vocab[j].clone())
                }
                FieldKind::Dense { .. } => Value::Null,
            };
            let v = match value {
                AttributeValue::OneHot(j) => vocab(*j),
                AttributeValue::MultiHot(js) => {
                    Value::Array(js.iter().map(|&j| vocab(j)).collect())
                }
                AttributeValue::Dense(x) => Value::from(x.clone()),
            };
            attrs.insert(spec.name.clone(), v);
        }
        let obj =
            serde_json::json!({ "item_id": items.name(i).unwrap_or_default(), "attrs": attrs });
        writeln!(w, "{obj}").map_err(Error::io(path))?;
    }
    w.flush().map_err(Error::io(path))
}
