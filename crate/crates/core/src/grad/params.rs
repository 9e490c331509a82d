use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// `Table` parameters are embedding tables: one row per entry, updated
/// sparsely. `Dense` parameters are matrices (`rows` = outputs) or vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Dense,
    Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: ParamKind,
    /// Row-major, `rows * cols` entries.
    pub data: Vec<f64>,
}

impl Param {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// Read access to parameters. Tapes read through this trait so callers can
/// observe which parameters a computation touches. Implementations are
/// shared across threads when a batch is split into shards.
pub trait ParamRead: Sync {
    fn param(&self, id: ParamId) -> &Param;

    fn row(&self, id: ParamId, r: usize) -> &[f64] {
        self.param(id).row(r)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        kind: ParamKind,
        data: Vec<f64>,
    ) -> ParamId {
        assert_eq!(data.len(), rows * cols, "parameter `{name}` data length");
        self.params.push(Param {
            name: String::from(name),
            rows,
            cols,
            kind,
            data,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.data.iter().all(|x| x.is_finite()))
    }

    /// Number of scalar entries across all parameters.
    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }
}

impl ParamRead for ParamStore {
    fn param(&self, id: ParamId) -> &Param {
        self.get(id)
    }
}
