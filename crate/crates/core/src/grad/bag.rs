use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamId, ParamKind, ParamStore};

/// Gradients keyed by parameter. Parameters that a computation never touched
/// are absent and count as zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradBag {
    dense: BTreeMap<ParamId, Vec<f64>>,
    sparse: BTreeMap<ParamId, BTreeMap<usize, Vec<f64>>>,
}

impl GradBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.dense.is_empty() && self.sparse.is_empty()
    }

    /// Adds `alpha * g` into the dense gradient of `id`.
    pub fn add_dense(&mut self, id: ParamId, alpha: f64, g: &[f64]) {
        let acc = self.dense.entry(id).or_insert_with(|| vec![0.0; g.len()]);
        debug_assert_eq!(acc.len(), g.len());
        for (a, x) in acc.iter_mut().zip(g) {
            *a += alpha * x;
        }
    }

    /// Adds `alpha * g` into row `row` of the table gradient of `id`.
    pub fn add_row(&mut self, id: ParamId, row: usize, alpha: f64, g: &[f64]) {
        let acc = self
            .sparse
            .entry(id)
            .or_default()
            .entry(row)
            .or_insert_with(|| vec![0.0; g.len()]);
        debug_assert_eq!(acc.len(), g.len());
        for (a, x) in acc.iter_mut().zip(g) {
            *a += alpha * x;
        }
    }

    /// Mutable dense gradient of `id`, created as zeros of length `len`.
    pub fn dense_entry(&mut self, id: ParamId, len: usize) -> &mut [f64] {
        self.dense.entry(id).or_insert_with(|| vec![0.0; len])
    }

    pub fn dense(&self, id: ParamId) -> Option<&[f64]> {
        self.dense.get(&id).map(Vec::as_slice)
    }

    pub fn rows(&self, id: ParamId) -> Option<&BTreeMap<usize, Vec<f64>>> {
        self.sparse.get(&id)
    }

    pub fn dense_iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.dense.iter().map(|(id, g)| (*id, g.as_slice()))
    }

    pub fn sparse_iter(&self) -> impl Iterator<Item = (ParamId, &BTreeMap<usize, Vec<f64>>)> {
        self.sparse.iter().map(|(id, rows)| (*id, rows))
    }

    pub fn touches(&self, id: ParamId) -> bool {
        self.dense.contains_key(&id) || self.sparse.contains_key(&id)
    }

    /// Drops everything recorded for `id`.
    pub fn remove(&mut self, id: ParamId) {
        self.dense.remove(&id);
        self.sparse.remove(&id);
    }

    /// Sums `other` into `self`.
    pub fn merge(&mut self, other: &GradBag) {
        for (id, g) in &other.dense {
            self.add_dense(*id, 1.0, g);
        }
        for (id, rows) in &other.sparse {
            for (r, g) in rows {
                self.add_row(*id, *r, 1.0, g);
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        let dense = self.dense.values_mut();
        let sparse = self.sparse.values_mut().flat_map(|rows| rows.values_mut());
        for g in dense.chain(sparse) {
            for x in g.iter_mut() {
                *x *= alpha;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        let dense = self.dense.values();
        let sparse = self.sparse.values().flat_map(|rows| rows.values());
        dense.chain(sparse).all(|g| g.iter().all(|x| x.is_finite()))
    }

    /// Full-shape gradient of `id` (zeros where untouched).
    pub fn densified(&self, id: ParamId, params: &ParamStore) -> Vec<f64> {
        let p = params.get(id);
        let mut out = vec![0.0; p.len()];
        if let Some(g) = self.dense.get(&id) {
            out.copy_from_slice(g);
        }
        if let Some(rows) = self.sparse.get(&id) {
            for (r, g) in rows {
                for (o, x) in out[r * p.cols..(r + 1) * p.cols].iter_mut().zip(g) {
                    *o += x;
                }
            }
        }
        out
    }

    /// Gradient value of one flat coordinate.
    pub fn coordinate(&self, id: ParamId, index: usize, params: &ParamStore) -> f64 {
        let cols = params.get(id).cols;
        let mut g = self.dense.get(&id).map_or(0.0, |d| d[index]);
        if let Some(rows) = self.sparse.get(&id) {
            if let Some(row) = rows.get(&(index / cols)) {
                g += row[index % cols];
            }
        }
        g
    }

    /// Every flat coordinate this bag touches, in parameter order.
    pub fn touched_coordinates(&self, params: &ParamStore) -> Vec<(ParamId, usize)> {
        let mut out = Vec::new();
        for id in params.ids() {
            let p = params.get(id);
            if self.dense.contains_key(&id) {
                out.extend((0..p.len()).map(|i| (id, i)));
            } else if let Some(rows) = self.sparse.get(&id) {
                for r in rows.keys() {
                    out.extend((r * p.cols..(r + 1) * p.cols).map(|i| (id, i)));
                }
            }
        }
        out
    }

    /// Largest absolute coordinate difference between two bags.
    pub fn max_abs_diff(&self, other: &GradBag, params: &ParamStore) -> f64 {
        params
            .ids()
            .filter(|&id| self.touches(id) || other.touches(id))
            .flat_map(|id| {
                let a = self.densified(id, params);
                let b = other.densified(id, params);
                a.into_iter()
                    .zip(b)
                    .map(|(x, y)| libm::fabs(x - y))
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    /// True when every table gradient is row-sparse and every other gradient dense.
    pub fn layout_matches(&self, params: &ParamStore) -> bool {
        self.dense
            .keys()
            .all(|id| params.get(*id).kind == ParamKind::Dense)
            && self
                .sparse
                .keys()
                .all(|id| params.get(*id).kind == ParamKind::Table)
    }
}
