use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::bag::GradBag;
use super::params::{ParamId, ParamKind, ParamRead};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Whole dense parameters and individual table rows read by a tape.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Touched {
    pub dense: BTreeSet<ParamId>,
    pub rows: BTreeMap<ParamId, BTreeSet<usize>>,
}

impl Touched {
    pub fn merge(&mut self, other: &Touched) {
        self.dense.extend(other.dense.iter().copied());
        for (id, rows) in &other.rows {
            self.rows
                .entry(*id)
                .or_default()
                .extend(rows.iter().copied());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Constant,
    /// A whole parameter, flattened.
    Param(ParamId),
    /// Weighted sum of table rows.
    Lookup {
        table: ParamId,
        rows: Vec<(usize, f64)>,
    },
    Affine {
        weight: ParamId,
        bias: Option<ParamId>,
        input: NodeId,
    },
    LeakyRelu {
        input: NodeId,
        slope: f64,
    },
    Concat(Vec<NodeId>),
    Inner(NodeId, NodeId),
    LogSigmoid(NodeId),
    LogSumExp(NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Records primitive applications with their forward values.
///
/// Nodes are appended in evaluation order, so inputs always precede their
/// consumers. Parameters marked frozen are read normally but receive no
/// gradient.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    frozen: Vec<ParamId>,
}

fn shape_err(primitive: &'static str, detail: alloc::string::String) -> Error {
    Error::Shape { primitive, detail }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(1 + e^x)` without overflow or early underflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(xs.iter().map(|x| libm::exp(x - max)).sum::<f64>())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape on which `frozen` parameters never receive gradients.
    pub fn with_frozen(frozen: &[ParamId]) -> Self {
        let mut frozen = frozen.to_vec();
        frozen.sort_unstable();
        Tape {
            nodes: Vec::new(),
            frozen,
        }
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen.binary_search(&id).is_ok()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &[f64] {
        &self.nodes[node.0].value
    }

    /// Value of a length-one node.
    pub fn scalar(&self, node: NodeId) -> f64 {
        self.nodes[node.0].value[0]
    }

    /// The last recorded node.
    pub fn root(&self) -> Option<NodeId> {
        self.nodes.len().checked_sub(1).map(NodeId)
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// A leaf holding the whole parameter `id`, flattened row-major.
    pub fn param(&mut self, params: &dyn ParamRead, id: ParamId) -> NodeId {
        let value = params.param(id).data.clone();
        self.push(value, Op::Param(id))
    }

    /// `sum_k w_k * table[r_k]`; an empty row list gives the zero vector.
    pub fn lookup(
        &mut self,
        params: &dyn ParamRead,
        table: ParamId,
        rows: Vec<(usize, f64)>,
    ) -> Result<NodeId> {
        let p = params.param(table);
        let mut value = vec![0.0; p.cols];
        for &(r, w) in &rows {
            if r >= p.rows {
                return Err(shape_err(
                    "table-lookup",
                    format!("row {r} of `{}` with {} rows", p.name, p.rows),
                ));
            }
            for (o, x) in value.iter_mut().zip(params.row(table, r)) {
                *o += w * x;
            }
        }
        Ok(self.push(value, Op::Lookup { table, rows }))
    }

    /// `W x + b` with `W` of shape `out x in`.
    pub fn affine(
        &mut self,
        params: &dyn ParamRead,
        weight: ParamId,
        bias: Option<ParamId>,
        input: NodeId,
    ) -> Result<NodeId> {
        let w = params.param(weight);
        let x = &self.nodes[input.0].value;
        if w.cols != x.len() {
            return Err(shape_err(
                "affine",
                format!(
                    "`{}` is {}x{}, input has length {}",
                    w.name,
                    w.rows,
                    w.cols,
                    x.len()
                ),
            ));
        }
        let mut value: Vec<f64> = (0..w.rows).map(|o| dot(w.row(o), x)).collect();
        if let Some(b) = bias {
            let b = params.param(b);
            if b.len() != w.rows {
                return Err(shape_err(
                    "affine",
                    format!(
                        "bias `{}` has length {}, output has {}",
                        b.name,
                        b.len(),
                        w.rows
                    ),
                ));
            }
            for (o, bi) in value.iter_mut().zip(&b.data) {
                *o += bi;
            }
        }
        Ok(self.push(
            value,
            Op::Affine {
                weight,
                bias,
                input,
            },
        ))
    }

    pub fn leaky_relu(&mut self, input: NodeId, slope: f64) -> NodeId {
        let value = self.nodes[input.0]
            .value
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        self.push(value, Op::LeakyRelu { input, slope })
    }

    pub fn concat(&mut self, inputs: &[NodeId]) -> NodeId {
        let mut value = Vec::new();
        for n in inputs {
            value.extend_from_slice(&self.nodes[n.0].value);
        }
        self.push(value, Op::Concat(inputs.to_vec()))
    }

    pub fn inner(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.len() != y.len() {
            return Err(shape_err(
                "inner-product",
                format!("{} vs {}", x.len(), y.len()),
            ));
        }
        let v = dot(x, y);
        Ok(self.push(vec![v], Op::Inner(a, b)))
    }

    /// Elementwise `ln sigmoid(x)`.
    pub fn log_sigmoid(&mut self, input: NodeId) -> NodeId {
        let value = self.nodes[input.0]
            .value
            .iter()
            .map(|&x| -softplus(-x))
            .collect();
        self.push(value, Op::LogSigmoid(input))
    }

    /// `ln sum exp(x)` with max-shift.
    pub fn log_sum_exp(&mut self, input: NodeId) -> Result<NodeId> {
        let x = &self.nodes[input.0].value;
        if x.is_empty() {
            return Err(shape_err("log-sum-exp", "empty input".into()));
        }
        let v = log_sum_exp(x);
        Ok(self.push(vec![v], Op::LogSumExp(input)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.len() != y.len() {
            return Err(shape_err("add", format!("{} vs {}", x.len(), y.len())));
        }
        let value = x.iter().zip(y).map(|(p, q)| p + q).collect();
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> NodeId {
        let value = self.nodes[input.0]
            .value
            .iter()
            .map(|x| factor * x)
            .collect();
        self.push(value, Op::Scale(input, factor))
    }

    /// Sum of the elements of `input`.
    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let v = self.nodes[input.0].value.iter().sum();
        self.push(vec![v], Op::Sum(input))
    }

    /// Adds a list of scalar nodes; the empty list gives a zero constant.
    pub fn sum_scalars(&mut self, terms: &[NodeId]) -> NodeId {
        if terms.is_empty() {
            return self.constant(vec![0.0]);
        }
        let c = self.concat(terms);
        self.sum(c)
    }

    /// Pre-activation values of every leaky-relu, in recording order.
    pub fn leaky_inputs(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::LeakyRelu { input, .. } => Some(&self.nodes[input.0].value),
                _ => None,
            })
            .flatten()
            .copied()
            .collect()
    }

    /// Unfrozen parameters the tape reads.
    pub fn touched(&self, params: &dyn ParamRead) -> Touched {
        let mut t = Touched::default();
        let dense = |t: &mut Touched, id: ParamId| {
            if !self.is_frozen(id) {
                t.dense.insert(id);
            }
        };
        for node in &self.nodes {
            match &node.op {
                Op::Param(id) => {
                    let p = params.param(*id);
                    match p.kind {
                        ParamKind::Dense => dense(&mut t, *id),
                        ParamKind::Table if !self.is_frozen(*id) => {
                            t.rows.entry(*id).or_default().extend(0..p.rows);
                        }
                        ParamKind::Table => {}
                    }
                }
                Op::Lookup { table, rows } if !self.is_frozen(*table) => {
                    t.rows
                        .entry(*table)
                        .or_default()
                        .extend(rows.iter().map(|r| r.0));
                }
                Op::Affine { weight, bias, .. } => {
                    dense(&mut t, *weight);
                    if let Some(b) = bias {
                        dense(&mut t, *b);
                    }
                }
                _ => {}
            }
        }
        t
    }

    /// Gradients of the last node, which must be scalar.
    pub fn backward(&self, params: &dyn ParamRead, seed: f64) -> Result<GradBag> {
        match self.root() {
            Some(root) => self.backward_from(root, params, seed),
            None => Err(Error::NonScalarRoot(0)),
        }
    }

    pub fn backward_from(
        &self,
        root: NodeId,
        params: &dyn ParamRead,
        seed: f64,
    ) -> Result<GradBag> {
        let len = self.nodes[root.0].value.len();
        if len != 1 {
            return Err(Error::NonScalarRoot(len));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![seed]);
        let mut bag = GradBag::new();

        fn acc(adj: &mut [Option<Vec<f64>>], node: NodeId, len: usize) -> &mut Vec<f64> {
            adj[node.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    if !self.is_frozen(*id) {
                        let p = params.param(*id);
                        match p.kind {
                            ParamKind::Dense => bag.add_dense(*id, 1.0, &g),
                            ParamKind::Table => {
                                for r in 0..p.rows {
                                    bag.add_row(*id, r, 1.0, &g[r * p.cols..(r + 1) * p.cols]);
                                }
                            }
                        }
                    }
                }
                Op::Lookup { table, rows } => {
                    if !self.is_frozen(*table) {
                        for &(r, w) in rows {
                            bag.add_row(*table, r, w, &g);
                        }
                    }
                }
                Op::Affine {
                    weight,
                    bias,
                    input,
                } => {
                    let w = params.param(*weight);
                    let x = &self.nodes[input.0].value;
                    if !self.is_frozen(*weight) {
                        let dw = bag.dense_entry(*weight, w.len());
                        for (o, go) in g.iter().enumerate() {
                            if *go != 0.0 {
                                for (d, xi) in dw[o * w.cols..(o + 1) * w.cols].iter_mut().zip(x) {
                                    *d += go * xi;
                                }
                            }
                        }
                    }
                    if let Some(b) = bias {
                        if !self.is_frozen(*b) {
                            bag.add_dense(*b, 1.0, &g);
                        }
                    }
                    let dx = acc(&mut adj, *input, w.cols);
                    for (o, go) in g.iter().enumerate() {
                        if *go != 0.0 {
                            for (d, wi) in dx.iter_mut().zip(w.row(o)) {
                                *d += go * wi;
                            }
                        }
                    }
                }
                Op::LeakyRelu { input, slope } => {
                    let x = &self.nodes[input.0].value;
                    let dx = acc(&mut adj, *input, x.len());
                    for ((d, gi), xi) in dx.iter_mut().zip(&g).zip(x) {
                        // the positive branch owns x == 0
                        *d += if *xi >= 0.0 { *gi } else { slope * gi };
                    }
                }
                Op::Concat(inputs) => {
                    let mut offset = 0;
                    for n in inputs {
                        let len = self.nodes[n.0].value.len();
                        let dx = acc(&mut adj, *n, len);
                        for (d, gi) in dx.iter_mut().zip(&g[offset..offset + len]) {
                            *d += gi;
                        }
                        offset += len;
                    }
                }
                Op::Inner(a, b) => {
                    let (xa, xb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let s = g[0];
                    let da = acc(&mut adj, *a, xa.len());
                    for (d, y) in da.iter_mut().zip(xb) {
                        *d += s * y;
                    }
                    let db = acc(&mut adj, *b, xb.len());
                    for (d, y) in db.iter_mut().zip(xa) {
                        *d += s * y;
                    }
                }
                Op::LogSigmoid(input) => {
                    let x = &self.nodes[input.0].value;
                    let dx = acc(&mut adj, *input, x.len());
                    for ((d, gi), xi) in dx.iter_mut().zip(&g).zip(x) {
                        *d += gi * sigmoid(-xi);
                    }
                }
                Op::LogSumExp(input) => {
                    let x = &self.nodes[input.0].value;
                    let out = node.value[0];
                    let s = g[0];
                    let dx = acc(&mut adj, *input, x.len());
                    for (d, xi) in dx.iter_mut().zip(x) {
                        *d += s * libm::exp(xi - out);
                    }
                }
                Op::Add(a, b) => {
                    for n in [a, b] {
                        let dx = acc(&mut adj, *n, g.len());
                        for (d, gi) in dx.iter_mut().zip(&g) {
                            *d += gi;
                        }
                    }
                }
                Op::Scale(input, f) => {
                    let dx = acc(&mut adj, *input, g.len());
                    for (d, gi) in dx.iter_mut().zip(&g) {
                        *d += f * gi;
                    }
                }
                Op::Sum(input) => {
                    let len = self.nodes[input.0].value.len();
                    let dx = acc(&mut adj, *input, len);
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                }
            }
        }
        Ok(bag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{gradient_check, ParamStore};
    use rand::Rng;

    fn store_with(
        data: &[(&str, usize, usize, ParamKind)],
        rng: &mut crate::rng::Rng,
    ) -> (ParamStore, Vec<ParamId>) {
        let mut s = ParamStore::new();
        let ids = data
            .iter()
            .map(|&(name, r, c, kind)| {
                let v = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
                s.push(name, r, c, kind, v)
            })
            .collect();
        (s, ids)
    }

    #[test]
    fn leaky_relu_values() {
        let mut t = Tape::new();
        let x = t.constant(vec![-1.0, 2.0]);
        let y = t.leaky_relu(x, 0.01);
        assert_eq!(t.value(y), &[-0.01, 2.0]);
    }

    #[test]
    fn inner_of_three_four() {
        let mut t = Tape::new();
        let x = t.constant(vec![3.0, 4.0]);
        let y = t.inner(x, x).unwrap();
        assert_eq!(t.scalar(y), 25.0);
    }

    #[test]
    fn log_sum_exp_does_not_overflow() {
        let mut t = Tape::new();
        let x = t.constant(vec![1000.0, 1000.0]);
        let y = t.log_sum_exp(x).unwrap();
        assert!((t.scalar(y) - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn inner_product_adjoints() {
        let mut s = ParamStore::new();
        let a = s.push("a", 1, 3, ParamKind::Dense, vec![1.0, 2.0, 3.0]);
        let b = s.push("b", 1, 3, ParamKind::Dense, vec![-4.0, 5.0, 0.5]);
        let mut t = Tape::new();
        let (na, nb) = (t.param(&s, a), t.param(&s, b));
        t.inner(na, nb).unwrap();
        let bag = t.backward(&s, 1.0).unwrap();
        assert_eq!(bag.dense(a).unwrap(), &[-4.0, 5.0, 0.5]);
        assert_eq!(bag.dense(b).unwrap(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn constant_tape_has_empty_bag() {
        let s = ParamStore::new();
        let mut t = Tape::new();
        let x = t.constant(vec![1.0, 2.0]);
        t.sum(x);
        assert!(t.backward(&s, 1.0).unwrap().is_empty());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let s = ParamStore::new();
        let mut t = Tape::new();
        t.constant(vec![1.0, 2.0]);
        assert_eq!(t.backward(&s, 1.0), Err(Error::NonScalarRoot(2)));
        assert_eq!(Tape::new().backward(&s, 1.0), Err(Error::NonScalarRoot(0)));
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let mut s = ParamStore::new();
        let w = s.push("w", 2, 3, ParamKind::Dense, vec![0.0; 6]);
        let tab = s.push("tab", 2, 2, ParamKind::Table, vec![0.0; 4]);
        let mut t = Tape::new();
        let x = t.constant(vec![1.0, 2.0]);
        let y = t.constant(vec![1.0]);
        assert!(matches!(
            t.affine(&s, w, None, x),
            Err(Error::Shape {
                primitive: "affine",
                ..
            })
        ));
        assert!(matches!(
            t.inner(x, y),
            Err(Error::Shape {
                primitive: "inner-product",
                ..
            })
        ));
        assert!(matches!(
            t.add(x, y),
            Err(Error::Shape {
                primitive: "add",
                ..
            })
        ));
        assert!(matches!(
            t.lookup(&s, tab, vec![(5, 1.0)]),
            Err(Error::Shape {
                primitive: "table-lookup",
                ..
            })
        ));
        let e = t.constant(vec![]);
        assert!(matches!(
            t.log_sum_exp(e),
            Err(Error::Shape {
                primitive: "log-sum-exp",
                ..
            })
        ));
    }

    #[test]
    fn frozen_parameters_get_no_gradient() {
        let mut s = ParamStore::new();
        let tab = s.push("tab", 3, 2, ParamKind::Table, vec![1.0; 6]);
        let w = s.push("w", 1, 2, ParamKind::Dense, vec![2.0, 3.0]);
        let mut t = Tape::with_frozen(&[tab]);
        let x = t.lookup(&s, tab, vec![(0, 1.0), (2, 1.0)]).unwrap();
        let y = t.affine(&s, w, None, x).unwrap();
        t.sum(y);
        let bag = t.backward(&s, 1.0).unwrap();
        assert!(!bag.touches(tab));
        assert_eq!(bag.dense(w).unwrap(), &[2.0, 2.0]);
    }

    /// Builds `f = lse([<W2 lrelu(W1 [e_a; e_b] + b1), c>, ls(x0), sum(scale(x))])`
    /// as a composite covering every primitive.
    fn composite(s: &dyn ParamRead, ids: &[ParamId]) -> Result<Tape> {
        let (tab, w1, b1, w2, c) = (ids[0], ids[1], ids[2], ids[3], ids[4]);
        let mut t = Tape::new();
        let ea = t.lookup(s, tab, vec![(0, 1.0), (3, 1.0)])?;
        let eb = t.lookup(s, tab, vec![(1, 0.5)])?;
        let cat = t.concat(&[ea, eb]);
        let h = t.affine(s, w1, Some(b1), cat)?;
        let a = t.leaky_relu(h, 0.01);
        let o = t.affine(s, w2, None, a)?;
        let cp = t.param(s, c);
        let ip = t.inner(o, cp)?;
        let ls = t.log_sigmoid(o);
        let sls = t.sum(ls);
        let sc = t.scale(cat, -0.3);
        let sum = t.sum(sc);
        let mixed = t.add(sls, sum)?;
        let v = t.concat(&[ip, mixed, sls]);
        t.log_sum_exp(v)?;
        Ok(t)
    }

    #[test]
    fn random_three_layer_composite_matches_finite_differences() {
        let mut rng = crate::rng::stream(5, crate::rng::Stream::Init, 0, 0);
        for _ in 0..5 {
            let (s, ids) = store_with(
                &[
                    ("tab", 4, 3, ParamKind::Table),
                    ("w1", 5, 6, ParamKind::Dense),
                    ("b1", 1, 5, ParamKind::Dense),
                    ("w2", 4, 5, ParamKind::Dense),
                    ("c", 1, 4, ParamKind::Dense),
                ],
                &mut rng,
            );
            let bag = composite(&s, &ids).unwrap().backward(&s, 1.0).unwrap();
            assert!(bag.layout_matches(&s));
            let coords = bag.touched_coordinates(&s);
            let report = gradient_check(|p| composite(p, &ids), &s, &coords, 1e-5).unwrap();
            assert!(report.max_rel_err < 1e-6, "{report:?}");
            assert!(report.checked > 0);
        }
    }

    #[test]
    fn each_primitive_passes_finite_differences_at_20_points() {
        type Build = fn(&mut Tape, &dyn ParamRead, ParamId, ParamId) -> Result<NodeId>;
        let cases: [(&str, Build); 9] = [
            ("table-lookup", |t, s, _a, tab| {
                let x = t.lookup(s, tab, vec![(0, 1.0), (2, -2.0)])?;
                let y = t.log_sigmoid(x);
                Ok(t.sum(y))
            }),
            ("affine", |t, s, a, _| {
                let x = t.constant(vec![0.3, -0.7, 1.1]);
                let y = t.affine(s, a, None, x)?;
                let z = t.log_sigmoid(y);
                Ok(t.sum(z))
            }),
            ("leaky-relu", |t, s, a, _| {
                let x = t.param(s, a);
                let y = t.leaky_relu(x, 0.2);
                let z = t.inner(y, y)?;
                Ok(z)
            }),
            ("concat", |t, s, a, tab| {
                let x = t.param(s, a);
                let y = t.lookup(s, tab, vec![(1, 1.0)])?;
                let c = t.concat(&[x, y, x]);
                let z = t.log_sigmoid(c);
                Ok(t.sum(z))
            }),
            ("inner-product", |t, s, a, _| {
                let x = t.param(s, a);
                let c = t.constant((0..6).map(|i| i as f64 - 2.5).collect());
                let y = t.inner(x, c)?;
                let z = t.inner(x, x)?;
                t.add(y, z)
            }),
            ("log-sigmoid", |t, s, a, _| {
                let x = t.param(s, a);
                let y = t.log_sigmoid(x);
                Ok(t.sum(y))
            }),
            ("log-sum-exp", |t, s, a, _| {
                let x = t.param(s, a);
                t.log_sum_exp(x)
            }),
            ("scalar add/mul", |t, s, a, _| {
                let x = t.param(s, a);
                let y = t.scale(x, -1.7);
                let z = t.add(x, y)?;
                let w = t.log_sigmoid(z);
                Ok(t.sum(w))
            }),
            ("sum", |t, s, a, _| {
                let x = t.param(s, a);
                let y = t.log_sigmoid(x);
                Ok(t.sum(y))
            }),
        ];
        let mut rng = crate::rng::stream(9, crate::rng::Stream::Init, 1, 0);
        for (name, build) in cases {
            for _ in 0..20 {
                let (s, ids) = store_with(
                    &[
                        ("a", 2, 3, ParamKind::Dense),
                        ("tab", 3, 2, ParamKind::Table),
                    ],
                    &mut rng,
                );
                let f = |p: &dyn ParamRead| {
                    let mut t = Tape::new();
                    build(&mut t, p, ids[0], ids[1])?;
                    Ok(t)
                };
                let bag = f(&s).unwrap().backward(&s, 1.0).unwrap();
                let coords = bag.touched_coordinates(&s);
                let report = gradient_check(f, &s, &coords, 1e-5).unwrap();
                assert!(report.max_rel_err < 1e-6, "{name}: {report:?}");
            }
        }
    }

    #[test]
    fn adjoints_are_linear_and_additive() {
        let mut rng = crate::rng::stream(3, crate::rng::Stream::Init, 2, 0);
        let (s, ids) = store_with(
            &[
                ("a", 1, 4, ParamKind::Dense),
                ("tab", 3, 4, ParamKind::Table),
            ],
            &mut rng,
        );
        let f = |t: &mut Tape| {
            let x = t.param(&s, ids[0]);
            let y = t.log_sigmoid(x);
            t.sum(y)
        };
        let g = |t: &mut Tape| {
            let x = t.lookup(&s, ids[1], vec![(0, 1.0), (2, 1.0)]).unwrap();
            let a = t.param(&s, ids[0]);
            t.inner(x, a).unwrap()
        };
        let mut tf = Tape::new();
        f(&mut tf);
        let bf = tf.backward(&s, 1.0).unwrap();
        let mut tg = Tape::new();
        g(&mut tg);
        let bg = tg.backward(&s, 1.0).unwrap();

        // alpha * f via seed and via a scale node
        let alpha = 2.5;
        let mut ts = Tape::new();
        let r = f(&mut ts);
        ts.scale(r, alpha);
        let scaled = ts.backward(&s, 1.0).unwrap();
        let mut expected = bf.clone();
        expected.scale(alpha);
        assert_eq!(scaled, expected);
        assert_eq!(tf.backward(&s, alpha).unwrap(), expected);

        // f + g
        let mut tsum = Tape::new();
        let a = f(&mut tsum);
        let b = g(&mut tsum);
        tsum.add(a, b).unwrap();
        let both = tsum.backward(&s, 1.0).unwrap();
        let mut merged = bf.clone();
        merged.merge(&bg);
        assert_eq!(both, merged);
    }

    #[test]
    fn sparse_rows_equal_one_hot_matrix_products() {
        let mut rng = crate::rng::stream(4, crate::rng::Stream::Init, 3, 0);
        let (s, ids) = store_with(
            &[
                ("tab", 5, 3, ParamKind::Table),
                ("c", 1, 3, ParamKind::Dense),
            ],
            &mut rng,
        );
        let (tab, c) = (ids[0], ids[1]);
        let picks = [(1usize, 1.0), (4, 1.0), (1, 1.0)];

        let mut t = Tape::new();
        let x = t.lookup(&s, tab, picks.to_vec()).unwrap();
        let cp = t.param(&s, c);
        let y = t.inner(x, cp).unwrap();
        let z = t.log_sigmoid(y);
        t.sum(z);
        let sparse = t.backward(&s, 1.0).unwrap().densified(tab, &s);

        // same function with the table as a dense 3 x 5 matrix times a count vector
        let mut dense = ParamStore::new();
        let p = s.get(tab);
        let mut transposed = vec![0.0; 15];
        for r in 0..5 {
            for k in 0..3 {
                transposed[k * 5 + r] = p.data[r * 3 + k];
            }
        }
        let wt = dense.push("tab_t", 3, 5, ParamKind::Dense, transposed);
        let cd = dense.push("c", 1, 3, ParamKind::Dense, s.get(c).data.clone());
        let mut hot = vec![0.0; 5];
        for (r, w) in picks {
            hot[r] += w;
        }
        let mut t2 = Tape::new();
        let h = t2.constant(hot);
        let x2 = t2.affine(&dense, wt, None, h).unwrap();
        let cp2 = t2.param(&dense, cd);
        let y2 = t2.inner(x2, cp2).unwrap();
        let z2 = t2.log_sigmoid(y2);
        t2.sum(z2);
        let g2 = t2.backward(&dense, 1.0).unwrap();
        let gt = g2.dense(wt).unwrap();
        for r in 0..5 {
            for k in 0..3 {
                assert!((sparse[r * 3 + k] - gt[k * 5 + r]).abs() < 1e-12);
            }
        }
    }
}
