//! Loss terms and their composition.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{InteractionDataset, ItemIdx, UserIdx};
use crate::grad::{GradBag, NodeId, ParamId, ParamRead, Tape, Touched};
use crate::model::{Hyperparams, Layout, Model};
use crate::sampling::BatchEntry;
use crate::{Error, Result};

/// Which terms of the joint loss are optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Full,
    /// Only the content BPR term.
    NoContrastive,
    /// Tables pretrained by matrix factorization; `item_table` frozen and
    /// the behaviour BPR term dropped.
    Pretrain,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoContrastive, Variant::Pretrain];

    pub fn uses_contrastive(self) -> bool {
        self != Variant::NoContrastive
    }

    pub fn uses_behaviour_bpr(self) -> bool {
        self == Variant::Full
    }

    pub fn frozen(self, layout: &Layout) -> Vec<ParamId> {
        match self {
            Variant::Pretrain => alloc::vec![layout.item_table],
            _ => Vec::new(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoContrastive => "no-contrastive",
            Variant::Pretrain => "pretrain",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Hyperparams(format!("unknown variant {s:?}")))
    }
}

/// Values of the loss terms for one batch.
///
/// `total = content_bpr + behaviour_bpr + lambda * contrastive + l2 * penalty`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub content_bpr: f64,
    pub behaviour_bpr: f64,
    pub contrastive: f64,
    /// Squared norm of the parameters the batch touched.
    pub penalty: f64,
    pub total: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.content_bpr,
            self.behaviour_bpr,
            self.contrastive,
            self.penalty,
            self.total,
        ]
        .iter()
        .all(|x| x.is_finite())
    }

    pub fn accumulate(&mut self, other: &LossReport) {
        self.content_bpr += other.content_bpr;
        self.behaviour_bpr += other.behaviour_bpr;
        self.contrastive += other.contrastive;
        self.penalty += other.penalty;
        self.total += other.total;
    }

    pub fn scaled(&self, a: f64) -> LossReport {
        LossReport {
            content_bpr: self.content_bpr * a,
            behaviour_bpr: self.behaviour_bpr * a,
            contrastive: self.contrastive * a,
            penalty: self.penalty * a,
            total: self.total * a,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    crate::model::predict(a, b)
}

/// `-ln sigmoid(pos - neg)`.
pub fn loss_bpr(score_pos: f64, score_neg: f64) -> Result<f64> {
    if !score_pos.is_finite() || !score_neg.is_finite() {
        return Err(Error::NonFinite(format!(
            "bpr scores {score_pos}, {score_neg}"
        )));
    }
    Ok(crate::grad::softplus(score_neg - score_pos))
}

/// InfoNCE averaged over positives; each positive is contrasted with all
/// negatives.
pub fn loss_contrastive(
    anchor: &[f64],
    positives: &[&[f64]],
    negatives: &[&[f64]],
    tau: f64,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Hyperparams(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    if positives.is_empty() {
        return Err(Error::Shape {
            primitive: "contrastive",
            detail: "no positives".into(),
        });
    }
    let neg: Vec<f64> = negatives
        .iter()
        .map(|z| dot(anchor, z).map(|x| x / tau))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut logits = Vec::with_capacity(neg.len() + 1);
    for z in positives {
        let p = dot(anchor, z)? / tau;
        logits.clear();
        logits.push(p);
        logits.extend_from_slice(&neg);
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("contrastive logits".into()));
        }
        total += crate::grad::log_sum_exp(&logits) - p;
    }
    Ok(total / positives.len() as f64)
}

/// Options for evaluating the joint loss over a slice of a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermOptions {
    /// Divisor of the summed per-pair contrastive terms. For a whole batch
    /// this is its pair count; shards of one batch share the batch's count.
    pub pair_count: usize,
    /// Put the squared-norm penalty on the tape.
    pub with_penalty: bool,
}

/// Embedding nodes memoized per item and user within one tape.
struct Cache<'m, 'a> {
    model: &'m Model<'a>,
    train: &'m InteractionDataset,
    content: BTreeMap<ItemIdx, NodeId>,
    behaviour: BTreeMap<ItemIdx, NodeId>,
    user: BTreeMap<UserIdx, NodeId>,
}

impl<'m, 'a> Cache<'m, 'a> {
    fn new(model: &'m Model<'a>, train: &'m InteractionDataset) -> Self {
        Cache {
            model,
            train,
            content: BTreeMap::new(),
            behaviour: BTreeMap::new(),
            user: BTreeMap::new(),
        }
    }

    fn content(&mut self, tape: &mut Tape, v: ItemIdx) -> Result<NodeId> {
        if let Some(n) = self.content.get(&v) {
            return Ok(*n);
        }
        let n = self.model.item_cbce(tape, self.train.item_attributes(v)?)?;
        self.content.insert(v, n);
        Ok(n)
    }

    fn behaviour(&mut self, tape: &mut Tape, v: ItemIdx) -> Result<NodeId> {
        if let Some(n) = self.behaviour.get(&v) {
            return Ok(*n);
        }
        let n = self.model.coce(tape, v, self.train)?;
        self.behaviour.insert(v, n);
        Ok(n)
    }

    fn user(&mut self, tape: &mut Tape, u: UserIdx) -> Result<NodeId> {
        if let Some(n) = self.user.get(&u) {
            return Ok(*n);
        }
        let n = self.model.uce(tape, u, self.train)?;
        self.user.insert(u, n);
        Ok(n)
    }
}

/// `ln sigmoid(<a, pos> - <a, neg>)` on the tape.
fn bpr_term(tape: &mut Tape, a: NodeId, pos: NodeId, neg: NodeId) -> Result<NodeId> {
    let p = tape.inner(a, pos)?;
    let n = tape.inner(a, neg)?;
    let n = tape.scale(n, -1.0);
    let d = tape.add(p, n)?;
    Ok(tape.log_sigmoid(d))
}

fn check_entry(e: &BatchEntry, train: &InteractionDataset) -> Result<()> {
    if !train.contains(e.pos_user, e.item) {
        return Err(Error::InvalidTriple(format!(
            "user {} has no interaction with item {}",
            e.pos_user, e.item
        )));
    }
    if train.contains(e.neg_user, e.item) {
        return Err(Error::InvalidTriple(format!(
            "negative user {} interacted with item {}",
            e.neg_user, e.item
        )));
    }
    Ok(())
}

/// Squared norm of the touched parameters, as a tape node.
fn penalty_node(tape: &mut Tape, params: &dyn ParamRead, touched: &Touched) -> Result<NodeId> {
    let mut terms = Vec::new();
    for id in &touched.dense {
        let p = tape.param(params, *id);
        terms.push(tape.inner(p, p)?);
    }
    for (id, rows) in &touched.rows {
        for r in rows {
            let x = tape.lookup(params, *id, alloc::vec![(*r, 1.0)])?;
            terms.push(tape.inner(x, x)?);
        }
    }
    Ok(tape.sum_scalars(&terms))
}

/// Squared norm of the touched parameters and its gradient, scaled by `l2`.
pub fn l2_penalty(params: &dyn ParamRead, touched: &Touched, l2: f64) -> (f64, GradBag) {
    let mut bag = GradBag::new();
    let mut sq = 0.0;
    for id in &touched.dense {
        let p = params.param(*id);
        sq += p.squared_norm();
        bag.add_dense(*id, 2.0 * l2, &p.data);
    }
    for (id, rows) in &touched.rows {
        for r in rows {
            let x = params.row(*id, *r);
            sq += x.iter().map(|v| v * v).sum::<f64>();
            bag.add_row(*id, *r, 2.0 * l2, x);
        }
    }
    (sq, bag)
}

/// Joint loss over `entries` recorded on a fresh tape whose last node is the
/// total.
pub fn loss_terms(
    entries: &[BatchEntry],
    model: &Model,
    train: &InteractionDataset,
    hyper: &Hyperparams,
    variant: Variant,
    opts: TermOptions,
) -> Result<(LossReport, Tape)> {
    let mut tape = Tape::with_frozen(&variant.frozen(model.layout));
    let mut cache = Cache::new(model, train);
    let inv_tau = 1.0 / hyper.tau;

    let mut content_terms = Vec::with_capacity(entries.len());
    let mut behaviour_terms = Vec::new();
    let mut pair_terms = Vec::new();
    for e in entries {
        check_entry(e, train)?;
        let q = cache.content(&mut tape, e.item)?;
        let sp = cache.user(&mut tape, e.pos_user)?;
        let sn = cache.user(&mut tape, e.neg_user)?;
        content_terms.push(bpr_term(&mut tape, q, sp, sn)?);
        if variant.uses_behaviour_bpr() {
            let z = cache.behaviour(&mut tape, e.item)?;
            behaviour_terms.push(bpr_term(&mut tape, z, sp, sn)?);
        }
        if variant.uses_contrastive() && !e.positives.is_empty() {
            let mut neg_logits = Vec::with_capacity(e.negatives.len());
            for &w in &e.negatives {
                let z = cache.behaviour(&mut tape, w)?;
                let s = tape.inner(q, z)?;
                neg_logits.push(tape.scale(s, inv_tau));
            }
            for &w in &e.positives {
                let z = cache.behaviour(&mut tape, w)?;
                let s = tape.inner(q, z)?;
                let p = tape.scale(s, inv_tau);
                let mut logits = Vec::with_capacity(neg_logits.len() + 1);
                logits.push(p);
                logits.extend_from_slice(&neg_logits);
                let cat = tape.concat(&logits);
                let lse = tape.log_sum_exp(cat)?;
                let neg_p = tape.scale(p, -1.0);
                pair_terms.push(tape.add(lse, neg_p)?);
            }
        }
    }

    let content = tape.sum_scalars(&content_terms);
    let content = tape.scale(content, -1.0);
    let behaviour = tape.sum_scalars(&behaviour_terms);
    let behaviour = tape.scale(behaviour, -1.0);
    let contrastive = tape.sum_scalars(&pair_terms);
    let contrastive = tape.scale(contrastive, 1.0 / opts.pair_count.max(1) as f64);
    let penalty = if opts.with_penalty {
        let touched = tape.touched(model.params);
        penalty_node(&mut tape, model.params, &touched)?
    } else {
        tape.constant(alloc::vec![0.0])
    };

    let a = tape.add(content, behaviour)?;
    let c = tape.scale(contrastive, hyper.lambda);
    let a = tape.add(a, c)?;
    let r = tape.scale(penalty, hyper.l2);
    let total = tape.add(a, r)?;

    let report = LossReport {
        content_bpr: tape.scalar(content),
        behaviour_bpr: tape.scalar(behaviour),
        contrastive: tape.scalar(contrastive),
        penalty: tape.scalar(penalty),
        total: tape.scalar(total),
    };
    if !report.is_finite() {
        return Err(Error::NonFinite(format!("loss {report:?}")));
    }
    Ok((report, tape))
}

/// Joint loss over a whole batch, penalty included.
pub fn loss_total(
    entries: &[BatchEntry],
    model: &Model,
    train: &InteractionDataset,
    hyper: &Hyperparams,
    variant: Variant,
) -> Result<(LossReport, Tape)> {
    let pairs = if variant.uses_contrastive() {
        entries.iter().map(|e| e.positives.len()).sum()
    } else {
        0
    };
    loss_terms(
        entries,
        model,
        train,
        hyper,
        variant,
        TermOptions {
            pair_count: pairs,
            with_penalty: true,
        },
    )
}

/// BPR matrix factorization over `(user, positive item, negative item)`
/// triples, scored by the behaviour-side embeddings.
pub fn loss_mf_pretrain(
    triples: &[(UserIdx, ItemIdx, ItemIdx)],
    model: &Model,
    train: &InteractionDataset,
) -> Result<(f64, Tape)> {
    let mut tape = Tape::new();
    let mut cache = Cache::new(model, train);
    let mut terms = Vec::with_capacity(triples.len());
    for &(u, vp, vn) in triples {
        if !train.contains(u, vp) || train.contains(u, vn) {
            return Err(Error::InvalidTriple(format!("({u}, {vp}, {vn})")));
        }
        let s = cache.user(&mut tape, u)?;
        let zp = cache.behaviour(&mut tape, vp)?;
        let zn = cache.behaviour(&mut tape, vn)?;
        terms.push(bpr_term(&mut tape, s, zp, zn)?);
    }
    let sum = tape.sum_scalars(&terms);
    let loss = tape.scale(sum, -1.0);
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite(String::from("matrix-factorization loss")));
    }
    Ok((value, tape))
}
