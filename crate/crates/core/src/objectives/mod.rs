//! The seven training losses and their hardness-adaptive margins.
//!
//! Every loss is recorded on the caller's tape. Hardness scores enter only
//! as plain `f64` margins, so no gradient can reach them.

use std::fmt;

use crate::diffmath::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Lower bound applied to `ŷ` (and `1 − ŷ`) before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginConfig {
    pub delta_s: f64,
    pub delta_u: f64,
    pub delta_l: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig {
            delta_s: 1.0,
            delta_u: 1.5,
            delta_l: 0.5,
        }
    }
}

impl MarginConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.delta_s > 0.0
            && self.delta_l > 0.0
            && self.delta_l <= self.delta_u
            && self.delta_u.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "margins need 0 < delta_l <= delta_u and delta_s > 0, got {self:?}"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarginMode {
    /// Combines a positive and a negative hardness: `a⁺ + a⁻`.
    Sum,
    /// Combines two same-polarity hardness scores: `a_i − a_k`.
    Diff,
}

/// `clamp(combined · δs, δl, δu)`.
pub fn adaptive_margin(a: f64, b: f64, mode: MarginMode, cfg: &MarginConfig) -> f64 {
    let combined = match mode {
        MarginMode::Sum => a + b,
        MarginMode::Diff => a - b,
    };
    (combined * cfg.delta_s).clamp(cfg.delta_l, cfg.delta_u)
}

/// Cosine distance `1 − a·b / (‖a‖‖b‖)`.
pub fn distance(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let na = tape.l2_norm(a);
    let nb = tape.l2_norm(b);
    if tape.value(na).data()[0] == 0.0 || tape.value(nb).data()[0] == 0.0 {
        return Err(Error::Domain("distance to a zero-norm representation".into()));
    }
    let dot = tape.dot(a, b)?;
    let norms = tape.mul(na, nb)?;
    let cos = tape.div(dot, norms)?;
    let neg = tape.scale(cos, -1.0);
    Ok(tape.add_scalar(neg, 1.0))
}

fn hinge(tape: &mut Tape, closer: Var, farther: Var, margin: f64) -> Result<Var> {
    let gap = tape.sub(closer, farther)?;
    let shifted = tape.add_scalar(gap, margin);
    Ok(tape.relu(shifted))
}

fn sum_terms(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    if terms.is_empty() {
        return Ok(tape.scalar(0.0));
    }
    let v = tape.concat(terms)?;
    Ok(tape.sum(v))
}

fn distances(tape: &mut Tape, query: Var, reps: &[(Var, f64)]) -> Result<Vec<Var>> {
    reps.iter().map(|(u, _)| distance(tape, query, *u)).collect()
}

/// `Σ_i Σ_j max(d(q,u⁺_i) − d(q,u⁻_j) + δ*_ij, 0)` with sum-mode margins.
pub fn loss_ccl(
    tape: &mut Tape,
    query: Var,
    positives: &[(Var, f64)],
    negatives: &[(Var, f64)],
    cfg: &MarginConfig,
) -> Result<Var> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Contract("loss_ccl needs at least one positive and one negative".into()));
    }
    let dp = distances(tape, query, positives)?;
    let dn = distances(tape, query, negatives)?;
    let mut terms = Vec::with_capacity(dp.len() * dn.len());
    for (i, (_, ap)) in positives.iter().enumerate() {
        for (j, (_, an)) in negatives.iter().enumerate() {
            let margin = adaptive_margin(*ap, *an, MarginMode::Sum, cfg);
            terms.push(hinge(tape, dp[i], dn[j], margin)?);
        }
    }
    sum_terms(tape, &terms)
}

/// Ranks positives against each other: for `a⁺_k < a⁺_i`, the better
/// positive `i` must sit closer to the query than `k`.
pub fn loss_ccl_pos(
    tape: &mut Tape,
    query: Var,
    positives: &[(Var, f64)],
    cfg: &MarginConfig,
) -> Result<Var> {
    let d = distances(tape, query, positives)?;
    let mut terms = Vec::new();
    for (i, (_, ai)) in positives.iter().enumerate() {
        for (k, (_, ak)) in positives.iter().enumerate() {
            if ak < ai {
                let margin = adaptive_margin(*ai, *ak, MarginMode::Diff, cfg);
                terms.push(hinge(tape, d[i], d[k], margin)?);
            }
        }
    }
    sum_terms(tape, &terms)
}

/// Ranks negatives against each other: for `a⁻_k < a⁻_i`, the harder
/// negative `i` must sit farther from the query than `k`.
pub fn loss_ccl_neg(
    tape: &mut Tape,
    query: Var,
    negatives: &[(Var, f64)],
    cfg: &MarginConfig,
) -> Result<Var> {
    let d = distances(tape, query, negatives)?;
    let mut terms = Vec::new();
    for (i, (_, ai)) in negatives.iter().enumerate() {
        for (k, (_, ak)) in negatives.iter().enumerate() {
            if ak < ai {
                let margin = adaptive_margin(*ai, *ak, MarginMode::Diff, cfg);
                terms.push(hinge(tape, d[k], d[i], margin)?);
            }
        }
    }
    sum_terms(tape, &terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CeVariant {
    Query,
    Positive,
    /// Keeps only clicked targets and supervises them toward 0.
    Negative,
}

/// Summed binary cross-entropy of a prediction vector against labels.
pub fn loss_ce(tape: &mut Tape, preds: Var, labels: &[bool], variant: CeVariant) -> Result<Var> {
    let n = tape.value(preds).len();
    if n != labels.len() {
        return Err(Error::shape("loss_ce", tape.value(preds).shape(), &[labels.len()]));
    }
    let clicked: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let (as_one, as_zero): (Vec<usize>, Vec<usize>) = match variant {
        CeVariant::Query | CeVariant::Positive => {
            (clicked, (0..n).filter(|&i| !labels[i]).collect())
        }
        CeVariant::Negative => (Vec::new(), clicked),
    };
    let p = tape.clamp(preds, PROB_FLOOR, 1.0 - PROB_FLOOR);
    let mut parts = Vec::with_capacity(2);
    if !as_one.is_empty() {
        let g = tape.gather(p, &as_one)?;
        let l = tape.log(g)?;
        parts.push(tape.sum(l));
    }
    if !as_zero.is_empty() {
        let g = tape.gather(p, &as_zero)?;
        let neg = tape.scale(g, -1.0);
        let q = tape.add_scalar(neg, 1.0);
        let l = tape.log(q)?;
        parts.push(tape.sum(l));
    }
    let total = sum_terms(tape, &parts)?;
    Ok(tape.scale(total, -1.0))
}

/// `−Σ_u log(S⁺_u / (S⁺_u + S⁻_u))`, `S^± = Σ e^ŷ` over the user's clicked
/// or unclicked targets.
///
/// `groups` lists, per user, indices into `preds`/`labels`. Users without a
/// clicked target contribute nothing.
pub fn loss_cui(tape: &mut Tape, preds: Var, labels: &[bool], groups: &[Vec<usize>]) -> Result<Var> {
    let n = tape.value(preds).len();
    if n != labels.len() {
        return Err(Error::shape("loss_cui", tape.value(preds).shape(), &[labels.len()]));
    }
    let mut terms = Vec::with_capacity(groups.len());
    for group in groups {
        if let Some(&bad) = group.iter().find(|&&i| i >= n) {
            return Err(Error::Index { what: "loss_cui target", index: bad, bound: n });
        }
        let pos: Vec<usize> = group.iter().copied().filter(|&i| labels[i]).collect();
        if pos.is_empty() {
            continue;
        }
        let e_all = {
            let g = tape.gather(preds, group)?;
            let e = tape.exp(g);
            tape.sum(e)
        };
        let e_pos = {
            let g = tape.gather(preds, &pos)?;
            let e = tape.exp(g);
            tape.sum(e)
        };
        let log_all = tape.log(e_all)?;
        let log_pos = tape.log(e_pos)?;
        terms.push(tape.sub(log_all, log_pos)?);
    }
    sum_terms(tape, &terms)
}

/// Names of the seven terms in log order.
pub const TERM_NAMES: [&str; 7] = ["l_ccl", "l_ccl+", "l_ccl-", "l_ce", "l_ce+", "l_ce-", "l_cui"];

/// The seven loss terms and their unweighted sum, as tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct LossBreakdown {
    pub l_ccl: Var,
    pub l_ccl_pos: Var,
    pub l_ccl_neg: Var,
    pub l_ce: Var,
    pub l_ce_pos: Var,
    pub l_ce_neg: Var,
    pub l_cui: Var,
    pub total: Var,
}

/// Sums the terms given in [`TERM_NAMES`] order.
pub fn total_loss(tape: &mut Tape, terms: [Var; 7]) -> Result<LossBreakdown> {
    let total = sum_terms(tape, &terms)?;
    let [l_ccl, l_ccl_pos, l_ccl_neg, l_ce, l_ce_pos, l_ce_neg, l_cui] = terms;
    Ok(LossBreakdown {
        l_ccl,
        l_ccl_pos,
        l_ccl_neg,
        l_ce,
        l_ce_pos,
        l_ce_neg,
        l_cui,
        total,
    })
}

impl LossBreakdown {
    pub fn values(&self, tape: &Tape) -> LossValues {
        let v = |x: Var| tape.value(x).data()[0];
        LossValues {
            terms: [
                v(self.l_ccl),
                v(self.l_ccl_pos),
                v(self.l_ccl_neg),
                v(self.l_ce),
                v(self.l_ce_pos),
                v(self.l_ce_neg),
                v(self.l_cui),
            ],
            total: v(self.total),
        }
    }
}

/// Plain-number snapshot of a [`LossBreakdown`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    /// In [`TERM_NAMES`] order.
    pub terms: [f64; 7],
    pub total: f64,
}

impl LossValues {
    pub fn get(&self, name: &str) -> Option<f64> {
        TERM_NAMES.iter().position(|n| *n == name).map(|i| self.terms[i])
    }

    /// Elementwise mean of several snapshots; `None` when empty.
    pub fn mean(items: &[LossValues]) -> Option<LossValues> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let mut out = LossValues::default();
        for it in items {
            for (o, t) in out.terms.iter_mut().zip(&it.terms) {
                *o += t / n;
            }
            out.total += it.total / n;
        }
        Some(out)
    }
}

impl fmt::Display for LossValues {
    /// `total l_ccl l_ccl+ l_ccl- l_ce l_ce+ l_ce- l_cui`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.total)?;
        for t in &self.terms {
            write!(f, " {t}")?;
        }
        Ok(())
    }
}

/// A `[dim]` constant, handy for feeding fixed representations to the losses.
pub fn constant_vector(tape: &mut Tape, values: &[f64]) -> Var {
    tape.constant(Tensor::vector(values.to_vec()))
}

#[cfg(test)]
mod tests;
