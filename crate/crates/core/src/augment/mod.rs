//! Replacement augmentation with hardness bookkeeping.
//!
//! A sample replaces `N_r` history positions with pool items. Negatives
//! replace the most important behaviors with related substitutes; positives
//! replace the least important ones with unrelated substitutes. The hardness
//! score measures how much importance-relatedness mass (or, for positives,
//! unimportance-unrelatedness mass) was swapped out.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::data::{ItemId, UserId};
use crate::diffmath::{softmax_slice, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Rejection draws per position before sampling the eligible items directly.
pub const MAX_REJECTIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Random,
    Harder,
    Easier,
    Easy2Hard,
    Hard2Easy,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Random,
        Strategy::Harder,
        Strategy::Easier,
        Strategy::Easy2Hard,
        Strategy::Hard2Easy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Harder => "harder",
            Strategy::Easier => "easier",
            Strategy::Easy2Hard => "easy2hard",
            Strategy::Hard2Easy => "hard2easy",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!(
                    "unknown strategy `{s}`; expected one of: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Sampling strategy plus the fraction of training elapsed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrategyState {
    strategy: Strategy,
    progress: f64,
}

impl StrategyState {
    pub fn new(strategy: Strategy) -> Self {
        StrategyState {
            strategy,
            progress: 0.0,
        }
    }

    /// A state pinned at `progress`, for probing a schedule directly.
    pub fn at(strategy: Strategy, progress: f64) -> Result<Self> {
        let mut s = StrategyState::new(strategy);
        s.advance_to(progress)?;
        Ok(s)
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn progress(&self) -> f64 {
        self.progress
    }

    /// Moves progress forward; it may never decrease or leave `[0, 1]`.
    pub fn advance_to(&mut self, progress: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&progress) || progress < self.progress {
            return Err(Error::Contract(format!(
                "progress must be non-decreasing within [0, 1]: {} -> {progress}",
                self.progress
            )));
        }
        self.progress = progress;
        Ok(())
    }
}

/// One swapped position: `history[position]` becomes `pool[substitute]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Replacement {
    pub position: usize,
    pub substitute: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSequence {
    pub polarity: Polarity,
    pub replacements: Vec<Replacement>,
    pub hardness: f64,
    /// The history after replacement.
    pub item_ids: Vec<ItemId>,
}

fn hardness(
    alpha: &[f64],
    beta: &Tensor,
    replacements: &[Replacement],
    sign: f64,
) -> Result<f64> {
    if replacements.is_empty() {
        return Err(Error::Contract("hardness of an empty replacement set".into()));
    }
    if beta.rank() != 2 || beta.rows() != alpha.len() {
        return Err(Error::Contract(format!(
            "beta must be {}×N_z, got {:?}",
            alpha.len(),
            beta.shape()
        )));
    }
    let signed = |xs: &[f64]| xs.iter().map(|x| sign * x).collect::<Vec<_>>();
    let importance = softmax_slice(&signed(alpha));
    let mut total = 0.0;
    for r in replacements {
        if r.position >= alpha.len() || r.substitute >= beta.cols() {
            return Err(Error::Index {
                what: "replacement",
                index: r.position.max(r.substitute),
                bound: alpha.len().min(beta.cols()),
            });
        }
        let related = softmax_slice(&signed(beta.row(r.position)));
        total += importance[r.position] * related[r.substitute];
    }
    Ok(total)
}

/// `a⁻ = Σ softmax(α)[m]·softmax(β[m])[n]` over the replaced `(m, n)`.
pub fn hardness_negative(alpha: &[f64], beta: &Tensor, replacements: &[Replacement]) -> Result<f64> {
    hardness(alpha, beta, replacements, 1.0)
}

/// As [`hardness_negative`] with both score vectors negated.
pub fn hardness_positive(alpha: &[f64], beta: &Tensor, replacements: &[Replacement]) -> Result<f64> {
    hardness(alpha, beta, replacements, -1.0)
}

pub fn hardness_for(
    polarity: Polarity,
    alpha: &[f64],
    beta: &Tensor,
    replacements: &[Replacement],
) -> Result<f64> {
    match polarity {
        Polarity::Negative => hardness_negative(alpha, beta, replacements),
        Polarity::Positive => hardness_positive(alpha, beta, replacements),
    }
}

/// Draw probabilities over `scores` for one polarity under a strategy.
///
/// The hard weights are those that maximize expected hardness of the given
/// polarity; easy weights are the mirror image.
pub fn sampling_weights(scores: &[f64], polarity: Polarity, state: &StrategyState) -> Vec<f64> {
    let n = scores.len();
    if n == 0 {
        return Vec::new();
    }
    if state.strategy == Strategy::Random {
        return vec![1.0 / n as f64; n];
    }
    let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
    let (hard, easy) = match polarity {
        Polarity::Negative => (softmax_slice(scores), softmax_slice(&negated)),
        Polarity::Positive => (softmax_slice(&negated), softmax_slice(scores)),
    };
    let t = state.progress;
    let w_hard = match state.strategy {
        Strategy::Random => unreachable!(),
        Strategy::Harder => 1.0,
        Strategy::Easier => 0.0,
        Strategy::Easy2Hard => t,
        Strategy::Hard2Easy => 1.0 - t,
    };
    let mut w: Vec<f64> = hard
        .iter()
        .zip(&easy)
        .map(|(h, e)| w_hard * h + (1.0 - w_hard) * e)
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Positions eligible for replacement, ranked by importance with ties to
/// the lower index: the `⌈N/2⌉` least important for positives, most
/// important for negatives.
pub fn candidate_positions(alpha: &[f64], polarity: Polarity) -> Vec<usize> {
    let mut order: Vec<usize> = (0..alpha.len()).collect();
    match polarity {
        Polarity::Positive => order.sort_by(|&a, &b| alpha[a].total_cmp(&alpha[b]).then(a.cmp(&b))),
        Polarity::Negative => order.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b))),
    }
    order.truncate(alpha.len().div_ceil(2));
    order
}

/// Replacements per sample for a history of length `n`.
pub fn replacement_count(n: usize) -> usize {
    n.div_ceil(2).div_ceil(2)
}

/// Weighted draw of `k` distinct indices, renormalizing after each pick.
fn draw_without_replacement(weights: &[f64], k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let mut w: Vec<f64> = remaining.iter().map(|&i| weights[i]).collect();
        // all remaining mass underflowed: fall back to uniform
        if w.iter().all(|&x| x == 0.0) {
            w.fill(1.0);
        }
        let dist = WeightedIndex::new(&w)
            .map_err(|e| Error::Augmentation(format!("position weights: {e}")))?;
        picked.push(remaining.remove(dist.sample(rng)));
    }
    Ok(picked)
}

/// Draws from `weights` restricted to pool items that are neither in the
/// history nor already chosen. `None` when no such item carries weight.
fn draw_eligible(
    weights: &[f64],
    pool: &[ItemId],
    in_history: &HashSet<ItemId>,
    chosen: &HashSet<ItemId>,
    rng: &mut Rng,
) -> Option<usize> {
    let masked: Vec<f64> = weights
        .iter()
        .zip(pool)
        .map(|(&w, item)| if in_history.contains(item) || chosen.contains(item) { 0.0 } else { w })
        .collect();
    WeightedIndex::new(&masked).ok().map(|d| d.sample(rng))
}

/// Builds `n` augmented variants of one history.
///
/// `alpha` holds the detached importance scores of `history`; `beta` the
/// `N_u×N_z` detached relatedness of each history item to each pool item.
#[allow(clippy::too_many_arguments)]
pub fn construct(
    history: &[ItemId],
    alpha: &[f64],
    beta: &Tensor,
    pool: &[ItemId],
    polarity: Polarity,
    n: usize,
    state: &StrategyState,
    rng: &mut Rng,
) -> Result<Vec<AugmentedSequence>> {
    let n_u = history.len();
    if n_u < 2 {
        return Err(Error::Contract(format!(
            "augmentation needs at least 2 behaviors, got {n_u}"
        )));
    }
    if alpha.len() != n_u || beta.shape() != [n_u, pool.len()] {
        return Err(Error::Contract(format!(
            "scores do not match history of {n_u} and pool of {}",
            pool.len()
        )));
    }
    let in_history: HashSet<ItemId> = history.iter().copied().collect();
    let candidates = candidate_positions(alpha, polarity);
    let cand_scores: Vec<f64> = candidates.iter().map(|&p| alpha[p]).collect();
    let n_r = replacement_count(n_u);

    let sign = match polarity {
        Polarity::Negative => 1.0,
        Polarity::Positive => -1.0,
    };
    let signed = |xs: &[f64]| xs.iter().map(|x| sign * x).collect::<Vec<_>>();
    let importance = softmax_slice(&signed(alpha));
    let position_weights = sampling_weights(&cand_scores, polarity, state);
    // per-row draw weights and hardness factors, filled on first use
    let mut rows: Vec<Option<(Vec<f64>, WeightedIndex<f64>, Vec<f64>)>> = vec![None; n_u];

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut positions: Vec<usize> = draw_without_replacement(&position_weights, n_r, rng)?
            .into_iter()
            .map(|c| candidates[c])
            .collect();
        positions.sort_unstable();

        let mut item_ids = history.to_vec();
        let mut chosen: HashSet<ItemId> = HashSet::new();
        let mut replacements = Vec::with_capacity(n_r);
        let mut hardness = 0.0;
        for &position in &positions {
            if rows[position].is_none() {
                let weights = sampling_weights(beta.row(position), polarity, state);
                let dist = WeightedIndex::new(&weights)
                    .map_err(|e| Error::Augmentation(format!("substitute weights: {e}")))?;
                let related = softmax_slice(&signed(beta.row(position)));
                rows[position] = Some((weights, dist, related));
            }
            let (weights, dist, related) = rows[position].as_ref().unwrap();
            let mut accepted = None;
            for _ in 0..MAX_REJECTIONS {
                let k = dist.sample(rng);
                if !in_history.contains(&pool[k]) && !chosen.contains(&pool[k]) {
                    accepted = Some(k);
                    break;
                }
            }
            let k = match accepted {
                Some(k) => k,
                None => draw_eligible(weights, pool, &in_history, &chosen, rng).ok_or_else(|| {
                    Error::Augmentation(format!(
                        "no substitute outside the history for position {position} \
                         (pool too small)"
                    ))
                })?,
            };
            chosen.insert(pool[k]);
            item_ids[position] = pool[k];
            replacements.push(Replacement {
                position,
                substitute: k,
            });
            hardness += importance[position] * related[k];
        }
        out.push(AugmentedSequence {
            polarity,
            replacements,
            hardness,
            item_ids,
        });
    }
    Ok(out)
}

/// One `inspect` line: `user_id polarity hardness pos:item,pos:item,...`,
/// where `item` is the substitute's item id.
pub fn dump_line(user: UserId, aug: &AugmentedSequence, pool: &[ItemId]) -> String {
    let swaps: Vec<String> = aug
        .replacements
        .iter()
        .map(|r| format!("{}:{}", r.position, pool[r.substitute]))
        .collect();
    format!("{user} {} {} {}", aug.polarity, aug.hardness, swaps.join(","))
}

/// Mean, min and max hardness of a set of samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HardnessSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl HardnessSummary {
    pub fn of<'a>(samples: impl IntoIterator<Item = &'a AugmentedSequence>) -> Option<Self> {
        let h: Vec<f64> = samples.into_iter().map(|a| a.hardness).collect();
        if h.is_empty() {
            return None;
        }
        Some(HardnessSummary {
            count: h.len(),
            mean: h.iter().sum::<f64>() / h.len() as f64,
            min: h.iter().copied().fold(f64::INFINITY, f64::min),
            max: h.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}
