//! Trainable parameters and the forward computations: pairwise relevance,
//! behavior importance, substitute relatedness, the sequence encoder, and the
//! CTR head.

mod codec;

use std::collections::HashMap;

use rand::Rng as _;

use crate::data::{FeatureTable, ItemId};
use crate::diffmath::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub use codec::{read_tensors, write_tensors};

/// Names of the parameter tensors, in checkpoint order.
pub const PARAM_NAMES: [&str; 10] = [
    "W1", "W2", "W3", "W4", "mlp0.w", "mlp0.b", "mlp1.w", "mlp1.b", "mlp2.w", "mlp2.b",
];

/// `W1..W4` are `dim×dim`; the head is `3d→d→d/2→1` with relu, relu, sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    dim: usize,
    tensors: Vec<Tensor>,
}

/// Total scalar parameter count for a given feature dimension.
pub fn param_count(dim: usize) -> usize {
    let half = dim / 2;
    4 * dim * dim + (3 * dim * dim + dim) + (dim * half + half) + (half + 1)
}

fn layer_shapes(dim: usize) -> Vec<Vec<usize>> {
    let half = dim / 2;
    vec![
        vec![dim, dim],
        vec![dim, dim],
        vec![dim, dim],
        vec![dim, dim],
        vec![3 * dim, dim],
        vec![dim],
        vec![dim, half],
        vec![half],
        vec![half, 1],
        vec![1],
    ]
}

impl ModelParams {
    /// Uniform(±1/√dim) weights, zero biases.
    pub fn init(dim: usize, rng: &mut crate::rng::Rng) -> Result<Self> {
        Self::check_dim(dim)?;
        let bound = 1.0 / (dim as f64).sqrt();
        let tensors = layer_shapes(dim)
            .into_iter()
            .map(|shape| {
                let mut t = Tensor::zeros(&shape);
                if shape.len() == 2 {
                    for v in t.data_mut() {
                        *v = rng.random_range(-bound..bound);
                    }
                }
                t
            })
            .collect();
        Ok(ModelParams { dim, tensors })
    }

    /// Every parameter zero; mostly useful for hand-set tests.
    pub fn zeros(dim: usize) -> Result<Self> {
        Self::check_dim(dim)?;
        let tensors = layer_shapes(dim).iter().map(|s| Tensor::zeros(s)).collect();
        Ok(ModelParams { dim, tensors })
    }

    /// Builds parameters from tensors in [`PARAM_NAMES`] order.
    pub fn from_tensors(dim: usize, tensors: Vec<Tensor>) -> Result<Self> {
        Self::check_dim(dim)?;
        let shapes = layer_shapes(dim);
        if tensors.len() != shapes.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((t, want), name) in tensors.iter().zip(&shapes).zip(PARAM_NAMES) {
            if t.shape() != want.as_slice() {
                return Err(Error::Contract(format!(
                    "{name}: expected shape {want:?}, got {:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Domain(format!("{name} holds non-finite values")));
            }
        }
        Ok(ModelParams { dim, tensors })
    }

    fn check_dim(dim: usize) -> Result<()> {
        if dim < 2 || dim % 2 != 0 {
            return Err(Error::Config(format!("model dim must be even and ≥ 2, got {dim}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        PARAM_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        PARAM_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| &mut self.tensors[i])
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every tensor on `tape` as a trainable leaf.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        let vars: Vec<Var> = self.tensors.iter().map(|t| tape.param(t.clone())).collect();
        ParamVars { vars }
    }

    /// `CCLM` magic, `u32` dim, then every tensor in [`PARAM_NAMES`] order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"CCLM");
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        write_tensors(&mut out, &self.tensors);
        out
    }

    /// Parses a checkpoint; returns the parameters and any trailing bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, &[u8])> {
        if bytes.len() < 8 || &bytes[..4] != b"CCLM" {
            return Err(Error::Parse {
                source_name: "checkpoint".into(),
                line: 0,
                message: "missing CCLM header".into(),
            });
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let (tensors, rest) = read_tensors(&bytes[8..], PARAM_NAMES.len())?;
        Ok((ModelParams::from_tensors(dim, tensors)?, rest))
    }
}

/// Tape handles for one registration of [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    pub fn all(&self) -> &[Var] {
        &self.vars
    }
    pub fn w1(&self) -> Var {
        self.vars[0]
    }
    pub fn w2(&self) -> Var {
        self.vars[1]
    }
    pub fn w3(&self) -> Var {
        self.vars[2]
    }
    pub fn w4(&self) -> Var {
        self.vars[3]
    }
    fn layer(&self, i: usize) -> (Var, Var) {
        (self.vars[4 + 2 * i], self.vars[5 + 2 * i])
    }

    /// Collects accumulated gradients, zero-filled where none arrived.
    pub fn grads(&self, tape: &Tape) -> Vec<Tensor> {
        self.vars
            .iter()
            .map(|v| {
                tape.grad(*v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(tape.value(*v).shape()))
            })
            .collect()
    }
}

/// Projections `v·W1 … v·W4` for a set of items, recorded once per batch.
///
/// Row `r` of each projection is exactly `features.row(item) · W` for the
/// item mapped to `r`, so gathering rows is equivalent to projecting the
/// gathered features.
#[derive(Clone, Debug)]
pub struct ItemProjections {
    row_of: HashMap<ItemId, usize>,
    pub p1: Var,
    pub p2: Var,
    pub p3: Var,
    pub p4: Var,
}

impl ItemProjections {
    pub fn new(
        tape: &mut Tape,
        params: &ParamVars,
        features: &FeatureTable,
        items: impl IntoIterator<Item = ItemId>,
    ) -> Result<Self> {
        let weights = [params.w1(), params.w2(), params.w3(), params.w4()];
        Self::from_weights(tape, weights, features, items)
    }

    /// Same as [`ItemProjections::new`] with explicit `[W1, W2, W3, W4]` handles.
    pub fn from_weights(
        tape: &mut Tape,
        weights: [Var; 4],
        features: &FeatureTable,
        items: impl IntoIterator<Item = ItemId>,
    ) -> Result<Self> {
        let mut row_of = HashMap::new();
        let mut order = Vec::new();
        for item in items {
            if let std::collections::hash_map::Entry::Vacant(e) = row_of.entry(item) {
                e.insert(order.len());
                order.push(item);
            }
        }
        let mut data = Vec::with_capacity(order.len() * features.dim());
        for item in &order {
            data.extend_from_slice(features.row(*item)?);
        }
        let v = tape.constant(Tensor::new(vec![order.len(), features.dim()], data)?);
        Ok(ItemProjections {
            row_of,
            p1: tape.matmul(v, weights[0])?,
            p2: tape.matmul(v, weights[1])?,
            p3: tape.matmul(v, weights[2])?,
            p4: tape.matmul(v, weights[3])?,
        })
    }

    pub fn rows(&self, items: &[ItemId]) -> Result<Vec<usize>> {
        items
            .iter()
            .map(|i| {
                self.row_of.get(i).copied().ok_or(Error::Index {
                    what: "projected item",
                    index: *i,
                    bound: self.row_of.len(),
                })
            })
            .collect()
    }
}

/// Pairwise relevance and importance scores of one behavior sequence.
#[derive(Clone, Debug)]
pub struct ScoredSequence {
    pub items: Vec<ItemId>,
    rows: Vec<usize>,
    /// `N×N`, entry `(i, j) = (v_i·W1)·(v_j·W2)`.
    pub alpha_pair: Var,
    /// Row sums of `alpha_pair`.
    pub alpha: Var,
    /// Stop-gradient copy of `alpha` for hardness scores and margins.
    pub detached_alpha: Var,
}

impl ScoredSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub fn score_sequence(
    tape: &mut Tape,
    proj: &ItemProjections,
    history: &[ItemId],
) -> Result<ScoredSequence> {
    if history.is_empty() {
        return Err(Error::Contract("cannot score an empty history".into()));
    }
    let rows = proj.rows(history)?;
    let left = tape.gather(proj.p1, &rows)?;
    let right = tape.gather(proj.p2, &rows)?;
    let right_t = tape.transpose(right)?;
    let alpha_pair = tape.matmul(left, right_t)?;
    let alpha = tape.row_sum(alpha_pair)?;
    let detached_alpha = tape.detach(alpha);
    Ok(ScoredSequence {
        items: history.to_vec(),
        rows,
        alpha_pair,
        alpha,
        detached_alpha,
    })
}

/// Relatedness `β[t][k] = (v_t·W1)·(z_k·W2)` of every pool item to every
/// history item. Returned as plain values: it only feeds augmentation and
/// margins, never the optimized graph.
pub fn score_substitutes(
    tape: &Tape,
    proj: &ItemProjections,
    scored: &ScoredSequence,
    pool: &[ItemId],
) -> Result<Tensor> {
    if pool.is_empty() {
        return Err(Error::Contract("substitute pool is empty".into()));
    }
    let p1 = tape.value(proj.p1);
    let p2 = tape.value(proj.p2);
    let pool_rows = proj.rows(pool)?;
    let mut beta = Vec::with_capacity(scored.len() * pool.len());
    for &r in &scored.rows {
        let left = p1.row(r);
        for &k in &pool_rows {
            beta.push(left.iter().zip(p2.row(k)).map(|(a, b)| a * b).sum());
        }
    }
    Tensor::new(vec![scored.len(), pool.len()], beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Query,
    Positive(usize),
    Negative(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct UserRepresentation {
    /// Shape `[dim]`.
    pub vector: Var,
    pub provenance: Provenance,
}

/// Importance-weighted pooling of relevance-mixed item projections.
///
/// `v̂_t = Σ_i softmax_i(α_t·)·(v_i·W3)`, `u = Σ_t softmax_t(α)·v̂_t`. Both
/// softmaxes read the non-detached scores, so gradients reach `W1`/`W2`.
pub fn encode(
    tape: &mut Tape,
    proj: &ItemProjections,
    scored: &ScoredSequence,
    provenance: Provenance,
) -> Result<UserRepresentation> {
    let n = scored.len();
    let values = tape.gather(proj.p3, &scored.rows)?;
    let mix = tape.softmax(scored.alpha_pair)?;
    let mixed = tape.matmul(mix, values)?;
    let weights = tape.softmax(scored.alpha)?;
    let weights = tape.reshape(weights, &[1, n])?;
    let pooled = tape.matmul(weights, mixed)?;
    let dim = tape.value(pooled).cols();
    let vector = tape.reshape(pooled, &[dim])?;
    Ok(UserRepresentation { vector, provenance })
}

/// CTR predictions for many `(representation, target item)` pairs at once.
///
/// `pairs[m] = (index into reps, item)`; returns a vector of `ŷ ∈ (0,1)`.
pub fn predict_ctr(
    tape: &mut Tape,
    params: &ParamVars,
    proj: &ItemProjections,
    reps: &[Var],
    pairs: &[(usize, ItemId)],
) -> Result<Var> {
    let stacked = tape.vstack(reps)?;
    let rep_idx: Vec<usize> = pairs.iter().map(|(r, _)| *r).collect();
    let items: Vec<ItemId> = pairs.iter().map(|(_, i)| *i).collect();
    let users = tape.gather(stacked, &rep_idx)?;
    let targets = tape.gather(proj.p4, &proj.rows(&items)?)?;
    let cross = tape.mul(users, targets)?;
    let mut h = tape.hstack(&[users, targets, cross])?;
    for layer in 0..3 {
        let (w, b) = params.layer(layer);
        let z = tape.matmul(h, w)?;
        let z = tape.add_bias(z, b)?;
        h = if layer < 2 { tape.relu(z) } else { tape.sigmoid(z) };
    }
    tape.reshape(h, &[pairs.len()])
}

#[cfg(test)]
mod tests;
