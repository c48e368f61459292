//! Interaction logs, item features, and training-instance construction.

mod io;
mod synthetic;

use std::collections::HashSet;

use rand::Rng as _;

use crate::error::{Error, Result};

pub use io::{load_interactions, read_interactions, write_interactions, InteractionLog};
pub use synthetic::{generate_synthetic, SyntheticCorpus, SyntheticSpec};

pub type UserId = u64;
pub type ItemId = usize;

/// Fixed (non-trainable) feature vectors, one row per item.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    n_items: usize,
    dim: usize,
    rows: Vec<f64>,
}

impl FeatureTable {
    pub fn new(n_items: usize, dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Contract("feature dim must be at least 1".into()));
        }
        if rows.len() != n_items * dim {
            return Err(Error::shape("feature table", &[n_items, dim], &[rows.len()]));
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite feature value in row {}",
                pos / dim
            )));
        }
        Ok(FeatureTable { n_items, dim, rows })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, item: ItemId) -> Result<&[f64]> {
        if item >= self.n_items {
            return Err(Error::Index {
                what: "item",
                index: item,
                bound: self.n_items,
            });
        }
        Ok(&self.rows[item * self.dim..(item + 1) * self.dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }
}

/// One logged exposure of an item to a user.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub timestamp: i64,
    pub clicked: bool,
}

/// A clicked-item history plus the exposures scored against it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingInstance {
    pub user: UserId,
    /// Clicked items, oldest first.
    pub history: Vec<ItemId>,
    /// `(item, clicked)` pairs to score.
    pub targets: Vec<(ItemId, bool)>,
}

/// Windows a time-sorted log into instances.
///
/// Each exposure is scored against the clicks strictly before it, truncated
/// to the `n_max` most recent. Consecutive exposures that see the same
/// history share one instance. Exposures with no prior click are dropped, as
/// are targets that re-expose an item already in the history.
pub fn build_instances(log: &[Interaction], n_max: usize) -> Vec<TrainingInstance> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < log.len() {
        let user = log[i].user;
        let mut j = i;
        while j < log.len() && log[j].user == user {
            j += 1;
        }
        let mut clicks: Vec<ItemId> = Vec::new();
        let mut current: Option<TrainingInstance> = None;
        for rec in &log[i..j] {
            if !clicks.is_empty() {
                let start = clicks.len().saturating_sub(n_max);
                let history = &clicks[start..];
                if !history.contains(&rec.item) {
                    let inst = current.get_or_insert_with(|| TrainingInstance {
                        user,
                        history: history.to_vec(),
                        targets: Vec::new(),
                    });
                    inst.targets.push((rec.item, rec.clicked));
                }
            }
            if rec.clicked {
                if let Some(done) = current.take() {
                    out.push(done);
                }
                clicks.push(rec.item);
            }
        }
        if let Some(done) = current.take() {
            out.push(done);
        }
        i = j;
    }
    out
}

/// Splits off each user's most recent target for evaluation.
///
/// Returns `(train, eval)`; every eval instance carries exactly one target.
pub fn split_leave_latest(
    instances: &[TrainingInstance],
) -> (Vec<TrainingInstance>, Vec<TrainingInstance>) {
    let mut last_of_user = std::collections::HashMap::new();
    for (idx, inst) in instances.iter().enumerate() {
        last_of_user.insert(inst.user, idx);
    }
    let held: HashSet<usize> = last_of_user.values().copied().collect();
    let mut train = Vec::with_capacity(instances.len());
    let mut eval = Vec::with_capacity(held.len());
    for (idx, inst) in instances.iter().enumerate() {
        if !held.contains(&idx) {
            train.push(inst.clone());
            continue;
        }
        let mut rest = inst.clone();
        if let Some(target) = rest.targets.pop() {
            eval.push(TrainingInstance {
                user: inst.user,
                history: inst.history.clone(),
                targets: vec![target],
            });
        }
        if !rest.targets.is_empty() {
            train.push(rest);
        }
    }
    (train, eval)
}

/// Draws `n_z` distinct items uniformly from `[0, n_items)` minus `exclude`.
pub fn sample_substitute_pool(
    n_items: usize,
    n_z: usize,
    exclude: &HashSet<ItemId>,
    rng: &mut crate::rng::Rng,
) -> Result<Vec<ItemId>> {
    let excluded = exclude.iter().filter(|i| **i < n_items).count();
    let available = n_items - excluded;
    if n_z > available {
        return Err(Error::Capacity {
            requested: n_z,
            available,
        });
    }
    if exclude.is_empty() {
        return Ok(rand::seq::index::sample(rng, n_items, n_z).into_vec());
    }
    let candidates: Vec<ItemId> = (0..n_items).filter(|i| !exclude.contains(i)).collect();
    // partial Fisher-Yates
    let mut candidates = candidates;
    for k in 0..n_z {
        let pick = rng.random_range(k..candidates.len());
        candidates.swap(k, pick);
    }
    candidates.truncate(n_z);
    Ok(candidates)
}
