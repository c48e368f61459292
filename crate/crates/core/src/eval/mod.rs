//! Ranking metrics and embedding export for case-study plots.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;

use crate::augment::{Strategy, StrategyState};
use crate::data::{sample_substitute_pool, FeatureTable, ItemId, TrainingInstance, UserId};
use crate::diffmath::Tape;
use crate::error::{Error, Result};
use crate::model::{encode, predict_ctr, score_sequence, ItemProjections, ModelParams, Provenance};
use crate::rng::substream;
use crate::train::plan_augmentations;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedTarget {
    pub item: ItemId,
    pub score: f64,
    pub label: bool,
}

/// One user's scored evaluation targets.
#[derive(Clone, Debug, PartialEq)]
pub struct UserPredictions {
    pub user: UserId,
    pub targets: Vec<RankedTarget>,
}

/// Probability that a random clicked target outranks a random unclicked
/// one, ties counting one half. Rank-sum formulation, `O(n log n)`.
pub fn auc(preds: &[(f64, bool)]) -> Result<f64> {
    let n_pos = preds.iter().filter(|p| p.1).count();
    let n_neg = preds.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    if let Some(bad) = preds.iter().find(|p| !p.0.is_finite()) {
        return Err(Error::Domain(format!("non-finite score {}", bad.0)));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].0.total_cmp(&preds[b].0));
    // mid-ranks (1-based) over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && preds[order[j + 1]].0 == preds[order[i]].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * order[i..=j].iter().filter(|&&k| preds[k].1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecisionRecallF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Targets sorted by descending score, ties by ascending item id.
pub fn rank_targets(targets: &[RankedTarget]) -> Vec<RankedTarget> {
    let mut sorted = targets.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.item.cmp(&b.item)));
    sorted
}

/// Macro-averaged Precision@k and Recall@k, and F1 of the two averages.
///
/// Precision divides a user's hits by `min(k, #targets)`. Recall divides by
/// the user's clicked targets and skips users with none.
pub fn precision_recall_f1_at_k(users: &[UserPredictions], k: usize) -> Result<PrecisionRecallF1> {
    let (mut p_sum, mut p_n, mut r_sum, mut r_n) = (0.0, 0usize, 0.0, 0usize);
    for u in users.iter().filter(|u| !u.targets.is_empty()) {
        let ranked = rank_targets(&u.targets);
        let cut = k.min(ranked.len());
        if cut == 0 {
            continue;
        }
        let hits = ranked[..cut].iter().filter(|t| t.label).count() as f64;
        p_sum += hits / cut as f64;
        p_n += 1;
        let clicked = ranked.iter().filter(|t| t.label).count();
        if clicked > 0 {
            r_sum += hits / clicked as f64;
            r_n += 1;
        }
    }
    if p_n == 0 {
        return Err(Error::UndefinedMetric("no user with evaluation targets".into()));
    }
    let precision = p_sum / p_n as f64;
    let recall = if r_n == 0 { 0.0 } else { r_sum / r_n as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PrecisionRecallF1 { precision, recall, f1 })
}

/// CTR scores of every target of every instance, grouped by user in order
/// of first appearance.
pub fn predict_instances(
    params: &ModelParams,
    features: &FeatureTable,
    instances: &[TrainingInstance],
) -> Result<Vec<UserPredictions>> {
    let mut out: Vec<UserPredictions> = Vec::new();
    let mut slot: HashMap<UserId, usize> = HashMap::new();
    for chunk in instances.chunks(64) {
        let mut tape = Tape::new();
        let pv = params.register(&mut tape);
        let items = chunk
            .iter()
            .flat_map(|i| i.history.iter().copied().chain(i.targets.iter().map(|t| t.0)));
        let proj = ItemProjections::new(&mut tape, &pv, features, items)?;
        let mut reps = Vec::with_capacity(chunk.len());
        let mut pairs = Vec::new();
        for (r, inst) in chunk.iter().enumerate() {
            let scored = score_sequence(&mut tape, &proj, &inst.history)?;
            reps.push(encode(&mut tape, &proj, &scored, Provenance::Query)?.vector);
            pairs.extend(inst.targets.iter().map(|t| (r, t.0)));
        }
        if pairs.is_empty() {
            continue;
        }
        let y = predict_ctr(&mut tape, &pv, &proj, &reps, &pairs)?;
        let mut scores = tape.value(y).data().iter();
        for inst in chunk {
            let s = *slot.entry(inst.user).or_insert_with(|| {
                out.push(UserPredictions { user: inst.user, targets: Vec::new() });
                out.len() - 1
            });
            for &(item, label) in &inst.targets {
                let score = *scores.next().expect("one score per pair");
                out[s].targets.push(RankedTarget { item, score, label });
            }
        }
    }
    Ok(out)
}

/// AUC over all targets plus P/R/F1@k; a metric is `None` when undefined.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    pub auc: Option<f64>,
    pub prf: Option<PrecisionRecallF1>,
}

pub fn metrics_from_predictions(users: &[UserPredictions], k: usize) -> EvalMetrics {
    let flat: Vec<(f64, bool)> = users
        .iter()
        .flat_map(|u| u.targets.iter().map(|t| (t.score, t.label)))
        .collect();
    EvalMetrics {
        auc: auc(&flat).ok(),
        prf: precision_recall_f1_at_k(users, k).ok(),
    }
}

/// Scores `instances` and summarizes them. Prediction failures yield empty
/// metrics rather than errors so a diverged model can still be logged.
pub fn evaluate(params: &ModelParams, features: &FeatureTable, instances: &[TrainingInstance], k: usize) -> EvalMetrics {
    match predict_instances(params, features, instances) {
        Ok(users) => metrics_from_predictions(&users, k),
        Err(e) => {
            log::warn!("evaluation failed: {e}");
            EvalMetrics { auc: None, prf: None }
        }
    }
}

/// Settings for [`export_case_study`].
#[derive(Clone, Debug)]
pub struct CaseStudyConfig {
    pub n_users: usize,
    pub n_p: usize,
    pub n_n: usize,
    pub n_z: usize,
    pub strategy: Strategy,
    pub seed: u64,
}

/// Writes the query representation and the augmented positive and negative
/// representations of `n_users` sampled users as CSV rows
/// `user_id,role,hardness,dim_0,…` (hardness empty for queries).
///
/// Each user contributes its longest history. Returns the rows written,
/// excluding the header.
pub fn export_case_study(
    params: &ModelParams,
    features: &FeatureTable,
    instances: &[TrainingInstance],
    cfg: &CaseStudyConfig,
    out: &Path,
) -> Result<usize> {
    let csv = case_study_csv(params, features, instances, cfg)?;
    fs::write(out, &csv.0).map_err(|e| Error::io(out, e))?;
    Ok(csv.1)
}

/// The CSV text of [`export_case_study`] and its data row count.
pub fn case_study_csv(
    params: &ModelParams,
    features: &FeatureTable,
    instances: &[TrainingInstance],
    cfg: &CaseStudyConfig,
) -> Result<(String, usize)> {
    let mut longest: Vec<&TrainingInstance> = Vec::new();
    let mut slot: HashMap<UserId, usize> = HashMap::new();
    for inst in instances.iter().filter(|i| i.history.len() >= 2) {
        match slot.get(&inst.user) {
            Some(&s) if longest[s].history.len() >= inst.history.len() => {}
            Some(&s) => longest[s] = inst,
            None => {
                slot.insert(inst.user, longest.len());
                longest.push(inst);
            }
        }
    }
    if longest.len() < cfg.n_users {
        return Err(Error::Capacity {
            requested: cfg.n_users,
            available: longest.len(),
        });
    }
    let mut picked = sample(&mut substream(cfg.seed, "case-study", 0), longest.len(), cfg.n_users).into_vec();
    picked.sort_unstable();
    let chosen: Vec<&TrainingInstance> = picked.iter().map(|&i| longest[i]).collect();

    let pool = sample_substitute_pool(
        features.n_items(),
        cfg.n_z,
        &Default::default(),
        &mut substream(cfg.seed, "case-study-pool", 0),
    )?;
    let histories: Vec<&[ItemId]> = chosen.iter().map(|i| i.history.as_slice()).collect();
    let mut rngs: Vec<_> = (0..chosen.len())
        .map(|i| substream(cfg.seed, "case-study-augment", i as u64))
        .collect();
    let state = StrategyState::at(cfg.strategy, 1.0)?;
    let augs = plan_augmentations(params, features, &histories, &pool, cfg.n_p, cfg.n_n, &state, &mut rngs)?;

    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let mut items: Vec<ItemId> = Vec::new();
    for (inst, aug) in chosen.iter().zip(&augs) {
        items.extend(&inst.history);
        if let Some(a) = aug {
            for s in a.positives.iter().chain(&a.negatives) {
                items.extend(&s.item_ids);
            }
        }
    }
    let proj = ItemProjections::new(&mut tape, &pv, features, items)?;

    let dim = params.dim();
    let mut text = String::from("user_id,role,hardness");
    for d in 0..dim {
        write!(text, ",dim_{d}").unwrap();
    }
    text.push('\n');
    let mut rows = 0;
    for (inst, aug) in chosen.iter().zip(&augs) {
        let aug = aug.as_ref().expect("histories of length >= 2 are augmented");
        let mut entries: Vec<(&str, Option<f64>, &[ItemId])> = vec![("query", None, &inst.history)];
        entries.extend(aug.positives.iter().map(|s| ("pos", Some(s.hardness), s.item_ids.as_slice())));
        entries.extend(aug.negatives.iter().map(|s| ("neg", Some(s.hardness), s.item_ids.as_slice())));
        for (role, hardness, history) in entries {
            let scored = score_sequence(&mut tape, &proj, history)?;
            let u = encode(&mut tape, &proj, &scored, Provenance::Query)?.vector;
            write!(text, "{},{role},{}", inst.user, hardness.map_or(String::new(), |h| h.to_string())).unwrap();
            for v in tape.value(u).data() {
                write!(text, ",{v}").unwrap();
            }
            text.push('\n');
            rows += 1;
        }
    }
    Ok((text, rows))
}
