//! Mini-batch training: augmentation planning, the seven-term batch loss,
//! Adam updates, per-epoch evaluation, metrics logs and checkpoints.

mod adam;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

pub use adam::{adam_step, AdamState};

use crate::augment::{construct, AugmentedSequence, Polarity, Strategy, StrategyState};
use crate::data::{
    build_instances, generate_synthetic, sample_substitute_pool, split_leave_latest, FeatureTable,
    Interaction, ItemId, SyntheticSpec, TrainingInstance,
};
use crate::diffmath::{Tape, Var};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalMetrics};
use crate::model::{
    encode, predict_ctr, score_sequence, score_substitutes, ItemProjections, ModelParams, ParamVars,
    Provenance,
};
use crate::objectives::{
    loss_ccl, loss_ccl_neg, loss_ccl_pos, loss_ce, loss_cui, total_loss, CeVariant, LossBreakdown,
    LossValues, MarginConfig,
};
use crate::rng::{substream, Rng};

/// Which of the seven loss terms contribute, in log order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossTerms(pub [bool; 7]);

impl LossTerms {
    pub const ALL: LossTerms = LossTerms([true; 7]);

    pub fn ccl(&self) -> bool {
        self.0[0]
    }
    pub fn ccl_pos(&self) -> bool {
        self.0[1]
    }
    pub fn ccl_neg(&self) -> bool {
        self.0[2]
    }
    pub fn ce(&self) -> bool {
        self.0[3]
    }
    pub fn ce_pos(&self) -> bool {
        self.0[4]
    }
    pub fn ce_neg(&self) -> bool {
        self.0[5]
    }
    pub fn cui(&self) -> bool {
        self.0[6]
    }

    fn needs_augmentation(&self) -> bool {
        self.ccl() || self.ccl_pos() || self.ccl_neg() || self.ce_pos() || self.ce_neg()
    }
}

/// Objective ablations, each dropping more of the contrastive machinery.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Full,
    /// Without the positive/negative self-contrast terms.
    NoCclPairs,
    /// Additionally without the query/positive/negative contrast.
    NoCcl,
    /// Only the three cross-entropy terms.
    CeOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoCclPairs, Ablation::NoCcl, Ablation::CeOnly];

    pub fn terms(self) -> LossTerms {
        match self {
            Ablation::Full => LossTerms::ALL,
            Ablation::NoCclPairs => LossTerms([true, false, false, true, true, true, true]),
            Ablation::NoCcl => LossTerms([false, false, false, true, true, true, true]),
            Ablation::CeOnly => LossTerms([false, false, false, true, true, true, false]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoCclPairs => "no-ccl-pairs",
            Ablation::NoCcl => "no-ccl",
            Ablation::CeOnly => "ce-only",
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Ablation::ALL.iter().map(|a| a.name()).collect();
            Error::Config(format!("unknown ablation `{s}`; expected one of: {}", valid.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub n_p: usize,
    pub n_n: usize,
    pub n_z: usize,
    pub n_max: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub margin: MarginConfig,
    pub strategy: Strategy,
    pub seed: u64,
    /// Cutoff for Precision/Recall/F1 during evaluation.
    pub k: usize,
    pub terms: LossTerms,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 10,
            n_p: 3,
            n_n: 3,
            n_z: 256,
            n_max: 50,
            lr: 0.003,
            weight_decay: 1e-7,
            margin: MarginConfig::default(),
            strategy: Strategy::Easy2Hard,
            seed: 0,
            k: 50,
            terms: LossTerms::ALL,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("n_p", self.n_p),
            ("n_n", self.n_n),
            ("n_z", self.n_z),
            ("n_max", self.n_max),
            ("k", self.k),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("lr and weight_decay must be finite and non-negative".into()));
        }
        self.margin.validate()
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.terms = ablation.terms();
        self
    }
}

/// Features plus the leave-latest-out split of the windowed log.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub features: FeatureTable,
    pub train: Vec<TrainingInstance>,
    pub eval: Vec<TrainingInstance>,
}

impl Dataset {
    pub fn from_interactions(features: FeatureTable, log: &[Interaction], n_max: usize) -> Result<Self> {
        if let Some(bad) = log.iter().find(|r| r.item >= features.n_items()) {
            return Err(Error::Index {
                what: "interaction item",
                index: bad.item,
                bound: features.n_items(),
            });
        }
        let mut sorted = log.to_vec();
        sorted.sort_by_key(|r| (r.user, r.timestamp));
        let (train, eval) = split_leave_latest(&build_instances(&sorted, n_max));
        Ok(Dataset { features, train, eval })
    }

    pub fn synthetic(spec: &SyntheticSpec, n_max: usize) -> Result<Self> {
        let corpus = generate_synthetic(spec)?;
        Dataset::from_interactions(corpus.features, &corpus.interactions, n_max)
    }
}

/// Augmented variants of one behavior sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceAugmentations {
    pub positives: Vec<AugmentedSequence>,
    pub negatives: Vec<AugmentedSequence>,
}

/// Detached importance and relatedness scores of one history.
#[derive(Clone, Debug)]
pub struct HistoryScores {
    pub alpha: Vec<f64>,
    /// `N_u×N_z`.
    pub beta: crate::diffmath::Tensor,
}

/// Scores many histories against one pool using a scratch tape.
pub fn score_histories(
    params: &ModelParams,
    features: &FeatureTable,
    histories: &[&[ItemId]],
    pool: &[ItemId],
) -> Result<Vec<HistoryScores>> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let items = histories.iter().flat_map(|h| h.iter().copied()).chain(pool.iter().copied());
    let proj = ItemProjections::new(&mut tape, &pv, features, items)?;
    histories
        .iter()
        .map(|h| {
            let scored = score_sequence(&mut tape, &proj, h)?;
            let beta = score_substitutes(&tape, &proj, &scored, pool)?;
            let alpha = tape.value(scored.detached_alpha).data().to_vec();
            Ok(HistoryScores { alpha, beta })
        })
        .collect()
}

/// Positives and negatives for every history; `None` where the history is
/// too short to augment. `rngs[i]` drives history `i`.
#[allow(clippy::too_many_arguments)]
pub fn plan_augmentations(
    params: &ModelParams,
    features: &FeatureTable,
    histories: &[&[ItemId]],
    pool: &[ItemId],
    n_p: usize,
    n_n: usize,
    state: &StrategyState,
    rngs: &mut [Rng],
) -> Result<Vec<Option<InstanceAugmentations>>> {
    let eligible: Vec<usize> = (0..histories.len()).filter(|&i| histories[i].len() >= 2).collect();
    let subset: Vec<&[ItemId]> = eligible.iter().map(|&i| histories[i]).collect();
    let scores = score_histories(params, features, &subset, pool)?;
    let mut out = vec![None; histories.len()];
    for (&i, s) in eligible.iter().zip(&scores) {
        let rng = &mut rngs[i];
        let h = histories[i];
        let positives = construct(h, &s.alpha, &s.beta, pool, Polarity::Positive, n_p, state, rng)?;
        let negatives = construct(h, &s.alpha, &s.beta, pool, Polarity::Negative, n_n, state, rng)?;
        out[i] = Some(InstanceAugmentations { positives, negatives });
    }
    Ok(out)
}

/// Records the enabled loss terms for a batch on `tape`.
///
/// Augmented representations reuse their query's targets. Instances without
/// augmentations contribute only to the query cross-entropy and the
/// user-item contrast. Disabled terms are recorded as constant zeros.
pub fn batch_loss(
    tape: &mut Tape,
    pv: &ParamVars,
    features: &FeatureTable,
    instances: &[&TrainingInstance],
    augs: &[Option<InstanceAugmentations>],
    margin: &MarginConfig,
    terms: LossTerms,
) -> Result<LossBreakdown> {
    if instances.len() != augs.len() {
        return Err(Error::Contract("one augmentation slot per instance required".into()));
    }
    let mut items: Vec<ItemId> = Vec::new();
    for (inst, aug) in instances.iter().zip(augs) {
        items.extend(&inst.history);
        items.extend(inst.targets.iter().map(|(i, _)| *i));
        if let Some(a) = aug {
            for s in a.positives.iter().chain(&a.negatives) {
                items.extend(&s.item_ids);
            }
        }
    }
    let proj = ItemProjections::new(tape, pv, features, items)?;

    #[derive(Default)]
    struct Group {
        idx: Vec<usize>,
        labels: Vec<bool>,
    }
    let mut reps: Vec<Var> = Vec::new();
    let mut pairs: Vec<(usize, ItemId)> = Vec::new();
    let (mut q, mut pos, mut neg) = (Group::default(), Group::default(), Group::default());
    let mut q_users: Vec<u64> = Vec::new();
    let (mut ccl, mut ccl_pos, mut ccl_neg) = (Vec::new(), Vec::new(), Vec::new());

    let add_targets = |g: &mut Group, pairs: &mut Vec<(usize, ItemId)>, rep: usize, inst: &TrainingInstance| {
        for &(item, label) in &inst.targets {
            g.idx.push(pairs.len());
            g.labels.push(label);
            pairs.push((rep, item));
        }
    };

    for (inst, aug) in instances.iter().zip(augs) {
        let scored = score_sequence(tape, &proj, &inst.history)?;
        let uq = encode(tape, &proj, &scored, Provenance::Query)?.vector;
        reps.push(uq);
        add_targets(&mut q, &mut pairs, reps.len() - 1, inst);
        q_users.extend(std::iter::repeat_n(inst.user, inst.targets.len()));

        let Some(aug) = aug else { continue };
        let encode_all = |tape: &mut Tape, set: &[AugmentedSequence], prov: fn(usize) -> Provenance| {
            set.iter()
                .enumerate()
                .map(|(j, s)| {
                    let scored = score_sequence(tape, &proj, &s.item_ids)?;
                    Ok((encode(tape, &proj, &scored, prov(j))?.vector, s.hardness))
                })
                .collect::<Result<Vec<(Var, f64)>>>()
        };
        let p = encode_all(tape, &aug.positives, Provenance::Positive)?;
        let n = encode_all(tape, &aug.negatives, Provenance::Negative)?;
        if terms.ccl() {
            ccl.push(loss_ccl(tape, uq, &p, &n, margin)?);
        }
        if terms.ccl_pos() {
            ccl_pos.push(loss_ccl_pos(tape, uq, &p, margin)?);
        }
        if terms.ccl_neg() {
            ccl_neg.push(loss_ccl_neg(tape, uq, &n, margin)?);
        }
        if terms.ce_pos() {
            for (u, _) in &p {
                reps.push(*u);
                add_targets(&mut pos, &mut pairs, reps.len() - 1, inst);
            }
        }
        if terms.ce_neg() {
            for (u, _) in &n {
                reps.push(*u);
                add_targets(&mut neg, &mut pairs, reps.len() - 1, inst);
            }
        }
    }

    let y = predict_ctr(tape, pv, &proj, &reps, &pairs)?;
    let zero = |tape: &mut Tape| tape.scalar(0.0);
    let sum_all = |tape: &mut Tape, parts: &[Var]| -> Result<Var> {
        if parts.is_empty() {
            return Ok(tape.scalar(0.0));
        }
        let c = tape.concat(parts)?;
        Ok(tape.sum(c))
    };
    let ce_of = |tape: &mut Tape, g: &Group, variant: CeVariant| -> Result<Var> {
        if g.idx.is_empty() {
            return Ok(tape.scalar(0.0));
        }
        let preds = tape.gather(y, &g.idx)?;
        loss_ce(tape, preds, &g.labels, variant)
    };

    let l_ccl = sum_all(tape, &ccl)?;
    let l_ccl_pos = sum_all(tape, &ccl_pos)?;
    let l_ccl_neg = sum_all(tape, &ccl_neg)?;
    let l_ce = if terms.ce() { ce_of(tape, &q, CeVariant::Query)? } else { zero(tape) };
    let l_ce_pos = ce_of(tape, &pos, CeVariant::Positive)?;
    let l_ce_neg = ce_of(tape, &neg, CeVariant::Negative)?;
    let l_cui = if terms.cui() && !q.idx.is_empty() {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot: HashMap<u64, usize> = HashMap::new();
        for (i, u) in q_users.iter().enumerate() {
            let s = *slot.entry(*u).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[s].push(i);
        }
        let preds = tape.gather(y, &q.idx)?;
        loss_cui(tape, preds, &q.labels, &groups)?
    } else {
        zero(tape)
    };
    total_loss(tape, [l_ccl, l_ccl_pos, l_ccl_neg, l_ce, l_ce_pos, l_ce_neg, l_cui])
}

/// Total loss and its gradient for every parameter tensor, with the
/// augmentations (and so the hardness scores) held fixed.
pub fn batch_gradients(
    params: &ModelParams,
    features: &FeatureTable,
    instances: &[&TrainingInstance],
    augs: &[Option<InstanceAugmentations>],
    margin: &MarginConfig,
    terms: LossTerms,
) -> Result<(LossValues, Vec<crate::diffmath::Tensor>)> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let loss = batch_loss(&mut tape, &pv, features, instances, augs, margin, terms)?;
    tape.backward(loss.total)?;
    Ok((loss.values(&tape), pv.grads(&tape)))
}

/// Per-epoch summary: optimizer steps taken and mean loss terms.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub steps: usize,
    pub mean_loss: Option<LossValues>,
}

/// Evaluation snapshot after an epoch (`epoch = 0` is before training).
#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub stats: EpochStats,
    pub metrics: EvalMetrics,
}

/// Holds the evolving model, optimizer and curriculum state of a run.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    data: &'a Dataset,
    params: ModelParams,
    adam: AdamState,
    strategy: StrategyState,
    step: u64,
    total_steps: u64,
}

impl<'a> Trainer<'a> {
    /// Fresh parameters drawn from the `init` stream of the config seed.
    pub fn new(cfg: TrainConfig, data: &'a Dataset) -> Result<Self> {
        let params = ModelParams::init(data.features.dim(), &mut substream(cfg.seed, "init", 0))?;
        let adam = AdamState::new(&params, cfg.lr, cfg.weight_decay);
        Trainer::resume(cfg, data, params, adam)
    }

    /// Continues from saved parameters and optimizer moments. The curriculum
    /// schedule spans this run's epochs.
    pub fn resume(cfg: TrainConfig, data: &'a Dataset, params: ModelParams, adam: AdamState) -> Result<Self> {
        cfg.validate()?;
        if params.dim() != data.features.dim() {
            return Err(Error::Config(format!(
                "model dim {} does not match feature dim {}",
                params.dim(),
                data.features.dim()
            )));
        }
        if cfg.n_z > data.features.n_items() {
            return Err(Error::Capacity {
                requested: cfg.n_z,
                available: data.features.n_items(),
            });
        }
        let per_epoch = data.train.len().div_ceil(cfg.batch_size) as u64;
        Ok(Trainer {
            strategy: StrategyState::new(cfg.strategy),
            total_steps: per_epoch * cfg.epochs as u64,
            step: 0,
            cfg,
            data,
            params,
            adam,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn progress(&self) -> f64 {
        self.strategy.progress()
    }

    pub fn evaluate(&self) -> EvalMetrics {
        evaluate(&self.params, &self.data.features, &self.data.eval, self.cfg.k)
    }

    /// One optimizer step on `batch`; returns the recorded loss values.
    pub fn step(&mut self, batch: &[&TrainingInstance]) -> Result<LossValues> {
        let cfg = &self.cfg;
        let features = &self.data.features;
        let augs = if cfg.terms.needs_augmentation() {
            let pool = sample_substitute_pool(
                features.n_items(),
                cfg.n_z,
                &Default::default(),
                &mut substream(cfg.seed, "pool", self.step),
            )?;
            let histories: Vec<&[ItemId]> = batch.iter().map(|i| i.history.as_slice()).collect();
            let base = self.step * cfg.batch_size as u64;
            let mut rngs: Vec<Rng> = (0..batch.len())
                .map(|slot| substream(cfg.seed, "augment", base + slot as u64))
                .collect();
            plan_augmentations(
                &self.params,
                features,
                &histories,
                &pool,
                cfg.n_p,
                cfg.n_n,
                &self.strategy,
                &mut rngs,
            )
            .map_err(|e| match e {
                Error::Augmentation(m) => {
                    let users: Vec<String> = batch.iter().map(|i| i.user.to_string()).collect();
                    Error::Augmentation(format!("batch with users [{}]: {m}", users.join(", ")))
                }
                other => other,
            })?
        } else {
            vec![None; batch.len()]
        };

        let mut tape = Tape::new();
        let pv = self.params.register(&mut tape);
        let loss = batch_loss(&mut tape, &pv, features, batch, &augs, &cfg.margin, cfg.terms)?;
        tape.backward(loss.total)?;
        let grads = pv.grads(&tape);
        adam_step(&mut self.params, &grads, &mut self.adam)?;
        self.step += 1;
        let progress = if self.total_steps == 0 {
            1.0
        } else {
            (self.step as f64 / self.total_steps as f64).min(1.0)
        };
        self.strategy.advance_to(progress)?;
        Ok(loss.values(&tape))
    }

    /// Shuffles the training set with the epoch's stream and steps through
    /// it in batches, appending one `step` line per update to `log`.
    pub fn train_epoch(&mut self, epoch: usize, log: &mut dyn Write) -> Result<EpochStats> {
        let mut order: Vec<usize> = (0..self.data.train.len()).collect();
        order.shuffle(&mut substream(self.cfg.seed, "data-shuffle", epoch as u64));
        let mut losses = Vec::new();
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<&TrainingInstance> = chunk.iter().map(|&i| &self.data.train[i]).collect();
            let values = self.step(&batch)?;
            writeln!(log, "step {} {values}", self.step).map_err(|e| Error::io("<metrics log>", e))?;
            losses.push(values);
        }
        Ok(EpochStats {
            steps: losses.len(),
            mean_loss: LossValues::mean(&losses),
        })
    }
}

/// The `epoch E auc P@K R@K F1@K` log line.
pub fn epoch_line(epoch: usize, m: &EvalMetrics) -> String {
    let f = |x: Option<f64>| x.map_or("nan".to_string(), |v| v.to_string());
    let prf = m.prf.as_ref();
    format!(
        "epoch {epoch} {} {} {} {}",
        f(m.auc),
        f(prf.map(|p| p.precision)),
        f(prf.map(|p| p.recall)),
        f(prf.map(|p| p.f1))
    )
}

/// Final state of a run plus one report per evaluated epoch.
pub struct RunOutput {
    pub params: ModelParams,
    pub adam: AdamState,
    pub reports: Vec<EpochReport>,
}

/// Evaluates, then alternates training epochs and evaluations, logging
/// every step and epoch line to `log`.
pub fn run_trainer(mut trainer: Trainer<'_>, log: &mut dyn Write) -> Result<RunOutput> {
    let io = |e| Error::io("<metrics log>", e);
    let mut reports = Vec::new();
    let metrics = trainer.evaluate();
    writeln!(log, "{}", epoch_line(0, &metrics)).map_err(io)?;
    reports.push(EpochReport {
        epoch: 0,
        stats: EpochStats { steps: 0, mean_loss: None },
        metrics,
    });
    for epoch in 1..=trainer.cfg.epochs {
        let stats = trainer.train_epoch(epoch, log)?;
        let metrics = trainer.evaluate();
        writeln!(log, "{}", epoch_line(epoch, &metrics)).map_err(io)?;
        log::info!("{}", epoch_line(epoch, &metrics));
        reports.push(EpochReport { epoch, stats, metrics });
    }
    Ok(RunOutput {
        params: trainer.params,
        adam: trainer.adam,
        reports,
    })
}

/// Trains from a fresh initialization.
pub fn run(cfg: &TrainConfig, data: &Dataset, log: &mut dyn Write) -> Result<RunOutput> {
    run_trainer(Trainer::new(cfg.clone(), data)?, log)
}

/// Paths written by [`run_to_dir`].
#[derive(Clone, Debug)]
pub struct RunFiles {
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        RunFiles {
            metrics: dir.join("metrics.log"),
            checkpoint: dir.join("checkpoint.cclm"),
        }
    }
}

/// Runs (optionally resuming from a checkpoint) and writes `metrics.log` and
/// `checkpoint.cclm` into `out_dir`.
pub fn run_to_dir(
    cfg: &TrainConfig,
    data: &Dataset,
    out_dir: &Path,
    resume_from: Option<&Path>,
) -> Result<(RunOutput, RunFiles)> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = RunFiles::in_dir(out_dir);
    let trainer = match resume_from {
        None => Trainer::new(cfg.clone(), data)?,
        Some(path) => {
            let (params, adam) = load_checkpoint(path)?;
            let adam = adam.unwrap_or_else(|| AdamState::new(&params, cfg.lr, cfg.weight_decay));
            Trainer::resume(cfg.clone(), data, params, adam)?
        }
    };
    let mut log = Vec::new();
    let out = run_trainer(trainer, &mut log)?;
    fs::write(&files.metrics, &log).map_err(|e| Error::io(&files.metrics, e))?;
    save_checkpoint(&files.checkpoint, &out.params, Some(&out.adam))?;
    Ok((out, files))
}

/// Runs every sampling strategy from the same seed, one metrics log each
/// (`metrics-<strategy>.log`), for training-curve comparison.
pub fn compare_strategies(
    cfg: &TrainConfig,
    data: &Dataset,
    out_dir: &Path,
) -> Result<Vec<(Strategy, RunOutput)>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    Strategy::ALL
        .into_iter()
        .map(|strategy| {
            let cfg = TrainConfig { strategy, ..cfg.clone() };
            let mut log = Vec::new();
            let out = run(&cfg, data, &mut log)?;
            let path = out_dir.join(format!("metrics-{strategy}.log"));
            fs::write(&path, &log).map_err(|e| Error::io(&path, e))?;
            Ok((strategy, out))
        })
        .collect()
}

/// Model bytes followed, when present, by the optimizer state.
pub fn checkpoint_bytes(params: &ModelParams, adam: Option<&AdamState>) -> Vec<u8> {
    let mut out = params.to_bytes();
    if let Some(a) = adam {
        a.write(&mut out);
    }
    out
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<(ModelParams, Option<AdamState>)> {
    let (params, rest) = ModelParams::from_bytes(bytes)?;
    if rest.is_empty() {
        return Ok((params, None));
    }
    let (adam, rest) = AdamState::read(rest, &params)?;
    if !rest.is_empty() {
        return Err(Error::Parse {
            source_name: "checkpoint".into(),
            line: 0,
            message: format!("{} trailing bytes", rest.len()),
        });
    }
    Ok((params, Some(adam)))
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, adam: Option<&AdamState>) -> Result<()> {
    fs::write(path, checkpoint_bytes(params, adam)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, Option<AdamState>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            source_name: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })
}
