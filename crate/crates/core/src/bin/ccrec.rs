use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ccrec::augment::{construct, dump_line, HardnessSummary, Polarity, Strategy, StrategyState};
use ccrec::config::RunConfig;
use ccrec::data::sample_substitute_pool;
use ccrec::eval::{evaluate, export_case_study, CaseStudyConfig};
use ccrec::model::ModelParams;
use ccrec::rng::substream;
use ccrec::train::{compare_strategies, epoch_line, load_checkpoint, run_to_dir, score_histories, Ablation};
use ccrec::Error;

#[derive(Parser)]
#[command(name = "ccrec", version, about = "Contrastive sequential recommendation: train, evaluate, inspect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics.log and checkpoint.cclm to the output directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Train once per sampling strategy, writing metrics-<strategy>.log each.
        #[arg(long)]
        compare_strategies: bool,
    },
    /// Score the held-out split with a checkpoint and print `auc precision recall f1`.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Print augmented variants of one user's longest history with their hardness.
    InspectAugmentations {
        #[command(flatten)]
        common: Common,
        /// Model parameters; a fresh seeded initialization when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// User id whose history is augmented.
        #[arg(long, default_value_t = 0)]
        user: u64,
        /// Variants per polarity.
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Curriculum progress in [0, 1] used for the sampling weights.
        #[arg(long, default_value_t = 1.0)]
        progress: f64,
    },
    /// Write query and augmented representations of sampled users as CSV.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of users to export.
        #[arg(long, default_value_t = 2)]
        users: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Config file plus overrides. Unset flags keep the config file's value,
/// which falls back to the listed default.
#[derive(Args)]
struct Common {
    /// Run configuration (sectioned key=value file).
    #[arg(long)]
    config: PathBuf,
    /// Mini-batch size [default: 32, published setting].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Training epochs [default: 10].
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate [default: 0.003, published setting].
    #[arg(long)]
    lr: Option<f64>,
    /// Decoupled weight decay [default: 1e-7, published setting].
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Augmented positives per sequence [default: 3, published best].
    #[arg(long)]
    n_p: Option<usize>,
    /// Augmented negatives per sequence [default: 3, published best].
    #[arg(long)]
    n_n: Option<usize>,
    /// Substitute pool size per batch [default: 256].
    #[arg(long)]
    n_z: Option<usize>,
    /// Longest history kept [default: 50].
    #[arg(long)]
    n_max: Option<usize>,
    /// Sampling strategy: random, harder, easier, easy2hard, hard2easy [default: easy2hard].
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Loss ablation: full, no-ccl-pairs, no-ccl, ce-only [default: full].
    #[arg(long, value_parser = parse_ablation)]
    ablation: Option<Ablation>,
    /// Training seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Cutoff for Precision/Recall/F1 [default: 50, published setting].
    #[arg(long)]
    k: Option<usize>,
    /// Margin scale [default: 1.0].
    #[arg(long)]
    delta_s: Option<f64>,
    /// Margin upper bound [default: 1.5, top of the published grid].
    #[arg(long)]
    delta_u: Option<f64>,
    /// Margin lower bound [default: 0.5, bottom of the published grid].
    #[arg(long)]
    delta_l: Option<f64>,
    /// Output directory [default: out].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Any other config key, as `key=value` or `section.key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(Error),
    Runtime(Error),
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e)
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e)
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::load(&self.config).map_err(usage)?;
        let t = &mut cfg.train;
        macro_rules! apply {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        apply!(
            batch_size => t.batch_size,
            epochs => t.epochs,
            lr => t.lr,
            weight_decay => t.weight_decay,
            n_p => t.n_p,
            n_n => t.n_n,
            n_z => t.n_z,
            n_max => t.n_max,
            strategy => t.strategy,
            seed => t.seed,
            k => t.k,
            delta_s => t.margin.delta_s,
            delta_u => t.margin.delta_u,
            delta_l => t.margin.delta_l,
            ablation => cfg.ablation,
            out_dir => cfg.out_dir,
        );
        for kv in &self.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))
                .map_err(usage)?;
            cfg.set(key.trim(), value.trim()).map_err(usage)?;
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

fn checkpoint_params(path: &Path) -> Result<ModelParams, Failure> {
    if !path.is_file() {
        return Err(usage(Error::Config(format!("checkpoint {} not found", path.display()))));
    }
    load_checkpoint(path).map(|(p, _)| p).map_err(usage)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train { common, resume, compare_strategies: compare } => {
            let cfg = common.resolve()?;
            if let Some(path) = &resume {
                if !path.is_file() {
                    return Err(usage(Error::Config(format!("checkpoint {} not found", path.display()))));
                }
            }
            let data = cfg.dataset().map_err(runtime)?;
            log::info!(
                "{} training and {} held-out instances, {} items",
                data.train.len(),
                data.eval.len(),
                data.features.n_items()
            );
            let train = cfg.train_config();
            if compare {
                for (strategy, out) in compare_strategies(&train, &data, &cfg.out_dir).map_err(runtime)? {
                    if let Some(last) = out.reports.last() {
                        log::info!("{strategy}: {}", epoch_line(last.epoch, &last.metrics));
                    }
                }
                return Ok(());
            }
            let (out, files) = run_to_dir(&train, &data, &cfg.out_dir, resume.as_deref()).map_err(runtime)?;
            if let Some(last) = out.reports.last() {
                log::info!("{}", epoch_line(last.epoch, &last.metrics));
            }
            log::info!("wrote {} and {}", files.metrics.display(), files.checkpoint.display());
            Ok(())
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = common.resolve()?;
            let params = checkpoint_params(&checkpoint)?;
            let data = cfg.dataset().map_err(runtime)?;
            if params.dim() != data.features.dim() {
                return Err(runtime(Error::Config(format!(
                    "checkpoint dim {} does not match feature dim {}",
                    params.dim(),
                    data.features.dim()
                ))));
            }
            let m = evaluate(&params, &data.features, &data.eval, cfg.train.k);
            let line = epoch_line(0, &m);
            println!("{}", line.trim_start_matches("epoch 0 "));
            Ok(())
        }
        Command::InspectAugmentations { common, checkpoint, user, n, progress } => {
            let cfg = common.resolve()?;
            let state = StrategyState::at(cfg.train.strategy, progress).map_err(usage)?;
            let data = cfg.dataset().map_err(runtime)?;
            let params = match &checkpoint {
                Some(path) => checkpoint_params(path)?,
                None => ModelParams::init(data.features.dim(), &mut substream(cfg.train.seed, "init", 0))
                    .map_err(runtime)?,
            };
            inspect(&cfg, &data, &params, user, n, &state).map_err(runtime)
        }
        Command::ExportEmbeddings { common, checkpoint, users, out } => {
            let cfg = common.resolve()?;
            let params = checkpoint_params(&checkpoint)?;
            let data = cfg.dataset().map_err(runtime)?;
            let case = CaseStudyConfig {
                n_users: users,
                n_p: cfg.train.n_p,
                n_n: cfg.train.n_n,
                n_z: cfg.train.n_z,
                strategy: cfg.train.strategy,
                seed: cfg.train.seed,
            };
            let rows = export_case_study(&params, &data.features, &data.train, &case, &out).map_err(runtime)?;
            log::info!("wrote {rows} rows to {}", out.display());
            Ok(())
        }
    }
}

fn inspect(
    cfg: &RunConfig,
    data: &ccrec::train::Dataset,
    params: &ModelParams,
    user: u64,
    n: usize,
    state: &StrategyState,
) -> ccrec::Result<()> {
    let mut stdout = std::io::stdout().lock();
    let io = |e: std::io::Error| Error::Io { path: PathBuf::from("<stdout>"), source: e };
    writeln!(stdout, "user polarity hardness replacements").map_err(io)?;
    if n == 0 {
        return Ok(());
    }
    let history = data
        .train
        .iter()
        .chain(&data.eval)
        .filter(|i| i.user == user)
        .map(|i| &i.history)
        .max_by_key(|h| h.len())
        .ok_or_else(|| Error::Config(format!("user {user} has no history")))?;
    let seed = cfg.train.seed;
    let pool = sample_substitute_pool(
        data.features.n_items(),
        cfg.train.n_z,
        &HashSet::new(),
        &mut substream(seed, "inspect-pool", user),
    )?;
    let scores = score_histories(params, &data.features, &[history.as_slice()], &pool)?;
    let scores = &scores[0];
    let mut rng = substream(seed, "inspect-augment", user);
    for polarity in [Polarity::Positive, Polarity::Negative] {
        let augs = construct(history, &scores.alpha, &scores.beta, &pool, polarity, n, state, &mut rng)?;
        for a in &augs {
            writeln!(stdout, "{}", dump_line(user, a, &pool)).map_err(io)?;
        }
        if let Some(s) = HardnessSummary::of(&augs) {
            writeln!(
                stdout,
                "# {polarity} count={} mean={} min={} max={}",
                s.count, s.mean, s.min, s.max
            )
            .map_err(io)?;
        }
    }
    Ok(())
}
