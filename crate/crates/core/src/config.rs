//! Sectioned `key=value` run configuration.
//!
//! ```text
//! [train]
//! epochs = 10
//! strategy = easy2hard
//!
//! [margin]
//! delta_l = 0.5
//!
//! [synthetic]
//! n_users = 200
//!
//! [output]
//! out_dir = runs/a
//! ```
//!
//! Exactly one of `[synthetic]` and `[data]` must be present. Blank lines and
//! lines starting with `#` are ignored; unknown sections and keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{load_interactions, FeatureTable, SyntheticSpec};
use crate::error::{Error, Result};
use crate::train::{Ablation, Dataset, TrainConfig};

pub const SECTIONS: [&str; 5] = ["train", "margin", "data", "output", "synthetic"];

const TRAIN_KEYS: [&str; 12] = [
    "batch_size",
    "epochs",
    "n_p",
    "n_n",
    "n_z",
    "n_max",
    "lr",
    "weight_decay",
    "strategy",
    "seed",
    "k",
    "ablation",
];
const MARGIN_KEYS: [&str; 3] = ["delta_s", "delta_u", "delta_l"];
const DATA_KEYS: [&str; 2] = ["features", "interactions"];
const OUTPUT_KEYS: [&str; 1] = ["out_dir"];
const SYNTHETIC_KEYS: [&str; 9] = [
    "n_users",
    "n_items",
    "dim",
    "latent_dim",
    "click_noise_rate",
    "seed",
    "exposures_per_user",
    "signal_scale",
    "feature_noise",
];

fn keys_of(section: &str) -> &'static [&'static str] {
    match section {
        "train" => &TRAIN_KEYS,
        "margin" => &MARGIN_KEYS,
        "data" => &DATA_KEYS,
        "output" => &OUTPUT_KEYS,
        "synthetic" => &SYNTHETIC_KEYS,
        _ => &[],
    }
}

/// Where training instances come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files {
        features: Option<PathBuf>,
        interactions: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub ablation: Ablation,
    pub source: DataSource,
    pub out_dir: PathBuf,
}

fn parse_value<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{section}.{key} = {value:?}: {e}")))
}

impl RunConfig {
    fn with_source(source: DataSource) -> Self {
        RunConfig {
            train: TrainConfig::default(),
            ablation: Ablation::Full,
            source,
            out_dir: PathBuf::from("out"),
        }
    }

    /// Defaults with the default synthetic corpus as data source.
    pub fn synthetic_default() -> Self {
        Self::with_source(DataSource::Synthetic(SyntheticSpec::default()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut entries: Vec<(String, String, String, usize)> = Vec::new();
        let mut seen_sections: Vec<String> = Vec::new();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(parse_err(idx + 1, format!("unknown section [{name}]")));
                }
                if !seen_sections.iter().any(|s| s == name) {
                    seen_sections.push(name.to_string());
                }
                section = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(parse_err(idx + 1, format!("expected key = value, got {line:?}")));
            };
            let Some(section) = &section else {
                return Err(parse_err(idx + 1, "key outside any [section]".into()));
            };
            let key = key.trim();
            if !keys_of(section).contains(&key) {
                return Err(parse_err(idx + 1, format!("unknown key {key:?} in [{section}]")));
            }
            entries.push((section.clone(), key.to_string(), value.trim().to_string(), idx + 1));
        }

        let has = |s: &str| seen_sections.iter().any(|x| x == s);
        let source = match (has("synthetic"), has("data")) {
            (true, false) => DataSource::Synthetic(SyntheticSpec::default()),
            (false, true) => DataSource::Files { features: None, interactions: None },
            (true, true) => return Err(Error::Config("both [synthetic] and [data] given; keep one".into())),
            (false, false) => return Err(Error::Config("a [synthetic] or a [data] section is required".into())),
        };
        let mut cfg = Self::with_source(source);
        for (section, key, value, line) in entries {
            cfg.set_in(&section, &key, &value).map_err(|e| match e {
                Error::Config(m) => parse_err(line, m),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    /// Applies `key=value` where `key` is `section.key` or a bare key. A bare
    /// key goes to the first section that defines it, in the order of
    /// [`SECTIONS`]; `seed` therefore sets the training seed.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some((section, key)) = key.split_once('.') {
            if !keys_of(section).contains(&key) {
                return Err(Error::Config(format!("unknown key {section}.{key}")));
            }
            return self.set_in(section, key, value);
        }
        match SECTIONS.iter().find(|s| keys_of(s).contains(&key)) {
            Some(section) => self.set_in(section, key, value),
            None => Err(Error::Config(format!("unknown key {key:?}"))),
        }
    }

    fn set_in(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match (section, key) {
            ("train", "batch_size") => t.batch_size = parse_value(section, key, value)?,
            ("train", "epochs") => t.epochs = parse_value(section, key, value)?,
            ("train", "n_p") => t.n_p = parse_value(section, key, value)?,
            ("train", "n_n") => t.n_n = parse_value(section, key, value)?,
            ("train", "n_z") => t.n_z = parse_value(section, key, value)?,
            ("train", "n_max") => t.n_max = parse_value(section, key, value)?,
            ("train", "lr") => t.lr = parse_value(section, key, value)?,
            ("train", "weight_decay") => t.weight_decay = parse_value(section, key, value)?,
            ("train", "strategy") => t.strategy = parse_value(section, key, value)?,
            ("train", "seed") => t.seed = parse_value(section, key, value)?,
            ("train", "k") => t.k = parse_value(section, key, value)?,
            ("train", "ablation") => self.ablation = parse_value(section, key, value)?,
            ("margin", "delta_s") => t.margin.delta_s = parse_value(section, key, value)?,
            ("margin", "delta_u") => t.margin.delta_u = parse_value(section, key, value)?,
            ("margin", "delta_l") => t.margin.delta_l = parse_value(section, key, value)?,
            ("output", "out_dir") => self.out_dir = PathBuf::from(value),
            ("data", key) => {
                let DataSource::Files { features, interactions } = &mut self.source else {
                    return Err(Error::Config(format!(
                        "data.{key} given but the run uses a synthetic corpus"
                    )));
                };
                let slot = if key == "features" { features } else { interactions };
                *slot = Some(PathBuf::from(value));
            }
            ("synthetic", key) => {
                let DataSource::Synthetic(spec) = &mut self.source else {
                    return Err(Error::Config(format!(
                        "synthetic.{key} given but the run reads dataset files"
                    )));
                };
                match key {
                    "n_users" => spec.n_users = parse_value(section, key, value)?,
                    "n_items" => spec.n_items = parse_value(section, key, value)?,
                    "dim" => spec.dim = parse_value(section, key, value)?,
                    "latent_dim" => spec.latent_dim = parse_value(section, key, value)?,
                    "click_noise_rate" => spec.click_noise_rate = parse_value(section, key, value)?,
                    "seed" => spec.seed = parse_value(section, key, value)?,
                    "exposures_per_user" => spec.exposures_per_user = parse_value(section, key, value)?,
                    "signal_scale" => spec.signal_scale = parse_value(section, key, value)?,
                    "feature_noise" => spec.feature_noise = parse_value(section, key, value)?,
                    _ => return Err(Error::Config(format!("unknown key synthetic.{key}"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown key {section}.{key}"))),
        }
        Ok(())
    }

    /// The training configuration with the ablation's loss terms applied.
    pub fn train_config(&self) -> TrainConfig {
        self.train.clone().with_ablation(self.ablation)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match &self.source {
            DataSource::Synthetic(spec) => spec.validate(),
            DataSource::Files { features, interactions } => {
                if features.is_none() || interactions.is_none() {
                    Err(Error::Config("[data] needs both features and interactions".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Loads or generates the data and applies the leave-latest split.
    pub fn dataset(&self) -> Result<Dataset> {
        self.validate()?;
        match &self.source {
            DataSource::Synthetic(spec) => Dataset::synthetic(spec, self.train.n_max),
            DataSource::Files { features, interactions } => {
                let (features, interactions) = (features.as_ref().unwrap(), interactions.as_ref().unwrap());
                let table = FeatureTable::load(features)?;
                let log = load_interactions(interactions)?;
                if log.malformed > 0 {
                    log::warn!("{}: skipped {} malformed lines", interactions.display(), log.malformed);
                }
                Dataset::from_interactions(table, &log.records, self.train.n_max)
            }
        }
    }
}
