use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::synthetic::SyntheticConfig;
use crate::dataset::{AccVariant, DatasetConfig, DATA_ROOT_ENV};
use crate::error::{Error, Result};
use crate::features::{FeatureView, RepresentationKind, DEFAULT_BINS};
use crate::learn::LogRegParams;
use crate::perturb::OodConfig;
use crate::signal::{self, DEFAULT_WINDOW_LEN};

/// Where windows come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// The official files under `data_root`.
    #[default]
    Uci,
    /// The built-in generator; no files are read.
    Synthetic,
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uci" | "uci_har" => Ok(DataSource::Uci),
            "synthetic" | "synth" => Ok(DataSource::Synthetic),
            other => Err(Error::Config(format!("unknown data source `{other}`"))),
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataSource::Uci => "uci",
            DataSource::Synthetic => "synthetic",
        })
    }
}

/// Everything a benchmark run depends on.
///
/// Built from defaults, then a `key = value` file, then the
/// `CATEQ_DATA_ROOT` variable, then command-line overrides; later layers win.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub data_root: PathBuf,
    pub acc_variant: AccVariant,
    pub window_len: usize,
    pub synthetic: SyntheticConfig,
    pub kinds: Vec<RepresentationKind>,
    pub k: usize,
    pub view: FeatureView,
    /// Shift, gain, and rotation law; its `seed` field is replaced per run.
    pub ood: OodConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub amplitude_log: bool,
    pub logreg: LogRegParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Uci,
            data_root: PathBuf::from("data"),
            acc_variant: AccVariant::Body,
            window_len: DEFAULT_WINDOW_LEN,
            synthetic: SyntheticConfig::default(),
            kinds: RepresentationKind::ALL.to_vec(),
            k: DEFAULT_BINS,
            view: FeatureView::Full,
            ood: OodConfig::default(),
            seeds: (0..5).collect(),
            out_dir: PathBuf::from("results"),
            amplitude_log: true,
            logreg: LogRegParams::default(),
        }
    }
}

/// Keys accepted by [`ExperimentConfig::set`], with a short description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("source", "uci | synthetic"),
    ("data_root", "directory holding (or receiving) the dataset"),
    ("acc_variant", "body | total"),
    ("window_len", "samples per window"),
    ("synthetic_train", "synthetic training windows"),
    ("synthetic_test", "synthetic test windows"),
    ("synthetic_seed", "synthetic generator seed"),
    (
        "kinds",
        "comma list of baseline_raw, group_only, poset_only, group_poset",
    ),
    ("k", "spectral bins per spectrum"),
    ("view", "full | spectral_only"),
    ("shift_halfwidth", "OOD shifts are uniform on -h..=h"),
    ("gain_lo", "lower OOD gain bound"),
    ("gain_hi", "upper OOD gain bound"),
    ("rotations", "true | false"),
    ("seeds", "comma list, or a half-open range like 0..5"),
    ("out_dir", "output directory"),
    ("amplitude_log", "true | false"),
    ("c_reg", "inverse regularization strength"),
    ("max_iter", "solver iteration cap"),
    ("tol", "gradient max-norm stopping tolerance"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected a boolean, got `{value}`"
        ))),
    }
}

/// `"0..5"` or `"0, 3, 7"`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    if let Some((lo, hi)) = value.split_once("..") {
        let lo: u64 = parse("seeds", lo)?;
        let hi: u64 = parse("seeds", hi)?;
        return Ok((lo..hi).collect());
    }
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse("seeds", s))
        .collect()
}

pub fn parse_kinds(value: &str) -> Result<Vec<RepresentationKind>> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(RepresentationKind::ALL.to_vec());
    }
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

impl ExperimentConfig {
    /// Sets one key; see [`CONFIG_KEYS`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "source" => self.source = v.parse()?,
            "data_root" => self.data_root = PathBuf::from(v),
            "acc_variant" => self.acc_variant = v.parse()?,
            "window_len" => {
                self.window_len = parse(&key, v)?;
                self.synthetic.window_len = self.window_len;
            }
            "synthetic_train" => self.synthetic.n_train = parse(&key, v)?,
            "synthetic_test" => self.synthetic.n_test = parse(&key, v)?,
            "synthetic_seed" => self.synthetic.seed = parse(&key, v)?,
            "kinds" => self.kinds = parse_kinds(v)?,
            "k" => self.k = parse(&key, v)?,
            "view" => self.view = v.parse()?,
            "shift_halfwidth" => self.ood.shift_halfwidth = parse(&key, v)?,
            "gain_lo" => self.ood.gain_lo = parse(&key, v)?,
            "gain_hi" => self.ood.gain_hi = parse(&key, v)?,
            "rotations" => self.ood.rotations_enabled = parse_bool(&key, v)?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "amplitude_log" => self.amplitude_log = parse_bool(&key, v)?,
            "c_reg" => self.logreg.c_reg = parse(&key, v)?,
            "max_iter" => self.logreg.max_iter = parse(&key, v)?,
            "tol" => self.logreg.tol = parse(&key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` text. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key, value).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Uses `CATEQ_DATA_ROOT` for `data_root` when set and non-empty.
    pub fn apply_env(&mut self) {
        if let Some(root) = std::env::var_os(DATA_ROOT_ENV).filter(|v| !v.is_empty()) {
            self.data_root = PathBuf::from(root);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config(
                "at least one representation kind is required".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.window_len == 0 {
            return Err(Error::Config("window_len must be positive".into()));
        }
        if self.kinds.iter().any(|k| k.uses_bins()) {
            signal::check_bins(self.k, self.window_len)?;
        }
        self.ood.validate()?;
        self.logreg.validate()
    }

    pub fn dataset(&self) -> DatasetConfig {
        let mut d = DatasetConfig::new(&self.data_root);
        d.acc_variant = self.acc_variant;
        d.window_len = self.window_len;
        d
    }
}
