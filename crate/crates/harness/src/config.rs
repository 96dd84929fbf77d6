//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` are comments. List values are comma separated.
//! Unknown and repeated keys are rejected.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mcc_core::base::{BaseKind, TrainConfig};
use mcc_core::mcc::named_method;
use mcc_core::{InterpolatorKind, NafConfig, ScoreKind, SplitSpec};
use serde::{Deserialize, Serialize};

use crate::datasets::DatasetSpec;
use crate::error::{HarnessError, Result};

/// Every accepted key with its default and meaning. Drives `--help`.
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "datasets",
        "hetero",
        "synthetic generators (linear-gauss, hetero, skew; optional :rows=N:seed=S) or CSV paths",
    ),
    (
        "bases",
        "point,distribution",
        "base kinds: point, interval, quantile-K, distribution, ensemble, ensemble-K",
    ),
    (
        "scores",
        "auto",
        "calibration scores: auto, residue, interval, cdf, zscore, quantile, ensemble-sum",
    ),
    ("interpolators", "linear", "interpolators: naive, linear, random, naf"),
    (
        "methods",
        "",
        "extra named score+interpolator pairs: isotonic (cdf+linear), conformal-calibration (cdf+random)",
    ),
    ("seeds", "0,1,2,3", "split and training seeds, one report row per seed"),
    ("split", "0.6,0.2,0.2", "train,calibration,test fractions"),
    ("rows", "2000", "rows drawn from synthetic generators without an explicit :rows="),
    ("output_dir", "calibrate-out", "directory receiving report files"),
    ("hidden", "64", "hidden units per layer of base networks"),
    ("epochs", "2000", "full-batch Adam epochs for base networks"),
    ("learning_rate", "0.01", "Adam step size for base networks"),
    ("naf_hidden_units", "200", "sigmoid units in the flow interpolator"),
    ("naf_max_iters", "5000", "Adam iterations for the flow interpolator"),
    ("naf_learning_rate", "0.01", "Adam step size for the flow interpolator"),
    ("naf_target_accuracy", "0.001", "target lambda accuracy for the flow interpolator"),
    ("naf_lm_iters", "200", "Gauss-Newton iterations before Adam"),
    (
        "naf_allow_unconverged",
        "true",
        "keep flow fits that miss the target instead of failing the cell",
    ),
];

/// `--help` text listing every config key.
pub fn keys_help() -> String {
    let mut out = String::from("Config keys (key = value, lists comma separated, # comments):\n");
    for (key, default, doc) in KEYS {
        let default = if default.is_empty() { "<empty>" } else { default };
        out.push_str(&format!("  {key:<22} {doc} [default: {default}]\n"));
    }
    out
}

/// A score column entry: a fixed score or the natural score of each base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreChoice {
    Auto,
    Fixed(ScoreKind),
}

impl ScoreChoice {
    pub fn resolve(self, base: BaseKind) -> ScoreKind {
        match self {
            ScoreChoice::Fixed(k) => k,
            ScoreChoice::Auto => auto_score(base),
        }
    }
}

impl fmt::Display for ScoreChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreChoice::Auto => f.write_str("auto"),
            ScoreChoice::Fixed(k) => k.fmt(f),
        }
    }
}

impl FromStr for ScoreChoice {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            Ok(ScoreChoice::Auto)
        } else {
            Ok(ScoreChoice::Fixed(s.parse()?))
        }
    }
}

pub fn auto_score(base: BaseKind) -> ScoreKind {
    match base {
        BaseKind::Point => ScoreKind::Residue,
        BaseKind::Interval => ScoreKind::Interval,
        BaseKind::Quantile(_) => ScoreKind::Quantile,
        BaseKind::Distribution | BaseKind::Ensemble(_) => ScoreKind::Cdf,
    }
}

/// Which scores accept which base kinds.
pub fn compatible(score: ScoreKind, base: BaseKind) -> bool {
    matches!(
        (score, base),
        (ScoreKind::Residue, BaseKind::Point)
            | (ScoreKind::Interval, BaseKind::Interval)
            | (ScoreKind::Quantile, BaseKind::Quantile(_))
            | (ScoreKind::Cdf | ScoreKind::ZScore, BaseKind::Distribution | BaseKind::Ensemble(_))
            | (ScoreKind::EnsembleSum, BaseKind::Ensemble(_))
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSpec>,
    pub base_kinds: Vec<BaseKind>,
    pub scores: Vec<ScoreChoice>,
    pub interpolators: Vec<InterpolatorKind>,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    /// Train, calibration and test fractions. The shuffle seed comes from `seeds`.
    pub split: [f64; 3],
    pub output_dir: PathBuf,
    /// Network settings; the seed is replaced per run.
    pub train: TrainConfig,
    pub naf: NafConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::parse("").expect("defaults are valid")
    }
}

/// One (score, interpolator) pair evaluated on a base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub score: ScoreKind,
    pub interp: InterpolatorKind,
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    split_list(value)
        .map(|s| s.parse::<T>().map_err(|e| HarnessError::Config(format!("{key}: {e}"))))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| HarnessError::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates config text. Keys left out keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values: Vec<(&str, String)> = KEYS.iter().map(|(k, d, _)| (*k, d.to_string())).collect();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| HarnessError::ConfigLine { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let slot = values
                .iter_mut()
                .find(|(k, _)| *k == key)
                .ok_or_else(|| err(format!("unknown key `{key}`")))?;
            if !seen.insert(key.to_string()) {
                return Err(err(format!("key `{key}` given twice")));
            }
            slot.1 = value.trim().to_string();
        }
        let get = |key: &str| -> &str { &values.iter().find(|(k, _)| *k == key).expect("known key").1 };

        let rows: usize = parse_one("rows", get("rows"))?;
        let datasets = split_list(get("datasets"))
            .map(|s| DatasetSpec::parse(s, rows))
            .collect::<Result<Vec<_>>>()?;
        let split: Vec<f64> = parse_list("split", get("split"))?;
        let split: [f64; 3] = split
            .try_into()
            .map_err(|_| HarnessError::Config("split: expected three fractions".into()))?;
        let naf = NafConfig {
            hidden_units: parse_one("naf_hidden_units", get("naf_hidden_units"))?,
            max_iters: parse_one("naf_max_iters", get("naf_max_iters"))?,
            learning_rate: parse_one("naf_learning_rate", get("naf_learning_rate"))?,
            target_accuracy: parse_one("naf_target_accuracy", get("naf_target_accuracy"))?,
            lm_iters: parse_one("naf_lm_iters", get("naf_lm_iters"))?,
            allow_unconverged: parse_one("naf_allow_unconverged", get("naf_allow_unconverged"))?,
        };
        let config = Self {
            datasets,
            base_kinds: parse_list("bases", get("bases"))?,
            scores: parse_list("scores", get("scores"))?,
            interpolators: parse_list("interpolators", get("interpolators"))?,
            methods: split_list(get("methods")).map(str::to_string).collect(),
            seeds: parse_list("seeds", get("seeds"))?,
            split,
            output_dir: PathBuf::from(get("output_dir")),
            train: TrainConfig {
                hidden: parse_one("hidden", get("hidden"))?,
                epochs: parse_one("epochs", get("epochs"))?,
                learning_rate: parse_one("learning_rate", get("learning_rate"))?,
                seed: 0,
            },
            naf,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(HarnessError::Config(format!("{name} must not be empty")))
            } else {
                Ok(())
            }
        };
        nonempty("datasets", self.datasets.len())?;
        nonempty("bases", self.base_kinds.len())?;
        nonempty("seeds", self.seeds.len())?;
        if self.scores.is_empty() && self.methods.is_empty() {
            return Err(HarnessError::Config("scores and methods are both empty".into()));
        }
        if !self.scores.is_empty() {
            nonempty("interpolators", self.interpolators.len())?;
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(HarnessError::Config(format!("seed {s} listed twice")));
        }
        self.split_spec(0)?;
        if self.train.hidden == 0 || self.train.epochs == 0 {
            return Err(HarnessError::Config("hidden and epochs must be positive".into()));
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return Err(HarnessError::Config("learning_rate must be positive".into()));
        }
        self.naf.validate()?;
        for m in &self.methods {
            if named_method(m).is_none() {
                return Err(HarnessError::Config(format!("unknown method `{m}`")));
            }
        }
        for &base in &self.base_kinds {
            for cell in self.cells(base) {
                if !compatible(cell.score, base) {
                    return Err(HarnessError::Config(format!(
                        "score `{}` is not compatible with base `{base}`",
                        cell.score
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn split_spec(&self, seed: u64) -> Result<SplitSpec> {
        let [a, b, c] = self.split;
        Ok(SplitSpec::new(a, b, c, seed)?)
    }

    /// The (score, interpolator) pairs run for `base`, duplicates removed, in config order.
    pub fn cells(&self, base: BaseKind) -> Vec<Cell> {
        let mut out: Vec<Cell> = Vec::new();
        let grid = self.scores.iter().flat_map(|s| {
            self.interpolators.iter().map(move |&interp| Cell {
                score: s.resolve(base),
                interp,
            })
        });
        let named = self.methods.iter().filter_map(|m| named_method(m)).map(|(score, interp)| Cell { score, interp });
        for cell in grid.chain(named) {
            if !out.contains(&cell) {
                out.push(cell);
            }
        }
        out
    }

    /// Number of report rows the grid produces.
    pub fn row_count(&self) -> usize {
        let per_seed: usize = self.base_kinds.iter().map(|&b| self.cells(b).len()).sum();
        self.datasets.len() * self.seeds.len() * per_seed
    }
}
