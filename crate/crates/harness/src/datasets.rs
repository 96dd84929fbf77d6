//! Built-in synthetic regression tasks and CSV loading.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mcc_core::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Coefficients of the linear-gauss task.
pub const LINEAR_BETA: [f64; 5] = [1.0, -0.5, 0.25, 2.0, 0.0];
pub const LINEAR_NOISE: f64 = 1.0;
pub const SKEW_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Generator {
    LinearGauss,
    Hetero,
    Skew,
}

impl Generator {
    pub const ALL: [Generator; 3] = [Generator::LinearGauss, Generator::Hetero, Generator::Skew];

    pub fn name(self) -> &'static str {
        match self {
            Generator::LinearGauss => "linear-gauss",
            Generator::Hetero => "hetero",
            Generator::Skew => "skew",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Generator::LinearGauss => "y = b.x + N(0, 1), x ~ N(0, I_5), b = (1, -0.5, 0.25, 2, 0)",
            Generator::Hetero => "y = sin(2 x) + (0.2 + 0.5 |x|) N(0, 1), x ~ U(-2, 2)",
            Generator::Skew => "y = x + LogNormal(0, 0.5), x ~ U(-2, 2)",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Generator::LinearGauss => LINEAR_BETA.len(),
            Generator::Hetero | Generator::Skew => 1,
        }
    }

    /// One draw of `(x, y)`.
    pub fn sample(self, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        match self {
            Generator::LinearGauss => {
                let x: Vec<f64> = (0..LINEAR_BETA.len()).map(|_| StandardNormal.sample(rng)).collect();
                let e: f64 = StandardNormal.sample(rng);
                let y = x.iter().zip(LINEAR_BETA).map(|(a, b)| a * b).sum::<f64>() + LINEAR_NOISE * e;
                (x, y)
            }
            Generator::Hetero => {
                let x: f64 = rng.gen_range(-2.0..2.0);
                let e: f64 = StandardNormal.sample(rng);
                let (mean, scale) = hetero_truth(x);
                (vec![x], mean + scale * e)
            }
            Generator::Skew => {
                let x: f64 = rng.gen_range(-2.0..2.0);
                let noise = LogNormal::new(0.0, SKEW_SIGMA).expect("valid lognormal").sample(rng);
                (vec![x], x + noise)
            }
        }
    }

    /// `rows` draws from a generator seeded with `seed`.
    pub fn generate(self, rows: usize, seed: u64) -> Result<Dataset<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (xs, ys): (Vec<_>, Vec<_>) = (0..rows).map(|_| self.sample(&mut rng)).unzip();
        Ok(Dataset::from_rows(xs, ys, self.name())?)
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown synthetic dataset `{s}`")))
    }
}

/// Conditional mean and noise scale of the hetero task at `x`.
pub fn hetero_truth(x: f64) -> (f64, f64) {
    ((2.0 * x).sin(), 0.2 + 0.5 * x.abs())
}

/// Where a dataset comes from: `hetero`, `hetero:rows=5000:seed=3`, or a CSV path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatasetSpec {
    Synthetic { generator: Generator, rows: usize, seed: u64 },
    Csv { path: PathBuf },
}

impl DatasetSpec {
    pub fn parse(s: &str, default_rows: usize) -> Result<Self> {
        let s = s.trim();
        if s.ends_with(".csv") || s.contains('/') {
            return Ok(DatasetSpec::Csv { path: PathBuf::from(s) });
        }
        let mut parts = s.split(':');
        let generator: Generator = parts.next().unwrap_or_default().parse()?;
        let (mut rows, mut seed) = (default_rows, 0u64);
        for opt in parts {
            let (k, v) = opt
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("dataset option `{opt}` is not key=value")))?;
            let bad = || HarnessError::Config(format!("dataset option `{opt}` has a bad value"));
            match k {
                "rows" => rows = v.parse().map_err(|_| bad())?,
                "seed" => seed = v.parse().map_err(|_| bad())?,
                _ => return Err(HarnessError::Config(format!("unknown dataset option `{k}`"))),
            }
        }
        Ok(DatasetSpec::Synthetic { generator, rows, seed })
    }

    /// Report label for the dataset.
    pub fn label(&self) -> String {
        match self {
            DatasetSpec::Synthetic { generator, .. } => generator.name().to_string(),
            DatasetSpec::Csv { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        }
    }

    pub fn load(&self) -> Result<Dataset<f64>> {
        match self {
            DatasetSpec::Synthetic { generator, rows, seed } => generator.generate(*rows, *seed),
            DatasetSpec::Csv { path } => load_csv(path),
        }
    }
}

fn load_csv(path: &Path) -> Result<Dataset<f64>> {
    if !path.exists() {
        return Err(HarnessError::Config(format!("dataset file {} does not exist", path.display())));
    }
    Ok(Dataset::from_csv_path(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!(
            DatasetSpec::parse("hetero:rows=500:seed=2", 10).unwrap(),
            DatasetSpec::Synthetic {
                generator: Generator::Hetero,
                rows: 500,
                seed: 2
            }
        );
        assert!(matches!(DatasetSpec::parse("data/x.csv", 10).unwrap(), DatasetSpec::Csv { .. }));
        assert!(DatasetSpec::parse("nope", 10).is_err());
        assert!(DatasetSpec::parse("skew:rows=abc", 10).is_err());
    }

    #[test]
    fn generation_is_seeded() {
        let a = Generator::Skew.generate(50, 4).unwrap();
        let b = Generator::Skew.generate(50, 4).unwrap();
        assert_eq!(a.labels(), b.labels());
        assert_eq!(Generator::LinearGauss.generate(5, 0).unwrap().dim(), 5);
    }
}
