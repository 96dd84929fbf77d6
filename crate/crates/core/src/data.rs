//! Datasets, train/calibration/test splitting, standardization and CSV ingestion.
//!
//! Every row carries its original index and the split it was assigned to, so the
//! recalibration step can refuse calibration data the base model was trained on.

use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::scalar::Scalar;

/// Which part of the train/calibration/test protocol a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitRole {
    Full,
    Train,
    Calibration,
    Test,
}

/// Labelled regression data: `features` is rows x d, `labels` has one entry per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Array2<T>,
    labels: Array1<T>,
    name: String,
    row_ids: Vec<usize>,
    role: SplitRole,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Array2<T>, labels: Array1<T>, name: impl Into<String>) -> Result<Self> {
        let rows = features.nrows();
        let ids = (0..rows).collect();
        Self::with_provenance(features, labels, name, ids, SplitRole::Full)
    }

    pub fn from_rows(rows: Vec<Vec<T>>, labels: Vec<T>, name: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(CalibError::InvalidDataset("ragged feature rows".into()));
        }
        let n = rows.len();
        let flat: Vec<T> = rows.into_iter().flatten().collect();
        let features = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| CalibError::InvalidDataset(e.to_string()))?;
        Self::new(features, Array1::from(labels), name)
    }

    fn with_provenance(
        features: Array2<T>,
        labels: Array1<T>,
        name: impl Into<String>,
        row_ids: Vec<usize>,
        role: SplitRole,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(CalibError::InvalidDataset(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(CalibError::InvalidDataset("non-finite entry".into()));
        }
        Ok(Self {
            features,
            labels,
            name: name.into(),
            row_ids,
            role,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn labels(&self) -> &Array1<T> {
        &self.labels
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> T {
        self.labels[i]
    }

    /// Original row indices in the source dataset.
    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn role(&self) -> SplitRole {
        self.role
    }

    /// Iterates `(features, label)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (ArrayView1<'_, T>, T)> + '_ {
        self.features.outer_iter().zip(self.labels.iter().copied())
    }

    /// Rows at `indices` (positions in this dataset), tagged with `role`.
    pub fn subset(&self, indices: &[usize], role: SplitRole) -> Self {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let row_ids = indices.iter().map(|&i| self.row_ids[i]).collect();
        Self {
            features,
            labels,
            name: self.name.clone(),
            row_ids,
            role,
        }
    }

    /// Reads a CSV file; the last column is the label.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| CalibError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "csv".into());
        Self::from_csv_reader(file, name)
    }

    /// Parses comma-separated numeric rows. A first row that does not parse as
    /// numbers is treated as a header.
    pub fn from_csv_reader<R: Read>(reader: R, name: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Vec<T>> = Vec::new();
        let mut labels = Vec::new();
        let mut width = None;
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| CalibError::InvalidDataset(e.to_string()))?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(str::parse::<f64>).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if line == 0 => continue,
                Err(e) => {
                    return Err(CalibError::InvalidDataset(format!(
                        "line {}: {e}",
                        line + 1
                    )))
                }
            };
            if values.len() < 2 {
                return Err(CalibError::InvalidDataset(format!(
                    "line {}: need at least one feature and a label",
                    line + 1
                )));
            }
            match width {
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(CalibError::InvalidDataset(format!(
                        "line {}: expected {w} columns, found {}",
                        line + 1,
                        values.len()
                    )))
                }
                _ => {}
            }
            let (label, feats) = values.split_last().expect("non-empty row");
            labels.push(T::lit(*label));
            rows.push(feats.iter().map(|&v| T::lit(v)).collect());
        }
        Self::from_rows(rows, labels, name)
    }
}

/// Fractions of rows sent to training, calibration and test, plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub cal_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, cal_frac: f64, test_frac: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            train_frac,
            cal_frac,
            test_frac,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The 60/20/20 protocol.
    pub fn standard(seed: u64) -> Self {
        Self {
            train_frac: 0.6,
            cal_frac: 0.2,
            test_frac: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for f in [self.train_frac, self.cal_frac, self.test_frac] {
            if !(f > 0.0 && f < 1.0) {
                return Err(CalibError::InvalidSplit(format!("fraction {f} outside (0,1)")));
            }
        }
        let total = self.train_frac + self.cal_frac + self.test_frac;
        if (total - 1.0).abs() > 1e-9 {
            return Err(CalibError::InvalidSplit(format!("fractions sum to {total}")));
        }
        Ok(())
    }

    /// Split sizes for `n` rows; each is within one row of its exact share.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let train = (n as f64 * self.train_frac).round() as usize;
        let cal = ((n as f64 * self.cal_frac).round() as usize).min(n - train.min(n));
        let train = train.min(n);
        [train, cal, n - train - cal]
    }
}

/// Shuffles rows with a seeded generator and partitions them into train/calibration/test.
pub fn split_dataset<T: Scalar>(
    data: &Dataset<T>,
    spec: &SplitSpec,
) -> Result<(Dataset<T>, Dataset<T>, Dataset<T>)> {
    spec.validate()?;
    let n = data.len();
    let sizes = spec.sizes(n);
    if n < 10 || sizes.iter().any(|&s| s == 0) {
        return Err(CalibError::TooFewRows { rows: n, sizes });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let (train_idx, rest) = order.split_at(sizes[0]);
    let (cal_idx, test_idx) = rest.split_at(sizes[1]);
    Ok((
        data.subset(train_idx, SplitRole::Train),
        data.subset(cal_idx, SplitRole::Calibration),
        data.subset(test_idx, SplitRole::Test),
    ))
}

/// Per-column affine standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub feature_means: Vec<T>,
    pub feature_stds: Vec<T>,
    pub label_mean: T,
    pub label_std: T,
}

fn mean_std<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> (T, T) {
    let n = T::from_count(values.clone().count());
    let mean = values.clone().fold(T::zero(), |a, v| a + v) / n;
    let var = values.fold(T::zero(), |a, v| a + (v - mean) * (v - mean)) / n;
    let std = var.sqrt();
    // Constant columns keep unit scale.
    let tiny = T::lit(1e-12) * (T::one() + mean.abs());
    (mean, if std > tiny { std } else { T::one() })
}

impl<T: Scalar> Standardizer<T> {
    /// Fits means and population standard deviations. Panics on an empty dataset.
    pub fn fit(train: &Dataset<T>) -> Self {
        assert!(!train.is_empty(), "cannot standardize an empty dataset");
        let (feature_means, feature_stds) = train
            .features()
            .columns()
            .into_iter()
            .map(|c| mean_std(c.iter().copied()))
            .unzip();
        let (label_mean, label_std) = mean_std(train.labels().iter().copied());
        Self {
            feature_means,
            feature_stds,
            label_mean,
            label_std,
        }
    }

    pub fn apply(&self, data: &Dataset<T>) -> Dataset<T> {
        let mut features = data.features().clone();
        for (j, mut col) in features.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.feature_means[j], self.feature_stds[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        let labels = data.labels().mapv(|y| self.apply_label(y));
        Dataset {
            features,
            labels,
            name: data.name.clone(),
            row_ids: data.row_ids.clone(),
            role: data.role,
        }
    }

    pub fn invert(&self, data: &Dataset<T>) -> Dataset<T> {
        let mut features = data.features().clone();
        for (j, mut col) in features.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.feature_means[j], self.feature_stds[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        let labels = data.labels().mapv(|z| self.invert_label(z));
        Dataset {
            features,
            labels,
            name: data.name.clone(),
            row_ids: data.row_ids.clone(),
            role: data.role,
        }
    }

    pub fn apply_row(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.feature_means.iter().zip(&self.feature_stds))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn apply_label(&self, y: T) -> T {
        (y - self.label_mean) / self.label_std
    }

    pub fn invert_label(&self, z: T) -> T {
        z * self.label_std + self.label_mean
    }
}
