//! Modular conformal calibration: turn any regression predictor into a calibrated
//! distribution predictor `H[x](y) = q(φ(f(x), y))`.
//!
//! The pipeline is generic over the scalar type ([`Scalar`], implemented for `f32`
//! and `f64`); the `f64` aliases below cover the common case.

pub mod base;
pub mod conformal;
pub mod data;
pub mod error;
pub mod interp;
pub mod mcc;
pub mod metrics;
pub mod naf;
pub mod numeric;
pub mod prediction;
pub mod scalar;
pub mod scores;

pub use conformal::{ConformalIntervalPredictor, Nonconformity};
pub use data::{split_dataset, Dataset, SplitRole, SplitSpec, Standardizer};
pub use error::{CalibError, Result};
pub use interp::{lambda_accuracy, Interpolator, InterpolatorKind, MonotoneMap};
pub use mcc::{FnPredictor, Predictor, Provenance, RecalibratedCdf, RecalibratedPredictor};
pub use naf::NafConfig;
pub use prediction::{CdfView, Gaussian, Interval, Mixture, PredictionOutput, QuantileSet};
pub use scalar::Scalar;
pub use scores::{CalibrationScore, ScoreKind};

pub type Dataset64 = Dataset<f64>;
pub type Prediction64 = PredictionOutput<f64>;
pub type Score64 = CalibrationScore<f64>;
pub type Map64 = MonotoneMap<f64>;
pub type Recalibrated64 = RecalibratedPredictor<f64>;

pub type Dataset32 = Dataset<f32>;
pub type Prediction32 = PredictionOutput<f32>;
pub type Map32 = MonotoneMap<f32>;
