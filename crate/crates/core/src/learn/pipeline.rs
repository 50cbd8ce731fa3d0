use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::logreg::{fit_logreg, LogRegModel, LogRegParams, TrainReport};
use super::metrics::{score, Metrics};
use super::scaler::{fit_scaler, ScalerParams};
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, MultiSensorWindow};

/// Added inside the amplitude log so a zero amplitude stays finite.
pub const AMPLITUDE_LOG_EPS: f64 = 1e-12;

pub const MODEL_FORMAT: &str = "cateq-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Replaces the amplitude columns of `x` by `ln(a + 1e-12)`.
pub fn apply_amplitude_log(spec: &FeatureSpec, x: &mut Array2<f64>) {
    for col in spec.amplitude_columns() {
        x.column_mut(col)
            .mapv_inplace(|a| (a + AMPLITUDE_LOG_EPS).ln());
    }
}

/// Feature extraction, optional amplitude log, standardization, and the
/// logistic-regression head, bundled so inference repeats training exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub spec: FeatureSpec,
    pub amplitude_log: bool,
    pub scaler: ScalerParams,
    pub model: LogRegModel,
}

impl Classifier {
    /// Fits on pre-extracted raw features (rows laid out per `spec`).
    pub fn fit_features(
        spec: FeatureSpec,
        amplitude_log: bool,
        raw: &Array2<f64>,
        labels: &[u8],
        params: LogRegParams,
    ) -> Result<(Self, TrainReport)> {
        if raw.ncols() != spec.dim() {
            return Err(Error::Dimension {
                expected: spec.dim(),
                found: raw.ncols(),
            });
        }
        let mut x = raw.clone();
        if amplitude_log {
            apply_amplitude_log(&spec, &mut x);
        }
        let scaler = fit_scaler(&x)?;
        let x = scaler.transform(&x)?;
        let (model, report) = fit_logreg(&x, labels, params)?;
        Ok((
            Self {
                spec,
                amplitude_log,
                scaler,
                model,
            },
            report,
        ))
    }

    pub fn fit_windows(
        spec: FeatureSpec,
        amplitude_log: bool,
        windows: &[MultiSensorWindow],
        labels: &[u8],
        params: LogRegParams,
    ) -> Result<(Self, TrainReport)> {
        let raw = spec.extract_matrix(windows)?;
        Self::fit_features(spec, amplitude_log, &raw, labels, params)
    }

    /// Model input for raw feature rows.
    pub fn prepare(&self, raw: &Array2<f64>) -> Result<Array2<f64>> {
        if raw.ncols() != self.spec.dim() {
            return Err(Error::Dimension {
                expected: self.spec.dim(),
                found: raw.ncols(),
            });
        }
        let mut x = raw.clone();
        if self.amplitude_log {
            apply_amplitude_log(&self.spec, &mut x);
        }
        self.scaler.transform(&x)
    }

    pub fn predict_features(&self, raw: &Array2<f64>) -> Result<Vec<u8>> {
        self.model.predict(&self.prepare(raw)?)
    }

    pub fn predict_proba_features(&self, raw: &Array2<f64>) -> Result<Array2<f64>> {
        self.model.predict_proba(&self.prepare(raw)?)
    }

    pub fn predict_windows(&self, windows: &[MultiSensorWindow]) -> Result<Vec<u8>> {
        self.predict_features(&self.spec.extract_matrix(windows)?)
    }

    pub fn evaluate_windows(
        &self,
        windows: &[MultiSensorWindow],
        labels: &[u8],
    ) -> Result<Metrics> {
        score(labels, &self.predict_windows(windows)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(text)?.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// On-disk layout. Floats are written with round-trip precision, so a loaded
/// model predicts bit-identically.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    format_version: u32,
    feature: FeatureSpec,
    dim: usize,
    amplitude_log: bool,
    hyperparams: LogRegParams,
    classes: Vec<u8>,
    scaler: ScalerParams,
    /// One row per class.
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl From<&Classifier> for ModelFile {
    fn from(c: &Classifier) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            format_version: MODEL_FORMAT_VERSION,
            feature: c.spec,
            dim: c.spec.dim(),
            amplitude_log: c.amplitude_log,
            hyperparams: c.model.params,
            classes: c.model.classes.clone(),
            scaler: c.scaler.clone(),
            weights: c.model.weights.outer_iter().map(|r| r.to_vec()).collect(),
            biases: c.model.biases.to_vec(),
        }
    }
}

impl TryFrom<ModelFile> for Classifier {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let bad = |m: String| Err(Error::ModelFormat(m));
        if f.format != MODEL_FORMAT {
            return bad(format!("unknown format `{}`", f.format));
        }
        if f.format_version != MODEL_FORMAT_VERSION {
            return bad(format!(
                "unsupported format_version {} (this build reads {MODEL_FORMAT_VERSION})",
                f.format_version
            ));
        }
        let spec = FeatureSpec::new(f.feature.kind, f.feature.k, f.feature.window_len)?
            .with_view(f.feature.view);
        let d = spec.dim();
        let c = f.classes.len();
        if f.dim != d {
            return bad(format!(
                "dim {} disagrees with the feature spec ({d})",
                f.dim
            ));
        }
        if f.scaler.mean.len() != d || f.scaler.std.len() != d {
            return bad("scaler length disagrees with dim".into());
        }
        if c < 2 || f.classes.windows(2).any(|p| p[0] >= p[1]) {
            return bad("classes must be strictly increasing with at least two entries".into());
        }
        if f.weights.len() != c || f.weights.iter().any(|r| r.len() != d) || f.biases.len() != c {
            return bad("weight or bias shape disagrees with classes x dim".into());
        }
        let all = f
            .weights
            .iter()
            .flatten()
            .chain(&f.biases)
            .chain(&f.scaler.mean)
            .chain(&f.scaler.std);
        if all.clone().any(|v| !v.is_finite()) || f.scaler.std.iter().any(|s| *s <= 0.0) {
            return bad("non-finite parameter or non-positive scale".into());
        }
        f.hyperparams.validate()?;
        let weights = Array2::from_shape_vec((c, d), f.weights.into_iter().flatten().collect())
            .expect("checked shape");
        Ok(Classifier {
            spec,
            amplitude_log: f.amplitude_log,
            scaler: f.scaler,
            model: LogRegModel {
                weights,
                biases: Array1::from(f.biases),
                params: f.hyperparams,
                classes: f.classes,
            },
        })
    }
}
