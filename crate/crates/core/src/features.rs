//! Representation extractors: the full group × poset map and its three
//! ablations.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{self, TimeSeries, TriAxialWindow};
use crate::symmetry::{
    AxesFeature, NodeData, NodeFeature, NodeRepresentation, PerSensor, SensorId,
};

/// Default number of low-frequency bins.
pub const DEFAULT_BINS: usize = 24;

/// Channels whose within-window standard deviation falls below this are
/// zeroed by the raw baseline.
const BASELINE_STD_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationKind {
    /// Per-channel z-scored raw samples (`6T`).
    BaselineRaw,
    /// Per-axis spectra after per-sensor RMS normalization (`6k`).
    GroupOnly,
    /// Spectra of the raw magnitude, no normalization (`2k`).
    PosetOnly,
    /// The full equivariant map (`3k + 2`).
    GroupPoset,
}

impl RepresentationKind {
    pub const ALL: [RepresentationKind; 4] = [
        RepresentationKind::BaselineRaw,
        RepresentationKind::GroupOnly,
        RepresentationKind::PosetOnly,
        RepresentationKind::GroupPoset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RepresentationKind::BaselineRaw => "baseline_raw",
            RepresentationKind::GroupOnly => "group_only",
            RepresentationKind::PosetOnly => "poset_only",
            RepresentationKind::GroupPoset => "group_poset",
        }
    }

    pub fn dim(self, k: usize, window_len: usize) -> usize {
        let s = SensorId::COUNT;
        match self {
            RepresentationKind::BaselineRaw => 3 * s * window_len,
            RepresentationKind::GroupOnly => 3 * s * k,
            RepresentationKind::PosetOnly => s * k,
            RepresentationKind::GroupPoset => (s + 1) * k + s,
        }
    }

    pub fn uses_bins(self) -> bool {
        self != RepresentationKind::BaselineRaw
    }
}

impl fmt::Display for RepresentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RepresentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let squashed = norm.replace('_', "");
        Self::ALL
            .into_iter()
            .find(|k| k.name().replace('_', "") == squashed)
            .or(match norm.as_str() {
                "baseline" | "raw" => Some(RepresentationKind::BaselineRaw),
                "group" => Some(RepresentationKind::GroupOnly),
                "poset" => Some(RepresentationKind::PosetOnly),
                "ours" | "group_x_poset" => Some(RepresentationKind::GroupPoset),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown representation kind `{s}`")))
    }
}

/// Whether the amplitude scalars are kept.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureView {
    #[default]
    Full,
    /// Drops the amplitude entries, leaving a fully group-invariant vector.
    SpectralOnly,
}

impl FromStr for FeatureView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "full" => Ok(FeatureView::Full),
            "spectral_only" | "spectral" => Ok(FeatureView::SpectralOnly),
            other => Err(Error::Config(format!("unknown feature view `{other}`"))),
        }
    }
}

/// Both sensor blocks of one window, plus an optional activity label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiSensorWindow {
    pub blocks: PerSensor<TriAxialWindow>,
    pub label: Option<u8>,
}

impl MultiSensorWindow {
    pub fn new(acc: TriAxialWindow, gyro: TriAxialWindow, label: Option<u8>) -> Result<Self> {
        if acc.len() != gyro.len() {
            return Err(Error::LengthMismatch {
                expected: acc.len(),
                found: gyro.len(),
            });
        }
        Ok(Self {
            blocks: PerSensor::new(acc, gyro),
            label,
        })
    }

    pub fn window_len(&self) -> usize {
        self.blocks.acc.len()
    }

    pub fn block(&self, s: SensorId) -> &TriAxialWindow {
        &self.blocks[s]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: RepresentationKind,
}

/// `|rFFT(N(z))|` on bins `1..=k`.
pub fn phi_mag(z: &TimeSeries, k: usize) -> Result<Vec<f64>> {
    signal::rfft_magnitude(signal::normalize_1d(z).as_slice(), k)
}

/// Spectrum of the pooled, RMS-normalized block together with the block's
/// amplitude `‖w‖₂`.
pub fn phi_axes(w: &TriAxialWindow, k: usize) -> Result<AxesFeature> {
    Ok(AxesFeature {
        spectrum: phi_mag(&signal::magnitude_pool(&signal::rms_normalize(w)), k)?,
        amplitude: signal::block_l2_norm(w),
    })
}

/// Functorial average `(1/|S|) Σ_s Φ_{s:mag}(z_s)`.
pub fn phi_total(mags: &PerSensor<TimeSeries>, k: usize) -> Result<Vec<f64>> {
    let spectra = mags.try_map(|_, z| phi_mag(z, k))?;
    Ok(average(&spectra))
}

fn average(spectra: &PerSensor<Vec<f64>>) -> Vec<f64> {
    let mut acc = vec![0.0; spectra.acc.len()];
    for (_, v) in spectra.iter() {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    acc.iter().map(|a| a / SensorId::COUNT as f64).collect()
}

fn zscore(channel: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let n = channel.len() as f64;
    let mean = channel.iter().sum::<f64>() / n;
    let var = channel.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    channel.iter().map(move |v| {
        if std < BASELINE_STD_FLOOR {
            0.0
        } else {
            (v - mean) / std
        }
    })
}

/// Extracts the representation `kind` of a window with `k` bins.
pub fn extract(w: &MultiSensorWindow, kind: RepresentationKind, k: usize) -> Result<FeatureVector> {
    let len = w.window_len();
    if kind.uses_bins() {
        signal::check_bins(k, len)?;
    }
    let mut values = Vec::with_capacity(kind.dim(k, len));
    match kind {
        RepresentationKind::GroupPoset => {
            let per_sensor = w.blocks.try_map(|_, block| phi_axes(block, k))?;
            let spectra = per_sensor.map(|_, f| f.spectrum.clone());
            for (_, spec) in spectra.iter() {
                values.extend_from_slice(spec);
            }
            values.extend(average(&spectra));
            for (_, f) in per_sensor.iter() {
                values.push(f.amplitude);
            }
        }
        RepresentationKind::GroupOnly => {
            for (_, block) in w.blocks.iter() {
                let normalized = signal::rms_normalize(block);
                for axis in normalized.axes() {
                    values.extend(signal::rfft_magnitude(axis.as_slice(), k)?);
                }
            }
        }
        RepresentationKind::PosetOnly => {
            for (_, block) in w.blocks.iter() {
                values.extend(signal::rfft_magnitude(
                    signal::magnitude_pool(block).as_slice(),
                    k,
                )?);
            }
        }
        RepresentationKind::BaselineRaw => {
            for (_, block) in w.blocks.iter() {
                for axis in block.axes() {
                    values.extend(zscore(axis.as_slice()));
                }
            }
        }
    }
    debug_assert_eq!(values.len(), kind.dim(k, len));
    Ok(FeatureVector { values, kind })
}

/// A contiguous named slice of a feature vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub name: String,
    pub range: Range<usize>,
    /// Amplitude blocks are gain-equivariant rather than invariant.
    pub amplitude: bool,
}

/// Fully determines the layout of extracted feature vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: RepresentationKind,
    pub k: usize,
    pub window_len: usize,
    pub view: FeatureView,
}

impl FeatureSpec {
    pub fn new(kind: RepresentationKind, k: usize, window_len: usize) -> Result<Self> {
        if window_len == 0 {
            return Err(Error::Empty("window"));
        }
        if kind.uses_bins() {
            signal::check_bins(k, window_len)?;
        }
        Ok(Self {
            kind,
            k,
            window_len,
            view: FeatureView::Full,
        })
    }

    pub fn with_view(mut self, view: FeatureView) -> Self {
        self.view = view;
        self
    }

    fn keeps_amplitude(&self) -> bool {
        self.kind == RepresentationKind::GroupPoset && self.view == FeatureView::Full
    }

    pub fn dim(&self) -> usize {
        let full = self.kind.dim(self.k, self.window_len);
        if self.kind == RepresentationKind::GroupPoset && !self.keeps_amplitude() {
            full - SensorId::COUNT
        } else {
            full
        }
    }

    pub fn blocks(&self) -> Vec<FeatureBlock> {
        let mut blocks = Vec::new();
        let mut start = 0;
        let mut push = |name: String, width: usize, amplitude: bool| {
            blocks.push(FeatureBlock {
                name,
                range: start..start + width,
                amplitude,
            });
            start += width;
        };
        match self.kind {
            RepresentationKind::GroupPoset => {
                for s in SensorId::ALL {
                    push(format!("{}_spec", s.prefix()), self.k, false);
                }
                push("total_spec".into(), self.k, false);
                if self.keeps_amplitude() {
                    push("amplitude".into(), SensorId::COUNT, true);
                }
            }
            RepresentationKind::GroupOnly => {
                for s in SensorId::ALL {
                    push(format!("{}_axes_spec", s.prefix()), 3 * self.k, false);
                }
            }
            RepresentationKind::PosetOnly => {
                for s in SensorId::ALL {
                    push(format!("{}_mag_spec", s.prefix()), self.k, false);
                }
            }
            RepresentationKind::BaselineRaw => {
                for s in SensorId::ALL {
                    push(format!("{}_raw", s.prefix()), 3 * self.window_len, false);
                }
            }
        }
        blocks
    }

    /// Column indices holding amplitude scalars.
    pub fn amplitude_columns(&self) -> Vec<usize> {
        self.blocks()
            .into_iter()
            .filter(|b| b.amplitude)
            .flat_map(|b| b.range)
            .collect()
    }

    /// Column headers, e.g. `acc_spec_01 .. amp_gyro`.
    pub fn names(&self) -> Vec<String> {
        let width = self.k.to_string().len().max(2);
        let bins = |prefix: &str| -> Vec<String> {
            (1..=self.k)
                .map(|r| format!("{prefix}_{r:0width$}"))
                .collect()
        };
        let axes = ["x", "y", "z"];
        let mut names = Vec::with_capacity(self.dim());
        match self.kind {
            RepresentationKind::GroupPoset => {
                for s in SensorId::ALL {
                    names.extend(bins(&format!("{}_spec", s.prefix())));
                }
                names.extend(bins("total_spec"));
                if self.keeps_amplitude() {
                    names.extend(SensorId::ALL.iter().map(|s| format!("amp_{}", s.prefix())));
                }
            }
            RepresentationKind::GroupOnly => {
                for s in SensorId::ALL {
                    for a in axes {
                        names.extend(bins(&format!("{}_{a}_spec", s.prefix())));
                    }
                }
            }
            RepresentationKind::PosetOnly => {
                for s in SensorId::ALL {
                    names.extend(bins(&format!("{}_mag_spec", s.prefix())));
                }
            }
            RepresentationKind::BaselineRaw => {
                let tw = (self.window_len - 1).to_string().len().max(3);
                for s in SensorId::ALL {
                    for a in axes {
                        names.extend(
                            (0..self.window_len).map(|n| format!("{}_{a}_t{n:0tw$}", s.prefix())),
                        );
                    }
                }
            }
        }
        names
    }

    pub fn extract(&self, w: &MultiSensorWindow) -> Result<Vec<f64>> {
        if w.window_len() != self.window_len {
            return Err(Error::LengthMismatch {
                expected: self.window_len,
                found: w.window_len(),
            });
        }
        let mut values = extract(w, self.kind, self.k)?.values;
        values.truncate(self.dim());
        Ok(values)
    }

    /// One row per window. Rows are computed in parallel and written in input
    /// order, so the result does not depend on the thread count.
    pub fn extract_matrix(&self, windows: &[MultiSensorWindow]) -> Result<Array2<f64>> {
        let rows: Vec<Vec<f64>> = windows
            .par_iter()
            .map(|w| self.extract(w))
            .collect::<Result<_>>()?;
        let dim = self.dim();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Array2::from_shape_vec((windows.len(), dim), flat)
            .expect("every row has the feature dimension"))
    }
}

/// Writes a feature matrix as CSV: a header row (`label` first when labels are
/// given, then the feature names) followed by one row per window.
pub fn write_feature_csv<W: Write>(
    mut out: W,
    names: &[String],
    matrix: &Array2<f64>,
    labels: Option<&[u8]>,
) -> std::io::Result<()> {
    let mut header: Vec<&str> = Vec::with_capacity(names.len() + 1);
    if labels.is_some() {
        header.push("label");
    }
    header.extend(names.iter().map(String::as_str));
    writeln!(out, "{}", header.join(","))?;
    for (i, row) in matrix.outer_iter().enumerate() {
        let mut line = String::new();
        if let Some(labels) = labels {
            line.push_str(&labels[i].to_string());
            line.push(',');
        }
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        line.push_str(&cells.join(","));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// The per-node maps `Φ_a` of the group × poset representation.
#[derive(Clone, Copy, Debug)]
pub struct GroupPosetMaps {
    k: usize,
    skip_normalization: bool,
}

impl GroupPosetMaps {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            skip_normalization: false,
        }
    }

    /// A deliberately broken variant that omits every normalization step.
    /// Used to check that the naturality suite can fail.
    pub fn without_normalization(k: usize) -> Self {
        Self {
            k,
            skip_normalization: true,
        }
    }

    fn mag(&self, z: &TimeSeries) -> Result<Vec<f64>> {
        if self.skip_normalization {
            signal::rfft_magnitude(z.as_slice(), self.k)
        } else {
            phi_mag(z, self.k)
        }
    }
}

impl NodeRepresentation for GroupPosetMaps {
    fn phi(&self, d: &NodeData) -> Result<NodeFeature> {
        Ok(match d {
            NodeData::Axes(s, w) => {
                let feature = if self.skip_normalization {
                    AxesFeature {
                        spectrum: self.mag(&signal::magnitude_pool(w))?,
                        amplitude: signal::block_l2_norm(w),
                    }
                } else {
                    phi_axes(w, self.k)?
                };
                NodeFeature::Axes(*s, feature)
            }
            NodeData::Mag(s, z) => NodeFeature::Mag(*s, self.mag(z)?),
            NodeData::Total(zs) => NodeFeature::Total(average(&zs.try_map(|_, z| self.mag(z))?)),
        })
    }
}

/// Per-node maps for `kind`. Only the group × poset representation is defined
/// node by node; the ablations are flat maps with no functorial structure.
pub fn node_representation(kind: RepresentationKind, k: usize) -> Result<GroupPosetMaps> {
    match kind {
        RepresentationKind::GroupPoset => Ok(GroupPosetMaps::new(k)),
        other => Err(Error::Unsupported(format!(
            "{other} has no per-node feature maps"
        ))),
    }
}
