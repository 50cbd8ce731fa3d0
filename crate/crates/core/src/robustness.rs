//! Measured counterparts of the invariance claims: feature displacement along
//! perturbation orbits, and agreement of a trained model on clean versus
//! perturbed inputs.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSpec, MultiSensorWindow, RepresentationKind};
use crate::learn::{score, Classifier, Metrics};
use crate::perturb::{apply_draw, perturb_windows, sample_draw, OodConfig};

/// Statistics of `||psi_B(m x) - psi_B(x)||_2` over all (window, draw) pairs
/// for one set of feature columns `B`. The relative variant divides by
/// `||psi_B(x)||_2`; when that is zero the pair counts as 0 if the displacement
/// is also zero and as `+inf` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDisplacement {
    pub block: String,
    pub columns: Range<usize>,
    pub amplitude: bool,
    pub mean_abs: f64,
    pub max_abs: f64,
    pub mean_rel: f64,
    pub max_rel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementReport {
    pub spec: FeatureSpec,
    pub ood: OodConfig,
    pub n_windows: usize,
    pub n_draws: usize,
    /// One entry per feature block, in layout order.
    pub blocks: Vec<BlockDisplacement>,
    /// All non-amplitude columns taken together.
    pub spectral: Option<BlockDisplacement>,
    /// The whole feature vector.
    pub total: BlockDisplacement,
}

impl DisplacementReport {
    pub fn block(&self, name: &str) -> Option<&BlockDisplacement> {
        self.blocks.iter().find(|b| b.block == name)
    }
}

#[derive(Default)]
struct Accumulator {
    sum_abs: f64,
    max_abs: f64,
    sum_rel: f64,
    max_rel: f64,
    count: usize,
}

impl Accumulator {
    fn push(&mut self, clean: &[f64], moved: &[f64], cols: &[usize]) {
        let mut delta = 0.0;
        let mut norm = 0.0;
        for &j in cols {
            delta += (moved[j] - clean[j]).powi(2);
            norm += clean[j] * clean[j];
        }
        let (delta, norm) = (delta.sqrt(), norm.sqrt());
        let rel = if norm > 0.0 {
            delta / norm
        } else if delta == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        self.sum_abs += delta;
        self.max_abs = self.max_abs.max(delta);
        self.sum_rel += rel;
        self.max_rel = self.max_rel.max(rel);
        self.count += 1;
    }

    fn finish(self, block: String, columns: Range<usize>, amplitude: bool) -> BlockDisplacement {
        let n = self.count.max(1) as f64;
        BlockDisplacement {
            block,
            columns,
            amplitude,
            mean_abs: self.sum_abs / n,
            max_abs: self.max_abs,
            mean_rel: self.sum_rel / n,
            max_rel: self.max_rel,
        }
    }
}

/// Draw `j` for window `i` is `sample_draw(cfg.with_seed(cfg.seed + j), i)`,
/// so draw 0 matches the benchmark's perturbation of the same seed.
pub fn orbit_displacement(
    spec: &FeatureSpec,
    windows: &[MultiSensorWindow],
    cfg: &OodConfig,
    n_draws: usize,
) -> Result<DisplacementReport> {
    if n_draws == 0 {
        return Err(Error::Config("n_draws must be at least 1".into()));
    }
    if windows.is_empty() {
        return Err(Error::Empty("windows"));
    }
    cfg.validate()?;

    // (clean, perturbed per draw) for every window, in input order
    let pairs: Vec<(Vec<f64>, Vec<Vec<f64>>)> = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let clean = spec.extract(w)?;
            let moved = (0..n_draws as u64)
                .map(|j| {
                    let draw = sample_draw(&cfg.with_seed(cfg.seed.wrapping_add(j)), i as u64);
                    spec.extract(&apply_draw(w, &draw)?)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((clean, moved))
        })
        .collect::<Result<_>>()?;

    let layout = spec.blocks();
    let mut groups: Vec<(String, Range<usize>, bool, Vec<usize>)> = layout
        .iter()
        .map(|b| {
            (
                b.name.clone(),
                b.range.clone(),
                b.amplitude,
                b.range.clone().collect(),
            )
        })
        .collect();
    let has_amplitude = layout.iter().any(|b| b.amplitude);
    let spectral_cols: Vec<usize> = layout
        .iter()
        .filter(|b| !b.amplitude)
        .flat_map(|b| b.range.clone())
        .collect();
    if has_amplitude {
        groups.push(("spectral".into(), 0..spec.dim(), false, spectral_cols));
    }
    groups.push((
        "total".into(),
        0..spec.dim(),
        false,
        (0..spec.dim()).collect(),
    ));

    let mut acc: Vec<Accumulator> = groups.iter().map(|_| Accumulator::default()).collect();
    for (clean, moved) in &pairs {
        for m in moved {
            for (a, g) in acc.iter_mut().zip(&groups) {
                a.push(clean, m, &g.3);
            }
        }
    }
    let mut stats: Vec<BlockDisplacement> = acc
        .into_iter()
        .zip(groups)
        .map(|(a, (name, range, amp, _))| a.finish(name, range, amp))
        .collect();
    let total = stats.pop().expect("total group");
    let spectral = if has_amplitude { stats.pop() } else { None };

    Ok(DisplacementReport {
        spec: *spec,
        ood: *cfg,
        n_windows: windows.len(),
        n_draws,
        blocks: stats,
        spectral,
        total,
    })
}

/// Writes one CSV row per block (plus the `spectral` and `total` rows).
pub fn write_displacement_csv<W: Write>(
    mut out: W,
    reports: &[DisplacementReport],
) -> std::io::Result<()> {
    writeln!(
        out,
        "kind,view,block,amplitude,n_windows,n_draws,seed,mean_abs,max_abs,mean_rel,max_rel"
    )?;
    for r in reports {
        let view = match r.spec.view {
            crate::features::FeatureView::Full => "full",
            crate::features::FeatureView::SpectralOnly => "spectral_only",
        };
        for b in r
            .blocks
            .iter()
            .chain(&r.spectral)
            .chain(std::iter::once(&r.total))
        {
            writeln!(
                out,
                "{},{view},{},{},{},{},{},{:e},{:e},{:e},{:e}",
                r.spec.kind,
                b.block,
                b.amplitude,
                r.n_windows,
                r.n_draws,
                r.ood.seed,
                b.mean_abs,
                b.max_abs,
                b.mean_rel,
                b.max_rel
            )?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub kind: RepresentationKind,
    pub clean: Metrics,
    pub perturbed: Metrics,
    /// Fraction of windows whose predicted label is unchanged by the draw.
    pub agreement: f64,
    pub n_windows: usize,
}

/// Evaluates one trained classifier on clean windows and on their perturbed
/// copies (`sample_draw(cfg, i)` for window `i`).
pub fn risk_invariance_audit(
    classifier: &Classifier,
    kind: RepresentationKind,
    windows: &[MultiSensorWindow],
    labels: &[u8],
    cfg: &OodConfig,
) -> Result<AuditReport> {
    if classifier.spec.kind != kind {
        return Err(Error::Config(format!(
            "model was trained on `{}` features, audit asked for `{kind}`",
            classifier.spec.kind
        )));
    }
    if windows.len() != labels.len() {
        return Err(Error::Dimension {
            expected: windows.len(),
            found: labels.len(),
        });
    }
    let clean_pred = classifier.predict_windows(windows)?;
    let moved = perturb_windows(windows, cfg)?;
    let moved_pred = classifier.predict_windows(&moved)?;
    let same = clean_pred
        .iter()
        .zip(&moved_pred)
        .filter(|(a, b)| a == b)
        .count();
    Ok(AuditReport {
        kind,
        clean: score(labels, &clean_pred)?,
        perturbed: score(labels, &moved_pred)?,
        agreement: same as f64 / windows.len() as f64,
        n_windows: windows.len(),
    })
}
