use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{GroupPosetMaps, DEFAULT_BINS};
use crate::signal::{magnitude_pool, TriAxialWindow, DEFAULT_WINDOW_LEN};
use crate::symmetry::{
    compose, generators_at, naturality_residual, Morphism, NodeData, NodeRepresentation, PerSensor,
    PosetArrow, PosetNode,
};

/// Residuals above this fail the suite.
pub const NATURALITY_TOLERANCE: f64 = 1e-8;

/// Composites are chains of 1 to this many generators.
pub const MAX_CHAIN: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaturalityConfig {
    /// Random windows; every generator is checked at every node of each.
    pub n_samples: usize,
    pub n_composites: usize,
    pub seed: u64,
    pub window_len: usize,
    pub k: usize,
    /// Run with the normalization step removed, which must fail.
    pub fault: bool,
    pub tolerance: f64,
}

impl Default for NaturalityConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            n_composites: 100,
            seed: 0,
            window_len: DEFAULT_WINDOW_LEN,
            k: DEFAULT_BINS,
            fault: false,
            tolerance: NATURALITY_TOLERANCE,
        }
    }
}

/// Largest residual seen for one family of morphisms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyResidual {
    pub family: String,
    pub checks: usize,
    pub max_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaturalityReport {
    pub config: NaturalityConfig,
    /// `shift`, `gain`, `axes_to_mag`, `mag_to_total`, then `composite`.
    pub families: Vec<FamilyResidual>,
    pub passed: bool,
    pub warning: Option<String>,
}

impl NaturalityReport {
    pub fn family(&self, name: &str) -> Option<&FamilyResidual> {
        self.families.iter().find(|f| f.family == name)
    }

    pub fn max_residual(&self) -> f64 {
        self.families.iter().fold(0.0, |m, f| m.max(f.max_residual))
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        if let Some(w) = &self.warning {
            writeln!(out, "warning: {w}")?;
        }
        for f in &self.families {
            let verdict = if f.max_residual <= self.config.tolerance {
                "ok"
            } else {
                "FAIL"
            };
            writeln!(
                out,
                "{:<13} checks={:<6} max_residual={:.3e}  {verdict}",
                f.family, f.checks, f.max_residual
            )?;
        }
        writeln!(
            out,
            "naturality: {} (tolerance {:e}{})",
            if self.passed { "PASS" } else { "FAIL" },
            self.config.tolerance,
            if self.config.fault {
                ", fault injected"
            } else {
                ""
            }
        )
    }
}

fn family(m: &Morphism) -> usize {
    match m.arrow {
        PosetArrow::Identity(_) if m.group.shift_amount() != 0 => 0,
        PosetArrow::Identity(_) => 1,
        PosetArrow::AxesToMag(_) => 2,
        PosetArrow::MagToTotal(_) | PosetArrow::AxesToTotal(_) => 3,
    }
}

const FAMILY_NAMES: [&str; 4] = ["shift", "gain", "axes_to_mag", "mag_to_total"];

fn random_window(rng: &mut ChaCha8Rng, len: usize) -> TriAxialWindow {
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let mut axis = || {
        (0..len)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<_>>()
    };
    let (x, y, z) = (axis(), axis(), axis());
    TriAxialWindow::from_axes(x, y, z).expect("finite samples")
}

fn data_at(node: PosetNode, blocks: &PerSensor<TriAxialWindow>) -> NodeData {
    match node {
        PosetNode::Axes(s) => NodeData::Axes(s, blocks[s].clone()),
        PosetNode::Mag(s) => NodeData::Mag(s, magnitude_pool(&blocks[s])),
        PosetNode::Total => NodeData::Total(blocks.map(|_, w| magnitude_pool(w))),
    }
}

fn random_gain(rng: &mut ChaCha8Rng) -> f64 {
    4f64.powf(rng.random_range(-1.0..1.0))
}

/// Checks every generator at every node on `n_samples` random windows, then
/// `n_composites` random chains, against the group x poset feature maps.
pub fn run_naturality_suite(cfg: &NaturalityConfig) -> Result<NaturalityReport> {
    let rep = if cfg.fault {
        GroupPosetMaps::without_normalization(cfg.k)
    } else {
        GroupPosetMaps::new(cfg.k)
    };
    crate::signal::check_bins(cfg.k, cfg.window_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<PerSensor<TriAxialWindow>> = (0..cfg.n_samples)
        .map(|_| PerSensor::from_fn(|_| random_window(&mut rng, cfg.window_len)))
        .collect();

    let mut worst = [(0usize, 0.0f64); 4];
    for blocks in &samples {
        for node in PosetNode::all() {
            let d = data_at(node, blocks);
            for gen in generators_at(node, cfg.window_len, random_gain(&mut rng))? {
                let r = naturality_residual(&gen, &rep as &dyn NodeRepresentation, &d)?;
                let slot = &mut worst[family(&gen)];
                slot.0 += 1;
                slot.1 = slot.1.max(r);
            }
        }
    }

    let mut composite = (0usize, 0.0f64);
    if !samples.is_empty() {
        let nodes = PosetNode::all();
        for j in 0..cfg.n_composites {
            let start = nodes[rng.random_range(0..nodes.len())];
            let len = rng.random_range(1..=MAX_CHAIN);
            let mut chain = Morphism::identity(start, cfg.window_len);
            for _ in 0..len {
                let options = generators_at(chain.target(), cfg.window_len, random_gain(&mut rng))?;
                let next = options[rng.random_range(0..options.len())];
                chain = compose(&next, &chain)?;
            }
            let d = data_at(start, &samples[j % samples.len()]);
            let r = naturality_residual(&chain, &rep, &d)?;
            composite.0 += 1;
            composite.1 = composite.1.max(r);
        }
    }

    let mut families: Vec<FamilyResidual> = FAMILY_NAMES
        .iter()
        .zip(worst)
        .map(|(name, (checks, max_residual))| FamilyResidual {
            family: (*name).into(),
            checks,
            max_residual,
        })
        .collect();
    families.push(FamilyResidual {
        family: "composite".into(),
        checks: composite.0,
        max_residual: composite.1,
    });
    let passed = families.iter().all(|f| f.max_residual <= cfg.tolerance);
    let warning = (cfg.n_samples == 0)
        .then(|| "n_samples = 0: nothing was checked, passing vacuously".to_string());
    Ok(NaturalityReport {
        config: *cfg,
        families,
        passed,
        warning,
    })
}
