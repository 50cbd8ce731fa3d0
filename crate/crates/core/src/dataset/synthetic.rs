//! A small generator of HAR-like windows in the UCI directory layout.
//!
//! Used for tests, demos, and smoke runs of the CLI when the real archive is
//! not available. The six classes differ in dominant frequency, amplitude, and
//! axis of motion; each window gets a random phase and a mild orientation
//! jitter around a fixed device pose.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AccVariant, HarSplit, Split, DATASET_DIR_NAME, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::MultiSensorWindow;
use crate::signal::{rotate, Rotation3, TriAxialWindow, DEFAULT_WINDOW_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub window_len: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_train: 600,
            n_test: 300,
            window_len: DEFAULT_WINDOW_LEN,
            seed: 7,
        }
    }
}

struct ClassProfile {
    cycles: f64,
    acc_amp: f64,
    gyro_amp: f64,
    harmonic: f64,
    acc_dir: [f64; 3],
    gyro_dir: [f64; 3],
    noise: f64,
}

fn profile(label: u8) -> ClassProfile {
    let p = |cycles, acc_amp, gyro_amp, harmonic, acc_dir, gyro_dir, noise| ClassProfile {
        cycles,
        acc_amp,
        gyro_amp,
        harmonic,
        acc_dir,
        gyro_dir,
        noise,
    };
    match label {
        1 => p(4.0, 0.30, 0.60, 0.5, [1.0, 0.2, 0.1], [0.1, 0.0, 1.0], 0.02),
        2 => p(3.0, 0.25, 0.45, 0.9, [0.8, 0.5, 0.2], [0.3, 1.0, 0.2], 0.02),
        3 => p(
            5.0,
            0.45,
            0.70,
            0.3,
            [1.0, -0.3, 0.4],
            [0.0, 0.4, 1.0],
            0.03,
        ),
        4 => p(
            1.0,
            0.010,
            0.020,
            0.2,
            [0.0, 1.0, 0.3],
            [1.0, 0.0, 0.0],
            0.004,
        ),
        5 => p(
            2.0,
            0.008,
            0.015,
            0.1,
            [0.3, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            0.003,
        ),
        _ => p(
            1.0,
            0.004,
            0.006,
            0.6,
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0],
            0.002,
        ),
    }
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn jitter(rng: &mut ChaCha8Rng, spread: f64) -> Rotation3 {
    let q: [f64; 3] = std::array::from_fn(|_| spread * rng.sample::<f64, _>(StandardNormal));
    Rotation3::from_quaternion(1.0, q[0], q[1], q[2]).expect("non-zero quaternion")
}

fn block(
    rng: &mut ChaCha8Rng,
    len: usize,
    cycles: f64,
    amp: f64,
    harmonic: f64,
    dir: [f64; 3],
    noise: f64,
) -> TriAxialWindow {
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let amp = amp * rng.random_range(0.8..1.25);
    let noise = Normal::new(0.0, noise).expect("positive noise");
    let dir = unit(dir);
    let mut axes = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
    for n in 0..len {
        let t = std::f64::consts::TAU * cycles * n as f64 / len as f64;
        let s = amp * ((t + phase).sin() + harmonic * (2.0 * t + 1.7 * phase).sin());
        for (axis, d) in axes.iter_mut().zip(dir) {
            axis[n] = s * d + noise.sample(rng);
        }
    }
    let [x, y, z] = axes;
    TriAxialWindow::from_axes(x, y, z).expect("finite synthetic samples")
}

fn window(rng: &mut ChaCha8Rng, label: u8, len: usize) -> MultiSensorWindow {
    let p = profile(label);
    let acc = block(
        rng, len, p.cycles, p.acc_amp, p.harmonic, p.acc_dir, p.noise,
    );
    let gyro = block(
        rng,
        len,
        p.cycles,
        p.gyro_amp,
        0.5 * p.harmonic,
        p.gyro_dir,
        p.noise,
    );
    let pose = jitter(rng, 0.1);
    MultiSensorWindow::new(rotate(&acc, &pose), rotate(&gyro, &pose), Some(label))
        .expect("equal lengths")
}

/// Generates one split in memory. Labels cycle through `1..=6`.
pub fn generate_split(cfg: &SyntheticConfig, split: Split) -> HarSplit {
    let (n, stream) = match split {
        Split::Train => (cfg.n_train, 0),
        Split::Test => (cfg.n_test, 1),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let windows = (0..n)
        .map(|i| {
            window(
                &mut rng,
                (i % NUM_CLASSES as usize) as u8 + 1,
                cfg.window_len,
            )
        })
        .collect();
    HarSplit::from_windows(split, windows).expect("labels in range")
}

/// `{:.7e}` with a signed three-digit exponent, as in the official files.
fn format_value(v: f64) -> String {
    let s = format!("{v:.7e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:03}", exp.abs())
}

/// Writes both splits under `root/UCI HAR Dataset/` in the official layout,
/// including `total_acc` files (body acceleration plus a constant gravity
/// vector) and subject ids.
pub fn write_uci_tree(root: &Path, cfg: &SyntheticConfig) -> Result<()> {
    let base = root.join(DATASET_DIR_NAME);
    for split in [Split::Train, Split::Test] {
        let data = generate_split(cfg, split);
        let dir = base.join(split.name());
        let signals = dir.join("Inertial Signals");
        fs::create_dir_all(&signals).map_err(|e| Error::io(&signals, e))?;
        let gravity = [0.1, -0.2, 0.97];
        let mut files: Vec<(String, String)> = Vec::new();
        for (variant, offset) in [(AccVariant::Body, None), (AccVariant::Total, Some(gravity))] {
            for (axis_idx, axis) in ["x", "y", "z"].into_iter().enumerate() {
                let shift = offset.map_or(0.0, |g| g[axis_idx]);
                let rows = data.windows.iter().map(|w| {
                    w.blocks
                        .acc
                        .axis(axis_idx)
                        .as_slice()
                        .iter()
                        .map(move |v| v + shift)
                });
                files.push((
                    format!("{}_{axis}_{split}.txt", variant.file_prefix()),
                    render(rows),
                ));
            }
        }
        for (axis_idx, axis) in ["x", "y", "z"].into_iter().enumerate() {
            let rows = data
                .windows
                .iter()
                .map(|w| w.blocks.gyro.axis(axis_idx).as_slice().iter().copied());
            files.push((format!("body_gyro_{axis}_{split}.txt"), render(rows)));
        }
        for (name, text) in files {
            let path = signals.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        let labels: String = data.labels.iter().map(|l| format!("{l}\n")).collect();
        let subjects: String = (0..data.len())
            .map(|i| format!("{}\n", 1 + i / 50))
            .collect();
        for (name, text) in [
            (format!("y_{split}.txt"), labels),
            (format!("subject_{split}.txt"), subjects),
        ] {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

fn render<I, R>(rows: I) -> String
where
    I: Iterator<Item = R>,
    R: Iterator<Item = f64>,
{
    let mut out = String::new();
    for row in rows {
        for v in row {
            let _ = write!(out, "  {}", format_value(v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_split, DatasetConfig};

    #[test]
    fn exponent_format_round_trips() {
        assert_eq!(format_value(1.808515e-4), "1.8085150e-004");
        assert_eq!(format_value(-12.5), "-1.2500000e+001");
        assert_eq!("1.8085150e-004".parse::<f64>().unwrap(), 1.808515e-4);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig {
            n_train: 12,
            n_test: 6,
            ..Default::default()
        };
        assert_eq!(
            generate_split(&cfg, Split::Train),
            generate_split(&cfg, Split::Train)
        );
        assert_ne!(
            generate_split(&cfg, Split::Train).windows[0],
            generate_split(&cfg, Split::Test).windows[0]
        );
    }

    #[test]
    fn written_tree_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig {
            n_train: 18,
            n_test: 12,
            ..Default::default()
        };
        write_uci_tree(dir.path(), &cfg).unwrap();
        let data_cfg = DatasetConfig::new(dir.path());
        assert!(data_cfg.is_complete());
        let train = load_split(&data_cfg, Split::Train).unwrap();
        assert_eq!(train.len(), 18);
        assert_eq!(train.subjects.as_ref().map(Vec::len), Some(18));
        let reference = generate_split(&cfg, Split::Train);
        assert_eq!(train.labels, reference.labels);
        for (a, b) in train.windows[3]
            .blocks
            .acc
            .to_flat()
            .iter()
            .zip(reference.windows[3].blocks.acc.to_flat())
        {
            assert!((a - b).abs() <= 1e-7 * b.abs().max(1e-3));
        }
        assert_eq!(train.sources.len(), 7);
    }
}
