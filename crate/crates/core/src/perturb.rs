//! Seeded test-time perturbations: a circular time shift shared by the whole
//! window, independent per-sensor gains, and independent Haar-uniform
//! rotations per tri-axial block.
//!
//! Draws are counter based. Every field of the draw for window `i` comes from
//! a ChaCha stream keyed by `(seed, i, field)`, so draws do not depend on
//! evaluation order and toggling rotations leaves shifts and gains untouched.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::MultiSensorWindow;
use crate::signal::{self, Rotation3};
use crate::symmetry::{PerSensor, SensorId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodConfig {
    pub shift_halfwidth: u32,
    pub gain_lo: f64,
    pub gain_hi: f64,
    pub rotations_enabled: bool,
    pub seed: u64,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            shift_halfwidth: 18,
            gain_lo: 0.7,
            gain_hi: 1.4,
            rotations_enabled: true,
            seed: 0,
        }
    }
}

impl OodConfig {
    /// Draws that never change anything.
    pub fn identity(seed: u64) -> Self {
        Self {
            shift_halfwidth: 0,
            gain_lo: 1.0,
            gain_hi: 1.0,
            rotations_enabled: false,
            seed,
        }
    }

    /// Shifts and gains only; the setting where the spectral features are
    /// exactly invariant.
    pub fn time_and_gain(seed: u64) -> Self {
        Self {
            rotations_enabled: false,
            seed,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain_lo.is_finite() && self.gain_hi.is_finite())
            || self.gain_lo <= 0.0
            || self.gain_lo > self.gain_hi
        {
            return Err(Error::Config(format!(
                "gain range must satisfy 0 < lo <= hi, got [{}, {}]",
                self.gain_lo, self.gain_hi
            )));
        }
        Ok(())
    }
}

/// One sampled perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationDraw {
    pub dt: i64,
    pub gains: PerSensor<f64>,
    pub rotations: PerSensor<Rotation3>,
    /// Unit quaternions `(w, x, y, z)` behind `rotations`, for auditing.
    pub quaternions: PerSensor<[f64; 4]>,
}

impl PerturbationDraw {
    pub fn identity() -> Self {
        Self {
            dt: 0,
            gains: PerSensor::new(1.0, 1.0),
            rotations: PerSensor::new(Rotation3::identity(), Rotation3::identity()),
            quaternions: PerSensor::new([1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]),
        }
    }

    /// `(−dt, 1/g, Rᵀ)`.
    pub fn inverse(&self) -> Self {
        Self {
            dt: -self.dt,
            gains: self.gains.map(|_, g| 1.0 / g),
            rotations: self.rotations.map(|_, r| r.transpose()),
            quaternions: self.quaternions.map(|_, q| [q[0], -q[1], -q[2], -q[3]]),
        }
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Field {
    Shift = 0,
    Gain = 1,
    Rotation = 2,
}

fn stream(seed: u64, index: u64, field: Field) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(4).wrapping_add(field as u64));
    rng
}

/// Haar-uniform rotation: four i.i.d. standard normals, normalized to a unit
/// quaternion. Returns the rotation and the quaternion with `w ≥ 0`.
pub fn haar_rotation<R: Rng + ?Sized>(rng: &mut R) -> (Rotation3, [f64; 4]) {
    loop {
        let mut q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
        for c in &mut q {
            *c *= sign / norm;
        }
        if let Ok(r) = Rotation3::from_quaternion(q[0], q[1], q[2], q[3]) {
            return (r, q);
        }
    }
}

/// The draw for window `index` under `cfg`. Pure in `(cfg, index)`.
pub fn sample_draw(cfg: &OodConfig, index: u64) -> PerturbationDraw {
    let h = i64::from(cfg.shift_halfwidth);
    let dt = if h == 0 {
        0
    } else {
        stream(cfg.seed, index, Field::Shift).random_range(-h..=h)
    };

    let gains = if cfg.gain_lo == cfg.gain_hi {
        PerSensor::new(cfg.gain_lo, cfg.gain_hi)
    } else {
        let mut rng = stream(cfg.seed, index, Field::Gain);
        PerSensor::from_fn(|_| rng.random_range(cfg.gain_lo..=cfg.gain_hi))
    };

    let mut draw = PerturbationDraw {
        dt,
        gains,
        ..PerturbationDraw::identity()
    };
    if cfg.rotations_enabled {
        let mut rng = stream(cfg.seed, index, Field::Rotation);
        for s in SensorId::ALL {
            let (r, q) = haar_rotation(&mut rng);
            draw.rotations[s] = r;
            draw.quaternions[s] = q;
        }
    }
    draw
}

/// Per sensor: rotate, scale by the gain, then shift every channel by `dt`.
/// The label is carried over.
pub fn apply_draw(w: &MultiSensorWindow, d: &PerturbationDraw) -> Result<MultiSensorWindow> {
    let blocks = w.blocks.try_map(|s, block| {
        let rotated = signal::rotate(block, &d.rotations[s]);
        let scaled = signal::scale_gain(&rotated, d.gains[s])?;
        Ok(signal::shift_window(&scaled, d.dt))
    })?;
    Ok(MultiSensorWindow {
        blocks,
        label: w.label,
    })
}

/// Applies `sample_draw(cfg, i)` to window `i`, in parallel, keeping order.
pub fn perturb_windows(
    windows: &[MultiSensorWindow],
    cfg: &OodConfig,
) -> Result<Vec<MultiSensorWindow>> {
    cfg.validate()?;
    windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| apply_draw(w, &sample_draw(cfg, i as u64)))
        .collect()
}

/// Writes `index,dt,gain_acc,gain_gyro,q_acc_w..q_gyro_z` rows for windows
/// `0..count`.
pub fn write_draw_audit<W: Write>(
    mut out: W,
    cfg: &OodConfig,
    count: usize,
) -> std::io::Result<()> {
    writeln!(
        out,
        "index,dt,gain_acc,gain_gyro,q_acc_w,q_acc_x,q_acc_y,q_acc_z,q_gyro_w,q_gyro_x,q_gyro_y,q_gyro_z"
    )?;
    for i in 0..count {
        let d = sample_draw(cfg, i as u64);
        let q = |s: SensorId| {
            d.quaternions[s]
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(
            out,
            "{i},{},{},{},{},{}",
            d.dt,
            d.gains.acc,
            d.gains.gyro,
            q(SensorId::Acc),
            q(SensorId::Gyro)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::TriAxialWindow;

    fn window() -> MultiSensorWindow {
        let axis = |f: f64| (0..32).map(|n| (n as f64 * f).sin()).collect::<Vec<_>>();
        MultiSensorWindow::new(
            TriAxialWindow::from_axes(axis(0.3), axis(0.7), axis(1.1)).unwrap(),
            TriAxialWindow::from_axes(axis(0.2), axis(0.5), axis(1.3)).unwrap(),
            Some(4),
        )
        .unwrap()
    }

    #[test]
    fn identity_config_gives_identity_draw() {
        let cfg = OodConfig::identity(99);
        for i in 0..20 {
            assert_eq!(sample_draw(&cfg, i), PerturbationDraw::identity());
        }
        let w = window();
        assert_eq!(apply_draw(&w, &PerturbationDraw::identity()).unwrap(), w);
    }

    #[test]
    fn draws_respect_bounds_and_invariants() {
        let cfg = OodConfig::default().with_seed(5);
        for i in 0..2000 {
            let d = sample_draw(&cfg, i);
            assert!((-18..=18).contains(&d.dt));
            for (s, g) in d.gains.iter() {
                assert!((0.7..=1.4).contains(g), "{s}: {g}");
                let r = d.rotations[s];
                assert!(r.orthogonality_error() <= 1e-12);
                assert!((r.det() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn draws_are_pure_in_seed_and_index() {
        let cfg = OodConfig::default().with_seed(11);
        let forward: Vec<_> = (0..50).map(|i| sample_draw(&cfg, i)).collect();
        let backward: Vec<_> = (0..50).rev().map(|i| sample_draw(&cfg, i)).collect();
        for (a, b) in forward.iter().zip(backward.iter().rev()) {
            assert_eq!(a, b);
        }
        assert_ne!(sample_draw(&cfg, 0), sample_draw(&cfg.with_seed(12), 0));
    }

    #[test]
    fn toggling_rotations_keeps_shift_and_gain() {
        let with = OodConfig::default().with_seed(3);
        let without = OodConfig {
            rotations_enabled: false,
            ..with
        };
        for i in 0..100 {
            let (a, b) = (sample_draw(&with, i), sample_draw(&without, i));
            assert_eq!(a.dt, b.dt);
            assert_eq!(a.gains, b.gains);
            assert_eq!(b.rotations.acc, Rotation3::identity());
        }
    }

    #[test]
    fn inverse_draw_recovers_window() {
        let w = window();
        let cfg = OodConfig::default().with_seed(8);
        for i in 0..25 {
            let d = sample_draw(&cfg, i);
            let back = apply_draw(&apply_draw(&w, &d).unwrap(), &d.inverse()).unwrap();
            for s in SensorId::ALL {
                for (a, b) in back.blocks[s].to_flat().iter().zip(w.blocks[s].to_flat()) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
            assert_eq!(back.label, Some(4));
        }
    }

    #[test]
    fn application_order_is_immaterial() {
        let w = window();
        let d = sample_draw(&OodConfig::default().with_seed(21), 3);
        let reversed = w
            .blocks
            .try_map(|s, b| {
                let shifted = signal::shift_window(b, d.dt);
                let scaled = signal::scale_gain(&shifted, d.gains[s])?;
                Ok(signal::rotate(&scaled, &d.rotations[s]))
            })
            .unwrap();
        let forward = apply_draw(&w, &d).unwrap();
        for s in SensorId::ALL {
            for (a, b) in forward.blocks[s]
                .to_flat()
                .iter()
                .zip(reversed[s].to_flat())
            {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn monte_carlo_moments() {
        let cfg = OodConfig::default().with_seed(2024);
        let n = 100_000;
        let (mut dt_sum, mut gain_sum, mut trace_sum) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let d = sample_draw(&cfg, i);
            dt_sum += d.dt as f64;
            gain_sum += d.gains.acc;
            trace_sum += d.rotations.gyro.trace();
        }
        let n = n as f64;
        assert!((dt_sum / n).abs() <= 0.2, "dt mean {}", dt_sum / n);
        assert!(
            (1.045..=1.055).contains(&(gain_sum / n)),
            "gain mean {}",
            gain_sum / n
        );
        assert!(
            (trace_sum / n).abs() <= 0.02,
            "trace mean {}",
            trace_sum / n
        );
    }

    #[test]
    fn audit_csv_shape() {
        let mut buf = Vec::new();
        write_draw_audit(&mut buf, &OodConfig::default(), 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l.split(',').count() == 12));
    }

    #[test]
    fn config_validation() {
        assert!(OodConfig::default().validate().is_ok());
        assert!(OodConfig {
            gain_lo: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OodConfig {
            gain_lo: 2.0,
            gain_hi: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
