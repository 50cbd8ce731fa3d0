//! Numeric primitives on sensor windows.
//!
//! Everything here is a pure function of its inputs. The only cached state is a
//! thread-local FFT planner, which never changes results.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default window length of the UCI HAR inertial signals.
pub const DEFAULT_WINDOW_LEN: usize = 128;

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-12;

/// A single real-valued channel of `T` samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeSeries(Vec<f64>);

impl TimeSeries {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("time series"));
        }
        Ok(Self(samples))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        l2(&self.0)
    }

    /// Multiplies every sample by `factor`. No sign check; see [`scale_gain`]
    /// for the validated group action.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    pub(crate) fn from_vec_unchecked(samples: Vec<f64>) -> Self {
        Self(samples)
    }
}

impl AsRef<[f64]> for TimeSeries {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One sensor's tri-axial block `(x, y, z)`, each of length `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriAxialWindow {
    axes: [TimeSeries; 3],
}

impl TriAxialWindow {
    pub fn new(x: TimeSeries, y: TimeSeries, z: TimeSeries) -> Result<Self> {
        let len = x.len();
        for axis in [&y, &z] {
            if axis.len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    found: axis.len(),
                });
            }
        }
        if len == 0 {
            return Err(Error::Empty("tri-axial window"));
        }
        Ok(Self { axes: [x, y, z] })
    }

    /// Builds a window from three raw sample vectors, validating finiteness.
    pub fn from_axes(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        Self::new(
            TimeSeries::new(x)?,
            TimeSeries::new(y)?,
            TimeSeries::new(z)?,
        )
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            axes: [
                TimeSeries::zeros(len),
                TimeSeries::zeros(len),
                TimeSeries::zeros(len),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.axes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, i: usize) -> &TimeSeries {
        &self.axes[i]
    }

    pub fn axes(&self) -> &[TimeSeries; 3] {
        &self.axes
    }

    /// The 3-vector of samples at time index `n`.
    pub fn sample(&self, n: usize) -> [f64; 3] {
        [self.axes[0].0[n], self.axes[1].0[n], self.axes[2].0[n]]
    }

    /// Flattened `[x..., y..., z...]` view.
    pub fn to_flat(&self) -> Vec<f64> {
        self.axes.iter().flat_map(|a| a.0.iter().copied()).collect()
    }

    fn map_axes(&self, f: impl Fn(&TimeSeries) -> TimeSeries) -> Self {
        Self {
            axes: [f(&self.axes[0]), f(&self.axes[1]), f(&self.axes[2])],
        }
    }

    pub(crate) fn scaled_unchecked(&self, factor: f64) -> Self {
        self.map_axes(|a| a.scaled(factor))
    }
}

/// A 3x3 rotation matrix, validated on construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation3 {
    m: [[f64; 3]; 3],
}

impl Rotation3 {
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rotation matrix"));
        }
        let candidate = Self { m };
        let orthogonality = candidate.orthogonality_error();
        let det = candidate.det();
        if orthogonality > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidRotation { orthogonality, det });
        }
        Ok(candidate)
    }

    pub const fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Rotation matrix of the unit quaternion `w + xi + yj + zk`. The input is
    /// normalized first; a zero quaternion is rejected.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NonFinite("quaternion"));
        }
        let (w, x, y, z) = (w / norm, x / norm, y / norm, z / norm);
        Self::new([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ])
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Self {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// `max |R^T R - I|` over all entries.
    pub fn orthogonality_error(&self) -> f64 {
        let m = &self.m;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|r| m[r][i] * m[r][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }
}

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `(τ_t x)(n) = x((n + t) mod T)`; any integer `t` is accepted.
pub fn circular_shift(x: &TimeSeries, t: i64) -> TimeSeries {
    let len = x.len();
    if len == 0 {
        return x.clone();
    }
    let offset = t.rem_euclid(len as i64) as usize;
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(&x.0[offset..]);
    out.extend_from_slice(&x.0[..offset]);
    TimeSeries(out)
}

/// Shifts all three axes by the same `t`.
pub fn shift_window(w: &TriAxialWindow, t: i64) -> TriAxialWindow {
    w.map_axes(|a| circular_shift(a, t))
}

/// Multiplies every sample by the gain `lambda > 0`.
pub fn scale_gain(w: &TriAxialWindow, lambda: f64) -> Result<TriAxialWindow> {
    check_gain(lambda)?;
    Ok(w.scaled_unchecked(lambda))
}

pub(crate) fn check_gain(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidGain(lambda))
    }
}

/// Applies `R` to the 3-vector at every time index.
pub fn rotate(w: &TriAxialWindow, r: &Rotation3) -> TriAxialWindow {
    let len = w.len();
    let mut out = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
    for n in 0..len {
        let v = r.apply(w.sample(n));
        for (axis, value) in out.iter_mut().zip(v) {
            axis[n] = value;
        }
    }
    let [x, y, z] = out;
    TriAxialWindow {
        axes: [TimeSeries(x), TimeSeries(y), TimeSeries(z)],
    }
}

/// Pointwise Euclidean norm over the three axes.
pub fn magnitude_pool(w: &TriAxialWindow) -> TimeSeries {
    let [x, y, z] = &w.axes;
    TimeSeries(
        x.0.iter()
            .zip(&y.0)
            .zip(&z.0)
            .map(|((a, b), c)| (a * a + b * b + c * c).sqrt())
            .collect(),
    )
}

/// Frobenius norm over all `3T` entries.
pub fn block_l2_norm(w: &TriAxialWindow) -> f64 {
    w.axes
        .iter()
        .flat_map(|a| a.0.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// `w / ‖w‖`, or the zero window when `‖w‖ = 0`.
pub fn rms_normalize(w: &TriAxialWindow) -> TriAxialWindow {
    let norm = block_l2_norm(w);
    if norm > 0.0 {
        w.map_axes(|a| TimeSeries(a.0.iter().map(|v| v / norm).collect()))
    } else {
        TriAxialWindow::zeros(w.len())
    }
}

/// `z / ‖z‖`, with `N(0) = 0`.
pub fn normalize_1d(z: &TimeSeries) -> TimeSeries {
    let norm = z.l2_norm();
    if norm > 0.0 {
        TimeSeries(z.0.iter().map(|v| v / norm).collect())
    } else {
        TimeSeries::zeros(z.len())
    }
}

type PlanCache = (FftPlanner<f64>, HashMap<usize, Arc<dyn Fft<f64>>>);

thread_local! {
    static PLANS: RefCell<PlanCache> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn forward_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry(len)
            .or_insert_with(|| planner.plan_fft_forward(len))
            .clone()
    })
}

/// Largest admissible bin count for window length `len`.
pub fn max_bins(len: usize) -> usize {
    len / 2
}

pub(crate) fn check_bins(k: usize, len: usize) -> Result<()> {
    let max = max_bins(len);
    if k == 0 || k > max {
        Err(Error::InvalidBinCount { k, max, len })
    } else {
        Ok(())
    }
}

/// Magnitudes `|ẑ[r]|` for `r = 1..=k` of the unnormalized forward DFT
/// `ẑ[r] = Σ z(n) exp(-2πi r n / T)`. The DC bin is excluded.
pub fn rfft_magnitude(z: &[f64], k: usize) -> Result<Vec<f64>> {
    let len = z.len();
    check_bins(k, len)?;
    let mut buf: Vec<Complex<f64>> = z.iter().map(|&re| Complex::new(re, 0.0)).collect();
    forward_plan(len).process(&mut buf);
    Ok(buf[1..=k].iter().map(|c| c.norm()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn series(v: &[f64]) -> TimeSeries {
        TimeSeries::new(v.to_vec()).unwrap()
    }

    fn window(len: usize, seed: u64) -> TriAxialWindow {
        let mut state = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut axis = || (0..len).map(|_| next()).collect::<Vec<_>>();
        TriAxialWindow::from_axes(axis(), axis(), axis()).unwrap()
    }

    #[test]
    fn shift_examples() {
        let x = series(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(circular_shift(&x, 0), x);
        assert_eq!(circular_shift(&x, 4), x);
        assert_eq!(circular_shift(&x, 1).as_slice(), &[2.0, 3.0, 4.0, 1.0]);
        assert_eq!(circular_shift(&x, -1).as_slice(), &[4.0, 1.0, 2.0, 3.0]);
        assert_eq!(circular_shift(&x, -9), circular_shift(&x, 3));
    }

    #[test]
    fn gain_rejects_non_positive() {
        let w = window(8, 1);
        assert!(matches!(scale_gain(&w, 0.0), Err(Error::InvalidGain(_))));
        assert!(matches!(scale_gain(&w, -2.0), Err(Error::InvalidGain(_))));
        assert!(matches!(
            scale_gain(&w, f64::NAN),
            Err(Error::InvalidGain(_))
        ));
        assert_eq!(scale_gain(&w, 1.0).unwrap(), w);
    }

    #[test]
    fn gain_inverse_pair_and_homogeneity() {
        let w = window(128, 2);
        let back = scale_gain(&scale_gain(&w, 2.0).unwrap(), 0.5).unwrap();
        for (a, b) in back.to_flat().iter().zip(w.to_flat()) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
        assert_relative_eq!(
            block_l2_norm(&scale_gain(&w, 3.0).unwrap()),
            3.0 * block_l2_norm(&w),
            max_relative = 1e-15
        );
    }

    #[test]
    fn rotation_validation() {
        assert!(Rotation3::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]).is_err());
        assert!(Rotation3::new([[1.0, 1e-6, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(Rotation3::new([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        let r = Rotation3::from_quaternion(0.3, -0.4, 0.5, 0.7).unwrap();
        assert!(r.orthogonality_error() <= 1e-15);
        assert!((r.det() - 1.0).abs() <= 1e-15);
        assert!(Rotation3::from_quaternion(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn rotate_identity_and_inverse() {
        let w = window(64, 3);
        assert_eq!(rotate(&w, &Rotation3::identity()), w);
        let r = Rotation3::from_quaternion(0.1, 0.9, -0.3, 0.2).unwrap();
        let back = rotate(&rotate(&w, &r), &r.transpose());
        for (a, b) in back.to_flat().iter().zip(w.to_flat()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn magnitude_pool_examples() {
        let w = TriAxialWindow::from_axes(vec![3.0; 5], vec![4.0; 5], vec![0.0; 5]).unwrap();
        assert_eq!(magnitude_pool(&w).as_slice(), &[5.0; 5]);
        assert_eq!(
            magnitude_pool(&TriAxialWindow::zeros(7)),
            TimeSeries::zeros(7)
        );
    }

    #[test]
    fn magnitude_pool_commutes_with_normalization() {
        let w = window(128, 4);
        let lhs = magnitude_pool(&rms_normalize(&w));
        let rhs = normalize_1d(&magnitude_pool(&w));
        for (a, b) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn block_norm_examples() {
        assert_eq!(block_l2_norm(&TriAxialWindow::zeros(128)), 0.0);
        let mut x = vec![0.0; 128];
        x[17] = 1.0;
        let w = TriAxialWindow::from_axes(vec![0.0; 128], x, vec![0.0; 128]).unwrap();
        assert_eq!(block_l2_norm(&w), 1.0);
        // direct summation: 3 * 128 ones
        let ones =
            TriAxialWindow::from_axes(vec![1.0; 128], vec![1.0; 128], vec![1.0; 128]).unwrap();
        let oracle = (0..384).map(|_| 1.0f64).sum::<f64>().sqrt();
        assert_eq!(block_l2_norm(&ones), oracle);
        assert_eq!(oracle, 384f64.sqrt());
    }

    #[test]
    fn rms_normalize_examples() {
        assert_eq!(
            rms_normalize(&TriAxialWindow::zeros(16)),
            TriAxialWindow::zeros(16)
        );
        let w = window(128, 5);
        assert!((block_l2_norm(&rms_normalize(&w)) - 1.0).abs() <= 1e-14);
        for lambda in [1e-3, 0.7, 1.4, 250.0] {
            let a = rms_normalize(&scale_gain(&w, lambda).unwrap()).to_flat();
            let b = rms_normalize(&w).to_flat();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn normalize_1d_examples() {
        assert_eq!(normalize_1d(&TimeSeries::zeros(4)), TimeSeries::zeros(4));
        let e1 = series(&[1.0, 0.0, 0.0]);
        assert_eq!(normalize_1d(&e1), e1);
        let z = series(&[0.5, -2.0, 3.0, 1.0, 0.0]);
        for t in -6..6 {
            assert_eq!(
                normalize_1d(&circular_shift(&z, t)),
                circular_shift(&normalize_1d(&z), t)
            );
        }
    }

    #[test]
    fn rfft_bin_range() {
        let z = vec![1.0; 128];
        assert!(matches!(
            rfft_magnitude(&z, 0),
            Err(Error::InvalidBinCount { .. })
        ));
        assert!(matches!(
            rfft_magnitude(&z, 65),
            Err(Error::InvalidBinCount { .. })
        ));
        assert_eq!(rfft_magnitude(&z, 64).unwrap().len(), 64);
        assert!(rfft_magnitude(&[1.0], 1).is_err());
    }

    #[test]
    fn rfft_constant_has_no_ac_energy() {
        let mags = rfft_magnitude(&[2.5; 128], 24).unwrap();
        assert!(mags.iter().all(|m| m.abs() <= 1e-12));
    }

    #[test]
    fn rfft_non_power_of_two_length() {
        let len = 90;
        let z: Vec<f64> = (0..len)
            .map(|n| (2.0 * std::f64::consts::PI * 7.0 * n as f64 / len as f64).sin())
            .collect();
        let mags = rfft_magnitude(&z, 20).unwrap();
        assert!((mags[6] - 45.0).abs() <= 1e-10);
        assert!(mags.iter().enumerate().all(|(i, m)| i == 6 || *m <= 1e-10));
    }

    fn arb_series(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, len)
    }

    proptest! {
        #[test]
        fn shift_group_law(v in arb_series(37), a in -100i64..100, b in -100i64..100) {
            let x = TimeSeries::new(v).unwrap();
            prop_assert_eq!(circular_shift(&circular_shift(&x, a), b), circular_shift(&x, a + b));
        }

        #[test]
        fn gain_and_shift_commute_bitwise(v in arb_series(24), t in -50i64..50, g in 0.1f64..10.0) {
            let w = TriAxialWindow::from_axes(v.clone(), v.iter().map(|x| x * 0.5).collect(), v.iter().rev().copied().collect()).unwrap();
            let a = shift_window(&scale_gain(&w, g).unwrap(), t);
            let b = scale_gain(&shift_window(&w, t), g).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn rotation_commutes_with_gain_and_shift(
            v in arb_series(48), t in -50i64..50, g in 0.1f64..10.0,
            q in proptest::array::uniform4(-1.0f64..1.0),
        ) {
            prop_assume!(q.iter().map(|c| c * c).sum::<f64>() > 1e-3);
            let r = Rotation3::from_quaternion(q[0], q[1], q[2], q[3]).unwrap();
            let w = TriAxialWindow::from_axes(v[..16].to_vec(), v[16..32].to_vec(), v[32..].to_vec()).unwrap();
            let pairs = [
                (rotate(&scale_gain(&w, g).unwrap(), &r), scale_gain(&rotate(&w, &r), g).unwrap()),
                (rotate(&shift_window(&w, t), &r), shift_window(&rotate(&w, &r), t)),
            ];
            for (a, b) in pairs {
                for (x, y) in a.to_flat().iter().zip(b.to_flat()) {
                    prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
                }
            }
        }

        #[test]
        fn magnitude_pool_rotation_invariant_gain_equivariant(
            v in arb_series(48), g in 0.1f64..10.0,
            q in proptest::array::uniform4(-1.0f64..1.0),
        ) {
            prop_assume!(q.iter().map(|c| c * c).sum::<f64>() > 1e-3);
            let r = Rotation3::from_quaternion(q[0], q[1], q[2], q[3]).unwrap();
            let w = TriAxialWindow::from_axes(v[..16].to_vec(), v[16..32].to_vec(), v[32..].to_vec()).unwrap();
            let base = magnitude_pool(&w);
            let rotated = magnitude_pool(&rotate(&w, &r));
            let gained = magnitude_pool(&scale_gain(&w, g).unwrap());
            let scale = base.as_slice().iter().fold(0.0f64, |m, v| m.max(*v));
            for ((b, r), s) in base.as_slice().iter().zip(rotated.as_slice()).zip(gained.as_slice()) {
                prop_assert!((b - r).abs() <= 1e-12 * scale);
                prop_assert!((g * b - s).abs() <= 1e-14 * g * scale);
            }
        }

        #[test]
        fn normalized_spectrum_shift_and_scale_invariant(
            v in arb_series(128), t in -200i64..200, g in 0.01f64..100.0,
        ) {
            let z = TimeSeries::new(v).unwrap();
            let base = rfft_magnitude(normalize_1d(&z).as_slice(), 24).unwrap();
            let shifted = rfft_magnitude(normalize_1d(&circular_shift(&z, t)).as_slice(), 24).unwrap();
            let scaled = rfft_magnitude(normalize_1d(&z.scaled(g)).as_slice(), 24).unwrap();
            let norm = base.iter().map(|x| x * x).sum::<f64>().sqrt();
            for ((b, s), c) in base.iter().zip(&shifted).zip(&scaled) {
                prop_assert!((b - s).abs() <= 1e-9 * norm);
                prop_assert!((b - c).abs() <= 1e-12 * norm);
            }
        }
    }
}
