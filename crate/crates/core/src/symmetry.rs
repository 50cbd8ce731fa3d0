//! Morphisms of the product category `BM × P` and their actions.
//!
//! `M = C_T × Λ` is the commutative group of circular shifts and per-sensor
//! positive gains, seen as a one-object category. `P` is the thin category
//! `s:axes → s:mag → TOTAL`. A [`Morphism`] pairs a group element with a poset
//! arrow; [`act_x`] transports signals along it and [`act_y`] transports
//! features. A representation is natural when both routes around every square
//! agree, which [`naturality_residual`] measures.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{self, TimeSeries, TriAxialWindow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SensorId {
    #[serde(rename = "ACC")]
    Acc,
    #[serde(rename = "GYRO")]
    Gyro,
}

impl SensorId {
    pub const ALL: [SensorId; 2] = [SensorId::Acc, SensorId::Gyro];

    /// `|S|`.
    pub const COUNT: usize = Self::ALL.len();

    pub fn prefix(self) -> &'static str {
        match self {
            SensorId::Acc => "acc",
            SensorId::Gyro => "gyro",
        }
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensorId::Acc => "ACC",
            SensorId::Gyro => "GYRO",
        })
    }
}

/// One value per sensor in `S`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerSensor<T> {
    pub acc: T,
    pub gyro: T,
}

impl<T> PerSensor<T> {
    pub fn new(acc: T, gyro: T) -> Self {
        Self { acc, gyro }
    }

    pub fn from_fn(mut f: impl FnMut(SensorId) -> T) -> Self {
        Self {
            acc: f(SensorId::Acc),
            gyro: f(SensorId::Gyro),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(SensorId, &T) -> U) -> PerSensor<U> {
        PerSensor {
            acc: f(SensorId::Acc, &self.acc),
            gyro: f(SensorId::Gyro, &self.gyro),
        }
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(SensorId, &T) -> Result<U>) -> Result<PerSensor<U>> {
        Ok(PerSensor {
            acc: f(SensorId::Acc, &self.acc)?,
            gyro: f(SensorId::Gyro, &self.gyro)?,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (SensorId, &T)> {
        [(SensorId::Acc, &self.acc), (SensorId::Gyro, &self.gyro)].into_iter()
    }
}

impl<T> Index<SensorId> for PerSensor<T> {
    type Output = T;

    fn index(&self, s: SensorId) -> &T {
        match s {
            SensorId::Acc => &self.acc,
            SensorId::Gyro => &self.gyro,
        }
    }
}

impl<T> IndexMut<SensorId> for PerSensor<T> {
    fn index_mut(&mut self, s: SensorId) -> &mut T {
        match s {
            SensorId::Acc => &mut self.acc,
            SensorId::Gyro => &mut self.gyro,
        }
    }
}

/// An element `(t, λ)` of `C_T × Λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    period: usize,
    shift: usize,
    gains: PerSensor<f64>,
}

impl GroupElement {
    pub fn new(period: usize, shift: i64, gains: PerSensor<f64>) -> Result<Self> {
        if period == 0 {
            return Err(Error::Empty("cyclic group of order 0"));
        }
        for (_, &g) in gains.iter() {
            signal::check_gain(g)?;
        }
        Ok(Self {
            period,
            shift: shift.rem_euclid(period as i64) as usize,
            gains,
        })
    }

    pub fn identity(period: usize) -> Self {
        Self {
            period: period.max(1),
            shift: 0,
            gains: PerSensor::new(1.0, 1.0),
        }
    }

    /// `τ^t` with unit gains.
    pub fn shift(period: usize, t: i64) -> Self {
        Self::identity(period).with_shift(t)
    }

    /// `λ^{(s)}`: gain `lambda` on sensor `s`, unit gain elsewhere, no shift.
    pub fn sensor_gain(period: usize, s: SensorId, lambda: f64) -> Result<Self> {
        let mut gains = PerSensor::new(1.0, 1.0);
        gains[s] = lambda;
        Self::new(period, 0, gains)
    }

    fn with_shift(mut self, t: i64) -> Self {
        self.shift = t.rem_euclid(self.period as i64) as usize;
        self
    }

    pub fn period(&self) -> usize {
        self.period
    }

    /// Shift reduced into `[0, T)`.
    pub fn shift_amount(&self) -> usize {
        self.shift
    }

    pub fn gains(&self) -> &PerSensor<f64> {
        &self.gains
    }

    pub fn gain(&self, s: SensorId) -> f64 {
        self.gains[s]
    }

    pub fn is_identity(&self) -> bool {
        self.shift == 0 && self.gains.iter().all(|(_, &g)| g == 1.0)
    }

    /// Group product. The group is commutative, so the order only matters for
    /// the floating-point rounding of the gains.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        if self.period != other.period {
            return Err(Error::PeriodMismatch(self.period, other.period));
        }
        Ok(GroupElement {
            period: self.period,
            shift: (self.shift + other.shift) % self.period,
            gains: PerSensor::from_fn(|s| self.gains[s] * other.gains[s]),
        })
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement {
            period: self.period,
            shift: (self.period - self.shift) % self.period,
            gains: self.gains.map(|_, g| 1.0 / g),
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.period {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                expected: self.period,
                found: len,
            })
        }
    }

    fn act_series(&self, s: SensorId, z: &TimeSeries) -> TimeSeries {
        signal::circular_shift(z, self.shift as i64).scaled(self.gains[s])
    }

    fn act_window(&self, s: SensorId, w: &TriAxialWindow) -> TriAxialWindow {
        signal::shift_window(w, self.shift as i64).scaled_unchecked(self.gains[s])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PosetNode {
    Axes(SensorId),
    Mag(SensorId),
    Total,
}

impl PosetNode {
    pub fn all() -> Vec<PosetNode> {
        let mut nodes: Vec<_> = SensorId::ALL
            .iter()
            .flat_map(|&s| [PosetNode::Axes(s), PosetNode::Mag(s)])
            .collect();
        nodes.push(PosetNode::Total);
        nodes
    }
}

impl fmt::Display for PosetNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PosetNode::Axes(s) => write!(f, "{s}:axes"),
            PosetNode::Mag(s) => write!(f, "{s}:mag"),
            PosetNode::Total => f.write_str("TOTAL"),
        }
    }
}

/// An arrow of the thin category `P`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PosetArrow {
    Identity(PosetNode),
    /// `u_s : s:axes → s:mag`
    AxesToMag(SensorId),
    /// `v_s : s:mag → TOTAL`
    MagToTotal(SensorId),
    /// `v_s ∘ u_s`
    AxesToTotal(SensorId),
}

impl PosetArrow {
    pub fn source(&self) -> PosetNode {
        match *self {
            PosetArrow::Identity(n) => n,
            PosetArrow::AxesToMag(s) | PosetArrow::AxesToTotal(s) => PosetNode::Axes(s),
            PosetArrow::MagToTotal(s) => PosetNode::Mag(s),
        }
    }

    pub fn target(&self) -> PosetNode {
        match *self {
            PosetArrow::Identity(n) => n,
            PosetArrow::AxesToMag(s) => PosetNode::Mag(s),
            PosetArrow::MagToTotal(_) | PosetArrow::AxesToTotal(_) => PosetNode::Total,
        }
    }

    /// The unique arrow `source → target`, if `source ⪯ target`.
    pub fn between(source: PosetNode, target: PosetNode) -> Option<PosetArrow> {
        use PosetNode::*;
        match (source, target) {
            (a, b) if a == b => Some(PosetArrow::Identity(a)),
            (Axes(s), Mag(r)) if s == r => Some(PosetArrow::AxesToMag(s)),
            (Mag(s), Total) => Some(PosetArrow::MagToTotal(s)),
            (Axes(s), Total) => Some(PosetArrow::AxesToTotal(s)),
            _ => None,
        }
    }

    /// `self ∘ first`.
    pub fn after(&self, first: &PosetArrow) -> Result<PosetArrow> {
        if first.target() != self.source() {
            return Err(Error::NotComposable {
                first_target: first.target(),
                second_source: self.source(),
            });
        }
        Ok(PosetArrow::between(first.source(), self.target())
            .expect("composable arrows in a poset always have a composite"))
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, PosetArrow::Identity(_))
    }
}

/// A morphism `(m, u)` of `BM × P`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Morphism {
    pub group: GroupElement,
    pub arrow: PosetArrow,
}

impl Morphism {
    pub fn new(group: GroupElement, arrow: PosetArrow) -> Self {
        Self { group, arrow }
    }

    pub fn identity(node: PosetNode, period: usize) -> Self {
        Self::new(GroupElement::identity(period), PosetArrow::Identity(node))
    }

    /// `(τ¹, id_node)`.
    pub fn unit_shift(node: PosetNode, period: usize) -> Self {
        Self::new(GroupElement::shift(period, 1), PosetArrow::Identity(node))
    }

    /// `(λ^{(s)}, id_node)`.
    pub fn sensor_gain(node: PosetNode, period: usize, s: SensorId, lambda: f64) -> Result<Self> {
        Ok(Self::new(
            GroupElement::sensor_gain(period, s, lambda)?,
            PosetArrow::Identity(node),
        ))
    }

    /// `(id, arrow)`.
    pub fn poset(arrow: PosetArrow, period: usize) -> Self {
        Self::new(GroupElement::identity(period), arrow)
    }

    pub fn source(&self) -> PosetNode {
        self.arrow.source()
    }

    pub fn target(&self) -> PosetNode {
        self.arrow.target()
    }
}

/// `g ∘ f = (m_g m_f, u_g u_f)`; requires `f.target == g.source`.
pub fn compose(g: &Morphism, f: &Morphism) -> Result<Morphism> {
    let arrow = g.arrow.after(&f.arrow)?;
    Ok(Morphism::new(g.group.compose(&f.group)?, arrow))
}

/// Generator morphisms with the given source node: the unit shift, a gain
/// `lambda` on each sensor, and the outgoing non-identity poset arrow (if any).
pub fn generators_at(node: PosetNode, period: usize, lambda: f64) -> Result<Vec<Morphism>> {
    let mut out = vec![Morphism::unit_shift(node, period)];
    for s in SensorId::ALL {
        out.push(Morphism::sensor_gain(node, period, s, lambda)?);
    }
    match node {
        PosetNode::Axes(s) => out.push(Morphism::poset(PosetArrow::AxesToMag(s), period)),
        PosetNode::Mag(s) => out.push(Morphism::poset(PosetArrow::MagToTotal(s), period)),
        PosetNode::Total => {}
    }
    Ok(out)
}

/// A value of the data functor `X` at some node.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeData {
    Axes(SensorId, TriAxialWindow),
    Mag(SensorId, TimeSeries),
    Total(PerSensor<TimeSeries>),
}

impl NodeData {
    pub fn node(&self) -> PosetNode {
        match self {
            NodeData::Axes(s, _) => PosetNode::Axes(*s),
            NodeData::Mag(s, _) => PosetNode::Mag(*s),
            NodeData::Total(_) => PosetNode::Total,
        }
    }

    pub fn window_len(&self) -> usize {
        match self {
            NodeData::Axes(_, w) => w.len(),
            NodeData::Mag(_, z) => z.len(),
            NodeData::Total(zs) => zs.acc.len(),
        }
    }
}

/// Spectrum and amplitude stored at an `s:axes` node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxesFeature {
    pub spectrum: Vec<f64>,
    pub amplitude: f64,
}

/// A value of the model functor `Y` at some node.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeFeature {
    Axes(SensorId, AxesFeature),
    Mag(SensorId, Vec<f64>),
    Total(Vec<f64>),
}

impl NodeFeature {
    pub fn node(&self) -> PosetNode {
        match self {
            NodeFeature::Axes(s, _) => PosetNode::Axes(*s),
            NodeFeature::Mag(s, _) => PosetNode::Mag(*s),
            NodeFeature::Total(_) => PosetNode::Total,
        }
    }

    /// Flat coordinates; the amplitude follows the spectrum at axes nodes.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            NodeFeature::Axes(_, f) => {
                let mut v = f.spectrum.clone();
                v.push(f.amplitude);
                v
            }
            NodeFeature::Mag(_, v) | NodeFeature::Total(v) => v.clone(),
        }
    }
}

/// `X(m, u) = X(u) ∘ X(m, id)`.
pub fn act_x(m: &Morphism, d: &NodeData) -> Result<NodeData> {
    if d.node() != m.source() {
        return Err(Error::NodeMismatch {
            expected: m.source(),
            found: d.node(),
        });
    }
    let g = &m.group;
    g.check_len(d.window_len())?;
    let moved = match d {
        NodeData::Axes(s, w) => NodeData::Axes(*s, g.act_window(*s, w)),
        NodeData::Mag(s, z) => NodeData::Mag(*s, g.act_series(*s, z)),
        NodeData::Total(zs) => NodeData::Total(zs.map(|r, z| g.act_series(r, z))),
    };
    Ok(match (m.arrow, moved) {
        (PosetArrow::Identity(_), d) => d,
        (PosetArrow::AxesToMag(_), NodeData::Axes(s, w)) => {
            NodeData::Mag(s, signal::magnitude_pool(&w))
        }
        (PosetArrow::MagToTotal(_), NodeData::Mag(s, z)) => NodeData::Total(embed(s, z)),
        (PosetArrow::AxesToTotal(_), NodeData::Axes(s, w)) => {
            NodeData::Total(embed(s, signal::magnitude_pool(&w)))
        }
        _ => unreachable!("node checked against arrow source"),
    })
}

/// `ι_s`: place `z` in the `s` coordinate of the product, zeros elsewhere.
fn embed(s: SensorId, z: TimeSeries) -> PerSensor<TimeSeries> {
    let len = z.len();
    let mut out = PerSensor::from_fn(|_| TimeSeries::zeros(len));
    out[s] = z;
    out
}

/// Transport of features: `Y(t, λ)` scales amplitudes by `λ_s` and fixes the
/// spectra; `Y(u_s)` projects to the spectrum; `Y(v_s)` multiplies by `1/|S|`.
pub fn act_y(m: &Morphism, f: &NodeFeature) -> Result<NodeFeature> {
    if f.node() != m.source() {
        return Err(Error::NodeMismatch {
            expected: m.source(),
            found: f.node(),
        });
    }
    let moved = match f {
        NodeFeature::Axes(s, a) => NodeFeature::Axes(
            *s,
            AxesFeature {
                spectrum: a.spectrum.clone(),
                amplitude: m.group.gain(*s) * a.amplitude,
            },
        ),
        other => other.clone(),
    };
    let average = |v: Vec<f64>| v.into_iter().map(|x| x / SensorId::COUNT as f64).collect();
    Ok(match (m.arrow, moved) {
        (PosetArrow::Identity(_), f) => f,
        (PosetArrow::AxesToMag(_), NodeFeature::Axes(s, a)) => NodeFeature::Mag(s, a.spectrum),
        (PosetArrow::MagToTotal(_), NodeFeature::Mag(_, v)) => NodeFeature::Total(average(v)),
        (PosetArrow::AxesToTotal(_), NodeFeature::Axes(_, a)) => {
            NodeFeature::Total(average(a.spectrum))
        }
        _ => unreachable!("node checked against arrow source"),
    })
}

/// A family of per-node feature maps `Φ_a : X(a) → Y(a)`.
pub trait NodeRepresentation {
    fn phi(&self, d: &NodeData) -> Result<NodeFeature>;
}

/// `‖Y(m,u) Φ_a(d) − Φ_b(X(m,u) d)‖₂ / max(1, ‖Φ_b(X(m,u) d)‖₂)`.
pub fn naturality_residual(
    gen: &Morphism,
    rep: &dyn NodeRepresentation,
    d: &NodeData,
) -> Result<f64> {
    let transported = act_y(gen, &rep.phi(d)?)?.to_vec();
    let direct = rep.phi(&act_x(gen, d)?)?.to_vec();
    if transported.len() != direct.len() {
        return Err(Error::Dimension {
            expected: direct.len(),
            found: transported.len(),
        });
    }
    let diff = transported
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = direct.iter().map(|b| b * b).sum::<f64>().sqrt();
    Ok(diff / scale.max(1.0))
}
