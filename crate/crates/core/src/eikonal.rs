//! Arrival times of an expanding front with normal speed `c(x, t)`,
//! `A <= c <= B`, together with two independent oracles: an explicit
//! level-set evolution and a graph shortest-path solver.
//!
//! The front at time `t` is the reachable set `K(t) = {z <= t}` where `z`
//! solves `c(x, z(x)) |Dz(x)| = 1` outside `K0` and vanishes on `K0`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::convolve::{self, Boundary};
use crate::error::{FlowError, Result};
use crate::grid::{GridSpec, Point, RegionMask, ScalarField, MARGIN_CELLS};
use crate::par;
use crate::temperature::TemperatureField;

/// Relative tolerance on speed bound checks, absorbing rounding in `ḡ`.
const BOUND_SLACK: f64 = 1e-12;
const INNER_TOL: f64 = 1e-10;
const INNER_MAX_ITER: usize = 50;
/// Relative speed change between neighbouring nodes above which the speed
/// is flagged as under-resolved.
pub const ALIASING_RATIO: f64 = 0.2;

/// A normal-speed evaluator `c(x, t)` with known bounds `A <= c <= B`.
pub trait Speed: Sync {
    fn at(&self, p: &Point, t: f64) -> f64;

    /// Evaluation at grid node `idx` (located at `p`); implementations backed
    /// by grid data override this to skip spatial interpolation.
    fn at_node(&self, _idx: usize, p: &Point, t: f64) -> f64 {
        self.at(p, t)
    }

    fn bounds(&self) -> (f64, f64);
}

/// Closed-form speed laws selectable from a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", deny_unknown_fields)]
pub enum Formula {
    /// `base + amplitude * tanh(x[axis] / scale)`.
    Tanh {
        base: f64,
        amplitude: f64,
        #[serde(default)]
        axis: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `base + amplitude * sin(wavenumber * x[axis] + frequency * t)`.
    Sine {
        base: f64,
        amplitude: f64,
        #[serde(default)]
        axis: usize,
        wavenumber: f64,
        #[serde(default)]
        frequency: f64,
    },
    /// `base + amplitude * exp(-|x - center|^2 / width^2)`.
    Bump {
        base: f64,
        amplitude: f64,
        #[serde(default)]
        center: [f64; 3],
        width: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Formula {
    pub fn eval(&self, p: &Point, t: f64) -> f64 {
        match *self {
            Formula::Tanh {
                base,
                amplitude,
                axis,
                scale,
            } => base + amplitude * (p[axis] / scale).tanh(),
            Formula::Sine {
                base,
                amplitude,
                axis,
                wavenumber,
                frequency,
            } => base + amplitude * (wavenumber * p[axis] + frequency * t).sin(),
            Formula::Bump {
                base,
                amplitude,
                center,
                width,
            } => {
                let d = crate::grid::dist(p, &center);
                base + amplitude * (-(d * d) / (width * width)).exp()
            }
        }
    }

    /// Exact range of the formula over all of space and time.
    pub fn range(&self) -> (f64, f64) {
        let (base, amp) = match *self {
            Formula::Tanh {
                base, amplitude, ..
            }
            | Formula::Sine {
                base, amplitude, ..
            } => return (base - amplitude.abs(), base + amplitude.abs()),
            Formula::Bump {
                base, amplitude, ..
            } => (base, amplitude),
        };
        (base.min(base + amp), base.max(base + amp))
    }

    pub fn axis(&self) -> Option<usize> {
        match *self {
            Formula::Tanh { axis, .. } | Formula::Sine { axis, .. } => Some(axis),
            Formula::Bump { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum SpeedLaw {
    Constant {
        value: f64,
    },
    AnalyticFormula {
        formula: Formula,
    },
    /// `ḡ(v) = A + (B - A) exp(-(v - v*)^2 / σ^2)`.
    #[serde(rename_all = "camelCase")]
    TemperatureBell {
        v_star: f64,
        sigma: f64,
    },
}

/// Speed bounds, source coupling and the speed law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityModel {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(default)]
    pub kappa: f64,
    pub law: SpeedLaw,
}

impl VelocityModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FlowError::InvalidArgument(m));
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad(format!("speed lower bound A must be positive (positivity), got {}", self.a));
        }
        if !(self.b >= self.a && self.b.is_finite()) {
            return bad(format!("need A <= B, got A = {}, B = {}", self.a, self.b));
        }
        if !self.kappa.is_finite() {
            return bad("kappa must be finite".into());
        }
        match &self.law {
            SpeedLaw::Constant { value } => {
                if !(self.a..=self.b).contains(value) {
                    return bad(format!("constant speed {value} outside [A, B]"));
                }
            }
            SpeedLaw::AnalyticFormula { formula } => {
                let (lo, hi) = formula.range();
                if lo < self.a * (1.0 - BOUND_SLACK) || hi > self.b * (1.0 + BOUND_SLACK) {
                    return bad(format!(
                        "formula range [{lo}, {hi}] not inside [A, B] = [{}, {}]",
                        self.a, self.b
                    ));
                }
                if formula.axis().is_some_and(|a| a > 2) {
                    return bad("formula axis must be 0, 1 or 2".into());
                }
            }
            SpeedLaw::TemperatureBell { v_star, sigma } => {
                if !(*sigma > 0.0) || !v_star.is_finite() {
                    return bad("bell needs finite v* and sigma > 0".into());
                }
            }
        }
        Ok(())
    }

    /// `ḡ(v)`. For non-temperature laws this is the constant value, or the
    /// formula evaluated at `(p, t)`.
    #[inline]
    pub fn g_bar(&self, v: f64, p: &Point, t: f64) -> f64 {
        match &self.law {
            SpeedLaw::Constant { value } => *value,
            SpeedLaw::AnalyticFormula { formula } => formula.eval(p, t),
            SpeedLaw::TemperatureBell { v_star, sigma } => {
                let d = (v - v_star) / sigma;
                self.a + (self.b - self.a) * (-d * d).exp()
            }
        }
    }

    /// Lipschitz constant of `ḡ` in `v`.
    pub fn lip_g(&self) -> f64 {
        match &self.law {
            SpeedLaw::TemperatureBell { sigma, .. } => {
                (self.b - self.a) * (2.0f64).sqrt() * (-0.5f64).exp() / sigma
            }
            _ => 0.0,
        }
    }

    pub fn depends_on_temperature(&self) -> bool {
        matches!(self.law, SpeedLaw::TemperatureBell { .. })
    }

    /// The speed evaluator for this model; `v` is required for the bell law.
    pub fn speed<'a>(&'a self, v: Option<&'a TemperatureField>) -> Result<ModelSpeed<'a>> {
        self.validate()?;
        if self.depends_on_temperature() && v.is_none() {
            return Err(FlowError::InvalidArgument(
                "temperature-dependent speed needs a temperature field".into(),
            ));
        }
        Ok(ModelSpeed {
            model: self,
            v,
            smoothed: None,
        })
    }

    /// As [`speed`](Self::speed) but with `ḡ(v(., t_k))` smoothed in space by a
    /// Gaussian of standard deviation `scale` on every slice, then linearly
    /// interpolated in time. `scale = 0` is exactly the unsmoothed evaluator.
    pub fn smoothed_speed<'a>(
        &'a self,
        v: &'a TemperatureField,
        scale: f64,
    ) -> Result<ModelSpeed<'a>> {
        let mut s = self.speed(Some(v))?;
        if scale > 0.0 {
            let g = &v.grid;
            let slices = v
                .slices
                .iter()
                .zip(&v.slice_times)
                .map(|(vals, &t)| {
                    let mut f = ScalarField {
                        grid: g.clone(),
                        values: vals
                            .iter()
                            .enumerate()
                            .map(|(i, &x)| self.g_bar(x, &g.point(i), t))
                            .collect(),
                    };
                    convolve::heat_convolve(&mut f, 0.5 * scale * scale, Boundary::Clamp);
                    f.values
                })
                .collect();
            s.smoothed = Some(slices);
        }
        Ok(s)
    }
}

/// Speed evaluator derived from a [`VelocityModel`] (and a temperature for
/// the bell law).
pub struct ModelSpeed<'a> {
    model: &'a VelocityModel,
    v: Option<&'a TemperatureField>,
    smoothed: Option<Vec<Vec<f64>>>,
}

impl ModelSpeed<'_> {
    fn from_slices(&self, slices: &[Vec<f64>], idx_or_point: std::result::Result<usize, &Point>, t: f64) -> f64 {
        let v = self.v.expect("smoothed speed has temperature");
        let (a, b, w) = v.time_weights(t);
        let at = |i: usize| (1.0 - w) * slices[a][i] + w * slices[b][i];
        match idx_or_point {
            Ok(i) => at(i),
            Err(p) => match v.grid.stencil(p) {
                Some((nodes, wts, n)) => (0..n).map(|c| wts[c] * at(nodes[c])).sum(),
                None => f64::NAN,
            },
        }
    }
}

impl Speed for ModelSpeed<'_> {
    fn at(&self, p: &Point, t: f64) -> f64 {
        if let Some(s) = &self.smoothed {
            return self.from_slices(s, Err(p), t);
        }
        let v = match self.v {
            Some(v) if self.model.depends_on_temperature() => v.sample(p, t).unwrap_or(f64::NAN),
            _ => 0.0,
        };
        self.model.g_bar(v, p, t)
    }

    fn at_node(&self, idx: usize, p: &Point, t: f64) -> f64 {
        if let Some(s) = &self.smoothed {
            return self.from_slices(s, Ok(idx), t);
        }
        let v = match self.v {
            Some(v) if self.model.depends_on_temperature() => v.node_value(idx, t),
            _ => 0.0,
        };
        self.model.g_bar(v, p, t)
    }

    fn bounds(&self) -> (f64, f64) {
        (self.model.a, self.model.b)
    }
}

/// Constant speed with bounds `(c, c)`.
pub struct ConstantSpeed(pub f64);

impl Speed for ConstantSpeed {
    fn at(&self, _p: &Point, _t: f64) -> f64 {
        self.0
    }
    fn bounds(&self) -> (f64, f64) {
        (self.0, self.0)
    }
}

/// A closed-form speed with declared bounds.
pub struct FormulaSpeed {
    pub formula: Formula,
    pub bounds: (f64, f64),
}

impl Speed for FormulaSpeed {
    fn at(&self, p: &Point, t: f64) -> f64 {
        self.formula.eval(p, t)
    }
    fn bounds(&self) -> (f64, f64) {
        self.bounds
    }
}

#[inline]
fn checked_speed(speed: &dyn Speed, idx: usize, p: &Point, t: f64) -> Result<f64> {
    let c = speed.at_node(idx, p, t);
    check_bounds(speed, c, p, t)
}

#[inline]
fn check_bounds(speed: &dyn Speed, c: f64, p: &Point, t: f64) -> Result<f64> {
    let (lo, hi) = speed.bounds();
    if !(c >= lo * (1.0 - BOUND_SLACK) && c <= hi * (1.0 + BOUND_SLACK)) {
        return Err(FlowError::SpeedOutOfBounds {
            value: c,
            point: *p,
            time: t,
            lower: lo,
            upper: hi,
        });
    }
    Ok(c)
}

/// The minimal-time function on a grid. Values up to `extent` (at least the
/// horizon) are final; beyond that nodes hold `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalField {
    pub z: ScalarField,
    pub horizon: f64,
    pub extent: f64,
    pub source: RegionMask,
    /// Speed bounds `(A, B)` of the evaluator that produced the field.
    pub bounds: (f64, f64),
    /// Neighbour pairs whose speeds differ by more than [`ALIASING_RATIO`].
    pub aliasing_pairs: usize,
}

impl ArrivalField {
    pub fn grid(&self) -> &GridSpec {
        &self.z.grid
    }

    /// Rebuilds an arrival field from stored values: `K0 = {z <= 0}` and
    /// values trusted up to `horizon`.
    pub fn from_values(z: ScalarField, horizon: f64, bounds: (f64, f64)) -> Result<Self> {
        let source = RegionMask {
            grid: z.grid.clone(),
            inside: z.values.iter().map(|&v| v <= 0.0).collect(),
        };
        if source.is_empty() || !(horizon > 0.0) {
            return Err(FlowError::InvalidArgument(
                "stored arrival needs nodes with z <= 0 and a positive horizon".into(),
            ));
        }
        Ok(Self {
            z,
            horizon,
            extent: horizon,
            source,
            bounds,
            aliasing_pairs: 0,
        })
    }

    /// The reachable set `{z <= t}`.
    pub fn reachable_set(&self, t: f64) -> Result<RegionMask> {
        if !(t >= 0.0 && t <= self.extent) {
            return Err(FlowError::InvalidArgument(format!(
                "time {t} outside [0, {}]",
                self.extent
            )));
        }
        Ok(RegionMask {
            grid: self.z.grid.clone(),
            inside: self.z.values.iter().map(|&z| z <= t).collect(),
        })
    }

    /// `z` with the constant values on `K0` replaced by the negative
    /// distance to its rasterised boundary over the mean speed, so level sets
    /// near `t = 0` and upwind differences next to `K0` see a signed field.
    pub fn extended_z(&self) -> ScalarField {
        let sdf = crate::edt::signed_distance(&self.source);
        let scale = 2.0 / (self.bounds.0 + self.bounds.1);
        let mut z = self.z.clone();
        for (i, v) in z.values.iter_mut().enumerate() {
            if self.source.inside[i] {
                *v = -sdf.values[i] * scale;
            }
        }
        z
    }

    /// Upwind `|Dz|` of [`extended_z`](Self::extended_z).
    pub fn gradient_norm(&self) -> ScalarField {
        crate::grid::godunov_gradient_norm(&self.extended_z())
    }

    /// Nodes with `0 < z < T` farther than `2h` from `K0`: where gradient
    /// bounds are certified.
    pub fn certified_nodes(&self) -> Vec<usize> {
        let g = self.grid();
        let h = g.spacing();
        let d = crate::edt::squared_distance_cells(g, &self.source.inside);
        (0..g.len())
            .filter(|&i| {
                let z = self.z.values[i];
                z > 0.0 && z < self.horizon && d[i].sqrt() * h > 2.0 * h
            })
            .collect()
    }

    /// Fraction of certified nodes whose upwind `|Dz|` lies in
    /// `[(1 - 2hB/A)/B, (1 + 2hB/A)/A]`, and the number of certified nodes.
    pub fn gradient_bound_fraction(&self) -> (f64, usize) {
        let (a, b) = self.bounds;
        let slack = 2.0 * self.grid().spacing() * b / a;
        let (lo, hi) = ((1.0 - slack) / b, (1.0 + slack) / a);
        let gn = self.gradient_norm();
        let nodes = self.certified_nodes();
        if nodes.is_empty() {
            return (1.0, 0);
        }
        let ok = nodes
            .iter()
            .filter(|&&i| (lo..=hi).contains(&gn.values[i]))
            .count();
        (ok as f64 / nodes.len() as f64, nodes.len())
    }
}

/// An arrival field with its slice times and perimeter estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontHistory {
    pub arrival: ArrivalField,
    pub slice_times: Vec<f64>,
    pub perimeters: Vec<crate::geometry::PerimeterEstimate>,
}

/// Free function form of [`ArrivalField::reachable_set`].
pub fn reachable_set(arrival: &ArrivalField, t: f64) -> Result<RegionMask> {
    arrival.reachable_set(t)
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    z: f64,
    idx: usize,
}

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    // Max-heap on the reversed key: smallest time first, ties by node index.
    fn cmp(&self, o: &Self) -> Ordering {
        o.z.total_cmp(&self.z).then_with(|| o.idx.cmp(&self.idx))
    }
}

/// How far past the horizon the march continues so that bands centred at
/// `t = T` are fully resolved.
pub fn default_overshoot(grid: &GridSpec, a: f64, b: f64) -> f64 {
    let h = grid.spacing();
    4.0 * h * b + 2.0 * h / a
}

fn check_source(k0: &RegionMask) -> Result<()> {
    if k0.is_empty() {
        return Err(FlowError::InvalidArgument("initial set is empty".into()));
    }
    k0.check_margin("initial set")
}

/// Godunov upwind update: the largest root of
/// `Σ_i max(z - a_i, 0)^2 = (h/c)^2` over the per-axis upwind values `a`.
#[inline]
fn godunov_update(a: &[f64; 3], dim: usize, f: f64) -> f64 {
    let mut s = [f64::INFINITY; 3];
    s[..dim].copy_from_slice(&a[..dim]);
    s[..dim].sort_by(f64::total_cmp);
    let mut z = s[0] + f;
    let (mut sum, mut sum2) = (s[0], s[0] * s[0]);
    for m in 2..=dim {
        if !(s[m - 1].is_finite() && z > s[m - 1]) {
            break;
        }
        sum += s[m - 1];
        sum2 += s[m - 1] * s[m - 1];
        let mf = m as f64;
        let disc = sum * sum - mf * (sum2 - f * f);
        if disc < 0.0 {
            break;
        }
        z = (sum + disc.sqrt()) / mf;
    }
    z
}

/// Fast marching for `c(x, z) |Dz| = 1`, marching until `T` plus
/// [`default_overshoot`].
pub fn solve_arrival(k0: &RegionMask, speed: &dyn Speed, horizon: f64) -> Result<ArrivalField> {
    let (a, b) = speed.bounds();
    let over = default_overshoot(&k0.grid, a, b);
    solve_arrival_with_overshoot(k0, speed, horizon, over)
}

pub fn solve_arrival_with_overshoot(
    k0: &RegionMask,
    speed: &dyn Speed,
    horizon: f64,
    overshoot: f64,
) -> Result<ArrivalField> {
    check_source(k0)?;
    if !(horizon > 0.0) {
        return Err(FlowError::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let g = &k0.grid;
    let h = g.spacing();
    let dim = g.dim();
    let n = g.len();
    let limit = horizon + overshoot.max(0.0);

    let mut z = vec![f64::INFINITY; n];
    let mut accepted = vec![false; n];
    let mut c_at = vec![f64::NAN; n];
    let mut heap = BinaryHeap::new();

    for i in 0..n {
        if k0.inside[i] {
            z[i] = 0.0;
            accepted[i] = true;
            c_at[i] = checked_speed(speed, i, &g.point(i), 0.0)?;
        }
    }

    let update = |i: usize, z: &[f64], accepted: &[bool]| -> Result<(f64, f64)> {
        let mut up = [f64::INFINITY; 3];
        for (ax, slot) in up.iter_mut().enumerate().take(dim) {
            for d in [-1isize, 1] {
                if let Some(j) = g.offset(i, ax, d) {
                    if accepted[j] && z[j] < *slot {
                        *slot = z[j];
                    }
                }
            }
        }
        let p = g.point(i);
        let zmin = up.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut c = checked_speed(speed, i, &p, zmin)?;
        let mut zt = godunov_update(&up, dim, h / c);
        for _ in 0..INNER_MAX_ITER {
            c = checked_speed(speed, i, &p, zt)?;
            let next = godunov_update(&up, dim, h / c);
            let done = (next - zt).abs() <= INNER_TOL;
            zt = next;
            if done {
                break;
            }
        }
        Ok((zt, c))
    };

    let mut tentative_c = vec![f64::NAN; n];
    let push_neighbours = |i: usize,
                               z: &mut Vec<f64>,
                               accepted: &Vec<bool>,
                               heap: &mut BinaryHeap<Entry>,
                               tc: &mut Vec<f64>|
     -> Result<()> {
        for ax in 0..dim {
            for d in [-1isize, 1] {
                if let Some(j) = g.offset(i, ax, d) {
                    if accepted[j] {
                        continue;
                    }
                    let (zn, c) = update(j, z, accepted)?;
                    if zn < z[j] {
                        z[j] = zn;
                        tc[j] = c;
                        heap.push(Entry { z: zn, idx: j });
                    }
                }
            }
        }
        Ok(())
    };

    // The rasterised interface sits half a cell beyond the outermost K0
    // nodes; face neighbours of K0 start from their distance to it.
    let sdf = crate::edt::signed_distance(k0);
    let mut ring = Vec::new();
    for i in 0..n {
        if k0.inside[i] {
            continue;
        }
        let touches = (0..dim).any(|ax| {
            [-1isize, 1]
                .iter()
                .any(|&d| g.offset(i, ax, d).is_some_and(|j| k0.inside[j]))
        });
        if touches {
            if g.boundary_distance(i) < MARGIN_CELLS {
                return Err(FlowError::Margin {
                    what: "initial set neighbourhood".into(),
                    node: i,
                    cells: g.boundary_distance(i),
                });
            }
            let d = -sdf.values[i];
            let p = g.point(i);
            let mut c = checked_speed(speed, i, &p, 0.0)?;
            let mut zi = d / c;
            for _ in 0..INNER_MAX_ITER {
                c = checked_speed(speed, i, &p, zi)?;
                let next = d / c;
                let done = (next - zi).abs() <= INNER_TOL;
                zi = next;
                if done {
                    break;
                }
            }
            z[i] = zi;
            c_at[i] = c;
            accepted[i] = true;
            ring.push(i);
        }
    }
    let mut last = ring.iter().map(|&i| z[i]).fold(0.0, f64::max);
    for &i in &ring {
        push_neighbours(i, &mut z, &accepted, &mut heap, &mut tentative_c)?;
    }

    let mut extent = limit;
    while let Some(Entry { z: zi, idx }) = heap.pop() {
        if accepted[idx] || zi != z[idx] {
            continue;
        }
        if zi > limit {
            break;
        }
        if g.boundary_distance(idx) < MARGIN_CELLS {
            if zi <= horizon {
                return Err(FlowError::Margin {
                    what: format!("front at time {zi:.6}"),
                    node: idx,
                    cells: g.boundary_distance(idx),
                });
            }
            extent = zi;
            break;
        }
        let zi = zi.max(last);
        last = zi;
        z[idx] = zi;
        accepted[idx] = true;
        c_at[idx] = tentative_c[idx];
        push_neighbours(idx, &mut z, &accepted, &mut heap, &mut tentative_c)?;
    }
    for i in 0..n {
        if !accepted[i] {
            z[i] = f64::INFINITY;
        }
    }

    let mut aliasing_pairs = 0;
    for i in 0..n {
        if !accepted[i] {
            continue;
        }
        for ax in 0..dim {
            if let Some(j) = g.offset(i, ax, 1) {
                if accepted[j] {
                    let (c1, c2) = (c_at[i], c_at[j]);
                    if (c1 - c2).abs() > ALIASING_RATIO * c1.min(c2) {
                        aliasing_pairs += 1;
                    }
                }
            }
        }
    }

    Ok(ArrivalField {
        z: ScalarField {
            grid: g.clone(),
            values: z,
        },
        horizon,
        extent: extent.min(limit),
        source: k0.clone(),
        bounds: speed.bounds(),
        aliasing_pairs,
    })
}

fn stencil_offsets(dim: usize) -> Vec<[isize; 3]> {
    let mut out = Vec::new();
    if dim == 2 {
        for i in -2isize..=2 {
            for j in -2isize..=2 {
                let (a, b) = (i.unsigned_abs(), j.unsigned_abs());
                if (a, b) == (0, 0) || gcd(a, b) != 1 {
                    continue;
                }
                out.push([i, j, 0]);
            }
        }
    } else {
        for i in -1isize..=1 {
            for j in -1isize..=1 {
                for k in -1isize..=1 {
                    if (i, j, k) != (0, 0, 0) {
                        out.push([i, j, k]);
                    }
                }
            }
        }
    }
    out
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Worst relative overestimate of Euclidean length by shortest paths on the
/// oracle's graph stencil (16 neighbours in 2D, 26 in 3D), maximised over
/// directions.
pub fn metrication_bound(dim: usize) -> f64 {
    let vecs: Vec<[f64; 3]> = stencil_offsets(dim)
        .iter()
        .map(|o| [o[0] as f64, o[1] as f64, o[2] as f64])
        .collect();
    let mut worst = 0.0f64;
    if dim == 2 {
        for s in 0..=20000 {
            let th = std::f64::consts::FRAC_PI_4 * s as f64 / 20000.0;
            let d = [th.cos(), th.sin()];
            let mut best = f64::INFINITY;
            for u in &vecs {
                for v in &vecs {
                    let det = u[0] * v[1] - u[1] * v[0];
                    if det.abs() < 1e-12 {
                        continue;
                    }
                    let al = (d[0] * v[1] - d[1] * v[0]) / det;
                    let be = (u[0] * d[1] - u[1] * d[0]) / det;
                    if al >= -1e-12 && be >= -1e-12 {
                        best = best.min(al * crate::grid::norm(u) + be * crate::grid::norm(v));
                    }
                }
            }
            worst = worst.max(best - 1.0);
        }
    } else {
        // On the 26-neighbour stencil the worst direction lies inside the
        // fundamental cone spanned by (1,0,0), (1,1,0), (1,1,1).
        let (e1, e2, e3) = ([1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 1.0, 1.0]);
        let n = 200;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let (l1, l2) = (i as f64 / n as f64, j as f64 / n as f64);
                let l3 = 1.0 - l1 - l2;
                let mut d = [0.0; 3];
                for a in 0..3 {
                    d[a] = l1 * e1[a] + l2 * e2[a] + l3 * e3[a];
                }
                let len = l1 + l2 * 2f64.sqrt() + l3 * 3f64.sqrt();
                worst = worst.max(len / crate::grid::norm(&d) - 1.0);
            }
        }
    }
    worst
}

/// Label-setting shortest arrival times on the 16/26-neighbour graph; edge
/// time is edge length over the speed at the edge midpoint and the source
/// node's label. An oracle only: it carries a stencil metrication error of
/// up to [`metrication_bound`].
pub fn dijkstra_oracle(k0: &RegionMask, speed: &dyn Speed, horizon: f64) -> Result<ArrivalField> {
    check_source(k0)?;
    let g = &k0.grid;
    let h = g.spacing();
    let n = g.len();
    let (a, b) = speed.bounds();
    let limit = horizon + default_overshoot(g, a, b);
    let offsets: Vec<([isize; 3], f64)> = stencil_offsets(g.dim())
        .into_iter()
        .map(|o| {
            let l = ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64).sqrt() * h;
            (o, l)
        })
        .collect();
    let mut z = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for i in 0..n {
        if k0.inside[i] {
            z[i] = 0.0;
            heap.push(Entry { z: 0.0, idx: i });
        }
    }
    let mut extent = limit;
    while let Some(Entry { z: zi, idx }) = heap.pop() {
        if done[idx] || zi != z[idx] {
            continue;
        }
        if zi > limit {
            break;
        }
        if g.boundary_distance(idx) < MARGIN_CELLS {
            if zi <= horizon {
                return Err(FlowError::Margin {
                    what: format!("oracle front at time {zi:.6}"),
                    node: idx,
                    cells: g.boundary_distance(idx),
                });
            }
            extent = zi;
            break;
        }
        done[idx] = true;
        let p = g.point(idx);
        for (o, len) in &offsets {
            let Some(j) = g.shifted(idx, *o) else { continue };
            if done[j] {
                continue;
            }
            let q = g.point(j);
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])];
            let c = check_bounds(speed, speed.at(&mid, zi), &mid, zi)?;
            let zn = zi + len / c;
            if zn < z[j] {
                z[j] = zn;
                heap.push(Entry { z: zn, idx: j });
            }
        }
    }
    for i in 0..n {
        if !done[i] {
            z[i] = f64::INFINITY;
        }
    }
    Ok(ArrivalField {
        z: ScalarField {
            grid: g.clone(),
            values: z,
        },
        horizon,
        extent: extent.min(limit),
        source: k0.clone(),
        bounds: speed.bounds(),
        aliasing_pairs: 0,
    })
}

/// Explicit upwind evolution of `u_t = c |Du|` (expanding super-level sets),
/// returning `u` at each requested output time. Steps never exceed `dt`;
/// the last step before an output time is shortened to land on it.
pub fn evolve_levelset(
    u0: &ScalarField,
    speed: &dyn Speed,
    dt: f64,
    horizon: f64,
    output_times: &[f64],
) -> Result<Vec<ScalarField>> {
    let g = &u0.grid;
    let h = g.spacing();
    let (_, b) = speed.bounds();
    let limit = 0.4 * h / b;
    if !(dt > 0.0 && dt <= limit) {
        return Err(FlowError::Cfl { dt, limit });
    }
    if output_times
        .windows(2)
        .any(|w| w[1] < w[0])
        || output_times.iter().any(|&t| t < 0.0 || t > horizon)
    {
        return Err(FlowError::InvalidArgument(
            "output times must be sorted and inside [0, T]".into(),
        ));
    }
    let dim = g.dim();
    let mut u = u0.values.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(output_times.len());
    for &target in output_times {
        while t < target - 1e-12 {
            let step = dt.min(target - t);
            let cur = &u;
            let next: Vec<Result<f64>> = par::map(g.len(), |i| {
                let ui = cur[i];
                let mut s = 0.0;
                for ax in 0..dim {
                    let lo = g.offset(i, ax, -1).map_or(ui, |j| cur[j]);
                    let hi = g.offset(i, ax, 1).map_or(ui, |j| cur[j]);
                    let dm = (ui - lo) / h;
                    let dp = (hi - ui) / h;
                    s += dp.max(0.0).powi(2) + dm.min(0.0).powi(2);
                }
                let p = g.point(i);
                let c = checked_speed(speed, i, &p, t)?;
                Ok(ui + step * c * s.sqrt())
            });
            u = next.into_iter().collect::<Result<Vec<_>>>()?;
            t += step;
        }
        out.push(ScalarField {
            grid: g.clone(),
            values: u.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{godunov_gradient_norm, norm};

    fn disk_setup(n: usize) -> (GridSpec, RegionMask) {
        let g = GridSpec::cell_centered(2, n, 2.0).unwrap();
        let m = RegionMask::from_fn(&g, |p| norm(p) <= 0.5);
        (g, m)
    }

    #[test]
    fn godunov_update_cases() {
        assert_eq!(godunov_update(&[0.0, f64::INFINITY, f64::INFINITY], 2, 1.0), 1.0);
        let z = godunov_update(&[0.0, 0.0, f64::INFINITY], 2, 1.0);
        assert!((z - 0.5f64.sqrt()).abs() < 1e-15);
        // Second neighbour too late to matter.
        assert_eq!(godunov_update(&[0.0, 5.0, f64::INFINITY], 2, 1.0), 1.0);
        let z = godunov_update(&[0.0, 0.0, 0.0], 3, 1.0);
        assert!((z - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn disk_constant_speed_is_radial() {
        let (g, k0) = disk_setup(256);
        let h = g.spacing();
        let a = solve_arrival(&k0, &ConstantSpeed(1.0), 1.0).unwrap();
        let z = a.z.sample(&[1.5, 0.0, 0.0]).unwrap();
        assert!((z - 1.0).abs() <= 1.5 * h, "{z}");
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            let zi = a.z.values[i];
            if zi < 1.0 {
                worst = worst.max((zi - (norm(&g.point(i)) - 0.5).max(0.0)).abs());
            }
        }
        assert!(worst <= 1.5 * h, "sup error {worst} vs h {h}");
        assert_eq!(a.aliasing_pairs, 0);
    }

    #[test]
    fn reachable_sets_are_monotone_and_start_at_source() {
        let (g, k0) = disk_setup(64);
        let a = solve_arrival(&k0, &ConstantSpeed(1.0), 1.0).unwrap();
        assert_eq!(a.reachable_set(0.0).unwrap(), k0);
        let m1 = a.reachable_set(0.3).unwrap();
        let m2 = a.reachable_set(0.7).unwrap();
        assert!(m1.is_subset_of(&m2));
        let h = g.spacing();
        let disk = RegionMask::from_fn(&g, |p| norm(p) <= 1.2);
        let diff = m2.symmetric_difference(&disk) as f64 * h * h;
        assert!(diff <= 2.0 * std::f64::consts::PI * 1.2 * h);
    }

    #[test]
    fn margin_breach_is_an_error() {
        let (_, k0) = disk_setup(64);
        assert!(matches!(
            solve_arrival(&k0, &ConstantSpeed(1.0), 3.0),
            Err(FlowError::Margin { .. })
        ));
    }

    #[test]
    fn speed_bounds_are_enforced() {
        struct Liar;
        impl Speed for Liar {
            fn at(&self, _: &Point, _: f64) -> f64 {
                3.0
            }
            fn bounds(&self) -> (f64, f64) {
                (1.0, 2.0)
            }
        }
        let (_, k0) = disk_setup(32);
        assert!(matches!(
            solve_arrival(&k0, &Liar, 0.5),
            Err(FlowError::SpeedOutOfBounds { .. })
        ));
    }

    #[test]
    fn time_dependent_speed_inner_iteration() {
        // c = 1 + t: the front radius is 0.5 + t + t^2/2.
        struct Accel;
        impl Speed for Accel {
            fn at(&self, _: &Point, t: f64) -> f64 {
                1.0 + t.min(1.5)
            }
            fn bounds(&self) -> (f64, f64) {
                (1.0, 2.5)
            }
        }
        let g = GridSpec::cell_centered(2, 200, 3.0).unwrap();
        let h = g.spacing();
        let k0 = RegionMask::from_fn(&g, |p| norm(p) <= 0.5);
        let a = solve_arrival(&k0, &Accel, 1.0).unwrap();
        let z = a.z.sample(&[0.5 + 1.0 + 0.5, 0.0, 0.0]).unwrap();
        assert!((z - 1.0).abs() < 2.0 * h, "{z}");
    }

    #[test]
    fn gradient_bounds_hold_on_tanh_speed() {
        let g = GridSpec::cell_centered(2, 128, 3.0).unwrap();
        let h = g.spacing();
        let k0 = RegionMask::from_fn(&g, |p| norm(p) <= 0.5);
        let f = FormulaSpeed {
            formula: Formula::Tanh {
                base: 1.5,
                amplitude: 0.5,
                axis: 0,
                scale: 1.0,
            },
            bounds: (1.0, 2.0),
        };
        let a = solve_arrival(&k0, &f, 1.0).unwrap();
        let gn = godunov_gradient_norm(&a.z);
        let (lo, hi) = (1.0 / 2.0 * (1.0 - 2.0 * h * 2.0), 1.0 * (1.0 + 2.0 * h * 2.0));
        let cert = a.certified_nodes();
        assert!(!cert.is_empty());
        let ok = cert
            .iter()
            .filter(|&&i| gn.values[i] >= lo && gn.values[i] <= hi)
            .count();
        assert_eq!(ok, cert.len());
    }

    #[test]
    fn dijkstra_matches_on_axis_and_scales_with_speed() {
        let (g, k0) = disk_setup(128);
        let h = g.spacing();
        let d1 = dijkstra_oracle(&k0, &ConstantSpeed(1.0), 1.0).unwrap();
        let z = d1.z.sample(&[0.0, 1.5, 0.0]).unwrap();
        assert!((z - 1.0).abs() <= 2.0 * h * (1.0 + metrication_bound(2)), "{z}");
        let d2 = dijkstra_oracle(&k0, &ConstantSpeed(2.0), 0.5).unwrap();
        let z = d2.z.sample(&[0.0, 1.5, 0.0]).unwrap();
        assert!((z - 0.5).abs() <= h, "{z}");
    }

    #[test]
    fn metrication_constants() {
        let m2 = metrication_bound(2);
        assert!((m2 - 0.027486).abs() < 1e-5, "{m2}");
        let m3 = metrication_bound(3);
        assert!(m3 > m2 && m3 < 0.15, "{m3}");
    }

    #[test]
    fn levelset_radial_profile() {
        let g = GridSpec::cell_centered(2, 128, 2.0).unwrap();
        let h = g.spacing();
        let u0 = ScalarField::from_fn(&g, |p| 0.5 - norm(p));
        let dt = 0.4 * h;
        let out = evolve_levelset(&u0, &ConstantSpeed(1.0), dt, 0.5, &[0.25, 0.5]).unwrap();
        for (k, t) in [0.25, 0.5].iter().enumerate() {
            for i in 0..g.len() {
                let r = norm(&g.point(i));
                if r > 0.6 && r < 1.7 {
                    let exact = 0.5 - (r - t).max(0.0);
                    assert!((out[k].values[i] - exact).abs() < 2.0 * h);
                }
            }
        }
        assert!(matches!(
            evolve_levelset(&u0, &ConstantSpeed(1.0), h, 0.5, &[0.5]),
            Err(FlowError::Cfl { .. })
        ));
    }

    #[test]
    fn bell_law_stays_in_bounds() {
        let m = VelocityModel {
            a: 0.5,
            b: 1.5,
            kappa: 1.0,
            law: SpeedLaw::TemperatureBell {
                v_star: 0.3,
                sigma: 0.2,
            },
        };
        for k in -100..100 {
            let v = k as f64 * 0.05;
            let c = m.g_bar(v, &[0.0; 3], 0.0);
            assert!((0.5..=1.5).contains(&c));
        }
        assert_eq!(m.g_bar(0.3, &[0.0; 3], 0.0), 1.5);
        // Lipschitz constant is attained at v* ± σ/√2.
        let d = 1e-6;
        let v = 0.3 + 0.2 / 2f64.sqrt();
        let slope = (m.g_bar(v + d, &[0.0; 3], 0.0) - m.g_bar(v - d, &[0.0; 3], 0.0)) / (2.0 * d);
        assert!((slope.abs() - m.lip_g()).abs() < 1e-6);
    }
}
