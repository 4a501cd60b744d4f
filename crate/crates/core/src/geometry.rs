//! Interior regularity of rasterised sets: ball, cone and paraboloid
//! certificates, the paraboloid graph patch, Lipschitz graph covers of a
//! front, perimeter estimators and a refinement diagnostic for normals.
//!
//! Every existential "there is an axis ν" is resolved by search: the
//! estimated inward normal first, then a direction net, then a local
//! refinement around the best candidate with spacing 1/16 rad.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::edt;
use crate::eikonal::{ArrivalField, FrontHistory};
use crate::error::{FlowError, Result};
use crate::grid::{
    self, central_gradient, coarea_integral, godunov_gradient_norm, norm, sub, GridSpec, Point,
    RegionMask, ScalarField,
};
use crate::par;

/// Cap on the number of boundary samples per check.
pub const MAX_BOUNDARY_SAMPLES: usize = 5000;
pub const DEFAULT_SAMPLE_SEED: u64 = 0x5eed_f00d;
/// Lipschitz constant of every cover graph.
pub const GRAPH_SLOPE: f64 = 3.872_983_346_207_417; // √15
const REFINE_STEP: f64 = 1.0 / 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConeParams {
    pub rho: f64,
    pub theta: f64,
}

impl ConeParams {
    pub fn new(rho: f64, theta: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < theta && theta.is_finite()) {
            return Err(FlowError::InvalidArgument(format!(
                "cone needs 0 < rho < theta, got ({rho}, {theta})"
            )));
        }
        Ok(Self { rho, theta })
    }

    /// Aperture parameter from the paraboloid constant: `ρ = ½ (2C)^{-2/β}`.
    pub fn from_paraboloid_constant(c: f64, beta: f64) -> Result<Self> {
        let rho = 0.5 * (2.0 * c).powf(-2.0 / beta);
        Self::new(rho, 2.0 * rho)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParaboloidParams {
    pub delta: f64,
    pub c: f64,
}

impl ParaboloidParams {
    pub fn new(delta: f64, c: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0 && c > 0.0 && c.is_finite()) {
            return Err(FlowError::InvalidArgument(format!(
                "paraboloid needs 0 < delta < 1 and C > 0, got ({delta}, {c})"
            )));
        }
        Ok(Self { delta, c })
    }

    /// `C^{-1/δ}`: where the profile `t - C t^{1+δ}` returns to zero.
    pub fn reach(&self) -> f64 {
        self.c.powf(-1.0 / self.delta)
    }

    #[inline]
    pub fn profile(&self, t: f64) -> f64 {
        t - self.c * t.powf(1.0 + self.delta)
    }
}

/// Constants of the patch `{|x'| <= r0, c |x'|^{1+γ} <= x_N <= τ0}` that
/// sits inside a paraboloid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GraphPatch {
    pub gamma: f64,
    pub c: f64,
    pub tau0: f64,
    pub r0: f64,
}

/// Orthonormal frame with `axis` as last vector.
fn frame(axis: &Point, dim: usize) -> Vec<Point> {
    if dim == 2 {
        vec![[-axis[1], axis[0], 0.0]]
    } else {
        let k = (0..3)
            .min_by(|&a, &b| axis[a].abs().total_cmp(&axis[b].abs()))
            .unwrap_or(0);
        let mut e = [0.0; 3];
        e[k] = 1.0;
        let c = cross(axis, &e);
        let l = norm(&c);
        let e1 = [c[0] / l, c[1] / l, c[2] / l];
        let e2 = cross(axis, &e1);
        vec![e1, e2]
    }
}

fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Roughly uniform unit vectors: equal angles in 2D, a Fibonacci lattice in 3D.
pub fn direction_net(dim: usize, count: usize) -> Vec<Point> {
    if dim == 2 {
        (0..count)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                [a.cos(), a.sin(), 0.0]
            })
            .collect()
    } else {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..count)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = (1.0 - y * y).sqrt();
                let a = golden * i as f64;
                [r * a.cos(), y, r * a.sin()]
            })
            .collect()
    }
}

/// Largest distance from any unit vector to the nearest net vector
/// (exact in 2D, sampled in 3D).
pub fn net_covering_radius(net: &[Point], dim: usize) -> f64 {
    let probes = direction_net(dim, if dim == 2 { 20000 } else { 20000 });
    probes
        .iter()
        .map(|p| {
            net.iter()
                .map(|q| norm(&sub(p, q)))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Smallest net size whose covering radius is at most 1/4.
pub fn quarter_net(dim: usize) -> Vec<Point> {
    let mut n = if dim == 2 { 4 } else { 16 };
    loop {
        let net = direction_net(dim, n);
        if net_covering_radius(&net, dim) <= 0.25 {
            return net;
        }
        n += 1;
    }
}

/// Unit offsets used for every ball of a lattice (centre included).
fn ball_offsets(dim: usize) -> Vec<Point> {
    let mut out = vec![[0.0; 3]];
    if dim == 2 {
        for (rad, phase) in [(0.5, 0.5), (1.0, 0.0)] {
            for k in 0..8 {
                let a = std::f64::consts::PI * (k as f64 + phase) / 4.0;
                out.push([rad * a.cos(), rad * a.sin(), 0.0]);
            }
        }
    } else {
        out.extend(direction_net(3, 16));
    }
    out
}

pub const CONE_LEVELS: usize = 12;
pub const PARABOLOID_LEVELS: usize = 16;

/// Cone lattice relative to the vertex: balls `B(tν, tρ/θ)` at 12 evenly
/// spaced depths, 17 points each.
pub fn cone_lattice(axis: &Point, p: &ConeParams, dim: usize) -> Vec<Point> {
    let offs = ball_offsets(dim);
    let mut out = Vec::with_capacity(CONE_LEVELS * offs.len());
    for j in 1..=CONE_LEVELS {
        let t = p.theta * j as f64 / CONE_LEVELS as f64;
        let r = t * p.rho / p.theta;
        for o in &offs {
            out.push([
                t * axis[0] + r * o[0],
                t * axis[1] + r * o[1],
                t * axis[2] + r * o[2],
            ]);
        }
    }
    out
}

/// Paraboloid lattice relative to the vertex: balls `B(tν, t - C t^{1+δ})`
/// at 16 depths with quadratic spacing (dense near the vertex).
pub fn paraboloid_lattice(axis: &Point, p: &ParaboloidParams, dim: usize) -> Vec<Point> {
    let offs = ball_offsets(dim);
    let reach = p.reach();
    let mut out = Vec::with_capacity(PARABOLOID_LEVELS * offs.len());
    for j in 1..=PARABOLOID_LEVELS {
        let s = j as f64 / PARABOLOID_LEVELS as f64;
        let t = reach * s * s;
        let r = p.profile(t).max(0.0);
        for o in &offs {
            out.push([
                t * axis[0] + r * o[0],
                t * axis[1] + r * o[1],
                t * axis[2] + r * o[2],
            ]);
        }
    }
    out
}

/// Exact membership in the paraboloid with vertex at the origin and axis
/// `axis`: `max_t (t - C t^{1+δ} - |q - tν|) >= -tol`. The objective is
/// concave in `t`, so golden-section search finds the maximum.
pub fn in_paraboloid(q: &Point, axis: &Point, p: &ParaboloidParams, tol: f64) -> bool {
    let f = |t: f64| p.profile(t) - norm(&grid::add_scaled(q, -t, axis));
    let (mut a, mut b) = (0.0, p.reach());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
        if b - a < 1e-15 * p.reach().max(1.0) {
            break;
        }
    }
    f1.max(f2).max(f(0.0)).max(f(p.reach())) >= -tol
}

/// The four patch constants and a containment certificate on a 100×100
/// lattice of the patch (radial coordinate × height; the paraboloid is
/// rotationally symmetric, so one radial slice suffices).
pub fn paraboloid_graph_patch(p: &ParaboloidParams) -> Result<GraphPatch> {
    let d = p.delta;
    let two_c = 2.0 * p.c;
    let patch = GraphPatch {
        gamma: d / (2.0 + d),
        c: 2.0 * two_c.powf(1.0 / (2.0 + d)),
        tau0: two_c.powf(-1.0 / d),
        r0: (3f64.sqrt() - 1.0).powf((2.0 + d) / d) * two_c.powf(-1.0 / d),
    };
    let axis = [0.0, 1.0, 0.0];
    let n = 100;
    for i in 0..n {
        let x = patch.r0 * (2.0 * i as f64 / (n - 1) as f64 - 1.0);
        let lo = patch.c * x.abs().powf(1.0 + patch.gamma);
        for j in 0..n {
            let y = lo + (patch.tau0 - lo) * j as f64 / (n - 1) as f64;
            let q = [x, y, 0.0];
            if !in_paraboloid(&q, &axis, p, 1e-12 * patch.tau0) {
                return Err(FlowError::Certificate {
                    point: q,
                    excess: y - lo,
                });
            }
        }
    }
    Ok(patch)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum CheckParams {
    Ball { r0: f64 },
    Cone { rho: f64, theta: f64 },
    Paraboloid { delta: f64, c: f64, reach: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PointRecord {
    pub node: usize,
    pub point: Point,
    pub axis: Point,
    pub pass: bool,
    /// Signed slack in cells (nonnegative on pass).
    pub margin_cells: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RegularityReport {
    pub params: CheckParams,
    pub records: Vec<PointRecord>,
    pub pass_fraction: f64,
}

impl RegularityReport {
    fn new(params: CheckParams, records: Vec<PointRecord>) -> Self {
        let pass = records.iter().filter(|r| r.pass).count();
        let pass_fraction = if records.is_empty() {
            1.0
        } else {
            pass as f64 / records.len() as f64
        };
        Self {
            params,
            records,
            pass_fraction,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &PointRecord> {
        self.records.iter().filter(|r| !r.pass)
    }
}

/// Boundary nodes of the mask, subsampled to [`MAX_BOUNDARY_SAMPLES`]
/// with a fixed seed when there are more; always in node order.
pub fn boundary_samples(mask: &RegionMask, seed: u64) -> Vec<usize> {
    let all = mask.boundary_nodes();
    if all.len() <= MAX_BOUNDARY_SAMPLES {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick: Vec<usize> = index::sample(&mut rng, all.len(), MAX_BOUNDARY_SAMPLES)
        .into_iter()
        .map(|k| all[k])
        .collect();
    pick.sort_unstable();
    pick
}

/// Interior ball test by morphological opening: a boundary node passes if it
/// lies within one cell layer (1.5 cells) of the opening of the mask by a
/// ball of radius `r0`.
pub fn check_interior_ball(mask: &RegionMask, r0: f64) -> Result<RegularityReport> {
    let g = &mask.grid;
    let h = g.spacing();
    if r0 < 2.0 * h {
        return Err(FlowError::InvalidArgument(format!(
            "ball radius {r0} below 2h = {}",
            2.0 * h
        )));
    }
    let opened = edt::opening(mask, r0);
    let d2 = edt::squared_distance_cells(g, &opened.inside);
    let tol = 1.5;
    let records = boundary_samples(mask, DEFAULT_SAMPLE_SEED)
        .into_iter()
        .map(|i| {
            let d = d2[i].sqrt();
            PointRecord {
                node: i,
                point: g.point(i),
                axis: [0.0; 3],
                pass: d <= tol,
                margin_cells: tol - d.min(1e6),
            }
        })
        .collect();
    Ok(RegularityReport::new(CheckParams::Ball { r0 }, records))
}

/// Shared search machinery for cone and paraboloid checks.
struct ShapeSearch<'a> {
    grid: &'a GridSpec,
    sdf: ScalarField,
    grad: crate::grid::VectorField,
    net: Vec<Point>,
    net_spacing: f64,
}

impl<'a> ShapeSearch<'a> {
    fn new(mask: &'a RegionMask, axes: usize) -> Self {
        let sdf = edt::signed_distance(mask);
        let grad = central_gradient(&sdf);
        let dim = mask.grid.dim();
        let net = direction_net(dim, axes);
        let net_spacing = if dim == 2 {
            2.0 * std::f64::consts::PI / axes as f64
        } else {
            (4.0 * std::f64::consts::PI / axes as f64).sqrt()
        };
        Self {
            grid: &mask.grid,
            sdf,
            grad,
            net,
            net_spacing,
        }
    }

    /// Minimum of `S/h + 1/2` over the shape lattice: the half-cell
    /// containment slack in cells.
    fn margin(&self, x: &Point, rel: &[Point]) -> f64 {
        let h = self.grid.spacing();
        let mut m = f64::INFINITY;
        for q in rel {
            let p = [x[0] + q[0], x[1] + q[1], x[2] + q[2]];
            let s = self.sdf.sample(&p).unwrap_or(f64::NEG_INFINITY);
            m = m.min(s / h + 0.5);
            if m == f64::NEG_INFINITY {
                break;
            }
        }
        m
    }

    fn refine(&self, best: &Point) -> Vec<Point> {
        let dim = self.grid.dim();
        let half = 0.5 * self.net_spacing;
        let steps = (half / REFINE_STEP).ceil() as i32;
        let mut out = Vec::new();
        if dim == 2 {
            let a0 = best[1].atan2(best[0]);
            for k in -steps..=steps {
                let a = a0 + k as f64 * REFINE_STEP;
                out.push([a.cos(), a.sin(), 0.0]);
            }
        } else {
            let f = frame(best, 3);
            for i in -steps..=steps {
                for j in -steps..=steps {
                    let (u, v) = (i as f64 * REFINE_STEP, j as f64 * REFINE_STEP);
                    if u * u + v * v > half * half + 1e-12 {
                        continue;
                    }
                    let d = [
                        best[0] + u * f[0][0] + v * f[1][0],
                        best[1] + u * f[0][1] + v * f[1][1],
                        best[2] + u * f[0][2] + v * f[1][2],
                    ];
                    let l = norm(&d);
                    out.push([d[0] / l, d[1] / l, d[2] / l]);
                }
            }
        }
        out
    }

    /// Search for an axis whose shape fits at `x`. Returns the first passing
    /// axis, or the best one found.
    fn search(&self, node: usize, lattice: &(dyn Fn(&Point) -> Vec<Point> + Sync)) -> PointRecord {
        let x = self.grid.point(node);
        let mut best = ([0.0; 3], f64::NEG_INFINITY);
        let try_axis = |nu: Point, best: &mut (Point, f64)| -> bool {
            let m = self.margin(&x, &lattice(&nu));
            if m > best.1 {
                *best = (nu, m);
            }
            m >= 0.0
        };
        let g = self.grad.sample(&x).unwrap_or([0.0; 3]);
        let l = norm(&g);
        let mut done = false;
        if l > 0.0 {
            done = try_axis([g[0] / l, g[1] / l, g[2] / l], &mut best);
        }
        if !done {
            for nu in &self.net {
                if try_axis(*nu, &mut best) {
                    done = true;
                    break;
                }
            }
        }
        if !done && best.1 > f64::NEG_INFINITY {
            for nu in self.refine(&best.0) {
                if try_axis(nu, &mut best) {
                    break;
                }
            }
        }
        PointRecord {
            node,
            point: x,
            axis: best.0,
            pass: best.1 >= 0.0,
            margin_cells: best.1.max(-1e6),
        }
    }
}

fn min_axes(dim: usize) -> usize {
    if dim == 2 {
        32
    } else {
        128
    }
}

/// Interior cone certificate at every sampled boundary node.
pub fn check_interior_cone(mask: &RegionMask, params: &ConeParams, axes: usize) -> Result<RegularityReport> {
    let g = &mask.grid;
    if params.rho < 2.0 * g.spacing() {
        return Err(FlowError::InvalidArgument(format!(
            "cone aperture {} below 2h = {}",
            params.rho,
            2.0 * g.spacing()
        )));
    }
    if axes < min_axes(g.dim()) {
        return Err(FlowError::InvalidArgument(format!(
            "need at least {} axes in {}D",
            min_axes(g.dim()),
            g.dim()
        )));
    }
    let search = ShapeSearch::new(mask, axes);
    let dim = g.dim();
    let p = *params;
    let lattice = move |nu: &Point| cone_lattice(nu, &p, dim);
    let samples = boundary_samples(mask, DEFAULT_SAMPLE_SEED);
    let records = par::map(samples.len(), |k| search.search(samples[k], &lattice));
    Ok(RegularityReport::new(
        CheckParams::Cone {
            rho: params.rho,
            theta: params.theta,
        },
        records,
    ))
}

/// Interior paraboloid certificate at every sampled boundary node.
pub fn check_interior_paraboloid(
    mask: &RegionMask,
    params: &ParaboloidParams,
    axes: usize,
) -> Result<RegularityReport> {
    let g = &mask.grid;
    if axes < min_axes(g.dim()) {
        return Err(FlowError::InvalidArgument(format!(
            "need at least {} axes in {}D",
            min_axes(g.dim()),
            g.dim()
        )));
    }
    let search = ShapeSearch::new(mask, axes);
    let dim = g.dim();
    let p = *params;
    let lattice = move |nu: &Point| paraboloid_lattice(nu, &p, dim);
    let samples = boundary_samples(mask, DEFAULT_SAMPLE_SEED);
    let records = par::map(samples.len(), |k| search.search(samples[k], &lattice));
    Ok(RegularityReport::new(
        CheckParams::Paraboloid {
            delta: params.delta,
            c: params.c,
            reach: params.reach(),
        },
        records,
    ))
}

/// Ladder of paraboloid constants `c_min · ratio^k`, `k = 0..count`.
pub fn paraboloid_ladder(c_min: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| c_min * ratio.powi(k as i32)).collect()
}

/// Outcome of calibrating the paraboloid constant on a family of fronts.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Calibration {
    pub delta: f64,
    pub c: f64,
    pub pass_fractions: Vec<f64>,
}

/// Smallest ladder constant for which every mask passes the paraboloid
/// check at `min_fraction`. Larger constants give smaller paraboloids, so
/// the ladder is bisected and the result re-verified.
pub fn calibrate_paraboloid(
    masks: &[RegionMask],
    delta: f64,
    ladder: &[f64],
    axes: usize,
    min_fraction: f64,
) -> Result<Option<Calibration>> {
    let eval = |c: f64| -> Result<Option<Vec<f64>>> {
        let p = ParaboloidParams::new(delta, c)?;
        let mut fr = Vec::new();
        for m in masks {
            let r = check_interior_paraboloid(m, &p, axes)?;
            if r.pass_fraction < min_fraction {
                return Ok(None);
            }
            fr.push(r.pass_fraction);
        }
        Ok(Some(fr))
    };
    if ladder.is_empty() {
        return Ok(None);
    }
    let Some(mut best) = eval(ladder[ladder.len() - 1])? else {
        return Ok(None);
    };
    let (mut lo, mut hi) = (0usize, ladder.len() - 1);
    if let Some(fr) = eval(ladder[0])? {
        return Ok(Some(Calibration {
            delta,
            c: ladder[0],
            pass_fractions: fr,
        }));
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        match eval(ladder[mid])? {
            Some(fr) => {
                hi = mid;
                best = fr;
            }
            None => lo = mid,
        }
    }
    Ok(Some(Calibration {
        delta,
        c: ladder[hi],
        pass_fractions: best,
    }))
}

/// One Lipschitz graph of the cover, in the frame of direction `normal`:
/// heights `x·ν` over base coordinates `x·e_i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphPatchTable {
    pub direction: usize,
    pub slab: i64,
    pub normal: Point,
    /// Base frame vectors (rotation rows besides the normal).
    pub base: Vec<Point>,
    /// Height offset of the slab bottom along the normal.
    pub translation: f64,
    pub lipschitz: f64,
    pub cap: f64,
    pub table_origin: Vec<f64>,
    pub table_spacing: f64,
    pub table_shape: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(skip)]
    vertices: Vec<(Vec<f64>, f64)>,
}

impl GraphPatchTable {
    /// Exact `Ψ(y') = min(cap, min_x √15 |y' - x'| + x_N)`.
    pub fn psi(&self, y: &[f64]) -> f64 {
        let mut v = self.cap;
        for (xb, xn) in &self.vertices {
            let d: f64 = xb.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            v = v.min(GRAPH_SLOPE * d + xn);
        }
        v
    }

    pub fn coords(&self, p: &Point) -> (Vec<f64>, f64) {
        (
            self.base.iter().map(|e| grid::dot(e, p)).collect(),
            grid::dot(&self.normal, p),
        )
    }

    fn to_space(&self, base: &[f64], height: f64) -> Point {
        let mut p = [
            height * self.normal[0],
            height * self.normal[1],
            height * self.normal[2],
        ];
        for (e, b) in self.base.iter().zip(base) {
            for a in 0..3 {
                p[a] += b * e[a];
            }
        }
        p
    }

    /// The tabulated graph as CSV rows `y1[,y2],psi`.
    pub fn to_csv(&self) -> String {
        let dim = self.table_shape.len();
        let mut s = String::new();
        s.push_str(if dim == 1 { "y1,psi\n" } else { "y1,y2,psi\n" });
        for (k, v) in self.values.iter().enumerate() {
            let y = self.table_point(k);
            let cols: Vec<String> = y.iter().map(|c| format!("{c:.12e}")).collect();
            s.push_str(&format!("{},{v:.12e}\n", cols.join(",")));
        }
        s
    }

    fn table_point(&self, k: usize) -> Vec<f64> {
        if self.table_shape.len() == 1 {
            vec![self.table_origin[0] + k as f64 * self.table_spacing]
        } else {
            let n1 = self.table_shape[1];
            vec![
                self.table_origin[0] + (k / n1) as f64 * self.table_spacing,
                self.table_origin[1] + (k % n1) as f64 * self.table_spacing,
            ]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphCover {
    pub rho: f64,
    pub r: f64,
    pub net_size: usize,
    /// `C(N)` in `count <= ceil(C(N) r / ρ)`; here `4 p(N)` with `p(N)` the
    /// size of the 1/4-net.
    pub bound_constant: f64,
    pub count: usize,
    pub count_bound: usize,
    pub max_point_to_graph: f64,
    /// Worst exterior excursion (in length units) of non-cap graph nodes.
    pub max_exterior_excursion: f64,
    pub cone_report_pass_fraction: f64,
    pub patches: Vec<GraphPatchTable>,
}

/// Covers `∂K(t)` by `√15`-Lipschitz graphs. Each boundary sample with an
/// interior cone of parameters `(ρ/2, 2ρ)` (half-angle asin 1/4) about
/// some 1/4-net direction `ν_j` becomes a vertex of the graph for direction
/// `j` and slab `k = floor(x·ν_j / ρ)`; the graph is the lower envelope of
/// the vertices' cones, capped half a slab above the slab.
pub fn build_graph_cover(arrival: &ArrivalField, t: f64, rho: f64, r: f64) -> Result<GraphCover> {
    let mask = arrival.reachable_set(t)?;
    let g = &mask.grid;
    let h = g.spacing();
    let dim = g.dim();
    if !(rho > 0.0 && r > 0.0) {
        return Err(FlowError::InvalidArgument("rho and r must be positive".into()));
    }
    let wide = ConeParams::new(rho, 2.0 * rho)?;
    let cone_report = check_interior_cone(&mask, &wide, min_axes(dim))?;
    let net = quarter_net(dim);
    let narrow = ConeParams::new(0.5 * rho, 2.0 * rho)?;
    let search = ShapeSearch::new(&mask, min_axes(dim));
    let samples = boundary_samples(&mask, DEFAULT_SAMPLE_SEED);

    // Best-margin net direction per sample.
    let assign: Vec<Option<usize>> = par::map(samples.len(), |k| {
        let x = g.point(samples[k]);
        let mut best = (None, f64::NEG_INFINITY);
        for (j, nu) in net.iter().enumerate() {
            let m = search.margin(&x, &cone_lattice(nu, &narrow, dim));
            if m > best.1 {
                best = (Some(j), m);
            }
        }
        if best.1 >= 0.0 {
            best.0
        } else {
            None
        }
    });

    let mut groups: std::collections::BTreeMap<(usize, i64), Vec<Point>> = Default::default();
    for (k, a) in assign.iter().enumerate() {
        if let Some(j) = a {
            let x = g.point(samples[k]);
            let slab = (grid::dot(&net[*j], &x) / rho).floor() as i64;
            groups.entry((*j, slab)).or_default().push(x);
        }
    }

    let mut patches = Vec::with_capacity(groups.len());
    for ((j, slab), pts) in &groups {
        let normal = net[*j];
        let base = frame(&normal, dim);
        let translation = *slab as f64 * rho;
        let cap = translation + 1.5 * rho;
        let vertices: Vec<(Vec<f64>, f64)> = pts
            .iter()
            .map(|p| (base.iter().map(|e| grid::dot(e, p)).collect(), grid::dot(&normal, p)))
            .collect();
        let nb = dim - 1;
        let mut lo = vec![f64::INFINITY; nb];
        let mut hi = vec![f64::NEG_INFINITY; nb];
        for (b, _) in &vertices {
            for a in 0..nb {
                lo[a] = lo[a].min(b[a] - rho).max(-r);
                hi[a] = hi[a].max(b[a] + rho).min(r);
            }
        }
        let shape: Vec<usize> = (0..nb)
            .map(|a| ((hi[a] - lo[a]) / h).floor() as usize + 1)
            .collect();
        let mut patch = GraphPatchTable {
            direction: *j,
            slab: *slab,
            normal,
            base,
            translation,
            lipschitz: GRAPH_SLOPE,
            cap,
            table_origin: lo,
            table_spacing: h,
            table_shape: shape.clone(),
            values: Vec::new(),
            vertices,
        };
        let total: usize = shape.iter().product();
        patch.values = (0..total).map(|k| patch.psi(&patch.table_point(k))).collect();
        patches.push(patch);
    }

    // Distance of every sample to the nearest graph (vertical, conservative).
    let sdf = &search.sdf;
    let mut max_point_to_graph = 0.0f64;
    for &i in &samples {
        let x = g.point(i);
        let mut best = f64::INFINITY;
        for p in &patches {
            let (b, n) = p.coords(&x);
            if b.iter().zip(&p.table_origin).any(|(v, o)| *v < o - 1e-12) {
                continue;
            }
            let psi = p.psi(&b);
            if psi < p.cap {
                best = best.min((n - psi).abs());
            }
        }
        if best > h {
            return Err(FlowError::NotCovered(x));
        }
        max_point_to_graph = max_point_to_graph.max(best);
    }

    // Soundness: non-cap graph nodes lie inside K(t) up to one cell.
    let mut max_exterior_excursion = 0.0f64;
    for p in &patches {
        for (k, &v) in p.values.iter().enumerate() {
            if v >= p.cap {
                continue;
            }
            let q = p.to_space(&p.table_point(k), v);
            if let Some(s) = sdf.sample(&q) {
                max_exterior_excursion = max_exterior_excursion.max(-s);
            }
        }
    }

    let bound_constant = 4.0 * net.len() as f64;
    Ok(GraphCover {
        rho,
        r,
        net_size: net.len(),
        bound_constant,
        count: patches.len(),
        count_bound: (bound_constant * r / rho).ceil() as usize,
        max_point_to_graph,
        max_exterior_excursion,
        cone_report_pass_fraction: cone_report.pass_fraction,
        patches,
    })
}

/// Perimeter estimates of `Γ(t) = {z = t}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PerimeterEstimate {
    pub time: f64,
    pub coarea: f64,
    pub contour: f64,
}

/// Coarea band average `∫_{t-Δ<z<t+Δ} |Dz| / (2Δ)` with `Δ = 2hB`; for
/// `t < Δ` the bands `(0, Δ)` and `(Δ, 2Δ)` are extrapolated linearly to
/// `t`. The contour estimate is the length (2D, marching squares) or area
/// (3D, marching tetrahedra) of the isoline/isosurface `{z = t}`.
pub fn perimeter(arrival: &ArrivalField, t: f64) -> Result<PerimeterEstimate> {
    let g = arrival.grid();
    let (_, b) = arrival.bounds;
    let delta = 2.0 * g.spacing() * b;
    if t < 0.0 || t + delta > arrival.extent {
        return Err(FlowError::InvalidArgument(format!(
            "perimeter time {t} outside the resolved range"
        )));
    }
    let w = arrival.gradient_norm().values;
    let coarea = if t >= delta {
        coarea_integral(&arrival.z, &w, t - delta, t + delta)? / (2.0 * delta)
    } else {
        let e1 = coarea_integral(&arrival.z, &w, 0.0, delta)? / delta;
        let e2 = coarea_integral(&arrival.z, &w, delta, 2.0 * delta)? / delta;
        e1 + (t - 0.5 * delta) * (e2 - e1) / delta
    };
    let contour = contour_measure(&arrival.extended_z(), t);
    Ok(PerimeterEstimate {
        time: t,
        coarea,
        contour,
    })
}

/// Length/area of the level set `{f = level}` of a nodal field.
pub fn contour_measure(f: &ScalarField, level: f64) -> f64 {
    let g = &f.grid;
    let val = |i: usize| {
        let v = f.values[i];
        if v.is_finite() {
            v - level
        } else {
            1e30
        }
    };
    if g.dim() == 2 {
        let s = g.shape();
        let rows: Vec<f64> = par::map(s[0] - 1, |i| {
            let mut acc = 0.0;
            for j in 0..s[1] - 1 {
                let idx = |a: usize, b: usize| g.index([a, b, 0]);
                let c = [
                    val(idx(i, j)),
                    val(idx(i + 1, j)),
                    val(idx(i + 1, j + 1)),
                    val(idx(i, j + 1)),
                ];
                acc += square_length(&c);
            }
            acc
        });
        rows.iter().sum::<f64>() * g.spacing()
    } else {
        let s = g.shape();
        let slabs: Vec<f64> = par::map(s[0] - 1, |i| {
            let mut acc = 0.0;
            for j in 0..s[1] - 1 {
                for k in 0..s[2] - 1 {
                    let mut c = [0.0; 8];
                    for (m, slot) in c.iter_mut().enumerate() {
                        *slot = val(g.index([i + (m & 1), j + (m >> 1 & 1), k + (m >> 2 & 1)]));
                    }
                    acc += cube_area(&c);
                }
            }
            acc
        });
        slabs.iter().sum::<f64>() * g.spacing() * g.spacing()
    }
}

/// Isoline length in one unit cell; corners counter-clockwise from (0,0).
/// Saddles are resolved by the average of the corner values.
fn square_length(c: &[f64; 4]) -> f64 {
    let pos = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let inside: Vec<bool> = c.iter().map(|&v| v <= 0.0).collect();
    let mut cross: [Option<[f64; 2]>; 4] = [None; 4];
    for e in 0..4 {
        let (a, b) = (e, (e + 1) % 4);
        if inside[a] != inside[b] {
            let w = c[a] / (c[a] - c[b]);
            cross[e] = Some([
                pos[a][0] + w * (pos[b][0] - pos[a][0]),
                pos[a][1] + w * (pos[b][1] - pos[a][1]),
            ]);
        }
    }
    let seg = |e1: usize, e2: usize| -> f64 {
        match (cross[e1], cross[e2]) {
            (Some(p), Some(q)) => ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt(),
            _ => 0.0,
        }
    };
    let n = cross.iter().filter(|x| x.is_some()).count();
    match n {
        2 => {
            let es: Vec<usize> = (0..4).filter(|&e| cross[e].is_some()).collect();
            seg(es[0], es[1])
        }
        4 => {
            let centre_inside = c.iter().sum::<f64>() / 4.0 <= 0.0;
            // Edge e joins corners e and e+1; cutting off corner k pairs
            // edges k-1 and k.
            if centre_inside == inside[0] {
                seg(0, 1) + seg(2, 3)
            } else {
                seg(3, 0) + seg(1, 2)
            }
        }
        _ => 0.0,
    }
}

/// Isosurface area in one unit cube, split into six tetrahedra around the
/// main diagonal. Corner `m` sits at `(m&1, m>>1&1, m>>2&1)`.
fn cube_area(c: &[f64; 8]) -> f64 {
    const TETS: [[usize; 4]; 6] = [
        [0, 1, 3, 7],
        [0, 3, 2, 7],
        [0, 2, 6, 7],
        [0, 6, 4, 7],
        [0, 4, 5, 7],
        [0, 5, 1, 7],
    ];
    let corner = |m: usize| [(m & 1) as f64, (m >> 1 & 1) as f64, (m >> 2 & 1) as f64];
    let mut area = 0.0;
    for tet in TETS.iter() {
        let ins: Vec<usize> = tet.iter().copied().filter(|&m| c[m] <= 0.0).collect();
        let outs: Vec<usize> = tet.iter().copied().filter(|&m| c[m] > 0.0).collect();
        let cut = |a: usize, b: usize| {
            let w = c[a] / (c[a] - c[b]);
            let (p, q) = (corner(a), corner(b));
            [
                p[0] + w * (q[0] - p[0]),
                p[1] + w * (q[1] - p[1]),
                p[2] + w * (q[2] - p[2]),
            ]
        };
        let tri = |p: Point, q: Point, r: Point| 0.5 * norm(&cross(&sub(&q, &p), &sub(&r, &p)));
        match (ins.len(), outs.len()) {
            (1, 3) => {
                let a = ins[0];
                area += tri(cut(a, outs[0]), cut(a, outs[1]), cut(a, outs[2]));
            }
            (3, 1) => {
                let b = outs[0];
                area += tri(cut(ins[0], b), cut(ins[1], b), cut(ins[2], b));
            }
            (2, 2) => {
                let p = cut(ins[0], outs[0]);
                let q = cut(ins[0], outs[1]);
                let r = cut(ins[1], outs[1]);
                let s = cut(ins[1], outs[0]);
                area += tri(p, q, r) + tri(p, r, s);
            }
            _ => {}
        }
    }
    area
}

/// Front history with both perimeter estimators at every slice time.
pub fn front_history(arrival: &ArrivalField, slice_times: &[f64]) -> Result<FrontHistory> {
    if slice_times.windows(2).any(|w| w[1] <= w[0])
        || slice_times.iter().any(|&t| t < 0.0 || t > arrival.horizon)
    {
        return Err(FlowError::InvalidArgument(
            "slice times must increase inside [0, T]".into(),
        ));
    }
    let perimeters = slice_times
        .iter()
        .map(|&t| perimeter(arrival, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrontHistory {
        arrival: arrival.clone(),
        slice_times: slice_times.to_vec(),
        perimeters,
    })
}

/// Trapezoid rule for `∫ perimeter dt` over the history's slices (coarea
/// estimator).
pub fn integrated_perimeter(history: &FrontHistory) -> f64 {
    history
        .perimeters
        .windows(2)
        .map(|w| 0.5 * (w[0].coarea + w[1].coarea) * (w[1].time - w[0].time))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NormalConvergence {
    pub spacings: Vec<f64>,
    /// Band-averaged `|Dz|` per level.
    pub mean_gradient: Vec<f64>,
    /// Sup over probes of `|n_{k+1} - n_k|` between consecutive levels.
    pub direction_change: Vec<f64>,
    /// `|mean_{k+1} - mean_k|` between consecutive levels.
    pub gradient_change: Vec<f64>,
    pub decreasing: bool,
}

/// Refinement diagnostic for unit normals `Dz/|Dz|` and the band average
/// of `|Dz|`. Probes are the coarsest-grid nodes with `T/4 < z < 3T/4`
/// farther than four coarse cells from `K0`.
pub fn normal_convergence_diagnostic(arrivals: &[ArrivalField]) -> Result<NormalConvergence> {
    if arrivals.len() < 3 {
        return Err(FlowError::InvalidArgument(
            "need at least three refinement levels".into(),
        ));
    }
    let coarse = &arrivals[0];
    let t = coarse.horizon;
    let hc = coarse.grid().spacing();
    let sdf0 = edt::signed_distance(&coarse.source);
    let probes: Vec<Point> = (0..coarse.grid().len())
        .filter(|&i| {
            let z = coarse.z.values[i];
            z > 0.25 * t && z < 0.75 * t && -sdf0.values[i] > 4.0 * hc
        })
        .map(|i| coarse.grid().point(i))
        .collect();
    let mut normals = Vec::new();
    let mut means = Vec::new();
    // Fixed-scale difference quotients (two coarse cells) so every level
    // estimates the same quantity.
    let r = 2.0 * hc;
    let dim = coarse.grid().dim();
    for a in arrivals {
        let n: Vec<Point> = probes
            .iter()
            .map(|p| {
                let mut v = [0.0; 3];
                for (ax, slot) in v.iter_mut().enumerate().take(dim) {
                    let mut lo = *p;
                    let mut hi = *p;
                    lo[ax] -= r;
                    hi[ax] += r;
                    let (zl, zh) = (a.z.sample(&lo), a.z.sample(&hi));
                    if let (Some(zl), Some(zh)) = (zl, zh) {
                        *slot = (zh - zl) / (2.0 * r);
                    }
                }
                let l = norm(&v);
                if l.is_finite() && l > 0.0 {
                    [v[0] / l, v[1] / l, v[2] / l]
                } else {
                    [0.0; 3]
                }
            })
            .collect();
        normals.push(n);
        let gn = godunov_gradient_norm(&a.z);
        let (mut s, mut c) = (0.0, 0usize);
        for (i, &z) in a.z.values.iter().enumerate() {
            if z > 0.25 * t && z < 0.75 * t {
                s += gn.values[i];
                c += 1;
            }
        }
        means.push(if c > 0 { s / c as f64 } else { 0.0 });
    }
    let mut direction_change = Vec::new();
    let mut gradient_change = Vec::new();
    for k in 0..arrivals.len() - 1 {
        let d = normals[k]
            .iter()
            .zip(&normals[k + 1])
            .map(|(a, b)| norm(&sub(a, b)))
            .fold(0.0, f64::max);
        direction_change.push(d);
        gradient_change.push((means[k + 1] - means[k]).abs());
    }
    // Changes at rounding level count as converged.
    let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0] || w[1] < 1e-12);
    let decreasing = dec(&direction_change) && dec(&gradient_change);
    Ok(NormalConvergence {
        spacings: arrivals.iter().map(|a| a.grid().spacing()).collect(),
        mean_gradient: means,
        direction_change,
        gradient_change,
        decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eikonal::{solve_arrival, ConstantSpeed};
    use std::f64::consts::PI;

    fn g2(n: usize, hw: f64) -> GridSpec {
        GridSpec::cell_centered(2, n, hw).unwrap()
    }

    #[test]
    fn patch_constants() {
        let p = paraboloid_graph_patch(&ParaboloidParams::new(0.25, 1.0).unwrap()).unwrap();
        assert!((p.gamma - 1.0 / 9.0).abs() < 1e-15);
        assert!((p.c - 2.0 * 2f64.powf(4.0 / 9.0)).abs() < 1e-12);
        assert!((p.tau0 - 0.0625).abs() < 1e-15);
        assert!((p.r0 - (3f64.sqrt() - 1.0).powi(9) * 0.0625).abs() < 1e-15);
        let q = paraboloid_graph_patch(&ParaboloidParams::new(0.5, 1.0).unwrap()).unwrap();
        assert!((q.tau0 - 0.25).abs() < 1e-15 && (q.gamma - 0.2).abs() < 1e-15);
    }

    #[test]
    fn quarter_net_sizes() {
        assert_eq!(quarter_net(2).len(), 13);
        assert!(net_covering_radius(&quarter_net(3), 3) <= 0.25);
    }

    #[test]
    fn paraboloid_membership_basics() {
        let p = ParaboloidParams::new(0.25, 1.0).unwrap();
        let nu = [1.0, 0.0, 0.0];
        assert!(in_paraboloid(&[0.3, 0.0, 0.0], &nu, &p, 0.0));
        assert!(!in_paraboloid(&[-0.01, 0.0, 0.0], &nu, &p, 0.0));
        assert!(!in_paraboloid(&[0.3, 0.3, 0.0], &nu, &p, 0.0));
        assert!(!in_paraboloid(&[1.01, 0.0, 0.0], &nu, &p, 0.0));
    }

    #[test]
    fn ball_checks() {
        let g = g2(128, 2.0);
        let disk = RegionMask::from_fn(&g, |p| norm(p) <= 0.5);
        assert_eq!(check_interior_ball(&disk, 0.25).unwrap().pass_fraction, 1.0);
        assert_eq!(check_interior_ball(&disk, 0.6).unwrap().pass_fraction, 0.0);
        let sq = RegionMask::from_fn(&g, |p| p[0].abs() <= 0.8 && p[1].abs() <= 0.8);
        let r = check_interior_ball(&sq, 0.25).unwrap();
        assert!(r.pass_fraction < 1.0);
        for f in r.failures() {
            assert!(f.point[0].abs() > 0.6 && f.point[1].abs() > 0.6, "{:?}", f.point);
        }
        let corner = g.nearest(&[0.79, 0.79, 0.0]).unwrap();
        assert!(r.records.iter().any(|x| x.node == corner && !x.pass));
    }

    #[test]
    fn cone_checks() {
        let g = g2(256, 2.0);
        let h = g.spacing();
        let p = ConeParams::new(1.0 / 32.0, 1.0 / 16.0).unwrap();
        assert!(p.rho >= 2.0 * h);
        let disk = RegionMask::from_fn(&g, |x| norm(x) <= 1.2);
        assert_eq!(check_interior_cone(&disk, &p, 32).unwrap().pass_fraction, 1.0);
        let two = RegionMask::from_fn(&g, |x| {
            norm(&[x[0] - 0.8, x[1], 0.0]) <= 0.5 || norm(&[x[0] + 0.8, x[1], 0.0]) <= 0.5
        });
        assert_eq!(check_interior_cone(&two, &p, 32).unwrap().pass_fraction, 1.0);
        // A thin wedge (half-angle 10°, narrower than the cone's 30°) ending
        // in an outward tip at (0.5, 0).
        let tan = 10f64.to_radians().tan();
        let wedge = RegionMask::from_fn(&g, |x| {
            (norm(x) <= 1.2 && x[0] < 0.0)
                || (x[0] >= 0.0 && x[0] <= 0.5 && x[1].abs() <= (0.5 - x[0]) * tan)
        });
        let rep = check_interior_cone(&wedge, &p, 32).unwrap();
        let tip: Vec<_> = rep.records.iter().filter(|r| r.point[0] > 0.42).collect();
        assert!(!tip.is_empty());
        assert!(tip.iter().all(|r| !r.pass));
        assert!(check_interior_cone(&disk, &ConeParams::new(h, 4.0 * h).unwrap(), 32).is_err());
        assert!(check_interior_cone(&disk, &p, 16).is_err());
    }

    #[test]
    fn paraboloid_checks() {
        let g = g2(256, 2.0);
        let disk = RegionMask::from_fn(&g, |x| norm(x) <= 1.2);
        let p = ParaboloidParams::new(0.25, 1.0).unwrap();
        assert_eq!(check_interior_paraboloid(&disk, &p, 32).unwrap().pass_fraction, 1.0);
        let half = RegionMask::from_fn(&g, |x| x[0] <= 0.3 && x[0] >= -1.9 + 0.2);
        let rep = check_interior_paraboloid(&half, &p, 32).unwrap();
        // The flat face x = 0.3 away from the box corners passes.
        let face: Vec<_> = rep
            .records
            .iter()
            .filter(|r| r.point[0] > 0.2 && r.point[1].abs() < 0.5)
            .collect();
        assert!(!face.is_empty() && face.iter().all(|r| r.pass));
    }

    #[test]
    fn calibration_finds_smallest_passing_constant() {
        let g = g2(128, 2.0);
        let disk = RegionMask::from_fn(&g, |x| norm(x) <= 0.5);
        let ladder = paraboloid_ladder(0.5, 2f64.powf(0.25), 16);
        let cal = calibrate_paraboloid(&[disk.clone()], 0.25, &ladder, 32, 0.98)
            .unwrap()
            .unwrap();
        let k = ladder.iter().position(|&c| c == cal.c).unwrap();
        assert!(k > 0);
        let below = ParaboloidParams::new(0.25, ladder[k - 1]).unwrap();
        assert!(check_interior_paraboloid(&disk, &below, 32).unwrap().pass_fraction < 0.98);
    }

    #[test]
    fn disk_perimeters() {
        let g = g2(256, 2.0);
        let k0 = RegionMask::from_fn(&g, |x| norm(x) <= 0.5);
        let a = solve_arrival(&k0, &ConstantSpeed(1.0), 1.0).unwrap();
        let p1 = perimeter(&a, 1.0).unwrap();
        let exact = 3.0 * PI;
        assert!((p1.coarea - exact).abs() / exact < 0.02, "{p1:?}");
        assert!((p1.contour - exact).abs() / exact < 0.02, "{p1:?}");
        // A rasterised K0 carries no sub-cell position, so its boundary reads
        // like a chamfered staircase (about 6% long) until the front smooths.
        let p0 = perimeter(&a, 0.0).unwrap();
        assert!((p0.coarea - PI).abs() / PI < 0.08, "{p0:?}");
        assert!((p0.contour - PI).abs() / PI < 0.08, "{p0:?}");
    }

    #[test]
    fn marching_cells_on_planes() {
        // Level set x = 0.3 in a unit square: length 1; in a unit cube: area 1.
        let sq = [-0.3, 0.7, 0.7, -0.3];
        assert!((square_length(&sq) - 1.0).abs() < 1e-12);
        let mut cube = [0.0; 8];
        for (m, v) in cube.iter_mut().enumerate() {
            *v = (m & 1) as f64 - 0.3;
        }
        assert!((cube_area(&cube) - 1.0).abs() < 1e-12);
        let mut diag = [0.0; 8];
        for (m, v) in diag.iter_mut().enumerate() {
            *v = (m & 1) as f64 + (m >> 1 & 1) as f64 - 1.0;
        }
        assert!((cube_area(&diag) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sphere_area() {
        let g = GridSpec::cell_centered(3, 64, 1.0).unwrap();
        let f = ScalarField::from_fn(&g, |p| norm(p));
        let a = contour_measure(&f, 0.6);
        let exact = 4.0 * PI * 0.36;
        assert!((a - exact).abs() / exact < 0.02, "{a}");
    }

    #[test]
    fn graph_cover_disk_and_errors() {
        let g = g2(256, 2.0);
        let h = g.spacing();
        let k0 = RegionMask::from_fn(&g, |x| norm(x) <= 0.5);
        let a = solve_arrival(&k0, &ConstantSpeed(1.0), 0.7).unwrap();
        let cover = build_graph_cover(&a, 0.7, 1.0 / 32.0, 2.0).unwrap();
        assert_eq!(cover.net_size, 13);
        assert!(cover.count <= cover.count_bound);
        assert!(cover.max_point_to_graph <= h);
        assert!(cover.max_exterior_excursion <= h, "{}", cover.max_exterior_excursion);
        assert!(matches!(
            build_graph_cover(&a, 0.7, 3.0, 2.0),
            Err(FlowError::NotCovered(_))
        ));
    }

    #[test]
    fn normal_diagnostic_on_disk() {
        let levels: Vec<ArrivalField> = [32usize, 64, 128]
            .iter()
            .map(|&n| {
                let g = GridSpec::cell_centered(2, 4 * n, 2.0).unwrap();
                let k0 = RegionMask::from_fn(&g, |x| norm(x) <= 0.5);
                solve_arrival(&k0, &ConstantSpeed(1.0), 1.0).unwrap()
            })
            .collect();
        let d = normal_convergence_diagnostic(&levels).unwrap();
        assert!(d.decreasing, "{d:?}");
        assert!((d.mean_gradient[2] - 1.0).abs() < 0.01);
        let same = vec![levels[0].clone(), levels[0].clone(), levels[0].clone()];
        let z = normal_convergence_diagnostic(&same).unwrap();
        assert!(z.direction_change.iter().all(|&v| v == 0.0));
    }
}
