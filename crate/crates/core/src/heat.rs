//! Heat equation with a surface source carried by a moving front.
//!
//! `v_t - Δv + κ ḡ(v) H^{N-1}⌊Γ(t) = 0` is solved through its kernel
//! representation, the surface-time integral written in coarea volume form:
//!
//! `v(x, t) = (G(t) * v0)(x) - κ Σ_{0 < z(y) < t - c} ω(t - z(y)) G(x - y, t - z(y)) ḡ(v(y, z(y))) |Dz(y)| h^N`
//!
//! where `c` is the near-field cutoff and `ω` ramps linearly from 0 at
//! `τ = c` to 1 at `τ = 2c`, so the sum is continuous in the front position.
//! The sum is marched slice by slice: the accumulated potential is
//! propagated by the heat semigroup and each front node is stamped with the
//! increment of `ω` at every slice inside its ramp.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::convolve::{self, Boundary, Kernel1d};
use crate::eikonal::{ArrivalField, VelocityModel};
use crate::error::{FlowError, Result};
use crate::grid::{self, GridSpec, Point, ScalarField};
use crate::par;
use crate::temperature::{Moduli, TemperatureField};

/// Default seed of [`measure_moduli`].
pub const MODULI_SEED: u64 = 0x6d6f_6475;
/// Pair count of [`measure_moduli`].
pub const MODULI_PAIRS: usize = 100_000;
/// Corrector passes per slice are stopped once `ḡ` changes by less than this.
const CORRECTOR_TOL: f64 = 1e-14;
const MAX_CORRECTOR_PASSES: usize = 20;

/// `G(x, t) = (4 pi t)^{-N/2} exp(-|x|^2 / (4t))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeatKernelSpec {
    pub dim: usize,
}

impl HeatKernelSpec {
    pub fn new(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(FlowError::InvalidArgument(format!("dimension {dim} not in 1..=3")));
        }
        Ok(Self { dim })
    }

    #[inline]
    pub fn eval(&self, r2: f64, t: f64) -> f64 {
        (4.0 * PI * t).powf(-0.5 * self.dim as f64) * (-r2 / (4.0 * t)).exp()
    }

    /// Nodal quadrature of `G(. - center, t)` over `grid`.
    pub fn mass_on(&self, grid: &GridSpec, center: &Point, t: f64) -> f64 {
        let s: f64 = (0..grid.len())
            .map(|i| self.eval(grid::dist(&grid.point(i), center).powi(2), t))
            .sum();
        s * grid.cell_volume()
    }
}

/// `G(t) * v0`; the identity at `t = 0`.
pub fn heat_free(v0: &ScalarField, t: f64) -> Result<ScalarField> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(FlowError::InvalidArgument(format!("heat time {t} must be >= 0")));
    }
    let mut f = v0.clone();
    convolve::heat_convolve(&mut f, t, Boundary::Clamp);
    Ok(f)
}

/// Near-field ramp `ω(τ)`: 0 up to `τ = c`, 1 from `τ = 2c`.
pub fn cutoff_ramp(tau: f64, cutoff: f64) -> f64 {
    if cutoff <= 0.0 {
        return if tau > 0.0 { 1.0 } else { 0.0 };
    }
    ((tau - cutoff) / cutoff).clamp(0.0, 1.0)
}

/// Source nodes `0 < z < t - cutoff` with their coarea weights `|Dz| h^N`.
fn source_nodes(arrival: &ArrivalField, t: f64, cutoff: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let last = t - cutoff;
    if last > arrival.extent {
        return Err(FlowError::InvalidArgument(format!(
            "time {last} beyond the resolved arrival extent {}",
            arrival.extent
        )));
    }
    arrival.reachable_set(last.max(0.0))?.check_margin("front source support")?;
    let w = arrival.gradient_norm();
    let vol = arrival.grid().cell_volume();
    let nodes: Vec<usize> = (0..arrival.grid().len())
        .filter(|&i| {
            let z = arrival.z.values[i];
            z > 0.0 && z < t - cutoff
        })
        .collect();
    let weights = nodes.iter().map(|&i| w.values[i] * vol).collect();
    Ok((nodes, weights))
}

/// `Σ_{0 < z(y) < t - cutoff} ω G(x - y, t - z(y)) g(y) |Dz(y)| h^N` by direct
/// summation. `g_on_front` is indexed by node.
pub fn front_source_potential(
    arrival: &ArrivalField,
    g_on_front: &[f64],
    x: &Point,
    t: f64,
    cutoff: f64,
) -> Result<f64> {
    Ok(front_source_potentials(arrival, g_on_front, &[*x], t, cutoff)?[0])
}

/// [`front_source_potential`] at many targets, parallel over targets.
pub fn front_source_potentials(
    arrival: &ArrivalField,
    g_on_front: &[f64],
    targets: &[Point],
    t: f64,
    cutoff: f64,
) -> Result<Vec<f64>> {
    let g = arrival.grid();
    if g_on_front.len() != g.len() {
        return Err(FlowError::ShapeMismatch(format!(
            "{} front values for {} nodes",
            g_on_front.len(),
            g.len()
        )));
    }
    if !(t > 0.0 && cutoff >= 0.0) {
        return Err(FlowError::InvalidArgument(format!(
            "need t > 0 and cutoff >= 0, got t = {t}, cutoff = {cutoff}"
        )));
    }
    let kernel = HeatKernelSpec::new(g.dim())?;
    let (nodes, weights) = source_nodes(arrival, t, cutoff)?;
    let src: Vec<(Point, f64, f64)> = nodes
        .iter()
        .zip(&weights)
        .filter(|(&i, _)| g_on_front[i] != 0.0)
        .map(|(&i, &w)| {
            let tau = t - arrival.z.values[i];
            (g.point(i), tau, w * g_on_front[i] * cutoff_ramp(tau, cutoff))
        })
        .collect();
    Ok(par::map(targets.len(), |k| {
        let x = &targets[k];
        src.iter()
            .map(|(y, tau, w)| w * kernel.eval(grid::dist(x, y).powi(2), *tau))
            .sum()
    }))
}

/// Knobs of [`solve_heat_given_front`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatOptions {
    /// Slice spacing; at most `h`.
    pub dt: f64,
    /// Near-field cutoff in time units.
    pub cutoff: f64,
    /// Number of `√15`-Lipschitz graphs covering each front, used in the
    /// recorded cutoff bound.
    pub cover_count: f64,
}

impl HeatOptions {
    /// `dt = h/2`, cutoff `(2h)^2`, one graph.
    pub fn for_grid(grid: &GridSpec) -> Self {
        let h = grid.spacing();
        Self {
            dt: 0.5 * h,
            cutoff: 4.0 * h * h,
            cover_count: 1.0,
        }
    }
}

/// Bound on the dropped or ramped slab `{t - 2c < z < t}`: on one graph of
/// slope `ℓ`, `∫ G(x - y, τ) dH^{N-1}(y) <= √(1 + ℓ²) (4πτ)^{-1/2}`, which
/// integrates over `τ ∈ (0, 2c)` to `√(1 + ℓ²) √(2c/π)`; `√(1 + 15) = 4`.
pub fn cutoff_error_bound(kappa: f64, g_max: f64, cover_count: f64, cutoff: f64) -> f64 {
    kappa.abs() * g_max * cover_count * 4.0 * (2.0 * cutoff / PI).sqrt()
}

/// Adds `w Π_a k(. - y_a)` to `acc`, `k` the normalised 1D weights of heat
/// time `tau`: a nodal value `w` spread by the discrete semigroup. A point
/// mass `m` at `y` is the nodal value `m / h^N`.
fn stamp(grid: &GridSpec, acc: &mut [f64], y: usize, tau: f64, w: f64) {
    let h = grid.spacing();
    let k = Kernel1d::new(tau, h);
    let r = k.radius as isize;
    let shape = grid.shape3();
    let ijk = grid.unravel(y);
    let strides = grid.strides();
    let dim = grid.dim();
    let range = |a: usize| -> (isize, isize) {
        if a >= dim {
            return (0, 0);
        }
        let c = ijk[a] as isize;
        ((-r).max(-c), r.min(shape[a] as isize - 1 - c))
    };
    let (r0, r1, r2) = (range(0), range(1), range(2));
    let wt = |a: usize, o: isize| if a >= dim { 1.0 } else { k.at(o) };
    for a in r0.0..=r0.1 {
        let wa = w * wt(0, a);
        let ia = (ijk[0] as isize + a) as usize * strides[0];
        for b in r1.0..=r1.1 {
            let wb = wa * wt(1, b);
            let ib = ia + (ijk[1] as isize + b) as usize * strides[1];
            for c in r2.0..=r2.1 {
                acc[ib + (ijk[2] as isize + c) as usize * strides[2]] += wb * wt(2, c);
            }
        }
    }
}

/// Output of [`solve_heat_with_source`].
#[derive(Clone, Debug, PartialEq)]
pub struct HeatSolution {
    pub field: TemperatureField,
    /// `ḡ` used at each source node (`NaN` where unused).
    pub g_on_front: Vec<f64>,
}

/// Kernel-path solve with `ḡ(v, y, s)` supplied as a closure.
pub fn solve_heat_with_source(
    v0: &ScalarField,
    arrival: &ArrivalField,
    g_bar: &(dyn Fn(f64, &Point, f64) -> f64 + Sync),
    kappa: f64,
    g_max: f64,
    horizon: f64,
    opts: &HeatOptions,
) -> Result<HeatSolution> {
    solve_heat_core(v0, None, arrival, g_bar, kappa, g_max, horizon, opts)
}

#[allow(clippy::too_many_arguments)]
fn solve_heat_core(
    v0: &ScalarField,
    free_slices: Option<&TemperatureField>,
    arrival: &ArrivalField,
    g_bar: &(dyn Fn(f64, &Point, f64) -> f64 + Sync),
    kappa: f64,
    g_max: f64,
    horizon: f64,
    opts: &HeatOptions,
) -> Result<HeatSolution> {
    let grid = v0.grid.clone();
    grid.same_as(arrival.grid())?;
    let h = grid.spacing();
    if !(opts.dt > 0.0 && opts.dt <= h * (1.0 + 1e-12)) {
        return Err(FlowError::InvalidArgument(format!(
            "slice spacing {} must lie in (0, h = {h}]",
            opts.dt
        )));
    }
    if !(horizon > 0.0 && horizon <= arrival.extent) {
        return Err(FlowError::InvalidArgument(format!(
            "horizon {horizon} outside the arrival extent {}",
            arrival.extent
        )));
    }
    if !(opts.cutoff >= 0.0 && opts.cutoff < horizon) {
        return Err(FlowError::InvalidArgument(format!("bad cutoff {}", opts.cutoff)));
    }
    let times = TemperatureField::uniform_times(opts.dt, horizon);
    if let Some(f) = free_slices {
        f.grid.same_as(&grid)?;
        if f.slice_times != times {
            return Err(FlowError::ShapeMismatch("cached heat-free slices use other times".into()));
        }
    }
    let n = grid.len();
    let (nodes, weights) = if kappa == 0.0 {
        (Vec::new(), Vec::new())
    } else {
        source_nodes(arrival, horizon + opts.cutoff, opts.cutoff)?
    };
    let z = &arrival.z.values;
    let weights: Vec<f64> = weights.iter().map(|w| w / grid.cell_volume()).collect();
    // Source nodes ordered by arrival so each slice takes a contiguous run.
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| z[nodes[a]].total_cmp(&z[nodes[b]]).then(nodes[a].cmp(&nodes[b])));

    let mut slices: Vec<Vec<f64>> = vec![v0.values.clone()];
    let mut potential = vec![0.0; n];
    let mut g_on_front = vec![f64::NAN; n];
    // order[done..next] holds nodes part-way through their ramp.
    let mut next = 0;
    let mut done = 0;
    let mut ramped = vec![0.0; nodes.len()];
    let bound = cutoff_error_bound(kappa, g_max, opts.cover_count, opts.cutoff);
    let mut bounds = vec![0.0];
    for k in 1..times.len() {
        let tk = times[k];
        let free = match free_slices {
            Some(f) => f.slices[k].clone(),
            None => heat_free(v0, tk)?.values,
        };
        {
            let mut p = ScalarField {
                grid: grid.clone(),
                values: std::mem::take(&mut potential),
            };
            convolve::heat_convolve(&mut p, tk - times[k - 1], Boundary::Zero);
            potential = p.values;
        }
        let start = next;
        while next < order.len() && z[nodes[order[next]]] <= tk - opts.cutoff {
            next += 1;
        }
        let batch = &order[start..next];
        // Ramp increments of nodes that entered at earlier slices; their
        // front values are final.
        for &o in &order[done..start] {
            let y = nodes[o];
            let w = cutoff_ramp(tk - z[y], opts.cutoff);
            if w > ramped[o] {
                stamp(&grid, &mut potential, y, tk - z[y], weights[o] * g_on_front[y] * (w - ramped[o]));
                ramped[o] = w;
            }
        }
        let fracs: Vec<f64> = batch
            .iter()
            .map(|&o| cutoff_ramp(tk - z[nodes[o]], opts.cutoff))
            .collect();
        // Front values at times up to t_{k-1} are final; later ones read the
        // slice being built, predicted by linear extrapolation first.
        let mut current: Vec<f64> = if k >= 2 {
            let r = (tk - times[k - 1]) / (times[k - 1] - times[k - 2]);
            slices[k - 1]
                .iter()
                .zip(&slices[k - 2])
                .map(|(a, b)| a + r * (a - b))
                .collect()
        } else {
            slices[0].clone()
        };
        let front_value = |slices: &[Vec<f64>], current: &[f64], y: usize| -> Result<f64> {
            let s = z[y];
            if s > tk {
                return Err(FlowError::FutureSlice {
                    needed: s,
                    available: tk,
                });
            }
            let j = times.partition_point(|&t| t < s).max(1);
            let (ta, tb) = (times[j - 1], times[j]);
            let w = (s - ta) / (tb - ta);
            let va = slices[j - 1][y];
            let vb = if j == k { current[y] } else { slices[j][y] };
            let v = (1.0 - w) * va + w * vb;
            Ok(g_bar(v, &grid.point(y), s))
        };
        let mut used = Vec::with_capacity(batch.len());
        for (&o, &f) in batch.iter().zip(&fracs) {
            let y = nodes[o];
            let g = front_value(&slices, &current, y)?;
            used.push(g);
            if f > 0.0 {
                stamp(&grid, &mut potential, y, tk - z[y], weights[o] * g * f);
            }
        }
        let assemble = |potential: &[f64]| -> Vec<f64> {
            free.iter().zip(potential).map(|(f, p)| f - kappa * p).collect()
        };
        current = assemble(&potential);
        for _ in 0..MAX_CORRECTOR_PASSES {
            let mut change = 0.0f64;
            for (b, &o) in batch.iter().enumerate() {
                let y = nodes[o];
                if z[y] <= times[k - 1] {
                    continue;
                }
                let g = front_value(&slices, &current, y)?;
                let d = g - used[b];
                if d != 0.0 {
                    change = change.max(d.abs());
                    if fracs[b] > 0.0 {
                        stamp(&grid, &mut potential, y, tk - z[y], weights[o] * d * fracs[b]);
                    }
                    used[b] = g;
                }
            }
            if change == 0.0 {
                break;
            }
            current = assemble(&potential);
            if change < CORRECTOR_TOL {
                break;
            }
        }
        for (b, &o) in batch.iter().enumerate() {
            g_on_front[nodes[o]] = used[b];
            ramped[o] = fracs[b];
        }
        while done < next && ramped[order[done]] >= 1.0 {
            done += 1;
        }
        slices.push(current);
        bounds.push(bound);
    }
    let mut field = TemperatureField::new(grid, times, slices)?;
    field.cutoff_error_bounds = bounds;
    Ok(HeatSolution { field, g_on_front })
}

/// Kernel-path solve with source `κ ḡ(v)` from `model` on the front `arrival`.
pub fn solve_heat_given_front(
    v0: &ScalarField,
    arrival: &ArrivalField,
    model: &VelocityModel,
    horizon: f64,
    opts: &HeatOptions,
) -> Result<TemperatureField> {
    model.validate()?;
    let g = |v: f64, p: &Point, t: f64| model.g_bar(v, p, t);
    Ok(solve_heat_with_source(v0, arrival, &g, model.kappa, model.b, horizon, opts)?.field)
}

/// [`solve_heat_given_front`] reusing precomputed `heat_free(v0, t_k)` slices
/// on the solver's own slice times.
pub fn solve_heat_given_front_cached(
    v0: &ScalarField,
    free: &TemperatureField,
    arrival: &ArrivalField,
    model: &VelocityModel,
    horizon: f64,
    opts: &HeatOptions,
) -> Result<TemperatureField> {
    model.validate()?;
    let g = |v: f64, p: &Point, t: f64| model.g_bar(v, p, t);
    Ok(solve_heat_core(v0, Some(free), arrival, &g, model.kappa, model.b, horizon, opts)?.field)
}

/// Knobs of [`fd_heat_oracle`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdOptions {
    /// Mollification parameter (heat time of the indicator smoothing).
    pub eps: f64,
    /// Explicit step; `None` picks the largest stable step that divides
    /// the output spacing.
    pub dt: Option<f64>,
    /// Output slice spacing.
    pub slice_dt: f64,
}

/// Explicit finite differences for `v_t = Δv - κ ḡ(v) |D f_ε|` with
/// `f_ε = 1_{K(t)} * G(., ε)`, replicate boundary. Independent of the
/// kernel path; `f_ε` is updated incrementally as nodes enter `K(t)`.
pub fn fd_heat_oracle(
    v0: &ScalarField,
    arrival: &ArrivalField,
    model: &VelocityModel,
    horizon: f64,
    opts: &FdOptions,
) -> Result<TemperatureField> {
    model.validate()?;
    let grid = v0.grid.clone();
    grid.same_as(arrival.grid())?;
    let h = grid.spacing();
    let dim = grid.dim();
    if !(opts.eps >= 4.0 * h * h * (1.0 - 1e-12)) {
        return Err(FlowError::InvalidArgument(format!(
            "mollification {} below (2h)^2 = {}",
            opts.eps,
            4.0 * h * h
        )));
    }
    if !(horizon > 0.0 && horizon <= arrival.extent && opts.slice_dt > 0.0) {
        return Err(FlowError::InvalidArgument("bad horizon or slice spacing".into()));
    }
    let limit = 0.9 * h * h / (2.0 * dim as f64);
    if let Some(dt) = opts.dt {
        if !(dt > 0.0 && dt <= limit) {
            return Err(FlowError::Cfl { dt, limit });
        }
    }
    arrival.reachable_set(horizon)?.check_margin("front source support")?;
    let times = TemperatureField::uniform_times(opts.slice_dt, horizon);
    let n = grid.len();
    let z = &arrival.z.values;
    let mut entering: Vec<usize> = (0..n).filter(|&i| z[i] > 0.0 && z[i] <= horizon).collect();
    entering.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));

    let mut f = ScalarField {
        grid: grid.clone(),
        values: arrival.source.indicator().values,
    };
    convolve::heat_convolve(&mut f, opts.eps, Boundary::Zero);
    let mut f = f.values;
    let kernel = Kernel1d::new(opts.eps, h);
    let reach = kernel.radius + 1;
    let mut gm = vec![0.0; n];
    let mut active = vec![false; n];
    let mut active_list = Vec::new();
    let strides = grid.strides();
    let shape = grid.shape3();
    let grad_at = |f: &[f64], i: usize| -> f64 {
        let ijk = grid.unravel(i);
        let mut s = 0.0;
        for a in 0..dim {
            let lo = if ijk[a] > 0 { i - strides[a] } else { i };
            let hi = if ijk[a] + 1 < shape[a] { i + strides[a] } else { i };
            let span = (hi - lo) / strides[a];
            if span > 0 {
                let d = (f[hi] - f[lo]) / (span as f64 * h);
                s += d * d;
            }
        }
        s.sqrt()
    };
    let refresh = |f: &[f64], gm: &mut [f64], active: &mut [bool], list: &mut Vec<usize>, centre: usize| {
        let c = grid.unravel(centre);
        let lo = |a: usize| if a < dim { c[a].saturating_sub(reach) } else { 0 };
        let hi = |a: usize| if a < dim { (c[a] + reach).min(shape[a] - 1) } else { 0 };
        for i0 in lo(0)..=hi(0) {
            for i1 in lo(1)..=hi(1) {
                for i2 in lo(2)..=hi(2) {
                    let i = grid.index([i0, i1, i2]);
                    gm[i] = grad_at(f, i);
                    if gm[i] > 0.0 && !active[i] {
                        active[i] = true;
                        list.push(i);
                    }
                }
            }
        }
    };
    for i in 0..n {
        gm[i] = grad_at(&f, i);
        if gm[i] > 0.0 {
            active[i] = true;
            active_list.push(i);
        }
    }

    let mut v = v0.values.clone();
    let mut lap = vec![0.0; n];
    let mut slices = vec![v.clone()];
    let mut t = 0.0;
    let mut next = 0;
    let kappa = model.kappa;
    for k in 1..times.len() {
        let span = times[k] - times[k - 1];
        let dt_max = opts.dt.unwrap_or(limit);
        let steps = (span / dt_max - 1e-9).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for s in 0..steps {
            {
                let v_ref = &v;
                par::for_each_mut(&mut lap, |i, out| {
                    let ijk = grid.unravel(i);
                    let mut acc = 0.0;
                    for a in 0..dim {
                        let lo = if ijk[a] > 0 { v_ref[i - strides[a]] } else { v_ref[i] };
                        let hi = if ijk[a] + 1 < shape[a] { v_ref[i + strides[a]] } else { v_ref[i] };
                        acc += lo + hi - 2.0 * v_ref[i];
                    }
                    *out = acc / (h * h);
                });
            }
            if kappa != 0.0 {
                for &i in &active_list {
                    lap[i] -= kappa * model.g_bar(v[i], &grid.point(i), t) * gm[i];
                }
            }
            for (vi, li) in v.iter_mut().zip(&lap) {
                *vi += dt * li;
            }
            t = if s + 1 == steps { times[k] } else { t + dt };
            let first = next;
            while next < entering.len() && z[entering[next]] <= t {
                stamp(&grid, &mut f, entering[next], opts.eps, 1.0);
                next += 1;
            }
            for &y in &entering[first..next] {
                refresh(&f, &mut gm, &mut active, &mut active_list, y);
            }
        }
        slices.push(v.clone());
    }
    TemperatureField::new(grid, times, slices)
}

/// Worst violation of the maximum-principle inequalities for a source of
/// sign `sign(κ)` (`ḡ > 0`): `κ > 0` gives `v <= heat_free(v0, t) <= sup v0`,
/// `κ < 0` the mirror images, `κ = 0` both. Nonpositive when they hold.
pub fn maximum_principle_excess(v: &TemperatureField, v0: &ScalarField, kappa: f64) -> Result<f64> {
    v.grid.same_as(&v0.grid)?;
    let hi = v0.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v0.values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut worst = f64::NEG_INFINITY;
    for (k, &t) in v.slice_times.iter().enumerate() {
        let free = heat_free(v0, t)?;
        for (x, f) in v.slices[k].iter().zip(&free.values) {
            if kappa >= 0.0 {
                worst = worst.max(x - f).max(x - hi);
            }
            if kappa <= 0.0 {
                worst = worst.max(f - x).max(lo - x);
            }
        }
    }
    Ok(worst)
}

/// Empirical regularity constants of `v` from [`MODULI_PAIRS`] random pairs
/// with log-uniform separations in `[2h, L/4]`, `L` the domain width.
pub fn measure_moduli(v: &TemperatureField, seed: u64) -> Result<Moduli> {
    if v.slices.len() < 4 {
        return Err(FlowError::InvalidArgument(format!(
            "need at least 4 slices, got {}",
            v.slices.len()
        )));
    }
    let g = &v.grid;
    let h = g.spacing();
    let dim = g.dim();
    let (lo, hi) = g.bounds();
    let width = (0..dim).map(|a| hi[a] - lo[a]).fold(f64::INFINITY, f64::min);
    let (rmin, rmax) = (2.0 * h, (0.25 * width).max(2.0 * h));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_mod = |r: f64| r * (1.0 + r.ln().abs());
    let mut m = Moduli {
        sup_norm: v.sup_norm(),
        ..Moduli::default()
    };
    let nslices = v.slices.len();
    let mut drawn = 0;
    let mut attempts = 0;
    while drawn < MODULI_PAIRS && attempts < 20 * MODULI_PAIRS {
        attempts += 1;
        let i0 = rng.gen_range(0..g.len());
        let x = g.point(i0);
        let r = (rmin.ln() + rng.gen::<f64>() * (rmax / rmin).ln()).exp();
        let mut dir = [0.0; 3];
        for d in dir.iter_mut().take(dim) {
            *d = rng.gen::<f64>() * 2.0 - 1.0;
        }
        let l = grid::norm(&dir);
        if !(l > 1e-3 && l <= 1.0) {
            continue;
        }
        // Snap to a node so constant fields give exact zeros.
        let Some(j) = g.nearest(&grid::add_scaled(&x, r / l, &dir)) else {
            continue;
        };
        let y = g.point(j);
        let r = grid::dist(&x, &y);
        if r < h {
            continue;
        }
        let k = rng.gen_range(0..nslices);
        let d = (v.slices[k][i0] - v.slices[k][j]).abs();
        m.space_log_lip = m.space_log_lip.max(d / log_mod(r));
        m.space_holder_half = m.space_holder_half.max(d / r.sqrt());
        // Time pair at the same node.
        let i = rng.gen_range(0..g.len());
        let k1 = rng.gen_range(0..nslices);
        let k2 = rng.gen_range(0..nslices);
        if k1 != k2 {
            let dt = (v.slice_times[k1] - v.slice_times[k2]).abs();
            let dv = (v.slices[k1][i] - v.slices[k2][i]).abs();
            m.time_holder_log = m.time_holder_log.max(dv / (dt.sqrt() * (1.0 + dt.ln().abs())));
        }
        drawn += 1;
    }
    Ok(m)
}
