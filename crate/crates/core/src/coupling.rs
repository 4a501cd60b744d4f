//! Picard iteration for the coupled front/temperature system.
//!
//! `Φ(v)`: solve the eikonal problem with speed `ḡ(v)`, then the heat
//! problem with the resulting front. Iterates
//! `v_{k+1} = (1 - λ) v_k + λ Φ(v_k)` start from the source-free solution.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::eikonal::{solve_arrival, ArrivalField, VelocityModel};
use crate::error::{FlowError, Result};
use crate::geometry::{
    self, build_graph_cover, calibrate_paraboloid, check_interior_cone, paraboloid_ladder, ConeParams,
};
use crate::grid::{GridSpec, Point, RegionMask, ScalarField};
use crate::heat::{self, front_source_potentials, heat_free, HeatOptions};
use crate::temperature::TemperatureField;

/// Growth factor over [`DIVERGENCE_WINDOW`] iterations that flags divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
pub const DIVERGENCE_WINDOW: usize = 5;
/// Default seed for the representation-residual target sample.
pub const RESIDUAL_SEED: u64 = 0x7265_7369;
const RESIDUAL_TARGETS: usize = 256;

/// `K0` and `v0`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    pub k0: RegionMask,
    pub v0: ScalarField,
}

impl InitialData {
    pub fn new(k0: RegionMask, v0: ScalarField) -> Result<Self> {
        k0.grid.same_as(&v0.grid)?;
        if k0.is_empty() {
            return Err(FlowError::InvalidArgument("initial set is empty".into()));
        }
        Ok(Self { k0, v0 })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.v0.grid
    }
}

/// Which field the iteration starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Seed {
    /// `heat_free(v0, t)`, the `κ = 0` solution.
    HeatFree,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Status {
    Running,
    Converged,
    MaxIter,
    Diverged,
}

/// Paraboloid/cone/cover checks run on converged fronts.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryOptions {
    pub delta: f64,
    /// Fractions of `T` at which fronts are checked.
    pub fractions: Vec<f64>,
    pub ladder: Vec<f64>,
    pub axes: usize,
    pub min_fraction: f64,
    /// Radius `r` in the cover bound `ceil(C(N) r / ρ)`.
    pub cover_radius: f64,
}

impl GeometryOptions {
    /// `δ = 1/4` at `t ∈ {T/4, T/2, 3T/4, T}`, ladder `0.25 · 2^{k/4}`.
    pub fn standard(cover_radius: f64) -> Self {
        Self {
            delta: 0.25,
            fractions: vec![0.25, 0.5, 0.75, 1.0],
            ladder: paraboloid_ladder(0.25, 2f64.powf(0.25), 40),
            axes: 32,
            min_fraction: 0.98,
            cover_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingOptions {
    pub horizon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub heat: HeatOptions,
    /// Spatial mollification scale of `ḡ(v)` in the eikonal speed.
    pub smoothing: f64,
    /// Also run from the zero seed and report the disagreement.
    pub second_seed: bool,
    pub geometry: Option<GeometryOptions>,
    pub residual_seed: u64,
}

impl CouplingOptions {
    pub fn new(grid: &GridSpec, horizon: f64) -> Self {
        Self {
            horizon,
            tol: 1e-5,
            max_iter: 50,
            damping: 1.0,
            heat: HeatOptions::for_grid(grid),
            smoothing: 0.0,
            second_seed: false,
            geometry: None,
            residual_seed: RESIDUAL_SEED,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.max_iter >= 1 && self.damping > 0.0 && self.damping <= 1.0) {
            return Err(FlowError::InvalidArgument(format!(
                "need tol > 0, maxIter >= 1, damping in (0, 1]; got {}, {}, {}",
                self.tol, self.max_iter, self.damping
            )));
        }
        if !(self.horizon > 0.0 && self.smoothing >= 0.0) {
            return Err(FlowError::InvalidArgument("need T > 0 and smoothing >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FrontGeometry {
    pub time: f64,
    pub paraboloid_pass: f64,
    pub cone_rho: f64,
    /// `None` when `ρ < 2h`: the cone and the cover are below grid
    /// resolution and are not checked.
    pub cone_pass: Option<f64>,
    pub cover_count: Option<usize>,
    pub cover_bound: Option<usize>,
    pub max_point_to_graph: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GeometryCertificate {
    pub delta: f64,
    /// Calibrated paraboloid constant, `None` if no ladder value passed.
    pub c: Option<f64>,
    pub fronts: Vec<FrontGeometry>,
}

/// Checks emitted on convergence.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SolutionCertificate {
    /// Sup over sampled nodes and slices of `|v - (kernel representation of v)|`.
    pub representation_residual: f64,
    pub integrated_perimeter: f64,
    pub geometry: Option<GeometryCertificate>,
    /// Sup difference to the run from the other seed.
    pub seed_disagreement: Option<f64>,
}

/// Iteration state and history.
#[derive(Clone, Debug)]
pub struct CouplingState {
    pub iteration: usize,
    pub v: TemperatureField,
    pub z: ArrivalField,
    pub residuals: Vec<f64>,
    pub damping: f64,
    pub status: Status,
    pub certificate: Option<SolutionCertificate>,
}

impl CouplingState {
    /// Whether residuals are strictly decreasing from index `from` on.
    pub fn decreasing_tail(&self, from: usize) -> bool {
        self.residuals[from.min(self.residuals.len())..]
            .windows(2)
            .all(|w| w[1] < w[0])
    }
}

fn arrival_for(v: &TemperatureField, data: &InitialData, model: &VelocityModel, opts: &CouplingOptions) -> Result<ArrivalField> {
    let speed = model.smoothed_speed(v, opts.smoothing)?;
    solve_arrival(&data.k0, &speed, opts.horizon)
}

/// One application of `Φ`: front from `ḡ(v)`, then temperature from the
/// front.
pub fn picard_step(
    v: &TemperatureField,
    data: &InitialData,
    model: &VelocityModel,
    opts: &CouplingOptions,
) -> Result<(TemperatureField, ArrivalField)> {
    if v.horizon() < opts.horizon {
        return Err(FlowError::InvalidArgument(format!(
            "temperature ends at {} before T = {}",
            v.horizon(),
            opts.horizon
        )));
    }
    let z = arrival_for(v, data, model, opts)?;
    let next = heat::solve_heat_given_front(&data.v0, &z, model, opts.horizon, &opts.heat)?;
    Ok((next, z))
}

fn picard_step_cached(
    v: &TemperatureField,
    free: &TemperatureField,
    data: &InitialData,
    model: &VelocityModel,
    opts: &CouplingOptions,
) -> Result<(TemperatureField, ArrivalField)> {
    let z = arrival_for(v, data, model, opts)?;
    let next = heat::solve_heat_given_front_cached(&data.v0, free, &z, model, opts.horizon, &opts.heat)?;
    Ok((next, z))
}

/// The starting iterate.
pub fn seed_field(data: &InitialData, opts: &CouplingOptions, seed: Seed) -> Result<TemperatureField> {
    let times = TemperatureField::uniform_times(opts.heat.dt, opts.horizon);
    let slices = times
        .iter()
        .map(|&t| match seed {
            Seed::HeatFree => heat_free(&data.v0, t).map(|f| f.values),
            Seed::Zero => Ok(vec![0.0; data.grid().len()]),
        })
        .collect::<Result<Vec<_>>>()?;
    TemperatureField::new(data.grid().clone(), times, slices)
}

/// Runs the iteration; `observer` sees every iterate `(k, v_k, z_k)`.
pub fn iterate(
    data: &InitialData,
    model: &VelocityModel,
    opts: &CouplingOptions,
    seed: Seed,
    observer: &mut dyn FnMut(usize, &TemperatureField, &ArrivalField) -> Result<()>,
) -> Result<CouplingState> {
    opts.validate()?;
    model.validate()?;
    let free = seed_field(data, opts, Seed::HeatFree)?;
    let mut v = match seed {
        Seed::HeatFree => free.clone(),
        Seed::Zero => seed_field(data, opts, seed)?,
    };
    let mut residuals = Vec::new();
    let mut status = Status::Running;
    let mut z = None;
    let mut k = 0;
    while status == Status::Running {
        let (phi, zk) = picard_step_cached(&v, &free, data, model, opts)?;
        let mut next = phi;
        if opts.damping < 1.0 {
            for (a, b) in next.slices.iter_mut().zip(&v.slices) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = opts.damping * *x + (1.0 - opts.damping) * y;
                }
            }
        }
        let r = next.sup_difference(&v)?;
        residuals.push(r);
        k += 1;
        observer(k, &next, &zk)?;
        v = next;
        z = Some(zk);
        if r <= opts.tol {
            status = Status::Converged;
        } else if !r.is_finite()
            || (k > DIVERGENCE_WINDOW && r > DIVERGENCE_FACTOR * residuals[k - 1 - DIVERGENCE_WINDOW])
        {
            status = Status::Diverged;
        } else if k >= opts.max_iter {
            status = Status::MaxIter;
        }
    }
    Ok(CouplingState {
        iteration: k,
        v,
        z: z.expect("at least one iteration"),
        residuals,
        damping: opts.damping,
        status,
        certificate: None,
    })
}

/// [`iterate`] from the heat-free seed plus, on convergence, the solution
/// certificate.
pub fn solve_system(data: &InitialData, model: &VelocityModel, opts: &CouplingOptions) -> Result<CouplingState> {
    solve_system_observed(data, model, opts, &mut |_, _, _| Ok(()))
}

pub fn solve_system_observed(
    data: &InitialData,
    model: &VelocityModel,
    opts: &CouplingOptions,
    observer: &mut dyn FnMut(usize, &TemperatureField, &ArrivalField) -> Result<()>,
) -> Result<CouplingState> {
    let mut state = iterate(data, model, opts, Seed::HeatFree, observer)?;
    if state.status != Status::Converged {
        return Ok(state);
    }
    let representation_residual = representation_residual(&state.v, data, model, opts)?;
    let times: Vec<f64> = state.v.slice_times.clone();
    let history = geometry::front_history(&state.z, &times)?;
    let integrated_perimeter = geometry::integrated_perimeter(&history);
    let geometry = match &opts.geometry {
        Some(g) => Some(geometry_certificate(&state.z, opts.horizon, g)?),
        None => None,
    };
    let seed_disagreement = if opts.second_seed {
        let other = iterate(data, model, opts, Seed::Zero, &mut |_, _, _| Ok(()))?;
        Some(other.v.sup_difference(&state.v)?)
    } else {
        None
    };
    state.certificate = Some(SolutionCertificate {
        representation_residual,
        integrated_perimeter,
        geometry,
        seed_disagreement,
    });
    Ok(state)
}

/// `sup |v(x, t) - heat_free(v0, t)(x) + κ Σ G ḡ(v(y, z(y))) |Dz| h^N|` over
/// a fixed random node sample at the quarter slices, with `z` recomputed
/// from `v` and the potential summed directly.
pub fn representation_residual(
    v: &TemperatureField,
    data: &InitialData,
    model: &VelocityModel,
    opts: &CouplingOptions,
) -> Result<f64> {
    let z = arrival_for(v, data, model, opts)?;
    let g = data.grid();
    let g_on_front: Vec<f64> = (0..g.len())
        .map(|i| {
            let s = z.z.values[i];
            if s > 0.0 && s <= opts.horizon {
                model.g_bar(v.node_value(i, s), &g.point(i), s)
            } else {
                0.0
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.residual_seed);
    let count = RESIDUAL_TARGETS.min(g.len());
    let mut nodes = index::sample(&mut rng, g.len(), count).into_vec();
    nodes.sort_unstable();
    let targets: Vec<Point> = nodes.iter().map(|&i| g.point(i)).collect();
    let last = v.slice_times.len() - 1;
    let mut ks: Vec<usize> = [last / 4, last / 2, 3 * last / 4, last].into_iter().filter(|&k| k > 0).collect();
    ks.dedup();
    let mut worst = 0.0f64;
    for k in ks {
        let t = v.slice_times[k];
        let free = heat_free(&data.v0, t)?;
        let pot = if model.kappa == 0.0 || t <= opts.heat.cutoff {
            vec![0.0; count]
        } else {
            front_source_potentials(&z, &g_on_front, &targets, t, opts.heat.cutoff)?
        };
        for (j, &i) in nodes.iter().enumerate() {
            let rep = free.values[i] - model.kappa * pot[j];
            worst = worst.max((v.slices[k][i] - rep).abs());
        }
    }
    Ok(worst)
}

/// Paraboloid calibration, cone check with `ρ = ½ (2C)^{-2/β}`, `β = 2δ`,
/// and graph covers of the fronts at the configured fractions of `T`.
pub fn geometry_certificate(z: &ArrivalField, horizon: f64, opts: &GeometryOptions) -> Result<GeometryCertificate> {
    let times: Vec<f64> = opts.fractions.iter().map(|f| f * horizon).collect();
    let masks = times.iter().map(|&t| z.reachable_set(t)).collect::<Result<Vec<_>>>()?;
    let cal = calibrate_paraboloid(&masks, opts.delta, &opts.ladder, opts.axes, opts.min_fraction)?;
    let Some(cal) = cal else {
        return Ok(GeometryCertificate {
            delta: opts.delta,
            c: None,
            fronts: Vec::new(),
        });
    };
    let cone = ConeParams::from_paraboloid_constant(cal.c, 2.0 * opts.delta)?;
    let resolved = cone.rho >= 2.0 * z.grid().spacing();
    let mut fronts = Vec::new();
    for ((&t, mask), &pp) in times.iter().zip(&masks).zip(&cal.pass_fractions) {
        let mut f = FrontGeometry {
            time: t,
            paraboloid_pass: pp,
            cone_rho: cone.rho,
            cone_pass: None,
            cover_count: None,
            cover_bound: None,
            max_point_to_graph: None,
        };
        if resolved {
            let cone_report = check_interior_cone(mask, &cone, opts.axes)?;
            let cover = build_graph_cover(z, t, cone.rho, opts.cover_radius)?;
            f.cone_pass = Some(cone_report.pass_fraction);
            f.cover_count = Some(cover.count);
            f.cover_bound = Some(cover.count_bound);
            f.max_point_to_graph = Some(cover.max_point_to_graph);
        }
        fronts.push(f);
    }
    Ok(GeometryCertificate {
        delta: opts.delta,
        c: Some(cal.c),
        fronts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StabilityRow {
    pub scale: f64,
    pub sup_difference: f64,
    pub iterations: usize,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StabilityTable {
    pub reference_iterations: usize,
    pub rows: Vec<StabilityRow>,
    pub decreasing: bool,
}

/// Coupled solves with the eikonal speed mollified at each scale, compared
/// with the unmollified reference.
pub fn stability_experiment(
    data: &InitialData,
    model: &VelocityModel,
    opts: &CouplingOptions,
    scales: &[f64],
) -> Result<StabilityTable> {
    if scales.len() < 3 || scales.windows(2).any(|w| w[1] >= w[0]) || scales.iter().any(|&s| s < 0.0) {
        return Err(FlowError::InvalidArgument(
            "need at least 3 strictly decreasing nonnegative scales".into(),
        ));
    }
    let base = CouplingOptions {
        smoothing: 0.0,
        second_seed: false,
        geometry: None,
        ..opts.clone()
    };
    let reference = iterate(data, model, &base, Seed::HeatFree, &mut |_, _, _| Ok(()))?;
    let mut rows = Vec::new();
    for &scale in scales {
        let o = CouplingOptions {
            smoothing: scale,
            ..base.clone()
        };
        let run = iterate(data, model, &o, Seed::HeatFree, &mut |_, _, _| Ok(()))?;
        rows.push(StabilityRow {
            scale,
            sup_difference: run.v.sup_difference(&reference.v)?,
            iterations: run.iteration,
            status: run.status,
        });
    }
    let decreasing = rows.windows(2).all(|w| w[1].sup_difference < w[0].sup_difference);
    Ok(StabilityTable {
        reference_iterations: reference.iteration,
        rows,
        decreasing,
    })
}
