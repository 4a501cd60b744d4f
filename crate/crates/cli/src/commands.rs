//! The seven subcommands. Each writes its artifacts into the output
//! directory and returns a manifest; a non-converged coupled solve is
//! reported through [`Outcome::NotConverged`].

use std::path::{Path, PathBuf};

use frontflow::config::ScenarioConfig;
use frontflow::coupling::{
    self, geometry_certificate, seed_field, solve_system_observed, stability_experiment, InitialData, Seed, Status,
};
use frontflow::eikonal::{metrication_bound, solve_arrival, ArrivalField};
use frontflow::geometry::{self, build_graph_cover, check_interior_ball, check_interior_cone, ConeParams};
use frontflow::heat::{maximum_principle_excess, measure_moduli, solve_heat_given_front};
use frontflow::io;
use frontflow::temperature::TemperatureField;
use frontflow::trajectories::{
    direction_holder_seminorm, front_probes, reparametrize_unit_speed, unit_speed_defect, Extractor,
};
use frontflow::{FlowError, Result};
use serde_json::{json, Value};

use crate::manifest::{manifest, write_csv, write_json};

/// Slices reported in perimeter curves.
const CURVE_SLICES: usize = 11;

pub struct Context {
    pub cfg: ScenarioConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub dump_iterates: bool,
    pub arrival: Option<PathBuf>,
}

pub enum Outcome {
    Done,
    /// The coupled iteration stopped without converging.
    NotConverged(Status),
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn curve_times(horizon: f64) -> Vec<f64> {
    (0..CURVE_SLICES)
        .map(|k| horizon * k as f64 / (CURVE_SLICES - 1) as f64)
        .collect()
}

/// Temperature that drives the front outside the coupled solve: the
/// heat-free evolution of `v0` when the speed law reads the temperature.
fn base_temperature(ctx: &Context, data: &InitialData) -> Result<Option<TemperatureField>> {
    if !ctx.cfg.model.depends_on_temperature() {
        return Ok(None);
    }
    let opts = ctx.cfg.coupling_options()?;
    Ok(Some(seed_field(data, &opts, Seed::HeatFree)?))
}

fn base_arrival(ctx: &Context, data: &InitialData, v: Option<&TemperatureField>) -> Result<ArrivalField> {
    let speed = ctx.cfg.model.speed(v)?;
    solve_arrival(&data.k0, &speed, ctx.cfg.run.horizon)
}

fn perimeter_rows(arrival: &ArrivalField, horizon: f64) -> Result<(Vec<Value>, Vec<Vec<String>>)> {
    let history = geometry::front_history(arrival, &curve_times(horizon))?;
    let rows = history
        .perimeters
        .iter()
        .map(|p| vec![num(p.time), num(p.coarea), num(p.contour)])
        .collect();
    let json = history
        .perimeters
        .iter()
        .map(|p| json!({"time": p.time, "coarea": p.coarea, "contour": p.contour}))
        .collect();
    Ok((json, rows))
}

fn arrival_summary(a: &ArrivalField) -> Value {
    let (frac, certified) = a.gradient_bound_fraction();
    json!({
        "h": a.grid().spacing(),
        "horizon": a.horizon,
        "extent": a.extent,
        "aliasingPairs": a.aliasing_pairs,
        "metricationBound": metrication_bound(a.grid().dim()),
        "gradientBoundFraction": frac,
        "certifiedNodes": certified,
    })
}

pub fn eikonal(ctx: &Context) -> Result<(Value, Outcome)> {
    let data = ctx.cfg.initial_data()?;
    let v = base_temperature(ctx, &data)?;
    let arrival = base_arrival(ctx, &data, v.as_ref())?;
    io::write_scalar(&ctx.out.join("arrival"), &arrival.z, "arrival")?;
    io::write_mask(&ctx.out.join("k0"), &data.k0, "initial set")?;
    let (perims, rows) = perimeter_rows(&arrival, ctx.cfg.run.horizon)?;
    write_csv(&ctx.out.join("perimeter.csv"), &["time", "coarea", "contour"], &rows)?;
    let mut results = arrival_summary(&arrival);
    results["perimeter"] = Value::Array(perims);
    let m = manifest("eikonal", &ctx.cfg, ctx.seed, results);
    write_json(&ctx.out.join("eikonal.json"), &m)?;
    Ok((m, Outcome::Done))
}

fn load_or_solve_arrival(ctx: &Context, data: &InitialData) -> Result<(ArrivalField, &'static str)> {
    let stored = ctx.arrival.clone().or_else(|| {
        let p = ctx.out.join("arrival");
        p.with_extension("json").exists().then_some(p)
    });
    match stored {
        Some(stem) => {
            let (z, _) = io::read_scalar(&stem)?;
            z.grid.same_as(data.grid())?;
            let m = &ctx.cfg.model;
            Ok((ArrivalField::from_values(z, ctx.cfg.run.horizon, (m.a, m.b))?, "file"))
        }
        None => {
            let v = base_temperature(ctx, data)?;
            Ok((base_arrival(ctx, data, v.as_ref())?, "computed"))
        }
    }
}

/// Indices of the slices at `0, T/4, T/2, 3T/4, T`.
fn quarter_slices(v: &TemperatureField) -> Vec<usize> {
    let last = v.slice_times.len() - 1;
    let mut ks = vec![0, last / 4, last / 2, 3 * last / 4, last];
    ks.dedup();
    ks
}

fn write_slices(out: &Path, prefix: &str, v: &TemperatureField) -> Result<Vec<f64>> {
    let mut written = Vec::new();
    for k in quarter_slices(v) {
        io::write_scalar(&out.join(format!("{prefix}_{k:04}")), &v.slice(k), "temperature")?;
        written.push(v.slice_times[k]);
    }
    Ok(written)
}

fn temperature_summary(v: &TemperatureField, data: &InitialData, kappa: f64, seed: u64) -> Result<Value> {
    let moduli = measure_moduli(v, seed)?;
    let excess = maximum_principle_excess(v, &data.v0, kappa)?;
    Ok(json!({
        "sliceTimes": v.slice_times,
        "moduli": moduli,
        "cutoffErrorBound": v.cutoff_error_bounds.iter().copied().fold(0.0, f64::max),
        "maxPrincipleExcess": excess,
        "maxPrincipleHolds": excess <= 1e-12,
    }))
}

pub fn heat(ctx: &Context) -> Result<(Value, Outcome)> {
    let data = ctx.cfg.initial_data()?;
    let (arrival, origin) = load_or_solve_arrival(ctx, &data)?;
    let v = solve_heat_given_front(
        &data.v0,
        &arrival,
        &ctx.cfg.model,
        ctx.cfg.run.horizon,
        &ctx.cfg.heat_options()?,
    )?;
    let written = write_slices(&ctx.out, "temperature", &v)?;
    let mut results = temperature_summary(&v, &data, ctx.cfg.model.kappa, ctx.seed)?;
    results["arrivalSource"] = json!(origin);
    results["writtenSliceTimes"] = json!(written);
    let m = manifest("heat", &ctx.cfg, ctx.seed, results);
    write_json(&ctx.out.join("temperature.json"), &m)?;
    Ok((m, Outcome::Done))
}

fn status_name(s: Status) -> Value {
    serde_json::to_value(s).unwrap_or(Value::Null)
}

fn run_coupled(ctx: &Context) -> Result<(coupling::CouplingState, InitialData)> {
    let data = ctx.cfg.initial_data()?;
    let opts = ctx.cfg.coupling_options()?;
    let dump = ctx.out.join("iterates");
    if ctx.dump_iterates {
        std::fs::create_dir_all(&dump)?;
    }
    let dump_iterates = ctx.dump_iterates;
    let state = solve_system_observed(&data, &ctx.cfg.model, &opts, &mut |k, v, z| {
        if dump_iterates {
            let last = v.slice_times.len() - 1;
            io::write_scalar(&dump.join(format!("v_{k:03}")), &v.slice(last), "temperature")?;
            io::write_scalar(&dump.join(format!("z_{k:03}")), &z.z, "arrival")?;
        }
        Ok(())
    })?;
    Ok((state, data))
}

fn coupled_results(state: &coupling::CouplingState) -> Value {
    json!({
        "status": status_name(state.status),
        "iterations": state.iteration,
        "residuals": state.residuals,
        "decreasingTail": state.decreasing_tail(state.residuals.len().saturating_sub(5)),
        "damping": state.damping,
        "cutoffErrorBound": state.v.cutoff_error_bounds.iter().copied().fold(0.0, f64::max),
        "certificate": state.certificate,
    })
}

fn outcome(state: &coupling::CouplingState) -> Outcome {
    match state.status {
        Status::Converged => Outcome::Done,
        s => Outcome::NotConverged(s),
    }
}

pub fn couple(ctx: &Context) -> Result<(Value, Outcome)> {
    let (state, _) = run_coupled(ctx)?;
    io::write_scalar(&ctx.out.join("arrival"), &state.z.z, "arrival")?;
    write_slices(&ctx.out, "temperature", &state.v)?;
    let m = manifest("couple", &ctx.cfg, ctx.seed, coupled_results(&state));
    write_json(&ctx.out.join("couple.json"), &m)?;
    Ok((m, outcome(&state)))
}

pub fn diagnose(ctx: &Context) -> Result<(Value, Outcome)> {
    let cfg = &ctx.cfg;
    let data = cfg.initial_data()?;
    let h = cfg.spacing();
    let ball = check_interior_ball(&data.k0, cfg.initial_set.r0)?;
    let rows: Vec<Vec<String>> = ball
        .records
        .iter()
        .map(|r| {
            vec![
                r.node.to_string(),
                num(r.point[0]),
                num(r.point[1]),
                num(r.point[2]),
                (r.pass as u8).to_string(),
                num(r.margin_cells),
            ]
        })
        .collect();
    write_csv(&ctx.out.join("ball_report.csv"), &["node", "x", "y", "z", "pass", "marginCells"], &rows)?;

    let mut cones = Vec::new();
    for &rho in &cfg.diagnostics.cone_rho_ladder {
        if rho < 2.0 * h {
            cones.push(json!({"rho": rho, "skipped": "below 2h"}));
            continue;
        }
        let r = check_interior_cone(&data.k0, &ConeParams::new(rho, 2.0 * rho)?, cfg.diagnostics.axes)?;
        cones.push(json!({"rho": rho, "theta": 2.0 * rho, "passFraction": r.pass_fraction}));
    }

    let v = base_temperature(ctx, &data)?;
    let arrival = base_arrival(ctx, &data, v.as_ref())?;
    let gopts = cfg.geometry_options();
    let cert = geometry_certificate(&arrival, cfg.run.horizon, &gopts)?;
    let mut covers = Vec::new();
    for (i, f) in cert.fronts.iter().enumerate() {
        if f.cone_pass.is_some() {
            let cover = build_graph_cover(&arrival, f.time, f.cone_rho, gopts.cover_radius)?;
            std::fs::write(ctx.out.join(format!("graph_cover_{i}.csv")), cover_csv(&cover))?;
            covers.push(json!({
                "time": f.time,
                "count": cover.count,
                "countBound": cover.count_bound,
                "boundConstant": cover.bound_constant,
                "maxPointToGraph": cover.max_point_to_graph,
                "maxExteriorExcursion": cover.max_exterior_excursion,
            }));
        }
    }
    let results = json!({
        "h": h,
        "ball": {"r0": cfg.initial_set.r0, "passFraction": ball.pass_fraction, "pass": ball.pass_fraction >= 1.0},
        "cones": cones,
        "geometry": cert,
        "graphCovers": covers,
    });
    let m = manifest("diagnose", cfg, ctx.seed, results);
    write_json(&ctx.out.join("diagnose.json"), &m)?;
    Ok((m, Outcome::Done))
}

/// All patches of a cover in one table, prefixed by patch, direction and slab.
fn cover_csv(cover: &geometry::GraphCover) -> String {
    let mut s = String::new();
    for (j, p) in cover.patches.iter().enumerate() {
        let table = p.to_csv();
        let mut lines = table.lines();
        let header = lines.next().unwrap_or_default();
        if j == 0 {
            s.push_str(&format!("patch,direction,slab,{header}\n"));
        }
        for l in lines {
            s.push_str(&format!("{j},{},{},{l}\n", p.direction, p.slab));
        }
    }
    s
}

pub fn traject(ctx: &Context) -> Result<(Value, Outcome)> {
    let cfg = &ctx.cfg;
    let data = cfg.initial_data()?;
    let v = base_temperature(ctx, &data)?;
    let speed = cfg.model.speed(v.as_ref())?;
    let arrival = solve_arrival(&data.k0, &speed, cfg.run.horizon)?;
    let probes = if cfg.diagnostics.probes.is_empty() {
        front_probes(&arrival, 0.9 * cfg.run.horizon, cfg.diagnostics.probe_count)
    } else {
        cfg.diagnostics.probes.clone()
    };
    let ex = Extractor::new(&arrival, &speed);
    let mut list = Vec::new();
    for (i, p) in probes.iter().enumerate() {
        let entry = match ex.extract(p) {
            Ok(traj) => {
                let cert = ex.certify(&traj)?;
                let unit = reparametrize_unit_speed(&traj, &speed)?;
                let file = format!("trajectory_{i:02}.csv");
                traj.write_csv(std::fs::File::create(ctx.out.join(&file))?)?;
                json!({
                    "probe": p,
                    "file": file,
                    "samples": traj.len(),
                    "start": traj.start(),
                    "end": traj.end(),
                    "certificate": cert,
                    "unitSpeedDefect": unit_speed_defect(&unit),
                    "directionHolder": direction_holder_seminorm(&traj, 0.25).ok(),
                })
            }
            Err(e) => json!({"probe": p, "error": {"kind": e.kind(), "message": e.to_string()}}),
        };
        list.push(entry);
    }
    let m = manifest("traject", cfg, ctx.seed, json!({"trajectories": list}));
    write_json(&ctx.out.join("traject.json"), &m)?;
    Ok((m, Outcome::Done))
}

pub fn stability(ctx: &Context) -> Result<(Value, Outcome)> {
    let cfg = &ctx.cfg;
    let data = cfg.initial_data()?;
    let opts = cfg.coupling_options()?;
    let table = stability_experiment(&data, &cfg.model, &opts, &cfg.smoothing_scales())?;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.scale),
                num(r.sup_difference),
                r.iterations.to_string(),
                status_name(r.status).as_str().unwrap_or("").to_string(),
            ]
        })
        .collect();
    write_csv(
        &ctx.out.join("stability.csv"),
        &["scale", "supDifference", "iterations", "status"],
        &rows,
    )?;
    let m = manifest("stability", cfg, ctx.seed, serde_json::to_value(&table)?);
    write_json(&ctx.out.join("stability.json"), &m)?;
    Ok((m, Outcome::Done))
}

pub fn report(ctx: &Context) -> Result<(Value, Outcome)> {
    let cfg = &ctx.cfg;
    if cfg.run.eikonal_only {
        let data = cfg.initial_data()?;
        let v = base_temperature(ctx, &data)?;
        let arrival = base_arrival(ctx, &data, v.as_ref())?;
        let (perims, rows) = perimeter_rows(&arrival, cfg.run.horizon)?;
        write_csv(&ctx.out.join("perimeter.csv"), &["time", "coarea", "contour"], &rows)?;
        let mut results = arrival_summary(&arrival);
        results["perimeter"] = Value::Array(perims);
        let m = manifest("report", cfg, ctx.seed, results);
        write_json(&ctx.out.join("report.json"), &m)?;
        return Ok((m, Outcome::Done));
    }
    let (state, data) = run_coupled(ctx)?;
    let (perims, rows) = perimeter_rows(&state.z, cfg.run.horizon)?;
    write_csv(&ctx.out.join("perimeter.csv"), &["time", "coarea", "contour"], &rows)?;
    let res_rows: Vec<Vec<String>> = state
        .residuals
        .iter()
        .enumerate()
        .map(|(k, r)| vec![(k + 1).to_string(), num(*r)])
        .collect();
    write_csv(&ctx.out.join("residuals.csv"), &["iteration", "residual"], &res_rows)?;
    let temp = temperature_summary(&state.v, &data, cfg.model.kappa, ctx.seed)?;
    let moduli = &temp["moduli"];
    let mod_rows: Vec<Vec<String>> = ["supNorm", "spaceLogLip", "spaceHolderHalf", "timeHolderLog"]
        .iter()
        .map(|k| vec![k.to_string(), moduli[*k].as_f64().map(num).unwrap_or_default()])
        .collect();
    write_csv(&ctx.out.join("moduli.csv"), &["modulus", "value"], &mod_rows)?;
    let mut results = coupled_results(&state);
    results["arrival"] = arrival_summary(&state.z);
    results["perimeter"] = Value::Array(perims);
    results["temperature"] = temp;
    let m = manifest("report", cfg, ctx.seed, results);
    write_json(&ctx.out.join("report.json"), &m)?;
    Ok((m, outcome(&state)))
}

pub fn dispatch(name: &str, ctx: &Context) -> Result<(Value, Outcome)> {
    match name {
        "eikonal" => eikonal(ctx),
        "heat" => heat(ctx),
        "couple" => couple(ctx),
        "diagnose" => diagnose(ctx),
        "traject" => traject(ctx),
        "stability" => stability(ctx),
        "report" => report(ctx),
        other => Err(FlowError::InvalidArgument(format!("unknown subcommand {other:?}"))),
    }
}
