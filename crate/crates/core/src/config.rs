//! Scenario configuration: JSON schema, validation and assembly of the
//! solver inputs.
//!
//! Validation reports every violation at once, each with a field path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::{CouplingOptions, GeometryOptions, InitialData};
use crate::eikonal::{Formula, VelocityModel};
use crate::error::{ConfigViolation, FlowError, Result};
use crate::geometry::paraboloid_ladder;
use crate::grid::{self, GridSpec, Point, RegionMask, ScalarField, MIN_NODES};
use crate::heat::HeatOptions;
use crate::io;

/// Environment variable overriding `run.seed`.
pub const SEED_ENV: &str = "FRONTFLOW_SEED";
pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub grid: GridBlock,
    pub initial_set: InitialSet,
    pub v0: V0Block,
    pub model: VelocityModel,
    pub run: RunBlock,
    #[serde(default)]
    pub diagnostics: DiagnosticsBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GridBlock {
    pub dim: usize,
    /// Nodes per axis.
    pub shape: usize,
    pub half_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "camelCase")]
pub enum ShapeSpec {
    Disk {
        #[serde(default)]
        center: [f64; 3],
        radius: f64,
    },
    #[serde(rename_all = "camelCase")]
    Square {
        #[serde(default)]
        center: [f64; 3],
        half_side: f64,
    },
    Union { parts: Vec<ShapeSpec> },
}

impl ShapeSpec {
    pub fn contains(&self, p: &Point) -> bool {
        match self {
            ShapeSpec::Disk { center, radius } => grid::dist(p, center) <= *radius,
            ShapeSpec::Square { center, half_side } => {
                (0..3).all(|a| (p[a] - center[a]).abs() <= *half_side)
            }
            ShapeSpec::Union { parts } => parts.iter().any(|s| s.contains(p)),
        }
    }

    /// Largest `|x|` over the shape.
    pub fn extent(&self, dim: usize) -> f64 {
        match self {
            ShapeSpec::Disk { center, radius } => grid::norm(center) + radius,
            ShapeSpec::Square { center, half_side } => {
                grid::norm(center) + half_side * (dim as f64).sqrt()
            }
            ShapeSpec::Union { parts } => parts.iter().map(|s| s.extent(dim)).fold(0.0, f64::max),
        }
    }

    fn check(&self, path: &str, out: &mut Vec<ConfigViolation>) {
        match self {
            ShapeSpec::Disk { radius, .. } if !(*radius > 0.0) => {
                push(out, &format!("{path}.radius"), "must be positive")
            }
            ShapeSpec::Square { half_side, .. } if !(*half_side > 0.0) => {
                push(out, &format!("{path}.halfSide"), "must be positive")
            }
            ShapeSpec::Union { parts } => {
                if parts.is_empty() {
                    push(out, &format!("{path}.parts"), "union needs at least one part");
                }
                for (i, p) in parts.iter().enumerate() {
                    p.check(&format!("{path}.parts[{i}]"), out);
                }
            }
            _ => {}
        }
    }
}

// `flatten` rules out `deny_unknown_fields` here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InitialSet {
    #[serde(flatten)]
    pub shape: ShapeSpec,
    /// Interior-ball radius `K0` must satisfy.
    pub r0: f64,
}

/// Initial temperature: a closed form or a field file stem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct V0Block {
    #[serde(default)]
    pub formula: Option<V0Formula>,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", deny_unknown_fields)]
pub enum V0Formula {
    Constant {
        value: f64,
    },
    /// `base + amplitude * exp(-|x - center|^2 / width^2)`.
    Gaussian {
        #[serde(default)]
        base: f64,
        amplitude: f64,
        #[serde(default)]
        center: [f64; 3],
        width: f64,
    },
    /// `base + slope · x`.
    Plane {
        #[serde(default)]
        base: f64,
        slope: [f64; 3],
    },
    /// `base + amplitude * sin(k · x)`.
    Wave {
        #[serde(default)]
        base: f64,
        amplitude: f64,
        wavevector: [f64; 3],
    },
    Sum {
        terms: Vec<V0Formula>,
    },
}

impl V0Formula {
    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            V0Formula::Constant { value } => *value,
            V0Formula::Gaussian {
                base,
                amplitude,
                center,
                width,
            } => base + amplitude * (-grid::dist(p, center).powi(2) / (width * width)).exp(),
            V0Formula::Plane { base, slope } => base + grid::dot(slope, p),
            V0Formula::Wave {
                base,
                amplitude,
                wavevector,
            } => base + amplitude * grid::dot(wavevector, p).sin(),
            V0Formula::Sum { terms } => terms.iter().map(|t| t.eval(p)).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunBlock {
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Slice spacing; defaults to `h/2`.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Near-field cutoff; defaults to `(2h)^2`.
    #[serde(default)]
    pub cutoff: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "one")]
    pub damping: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Front-only scenarios skip the heat truncation rule.
    #[serde(default)]
    pub eikonal_only: bool,
    /// Also iterate from the zero seed and report the disagreement.
    #[serde(default)]
    pub second_seed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LadderSpec {
    pub c_min: f64,
    pub ratio: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DiagnosticsBlock {
    /// Cone apertures checked on `K0` by `diagnose`.
    #[serde(default = "default_cone_ladder")]
    pub cone_rho_ladder: Vec<f64>,
    #[serde(default = "default_delta")]
    pub paraboloid_delta: f64,
    #[serde(default = "default_paraboloid_ladder")]
    pub paraboloid_ladder: LadderSpec,
    #[serde(default = "default_axes")]
    pub axes: usize,
    #[serde(default = "default_fraction")]
    pub min_pass_fraction: f64,
    /// Run the geometry certificate after convergence.
    #[serde(default)]
    pub geometry_certificate: bool,
    /// Mollification scales for `stability`, in units of `h`.
    #[serde(default = "default_scales")]
    pub smoothing_scales: Vec<f64>,
    /// End points of extremal trajectories for `traject`.
    #[serde(default)]
    pub probes: Vec<[f64; 3]>,
    /// Number of extra probes spread on `Γ(T)` when `probes` is empty.
    #[serde(default = "default_probe_count")]
    pub probe_count: usize,
}

impl Default for DiagnosticsBlock {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

fn default_tol() -> f64 {
    1e-5
}
fn default_max_iter() -> usize {
    50
}
fn one() -> f64 {
    1.0
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_cone_ladder() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}
fn default_delta() -> f64 {
    0.25
}
fn default_paraboloid_ladder() -> LadderSpec {
    LadderSpec {
        c_min: 0.25,
        ratio: 2f64.powf(0.25),
        count: 40,
    }
}
fn default_axes() -> usize {
    32
}
fn default_fraction() -> f64 {
    0.98
}
fn default_scales() -> Vec<f64> {
    vec![8.0, 4.0, 2.0]
}
fn default_probe_count() -> usize {
    20
}

fn push(out: &mut Vec<ConfigViolation>, path: &str, message: &str) {
    out.push(ConfigViolation {
        path: path.into(),
        message: message.into(),
    });
}

/// Parses and validates; schema errors carry the JSON path.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        FlowError::Config(vec![ConfigViolation {
            path: if path.is_empty() { ".".into() } else { path },
            message: e.into_inner().to_string(),
        }])
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates a config file; relative `v0.file` paths are
/// resolved against the config's directory.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    if let Some(f) = &cfg.v0.file {
        if f.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.v0.file = Some(dir.join(f));
            }
        }
    }
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn spacing(&self) -> f64 {
        2.0 * self.grid.half_width / self.grid.shape as f64
    }

    /// Bound on `|x|` over every `K(t)`, `t <= T`: the extent of `K0` plus `B T`.
    pub fn front_extent(&self) -> f64 {
        self.initial_set.shape.extent(self.grid.dim) + self.model.b * self.run.horizon
    }

    /// Every violated rule, in schema order.
    pub fn violations(&self) -> Vec<ConfigViolation> {
        let mut out = Vec::new();
        let g = &self.grid;
        if !(2..=3).contains(&g.dim) {
            push(&mut out, "grid.dim", "must be 2 or 3");
        }
        if g.shape < MIN_NODES {
            push(&mut out, "grid.shape", &format!("need at least {MIN_NODES} nodes per axis"));
        }
        if !(g.half_width > 0.0 && g.half_width.is_finite()) {
            push(&mut out, "grid.halfWidth", "must be positive");
        }
        self.initial_set.shape.check("initialSet", &mut out);
        let h = self.spacing();
        if !(self.initial_set.r0 >= 4.0 * h) {
            push(
                &mut out,
                "initialSet.r0",
                &format!("ball radius r0 = {} must be at least 4h = {}", self.initial_set.r0, 4.0 * h),
            );
        }
        match (&self.v0.formula, &self.v0.file) {
            (None, None) => push(&mut out, "v0", "give either formula or file"),
            (Some(_), Some(_)) => push(&mut out, "v0", "give only one of formula and file"),
            _ => {}
        }
        let m = &self.model;
        if !(m.a > 0.0) {
            push(&mut out, "model.A", &format!("positivity: the speed lower bound A must be > 0, got {}", m.a));
        }
        if !(m.b >= m.a) {
            push(&mut out, "model.B", &format!("need B >= A, got B = {}", m.b));
        }
        if m.a > 0.0 && m.b >= m.a {
            if let Err(e) = m.validate() {
                push(&mut out, "model.law", &e.to_string());
            }
        }
        if let crate::eikonal::SpeedLaw::AnalyticFormula { formula } = &m.law {
            if let Formula::Sine { frequency, .. } = formula {
                if !frequency.is_finite() {
                    push(&mut out, "model.law.formula.frequency", "must be finite");
                }
            }
        }
        let r = &self.run;
        if !(r.horizon > 0.0 && r.horizon.is_finite()) {
            push(&mut out, "run.T", "must be positive");
        }
        if let Some(dt) = r.dt {
            if !(dt > 0.0 && dt <= h) {
                push(&mut out, "run.dt", &format!("slice spacing must lie in (0, h = {h}]"));
            }
        }
        if let Some(c) = r.cutoff {
            if !(c >= 0.0 && c < r.horizon) {
                push(&mut out, "run.cutoff", "must lie in [0, T)");
            }
        }
        if !(r.tol > 0.0) {
            push(&mut out, "run.tol", "must be positive");
        }
        if r.max_iter == 0 {
            push(&mut out, "run.maxIter", "must be at least 1");
        }
        if !(r.damping > 0.0 && r.damping <= 1.0) {
            push(&mut out, "run.damping", "must lie in (0, 1]");
        }
        if r.horizon > 0.0 && g.half_width > 0.0 {
            let mx = self.front_extent();
            let margin = g.half_width - 2.0 * h;
            if mx > margin {
                push(
                    &mut out,
                    "grid.halfWidth",
                    &format!("fronts reach |x| = {mx} but the usable domain ends at {margin}"),
                );
            }
            let need = mx + 6.0 * r.horizon.sqrt();
            if !r.eikonal_only && g.half_width < need {
                push(
                    &mut out,
                    "grid.halfWidth",
                    &format!(
                        "heat truncation rule: halfWidth >= M + 6 sqrt(T) = {need} (M = {mx}, T = {}), got {}",
                        r.horizon, g.half_width
                    ),
                );
            }
        }
        let d = &self.diagnostics;
        if d.cone_rho_ladder.iter().any(|&x| !(x > 0.0)) {
            push(&mut out, "diagnostics.coneRhoLadder", "apertures must be positive");
        }
        if !(d.paraboloid_delta > 0.0 && d.paraboloid_delta < 1.0) {
            push(&mut out, "diagnostics.paraboloidDelta", "must lie in (0, 1)");
        }
        let l = &d.paraboloid_ladder;
        if !(l.c_min > 0.0 && l.ratio > 1.0 && l.count >= 1) {
            push(&mut out, "diagnostics.paraboloidLadder", "need cMin > 0, ratio > 1, count >= 1");
        }
        if d.axes < 8 {
            push(&mut out, "diagnostics.axes", "need at least 8 search axes");
        }
        if !(d.min_pass_fraction > 0.0 && d.min_pass_fraction <= 1.0) {
            push(&mut out, "diagnostics.minPassFraction", "must lie in (0, 1]");
        }
        let s = &d.smoothing_scales;
        if s.len() < 3 || s.windows(2).any(|w| w[1] >= w[0]) || s.iter().any(|&x| x < 0.0) {
            push(
                &mut out,
                "diagnostics.smoothingScales",
                "need at least 3 strictly decreasing nonnegative scales",
            );
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(FlowError::Config(v))
        }
    }

    /// `run.seed`, or `FRONTFLOW_SEED` when set.
    pub fn effective_seed(&self) -> Result<u64> {
        match std::env::var(SEED_ENV) {
            Ok(s) => s.trim().parse().map_err(|_| {
                FlowError::Config(vec![ConfigViolation {
                    path: SEED_ENV.into(),
                    message: format!("not an unsigned integer: {s:?}"),
                }])
            }),
            Err(_) => Ok(self.run.seed),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::cell_centered(self.grid.dim, self.grid.shape, self.grid.half_width)
    }

    pub fn initial_mask(&self) -> Result<RegionMask> {
        let g = self.grid_spec()?;
        let s = &self.initial_set.shape;
        Ok(RegionMask::from_fn(&g, |p| s.contains(p)))
    }

    pub fn initial_temperature(&self) -> Result<ScalarField> {
        let g = self.grid_spec()?;
        match (&self.v0.formula, &self.v0.file) {
            (Some(f), None) => Ok(ScalarField::from_fn(&g, |p| f.eval(p))),
            (None, Some(path)) => {
                let (f, _) = io::read_scalar(path)?;
                f.grid.same_as(&g)?;
                Ok(f)
            }
            _ => Err(FlowError::InvalidArgument("v0 needs exactly one source".into())),
        }
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        InitialData::new(self.initial_mask()?, self.initial_temperature()?)
    }

    pub fn heat_options(&self) -> Result<HeatOptions> {
        let g = self.grid_spec()?;
        let mut o = HeatOptions::for_grid(&g);
        if let Some(dt) = self.run.dt {
            o.dt = dt;
        }
        if let Some(c) = self.run.cutoff {
            o.cutoff = c;
        }
        Ok(o)
    }

    pub fn geometry_options(&self) -> GeometryOptions {
        let d = &self.diagnostics;
        let l = &d.paraboloid_ladder;
        GeometryOptions {
            delta: d.paraboloid_delta,
            fractions: vec![0.25, 0.5, 0.75, 1.0],
            ladder: paraboloid_ladder(l.c_min, l.ratio, l.count),
            axes: d.axes,
            min_fraction: d.min_pass_fraction,
            cover_radius: self.front_extent(),
        }
    }

    pub fn coupling_options(&self) -> Result<CouplingOptions> {
        let g = self.grid_spec()?;
        let mut o = CouplingOptions::new(&g, self.run.horizon);
        o.tol = self.run.tol;
        o.max_iter = self.run.max_iter;
        o.damping = self.run.damping;
        o.heat = self.heat_options()?;
        o.second_seed = self.run.second_seed;
        o.residual_seed = self.effective_seed()?;
        if self.diagnostics.geometry_certificate {
            o.geometry = Some(self.geometry_options());
        }
        Ok(o)
    }

    /// Stability scales in length units.
    pub fn smoothing_scales(&self) -> Vec<f64> {
        let h = self.spacing();
        self.diagnostics.smoothing_scales.iter().map(|s| s * h).collect()
    }
}

/// A number in a manifest with its units and whether it was configured or
/// computed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quantity {
    pub value: serde_json::Value,
    pub units: &'static str,
    pub source: &'static str,
}

impl Quantity {
    pub fn computed(value: impl Serialize, units: &'static str) -> Self {
        Self {
            value: serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
            units,
            source: "computed",
        }
    }

    pub fn configured(value: impl Serialize, units: &'static str) -> Self {
        Self {
            value: serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
            units,
            source: "configured",
        }
    }
}
