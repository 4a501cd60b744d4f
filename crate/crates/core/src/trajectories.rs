//! Extremal trajectories: backward characteristics of the arrival field,
//! their unit-speed reparametrisation, and the regularity quantities
//! measured on them.

use std::io::Write;

use serde::Serialize;

use crate::edt;
use crate::eikonal::{ArrivalField, Speed};
use crate::error::{FlowError, Result};
use crate::grid::{self, central_gradient, norm, sub, Point, ScalarField, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum TrajectoryKind {
    Extremal,
    UnitSpeed,
}

/// A sampled path `s -> x(s)` with finite-difference speeds and directions.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub speeds: Vec<f64>,
    pub directions: Vec<Point>,
    pub kind: TrajectoryKind,
}

impl Trajectory {
    /// Builds a trajectory from samples; speeds and directions come from
    /// central differences of the points (one-sided at the ends).
    pub fn from_points(dim: usize, times: Vec<f64>, points: Vec<Point>, kind: TrajectoryKind) -> Result<Self> {
        if times.len() != points.len() || times.len() < 2 {
            return Err(FlowError::InvalidArgument(
                "a trajectory needs at least two samples".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FlowError::InvalidArgument(
                "trajectory times must increase".into(),
            ));
        }
        let n = times.len();
        let mut speeds = Vec::with_capacity(n);
        let mut directions = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            let d = sub(&points[b], &points[a]);
            let l = norm(&d);
            speeds.push(l / (times[b] - times[a]));
            directions.push(if l > 0.0 {
                [d[0] / l, d[1] / l, d[2] / l]
            } else {
                [0.0; 3]
            });
        }
        Ok(Self {
            dim,
            times,
            points,
            speeds,
            directions,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    /// Piecewise-linear position at parameter `s` (clamped to the range).
    pub fn position(&self, s: f64) -> Point {
        let ts = &self.times;
        if s <= ts[0] {
            return self.points[0];
        }
        if s >= self.end() {
            return *self.points.last().expect("nonempty");
        }
        let k = ts.partition_point(|&x| x <= s) - 1;
        let w = (s - ts[k]) / (ts[k + 1] - ts[k]);
        let (p, q) = (&self.points[k], &self.points[k + 1]);
        [
            p[0] + w * (q[0] - p[0]),
            p[1] + w * (q[1] - p[1]),
            p[2] + w * (q[2] - p[2]),
        ]
    }

    /// CSV with columns `s, x1..xN, speed, dir1..dirN`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let axes: Vec<usize> = (1..=self.dim).collect();
        let mut head = vec!["s".to_string()];
        head.extend(axes.iter().map(|a| format!("x{a}")));
        head.push("speed".into());
        head.extend(axes.iter().map(|a| format!("dir{a}")));
        writeln!(w, "{}", head.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![format!("{:.17e}", self.times[i])];
            row.extend((0..self.dim).map(|a| format!("{:.17e}", self.points[i][a])));
            row.push(format!("{:.17e}", self.speeds[i]));
            row.extend((0..self.dim).map(|a| format!("{:.17e}", self.directions[i][a])));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Worst-case deviations of an extremal trajectory from the exact
/// characteristics.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExtremalCertificate {
    /// `max |z(x(s)) - s|`.
    pub max_time_defect: f64,
    /// Range of `|x'(s)| / c(x(s), s)`.
    pub min_speed_ratio: f64,
    pub max_speed_ratio: f64,
}

/// Reusable extraction state for one arrival field: gradient and the signed
/// distance of `K0` are computed once.
pub struct Extractor<'a> {
    arrival: &'a ArrivalField,
    speed: &'a dyn Speed,
    grad: VectorField,
    source_sdf: ScalarField,
}

impl<'a> Extractor<'a> {
    pub fn new(arrival: &'a ArrivalField, speed: &'a dyn Speed) -> Self {
        Self {
            arrival,
            speed,
            grad: central_gradient(&arrival.z),
            source_sdf: edt::signed_distance(&arrival.source),
        }
    }

    fn z_at(&self, p: &Point) -> Result<f64> {
        self.arrival.z.sample(p).ok_or(FlowError::ExitedDomain(*p))
    }

    fn unit_normal(&self, p: &Point) -> Result<Point> {
        let (_, b) = self.speed.bounds();
        let g = self.grad.sample(p).ok_or(FlowError::ExitedDomain(*p))?;
        let l = norm(&g);
        if !(l >= 1.0 / (2.0 * b)) {
            return Err(FlowError::Degenerate(format!(
                "gradient norm {l:.3e} below 1/(2B) at {p:?}"
            )));
        }
        Ok([g[0] / l, g[1] / l, g[2] / l])
    }

    /// Integrates `x' = c(x, s) Dz/|Dz|` backwards from `(x_end, z(x_end))`
    /// with RK2 until `z <= h/A`, then projects onto the boundary of `K0`.
    pub fn extract(&self, x_end: &Point) -> Result<Trajectory> {
        let g = self.arrival.grid();
        let h = g.spacing();
        let (a, b) = self.speed.bounds();
        let z_end = self.z_at(x_end)?;
        if !(z_end > 0.0 && z_end < self.arrival.horizon) {
            return Err(FlowError::InvalidArgument(format!(
                "end point needs 0 < z < T, got z = {z_end}"
            )));
        }
        let d0 = -self.source_sdf.sample(x_end).unwrap_or(f64::NEG_INFINITY);
        if !(d0 > 4.0 * h) {
            return Err(FlowError::InvalidArgument(format!(
                "end point lies within 4h of the initial set (distance {d0:.4})"
            )));
        }
        let ds = h / (2.0 * b);
        let stop = h / a;
        let mut s = z_end;
        let mut x = *x_end;
        let mut times = vec![s];
        let mut points = vec![x];
        let max_steps = (4.0 * z_end / ds) as usize + 100;
        for _ in 0..max_steps {
            if self.z_at(&x)? <= stop {
                break;
            }
            let step = ds.min(s);
            let n1 = self.unit_normal(&x)?;
            let c1 = self.speed.at(&x, s);
            let xm = grid::add_scaled(&x, -0.5 * step * c1, &n1);
            let n2 = self.unit_normal(&xm)?;
            let c2 = self.speed.at(&xm, s - 0.5 * step);
            x = grid::add_scaled(&x, -step * c2, &n2);
            s -= step;
            if !g.contains_point(&x) {
                return Err(FlowError::ExitedDomain(x));
            }
            times.push(s);
            points.push(x);
            if s <= 0.0 {
                break;
            }
        }
        // Final stretch: bisection along the last direction onto ∂K0.
        let last = *points.last().expect("nonempty");
        let sdf = |p: &Point| self.source_sdf.sample(p).unwrap_or(f64::NEG_INFINITY);
        if sdf(&last) < 0.0 && s > 0.0 {
            let n = self.unit_normal(&last).unwrap_or_else(|_| {
                let d = sub(&points[points.len().saturating_sub(2)], &last);
                let l = norm(&d).max(f64::MIN_POSITIVE);
                [-d[0] / l, -d[1] / l, -d[2] / l]
            });
            let mut reach = 4.0 * h;
            let far = grid::add_scaled(&last, -reach, &n);
            if sdf(&far) >= 0.0 {
                let (mut lo, mut hi) = (0.0, reach);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if sdf(&grid::add_scaled(&last, -mid, &n)) >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                reach = hi;
                // March the straight segment in pieces of at most h/4, each
                // timed by the speed at its midpoint.
                let pieces = (reach / (0.25 * h)).ceil() as usize;
                let dl = reach / pieces.max(1) as f64;
                let mut t = s;
                for k in 0..pieces {
                    let mid = grid::add_scaled(&last, -(k as f64 + 0.5) * dl, &n);
                    let c0 = self.speed.at(&mid, t);
                    let c = self.speed.at(&mid, t - 0.5 * dl / c0);
                    t -= dl / c;
                    times.push(t);
                    points.push(grid::add_scaled(&last, -(k as f64 + 1.0) * dl, &n));
                }
            }
        }
        times.reverse();
        points.reverse();
        Trajectory::from_points(g.dim(), times, points, TrajectoryKind::Extremal)
    }

    /// Time defect and speed ratios along an extremal path.
    pub fn certify(&self, traj: &Trajectory) -> Result<ExtremalCertificate> {
        let mut cert = ExtremalCertificate {
            max_time_defect: 0.0,
            min_speed_ratio: f64::INFINITY,
            max_speed_ratio: 0.0,
        };
        for i in 0..traj.len() {
            let p = &traj.points[i];
            let z = self.z_at(p)?;
            cert.max_time_defect = cert.max_time_defect.max((z - traj.times[i]).abs());
        }
        // Segment speeds against the speed at segment midpoints.
        for i in 0..traj.len() - 1 {
            let (p, q) = (&traj.points[i], &traj.points[i + 1]);
            let dt = traj.times[i + 1] - traj.times[i];
            let mid = [
                0.5 * (p[0] + q[0]),
                0.5 * (p[1] + q[1]),
                0.5 * (p[2] + q[2]),
            ];
            let c = self.speed.at(&mid, traj.times[i] + 0.5 * dt);
            let r = norm(&sub(q, p)) / dt / c;
            cert.min_speed_ratio = cert.min_speed_ratio.min(r);
            cert.max_speed_ratio = cert.max_speed_ratio.max(r);
        }
        Ok(cert)
    }
}

/// Points of `{z = t}` along `count` rays from the centroid of `K0`, found
/// by marching in steps of `h/2` and bisecting the first crossing. Rays
/// that never cross inside the grid are skipped.
pub fn front_probes(arrival: &ArrivalField, t: f64, count: usize) -> Vec<Point> {
    let g = arrival.grid();
    let h = g.spacing();
    let inside: Vec<usize> = (0..g.len()).filter(|&i| arrival.source.inside[i]).collect();
    if inside.is_empty() {
        return Vec::new();
    }
    let mut c = [0.0; 3];
    for &i in &inside {
        c = grid::add_scaled(&c, 1.0 / inside.len() as f64, &g.point(i));
    }
    let z = |p: &Point| arrival.z.sample(p);
    crate::geometry::direction_net(g.dim(), count)
        .into_iter()
        .filter_map(|d| {
            let mut r = 0.0;
            let mut prev = z(&c)?;
            loop {
                let r1 = r + 0.5 * h;
                let v = z(&grid::add_scaled(&c, r1, &d))?;
                if prev <= t && v > t {
                    let (mut lo, mut hi) = (r, r1);
                    for _ in 0..50 {
                        let mid = 0.5 * (lo + hi);
                        if z(&grid::add_scaled(&c, mid, &d))? <= t {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    return Some(grid::add_scaled(&c, 0.5 * (lo + hi), &d));
                }
                prev = v;
                r = r1;
            }
        })
        .collect()
}

/// One-shot form of [`Extractor::extract`].
pub fn extremal_path(arrival: &ArrivalField, speed: &dyn Speed, x_end: &Point) -> Result<Trajectory> {
    Extractor::new(arrival, speed).extract(x_end)
}

/// New parameter `σ` with `dσ = c(x(s), s) ds` (trapezoid rule), so the
/// path is traversed at unit speed; `σ` starts at the original start time.
pub fn reparametrize_unit_speed(traj: &Trajectory, speed: &dyn Speed) -> Result<Trajectory> {
    let (a, _) = speed.bounds();
    if let Some(v) = traj.speeds.iter().find(|&&v| !(v >= 0.5 * a)) {
        return Err(FlowError::InvalidArgument(format!(
            "trajectory speed {v} below A/2"
        )));
    }
    // `dσ = c ds`, with `c` at segment midpoints in space and time.
    let mut sigma = Vec::with_capacity(traj.len());
    sigma.push(traj.times[0]);
    for i in 1..traj.len() {
        let (p, q) = (&traj.points[i - 1], &traj.points[i]);
        let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])];
        let ds = traj.times[i] - traj.times[i - 1];
        sigma.push(sigma[i - 1] + speed.at(&mid, traj.times[i - 1] + 0.5 * ds) * ds);
    }
    Trajectory::from_points(traj.dim, sigma, traj.points.clone(), TrajectoryKind::UnitSpeed)
}

/// Largest deviation of the finite-difference speed from one.
pub fn unit_speed_defect(traj: &Trajectory) -> f64 {
    traj.times
        .windows(2)
        .zip(traj.points.windows(2))
        .map(|(t, p)| (norm(&sub(&p[1], &p[0])) / (t[1] - t[0]) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `(s2 - s1) - |y(s2) - y(s1)|`, floored at zero.
pub fn chord_arc_defect(traj: &Trajectory, s1: f64, s2: f64) -> f64 {
    let chord = norm(&sub(&traj.position(s2), &traj.position(s1)));
    ((s2 - s1) - chord).max(0.0)
}

/// `|y((s1 + s2)/2) - (y(s1) + y(s2))/2|`.
pub fn midpoint_defect(traj: &Trajectory, s1: f64, s2: f64) -> f64 {
    let (p, q) = (traj.position(s1), traj.position(s2));
    let m = traj.position(0.5 * (s1 + s2));
    norm(&[
        m[0] - 0.5 * (p[0] + q[0]),
        m[1] - 0.5 * (p[1] + q[1]),
        m[2] - 0.5 * (p[2] + q[2]),
    ])
}

/// `sup_{i<j} |d_j - d_i| / |s_j - s_i|^exponent`, with unit directions `d`
/// from differences of consecutive points, located at segment midpoints.
pub fn direction_holder_seminorm(traj: &Trajectory, exponent: f64) -> Result<f64> {
    if traj.len() < 8 {
        return Err(FlowError::InvalidArgument(
            "seminorm needs at least 8 samples".into(),
        ));
    }
    if !(exponent > 0.0 && exponent < 1.0) {
        return Err(FlowError::InvalidArgument(format!(
            "exponent must lie in (0, 1), got {exponent}"
        )));
    }
    let mut mids = Vec::with_capacity(traj.len() - 1);
    let mut dirs = Vec::with_capacity(traj.len() - 1);
    for i in 0..traj.len() - 1 {
        let d = sub(&traj.points[i + 1], &traj.points[i]);
        let l = norm(&d);
        if l == 0.0 {
            continue;
        }
        mids.push(0.5 * (traj.times[i] + traj.times[i + 1]));
        dirs.push([d[0] / l, d[1] / l, d[2] / l]);
    }
    let mut best = 0.0f64;
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            let num = norm(&sub(&dirs[j], &dirs[i]));
            best = best.max(num / (mids[j] - mids[i]).powf(exponent));
        }
    }
    Ok(best)
}
