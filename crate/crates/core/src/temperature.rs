//! Time-sliced temperature fields.

use serde::Serialize;

use crate::error::{FlowError, Result};
use crate::grid::{GridSpec, Point, ScalarField};

/// Empirical regularity constants of a temperature field.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Moduli {
    pub sup_norm: f64,
    pub space_log_lip: f64,
    pub space_holder_half: f64,
    pub time_holder_log: f64,
}

/// Temperature sampled on a grid at increasing slice times `t_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemperatureField {
    pub grid: GridSpec,
    pub slice_times: Vec<f64>,
    pub slices: Vec<Vec<f64>>,
    pub moduli: Option<Moduli>,
    /// Per-slice bound on the contribution dropped by the near-field cutoff.
    pub cutoff_error_bounds: Vec<f64>,
}

impl TemperatureField {
    pub fn new(grid: GridSpec, slice_times: Vec<f64>, slices: Vec<Vec<f64>>) -> Result<Self> {
        if slice_times.is_empty() || slice_times.len() != slices.len() {
            return Err(FlowError::ShapeMismatch(format!(
                "{} slice times for {} slices",
                slice_times.len(),
                slices.len()
            )));
        }
        if slice_times.windows(2).any(|w| w[1] <= w[0]) || slice_times[0] < 0.0 {
            return Err(FlowError::InvalidArgument(
                "slice times must be nonnegative and strictly increasing".into(),
            ));
        }
        if let Some(s) = slices.iter().find(|s| s.len() != grid.len()) {
            return Err(FlowError::ShapeMismatch(format!(
                "slice with {} values for {} nodes",
                s.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            slice_times,
            slices,
            moduli: None,
            cutoff_error_bounds: Vec::new(),
        })
    }

    /// Uniform slices `k * dt`, `k = 0..=ceil(T/dt)`, the last one clamped to `T`.
    pub fn uniform_times(dt: f64, horizon: f64) -> Vec<f64> {
        let n = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
        (0..=n).map(|k| (k as f64 * dt).min(horizon)).collect()
    }

    /// Same value at every slice.
    pub fn constant_in_time(field: &ScalarField, slice_times: Vec<f64>) -> Self {
        let slices = vec![field.values.clone(); slice_times.len()];
        Self {
            grid: field.grid.clone(),
            slice_times,
            slices,
            moduli: None,
            cutoff_error_bounds: Vec::new(),
        }
    }

    pub fn horizon(&self) -> f64 {
        *self.slice_times.last().expect("nonempty")
    }

    pub fn slice(&self, k: usize) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.slices[k].clone(),
        }
    }

    /// Interval index and weight for linear interpolation in time. Times
    /// outside the slice range clamp to the nearest slice.
    #[inline]
    pub fn time_weights(&self, t: f64) -> (usize, usize, f64) {
        let ts = &self.slice_times;
        if t <= ts[0] {
            return (0, 0, 0.0);
        }
        let last = ts.len() - 1;
        if t >= ts[last] {
            return (last, last, 0.0);
        }
        let k = ts.partition_point(|&s| s <= t) - 1;
        let w = (t - ts[k]) / (ts[k + 1] - ts[k]);
        (k, k + 1, w)
    }

    #[inline]
    pub fn node_value(&self, idx: usize, t: f64) -> f64 {
        let (a, b, w) = self.time_weights(t);
        if w == 0.0 {
            self.slices[a][idx]
        } else {
            (1.0 - w) * self.slices[a][idx] + w * self.slices[b][idx]
        }
    }

    /// Multilinear in space, linear in time.
    pub fn sample(&self, p: &Point, t: f64) -> Option<f64> {
        let (nodes, wts, n) = self.grid.stencil(p)?;
        let mut acc = 0.0;
        for c in 0..n {
            if wts[c] != 0.0 {
                acc += wts[c] * self.node_value(nodes[c], t);
            }
        }
        Some(acc)
    }

    /// Largest nodewise difference over all slices; slice times must match.
    pub fn sup_difference(&self, other: &TemperatureField) -> Result<f64> {
        self.grid.same_as(&other.grid)?;
        if self.slice_times != other.slice_times {
            return Err(FlowError::ShapeMismatch("slice times differ".into()));
        }
        Ok(self
            .slices
            .iter()
            .zip(&other.slices)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.slices
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_linearly_in_time() {
        let g = GridSpec::cell_centered(2, 16, 1.0).unwrap();
        let a = ScalarField::constant(&g, 1.0);
        let mut v = TemperatureField::constant_in_time(&a, vec![0.0, 0.5, 1.0]);
        v.slices[1].iter_mut().for_each(|x| *x = 3.0);
        assert_eq!(v.node_value(5, 0.25), 2.0);
        assert_eq!(v.node_value(5, 2.0), 1.0);
        assert_eq!(v.sample(&[0.1, 0.1, 0.0], 0.75).unwrap(), 2.0);
    }

    #[test]
    fn uniform_times_cover_horizon() {
        let t = TemperatureField::uniform_times(0.3, 1.0);
        assert_eq!(t, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        assert_eq!(TemperatureField::uniform_times(0.25, 1.0).len(), 5);
    }
}
