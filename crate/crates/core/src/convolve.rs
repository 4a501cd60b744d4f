//! Separable discrete Gaussian convolution.
//!
//! The kernel is `G(x, t) = (4 pi t)^{-N/2} exp(-|x|^2 / (4t))`, i.e. a
//! Gaussian of standard deviation `sqrt(2t)` per axis, truncated at five
//! standard deviations and renormalised so the discrete weights sum to one.

use crate::grid::{GridSpec, ScalarField};
use crate::par;

/// Truncation radius in standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Values outside the grid are zero (mass leaks out).
    Zero,
    /// Values outside the grid replicate the nearest boundary node; this is
    /// the discrete analogue of a no-flux wall and conserves the mean of
    /// constants exactly.
    Clamp,
}

/// Normalised 1D weights for heat time `t` on spacing `h`, indexed
/// `-radius..=radius`. `t = 0` gives the identity.
#[derive(Clone, Debug)]
pub struct Kernel1d {
    pub radius: usize,
    pub weights: Vec<f64>,
}

impl Kernel1d {
    pub fn new(t: f64, h: f64) -> Self {
        if t <= 0.0 {
            return Self {
                radius: 0,
                weights: vec![1.0],
            };
        }
        let sigma = (2.0 * t).sqrt();
        let radius = ((TRUNCATION_SIGMAS * sigma / h).ceil() as usize).max(1);
        let mut weights: Vec<f64> = (0..=2 * radius)
            .map(|k| {
                let x = (k as f64 - radius as f64) * h;
                (-x * x / (4.0 * t)).exp()
            })
            .collect();
        let s: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= s;
        }
        Self { radius, weights }
    }

    #[inline]
    pub fn at(&self, offset: isize) -> f64 {
        let k = offset + self.radius as isize;
        if k < 0 || k as usize >= self.weights.len() {
            0.0
        } else {
            self.weights[k as usize]
        }
    }
}

fn convolve_line(input: &[f64], out: &mut [f64], k: &Kernel1d, prefix: &[f64], boundary: Boundary) {
    let n = input.len() as isize;
    let r = k.radius as isize;
    for j in 0..n {
        let lo = (j - r).max(0);
        let hi = (j + r).min(n - 1);
        let mut acc = 0.0;
        for i in lo..=hi {
            acc += k.weights[(i - j + r) as usize] * input[i as usize];
        }
        if boundary == Boundary::Clamp {
            // Kernel offsets reaching below index 0 / above n-1 lump onto the
            // edge values; `prefix[m]` is the sum of the first m weights.
            let below = (r - j).clamp(0, 2 * r + 1) as usize;
            let above_start = (n - 1 - j + r + 1).clamp(0, 2 * r + 1) as usize;
            acc += prefix[below] * input[0];
            acc += (prefix[2 * r as usize + 1] - prefix[above_start]) * input[(n - 1) as usize];
        }
        out[j as usize] = acc;
    }
}

/// Convolve `values` along one axis in place.
pub fn convolve_axis(grid: &GridSpec, values: &mut [f64], axis: usize, k: &Kernel1d, boundary: Boundary) {
    if k.radius == 0 {
        return;
    }
    let shape = grid.shape3();
    let strides = grid.strides();
    let n = shape[axis];
    let stride = strides[axis];
    let mut prefix = vec![0.0; k.weights.len() + 1];
    for (i, w) in k.weights.iter().enumerate() {
        prefix[i + 1] = prefix[i] + w;
    }
    // Enumerate line starts: all nodes with coordinate 0 along `axis`.
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let (o1, o2) = (others[0], others[1]);
    let lines = shape[o1] * shape[o2];
    let starts: Vec<usize> = (0..lines)
        .map(|l| (l / shape[o2]) * strides[o1] + (l % shape[o2]) * strides[o2])
        .collect();
    let src: &[f64] = values;
    let results: Vec<Vec<f64>> = par::map(lines, |l| {
        let s = starts[l];
        let line: Vec<f64> = (0..n).map(|i| src[s + i * stride]).collect();
        let mut out = vec![0.0; n];
        convolve_line(&line, &mut out, k, &prefix, boundary);
        out
    });
    for (l, out) in results.into_iter().enumerate() {
        let s = starts[l];
        for (i, v) in out.into_iter().enumerate() {
            values[s + i * stride] = v;
        }
    }
}

/// Replace `field` with `field * G(., t)` using separable passes.
pub fn heat_convolve(field: &mut ScalarField, t: f64, boundary: Boundary) {
    let k = Kernel1d::new(t, field.grid.spacing());
    let grid = field.grid.clone();
    for axis in 0..grid.dim() {
        convolve_axis(&grid, &mut field.values, axis, &k, boundary);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn kernel_variance_matches_heat_time() {
        let h = 0.01;
        let t = 0.02;
        let k = Kernel1d::new(t, h);
        let var: f64 = k
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * ((i as f64 - k.radius as f64) * h).powi(2))
            .sum();
        // Truncation at five sigmas removes ~1e-5 of the variance.
        assert!((var - 2.0 * t).abs() / (2.0 * t) < 1e-4);
    }

    #[test]
    fn clamp_preserves_constants_even_for_wide_kernels() {
        let g = GridSpec::cell_centered(2, 16, 1.0).unwrap();
        let mut f = ScalarField::constant(&g, 3.5);
        heat_convolve(&mut f, 10.0, Boundary::Clamp);
        assert!(f.values.iter().all(|v| (v - 3.5).abs() < 1e-12));
    }

    #[test]
    fn zero_boundary_conserves_interior_mass() {
        let g = GridSpec::cell_centered(2, 64, 2.0).unwrap();
        let mut f = ScalarField::constant(&g, 0.0);
        let c = g.nearest(&[0.0, 0.0, 0.0]).unwrap();
        f.values[c] = 1.0;
        heat_convolve(&mut f, 0.01, Boundary::Zero);
        let m: f64 = f.values.iter().sum();
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn semigroup_property() {
        let g = GridSpec::cell_centered(2, 128, 2.0).unwrap();
        let base = ScalarField::from_fn(&g, |p| (-4.0 * (p[0] * p[0] + 2.0 * p[1] * p[1])).exp());
        let mut a = base.clone();
        heat_convolve(&mut a, 0.01, Boundary::Zero);
        heat_convolve(&mut a, 0.02, Boundary::Zero);
        let mut b = base;
        heat_convolve(&mut b, 0.03, Boundary::Zero);
        let err = a
            .values
            .iter()
            .zip(&b.values)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err < 1e-6, "{err}");
    }
}
