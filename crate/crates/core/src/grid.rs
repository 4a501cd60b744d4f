//! Uniform isotropic grids in two or three dimensions, node-sampled fields,
//! and the upwind/central difference operators used by every solver.
//!
//! Node storage is row-major: axis 0 varies slowest. Two-dimensional grids
//! are stored with a trailing axis of length one, so one code path serves
//! both dimensions.

use serde::{Deserialize, Serialize};

use crate::convolve::{self, Boundary};
use crate::error::{FlowError, Result};
use crate::par;

/// A point in space. Two-dimensional code leaves the last coordinate at zero.
pub type Point = [f64; 3];

/// Minimum number of nodes per axis.
pub const MIN_NODES: usize = 16;

/// Fronts must stay this many cells away from the domain boundary.
pub const MARGIN_CELLS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    shape: [usize; 3],
    spacing: f64,
    origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dim: usize, shape: &[usize], spacing: f64, origin: &[f64]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(FlowError::InvalidGrid(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if shape.len() != dim || origin.len() != dim {
            return Err(FlowError::InvalidGrid(format!(
                "shape and origin need {dim} entries"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(FlowError::InvalidGrid(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        if let Some(n) = shape.iter().find(|&&n| n < MIN_NODES) {
            return Err(FlowError::InvalidGrid(format!(
                "every axis needs at least {MIN_NODES} nodes, got {n}"
            )));
        }
        let mut s = [1usize; 3];
        let mut o = [0.0; 3];
        s[..dim].copy_from_slice(shape);
        o[..dim].copy_from_slice(origin);
        Ok(Self {
            dim,
            shape: s,
            spacing,
            origin: o,
        })
    }

    /// Cell-centred grid of `n` nodes per axis covering `[-half_width, half_width]^dim`.
    pub fn cell_centered(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        let h = 2.0 * half_width / n as f64;
        let o = -half_width + 0.5 * h;
        Self::new(dim, &vec![n; dim], h, &vec![o; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Node counts of the active axes.
    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub fn shape3(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one cell, `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn strides(&self) -> [usize; 3] {
        [self.shape[1] * self.shape[2], self.shape[2], 1]
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] * self.shape[1] + ijk[1]) * self.shape[2] + ijk[2]
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.shape[2];
        let rest = idx / self.shape[2];
        [rest / self.shape[1], rest % self.shape[1], k]
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let ijk = self.unravel(idx);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.origin[a] + ijk[a] as f64 * self.spacing;
        }
        p
    }

    /// Neighbour of `idx` shifted by `delta` along `axis`, if inside the grid.
    #[inline]
    pub fn offset(&self, idx: usize, axis: usize, delta: isize) -> Option<usize> {
        let ijk = self.unravel(idx);
        let j = ijk[axis] as isize + delta;
        if j < 0 || j >= self.shape[axis] as isize {
            return None;
        }
        Some((idx as isize + delta * self.strides()[axis] as isize) as usize)
    }

    /// Node shifted by a full integer offset, if inside the grid.
    pub fn shifted(&self, idx: usize, d: [isize; 3]) -> Option<usize> {
        let ijk = self.unravel(idx);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let j = ijk[a] as isize + d[a];
            if j < 0 || j >= self.shape[a] as isize {
                return None;
            }
            out[a] = j as usize;
        }
        Some(self.index(out))
    }

    /// Number of cells between a node and the nearest domain face.
    pub fn boundary_distance(&self, idx: usize) -> usize {
        let ijk = self.unravel(idx);
        (0..self.dim)
            .map(|a| ijk[a].min(self.shape[a] - 1 - ijk[a]))
            .min()
            .unwrap_or(0)
    }

    /// Continuous index coordinates of a point.
    pub fn fractional_index(&self, p: &Point) -> [f64; 3] {
        let mut f = [0.0; 3];
        for a in 0..self.dim {
            f[a] = (p[a] - self.origin[a]) / self.spacing;
        }
        f
    }

    /// Nearest node to a point, if the point lies within half a cell of the grid.
    pub fn nearest(&self, p: &Point) -> Option<usize> {
        let f = self.fractional_index(p);
        let mut ijk = [0usize; 3];
        for a in 0..self.dim {
            let r = f[a].round();
            if r < 0.0 || r > (self.shape[a] - 1) as f64 {
                return None;
            }
            ijk[a] = r as usize;
        }
        Some(self.index(ijk))
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        let f = self.fractional_index(p);
        (0..self.dim).all(|a| f[a] >= 0.0 && f[a] <= (self.shape[a] - 1) as f64)
    }

    /// Lower and upper node coordinates per axis.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut hi = self.origin;
        for a in 0..self.dim {
            hi[a] += (self.shape[a] - 1) as f64 * self.spacing;
        }
        (self.origin, hi)
    }

    /// Geometric centre of the node box.
    pub fn center(&self) -> Point {
        let (lo, hi) = self.bounds();
        let mut c = [0.0; 3];
        for a in 0..self.dim {
            c[a] = 0.5 * (lo[a] + hi[a]);
        }
        c
    }

    /// Smallest half-extent of the node box.
    pub fn half_width(&self) -> f64 {
        (0..self.dim)
            .map(|a| 0.5 * (self.shape[a] - 1) as f64 * self.spacing)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn same_as(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(FlowError::ShapeMismatch(format!(
                "grids differ: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Multilinear interpolation stencil: up to eight `(node, weight)` pairs.
    /// Returns `None` outside the node box.
    pub fn stencil(&self, p: &Point) -> Option<([usize; 8], [f64; 8], usize)> {
        let f = self.fractional_index(p);
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..self.dim {
            let n = self.shape[a];
            if !(f[a] >= 0.0 && f[a] <= (n - 1) as f64) {
                return None;
            }
            let mut i = f[a].floor() as usize;
            if i >= n - 1 {
                i = n - 2;
            }
            base[a] = i;
            frac[a] = f[a] - i as f64;
        }
        let corners = 1usize << self.dim;
        let mut nodes = [0usize; 8];
        let mut weights = [0.0; 8];
        for c in 0..corners {
            let mut ijk = base;
            let mut w = 1.0;
            for a in 0..self.dim {
                if c >> a & 1 == 1 {
                    ijk[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            nodes[c] = self.index(ijk);
            weights[c] = w;
        }
        Some((nodes, weights, corners))
    }
}

/// Euclidean norm of the first `dim` coordinates.
#[inline]
pub fn norm(v: &Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add_scaled(a: &Point, s: f64, b: &Point) -> Point {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

/// One real per node. `+inf` marks nodes an arrival front never reached.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FlowError::ShapeMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: &GridSpec, value: f64) -> Self {
        Self {
            values: vec![value; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(&Point) -> f64 + Sync + Send) -> Self {
        let values = par::map(grid.len(), |i| f(&grid.point(i)));
        Self {
            grid: grid.clone(),
            values,
        }
    }

    /// Multilinear interpolation; `None` outside the node box. Infinite corners
    /// with positive weight make the result infinite.
    pub fn sample(&self, p: &Point) -> Option<f64> {
        let (nodes, w, n) = self.grid.stencil(p)?;
        let mut acc = 0.0;
        for c in 0..n {
            if w[c] == 0.0 {
                continue;
            }
            let v = self.values[nodes[c]];
            if v.is_infinite() {
                return Some(v);
            }
            acc += w[c] * v;
        }
        Some(acc)
    }

    /// Largest finite magnitude.
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// One vector per node.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: GridSpec,
    pub values: Vec<Point>,
}

impl VectorField {
    pub fn sample(&self, p: &Point) -> Option<Point> {
        let (nodes, w, n) = self.grid.stencil(p)?;
        let mut acc = [0.0; 3];
        for c in 0..n {
            let v = self.values[nodes[c]];
            for a in 0..3 {
                acc[a] += w[c] * v[a];
            }
        }
        Some(acc)
    }
}

/// A rasterised region: one flag per node.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    pub grid: GridSpec,
    pub inside: Vec<bool>,
}

impl RegionMask {
    pub fn new(grid: GridSpec, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != grid.len() {
            return Err(FlowError::ShapeMismatch(format!(
                "{} flags for {} nodes",
                inside.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, inside })
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(&Point) -> bool + Sync + Send) -> Self {
        let inside = par::map(grid.len(), |i| f(&grid.point(i)));
        Self {
            grid: grid.clone(),
            inside,
        }
    }

    pub fn empty(grid: &GridSpec) -> Self {
        Self {
            grid: grid.clone(),
            inside: vec![false; grid.len()],
        }
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.inside.iter().any(|&b| b)
    }

    pub fn area(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    /// Fails if an inside node lies within [`MARGIN_CELLS`] of the domain boundary.
    pub fn check_margin(&self, what: &str) -> Result<()> {
        for (i, &b) in self.inside.iter().enumerate() {
            if b {
                let d = self.grid.boundary_distance(i);
                if d < MARGIN_CELLS {
                    return Err(FlowError::Margin {
                        what: what.to_string(),
                        node: i,
                        cells: d,
                    });
                }
            }
        }
        Ok(())
    }

    /// Inside nodes with at least one face neighbour outside (or off-grid).
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let g = &self.grid;
        (0..g.len())
            .filter(|&i| {
                self.inside[i]
                    && (0..g.dim()).any(|a| {
                        [-1isize, 1].iter().any(|&d| match g.offset(i, a, d) {
                            Some(j) => !self.inside[j],
                            None => true,
                        })
                    })
            })
            .collect()
    }

    /// True if `self ⊆ other`.
    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.inside
            .iter()
            .zip(&other.inside)
            .all(|(&a, &b)| !a || b)
    }

    /// Number of nodes where the two masks disagree.
    pub fn symmetric_difference(&self, other: &RegionMask) -> usize {
        self.inside
            .iter()
            .zip(&other.inside)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn union(&self, other: &RegionMask) -> RegionMask {
        RegionMask {
            grid: self.grid.clone(),
            inside: self
                .inside
                .iter()
                .zip(&other.inside)
                .map(|(&a, &b)| a || b)
                .collect(),
        }
    }

    /// Indicator as a scalar field (1 inside, 0 outside).
    pub fn indicator(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self
                .inside
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

/// Upwind (Godunov) approximation of `|D field|` for an expanding front:
/// per axis the larger of the backward difference and the negated forward
/// difference, floored at zero. Unreached (`+inf`) neighbours are ignored;
/// unreached nodes map to `+inf`.
pub fn godunov_gradient_norm(field: &ScalarField) -> ScalarField {
    let g = &field.grid;
    let h = g.spacing();
    let v = &field.values;
    let values = par::map(g.len(), |i| {
        let c = v[i];
        if !c.is_finite() {
            return f64::INFINITY;
        }
        let mut sum = 0.0;
        for a in 0..g.dim() {
            let back = g
                .offset(i, a, -1)
                .map(|j| v[j])
                .filter(|x| x.is_finite())
                .map(|x| (c - x) / h);
            let fwd = g
                .offset(i, a, 1)
                .map(|j| v[j])
                .filter(|x| x.is_finite())
                .map(|x| (x - c) / h);
            let up = back
                .unwrap_or(0.0)
                .max(fwd.map(|d| -d).unwrap_or(0.0))
                .max(0.0);
            sum += up * up;
        }
        sum.sqrt()
    });
    ScalarField {
        grid: g.clone(),
        values,
    }
}

/// Second-order central differences; one-sided on the boundary ring and next
/// to unreached nodes.
pub fn central_gradient(field: &ScalarField) -> VectorField {
    let g = &field.grid;
    let h = g.spacing();
    let v = &field.values;
    let values = par::map(g.len(), |i| {
        let mut grad = [0.0; 3];
        let c = v[i];
        if !c.is_finite() {
            return grad;
        }
        for (a, slot) in grad.iter_mut().enumerate().take(g.dim()) {
            let lo = g.offset(i, a, -1).map(|j| v[j]).filter(|x| x.is_finite());
            let hi = g.offset(i, a, 1).map(|j| v[j]).filter(|x| x.is_finite());
            *slot = match (lo, hi) {
                (Some(l), Some(r)) => (r - l) / (2.0 * h),
                (Some(l), None) => (c - l) / h,
                (None, Some(r)) => (r - c) / h,
                (None, None) => 0.0,
            };
        }
        grad
    });
    VectorField {
        grid: g.clone(),
        values,
    }
}

/// Volume form of a surface-time integral:
/// `Σ_{s1 < z < s2} weight · h^N`, which equals
/// `∫_{s1}^{s2} ∫_{z = s} weight / |Dz| dH^{N-1} ds` by the coarea formula.
///
/// Fails if the band reaches the compactness margin.
pub fn coarea_integral(z: &ScalarField, weight: &[f64], s1: f64, s2: f64) -> Result<f64> {
    coarea_sum(z, weight, s1, s2, true)
}

/// As [`coarea_integral`] but without the margin check, for bands that are
/// cut by the domain on purpose (slabs, half-spaces).
pub fn coarea_integral_unbounded(
    z: &ScalarField,
    weight: &[f64],
    s1: f64,
    s2: f64,
) -> Result<f64> {
    coarea_sum(z, weight, s1, s2, false)
}

fn coarea_sum(z: &ScalarField, weight: &[f64], s1: f64, s2: f64, margin: bool) -> Result<f64> {
    if weight.len() != z.values.len() {
        return Err(FlowError::ShapeMismatch(
            "weight length differs from field".into(),
        ));
    }
    if !(s1 >= 0.0 && s1 < s2) {
        return Err(FlowError::InvalidArgument(format!(
            "need 0 <= s1 < s2, got ({s1}, {s2})"
        )));
    }
    let g = &z.grid;
    let mut sum = 0.0;
    for (i, (&zi, &w)) in z.values.iter().zip(weight).enumerate() {
        if zi > s1 && zi < s2 {
            if margin && g.boundary_distance(i) < MARGIN_CELLS {
                return Err(FlowError::Margin {
                    what: format!("coarea band ({s1}, {s2})"),
                    node: i,
                    cells: g.boundary_distance(i),
                });
            }
            sum += w;
        }
    }
    Ok(sum * g.cell_volume())
}

/// Gaussian smoothing of the indicator, `1_K * G(., eps)` with
/// `G(x, eps) = (4 pi eps)^{-N/2} exp(-|x|^2 / (4 eps))`.
pub fn mollify_indicator(mask: &RegionMask, eps: f64) -> Result<ScalarField> {
    if !(eps > 0.0) {
        return Err(FlowError::InvalidArgument(format!(
            "mollification parameter must be positive, got {eps}"
        )));
    }
    mask.check_margin("mollified region")?;
    let mut f = mask.indicator();
    convolve::heat_convolve(&mut f, eps, Boundary::Zero);
    for v in f.values.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(f)
}

/// Pointwise Euclidean norm of a vector field.
pub fn magnitude(v: &VectorField) -> ScalarField {
    ScalarField {
        grid: v.grid.clone(),
        values: v.values.iter().map(norm).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(n: usize, hw: f64) -> GridSpec {
        GridSpec::cell_centered(2, n, hw).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(4, &[16; 4], 0.1, &[0.0; 4]).is_err());
        assert!(GridSpec::new(2, &[16, 8], 0.1, &[0.0; 2]).is_err());
        assert!(GridSpec::new(2, &[16, 16], 0.0, &[0.0; 2]).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = GridSpec::new(3, &[16, 17, 18], 0.5, &[0.0, 1.0, 2.0]).unwrap();
        for idx in [0, 1, 17, 300, g.len() - 1] {
            assert_eq!(g.index(g.unravel(idx)), idx);
        }
        let p = g.point(g.index([2, 3, 4]));
        assert_eq!(p, [1.0, 2.5, 4.0]);
    }

    #[test]
    fn godunov_affine_is_exact() {
        let g = grid2(64, 2.0);
        let f = ScalarField::from_fn(&g, |p| p[0]);
        let n = godunov_gradient_norm(&f);
        for i in 0..g.len() {
            if g.boundary_distance(i) >= 1 {
                assert!((n.values[i] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn godunov_constant_is_zero() {
        let g = grid2(32, 1.0);
        let n = godunov_gradient_norm(&ScalarField::constant(&g, 0.0));
        assert!(n.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn godunov_radial_first_order() {
        // First-order one-sided differences of |x| carry an O(h/|x|) defect;
        // the worst case is the diagonal with defect ~ 0.354 h/|x|.
        let g = GridSpec::new(2, &[129, 129], 1.0 / 32.0, &[-2.0, -2.0]).unwrap();
        let h = g.spacing();
        let f = ScalarField::from_fn(&g, |p| norm(p));
        let n = godunov_gradient_norm(&f);
        for i in 0..g.len() {
            let r = norm(&g.point(i));
            if r > 4.0 * h && g.boundary_distance(i) >= 1 {
                let err = (n.values[i] - 1.0).abs();
                assert!(err <= 0.5 * h / r, "r = {r}, err = {err}");
                if r > 40.0 * h {
                    assert!(err <= 0.01);
                }
            }
        }
    }

    #[test]
    fn central_gradient_examples() {
        let g = grid2(64, 2.0);
        let f = ScalarField::from_fn(&g, |p| p[0]);
        let d = central_gradient(&f);
        for i in 0..g.len() {
            assert!((d.values[i][0] - 1.0).abs() < 1e-12 && d.values[i][1].abs() < 1e-12);
        }
        let g = GridSpec::new(2, &[257, 257], 1.0 / 64.0, &[-2.0, -2.0]).unwrap();
        let f = ScalarField::from_fn(&g, |p| norm(p));
        let d = central_gradient(&f);
        let at = d.sample(&[0.5, 0.0, 0.0]).unwrap();
        assert!((at[0] - 1.0).abs() < 1e-3 && at[1].abs() < 1e-3);
        let c = central_gradient(&ScalarField::constant(&g, 3.0));
        assert!(c.values.iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn central_and_upwind_agree_on_smooth_radial_fields() {
        let g = grid2(128, 2.0);
        let h = g.spacing();
        let f = ScalarField::from_fn(&g, |p| norm(p).powi(2) * 0.5 + norm(p));
        let up = godunov_gradient_norm(&f);
        let ce = magnitude(&central_gradient(&f));
        for i in 0..g.len() {
            let r = norm(&g.point(i));
            if r > 0.5 && g.boundary_distance(i) >= 1 {
                assert!((up.values[i] - ce.values[i]).abs() < 3.0 * h * (1.0 + r));
            }
        }
    }

    #[test]
    fn coarea_annulus_and_slab() {
        let g = grid2(256, 2.0);
        let z = ScalarField::from_fn(&g, |p| norm(p) - 0.5);
        let w = godunov_gradient_norm(&z).values;
        let area = coarea_integral(&z, &w, 0.2, 0.7).unwrap();
        let exact = std::f64::consts::PI * (1.2f64.powi(2) - 0.7f64.powi(2));
        assert!((area - exact).abs() / exact < 0.02, "{area} vs {exact}");

        let zero = vec![0.0; g.len()];
        assert_eq!(coarea_integral(&z, &zero, 0.2, 0.7).unwrap(), 0.0);

        let slab = ScalarField::from_fn(&g, |p| p[0]);
        let ones = vec![1.0; g.len()];
        assert!(matches!(
            coarea_integral(&slab, &ones, 0.0, 0.5),
            Err(FlowError::Margin { .. })
        ));
        let v = coarea_integral_unbounded(&slab, &ones, 0.0, 0.5).unwrap();
        assert!((v - 2.0).abs() / 2.0 < 0.02, "{v}");
    }

    #[test]
    fn coarea_matches_band_area() {
        // Discrete identity: with weight |Dz| ~ 1 the integral is the band area
        // up to one cell layer along each bounding level set.
        let g = grid2(200, 2.0);
        let h = g.spacing();
        let z = ScalarField::from_fn(&g, |p| norm(p) - 0.5);
        let w = godunov_gradient_norm(&z).values;
        let t = 0.8;
        let v = coarea_integral(&z, &w, 0.0, t).unwrap();
        let area = std::f64::consts::PI * ((0.5f64 + t).powi(2) - 0.25);
        let layer = 2.0 * std::f64::consts::PI * (1.0 + t) * h;
        assert!((v - area).abs() <= layer);
    }

    #[test]
    fn mollified_disk_perimeter() {
        let g = GridSpec::new(2, &[257, 257], 1.0 / 64.0, &[-2.0, -2.0]).unwrap();
        let h = g.spacing();
        let mask = RegionMask::from_fn(&g, |p| norm(p) <= 0.5);
        let f = mollify_indicator(&mask, (4.0 * h).powi(2)).unwrap();
        assert!(f.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let total: f64 = magnitude(&central_gradient(&f)).values.iter().sum::<f64>()
            * g.cell_volume();
        let pi = std::f64::consts::PI;
        assert!((total - pi).abs() / pi < 0.03, "{total}");
    }

    #[test]
    fn mollify_errors_and_empty() {
        let g = grid2(32, 1.0);
        let full = RegionMask::from_fn(&g, |_| true);
        assert!(matches!(
            mollify_indicator(&full, 0.01),
            Err(FlowError::Margin { .. })
        ));
        let f = mollify_indicator(&RegionMask::empty(&g), 0.01).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mollify_is_monotone_in_the_mask() {
        let g = grid2(64, 2.0);
        let small = RegionMask::from_fn(&g, |p| norm(p) <= 0.4);
        let big = RegionMask::from_fn(&g, |p| norm(p) <= 0.7 || (p[0] > 0.5 && p[0] < 1.5 && p[1].abs() < 0.2));
        assert!(small.is_subset_of(&big));
        let a = mollify_indicator(&small, 0.01).unwrap();
        let b = mollify_indicator(&big, 0.01).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x <= y));
    }

    #[test]
    fn sample_interpolates_and_propagates_infinity() {
        let g = grid2(16, 1.0);
        let f = ScalarField::from_fn(&g, |p| 2.0 * p[0] - p[1]);
        let v = f.sample(&[0.1, 0.2, 0.0]).unwrap();
        assert!((v - 0.0).abs() < 1e-12);
        let mut inf = f.clone();
        let n = g.nearest(&[0.0, 0.0, 0.0]).unwrap();
        inf.values[n] = f64::INFINITY;
        assert!(inf.sample(&g.point(n)).unwrap().is_infinite());
        assert!(f.sample(&[5.0, 0.0, 0.0]).is_none());
    }
}
