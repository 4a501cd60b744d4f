//! Exact Euclidean distance transforms on the grid (lower-envelope
//! algorithm, separable over axes) and the signed distance of a mask.

use crate::grid::{GridSpec, RegionMask, ScalarField};
use crate::par;

const BIG: f64 = 1e30;

/// 1D squared distance transform of sampled function `f` (unit spacing).
fn dt1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance (in cells²) from every node to the nearest node where
/// `seed` is true. Nodes are `BIG` away when there are no seeds.
pub fn squared_distance_cells(grid: &GridSpec, seed: &[bool]) -> Vec<f64> {
    let mut d: Vec<f64> = seed.iter().map(|&s| if s { 0.0 } else { BIG }).collect();
    let shape = grid.shape3();
    let strides = grid.strides();
    for axis in 0..grid.dim() {
        let n = shape[axis];
        let stride = strides[axis];
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        let lines = shape[others[0]] * shape[others[1]];
        let starts: Vec<usize> = (0..lines)
            .map(|l| (l / shape[others[1]]) * strides[others[0]] + (l % shape[others[1]]) * strides[others[1]])
            .collect();
        let src = &d;
        let res: Vec<Vec<f64>> = par::map(lines, |l| {
            let s = starts[l];
            let f: Vec<f64> = (0..n).map(|i| src[s + i * stride]).collect();
            let mut out = vec![0.0; n];
            let mut v = vec![0usize; n];
            let mut z = vec![0.0; n + 1];
            dt1d(&f, &mut out, &mut v, &mut z);
            out
        });
        for (l, out) in res.into_iter().enumerate() {
            let s = starts[l];
            for (i, x) in out.into_iter().enumerate() {
                d[s + i * stride] = x.min(BIG);
            }
        }
    }
    d
}

/// Signed distance to the boundary of a mask, positive inside. The interface
/// sits half a cell beyond the outermost inside nodes, so inside nodes have
/// value `>= h/2` and outside nodes `<= -h/2`.
pub fn signed_distance(mask: &RegionMask) -> ScalarField {
    let g = &mask.grid;
    let h = g.spacing();
    let outside: Vec<bool> = mask.inside.iter().map(|&b| !b).collect();
    let to_out = squared_distance_cells(g, &outside);
    let to_in = squared_distance_cells(g, &mask.inside);
    let values = mask
        .inside
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            if b {
                if to_out[i] >= BIG {
                    f64::INFINITY
                } else {
                    (to_out[i].sqrt() - 0.5) * h
                }
            } else if to_in[i] >= BIG {
                f64::NEG_INFINITY
            } else {
                -(to_in[i].sqrt() - 0.5) * h
            }
        })
        .collect();
    ScalarField {
        grid: g.clone(),
        values,
    }
}

/// Morphological opening of a mask by a ball of radius `r`: the union of all
/// grid balls of radius `r` centred at nodes whose distance to the outside is
/// greater than `r`. Returns the opened mask.
pub fn opening(mask: &RegionMask, r: f64) -> RegionMask {
    let g = &mask.grid;
    let h = g.spacing();
    let outside: Vec<bool> = mask.inside.iter().map(|&b| !b).collect();
    let to_out = squared_distance_cells(g, &outside);
    let rc = r / h;
    // Centres: inside nodes whose nearest outside node is farther than r.
    let centres: Vec<bool> = mask
        .inside
        .iter()
        .zip(&to_out)
        .map(|(&b, &d)| b && d.sqrt() > rc)
        .collect();
    let to_centre = squared_distance_cells(g, &centres);
    RegionMask {
        grid: g.clone(),
        inside: to_centre.iter().map(|&d| d.sqrt() <= rc).collect(),
    }
}
