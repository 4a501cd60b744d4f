//! Field files: a JSON sidecar header next to a raw little-endian payload.
//!
//! `name.json` holds `{dim, shape, spacing, origin, dtype, order, role}` and
//! `name.bin` holds the node values, 8-byte reals (`f64`) or one byte per
//! node (`u8`, masks).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::grid::{GridSpec, RegionMask, ScalarField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub spacing: f64,
    pub origin: Vec<f64>,
    pub dtype: String,
    pub order: String,
    pub role: String,
}

impl FieldHeader {
    fn new(grid: &GridSpec, dtype: &str, role: &str) -> Self {
        Self {
            dim: grid.dim(),
            shape: grid.shape().to_vec(),
            spacing: grid.spacing(),
            origin: grid.origin().to_vec(),
            dtype: dtype.into(),
            order: "row-major".into(),
            role: role.into(),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        if self.order != "row-major" {
            return Err(FlowError::InvalidArgument(format!(
                "unsupported order {:?}",
                self.order
            )));
        }
        GridSpec::new(self.dim, &self.shape, self.spacing, &self.origin)
    }
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

fn write_header(path: &Path, header: &FieldHeader) -> Result<()> {
    let mut s = serde_json::to_string_pretty(header)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn read_header(path: &Path, dtype: &str) -> Result<FieldHeader> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
    if header.dtype != dtype {
        return Err(FlowError::InvalidArgument(format!(
            "expected dtype {dtype}, found {}",
            header.dtype
        )));
    }
    Ok(header)
}

/// Writes `stem.json` and `stem.bin`.
pub fn write_scalar(stem: &Path, field: &ScalarField, role: &str) -> Result<()> {
    let (hp, bp) = paths(stem);
    write_header(&hp, &FieldHeader::new(&field.grid, "f64", role))?;
    let mut bytes = Vec::with_capacity(field.values.len() * 8);
    for v in &field.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(bp, bytes)?;
    Ok(())
}

/// Reads a field written by [`write_scalar`]; returns it with its role.
pub fn read_scalar(stem: &Path) -> Result<(ScalarField, String)> {
    let (hp, bp) = paths(stem);
    let header = read_header(&hp, "f64")?;
    let grid = header.grid()?;
    let bytes = fs::read(bp)?;
    if bytes.len() != grid.len() * 8 {
        return Err(FlowError::ShapeMismatch(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            grid.len() * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((ScalarField::new(grid, values)?, header.role))
}

pub fn write_mask(stem: &Path, mask: &RegionMask, role: &str) -> Result<()> {
    let (hp, bp) = paths(stem);
    write_header(&hp, &FieldHeader::new(&mask.grid, "u8", role))?;
    let bytes: Vec<u8> = mask.inside.iter().map(|&b| b as u8).collect();
    fs::write(bp, bytes)?;
    Ok(())
}

pub fn read_mask(stem: &Path) -> Result<(RegionMask, String)> {
    let (hp, bp) = paths(stem);
    let header = read_header(&hp, "u8")?;
    let grid = header.grid()?;
    let bytes = fs::read(bp)?;
    if bytes.len() != grid.len() {
        return Err(FlowError::ShapeMismatch(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            grid.len()
        )));
    }
    Ok((RegionMask::new(grid, bytes.iter().map(|&b| b != 0).collect())?, header.role))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::cell_centered(3, 16, 1.3).unwrap();
        let mut f = ScalarField::from_fn(&g, |p| (p[0] * 1e3).sin() / 7.0 + p[2]);
        f.values[3] = f64::INFINITY;
        f.values[4] = -0.0;
        let stem = dir.path().join("z");
        write_scalar(&stem, &f, "arrival").unwrap();
        let (back, role) = read_scalar(&stem).unwrap();
        assert_eq!(role, "arrival");
        assert_eq!(back.grid, f.grid);
        for (a, b) in back.values.iter().zip(&f.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn mask_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::cell_centered(2, 20, 1.0).unwrap();
        let m = RegionMask::from_fn(&g, |p| p[0] > 0.1);
        let stem = dir.path().join("k0");
        write_mask(&stem, &m, "source").unwrap();
        let (back, _) = read_mask(&stem).unwrap();
        assert_eq!(back, m);
        assert!(read_scalar(&stem).is_err());
    }
}
