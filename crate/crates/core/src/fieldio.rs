//! Binary field dumps.
//!
//! Layout, little-endian: magic `PXL4`, version `u32`, dims `4×u32`,
//! component count `u32`, spacing `4×f64`, origin `4×f64`, then the values
//! as row-major `f64` with components innermost.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid4, ScalarField, VectorField};

pub const MAGIC: &[u8; 4] = b"PXL4";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 16 + 4 + 32 + 32;

pub fn encode(grid: &Grid4, ncomp: usize, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in grid.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(ncomp as u32).to_le_bytes());
    for s in grid.spacing() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for o in grid.origin() {
        out.extend_from_slice(&o.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn dump_field(path: &Path, field: &VectorField) -> Result<()> {
    fs::write(path, encode(field.grid(), field.dim(), field.values()))?;
    Ok(())
}

pub fn dump_scalar(path: &Path, field: &ScalarField) -> Result<()> {
    fs::write(path, encode(field.grid(), 1, field.values()))?;
    Ok(())
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().expect("four bytes"))
}

fn f64_at(b: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(b[off..off + 8].try_into().expect("eight bytes"))
}

/// Decodes a dump; `path` only labels errors.
pub fn decode(path: &Path, b: &[u8]) -> Result<VectorField> {
    let bad = |reason: String| Error::FieldFormat { path: path.to_path_buf(), reason };
    if b.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the {HEADER_LEN}-byte header", b.len())));
    }
    if &b[0..4] != MAGIC {
        return Err(bad("wrong magic bytes".into()));
    }
    let version = u32_at(b, 4);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dims: [usize; 4] = std::array::from_fn(|a| u32_at(b, 8 + 4 * a) as usize);
    let ncomp = u32_at(b, 24) as usize;
    let spacing: [f64; 4] = std::array::from_fn(|a| f64_at(b, 28 + 8 * a));
    let origin: [f64; 4] = std::array::from_fn(|a| f64_at(b, 60 + 8 * a));
    if ncomp == 0 {
        return Err(bad("zero components".into()));
    }
    let count = dims
        .iter()
        .try_fold(ncomp, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    let expected = count.checked_mul(8).and_then(|n| n.checked_add(HEADER_LEN)).ok_or_else(|| bad("dimensions overflow".into()))?;
    if b.len() != expected {
        return Err(bad(format!("expected {expected} bytes, found {}", b.len())));
    }
    let grid: Arc<Grid4> = Grid4::new(dims, spacing, origin).map_err(|e| bad(e.to_string()))?;
    let values = (0..count).map(|i| f64_at(b, HEADER_LEN + 8 * i)).collect();
    VectorField::from_values(&grid, ncomp, values)
}

pub fn load_field(path: &Path) -> Result<VectorField> {
    let bytes = fs::read(path)?;
    decode(path, &bytes)
}

/// Loads a one-component dump.
pub fn load_scalar(path: &Path) -> Result<ScalarField> {
    let f = load_field(path)?;
    if f.dim() != 1 {
        return Err(Error::FieldFormat { path: path.to_path_buf(), reason: format!("expected 1 component, found {}", f.dim()) });
    }
    Ok(f.component(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_identical() {
        let g = Grid4::with_bounds([5, 6, 5, 7], [0.0, -1.0, 0.5, 0.0], [1.0, 1.0, 2.0, 0.3]).unwrap();
        let f = VectorField::from_fn(&g, 3, |x, out| {
            out[0] = x[0].sin();
            out[1] = x[1] * x[3];
            out[2] = -0.0;
        });
        let bytes = encode(&g, 3, f.values());
        let back = decode(Path::new("mem"), &bytes).unwrap();
        assert_eq!(back.dim(), 3);
        assert_eq!(back.grid().dims(), g.dims());
        assert_eq!(back.grid().spacing(), g.spacing());
        let a: Vec<u64> = f.values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_input_rejected() {
        let g = Grid4::cube(5, 0.0, 1.0).unwrap();
        let bytes = encode(&g, 1, &vec![1.0; g.len()]);
        let p = Path::new("mem");
        assert!(decode(p, &bytes[..bytes.len() - 1]).is_err());
        assert!(decode(p, &bytes[..10]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'Q';
        assert!(decode(p, &wrong).is_err());
        let mut v2 = bytes;
        v2[4] = 2;
        let e = decode(p, &v2).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
