//! Field output: CSV (`x[,y],value`) and a flat little-endian binary dump.
//!
//! Binary layout: a 64-byte header
//!
//! | bytes  | content                          |
//! |--------|----------------------------------|
//! | 0..8   | magic `TPDEFLD1`                 |
//! | 8..24  | `dim, nx, ny, reserved` as `u32` |
//! | 24..64 | `x_lo, x_hi, y_lo, y_hi, T` as `f64` |
//!
//! followed by `nx·ny` `f64` values, y outer, x inner.

use std::io::{Read, Write};

use super::{Field, Grid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TPDEFLD1";
pub const HEADER_LEN: usize = 64;

/// Exactly 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let g = &field.grid;
    if g.dim == 1 {
        writeln!(out, "x,value")?;
    } else {
        writeln!(out, "x,y,value")?;
    }
    for j in 0..g.ny {
        for i in 0..g.nx {
            let v = fmt17(field.at(i, j));
            if g.dim == 1 {
                writeln!(out, "{},{}", fmt17(g.x(i)), v)?;
            } else {
                writeln!(out, "{},{},{}", fmt17(g.x(i)), fmt17(g.y(j)), v)?;
            }
        }
    }
    Ok(())
}

pub fn write_binary<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let g = &field.grid;
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    for v in [g.dim as u32, g.nx as u32, g.ny as u32, 0] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    for v in [g.lo[0], g.hi[0], g.lo[1], g.hi[1], field.t] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    debug_assert_eq!(header.len(), HEADER_LEN);
    out.write_all(&header)?;
    let mut body = Vec::with_capacity(8 * field.values.len());
    for v in &field.values {
        body.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&body)?;
    Ok(())
}

/// Values and geometry of a binary dump. The returned grid carries no time
/// stepping information (`dt = T`, one step).
pub fn read_binary<R: Read>(mut input: R) -> Result<Field> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(Error::Io("not a field dump (bad magic)".into()));
    }
    let u32_at = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().unwrap()) as usize;
    let f64_at = |k: usize| f64::from_le_bytes(header[k..k + 8].try_into().unwrap());
    let (dim, nx, ny) = (u32_at(8), u32_at(12), u32_at(16));
    let (x_lo, x_hi, y_lo, y_hi, t) = (f64_at(24), f64_at(32), f64_at(40), f64_at(48), f64_at(56));
    let dx = (x_hi - x_lo) / (nx as f64 - 1.0);
    let grid = Grid::new(dim, [x_lo, y_lo], [x_hi, y_hi], dx, t.max(1.0), t)?;
    if grid.nx != nx || grid.ny != ny {
        return Err(Error::Io("field dump header is inconsistent".into()));
    }
    let mut body = vec![0u8; 8 * nx * ny];
    input.read_exact(&mut body)?;
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Field { grid, t, values })
}
