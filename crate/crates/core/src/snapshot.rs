//! `.sbdfgrid` binary snapshots and CSV export.
//!
//! Layout, all little-endian:
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | `SBDFGRID`                                |
//! | 8      | 4    | `nx` (u32)                                |
//! | 12     | 4    | `ny` (u32)                                |
//! | 16     | 8    | `h` (f64)                                 |
//! | 24     | 4    | boundary code, see `BoundarySpec::code`   |
//! | 28     | 4    | reserved, must be zero                    |
//! | 32     | 8 n  | `nx * ny` f64 values, `x` fastest         |

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::error::{Result, SbdfError};
use crate::grid::{BoundarySpec, Field, GridSpec};

pub const MAGIC: &[u8; 8] = b"SBDFGRID";
pub const HEADER_LEN: usize = 32;

pub fn encode(field: &Field) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.nx() as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny() as u32).to_le_bytes());
    out.extend_from_slice(&g.h().to_le_bytes());
    out.extend_from_slice(&g.bc().code().to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

/// Strict decoder: every header field is validated and trailing bytes are
/// rejected.
pub fn decode(bytes: &[u8]) -> Result<Field> {
    let bad = |msg: String| SbdfError::Parse(format!("snapshot: {msg}"));
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let nx = u32_at(bytes, 8) as usize;
    let ny = u32_at(bytes, 12) as usize;
    let h = f64_at(bytes, 16);
    let bc = BoundarySpec::from_code(u32_at(bytes, 24))?;
    if u32_at(bytes, 28) != 0 {
        return Err(bad("reserved word is not zero".into()));
    }
    let count = nx
        .checked_mul(ny)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| bad(format!("{nx}x{ny} overflows")))?;
    if bytes.len() - HEADER_LEN != count {
        return Err(bad(format!(
            "{nx}x{ny} needs {count} data bytes, found {}",
            bytes.len() - HEADER_LEN
        )));
    }
    let grid = GridSpec::new(nx, ny, h, bc)?;
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Field::from_values(grid, values)
}

pub fn write_snapshot(path: &Path, field: &Field) -> io::Result<()> {
    std::fs::write(path, encode(field))
}

pub fn read_snapshot(path: &Path) -> io::Result<Field> {
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

/// One line per grid row (constant `y`), shortest round-trip formatting.
pub fn to_csv(field: &Field) -> String {
    let nx = field.grid().nx();
    let mut out = String::with_capacity(field.values().len() * 12);
    for row in field.values().chunks(nx) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v:?}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}
