//! XMAT: a flat binary matrix container.
//!
//! Layout, all little-endian: 4-byte magic `XMAT`, version `u32` (currently
//! 1), row count `u32`, column count `u32`, then `rows * cols` IEEE-754 f32
//! values in row-major order. Trailing bytes after the payload are rejected.

use std::path::Path;

use xclr_core::numerics::Matrix;

use crate::error::{CliError, Result};

const MAGIC: &[u8; 4] = b"XMAT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Writes `matrix` to `path`, narrowing every entry to f32.
pub fn write_xmat(path: &Path, matrix: &Matrix) -> Result<()> {
    if matrix.rows() > u32::MAX as usize || matrix.cols() > u32::MAX as usize {
        return Err(CliError::Config(format!(
            "matrix {}x{} exceeds the XMAT u32 dimension range",
            matrix.rows(),
            matrix.cols()
        )));
    }
    let mut bytes = Vec::with_capacity(HEADER_LEN + matrix.data().len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
    for &value in matrix.data() {
        bytes.extend_from_slice(&(value as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Reads an XMAT file back into an f64 matrix (each f32 widens exactly).
pub fn read_xmat(path: &Path) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CliError::BadMagic { path: path.into() });
    }
    if bytes.len() < HEADER_LEN {
        return Err(CliError::TruncatedPayload {
            path: path.into(),
            detail: format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
        });
    }
    let field = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = field(4);
    if version != VERSION {
        return Err(CliError::VersionUnsupported {
            path: path.into(),
            version,
        });
    }
    let rows = field(8) as usize;
    let cols = field(12) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| CliError::TruncatedPayload {
            path: path.into(),
            detail: format!("header claims {rows}x{cols}, which overflows"),
        })?;
    if bytes.len() != expected {
        return Err(CliError::TruncatedPayload {
            path: path.into(),
            detail: format!(
                "header claims {rows}x{cols} ({expected} bytes), file has {}",
                bytes.len()
            ),
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes[HEADER_LEN..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Matrix::from_vec(rows, cols, data).map_err(CliError::Core)
}
