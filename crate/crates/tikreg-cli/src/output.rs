//! CSV emission and small file-format helpers.
//!
//! All numeric columns are written with `{:.16e}` (17 significant digits,
//! locale independent), and every CSV starts with provenance comments:
//! master seed, a hash of the resolved settings, and the tool version.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use tikreg::linalg::SymMatrix;
use tikreg::tikhonov::RegPair;
use tikreg::{Error, Result};

/// FNV-1a over the canonical settings text; stable across runs.
pub fn settings_hash(settings: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in settings.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// The provenance comment block at the top of every CSV.
pub fn write_provenance(w: &mut impl Write, master_seed: u64, settings: &str) -> std::io::Result<()> {
    writeln!(w, "# master_seed = {master_seed}")?;
    writeln!(w, "# config_hash = {:016x}", settings_hash(settings))?;
    writeln!(w, "# version = {}", env!("CARGO_PKG_VERSION"))
}

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads a regularization pair from a text file: the first data line is
/// the center `h` (comma separated), followed by the rows of `B`. Blank
/// lines and `#` comments are skipped. `B` is symmetrized on load.
pub fn read_pair_file(path: &Path, n: usize) -> Result<RegPair> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read pair file {}: {e}", path.display()))
    })?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "pair file {} line {}: cannot parse '{}' as a number",
                    path.display(),
                    lineno + 1,
                    field.trim()
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.len() != n + 1 {
        return Err(Error::Config(format!(
            "pair file {}: expected 1 + {n} data lines (h, then rows of B), found {}",
            path.display(),
            rows.len()
        )));
    }
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!(
            "pair file {}: every line must have {n} comma-separated entries",
            path.display()
        )));
    }
    let h = DVector::from_vec(rows[0].clone());
    let b = DMatrix::from_fn(n, n, |i, j| rows[i + 1][j]);
    Ok(RegPair {
        h,
        b: SymMatrix::new(b)?,
    })
}

/// Extracts one numeric column from a CSV file, skipping comments and a
/// header row if the requested field does not parse there.
pub fn read_csv_column(path: &Path, column: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", path.display()))
    })?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').nth(column).ok_or_else(|| {
            Error::Config(format!(
                "{} line {}: no column {column}",
                path.display(),
                lineno + 1
            ))
        })?;
        match field.trim().parse::<f64>() {
            Ok(v) => values.push(v),
            // A single unparsable first row is a header.
            Err(_) if values.is_empty() => continue,
            Err(_) => {
                return Err(Error::Config(format!(
                    "{} line {}: cannot parse '{}' as a number",
                    path.display(),
                    lineno + 1,
                    field.trim()
                )))
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Config(format!(
            "{}: no numeric rows found",
            path.display()
        )));
    }
    Ok(values)
}
