//! Plain-CSV readers and writers: sample files (one vector per row, no
//! header), basis files (one ambient coordinate per row, one column per basis
//! vector) and detector trajectories.
//!
//! Floats are written in Rust's shortest round-trip form so that output is
//! byte-stable and re-parses to the same bits.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::detector::{Decision, TrajectoryPoint};
use crate::error::{Result, VcError};
use crate::geometry::SubspaceBasis;

/// Orthonormality tolerance applied to basis files.
pub const BASIS_FILE_TOL: f64 = 1e-8;

/// Parses a headerless numeric CSV into its rows. Blank lines are skipped;
/// rows and columns in error messages are 1-based.
pub fn parse_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row_no = idx + 1;
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, field)| {
                let v: f64 = field.trim().parse().map_err(|_| {
                    VcError::invalid(format!(
                        "row {row_no}, column {}: cannot parse {:?} as a number",
                        c + 1,
                        field.trim()
                    ))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(VcError::NonFinite {
                        row: row_no,
                        col: c + 1,
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(VcError::invalid(format!(
                    "row {row_no} has {} fields, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let ncols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c])
}

pub fn read_matrix_from<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    Ok(rows_to_matrix(&parse_rows(reader)?))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix_from(fs::File::open(path)?)
}

/// Reads a sample file: one length-`n` vector per row.
pub fn read_samples(path: &Path) -> Result<Vec<DVector<f64>>> {
    let rows = parse_rows(fs::File::open(path)?)?;
    Ok(rows.into_iter().map(DVector::from_vec).collect())
}

/// Reads an `n x d` basis file and checks orthonormality to [`BASIS_FILE_TOL`].
pub fn read_basis(path: &Path) -> Result<SubspaceBasis> {
    let m = read_matrix(path)?;
    if m.nrows() == 0 {
        return Err(VcError::invalid("basis file is empty"));
    }
    SubspaceBasis::new(m, BASIS_FILE_TOL)
}

/// CSV text for a matrix, one row per line.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:?}", m[(r, c)]);
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}

/// Writes vectors as rows.
pub fn write_samples<'a, I>(path: &Path, samples: I) -> Result<()>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let mut out = String::new();
    for y in samples {
        for (c, v) in y.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub const TRAJECTORY_HEADER: &str = "i,T,inv_T,k_i,decision";

/// The decision column for row `i`: empty until the decision is reached.
pub fn decision_cell(decision: Decision, i: usize) -> &'static str {
    match decision.decided_at {
        Some(at) if i >= at => decision.kind.as_str(),
        _ => "",
    }
}

/// Appends `T,inv_T,k_i,decision` for one trajectory point (no newline).
pub fn push_trajectory_fields(out: &mut String, p: &TrajectoryPoint, decision: Decision) {
    let _ = write!(
        out,
        "{:?},{:?},{},{}",
        p.t,
        p.inv_t,
        p.rank,
        decision_cell(decision, p.i)
    );
}

pub fn write_trajectory<W: Write>(mut w: W, trajectory: &[TrajectoryPoint], decision: Decision) -> Result<()> {
    let mut out = String::with_capacity(64 * (trajectory.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for p in trajectory {
        let _ = write!(out, "{},", p.i);
        push_trajectory_fields(&mut out, p, decision);
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_trajectory_file(path: &Path, trajectory: &[TrajectoryPoint], decision: Decision) -> Result<()> {
    let file = fs::File::create(path)?;
    write_trajectory(std::io::BufWriter::new(file), trajectory, decision)
}
