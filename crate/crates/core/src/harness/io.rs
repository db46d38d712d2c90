//! Matrix CSV and JSON persistence.
//!
//! Matrices are stored one column per snapshot: a header line
//! `# state_dim=<N> snapshots=<s>` followed by `N` comma-separated rows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::pod::SnapshotMatrix;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), message: message.into() }
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# state_dim={} snapshots={}", m.nrows(), m.ncols()).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string())).map_err(|e| format_err(path, e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader.read_line(&mut header).map_err(io_err(path))?;
    let (rows, cols) = parse_header(header.trim()).ok_or_else(|| format_err(path, format!("bad header '{}'", header.trim())))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).from_reader(reader);
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for record in r.records() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        if record.len() != cols {
            return Err(format_err(path, format!("row {seen} has {} fields (expected {cols})", record.len())));
        }
        for field in record.iter() {
            data.push(field.trim().parse::<f64>().map_err(|e| format_err(path, format!("row {seen}: {e}")))?);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(format_err(path, format!("{seen} rows (header says {rows})")));
    }
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix('#')?.trim();
    let mut rows = None;
    let mut cols = None;
    for part in rest.split_whitespace() {
        let (k, v) = part.split_once('=')?;
        match k {
            "state_dim" => rows = v.parse().ok(),
            "snapshots" => cols = v.parse().ok(),
            _ => {}
        }
    }
    Some((rows?, cols?))
}

pub fn write_vector_csv(path: &Path, v: &Vector) -> Result<()> {
    write_matrix_csv(path, &Matrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn read_vector_csv(path: &Path) -> Result<Vector> {
    let m = read_matrix_csv(path)?;
    if m.ncols() != 1 {
        return Err(format_err(path, format!("expected one column, found {}", m.ncols())));
    }
    Ok(m.column(0).into_owned())
}

/// Writes `<stem>.csv` and the offset as `<stem>_offset.csv`.
pub fn write_snapshots(dir: &Path, stem: &str, x: &SnapshotMatrix) -> Result<()> {
    write_matrix_csv(&dir.join(format!("{stem}.csv")), &x.data)?;
    write_vector_csv(&dir.join(format!("{stem}_offset.csv")), &x.offset)
}

pub fn read_snapshots(dir: &Path, stem: &str, times: &[f64], tag: &str) -> Result<SnapshotMatrix> {
    let data = read_matrix_csv(&dir.join(format!("{stem}.csv")))?;
    let offset = read_vector_csv(&dir.join(format!("{stem}_offset.csv")))?;
    if offset.len() != data.nrows() || times.len() != data.ncols() {
        return Err(format_err(dir, format!("snapshot set '{stem}' has inconsistent sizes")));
    }
    Ok(SnapshotMatrix { parameter_tags: vec![tag.to_string(); data.ncols()], data, offset, time_stamps: times.to_vec() })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| format_err(path, e.to_string()))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}
