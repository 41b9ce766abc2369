//! File formats.
//!
//! - Curves: CSV, header `group_id,<grid values…>`, then one row per curve
//!   `<group id>,<M values>`. Rows of a group need not be contiguous; groups
//!   keep the order of their first appearance.
//! - Labels: CSV `group_id,label`.
//! - Covariance: headerless `M x M` CSV, or the binary block
//!   `b"WPCV"`, `u32` dimension, row-major `f64`, all little-endian.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::{check_grid, FunctionalSample};
use crate::error::{Error, Result};

pub const WPCV_MAGIC: &[u8; 4] = b"WPCV";

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

fn parse_f64(field: &str, line: u64) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("line {line}: non-finite value `{field}`")));
    }
    Ok(v)
}

/// Reads grouped curves.
pub fn read_curves_csv<R: Read>(reader: R) -> Result<Vec<FunctionalSample>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = rdr.records();
    let header = records.next().ok_or_else(|| Error::Format("empty curve file".into()))?.map_err(csv_err)?;
    if header.len() < 2 {
        return Err(Error::Format("header needs a group column and at least one grid point".into()));
    }
    let grid: Vec<f64> = header.iter().skip(1).map(|f| parse_f64(f, 1)).collect::<Result<_>>()?;
    check_grid(&grid)?;
    let m = grid.len();

    let mut order: Vec<String> = Vec::new();
    let mut rows: std::collections::HashMap<String, Vec<f64>> = std::collections::HashMap::new();
    for (idx, rec) in records.enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = idx as u64 + 2;
        if rec.len() != m + 1 {
            return Err(Error::Format(format!("line {line}: expected {} fields, found {}", m + 1, rec.len())));
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::Format(format!("line {line}: empty group id")));
        }
        let values = rec.iter().skip(1).map(|f| parse_f64(f, line)).collect::<Result<Vec<_>>>()?;
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Vec::new()
        });
        entry.extend(values);
    }
    if order.is_empty() {
        return Err(Error::Format("no curves found".into()));
    }
    order
        .into_iter()
        .map(|id| {
            let data = rows.remove(&id).unwrap_or_default();
            let n = data.len() / m;
            FunctionalSample::new(id, DMatrix::from_row_slice(n, m, &data), grid.clone())
        })
        .collect()
}

/// Writes grouped curves; all samples must share one grid.
pub fn write_curves_csv<W: Write>(writer: W, samples: &[FunctionalSample]) -> Result<()> {
    let grid = samples.first().map(|s| s.grid.clone()).unwrap_or_default();
    if let Some(s) = samples.iter().find(|s| s.grid != grid) {
        return Err(Error::Format(format!("group `{}` uses a different grid", s.group_id)));
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let mut header = vec!["group_id".to_string()];
    header.extend(grid.iter().map(|g| g.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for s in samples {
        for row in s.curves.row_iter() {
            let mut rec = vec![s.group_id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_csv<W: Write>(writer: W, ids: &[String], labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group_id", "label"]).map_err(csv_err)?;
    for (id, l) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), &l.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_csv<R: Read>(reader: R) -> Result<Vec<(String, usize)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 2 {
            return Err(Error::Format("label rows need two fields".into()));
        }
        let label = rec[1].trim().parse().map_err(|_| Error::Format(format!("bad label `{}`", &rec[1])))?;
        out.push((rec[0].to_string(), label));
    }
    Ok(out)
}

pub fn write_cov_csv<W: Write>(writer: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cov_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut data = Vec::new();
    let mut rows = 0;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for f in rec.iter() {
            data.push(parse_f64(f, idx as u64 + 1)?);
        }
        rows += 1;
    }
    if rows == 0 || data.len() != rows * rows {
        return Err(Error::Format(format!("expected a square matrix, got {rows} rows and {} values", data.len())));
    }
    Ok(DMatrix::from_row_slice(rows, rows, &data))
}

pub fn write_cov_binary<W: Write>(mut writer: W, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidMatrix("binary covariance must be square".into()));
    }
    let dim = u32::try_from(m.nrows()).map_err(|_| Error::InvalidMatrix("dimension exceeds u32".into()))?;
    writer.write_all(WPCV_MAGIC)?;
    writer.write_all(&dim.to_le_bytes())?;
    for row in m.row_iter() {
        for v in row.iter() {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_cov_binary<R: Read>(mut reader: R) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != WPCV_MAGIC {
        return Err(Error::Format("missing WPCV magic".into()));
    }
    let mut dim = [0u8; 4];
    reader.read_exact(&mut dim)?;
    let dim = u32::from_le_bytes(dim) as usize;
    let mut data = Vec::with_capacity(dim * dim);
    let mut buf = [0u8; 8];
    for _ in 0..dim * dim {
        reader.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after matrix", rest.len())));
    }
    Ok(DMatrix::from_row_slice(dim, dim, &data))
}
