//! CSV ingestion for locations and dense covariance matrices.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernels::Locations;

/// All rows of a headerless-or-headed numeric CSV. A first row that does not
/// parse as numbers is taken to be a header and skipped.
fn numeric_rows<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(Error::data(format!("row {}: {e}", k + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::data("no numeric rows"));
    }
    let width = rows[0].len();
    if let Some(k) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::data(format!("row {} has {} columns, expected {width}", k + 1, rows[k].len())));
    }
    Ok(rows)
}

/// One location per row, d numeric columns, optional header.
pub fn read_locations<R: Read>(input: R) -> Result<Locations> {
    Locations::from_rows(&numeric_rows(input)?)
}

pub fn read_locations_csv(path: &Path) -> Result<Locations> {
    read_locations(std::fs::File::open(path)?)
}

/// An n × n matrix, row-major; returns (n, entries).
pub fn read_matrix<R: Read>(input: R) -> Result<(usize, Vec<f64>)> {
    let rows = numeric_rows(input)?;
    let n = rows.len();
    if rows[0].len() != n {
        return Err(Error::data(format!("matrix has {n} rows but {} columns", rows[0].len())));
    }
    Ok((n, rows.into_iter().flatten().collect()))
}

pub fn read_matrix_csv(path: &Path) -> Result<(usize, Vec<f64>)> {
    read_matrix(std::fs::File::open(path)?)
}
