//! CSV output with fixed headers.

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

/// Accuracies and other reals use a fixed number of decimals so reruns
/// produce identical bytes.
pub fn real(x: f64) -> String {
    format!("{x:.6}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV back, checking the header and every row's column count.
pub fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let found = r.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::Data(format!(
            "{}: header {:?} does not match {:?}",
            path.display(),
            found.iter().collect::<Vec<_>>(),
            header
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(CliError::Data(format!("{}: row with {} columns", path.display(), rec.len())));
        }
        rows.push(rec);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/x.csv");
        let rows = vec![vec!["1".to_string(), real(0.5)], vec!["2".to_string(), real(1.0 / 3.0)]];
        write_csv(&path, &["a", "b"], &rows).unwrap();
        let back = read_csv(&path, &["a", "b"]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(&back[1][1], "0.333333");
        assert!(read_csv(&path, &["a", "c"]).is_err());
    }
}
