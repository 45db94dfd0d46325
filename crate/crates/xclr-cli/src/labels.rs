//! Label sidecar CSV: `index,subclass,superclass`, one row per sample,
//! indices contiguous from zero.

use std::path::Path;

use crate::error::{CliError, Result};

const HEADER: [&str; 3] = ["index", "subclass", "superclass"];

pub fn write_labels_csv(path: &Path, subclass: &[usize], superclass: &[usize]) -> Result<()> {
    assert_eq!(subclass.len(), superclass.len());
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(HEADER)
        .map_err(|e| csv_error(path, e))?;
    for (i, (sub, sup)) in subclass.iter().zip(superclass).enumerate() {
        writer
            .write_record([i.to_string(), sub.to_string(), sup.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

/// Reads the sidecar back as `(subclass, superclass)` label vectors.
pub fn load_labels_csv(path: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    {
        let headers = reader.headers().map_err(|e| csv_error(path, e))?;
        if headers.iter().ne(HEADER) {
            return Err(CliError::ParseError {
                path: path.into(),
                line: 1,
                detail: format!("expected header {:?}, got {:?}", HEADER.join(","), headers),
            });
        }
    }
    let mut subclass = Vec::new();
    let mut superclass = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(row as u64 + 2);
        if record.len() != 3 {
            return Err(CliError::ParseError {
                path: path.into(),
                line,
                detail: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let parse = |field: usize, name: &str| -> Result<usize> {
            record[field].trim().parse::<usize>().map_err(|_| {
                CliError::ParseError {
                    path: path.into(),
                    line,
                    detail: format!("{name} {:?} is not a non-negative integer", &record[field]),
                }
            })
        };
        let index = parse(0, "index")?;
        if index != subclass.len() {
            return Err(CliError::NonContiguousIndex {
                path: path.into(),
                line,
            });
        }
        subclass.push(parse(1, "subclass")?);
        superclass.push(parse(2, "superclass")?);
    }
    Ok((subclass, superclass))
}

fn csv_error(path: &Path, error: csv::Error) -> CliError {
    let line = match error.position() {
        Some(p) => p.line(),
        None => 0,
    };
    match error.into_kind() {
        csv::ErrorKind::Io(e) => CliError::io(path, e),
        kind => CliError::ParseError {
            path: path.into(),
            line,
            detail: format!("{kind:?}"),
        },
    }
}
