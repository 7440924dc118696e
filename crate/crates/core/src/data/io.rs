use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::FeatureMatrix;
use crate::{Error, Result};

/// Reserved header name for per-row strata labels.
pub const STRATA_COLUMN: &str = "strata";

fn detect_delimiter(header: &str) -> u8 {
    if header.contains('\t') && !header.contains(',') {
        b'\t'
    } else {
        b','
    }
}

/// Reads a delimited feature file (comma by default, tab if the header is
/// tab-separated). The first row names the columns; a column called
/// `strata` is taken as row labels instead of features.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    if first.trim().is_empty() {
        return Err(Error::Parse { line: 1, message: "missing header row".into() });
    }
    let delimiter = detect_delimiter(&first);

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row (first row is numeric)".into(),
        });
    }
    if let Some(empty) = header.iter().position(String::is_empty) {
        return Err(Error::Parse { line: 1, message: format!("column {} has an empty name", empty + 1) });
    }
    let strata_col = header.iter().position(|h| h == STRATA_COLUMN);
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != strata_col)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut strata = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == strata_col {
                strata.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: `{cell}` is not a number", header[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column `{}`: non-finite value `{cell}`", header[j]),
                });
            }
            values.push(v);
        }
        rows += 1;
    }

    let mut m = FeatureMatrix::new(names, values, rows)?
        .with_provenance(path.display().to_string());
    if strata_col.is_some() {
        m = m.with_strata(strata)?;
    }
    Ok(m)
}

/// Writes `m` in the format [`load_features`] reads, with full round-trip
/// precision. Strata, when present, go in the last column.
pub fn save_features(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let mut header = m.names().join(",");
    if m.strata().is_some() {
        header.push(',');
        header.push_str(STRATA_COLUMN);
    }
    writeln!(out, "{header}")?;
    for i in 0..m.rows() {
        let mut line = m.row(i).iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
        if let Some(s) = m.strata() {
            line.push(',');
            line.push_str(&s[i]);
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
