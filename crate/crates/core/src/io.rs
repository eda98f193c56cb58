//! CSV formats shared by the CLI and the test harnesses: comma-separated,
//! no header, decimal floats, UTF-8, LF. Widths are validated and parse
//! errors carry 1-based line numbers.

use crate::{Error, Result};
use std::io::{BufRead, Write};
use std::path::Path;

/// Reads a matrix: one row per line. Every row must have the same width.
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("not a number: {cell:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("row has {} entries, expected {}", row.len(), first.len()),
                });
            }
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse { line: lineno, msg: "non-finite entry".into() });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a dataset: one universe index per line.
pub fn read_dataset_csv(path: &Path) -> Result<Vec<usize>> {
    let file = std::fs::File::open(path)?;
    let mut records = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v = line.trim().parse::<usize>().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("not a universe index: {line:?}"),
        })?;
        records.push(v);
    }
    Ok(records)
}

pub fn write_matrix_csv(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let dir = std::env::temp_dir().join(format!("og2-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let rows = vec![vec![1.0, 0.5, -2.0], vec![0.0, 3.25, 4.0]];
        write_matrix_csv(&path, &rows).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), rows);

        std::fs::write(&path, "1,2\n3\n").unwrap();
        match read_matrix_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
