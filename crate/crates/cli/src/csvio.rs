//! Trial and target CSV files.
//!
//! Trial files have a header `x1,…,xp,a,y` with `a ∈ {-1, 1}` (or `{0, 1}`
//! when read with `binary_arm`, mapped to `-1` and `+1`). Target files have
//! the header `x1,…,xp`. Covariate columns are matched by name, so column
//! order is free. Numbers are written in Rust's shortest round-trip form, so
//! a write/read cycle reproduces every value bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use transport_bounds::{Arm, TargetCovariates, TrialDataset, TrialUnit};

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("no covariate columns (expected x1, x2, ...)")]
    NoCovariates,
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("target covariates {target:?} do not match trial covariates {trial:?}")]
    ColumnMismatch { trial: Vec<String>, target: Vec<String> },
    #[error(transparent)]
    Data(#[from] transport_bounds::Error),
}

/// Covariate columns `x<k>` in ascending `k`, as (k, column index).
fn covariate_columns(headers: &csv::StringRecord) -> Vec<(usize, usize, String)> {
    let mut cols: Vec<(usize, usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            let h = h.trim();
            h.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()).map(|k| (k, i, h.to_string()))
        })
        .collect();
    cols.sort();
    cols
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CsvError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CsvError::MissingColumn(name.into()))
}

fn reader(input: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_field(record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64, CsvError> {
    let line = line_of(record);
    let raw = record.get(idx).ok_or_else(|| CsvError::Parse { line, reason: format!("missing field '{name}'") })?;
    raw.parse::<f64>()
        .map_err(|_| CsvError::Parse { line, reason: format!("cannot parse '{raw}' as a number in column '{name}'") })
}

fn csv_error(e: csv::Error) -> CsvError {
    let line = e.position().map_or(0, |p| p.line());
    CsvError::Parse { line, reason: e.to_string() }
}

fn open(path: &Path) -> Result<std::fs::File, CsvError> {
    std::fs::File::open(path).map_err(|source| CsvError::Io { path: path.display().to_string(), source })
}

/// Reads a trial sample and returns it with its covariate names.
pub fn read_trial(input: impl Read, binary_arm: bool, pi_r: f64) -> Result<(TrialDataset, Vec<String>), CsvError> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let covs = covariate_columns(&headers);
    if covs.is_empty() {
        return Err(CsvError::NoCovariates);
    }
    let a_col = column(&headers, "a")?;
    let y_col = column(&headers, "y")?;
    let mut units = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = line_of(&record);
        let x = covs.iter().map(|(_, i, name)| parse_field(&record, *i, name)).collect::<Result<Vec<_>, _>>()?;
        let code = parse_field(&record, a_col, "a")?;
        let arm = match (code, binary_arm) {
            (c, false) if c == 1.0 || c == -1.0 => Arm::from_code(c as i64)?,
            (1.0, true) => Arm::Treated,
            (0.0, true) => Arm::Control,
            (c, _) => {
                let expected = if binary_arm { "0 or 1" } else { "-1 or 1" };
                return Err(CsvError::Parse { line, reason: format!("arm must be {expected} (got {c})") });
            }
        };
        let y = parse_field(&record, y_col, "y")?;
        units.push(TrialUnit { x, a: arm, y });
    }
    let names = covs.into_iter().map(|(_, _, n)| n).collect();
    Ok((TrialDataset::new(units, pi_r)?, names))
}

/// Reads target covariates and returns them with their column names.
pub fn read_target(input: impl Read) -> Result<(TargetCovariates, Vec<String>), CsvError> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let covs = covariate_columns(&headers);
    if covs.is_empty() {
        return Err(CsvError::NoCovariates);
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        rows.push(covs.iter().map(|(_, i, name)| parse_field(&record, *i, name)).collect::<Result<Vec<_>, _>>()?);
    }
    let names = covs.into_iter().map(|(_, _, n)| n).collect();
    Ok((TargetCovariates::new(rows)?, names))
}

/// Reads a trial/target pair from disk and checks their covariates agree.
pub fn read_pair(
    trial: &Path,
    target: &Path,
    binary_arm: bool,
    pi_r: f64,
) -> Result<(TrialDataset, TargetCovariates), CsvError> {
    let (trial, trial_names) = read_trial(open(trial)?, binary_arm, pi_r)?;
    let (target, target_names) = read_target(open(target)?)?;
    if trial_names != target_names {
        return Err(CsvError::ColumnMismatch { trial: trial_names, target: target_names });
    }
    Ok((trial, target))
}

fn header(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("x{k}")).collect()
}

pub fn write_trial(out: impl Write, trial: &TrialDataset) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut head = header(trial.p());
    head.extend(["a".into(), "y".into()]);
    w.write_record(&head)?;
    for u in trial.units() {
        let mut row: Vec<String> = u.x.iter().map(f64::to_string).collect();
        row.push(u.a.code().to_string());
        row.push(u.y.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_target(out: impl Write, target: &TargetCovariates) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(target.p()))?;
    for row in target.rows() {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_columns_by_name() {
        let text = "y,a,x2,x1\n1.5,1,0.2,0.1\n-0.5,-1,0.4,0.3\n";
        let (ds, names) = read_trial(text.as_bytes(), false, 0.5).unwrap();
        assert_eq!(names, ["x1", "x2"]);
        assert_eq!(ds.units()[0].x, vec![0.1, 0.2]);
        assert_eq!(ds.units()[1].a, Arm::Control);
        assert_eq!(ds.units()[1].y, -0.5);
    }

    #[test]
    fn binary_arm_flag_remaps() {
        let text = "x1,a,y\n0,1,1\n0,0,2\n";
        assert!(matches!(read_trial(text.as_bytes(), false, 0.5), Err(CsvError::Parse { line: 3, .. })));
        let (ds, _) = read_trial(text.as_bytes(), true, 0.5).unwrap();
        assert_eq!(ds.units()[1].a, Arm::Control);
    }

    #[test]
    fn errors_name_line_and_column() {
        let err = read_trial("x1,a\n0,1\n".as_bytes(), false, 0.5).unwrap_err();
        assert_eq!(err.to_string(), "missing column 'y'");
        let err = read_trial("x1,a,y\n0,1,1\n0,-1,abc\n".as_bytes(), false, 0.5).unwrap_err();
        assert!(err.to_string().starts_with("line 3:"), "{err}");
    }

    #[test]
    fn round_trip_is_exact() {
        let units = vec![
            TrialUnit { x: vec![0.1 + 0.2, -1e-300], a: Arm::Treated, y: std::f64::consts::PI },
            TrialUnit { x: vec![1.0 / 3.0, 5e300], a: Arm::Control, y: -2.0 / 7.0 },
        ];
        let ds = TrialDataset::new(units, 0.5).unwrap();
        let mut buf = Vec::new();
        write_trial(&mut buf, &ds).unwrap();
        let (back, _) = read_trial(buf.as_slice(), false, 0.5).unwrap();
        assert_eq!(back, ds);
    }
}
