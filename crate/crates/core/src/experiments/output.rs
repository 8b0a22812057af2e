//! CSV persistence. Numbers are written with 12 significant digits;
//! non-finite SNRs are written as `inf` and missing estimates as empty
//! fields.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run_experiment, ExperimentConfig, ResultRecord};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::simulator::Snr;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
const CONFIG_FILE: &str = "config.json";

const RECORD_HEADER: [&str; 12] = [
    "method",
    "scene",
    "rotation",
    "realization",
    "snr_db",
    "src_R",
    "src_phi",
    "est_R",
    "est_phi",
    "sq_err",
    "correct",
    "iters",
];
const SUMMARY_HEADER: [&str; 5] = ["method", "snr_db", "mean_mse", "error_rate", "n"];

/// Decimal text rounded to 12 significant digits.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    // avoid "-0"
    format!("{}", rounded + 0.0)
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

fn parse_error(path: &Path, line: u64, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    }
}

pub fn write_records(path: impl AsRef<Path>, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.method.name().to_string(),
            r.scene.clone(),
            r.rotation.to_string(),
            r.realization.to_string(),
            format_number(r.snr.db()),
            format_number(r.source.0),
            format_number(r.source.1),
            format_opt(r.estimate.map(|e| e.0)),
            format_opt(r.estimate.map(|e| e.1)),
            format_opt(r.sq_err),
            u8::from(r.correct).to_string(),
            r.iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RECORD_HEADER {
        return Err(parse_error(path, 1, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let err = |m: String| parse_error(path, line, m);
        let num = |idx: usize| -> Result<Option<f64>> {
            let s = &row[idx];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|e| err(format!("{}: {e}", RECORD_HEADER[idx])))
        };
        let req = |idx: usize| -> Result<f64> { num(idx)?.ok_or_else(|| err(format!("missing {}", RECORD_HEADER[idx]))) };
        let int = |idx: usize| -> Result<usize> {
            row[idx].parse().map_err(|e| err(format!("{}: {e}", RECORD_HEADER[idx])))
        };
        let method: Method = row[0].parse().map_err(err)?;
        let snr: Snr = row[4].parse().map_err(err)?;
        let estimate = match (num(7)?, num(8)?) {
            (Some(r), Some(p)) => Some((r, p)),
            (None, None) => None,
            _ => return Err(err("half-specified estimate".into())),
        };
        out.push(ResultRecord {
            method,
            scene: row[1].to_string(),
            rotation: int(2)?,
            realization: int(3)?,
            snr,
            source: (req(5)?, req(6)?),
            estimate,
            sq_err: num(9)?,
            correct: match &row[10] {
                "1" => true,
                "0" => false,
                other => return Err(err(format!("correct flag '{other}'"))),
            },
            iters: int(11)?,
        });
    }
    Ok(out)
}

/// Aggregate over one method at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub snr_db: f64,
    /// Mean squared error over records that produced an estimate.
    pub mean_mse: Option<f64>,
    pub error_rate: f64,
    pub n: usize,
}

/// Groups by (method, SNR) in order of first appearance.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, u64)> = Vec::new();
    for r in records {
        let key = (r.method, r.snr.db().to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, snr_bits)| {
            let group: Vec<&ResultRecord> = records
                .iter()
                .filter(|r| r.method == method && r.snr.db().to_bits() == snr_bits)
                .collect();
            let errs: Vec<f64> = group.iter().filter_map(|r| r.sq_err).collect();
            let mean_mse = (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64);
            let wrong = group.iter().filter(|r| !r.correct).count();
            SummaryRow {
                method,
                snr_db: f64::from_bits(snr_bits),
                mean_mse,
                error_rate: wrong as f64 / group.len() as f64,
                n: group.len(),
            }
        })
        .collect()
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            format_number(r.snr_db),
            format_opt(r.mean_mse),
            format_number(r.error_rate),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SUMMARY_HEADER {
        return Err(parse_error(path, 1, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let err = |m: String| parse_error(path, i as u64 + 2, m);
        let float = |s: &str| s.parse::<f64>().map_err(|e| err(e.to_string()));
        out.push(SummaryRow {
            method: row[0].parse().map_err(err)?,
            snr_db: float(&row[1])?,
            mean_mse: if row[2].is_empty() { None } else { Some(float(&row[2])?) },
            error_rate: float(&row[3])?,
            n: row[4].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
        });
    }
    Ok(out)
}

/// Runs the experiment and writes the resolved config, `records.csv` and
/// `summary.csv` into `dir`. The summary is computed from the records as
/// read back from disk.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let records = run_experiment(cfg)?;
    fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(cfg)?)?;
    write_records(dir.join(RECORDS_FILE), &records)?;
    let rows = summarize(&read_records(dir.join(RECORDS_FILE))?);
    write_summary(dir.join(SUMMARY_FILE), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(2.0 - 2.0 * (std::f64::consts::PI / 6.0).cos()), "0.267949192431");
        assert_eq!(format_number(123456.78901234), "123456.789012");
        assert_eq!(format_number(f64::INFINITY), "inf");
        assert_eq!(format_number(25.0), "25");
    }

    fn record(method: Method, snr: Snr, sq_err: Option<f64>) -> ResultRecord {
        ResultRecord {
            method,
            scene: "single_wall".into(),
            rotation: 0,
            realization: 0,
            snr,
            source: (0.5, 0.0),
            estimate: sq_err.map(|_| (0.5, 0.1)),
            sq_err,
            correct: sq_err.is_some_and(super::super::is_correct),
            iters: 3,
        }
    }

    #[test]
    fn records_round_trip_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![
            record(Method::L1, Snr::Db(10.0), Some(0.0)),
            record(Method::L1, Snr::Db(10.0), Some(0.04)),
            record(Method::L1, Snr::Db(10.0), None),
            record(Method::CcDas, Snr::Noiseless, Some(0.02)),
        ];
        let path = dir.path().join(RECORDS_FILE);
        write_records(&path, &recs).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back, recs);

        let rows = summarize(&back);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, Method::L1);
        assert_eq!(rows[0].n, 3);
        assert!((rows[0].mean_mse.unwrap() - 0.02).abs() < 1e-15);
        assert!((rows[0].error_rate - 2.0 / 3.0).abs() < 1e-15);
        assert!(rows[1].snr_db.is_infinite());

        let spath = dir.path().join(SUMMARY_FILE);
        write_summary(&spath, &rows).unwrap();
        let text = fs::read_to_string(&spath).unwrap();
        assert!(text.starts_with("method,snr_db,mean_mse,error_rate,n\n"));
        assert!(text.contains("CC-DAS,inf,0.02,1,1\n"));
        assert_eq!(read_summary(&spath).unwrap().len(), 2);
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_records(&path), Err(Error::Parse { .. })));
    }
}
