//! Artifact writers. Numbers in CSV files carry 17 significant digits so that parsing them
//! back reproduces the in-memory values bit for bit.

use std::io::Write;
use std::path::{Path, PathBuf};

use isac_core::duality::{AdmissibleSweep, Verdict};
use isac_core::model::BeamPattern;
use serde::Serialize;

use crate::error::CliError;

pub const BEAMPATTERN_CSV: &str = "beampattern.csv";
pub const ADMISSIBLE_CSV: &str = "admissible.csv";
pub const REPORT_JSON: &str = "report.json";

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Files staged in memory and written together once every one of them is ready.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Each file goes to a temporary sibling first and is renamed into place.
    pub fn write(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let target = dir.join(&name);
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(&bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(&target).map_err(|e| CliError::Io(e.to_string()))?;
            written.push(target);
        }
        Ok(written)
    }
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Columns `theta_deg, total_db, per_user_db_1, …`; `theta_deg` is taken from `grid_deg`.
pub fn beampattern_csv(grid_deg: &[f64], pattern: &BeamPattern) -> Result<Vec<u8>, CliError> {
    let total = pattern.total_db();
    let users = pattern.per_user_db();
    let mut header = vec!["theta_deg".to_string(), "total_db".to_string()];
    header.extend((1..=users.len()).map(|k| format!("per_user_db_{k}")));
    let rows = (0..grid_deg.len()).map(|g| {
        let mut r = vec![fmt_f64(grid_deg[g]), fmt_f64(total[g])];
        r.extend(users.iter().map(|u| fmt_f64(u[g])));
        r
    });
    csv_bytes(&header, rows)
}

pub fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Admissible => "admissible",
        Verdict::Inadmissible => "inadmissible",
        Verdict::Indeterminate => "indeterminate",
    }
}

/// One row per cell, `re_b` outer and `lambda` inner; `psd_boundary` is `ρ_max(Q_b)`.
pub fn admissible_csv(sweep: &AdmissibleSweep) -> Result<Vec<u8>, CliError> {
    let header: Vec<String> = ["lambda", "re_b", "verdict", "psd_boundary"].iter().map(|s| s.to_string()).collect();
    let rows = sweep.re_bs.iter().enumerate().flat_map(|(r, &re_b)| {
        sweep.lambdas.iter().enumerate().map(move |(l, &lambda)| {
            vec![
                fmt_f64(lambda),
                fmt_f64(re_b),
                verdict_label(sweep.verdicts[r][l]).to_string(),
                fmt_f64(sweep.psd_boundary[r]),
            ]
        })
    });
    csv_bytes(&header, rows)
}

/// Numeric columns of a CSV file, by header name.
pub fn read_numeric_csv(bytes: &[u8]) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers().map_err(|e| CliError::Io(e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Io(e.to_string()))?;
        rows.push(rec.iter().map(|f| f.parse::<f64>().unwrap_or(f64::NAN)).collect());
    }
    Ok((header, rows))
}
