use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "scenario,snr_db,psr_db,mse,eve_accuracy,seed,wall_time_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NoSecurity,
    AliceOnly,
    AliceBob,
    FgsmBaseline,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::NoSecurity => "no_security",
            Scenario::AliceOnly => "alice_only",
            Scenario::AliceBob => "alice_bob",
            Scenario::FgsmBaseline => "fgsm_baseline",
        }
    }
}

/// One evaluation point. `psr_db` is empty when no perturbation is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: Scenario,
    pub snr_db: f64,
    pub psr_db: Option<f64>,
    pub mse: f64,
    pub eve_accuracy: f64,
    pub seed: u64,
    pub wall_time_s: f64,
}

impl MetricsRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.mse >= 0.0) {
            return Err(Error::Config(format!("negative mse {}", self.mse)));
        }
        if !(0.0..=1.0).contains(&self.eve_accuracy) {
            return Err(Error::Config(format!("accuracy {} outside [0, 1]", self.eve_accuracy)));
        }
        Ok(())
    }
}

pub fn to_csv(records: &[MetricsRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        r.validate()?;
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    f.write_all(to_csv(records)?.as_bytes()).map_err(|e| Error::file(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// CSV text with the trailing wall-time column removed, for reproducibility
/// comparisons.
pub fn strip_wall_time(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|line| line.rsplit_once(',').map_or(line, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}
