use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::Method;
use crate::constellation::FormatId;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = ["snr_db", "L", "delta", "classifier", "trials", "pc", "ci95", "mean_iterations"];

/// Monte Carlo summary of one (SNR, L, delta, classifier) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub snr_db: f64,
    #[serde(rename = "L")]
    pub sensors: usize,
    pub delta: f64,
    pub classifier: Method,
    /// Completed (non-failed) trials.
    pub trials: usize,
    pub failures: usize,
    pub pc: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    /// EM iterations of the decided hypothesis, averaged.
    pub mean_iterations: f64,
    /// Row/column labels of `confusion`.
    pub labels: Vec<FormatId>,
    /// Row = truth, column = decision.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Json,
}

impl ResultFormat {
    /// Picks the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => ResultFormat::Json,
            _ => ResultFormat::Csv,
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Serializes results to CSV bytes.
pub fn csv_bytes(results: &[AggregateResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Usage(e.to_string());
    w.write_record(CSV_HEADER).map_err(wrap)?;
    for r in results {
        w.write_record(&[
            r.snr_db.to_string(),
            r.sensors.to_string(),
            r.delta.to_string(),
            r.classifier.to_string(),
            r.trials.to_string(),
            r.pc.to_string(),
            r.ci95.to_string(),
            r.mean_iterations.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::Usage(e.to_string()))
}

/// Writes results as plot-ready CSV (one row per cell) or as JSON with the
/// confusion matrices.
pub fn write_results(results: &[AggregateResult], path: impl AsRef<Path>, format: ResultFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        ResultFormat::Csv => csv_bytes(results)?,
        ResultFormat::Json => {
            let mut v = serde_json::to_vec_pretty(results).map_err(|e| Error::io(path, e.into()))?;
            v.push(b'\n');
            v
        }
    };
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct CsvRow {
    snr_db: f64,
    #[serde(rename = "L")]
    sensors: usize,
    delta: f64,
    classifier: Method,
    trials: usize,
    pc: f64,
    ci95: f64,
    mean_iterations: f64,
}

/// Reads results back. CSV input has no confusion matrices.
pub fn read_results(path: impl AsRef<Path>, format: ResultFormat) -> Result<Vec<AggregateResult>> {
    let path = path.as_ref();
    match format {
        ResultFormat::Json => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
        }
        ResultFormat::Csv => {
            let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
            rdr.deserialize::<CsvRow>()
                .enumerate()
                .map(|(i, row)| {
                    let row = row.map_err(|e| Error::input_at(e.to_string(), i + 2, None))?;
                    Ok(AggregateResult {
                        snr_db: row.snr_db,
                        sensors: row.sensors,
                        delta: row.delta,
                        classifier: row.classifier,
                        trials: row.trials,
                        failures: 0,
                        pc: row.pc,
                        ci95: row.ci95,
                        mean_iterations: row.mean_iterations,
                        labels: Vec::new(),
                        confusion: Vec::new(),
                    })
                })
                .collect()
        }
    }
}

/// One point of a Pc-versus-SNR curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    pub classifier: Method,
    #[serde(rename = "L")]
    pub sensors: usize,
    pub delta: f64,
    pub snr_db: f64,
    pub pc: f64,
    pub ci95: f64,
}

/// Groups results into Pc-versus-SNR series per (classifier, L, delta),
/// each sorted by SNR.
pub fn plot_series(results: &[AggregateResult]) -> Vec<PlotPoint> {
    let mut groups: BTreeMap<(Method, usize, u64), Vec<PlotPoint>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.classifier, r.sensors, r.delta.to_bits()))
            .or_default()
            .push(PlotPoint {
                classifier: r.classifier,
                sensors: r.sensors,
                delta: r.delta,
                snr_db: r.snr_db,
                pc: r.pc,
                ci95: r.ci95,
            });
    }
    groups
        .into_values()
        .flat_map(|mut series| {
            series.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
            series
        })
        .collect()
}
