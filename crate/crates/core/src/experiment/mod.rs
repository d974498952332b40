//! Seeded Monte Carlo sweeps.
//!
//! Each trial draws its own modulation, channel, symbols and noise from
//! streams keyed by `(master_seed, snr, L, trial)`, so the data of a trial is
//! shared by every classifier and stopping delta in that (SNR, L) pair and
//! does not depend on scheduling. Tallies are integers, so aggregation is
//! order independent.

mod config;
mod results;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{draw_symbols, observe, sample_channel, FadingModel};
use crate::classifier::{classify_alrt, classify_em_hml, classify_mom, CandidateSet, ClassificationResult, Method};
use crate::constellation::FormatId;
use crate::error::{Error, Result};
use crate::rng::{mix_seed, trial_stream, Purpose};

pub use config::{ExperimentConfig, GateMode, GridRefineConfig, TruthSelection};
pub use results::{csv_bytes as results_csv, plot_series, read_results, write_results, AggregateResult, PlotPoint, ResultFormat, CSV_HEADER};

/// Identifies one aggregation cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub snr_db: f64,
    pub sensors: usize,
    pub delta: f64,
    pub classifier: Method,
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "snr={} dB, L={}, delta={}, {}",
            self.snr_db, self.sensors, self.delta, self.classifier
        )
    }
}

/// Outcome of one classifier on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub cell: CellKey,
    pub truth: usize,
    /// `None` when the trial failed numerically.
    pub decision: Option<usize>,
    pub iterations: usize,
}

/// Failed trials allowed per cell before the run is rejected.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Summarizes the records of a single cell.
pub fn aggregate(records: &[TrialRecord], labels: &[FormatId]) -> Result<AggregateResult> {
    let Some(first) = records.first() else {
        return Err(Error::Usage("cannot aggregate an empty record set".into()));
    };
    let cell = first.cell;
    if records.iter().any(|r| r.cell != cell) {
        return Err(Error::Usage("records from different cells cannot be aggregated together".into()));
    }
    let s = labels.len();
    let mut confusion = vec![vec![0u64; s]; s];
    let mut completed = 0usize;
    let mut failures = 0usize;
    let mut iterations = 0usize;
    for r in records {
        if r.truth >= s {
            return Err(Error::Usage(format!("truth index {} outside {s} labels", r.truth)));
        }
        match r.decision {
            Some(d) if d < s => {
                confusion[r.truth][d] += 1;
                completed += 1;
                iterations += r.iterations;
            }
            Some(d) => return Err(Error::Usage(format!("decision index {d} outside {s} labels"))),
            None => failures += 1,
        }
    }
    let correct: u64 = (0..s).map(|i| confusion[i][i]).sum();
    let (pc, mean_iterations) = if completed > 0 {
        (correct as f64 / completed as f64, iterations as f64 / completed as f64)
    } else {
        (0.0, 0.0)
    };
    let ci95 = if completed > 0 {
        1.96 * (pc * (1.0 - pc) / completed as f64).sqrt()
    } else {
        0.0
    };
    Ok(AggregateResult {
        snr_db: cell.snr_db,
        sensors: cell.sensors,
        delta: cell.delta,
        classifier: cell.classifier,
        trials: completed,
        failures,
        pc,
        ci95,
        mean_iterations,
        labels: labels.to_vec(),
        confusion,
    })
}

fn cell_seed_key(snr_db: f64, sensors: usize) -> u64 {
    mix_seed(&[snr_db.to_bits(), sensors as u64])
}

/// Decision and iteration count, or `None` for a numeric failure.
fn summarize(outcome: Result<ClassificationResult>) -> Result<Option<(usize, usize)>> {
    match outcome {
        Ok(r) => Ok(Some((r.decision, r.decision_iterations()))),
        Err(e) if e.is_numeric() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs one trial of an (SNR, L) pair for every requested classifier and delta.
fn run_trial(
    config: &ExperimentConfig,
    candidates: &CandidateSet,
    snr_db: f64,
    sensors: usize,
    trial: usize,
) -> Result<Vec<TrialRecord>> {
    let key = cell_seed_key(snr_db, sensors);
    let seed = config.master_seed;
    let t = trial as u64;
    let s = candidates.len();
    let truth = match config.truth_selection {
        TruthSelection::Uniform => trial_stream(seed, key, t, Purpose::Modulation).random_range(0..s),
        TruthSelection::Cycle => trial % s,
    };
    let fading = FadingModel::from_average_power(config.fading_power)?;
    let noise_power = fading.noise_power_for_snr_db(snr_db);
    let channel = sample_channel(&mut trial_stream(seed, key, t, Purpose::Channel), sensors, &fading, noise_power)?;
    let spec = &candidates[truth];
    let indices = draw_symbols(&mut trial_stream(seed, key, t, Purpose::Symbols), spec, config.block_length);
    let block = observe(&mut trial_stream(seed, key, t, Purpose::Noise), spec, &channel, &indices)?;

    let mut records = Vec::new();
    let mut push = |classifier: Method, delta: f64, outcome: Option<(usize, usize)>| {
        let (decision, iterations) = match outcome {
            Some((d, it)) => (Some(d), it),
            None => (None, 0),
        };
        records.push(TrialRecord {
            cell: CellKey {
                snr_db,
                sensors,
                delta,
                classifier,
            },
            truth,
            decision,
            iterations,
        });
    };

    for &method in &config.classifiers {
        match method {
            Method::EmHml => {
                for &delta in &config.stop_deltas {
                    let options = config.em_options(delta, snr_db);
                    push(method, delta, summarize(classify_em_hml(&block, candidates, &options))?);
                }
            }
            Method::Alrt => {
                let outcome = summarize(classify_alrt(&block, candidates, &channel))?;
                for &delta in &config.stop_deltas {
                    push(method, delta, outcome);
                }
            }
            Method::MomHlrt => {
                let options = config.em_options(config.stop_deltas[0], snr_db);
                let outcome = summarize(classify_mom(&block, candidates, &options))?;
                for &delta in &config.stop_deltas {
                    push(method, delta, outcome);
                }
            }
        }
    }
    Ok(records)
}

/// Runs the full sweep on the current rayon pool.
///
/// Cells are returned ordered by SNR, then L, then delta, then classifier in
/// config order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<AggregateResult>> {
    config.validate()?;
    let candidates = CandidateSet::new(&config.candidate_formats)?;
    let labels = candidates.formats();
    let mut results = Vec::new();
    for &snr_db in &config.snr_db_list {
        for &sensors in &config.sensor_counts {
            let per_trial = (0..config.trials)
                .into_par_iter()
                .map(|trial| run_trial(config, &candidates, snr_db, sensors, trial))
                .collect::<Result<Vec<_>>>()?;
            let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
            for &delta in &config.stop_deltas {
                for &classifier in &config.classifiers {
                    let cell = CellKey {
                        snr_db,
                        sensors,
                        delta,
                        classifier,
                    };
                    let mine: Vec<TrialRecord> = records.iter().filter(|r| r.cell == cell).cloned().collect();
                    let agg = aggregate(&mine, &labels)?;
                    if agg.failures as f64 > MAX_FAILURE_RATE * config.trials as f64 {
                        return Err(Error::FailureThreshold {
                            cell: cell.to_string(),
                            failures: agg.failures,
                            trials: config.trials,
                        });
                    }
                    results.push(agg);
                }
            }
        }
    }
    Ok(results)
}

/// Runs the sweep on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<AggregateResult>> {
    match threads {
        None => run_experiment(config),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(|| run_experiment(config))
        }
    }
}
