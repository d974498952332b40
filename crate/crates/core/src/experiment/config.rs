use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::Method;
use crate::constellation::FormatId;
use crate::em::{EmOptions, RefineGate};
use crate::error::{Error, Result};
use crate::moments::NoiseFusion;

/// How the transmitted modulation is chosen per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSelection {
    #[default]
    Uniform,
    /// trial index modulo the number of candidates
    Cycle,
}

/// What decides whether the initializer runs its phase grid search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Estimated SNR of the block under each hypothesis.
    #[default]
    Estimated,
    /// The cell's nominal average SNR.
    TrueSnr,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridRefineConfig {
    pub snr_threshold_db: f64,
    pub grid_points: usize,
    pub gate: GateMode,
}

impl Default for GridRefineConfig {
    fn default() -> Self {
        GridRefineConfig {
            snr_threshold_db: 10.0,
            grid_points: 16,
            gate: GateMode::Estimated,
        }
    }
}

/// A Monte Carlo sweep over (SNR, sensor count, stopping delta, classifier).
///
/// Every field has a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub snr_db_list: Vec<f64>,
    pub sensor_counts: Vec<usize>,
    pub block_length: usize,
    pub trials: usize,
    pub stop_deltas: Vec<f64>,
    pub candidate_formats: Vec<FormatId>,
    pub classifiers: Vec<Method>,
    pub master_seed: u64,
    /// Average fading power 2σ².
    pub fading_power: f64,
    pub grid_refine: GridRefineConfig,
    pub max_iterations: usize,
    pub restarts: usize,
    pub noise_fusion: NoiseFusion,
    pub truth_selection: TruthSelection,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            snr_db_list: vec![0.0, 5.0],
            sensor_counts: vec![1, 2, 4],
            block_length: 500,
            trials: 1000,
            stop_deltas: vec![1e-4],
            candidate_formats: FormatId::default_candidates(),
            classifiers: vec![Method::EmHml],
            master_seed: 1,
            fading_power: 1.0,
            grid_refine: GridRefineConfig::default(),
            max_iterations: 500,
            restarts: 0,
            noise_fusion: NoiseFusion::Mean,
            truth_selection: TruthSelection::Uniform,
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid experiment config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |len: usize, name: &str| {
            if len == 0 {
                Err(Error::Config(format!("{name} must not be empty")))
            } else {
                Ok(())
            }
        };
        nonempty(self.snr_db_list.len(), "snr_db_list")?;
        nonempty(self.sensor_counts.len(), "sensor_counts")?;
        nonempty(self.stop_deltas.len(), "stop_deltas")?;
        nonempty(self.classifiers.len(), "classifiers")?;
        if self.trials == 0 || self.block_length == 0 {
            return Err(Error::Config("trials and block_length must be at least 1".into()));
        }
        if self.sensor_counts.contains(&0) {
            return Err(Error::Config("sensor counts must be positive".into()));
        }
        if self.snr_db_list.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR values must be finite".into()));
        }
        if !(self.fading_power > 0.0) {
            return Err(Error::Config("fading_power must be positive".into()));
        }
        for &d in &self.stop_deltas {
            self.em_options(d, 0.0).validate()?;
        }
        crate::classifier::CandidateSet::new(&self.candidate_formats)?;
        Ok(())
    }

    /// EM options for one cell.
    pub fn em_options(&self, stop_delta: f64, snr_db: f64) -> EmOptions {
        EmOptions {
            stop_delta,
            max_iterations: self.max_iterations,
            grid_refine_snr_threshold_db: self.grid_refine.snr_threshold_db,
            grid_points: self.grid_refine.grid_points,
            refine_gate: match self.grid_refine.gate {
                GateMode::Estimated => RefineGate::Estimated,
                GateMode::TrueSnr => RefineGate::Known(snr_db),
                GateMode::Never => RefineGate::Never,
            },
            restarts: self.restarts,
            noise_fusion: self.noise_fusion,
        }
    }
}
