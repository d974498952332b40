//! Per-hypothesis EM estimation of the nuisance parameters.
//!
//! The transmitted symbols are the missing data. The E-step fuses every
//! sensor into one posterior per sample; given those posteriors the M-step
//! decouples into a closed-form update per sensor plus a pooled noise update.

mod init;
mod likelihood;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ObservationBlock;
use crate::constellation::ConstellationSpec;
use crate::error::{Error, Result};
use crate::moments::{wrap_phase, NoiseFusion, NuisanceEstimate};

pub use init::{initialize, InitPath, PhaseMethod};
pub use likelihood::{e_step, log_likelihood, PosteriorStats};

/// When the initializer refines phases with a coarse likelihood grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "snr_db")]
pub enum RefineGate {
    /// Gate on the estimated SNR, mean(â²)/N̂0.
    Estimated,
    /// Gate on a known average SNR in dB (simulation reproduction).
    Known(f64),
    Never,
    Always,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    /// Relative log-likelihood improvement below which iteration stops.
    pub stop_delta: f64,
    pub max_iterations: usize,
    pub grid_refine_snr_threshold_db: f64,
    pub grid_points: usize,
    pub refine_gate: RefineGate,
    /// Extra EM runs from rotated initial phases; the best is kept.
    pub restarts: usize,
    pub noise_fusion: NoiseFusion,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            stop_delta: 1e-4,
            max_iterations: 500,
            grid_refine_snr_threshold_db: 10.0,
            grid_points: 16,
            refine_gate: RefineGate::Estimated,
            restarts: 0,
            noise_fusion: NoiseFusion::Mean,
        }
    }
}

impl EmOptions {
    pub fn with_delta(stop_delta: f64) -> Self {
        EmOptions {
            stop_delta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stop_delta > 0.0) {
            return Err(Error::Config(format!("stop_delta must be positive, got {}", self.stop_delta)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.grid_points == 0 {
            return Err(Error::Config("grid_points must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one EM run under one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct EmResult {
    pub estimate: NuisanceEstimate,
    pub final_llf: f64,
    /// Log-likelihood of the initial point followed by one value per iteration.
    pub llf_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub init_used: InitPath,
}

/// Closed-form maximizer of the expected complete-data log-likelihood.
pub fn m_step(block: &ObservationBlock, stats: &PosteriorStats) -> Result<NuisanceEstimate> {
    if stats.block_length() != block.block_length() {
        return Err(Error::Usage("posteriors and block have different lengths".into()));
    }
    if !(stats.energy > 0.0) {
        return Err(Error::Degenerate(format!("posterior symbol energy {} is not positive", stats.energy)));
    }
    // ‖Υ‖² <= E, so this bounds |Υᴴr_l| from above without cancellation
    let mean_norm = stats.energy.sqrt();
    let mut gains = Vec::with_capacity(block.sensor_count());
    let mut phases = Vec::with_capacity(block.sensor_count());
    let mut cross = 0.0;
    let mut total_power = 0.0;
    for (l, r) in block.rows().enumerate() {
        let power: f64 = r.iter().map(|x| x.norm_sqr()).sum();
        let corr: Complex64 = stats.symbol_means.iter().zip(r).map(|(v, x)| v.conj() * x).sum();
        if corr.norm() <= 1e-12 * mean_norm * power.sqrt() {
            return Err(Error::Degenerate(format!(
                "posterior means are orthogonal to sensor {l}; phase undefined"
            )));
        }
        let theta = wrap_phase(corr.im.atan2(corr.re));
        let a = (Complex64::from_polar(1.0, -theta) * corr).re / stats.energy;
        cross += a * (Complex64::from_polar(1.0, -theta) * corr).re;
        total_power += power;
        gains.push(a);
        phases.push(theta);
    }
    // Σ_n Σ_m α Σ_l |r - g_l I_m|² = Σ|r|² - 2 Σ_l Re(conj(g_l) Υᴴr_l) + Σ_l a_l² E
    let gain_energy: f64 = gains.iter().map(|a| a * a).sum::<f64>() * stats.energy;
    let residual = total_power - 2.0 * cross + gain_energy;
    let noise_power = (residual / (block.sensor_count() * block.block_length()) as f64).max(f64::MIN_POSITIVE);
    Ok(NuisanceEstimate::new(gains, phases, noise_power))
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / old.abs().max(1.0)
}

const MAX_PERTURBATIONS: usize = 8;

/// Runs EM from `init` until the relative log-likelihood improvement drops
/// below `options.stop_delta` or the iteration cap is hit.
///
/// An infinite `stop_delta` accepts the initial point without iterating.
pub fn run_em(
    block: &ObservationBlock,
    spec: &ConstellationSpec,
    init: NuisanceEstimate,
    options: &EmOptions,
) -> Result<EmResult> {
    run_em_from(block, spec, init, InitPath::default(), options)
}

fn run_em_from(
    block: &ObservationBlock,
    spec: &ConstellationSpec,
    init: NuisanceEstimate,
    init_used: InitPath,
    options: &EmOptions,
) -> Result<EmResult> {
    options.validate()?;
    let mut path = init_used;
    let mut current = init;
    let mut stats = e_step(block, &current, spec)?;
    let mut trace = vec![stats.log_likelihood];
    let mut converged = options.stop_delta.is_infinite();

    let nudge = PI / (4.0 * spec.symmetry_order() as f64);
    while !converged && trace.len() <= options.max_iterations {
        let next = match m_step(block, &stats) {
            Ok(next) => next,
            Err(Error::Degenerate(_)) if path.perturbations < MAX_PERTURBATIONS => {
                path.perturbations += 1;
                current.phases.iter_mut().for_each(|t| *t = wrap_phase(*t + nudge));
                stats = e_step(block, &current, spec)?;
                *trace.last_mut().expect("trace is never empty") = stats.log_likelihood;
                continue;
            }
            Err(Error::Degenerate(_)) => break,
            Err(e) => return Err(e),
        };
        let next_stats = e_step(block, &next, spec)?;
        let previous = stats.log_likelihood;
        trace.push(next_stats.log_likelihood);
        current = next;
        stats = next_stats;
        converged = relative_change(stats.log_likelihood, previous) < options.stop_delta;
    }

    Ok(EmResult {
        final_llf: stats.log_likelihood,
        iterations: trace.len() - 1,
        llf_trace: trace,
        estimate: current,
        converged,
        init_used: path,
    })
}

/// Initializes and runs EM for one hypothesis, including any restarts.
pub fn estimate(block: &ObservationBlock, spec: &ConstellationSpec, options: &EmOptions) -> Result<EmResult> {
    let (init, path) = initialize(block, spec, options);
    let mut best = run_em_from(block, spec, init.clone(), path.clone(), options)?;
    let step = 2.0 * PI / spec.symmetry_order() as f64 / (options.restarts + 1) as f64;
    for k in 1..=options.restarts {
        let mut start = init.clone();
        // rotate every other sensor so relative phases change too
        for (l, t) in start.phases.iter_mut().enumerate() {
            let offset = if l % 2 == 0 { k as f64 } else { -(k as f64) };
            *t = wrap_phase(*t + offset * step);
        }
        let mut restart_path = path.clone();
        restart_path.restart = k;
        let candidate = run_em_from(block, spec, start, restart_path, options)?;
        if candidate.final_llf > best.final_llf {
            best = candidate;
        }
    }
    Ok(best)
}
