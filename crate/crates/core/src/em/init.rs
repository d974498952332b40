//! Method-of-moments starting point for EM.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::likelihood::log_likelihood;
use super::{EmOptions, RefineGate};
use crate::channel::ObservationBlock;
use crate::constellation::ConstellationSpec;
use crate::moments::{
    eighth_order_phase, fuse_noise_estimates, kth_power_phase, m2m4_amplitude_noise, sample_moments, wrap_phase,
    NuisanceEstimate,
};

const NOISE_GRID_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMethod {
    /// Phases supplied by the caller.
    #[default]
    Provided,
    KthPower,
    EighthOrder,
}

/// Which branches the initializer and EM loop took.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InitPath {
    pub phase_method: PhaseMethod,
    /// Every per-sensor M2M4 noise estimate was unusable.
    pub noise_grid_fallback: bool,
    /// Per-sensor π/4 rotations applied when resolving the eighth-order ambiguity.
    pub cross_rotations: usize,
    pub grid_refined: bool,
    /// Phase nudges applied after degenerate M-steps.
    pub perturbations: usize,
    pub restart: usize,
}

/// Builds the method-of-moments starting point for `spec`.
///
/// Gains come from M2M4 per sensor, noise power from fusing the valid
/// per-sensor M2M4 values (or a likelihood-scored grid when none are valid),
/// phases from the K-th power estimator or, for cross QAM, the eighth-order
/// estimator. Above the refinement threshold each phase is then refined on a
/// coarse likelihood grid of ±π/K (see `refine_phases`).
pub fn initialize(block: &ObservationBlock, spec: &ConstellationSpec, options: &EmOptions) -> (NuisanceEstimate, InitPath) {
    let mut path = InitPath::default();
    let sensors = block.sensor_count();

    let mut gains = Vec::with_capacity(sensors);
    let mut per_sensor_noise = Vec::with_capacity(sensors);
    let mut validity = Vec::with_capacity(sensors);
    for r in block.rows() {
        let e = m2m4_amplitude_noise(r, spec);
        gains.push(e.gain);
        per_sensor_noise.push(e.noise_power);
        validity.push(e.valid);
    }

    let use_eighth = spec.format().is_cross_qam();
    path.phase_method = if use_eighth {
        PhaseMethod::EighthOrder
    } else {
        PhaseMethod::KthPower
    };
    let phases: Vec<f64> = block
        .rows()
        .map(|r| {
            let est = if use_eighth {
                eighth_order_phase(r, spec)
            } else {
                kth_power_phase(r, spec).or_else(|_| eighth_order_phase(r, spec))
            };
            est.unwrap_or(0.0)
        })
        .collect();

    let mut estimate = NuisanceEstimate {
        gains,
        phases,
        noise_power: f64::NAN,
        per_sensor_noise: Some(per_sensor_noise.clone()),
        validity: validity.clone(),
    };
    estimate.noise_power = fuse_noise_estimates(&per_sensor_noise, &validity, options.noise_fusion, || {
        path.noise_grid_fallback = true;
        noise_grid_search(block, spec, &estimate)
    });

    if use_eighth {
        path.cross_rotations = resolve_cross_ambiguity(block, spec, &mut estimate);
    }

    let refine = match options.refine_gate {
        RefineGate::Estimated => estimate.estimated_snr_db() >= options.grid_refine_snr_threshold_db,
        RefineGate::Known(snr_db) => snr_db >= options.grid_refine_snr_threshold_db,
        RefineGate::Never => false,
        RefineGate::Always => true,
    };
    if refine {
        refine_phases(block, spec, &mut estimate, options.grid_points);
        path.grid_refined = true;
    }
    (estimate, path)
}

fn score(block: &ObservationBlock, spec: &ConstellationSpec, estimate: &NuisanceEstimate) -> f64 {
    log_likelihood(block, estimate, spec).unwrap_or(f64::NEG_INFINITY)
}

/// Picks N0 on a log grid over [M̂2/100, M̂2] by likelihood.
fn noise_grid_search(block: &ObservationBlock, spec: &ConstellationSpec, estimate: &NuisanceEstimate) -> f64 {
    let m2 = block.rows().map(|r| sample_moments(r).0).sum::<f64>() / block.sensor_count() as f64;
    let m2 = if m2 > 0.0 { m2 } else { 1.0 };
    let (lo, hi) = ((m2 / 100.0).ln(), m2.ln());
    let mut trial = estimate.clone();
    let mut best = (f64::NEG_INFINITY, m2);
    for k in 0..NOISE_GRID_POINTS {
        let n0 = (lo + (hi - lo) * k as f64 / (NOISE_GRID_POINTS - 1) as f64).exp();
        trial.noise_power = n0;
        let s = score(block, spec, &trial);
        if s > best.0 {
            best = (s, n0);
        }
    }
    best.1
}

/// The eighth-order estimate leaves θ and θ + π/4 indistinguishable for a
/// 4-fold symmetric constellation. Tries the rotation on all sensors at once,
/// then on each sensor alone, keeping whatever scores higher.
fn resolve_cross_ambiguity(block: &ObservationBlock, spec: &ConstellationSpec, estimate: &mut NuisanceEstimate) -> usize {
    let mut moved = 0;
    let mut best = score(block, spec, estimate);
    let original = estimate.phases.clone();
    estimate.phases.iter_mut().for_each(|t| *t = wrap_phase(*t + PI / 4.0));
    let s = score(block, spec, estimate);
    if s > best {
        best = s;
        moved = estimate.phases.len();
    } else {
        estimate.phases = original;
    }
    if estimate.phases.len() == 1 {
        return moved;
    }
    for l in 0..estimate.phases.len() {
        let base = estimate.phases[l];
        estimate.phases[l] = wrap_phase(base + PI / 4.0);
        let s = score(block, spec, estimate);
        if s > best {
            best = s;
            moved += 1;
        } else {
            estimate.phases[l] = base;
        }
    }
    moved
}

fn grid_offset(i: usize, points: usize, span: f64) -> f64 {
    if points == 1 {
        0.0
    } else {
        -span + 2.0 * span * i as f64 / (points - 1) as f64
    }
}

/// Coordinate-wise search of each phase over a grid spanning ±π/K, then a
/// search over a common rotation of all sensors.
///
/// The likelihood is only invariant to rotating every sensor together, so
/// sensors after the first also try each of the K symmetric rotations of
/// their grid; this aligns them with the first sensor.
fn refine_phases(block: &ObservationBlock, spec: &ConstellationSpec, estimate: &mut NuisanceEstimate, points: usize) {
    let k = spec.symmetry_order();
    let span = PI / k as f64;
    let mut best = score(block, spec, estimate);
    for l in 0..estimate.phases.len() {
        let base = estimate.phases[l];
        let mut best_phase = base;
        let rotations = if l == 0 { 1 } else { k };
        for rot in 0..rotations {
            let centre = base + 2.0 * span * rot as f64;
            for i in 0..points {
                estimate.phases[l] = wrap_phase(centre + grid_offset(i, points, span));
                let s = score(block, spec, estimate);
                if s > best {
                    best = s;
                    best_phase = estimate.phases[l];
                }
            }
        }
        estimate.phases[l] = best_phase;
    }
    if estimate.phases.len() == 1 {
        return;
    }
    let base = estimate.phases.clone();
    let mut best_shift = 0.0;
    for i in 0..points {
        let shift = grid_offset(i, points, span);
        for (t, b) in estimate.phases.iter_mut().zip(&base) {
            *t = wrap_phase(b + shift);
        }
        let s = score(block, spec, estimate);
        if s > best {
            best = s;
            best_shift = shift;
        }
    }
    for (t, b) in estimate.phases.iter_mut().zip(&base) {
        *t = wrap_phase(b + best_shift);
    }
}
