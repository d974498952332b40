//! Blind moment estimators and known-symbol ML estimators.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, ObservationBlock};
use crate::constellation::ConstellationSpec;
use crate::error::{Error, Result};

/// Estimate of the nuisance parameters (gains, phases, noise power).
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceEstimate {
    pub gains: Vec<f64>,
    pub phases: Vec<f64>,
    pub noise_power: f64,
    /// Per-sensor M2M4 noise estimates before fusion, when available.
    pub per_sensor_noise: Option<Vec<f64>>,
    /// Per-sensor flags marking usable M2M4 outputs.
    pub validity: Vec<bool>,
}

impl NuisanceEstimate {
    pub fn new(gains: Vec<f64>, phases: Vec<f64>, noise_power: f64) -> Self {
        let validity = vec![true; gains.len()];
        NuisanceEstimate {
            gains,
            phases,
            noise_power,
            per_sensor_noise: None,
            validity,
        }
    }

    pub fn from_params(p: &impl ChannelParams) -> Self {
        Self::new(p.gains().to_vec(), p.phases().to_vec(), p.noise_power())
    }

    /// Mean over sensors of â² / N̂0, in dB.
    pub fn estimated_snr_db(&self) -> f64 {
        let mean_power = self.gains.iter().map(|a| a * a).sum::<f64>() / self.gains.len() as f64;
        10.0 * (mean_power / self.noise_power).log10()
    }
}

impl ChannelParams for NuisanceEstimate {
    fn gains(&self) -> &[f64] {
        &self.gains
    }
    fn phases(&self) -> &[f64] {
        &self.phases
    }
    fn noise_power(&self) -> f64 {
        self.noise_power
    }
}

/// How per-sensor M2M4 noise estimates are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFusion {
    /// Arithmetic mean of the valid estimates.
    #[default]
    Mean,
    /// Sum of the valid estimates, as the displayed M2M4 formula reads.
    Sum,
}

/// Wraps `x` into (-π/k, π/k].
pub fn wrap_symmetric(x: f64, k: u32) -> f64 {
    let half = PI / k as f64;
    let period = 2.0 * half;
    let w = x - period * ((x - half) / period).ceil();
    if w <= -half {
        w + period
    } else {
        w
    }
}

/// Wraps an angle into [-π, π).
pub fn wrap_phase(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Sample second and fourth absolute moments of one sensor's samples.
pub fn sample_moments(r: &[Complex64]) -> (f64, f64) {
    let n = r.len() as f64;
    let (m2, m4) = r.iter().fold((0.0, 0.0), |(m2, m4), s| {
        let p = s.norm_sqr();
        (m2 + p, m4 + p * p)
    });
    (m2 / n, m4 / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct M2M4Estimate {
    pub gain: f64,
    pub noise_power: f64,
    pub valid: bool,
}

/// M2M4 gain and noise estimate for one sensor under the hypothesized
/// constellation.
///
/// A negative radicand falls back to â = √M̂2 (all signal). Either that or a
/// non-positive noise estimate clears `valid`.
pub fn m2m4_amplitude_noise(r: &[Complex64], spec: &ConstellationSpec) -> M2M4Estimate {
    let (m2, m4) = sample_moments(r);
    m2m4_from_moments(m2, m4, spec.fourth_moment())
}

pub fn m2m4_from_moments(m2: f64, m4: f64, kurtosis: f64) -> M2M4Estimate {
    let radicand = (2.0 * m2 * m2 - m4) / (2.0 - kurtosis);
    if !(radicand >= 0.0) {
        return M2M4Estimate {
            gain: m2.sqrt(),
            noise_power: 0.0,
            valid: false,
        };
    }
    let gain = radicand.powf(0.25);
    let noise_power = m2 - gain * gain;
    M2M4Estimate {
        gain,
        noise_power,
        valid: noise_power > 0.0 && noise_power.is_finite(),
    }
}

/// Combines per-sensor noise estimates, using only valid positive entries.
///
/// Calls `fallback` when no entry is usable.
pub fn fuse_noise_estimates(
    per_sensor: &[f64],
    validity: &[bool],
    rule: NoiseFusion,
    fallback: impl FnOnce() -> f64,
) -> f64 {
    let usable: Vec<f64> = per_sensor
        .iter()
        .zip(validity)
        .filter(|&(&n0, &ok)| ok && n0 > 0.0 && n0.is_finite())
        .map(|(&n0, _)| n0)
        .collect();
    if usable.is_empty() {
        return fallback();
    }
    let sum: f64 = usable.iter().sum();
    match rule {
        NoiseFusion::Mean => sum / usable.len() as f64,
        NoiseFusion::Sum => sum,
    }
}

/// K-th power blind phase estimate, in (-π/K, π/K].
pub fn kth_power_phase(r: &[Complex64], spec: &ConstellationSpec) -> Result<f64> {
    let weight = spec.kth_conj_moment();
    if weight.norm() < 1e-12 {
        return Err(Error::EstimatorInapplicable(format!(
            "{} has a vanishing E{{I*^K}}; use the eighth-order estimator",
            spec.format()
        )));
    }
    let k = spec.symmetry_order();
    let acc: Complex64 = r.iter().map(|s| s.powu(k)).sum();
    Ok(wrap_symmetric((weight * acc).arg() / k as f64, k))
}

/// Eighth-order blind phase estimate, in (-π/8, π/8].
///
/// The estimate is only defined modulo π/4, so constellations with 4-fold
/// symmetry keep a residual π/4 ambiguity that the initializer resolves.
pub fn eighth_order_phase(r: &[Complex64], spec: &ConstellationSpec) -> Result<f64> {
    let weight = spec.eighth_moment().conj();
    if weight.norm() < 1e-12 {
        return Err(Error::EstimatorInapplicable(format!(
            "{} has a vanishing eighth moment",
            spec.format()
        )));
    }
    let acc: Complex64 = r.iter().map(|s| s.powu(8)).sum();
    Ok(wrap_symmetric((weight * acc).arg() / 8.0, 8))
}

/// Closed-form ML estimates of every sensor's gain and phase and the pooled
/// noise power when the transmitted symbols are known.
pub fn ml_known_symbols(block: &ObservationBlock, symbols: &[Complex64]) -> Result<NuisanceEstimate> {
    if symbols.len() != block.block_length() {
        return Err(Error::Usage(format!(
            "{} symbols for a block of length {}",
            symbols.len(),
            block.block_length()
        )));
    }
    let energy: f64 = symbols.iter().map(|s| s.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(Error::Degenerate("symbol vector is all zero".into()));
    }
    let mut gains = Vec::with_capacity(block.sensor_count());
    let mut phases = Vec::with_capacity(block.sensor_count());
    let mut residual = 0.0;
    for r in block.rows() {
        let corr: Complex64 = symbols.iter().zip(r).map(|(i, x)| i.conj() * x).sum();
        let theta = wrap_phase(corr.im.atan2(corr.re));
        let a = (Complex64::from_polar(1.0, -theta) * corr).re / energy;
        let g = Complex64::from_polar(a, theta);
        residual += symbols.iter().zip(r).map(|(i, x)| (x - g * i).norm_sqr()).sum::<f64>();
        gains.push(a);
        phases.push(theta);
    }
    let noise_power = residual / (block.sensor_count() * block.block_length()) as f64;
    Ok(NuisanceEstimate::new(gains, phases, noise_power))
}
