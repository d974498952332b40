//! Multi-sensor flat block-fading channel.
//!
//! Every sensor sees the same symbol block through its own gain and phase,
//! plus independent complex white Gaussian noise:
//! `r[l][n] = a_l * exp(j*theta_l) * I[n] + w[l][n]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constellation::ConstellationSpec;
use crate::error::{Error, Result};

/// Read access to a set of channel parameters, true or estimated.
pub trait ChannelParams {
    fn gains(&self) -> &[f64];
    fn phases(&self) -> &[f64];
    fn noise_power(&self) -> f64;

    fn sensor_count(&self) -> usize {
        self.gains().len()
    }

    /// Complex per-sensor gains a_l * exp(j*theta_l).
    fn complex_gains(&self) -> Vec<Complex64> {
        self.gains()
            .iter()
            .zip(self.phases())
            .map(|(&a, &t)| Complex64::from_polar(a, t))
            .collect()
    }
}

/// Ground-truth gains, phases and noise power of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: Vec<f64>,
    pub phases: Vec<f64>,
    pub noise_power: f64,
}

impl ChannelRealization {
    pub fn new(gains: Vec<f64>, phases: Vec<f64>, noise_power: f64) -> Result<Self> {
        if gains.is_empty() || gains.len() != phases.len() {
            return Err(Error::Config(format!(
                "channel needs matching non-empty gains and phases (got {} and {})",
                gains.len(),
                phases.len()
            )));
        }
        if !(noise_power > 0.0) || !noise_power.is_finite() {
            return Err(Error::Config(format!("noise power must be positive, got {noise_power}")));
        }
        if gains.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::Config("channel gains must be finite and non-negative".into()));
        }
        Ok(ChannelRealization {
            gains,
            phases,
            noise_power,
        })
    }
}

impl ChannelParams for ChannelRealization {
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

/// Rayleigh amplitude fading with scale σ; E{a²} = 2σ².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingModel {
    rayleigh_scale: f64,
}

impl FadingModel {
    pub fn new(rayleigh_scale: f64) -> Result<Self> {
        if !(rayleigh_scale > 0.0) || !rayleigh_scale.is_finite() {
            return Err(Error::Config(format!(
                "Rayleigh scale must be positive, got {rayleigh_scale}"
            )));
        }
        Ok(FadingModel { rayleigh_scale })
    }

    /// Builds the model from its average power 2σ².
    pub fn from_average_power(power: f64) -> Result<Self> {
        Self::new((power / 2.0).sqrt())
    }

    pub fn rayleigh_scale(&self) -> f64 {
        self.rayleigh_scale
    }

    pub fn average_power(&self) -> f64 {
        2.0 * self.rayleigh_scale * self.rayleigh_scale
    }

    /// Noise power giving the requested average SNR.
    pub fn noise_power_for_snr_db(&self, snr_db: f64) -> f64 {
        self.average_power() / 10f64.powf(snr_db / 10.0)
    }

    fn sample_gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.rayleigh_scale * (-2.0 * (1.0 - u).ln()).sqrt()
    }
}

impl Default for FadingModel {
    fn default() -> Self {
        FadingModel {
            rayleigh_scale: 0.5f64.sqrt(),
        }
    }
}

/// L×N matrix of received complex baseband samples, stored sensor-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBlock {
    sensors: usize,
    length: usize,
    samples: Vec<Complex64>,
}

impl ObservationBlock {
    /// Builds a block from one row per sensor.
    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::input("observation block has no sensors"));
        };
        let length = first.len();
        if length == 0 {
            return Err(Error::input("observation block has no samples"));
        }
        if let Some((l, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != length) {
            return Err(Error::input(format!(
                "dimension mismatch: sensor 0 has {length} samples, sensor {l} has {}",
                row.len()
            )));
        }
        let sensors = rows.len();
        Self::from_flat(sensors, length, rows.into_iter().flatten().collect())
    }

    /// Builds a block from sensor-major samples.
    pub fn from_flat(sensors: usize, length: usize, samples: Vec<Complex64>) -> Result<Self> {
        if sensors == 0 || length == 0 {
            return Err(Error::input("observation block must be at least 1x1"));
        }
        if samples.len() != sensors * length {
            return Err(Error::input(format!(
                "dimension mismatch: {} samples for a {sensors}x{length} block",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::input(format!(
                "non-finite sample at sensor {}, n {}",
                i / length,
                i % length
            )));
        }
        Ok(ObservationBlock {
            sensors,
            length,
            samples,
        })
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors
    }

    pub fn block_length(&self) -> usize {
        self.length
    }

    /// Samples r_l of one sensor.
    pub fn sensor(&self, l: usize) -> &[Complex64] {
        &self.samples[l * self.length..(l + 1) * self.length]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.samples.chunks_exact(self.length)
    }

    pub fn get(&self, l: usize, n: usize) -> Complex64 {
        self.samples[l * self.length + n]
    }

    pub fn as_flat(&self) -> &[Complex64] {
        &self.samples
    }

    /// Applies `f` to every sample, keeping the shape.
    pub fn map(&self, f: impl Fn(usize, Complex64) -> Complex64) -> Self {
        let length = self.length;
        ObservationBlock {
            sensors: self.sensors,
            length,
            samples: self
                .samples
                .iter()
                .enumerate()
                .map(|(i, &s)| f(i / length, s))
                .collect(),
        }
    }
}

/// Draws independent Rayleigh gains and uniform phases for `sensors` radios.
pub fn sample_channel<R: Rng + ?Sized>(
    rng: &mut R,
    sensors: usize,
    fading: &FadingModel,
    noise_power: f64,
) -> Result<ChannelRealization> {
    if sensors == 0 {
        return Err(Error::Config("sensor count must be at least 1".into()));
    }
    let mut gains = Vec::with_capacity(sensors);
    let mut phases = Vec::with_capacity(sensors);
    for _ in 0..sensors {
        gains.push(fading.sample_gain(rng));
        phases.push(rng.random_range(-PI..PI));
    }
    ChannelRealization::new(gains, phases, noise_power)
}

/// Draws `n` equiprobable symbol indices.
pub fn draw_symbols<R: Rng + ?Sized>(rng: &mut R, spec: &ConstellationSpec, n: usize) -> Vec<usize> {
    let m = spec.size();
    (0..n).map(|_| rng.random_range(0..m)).collect()
}

/// Passes a shared symbol sequence through every sensor's channel.
pub fn observe<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &ConstellationSpec,
    channel: &ChannelRealization,
    indices: &[usize],
) -> Result<ObservationBlock> {
    if indices.is_empty() {
        return Err(Error::Config("block length must be at least 1".into()));
    }
    let sigma = (channel.noise_power / 2.0).sqrt();
    let symbols = spec.symbols();
    let mut samples = Vec::with_capacity(indices.len() * channel.sensor_count());
    for g in channel.complex_gains() {
        for &idx in indices {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            samples.push(g * symbols[idx] + Complex64::new(re, im) * sigma);
        }
    }
    ObservationBlock::from_flat(channel.sensor_count(), indices.len(), samples)
}

/// Draws a symbol block and observes it at every sensor.
///
/// Returns the block and the transmitted symbol indices.
pub fn synthesize<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &ConstellationSpec,
    channel: &ChannelRealization,
    n: usize,
) -> Result<(ObservationBlock, Vec<usize>)> {
    let indices = draw_symbols(rng, spec, n);
    let block = observe(rng, spec, channel, &indices)?;
    Ok((block, indices))
}

/// Average SNR 2σ²/N0 in dB.
pub fn average_snr_db(fading: &FadingModel, noise_power: f64) -> f64 {
    10.0 * (fading.average_power() / noise_power).log10()
}

/// Per-realization SNR a²/N0 in dB.
pub fn instantaneous_snr_db(gain: f64, noise_power: f64) -> f64 {
    10.0 * (gain * gain / noise_power).log10()
}
