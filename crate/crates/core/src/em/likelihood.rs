//! Marginalized log-likelihood and symbol posteriors.
//!
//! Per sample n the squared distances to every hypothesized symbol are
//! summed across sensors:
//!
//! ```text
//! d[n][m] = Σ_l |r[l][n] - g_l I_m|²
//!         = c[n] + G |I_m|² - 2 Re(conj(I_m) z[n])
//! ```
//!
//! with `g_l = a_l e^{jθ_l}`, `c[n] = Σ_l |r[l][n]|²`, `G = Σ_l |g_l|²` and
//! `z[n] = Σ_l conj(g_l) r[l][n]`, so one sample costs O(L + M) instead of
//! O(L·M).

use num_complex::Complex64;

use crate::channel::{ChannelParams, ObservationBlock};
use crate::constellation::ConstellationSpec;
use crate::error::{Error, Result};

/// Sensor-combined sufficient statistics of a block under fixed gains.
pub(crate) struct Combined {
    pub power: Vec<f64>,
    pub matched: Vec<Complex64>,
    pub gain_power: f64,
}

pub(crate) fn combine(block: &ObservationBlock, params: &impl ChannelParams) -> Result<Combined> {
    if params.sensor_count() != block.sensor_count() || params.phases().len() != block.sensor_count() {
        return Err(Error::Usage(format!(
            "parameters for {} sensors applied to a block with {}",
            params.sensor_count(),
            block.sensor_count()
        )));
    }
    let n = block.block_length();
    let mut power = vec![0.0; n];
    let mut matched = vec![Complex64::new(0.0, 0.0); n];
    let gains = params.complex_gains();
    for (row, g) in block.rows().zip(&gains) {
        let gc = g.conj();
        for ((p, z), r) in power.iter_mut().zip(matched.iter_mut()).zip(row) {
            *p += r.norm_sqr();
            *z += gc * r;
        }
    }
    Ok(Combined {
        power,
        matched,
        gain_power: gains.iter().map(|g| g.norm_sqr()).sum(),
    })
}

fn check_noise(noise_power: f64) -> Result<()> {
    if !(noise_power > 0.0) || !noise_power.is_finite() {
        return Err(Error::Numeric {
            index: 0,
            message: format!("noise power must be positive and finite, got {noise_power}"),
        });
    }
    Ok(())
}

/// Fills `exps` with -d[n][m]/N0 for one sample and returns its maximum.
#[inline]
fn exponents(spec: &ConstellationSpec, energies: &[f64], c: &Combined, n: usize, inv_n0: f64, exps: &mut [f64]) -> f64 {
    let (p, z) = (c.power[n], c.matched[n]);
    let mut max = f64::NEG_INFINITY;
    for ((e, s), &es) in exps.iter_mut().zip(spec.symbols()).zip(energies) {
        let d = p + c.gain_power * es - 2.0 * (s.conj() * z).re;
        *e = -d * inv_n0;
        if *e > max {
            max = *e;
        }
    }
    max
}

fn symbol_energies(spec: &ConstellationSpec) -> Vec<f64> {
    spec.symbols().iter().map(|s| s.norm_sqr()).collect()
}

fn constant_term(block: &ObservationBlock, spec: &ConstellationSpec, noise_power: f64) -> f64 {
    let n = block.block_length() as f64;
    let l = block.sensor_count() as f64;
    -n * (spec.size() as f64).ln() - l * n * noise_power.ln()
}

/// Log-likelihood of the block under `spec` and the given parameters, with
/// the symbols marginalized out under equal priors.
pub fn log_likelihood(block: &ObservationBlock, params: &impl ChannelParams, spec: &ConstellationSpec) -> Result<f64> {
    let n0 = params.noise_power();
    check_noise(n0)?;
    let c = combine(block, params)?;
    let energies = symbol_energies(spec);
    let inv_n0 = n0.recip();
    let mut exps = vec![0.0; spec.size()];
    let mut total = constant_term(block, spec, n0);
    for n in 0..block.block_length() {
        let max = exponents(spec, &energies, &c, n, inv_n0, &mut exps);
        let lse = max + exps.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
        if !lse.is_finite() {
            return Err(Error::Numeric {
                index: n,
                message: "log-likelihood term is not finite".into(),
            });
        }
        total += lse;
    }
    Ok(total)
}

/// Symbol posteriors and the moments the M-step consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats {
    alphas: Vec<f64>,
    symbols: usize,
    /// Posterior mean symbol per sample.
    pub symbol_means: Vec<Complex64>,
    /// Σ_n Σ_m α[n][m] |I_m|².
    pub energy: f64,
    /// Log-likelihood at the parameters the posteriors were computed under.
    pub log_likelihood: f64,
}

impl PosteriorStats {
    /// Builds statistics from an explicit N×M posterior matrix (row-major).
    pub fn from_alphas(alphas: Vec<f64>, spec: &ConstellationSpec, log_likelihood: f64) -> Result<Self> {
        let m = spec.size();
        if alphas.is_empty() || alphas.len() % m != 0 {
            return Err(Error::Usage(format!("{} posteriors do not form rows of {m}", alphas.len())));
        }
        let energies = symbol_energies(spec);
        let mut energy = 0.0;
        let symbol_means = alphas
            .chunks_exact(m)
            .map(|row| {
                energy += row.iter().zip(&energies).map(|(a, e)| a * e).sum::<f64>();
                row.iter().zip(spec.symbols()).map(|(&a, s)| s * a).sum()
            })
            .collect();
        Ok(PosteriorStats {
            alphas,
            symbols: m,
            symbol_means,
            energy,
            log_likelihood,
        })
    }

    pub fn block_length(&self) -> usize {
        self.symbol_means.len()
    }

    /// Posterior probabilities of every symbol at sample `n`.
    pub fn row(&self, n: usize) -> &[f64] {
        &self.alphas[n * self.symbols..(n + 1) * self.symbols]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

/// Computes symbol posteriors from all sensors jointly.
pub fn e_step(block: &ObservationBlock, params: &impl ChannelParams, spec: &ConstellationSpec) -> Result<PosteriorStats> {
    let n0 = params.noise_power();
    check_noise(n0)?;
    let c = combine(block, params)?;
    let energies = symbol_energies(spec);
    let inv_n0 = n0.recip();
    let m = spec.size();
    let mut alphas = vec![0.0; block.block_length() * m];
    let mut total = constant_term(block, spec, n0);
    for (n, row) in alphas.chunks_exact_mut(m).enumerate() {
        let max = exponents(spec, &energies, &c, n, inv_n0, row);
        let mut sum = 0.0;
        for a in row.iter_mut() {
            *a = (*a - max).exp();
            sum += *a;
        }
        // the maximal entry contributes exp(0) = 1, so sum >= 1
        debug_assert!(sum >= 1.0);
        if !sum.is_finite() || !max.is_finite() {
            return Err(Error::Numeric {
                index: n,
                message: "posterior normalization is not finite".into(),
            });
        }
        let inv = sum.recip();
        row.iter_mut().for_each(|a| *a *= inv);
        total += max + sum.ln();
    }
    PosteriorStats::from_alphas(alphas, spec, total)
}
