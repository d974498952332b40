//! Candidate modulation formats.
//!
//! Every constellation is scaled to unit average symbol energy and carries
//! the handful of moments the blind estimators need, so they are computed
//! once per format instead of once per trial.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a modulation format.
///
/// `Qam(32)` is the cross constellation; other `Qam` sizes must be even
/// powers of two (square grids).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FormatId {
    Qam(u32),
    Psk(u32),
}

impl FormatId {
    pub const QAM16: FormatId = FormatId::Qam(16);
    pub const QAM32: FormatId = FormatId::Qam(32);
    pub const QAM64: FormatId = FormatId::Qam(64);

    /// The ternary candidate set used by default.
    pub fn default_candidates() -> Vec<FormatId> {
        vec![Self::QAM16, Self::QAM32, Self::QAM64]
    }

    pub fn is_cross_qam(self) -> bool {
        self == Self::QAM32
    }
}

impl fmt::Display for FormatId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatId::Qam(m) => write!(f, "{m}qam"),
            FormatId::Psk(m) => write!(f, "{m}psk"),
        }
    }
}

impl FromStr for FormatId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let named = match lower.as_str() {
            "bpsk" => Some(FormatId::Psk(2)),
            "qpsk" => Some(FormatId::Psk(4)),
            _ => None,
        };
        if let Some(id) = named {
            return Ok(id);
        }
        let bad = || Error::Config(format!("unknown modulation format '{s}'"));
        let (digits, kind) = if let Some(d) = lower.strip_suffix("qam") {
            (d.trim_end_matches('-'), "qam")
        } else if let Some(d) = lower.strip_suffix("psk") {
            (d.trim_end_matches('-'), "psk")
        } else {
            return Err(bad());
        };
        let m: u32 = digits.parse().map_err(|_| bad())?;
        Ok(if kind == "qam" {
            FormatId::Qam(m)
        } else {
            FormatId::Psk(m)
        })
    }
}

impl Serialize for FormatId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FormatId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma separated list such as `16qam,32qam,64qam`.
pub fn parse_format_list(list: &str) -> Result<Vec<FormatId>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// A candidate modulation: unit-energy symbols plus cached moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationSpec {
    format: FormatId,
    symbols: Vec<Complex64>,
    symmetry_order: u32,
    fourth_moment: f64,
    kth_conj_moment: Complex64,
    eighth_moment: Complex64,
}

/// The three moments consumed by the blind estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CachedMoments {
    /// E{|I|^4}
    pub fourth: f64,
    /// E{conj(I)^K}
    pub kth_conj: Complex64,
    /// E{I^8}
    pub eighth: Complex64,
}

impl ConstellationSpec {
    /// Builds the unit-energy constellation for `format`.
    pub fn build(format: FormatId) -> Result<Self> {
        let (raw, k) = match format {
            FormatId::Qam(32) => (cross_qam32(), 4),
            FormatId::Qam(m) => (square_qam(m)?, 4),
            FormatId::Psk(m) => (psk(m)?, m),
        };
        Self::from_points(format, raw, k)
    }

    /// Builds a spec from arbitrary points, normalizing to unit average energy.
    ///
    /// The caller asserts rotational symmetry of order `symmetry_order`; it is
    /// checked here.
    pub fn from_points(format: FormatId, points: Vec<Complex64>, symmetry_order: u32) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config(format!("{format}: empty symbol set")));
        }
        if symmetry_order == 0 {
            return Err(Error::Config(format!("{format}: symmetry order must be positive")));
        }
        let energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(Error::Config(format!("{format}: symbol set has no energy")));
        }
        let scale = energy.sqrt().recip();
        let symbols: Vec<Complex64> = points.iter().map(|p| p * scale).collect();

        for (i, a) in symbols.iter().enumerate() {
            if symbols[i + 1..].iter().any(|b| (a - b).norm() < 1e-9) {
                return Err(Error::Config(format!("{format}: duplicate symbol {a}")));
            }
        }
        let rot = Complex64::from_polar(1.0, 2.0 * PI / symmetry_order as f64);
        let closed = symbols
            .iter()
            .all(|s| symbols.iter().any(|t| (s * rot - t).norm() < 1e-9));
        if !closed {
            return Err(Error::Config(format!(
                "{format}: symbol set is not invariant under rotation by 2pi/{symmetry_order}"
            )));
        }

        let moments = moments_of(&symbols, symmetry_order);
        Ok(ConstellationSpec {
            format,
            symbols,
            symmetry_order,
            fourth_moment: moments.fourth,
            kth_conj_moment: moments.kth_conj,
            eighth_moment: moments.eighth,
        })
    }

    pub fn format(&self) -> FormatId {
        self.format
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    /// K such that the symbol set is invariant under rotation by 2π/K.
    pub fn symmetry_order(&self) -> u32 {
        self.symmetry_order
    }

    pub fn fourth_moment(&self) -> f64 {
        self.fourth_moment
    }

    pub fn kth_conj_moment(&self) -> Complex64 {
        self.kth_conj_moment
    }

    pub fn eighth_moment(&self) -> Complex64 {
        self.eighth_moment
    }

    pub fn cached_moments(&self) -> CachedMoments {
        CachedMoments {
            fourth: self.fourth_moment,
            kth_conj: self.kth_conj_moment,
            eighth: self.eighth_moment,
        }
    }
}

fn moments_of(symbols: &[Complex64], k: u32) -> CachedMoments {
    let m = symbols.len() as f64;
    let mut fourth = 0.0;
    let mut kth_conj = Complex64::new(0.0, 0.0);
    let mut eighth = Complex64::new(0.0, 0.0);
    for s in symbols {
        fourth += s.norm_sqr().powi(2);
        kth_conj += s.conj().powu(k);
        eighth += s.powu(8);
    }
    CachedMoments {
        fourth: fourth / m,
        kth_conj: kth_conj / m,
        eighth: eighth / m,
    }
}

/// Odd-integer grid coordinates -(k-1), ..., k-1.
fn odd_grid(k: i32) -> impl Iterator<Item = f64> + Clone {
    (0..k).map(move |i| (2 * i - (k - 1)) as f64)
}

fn square_qam(m: u32) -> Result<Vec<Complex64>> {
    let side = (m as f64).sqrt().round() as u32;
    if m < 4 || side * side != m || !side.is_power_of_two() {
        return Err(Error::Config(format!("{m}-QAM is not a supported square constellation")));
    }
    let grid = odd_grid(side as i32);
    Ok(grid
        .clone()
        .flat_map(|y| grid.clone().map(move |x| Complex64::new(x, y)))
        .collect())
}

/// 6x6 odd grid with the four corners removed.
fn cross_qam32() -> Vec<Complex64> {
    let grid = odd_grid(6);
    grid.clone()
        .flat_map(|y| grid.clone().map(move |x| Complex64::new(x, y)))
        .filter(|p| !(p.re.abs() == 5.0 && p.im.abs() == 5.0))
        .collect()
}

fn psk(m: u32) -> Result<Vec<Complex64>> {
    if m < 2 {
        return Err(Error::Config(format!("{m}-PSK is not supported")));
    }
    let offset = if m == 4 { PI / 4.0 } else { 0.0 };
    Ok((0..m)
        .map(|k| Complex64::from_polar(1.0, offset + 2.0 * PI * k as f64 / m as f64))
        .collect())
}
