//! Hypothesis-level decisions over a set of candidate constellations.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, ObservationBlock};
use crate::constellation::{ConstellationSpec, FormatId};
use crate::em::{self, initialize, log_likelihood, EmOptions, EmResult, RefineGate};
use crate::error::{Error, Result};

/// Ordered candidate constellations, uniform prior.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    specs: Vec<ConstellationSpec>,
}

impl CandidateSet {
    pub fn new(formats: &[FormatId]) -> Result<Self> {
        if formats.len() < 2 {
            return Err(Error::Config("need at least two candidate formats".into()));
        }
        for (i, f) in formats.iter().enumerate() {
            if formats[..i].contains(f) {
                return Err(Error::Config(format!("candidate {f} listed twice")));
            }
        }
        let specs = formats.iter().map(|&f| ConstellationSpec::build(f)).collect::<Result<_>>()?;
        Ok(CandidateSet { specs })
    }

    pub fn formats(&self) -> Vec<FormatId> {
        self.specs.iter().map(ConstellationSpec::format).collect()
    }

    pub fn index_of(&self, format: FormatId) -> Option<usize> {
        self.specs.iter().position(|s| s.format() == format)
    }
}

impl Deref for CandidateSet {
    type Target = [ConstellationSpec];

    fn deref(&self) -> &[ConstellationSpec] {
        &self.specs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// EM-based hybrid maximum likelihood.
    EmHml,
    /// Clairvoyant average-likelihood test with the true channel.
    Alrt,
    /// Likelihood at the method-of-moments estimates only.
    MomHlrt,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::EmHml, Method::Alrt, Method::MomHlrt];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::EmHml => "em_hml",
            Method::Alrt => "alrt",
            Method::MomHlrt => "mom_hlrt",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "em_hml" | "em" => Ok(Method::EmHml),
            "alrt" => Ok(Method::Alrt),
            "mom_hlrt" | "mom" => Ok(Method::MomHlrt),
            other => Err(Error::Config(format!("unknown classifier '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub decision: usize,
    pub per_hypothesis_llf: Vec<f64>,
    /// EM runs per hypothesis; only for [`Method::EmHml`].
    pub per_hypothesis_em: Option<Vec<EmResult>>,
    pub method: Method,
}

impl ClassificationResult {
    fn from_llfs(per_hypothesis_llf: Vec<f64>, per_hypothesis_em: Option<Vec<EmResult>>, method: Method) -> Self {
        ClassificationResult {
            decision: argmax(&per_hypothesis_llf),
            per_hypothesis_llf,
            per_hypothesis_em,
            method,
        }
    }

    /// EM iterations spent on the decided hypothesis (0 without EM).
    pub fn decision_iterations(&self) -> usize {
        self.per_hypothesis_em
            .as_ref()
            .map_or(0, |runs| runs[self.decision].iterations)
    }
}

/// Index of the largest value; the first wins ties and NaN never wins.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || values[best].is_nan() && !v.is_nan() {
            best = i;
        }
    }
    best
}

fn with_context<T>(spec: &ConstellationSpec, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Hypothesis {
        hypothesis: spec.format().to_string(),
        source: Box::new(e),
    })
}

fn check_candidates(candidates: &[ConstellationSpec]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::Usage("no candidate constellations".into()));
    }
    Ok(())
}

/// Runs EM under every hypothesis and picks the largest maximized likelihood.
pub fn classify_em_hml(
    block: &ObservationBlock,
    candidates: &[ConstellationSpec],
    options: &EmOptions,
) -> Result<ClassificationResult> {
    check_candidates(candidates)?;
    let runs = candidates
        .iter()
        .map(|spec| with_context(spec, em::estimate(block, spec, options)))
        .collect::<Result<Vec<_>>>()?;
    let llfs = runs.iter().map(|r| r.final_llf).collect();
    Ok(ClassificationResult::from_llfs(llfs, Some(runs), Method::EmHml))
}

/// Evaluates every hypothesis at the true channel parameters.
pub fn classify_alrt(
    block: &ObservationBlock,
    candidates: &[ConstellationSpec],
    truth: &ChannelRealization,
) -> Result<ClassificationResult> {
    check_candidates(candidates)?;
    let llfs = candidates
        .iter()
        .map(|spec| with_context(spec, log_likelihood(block, truth, spec)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassificationResult::from_llfs(llfs, None, Method::Alrt))
}

/// Evaluates every hypothesis at its method-of-moments estimate, without
/// grid refinement or EM.
pub fn classify_mom(
    block: &ObservationBlock,
    candidates: &[ConstellationSpec],
    options: &EmOptions,
) -> Result<ClassificationResult> {
    check_candidates(candidates)?;
    let pure = EmOptions {
        refine_gate: RefineGate::Never,
        ..options.clone()
    };
    let llfs = candidates
        .iter()
        .map(|spec| {
            let (init, _) = initialize(block, spec, &pure);
            with_context(spec, log_likelihood(block, &init, spec))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassificationResult::from_llfs(llfs, None, Method::MomHlrt))
}
