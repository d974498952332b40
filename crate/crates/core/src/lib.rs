//! Centralized multi-radio modulation classification.
//!
//! Several radios observe the same block of constellation symbols through
//! independent flat fades. A fusion center receives all raw samples and
//! picks the candidate constellation whose maximized likelihood is largest,
//! marginalizing over the unknown symbols and estimating each radio's gain
//! and phase plus the noise power with EM.
//!
//! * [`constellation`]: candidate formats and their moments
//! * [`channel`], [`iq`]: Rayleigh block-fading synthesis and IQ files
//! * [`moments`]: blind moment estimators and known-symbol ML estimates
//! * [`em`]: likelihood, E/M steps, initialization and the EM loop
//! * [`classifier`]: EM-HML, clairvoyant ALRT and moments-only decisions
//! * [`experiment`]: seeded parallel Monte Carlo sweeps and result files

pub mod channel;
pub mod classifier;
pub mod cli;
pub mod constellation;
pub mod em;
pub mod error;
pub mod experiment;
pub mod iq;
pub mod moments;
pub mod rng;

pub use channel::{ChannelParams, ChannelRealization, FadingModel, ObservationBlock};
pub use classifier::{CandidateSet, ClassificationResult, Method};
pub use constellation::{ConstellationSpec, FormatId};
pub use em::{EmOptions, EmResult};
pub use error::{Error, Result};
pub use moments::NuisanceEstimate;
