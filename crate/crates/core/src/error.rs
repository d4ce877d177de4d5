use thiserror::Error;

use crate::sme::Diagnostics;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("resonance: effective detuning of mode {mode} vanishes")]
    Resonance { mode: usize },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate basis: {0}")]
    Degenerate(String),

    #[error("decomposition inapplicable: {0}")]
    Inapplicable(String),

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("Fock truncation insufficient: top level population {population:e} at t = {t}")]
    Truncation { t: f64, population: f64 },

    #[error("integration quality breach at t = {}: {reason}", .diagnostics.t)]
    IntegrationQuality {
        reason: String,
        diagnostics: Box<Diagnostics>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
