use std::fmt;

use thiserror::Error;

/// A modelling assumption the convergence and error analysis relies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assumption {
    /// Every agent's feature vectors are linearly independent.
    A1,
    /// The state chain is irreducible and aperiodic.
    A2,
    /// The polling matrix is irreducible, aperiodic and doubly stochastic.
    A3,
    /// The all-ones vector is not representable by the stacked features.
    A6,
    /// The whole state space forms a single co-successor class, so `P`
    /// strictly contracts vectors orthogonal to the constants.
    Lemma3,
    /// The lifted agent-by-state chain is irreducible and aperiodic.
    Lemma2,
    /// The stacked feature matrix has full column rank.
    Lemma1,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::A1 => "(A1)",
            Assumption::A2 => "(A2)",
            Assumption::A3 => "(A3)",
            Assumption::A6 => "(A6)",
            Assumption::Lemma3 => "Lemma 3",
            Assumption::Lemma2 => "Lemma 2",
            Assumption::Lemma1 => "Lemma 1",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: wrong shapes, negative probabilities, rows that do
    /// not sum to one.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("assumption {assumption} violated: {detail}")]
    Assumption {
        assumption: Assumption,
        detail: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("iteration diverged at step {step}: {detail}")]
    Divergence { step: u64, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn assumption(assumption: Assumption, detail: impl Into<String>) -> Self {
        Error::Assumption {
            assumption,
            detail: detail.into(),
        }
    }

    /// The violated assumption, if this is an assumption error.
    pub fn violated(&self) -> Option<Assumption> {
        match self {
            Error::Assumption { assumption, .. } => Some(*assumption),
            _ => None,
        }
    }

    /// Process exit code used by the CLI: 2 for assumption violations,
    /// 3 for numerical failures (including divergence), 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Assumption { .. } => 2,
            Error::Numerical(_) | Error::Divergence { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
