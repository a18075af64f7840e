//! The polling matrix `Q` and neighbour sampling.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::linalg;

/// Name of the built-in three-agent polling matrix used by the queue
/// experiment.
pub const PRESET_NAME: &str = "paper-4.1";

/// `q(i, j)` is the probability that agent `i` polls agent `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct GossipMatrix {
    q: DMatrix<f64>,
    // per-row cumulative sums for inverse-CDF sampling
    cdf: Vec<Vec<f64>>,
}

impl GossipMatrix {
    /// Checks shape and row sums; entries are kept exactly as given.
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        linalg::check_row_stochastic(&q, "Q")?;
        let cdf = q
            .row_iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, v| {
                        *acc += v;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Ok(GossipMatrix { q, cdf })
    }

    /// `Q = [[5/12, 5/12, 1/6], [1/4, 1/4, 1/2], [1/3, 1/3, 1/3]]`.
    pub fn queue_preset() -> Self {
        let q = DMatrix::from_row_slice(
            3,
            3,
            &[
                5.0 / 12.0,
                5.0 / 12.0,
                1.0 / 6.0,
                1.0 / 4.0,
                1.0 / 4.0,
                1.0 / 2.0,
                1.0 / 3.0,
                1.0 / 3.0,
                1.0 / 3.0,
            ],
        );
        GossipMatrix::new(q).expect("preset is row stochastic")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            PRESET_NAME => Ok(Self::queue_preset()),
            other => Err(Error::Argument(format!("unknown gossip preset {other:?}"))),
        }
    }

    /// Uniform polling `q(i, j) = 1/n`.
    pub fn uniform(n: usize) -> Result<Self> {
        GossipMatrix::new(DMatrix::repeat(n, n, 1.0 / n as f64))
    }

    pub fn agents(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.q[(i, j)]
    }

    pub fn to_spec(&self) -> GossipSpec {
        GossipSpec {
            q: linalg::matrix_to_rows(&self.q),
        }
    }
}

/// JSON form `{"Q": [[...]]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GossipSpec {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
}

impl GossipSpec {
    pub fn build(&self) -> Result<GossipMatrix> {
        GossipMatrix::new(linalg::matrix_from_rows(&self.q, "Q")?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GossipReport {
    pub agents: usize,
    pub warnings: Vec<String>,
}

/// Checks that `Q` is doubly stochastic, irreducible and aperiodic.
/// A zero diagonal entry on an otherwise valid matrix is only a warning.
pub fn validate_gossip(q: &GossipMatrix) -> Result<GossipReport> {
    let n = q.agents();
    for j in 0..n {
        let s: f64 = q.q.column(j).sum();
        if (s - 1.0).abs() > linalg::STOCHASTIC_TOL {
            return Err(Error::assumption(
                Assumption::A3,
                format!("Q is not doubly stochastic: column {j} sums to {s}"),
            ));
        }
    }
    if !linalg::is_irreducible(&q.q) {
        return Err(Error::assumption(Assumption::A3, "Q is reducible"));
    }
    if !linalg::is_primitive(&q.q) {
        return Err(Error::assumption(Assumption::A3, "Q is periodic"));
    }
    let warnings = (0..n)
        .filter(|&i| q.q[(i, i)] == 0.0)
        .map(|i| format!("agent {i} never polls itself (q({i},{i}) = 0)"))
        .collect();
    Ok(GossipReport { agents: n, warnings })
}

/// Inverse-CDF draw from a cumulative distribution over `0..cdf.len()`.
/// Zero-probability outcomes are never returned.
#[inline]
pub(crate) fn draw_from_cdf(cdf: &[f64], u: f64) -> usize {
    match cdf.iter().position(|&c| u < c) {
        Some(j) => j,
        // u landed in the rounding gap above the final partial sum
        None => {
            let mut j = cdf.len() - 1;
            while j > 0 && cdf[j] == cdf[j - 1] {
                j -= 1;
            }
            j
        }
    }
}

/// Draws one neighbour per agent into `out`, in agent order.
pub fn sample_neighbors<R: Rng + ?Sized>(q: &GossipMatrix, rng: &mut R, out: &mut [usize]) {
    for (i, y) in out.iter_mut().enumerate() {
        *y = sample_neighbor(q, i, rng);
    }
}

/// Draws `Y` with `P(Y = j) = q(i, j)`.
pub fn sample_neighbor<R: Rng + ?Sized>(q: &GossipMatrix, i: usize, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    draw_from_cdf(&q.cdf[i], u)
}
