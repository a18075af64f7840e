//! Per-agent linear feature bases and the `eta`-weighted projections onto
//! their spans.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::chain::{StationaryWeights, ValueVector};
use crate::error::{Assumption, Error, Result};
use crate::linalg;

/// An `m x n_i` feature matrix; column `k` is the feature vector `phi_k`
/// evaluated on every state, row `s` is the feature vector of state `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBasis {
    phi: DMatrix<f64>,
    // row-major copy for per-state lookups in the learners
    rows: Vec<f64>,
}

impl FeatureBasis {
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        if phi.nrows() == 0 || phi.ncols() == 0 {
            return Err(Error::Structural("feature matrix is empty".into()));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structural("feature matrix has non-finite entries".into()));
        }
        let rows = phi.transpose().as_slice().to_vec();
        Ok(FeatureBasis { phi, rows })
    }

    /// Builds a basis from feature functions evaluated on states `0..states`.
    pub fn from_fns(states: usize, features: &[&dyn Fn(usize) -> f64]) -> Result<Self> {
        let phi = DMatrix::from_fn(states, features.len(), |s, k| features[k](s));
        Self::new(phi)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn states(&self) -> usize {
        self.phi.nrows()
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    /// Feature vector `phi(s)`.
    #[inline]
    pub fn features(&self, s: usize) -> &[f64] {
        let n = self.dim();
        &self.rows[s * n..(s + 1) * n]
    }

    /// `phi(s)^T r`.
    #[inline]
    pub fn value_at(&self, s: usize, r: &[f64]) -> f64 {
        self.features(s).iter().zip(r).map(|(f, w)| f * w).sum()
    }

    /// The value vector `Phi r` over all states.
    pub fn values(&self, r: &DVector<f64>) -> ValueVector {
        &self.phi * r
    }
}

/// Checks that the columns of `basis` are linearly independent, using the
/// numerical rank threshold `m * eps * sigma_max`.
pub fn validate_independence(basis: &FeatureBasis) -> Result<()> {
    let (m, n) = basis.phi.shape();
    if m < n {
        return Err(Error::assumption(
            Assumption::A1,
            format!("{n} features on only {m} states cannot be independent"),
        ));
    }
    let rank = linalg::numerical_rank(&basis.phi);
    if rank != n {
        return Err(Error::assumption(
            Assumption::A1,
            format!("feature matrix has rank {rank}, expected {n}"),
        ));
    }
    Ok(())
}

/// Cached `eta`-weighted projection onto the span of a basis:
/// `Pi x = Phi (Phi^T D Phi)^{-1} Phi^T D x`.
#[derive(Clone, Debug)]
pub struct Projection {
    phi: DMatrix<f64>,
    eta: DVector<f64>,
    gram: Cholesky<f64, Dyn>,
}

impl Projection {
    pub fn new(basis: &FeatureBasis, eta: &StationaryWeights) -> Result<Self> {
        if basis.states() != eta.len() {
            return Err(Error::Structural(format!(
                "basis has {} states, weights have {}",
                basis.states(),
                eta.len()
            )));
        }
        let phi = basis.phi.clone();
        let dphi = DMatrix::from_fn(phi.nrows(), phi.ncols(), |i, k| eta.eta()[i] * phi[(i, k)]);
        let gram = phi.transpose() * dphi;
        let gram = gram.cholesky().ok_or_else(|| {
            Error::Numerical("weighted Gram matrix is singular; features lose rank under eta".into())
        })?;
        Ok(Projection {
            phi,
            eta: eta.eta().clone(),
            gram,
        })
    }

    /// Weights `r` with `Phi r = Pi x`.
    pub fn coefficients(&self, x: &ValueVector) -> DVector<f64> {
        let dx = self.eta.component_mul(x);
        self.gram.solve(&(self.phi.transpose() * dx))
    }

    pub fn apply(&self, x: &ValueVector) -> ValueVector {
        &self.phi * self.coefficients(x)
    }
}

/// `Pi_i x` for a single vector; see [`Projection`] for repeated use.
pub fn projection_apply(
    basis: &FeatureBasis,
    eta: &StationaryWeights,
    x: &ValueVector,
) -> Result<ValueVector> {
    if x.len() != basis.states() {
        return Err(Error::Structural("vector length does not match basis".into()));
    }
    Ok(Projection::new(basis, eta)?.apply(x))
}

/// Replaces every column `phi` by `phi - (eta^T phi) 1`, then re-checks
/// independence.
pub fn orthogonalize_against_ones(
    basis: &FeatureBasis,
    eta: &StationaryWeights,
) -> Result<FeatureBasis> {
    let mut phi = basis.phi.clone();
    for mut col in phi.column_iter_mut() {
        let mean = eta.eta().dot(&col);
        col.add_scalar_mut(-mean);
    }
    let out = FeatureBasis::new(phi)?;
    validate_independence(&out).map_err(|e| match e {
        Error::Assumption { assumption, detail } => Error::Assumption {
            assumption,
            detail: format!("after removing the constant component: {detail}"),
        },
        other => other,
    })?;
    Ok(out)
}

/// `x - (eta^T x) 1`, the `eta`-orthogonal projection onto the complement of
/// the constants.
pub fn projection_onto_ones_complement(eta: &StationaryWeights, x: &ValueVector) -> ValueVector {
    x.add_scalar(-eta.mean(x))
}

/// One basis per agent, all over the same state space.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisEnsemble {
    bases: Vec<FeatureBasis>,
}

impl BasisEnsemble {
    pub fn new(bases: Vec<FeatureBasis>) -> Result<Self> {
        let Some(first) = bases.first() else {
            return Err(Error::Structural("basis ensemble has no agents".into()));
        };
        let m = first.states();
        if let Some((i, b)) = bases.iter().enumerate().find(|(_, b)| b.states() != m) {
            return Err(Error::Structural(format!(
                "agent {i} basis has {} states, agent 0 has {m}",
                b.states()
            )));
        }
        Ok(BasisEnsemble { bases })
    }

    /// Runs [`validate_independence`] on every agent's basis.
    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.bases.iter().enumerate() {
            validate_independence(b).map_err(|e| match e {
                Error::Assumption { assumption, detail } => Error::Assumption {
                    assumption,
                    detail: format!("agent {i}: {detail}"),
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn agents(&self) -> usize {
        self.bases.len()
    }

    pub fn states(&self) -> usize {
        self.bases[0].states()
    }

    pub fn get(&self, i: usize) -> &FeatureBasis {
        &self.bases[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureBasis> {
        self.bases.iter()
    }

    /// Feature counts `n_1, ..., n_n`.
    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(FeatureBasis::dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.bases.iter().map(FeatureBasis::dim).sum()
    }

    /// Start offset of each agent's block in the concatenated weights.
    pub fn offsets(&self) -> Vec<usize> {
        self.bases
            .iter()
            .scan(0, |acc, b| {
                let o = *acc;
                *acc += b.dim();
                Some(o)
            })
            .collect()
    }

    pub fn orthogonalized(&self, eta: &StationaryWeights) -> Result<Self> {
        let bases = self
            .bases
            .iter()
            .map(|b| orthogonalize_against_ones(b, eta))
            .collect::<Result<Vec<_>>>()?;
        BasisEnsemble::new(bases)
    }

    pub fn to_spec(&self) -> BasesSpec {
        BasesSpec {
            agents: self
                .bases
                .iter()
                .map(|b| AgentBasisSpec {
                    phi: linalg::matrix_to_rows(&b.phi),
                })
                .collect(),
        }
    }
}

/// JSON form: `{"agents": [{"phi": [[...]]}, ...]}` with one row per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasesSpec {
    pub agents: Vec<AgentBasisSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentBasisSpec {
    pub phi: Vec<Vec<f64>>,
}

impl BasesSpec {
    pub fn build(&self) -> Result<BasisEnsemble> {
        let bases = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| FeatureBasis::new(linalg::matrix_from_rows(&a.phi, &format!("agent {i} phi"))?))
            .collect::<Result<Vec<_>>>()?;
        BasisEnsemble::new(bases)
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// The three-agent feature set for the capped queue on states `0..states`
/// (51 states for a cap of 50). Indicators are strict (`i > 5` means
/// `i >= 6`, `|i - 25| < 5` means `21..=29`); the scaled features divide by
/// the arithmetic mean of the same function over all states.
pub fn build_queue_bases(states: usize) -> Result<BasisEnsemble> {
    let mean_of = |f: &dyn Fn(f64) -> f64| (0..states).map(|k| f(k as f64)).sum::<f64>() / states as f64;
    let lin = mean_of(&|k| k);
    let sq = mean_of(&|k| k * k);
    let root = mean_of(&|k| k.sqrt());
    let dist = |i: usize, c: i64| (i as i64 - c).abs();

    let agent1 = FeatureBasis::from_fns(
        states,
        &[
            &|i| indicator(i > 5),
            &|i| indicator(i > 10),
            &|i| indicator(i > 20),
            &|i| i as f64 / lin,
        ],
    )?;
    let agent2 = FeatureBasis::from_fns(
        states,
        &[
            &|i| indicator(dist(i, 25) < 5),
            &|i| indicator(dist(i, 35) < 10),
            &|i| (i * i) as f64 / sq,
        ],
    )?;
    let agent3 = FeatureBasis::from_fns(
        states,
        &[&|i| (i as f64).sqrt() / root, &|i| indicator(i > 30)],
    )?;
    BasisEnsemble::new(vec![agent1, agent2, agent3])
}
