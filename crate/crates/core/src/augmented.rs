//! The lifted chain on agent-by-state pairs and direct solvers for the
//! limits of the gossip-coupled iterations.
//!
//! Pairs `(i, x)` are ordered agent-major: `(0,0), (0,1), ..., (0,m-1),
//! (1,0), ...`. On this space
//!
//! ```text
//! rho((i,x),(j,y)) = q(i,j) p(x,y)       nu = (1/n) [eta; ...; eta]
//! Psi = diag(Phi^1, ..., Phi^n)          ctilde = [cbar; ...; cbar]
//! ```
//!
//! and the coupled discounted iteration tracks the o.d.e.
//! `r' = Psi^T N ctilde + alpha Psi^T N rho Psi r - Psi^T N Psi r` with
//! `N = diag(nu)`, whose unique equilibrium is the limit of the weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{self, MarkovModel, StationaryWeights};
use crate::error::{Assumption, Error, Result};
use crate::features::{BasisEnsemble, FeatureBasis};
use crate::gossip::GossipMatrix;
use crate::linalg;

/// Tolerance on the recorded residual of a fixed-point solve.
pub const FIXED_POINT_TOL: f64 = 1e-9;

/// Normalised least-squares residual of `e` against `Psi` below which the
/// constants count as representable.
pub const A6_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AugmentedSystem {
    pub rho: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub nu: DVector<f64>,
    pub ctilde: DVector<f64>,
    agents: usize,
    states: usize,
    dims: Vec<usize>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl AugmentedSystem {
    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// `Psi^T diag(nu)`.
    fn psi_t_nu(&self) -> DMatrix<f64> {
        let mut a = self.psi.transpose();
        for (mut col, w) in a.column_iter_mut().zip(self.nu.iter()) {
            col *= *w;
        }
        a
    }
}

/// Builds the lifted system and checks its invariants: `rho` stochastic,
/// irreducible and aperiodic, `Psi` of full column rank, `nu` stationary
/// under `rho`.
pub fn build_augmented(
    model: &MarkovModel,
    q: &GossipMatrix,
    bases: &BasisEnsemble,
) -> Result<AugmentedSystem> {
    let (n, m) = (q.agents(), model.states());
    if bases.agents() != n {
        return Err(Error::Structural(format!(
            "Q has {n} agents, bases have {}",
            bases.agents()
        )));
    }
    if bases.states() != m {
        return Err(Error::Structural(format!(
            "bases cover {} states, chain has {m}",
            bases.states()
        )));
    }
    let eta = chain::stationary_distribution(model)?;

    let rho = linalg::kron(q.matrix(), model.transition());
    linalg::check_row_stochastic(&rho, "rho")?;

    let total = bases.total_dim();
    let mut psi = DMatrix::zeros(n * m, total);
    for (i, (basis, off)) in bases.iter().zip(bases.offsets()).enumerate() {
        psi.view_mut((i * m, off), (m, basis.dim()))
            .copy_from(basis.matrix());
    }
    let rank = linalg::numerical_rank(&psi);
    if rank != total {
        return Err(Error::assumption(
            Assumption::Lemma1,
            format!("stacked features have rank {rank}, expected {total}; check (A1)"),
        ));
    }

    let nu = DVector::from_iterator(
        n * m,
        (0..n).flat_map(|_| eta.eta().iter().map(move |v| v / n as f64)),
    );
    let cbar = chain::mean_cost(model);
    let ctilde = DVector::from_iterator(n * m, (0..n).flat_map(|_| cbar.iter().copied()));

    let aug = AugmentedSystem {
        rho,
        psi,
        nu,
        ctilde,
        agents: n,
        states: m,
        dims: bases.dims(),
        p: model.transition().clone(),
        q: q.matrix().clone(),
    };

    verify_lemma2(&aug)?;
    let drift = (aug.rho.transpose() * &aug.nu - &aug.nu).amax();
    if drift > chain::SOLVE_TOL {
        return Err(Error::assumption(
            Assumption::A3,
            format!("nu is not stationary under rho (drift {drift:e}); Q must be doubly stochastic"),
        ));
    }
    Ok(aug)
}

/// Lifted system of a single learner: `rho = P`, `nu = eta`, `Psi = Phi`.
pub fn single_agent(model: &MarkovModel, basis: &FeatureBasis) -> Result<AugmentedSystem> {
    let q = GossipMatrix::uniform(1)?;
    build_augmented(model, &q, &BasisEnsemble::new(vec![basis.clone()])?)
}

/// Irreducibility and aperiodicity of `rho`; on failure names whichever of
/// `P` and `Q` breaks its assumption.
pub fn verify_lemma2(aug: &AugmentedSystem) -> Result<()> {
    if linalg::is_irreducible(&aug.rho) && linalg::is_primitive(&aug.rho) {
        return Ok(());
    }
    if !(linalg::is_irreducible(&aug.p) && linalg::is_primitive(&aug.p)) {
        return Err(Error::assumption(
            Assumption::A2,
            "lifted chain fails irreducibility/aperiodicity because P does",
        ));
    }
    if !(linalg::is_irreducible(&aug.q) && linalg::is_primitive(&aug.q)) {
        return Err(Error::assumption(
            Assumption::A3,
            "lifted chain fails irreducibility/aperiodicity because Q does",
        ));
    }
    Err(Error::assumption(
        Assumption::Lemma2,
        "lifted chain is reducible or periodic",
    ))
}

/// Solution of a fixed-point system with its residual `|A r - b|_inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub r_star: Vec<f64>,
    pub mu_star: Option<f64>,
    pub residual: f64,
}

impl FixedPoint {
    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.r_star)
    }

    /// Per-agent blocks `r*^i`.
    pub fn blocks(&self, dims: &[usize]) -> Vec<DVector<f64>> {
        let mut off = 0;
        dims.iter()
            .map(|&n| {
                let b = DVector::from_column_slice(&self.r_star[off..off + n]);
                off += n;
                b
            })
            .collect()
    }
}

/// The linear system `A r = b` for the discounted limit:
/// `A = Psi^T N (alpha rho - I) Psi`, `b = -Psi^T N ctilde`.
pub fn discounted_system(aug: &AugmentedSystem, alpha: f64) -> (DMatrix<f64>, DVector<f64>) {
    let pn = aug.psi_t_nu();
    let a = &pn * (&aug.rho * &aug.psi * alpha - &aug.psi);
    let b = -(&pn * &aug.ctilde);
    (a, b)
}

/// The linear system for the average-cost limit:
/// `A = Psi^T N (rho - I) Psi`, `b = -Psi^T N (ctilde - mu* e)`.
pub fn average_system(aug: &AugmentedSystem, mu_star: f64) -> (DMatrix<f64>, DVector<f64>) {
    let pn = aug.psi_t_nu();
    let a = &pn * (&aug.rho * &aug.psi - &aug.psi);
    let b = -(&pn * aug.ctilde.add_scalar(-mu_star));
    (a, b)
}

fn solve_system(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    mu_star: Option<f64>,
    what: &str,
) -> Result<FixedPoint> {
    let r = linalg::solve_square(a, b, what)?;
    let residual = (a * &r - b).amax();
    if residual > FIXED_POINT_TOL * (1.0 + linalg::max_abs(b)) {
        return Err(Error::Numerical(format!(
            "{what}: residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(FixedPoint {
        r_star: r.iter().copied().collect(),
        mu_star,
        residual,
    })
}

/// Limit `r*` of the coupled discounted iteration.
pub fn solve_discounted_fixed_point(aug: &AugmentedSystem, alpha: f64) -> Result<FixedPoint> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!(
            "discount factor must lie in (0, 1), got {alpha}"
        )));
    }
    let (a, b) = discounted_system(aug, alpha);
    solve_system(&a, &b, None, "discounted fixed point")
}

/// Normalised residual `|Psi r - e| / |e|` of the best least-squares fit of
/// the all-ones vector.
pub fn ones_fit_residual(aug: &AugmentedSystem) -> Result<f64> {
    let rows = aug.psi.nrows();
    let e = DVector::repeat(rows, 1.0);
    let svd = aug.psi.clone().svd(true, true);
    let r = svd
        .solve(&e, f64::EPSILON)
        .map_err(|err| Error::Numerical(format!("least squares for (A6): {err}")))?;
    Ok((&aug.psi * r - &e).norm() / e.norm())
}

/// Fails with (A6) when the stacked features can represent the constants.
pub fn check_a6(aug: &AugmentedSystem) -> Result<()> {
    let resid = ones_fit_residual(aug)?;
    if resid <= A6_TOL {
        return Err(Error::assumption(
            Assumption::A6,
            format!("the all-ones vector lies in range(Psi) (fit residual {resid:e})"),
        ));
    }
    Ok(())
}

/// Limit `r*` of the coupled average-cost iteration, given `mu*`.
pub fn solve_average_fixed_point(aug: &AugmentedSystem, mu_star: f64) -> Result<FixedPoint> {
    check_a6(aug)?;
    let (a, b) = average_system(aug, mu_star);
    solve_system(&a, &b, Some(mu_star), "average-cost fixed point")
}

/// Stationary weights of the lifted chain, recomputed from `rho` directly.
pub fn lifted_stationary(aug: &AugmentedSystem) -> Result<StationaryWeights> {
    chain::stationary_of(&aug.rho)
}
