//! Per-agent approximation errors at the coupled fixed point, the bound
//! chain relating them to the best per-basis errors, and time-series metrics
//! over simulated trajectories.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::augmented::FixedPoint;
use crate::chain::{self, MarkovModel, StationaryWeights, ValueVector};
use crate::error::{Error, Result};
use crate::features::{projection_onto_ones_complement, BasisEnsemble, Projection};
use crate::gossip::GossipMatrix;
use crate::learner::{Criterion, Trajectory};
use crate::linalg;

/// Slack allowed on the componentwise squared-error bound.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub criterion: &'static str,
    /// The contraction modulus in the bound: the discount factor, or the
    /// orthogonal contraction factor of `P` for average cost.
    pub contraction: f64,
    /// Achieved errors `|J* - Phi^i r*^i|` per agent.
    pub e: Vec<f64>,
    /// Best errors `|J* - Pi_i J*|` per agent.
    pub e_star: Vec<f64>,
    /// `(I - a^2 Q)^{-1} e*^(2)`, componentwise upper bound on `e^(2)`.
    pub e2_bound: Vec<f64>,
    pub beta: f64,
    /// Some agent attaining `max e*` polls an agent with strictly smaller
    /// `e*` with positive probability.
    pub side_condition: bool,
    /// `sqrt(beta / (1 - a^2)) max e*`.
    pub max_error_bound: f64,
    /// `|J* - Pi J*|` with `Pi` the mean of the agents' projections.
    pub mean_projection_error: f64,
    /// `|J* - Jbar|`, `Jbar` the mean of the agents' estimates.
    pub jbar_error: f64,
    /// `((1 - a) |J* - Pi J*| + a beta max e*) / (1 - a)`.
    pub jbar_bound: f64,
}

impl ErrorReport {
    pub fn max_e(&self) -> f64 {
        self.e.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_e_star(&self) -> f64 {
        self.e_star.iter().copied().fold(0.0, f64::max)
    }

    /// `e_i^2 <= e2_bound_i + BOUND_SLACK` for every agent.
    pub fn componentwise_bound_holds(&self) -> bool {
        self.e
            .iter()
            .zip(&self.e2_bound)
            .all(|(e, b)| e * e <= b + BOUND_SLACK)
    }
}

/// `(1 - a^2) sum_k a^{2k} Q^k = (1 - a^2)(I - a^2 Q)^{-1}`, doubly
/// stochastic whenever `Q` is.
pub fn smoothed_gossip(q: &GossipMatrix, a: f64) -> Result<DMatrix<f64>> {
    let n = q.agents();
    let m = DMatrix::identity(n, n) - q.matrix() * (a * a);
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::Numerical("I - a^2 Q is singular".into()))?;
    Ok(inv * (1.0 - a * a))
}

/// `beta(e*) = max_i (Qtilde e*^(2))_i / max_i e*_i^2`, reported as 1 when
/// `e*` is constant across agents.
pub fn beta(qtilde: &DMatrix<f64>, e_star: &[f64]) -> f64 {
    let sq = DVector::from_iterator(e_star.len(), e_star.iter().map(|e| e * e));
    let top = sq.max();
    let lo = sq.min();
    if top <= 0.0 || (top - lo) <= 1e-15 * top {
        return 1.0;
    }
    (qtilde * sq).max() / top
}

fn side_condition(q: &GossipMatrix, e_star: &[f64]) -> bool {
    let top = e_star.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * top.abs().max(1.0);
    (0..e_star.len())
        .filter(|&i| e_star[i] >= top - tol)
        .any(|i| (0..e_star.len()).any(|j| q.q(i, j) > 0.0 && e_star[j] < top - tol))
}

struct BoundInputs<'a> {
    criterion: &'static str,
    a: f64,
    q: &'a GossipMatrix,
    eta: &'a StationaryWeights,
    j_star: &'a ValueVector,
    estimates: Vec<ValueVector>,
    projections: Vec<ValueVector>,
}

fn bound_chain(inp: BoundInputs<'_>) -> Result<ErrorReport> {
    let n = inp.q.agents();
    let a = inp.a;
    let norm = |x: &ValueVector| inp.eta.norm(x);

    let e: Vec<f64> = inp.estimates.iter().map(|v| norm(&(inp.j_star - v))).collect();
    let e_star: Vec<f64> = inp.projections.iter().map(|v| norm(&(inp.j_star - v))).collect();

    let sq = DVector::from_iterator(n, e_star.iter().map(|x| x * x));
    let lhs = DMatrix::identity(n, n) - inp.q.matrix() * (a * a);
    let e2_bound = linalg::solve_square(&lhs, &sq, "squared-error bound")?;
    let qtilde = smoothed_gossip(inp.q, a)?;
    let beta = beta(&qtilde, &e_star);
    let max_star = e_star.iter().copied().fold(0.0, f64::max);

    let mean_proj = inp.projections.iter().fold(DVector::zeros(inp.j_star.len()), |acc, p| acc + p) / n as f64;
    let jbar = inp.estimates.iter().fold(DVector::zeros(inp.j_star.len()), |acc, v| acc + v) / n as f64;
    let mean_projection_error = norm(&(inp.j_star - mean_proj));
    let jbar_error = norm(&(inp.j_star - jbar));

    Ok(ErrorReport {
        criterion: inp.criterion,
        contraction: a,
        e,
        side_condition: side_condition(inp.q, &e_star),
        e_star,
        e2_bound: e2_bound.iter().copied().collect(),
        beta,
        max_error_bound: (beta / (1.0 - a * a)).sqrt() * max_star,
        mean_projection_error,
        jbar_error,
        jbar_bound: ((1.0 - a) * mean_projection_error + a * beta * max_star) / (1.0 - a),
    })
}

fn check_dims(model: &MarkovModel, bases: &BasisEnsemble, q: &GossipMatrix, fp: &FixedPoint) -> Result<()> {
    if bases.states() != model.states() || bases.agents() != q.agents() {
        return Err(Error::Structural("chain, bases and Q dimensions disagree".into()));
    }
    if fp.r_star.len() != bases.total_dim() {
        return Err(Error::Structural(format!(
            "fixed point has {} weights, bases need {}",
            fp.r_star.len(),
            bases.total_dim()
        )));
    }
    Ok(())
}

/// Errors and bounds for the discounted fixed point.
pub fn compute_discounted_errors(
    model: &MarkovModel,
    bases: &BasisEnsemble,
    q: &GossipMatrix,
    alpha: f64,
    fixed_point: &FixedPoint,
) -> Result<ErrorReport> {
    check_dims(model, bases, q, fixed_point)?;
    let eta = chain::stationary_distribution(model)?;
    let j_star = chain::discounted_value(model, alpha)?;
    let blocks = fixed_point.blocks(&bases.dims());
    let estimates = bases.iter().zip(&blocks).map(|(b, r)| b.values(r)).collect();
    let projections = bases
        .iter()
        .map(|b| Ok(Projection::new(b, &eta)?.apply(&j_star)))
        .collect::<Result<Vec<_>>>()?;
    bound_chain(BoundInputs {
        criterion: "discounted",
        a: alpha,
        q,
        eta: &eta,
        j_star: &j_star,
        estimates,
        projections,
    })
}

/// Errors and bounds for the average-cost fixed point. Errors are measured
/// modulo constants; the bases must already be orthogonal to the constants
/// in the `eta`-weighted inner product.
pub fn compute_average_errors(
    model: &MarkovModel,
    bases: &BasisEnsemble,
    q: &GossipMatrix,
    fixed_point: &FixedPoint,
) -> Result<ErrorReport> {
    check_dims(model, bases, q, fixed_point)?;
    let eta = chain::stationary_distribution(model)?;
    for (i, b) in bases.iter().enumerate() {
        for (k, col) in b.matrix().column_iter().enumerate() {
            let m = eta.eta().dot(&col);
            if m.abs() > 1e-9 * (1.0 + col.amax()) {
                return Err(Error::Argument(format!(
                    "agent {i} feature {k} is not orthogonal to the constants (eta^T phi = {m:e})"
                )));
            }
        }
    }
    let a = chain::orthogonal_contraction_factor(model)?;
    let j_star = chain::basic_differential_value(model)?;
    let blocks = fixed_point.blocks(&bases.dims());
    let estimates = bases
        .iter()
        .zip(&blocks)
        .map(|(b, r)| projection_onto_ones_complement(&eta, &b.values(r)))
        .collect();
    let projections = bases
        .iter()
        .map(|b| Ok(Projection::new(b, &eta)?.apply(&j_star)))
        .collect::<Result<Vec<_>>>()?;
    bound_chain(BoundInputs {
        criterion: "average",
        a,
        q,
        eta: &eta,
        j_star: &j_star,
        estimates,
        projections,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub step: u64,
    pub max_error: f64,
    /// `(1/n) sum_i |V_i - Vbar|^2` in the `eta`-weighted norm.
    pub variance_weighted: f64,
    /// Cross-agent variance at each state, averaged over states.
    pub variance_unweighted: f64,
}

/// The reference value function the trajectory is tracking.
pub fn target_value(model: &MarkovModel, criterion: Criterion) -> Result<ValueVector> {
    match criterion {
        Criterion::Discounted { alpha } => chain::discounted_value(model, alpha),
        Criterion::Average => chain::basic_differential_value(model),
    }
}

/// Max error and cross-agent dispersion at each recorded snapshot. For
/// average cost the agents' estimates are first centred (`eta^T V = 0`).
pub fn metrics_over_time(
    trajectory: &Trajectory,
    model: &MarkovModel,
    bases: &BasisEnsemble,
) -> Result<Vec<MetricRow>> {
    let eta = chain::stationary_distribution(model)?;
    let j_star = target_value(model, trajectory.criterion)?;
    let average = matches!(trajectory.criterion, Criterion::Average);
    let m = model.states();

    Ok(trajectory
        .snapshots
        .iter()
        .map(|snap| {
            let values: Vec<ValueVector> = bases
                .iter()
                .zip(&snap.weights)
                .map(|(b, w)| {
                    let v = b.values(&DVector::from_column_slice(w));
                    if average {
                        projection_onto_ones_complement(&eta, &v)
                    } else {
                        v
                    }
                })
                .collect();
            metric_row(snap.step, &values, &j_star, &eta, m)
        })
        .collect())
}

fn metric_row(step: u64, values: &[ValueVector], j_star: &ValueVector, eta: &StationaryWeights, m: usize) -> MetricRow {
    let n = values.len() as f64;
    let mean = values.iter().fold(DVector::zeros(m), |acc, v| acc + v) / n;
    let max_error = values
        .iter()
        .map(|v| eta.norm(&(j_star - v)))
        .fold(0.0, f64::max);
    let variance_weighted = values
        .iter()
        .map(|v| eta.norm(&(v - &mean)).powi(2))
        .sum::<f64>()
        / n;
    let variance_unweighted = values
        .iter()
        .map(|v| (v - &mean).norm_squared())
        .sum::<f64>()
        / (n * m as f64);
    MetricRow {
        step,
        max_error,
        variance_weighted,
        variance_unweighted,
    }
}

/// `step,max_error,variance_weighted,variance_unweighted`.
pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], mut out: W) -> Result<()> {
    writeln!(out, "step,max_error,variance_weighted,variance_unweighted")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.step, r.max_error, r.variance_weighted, r.variance_unweighted
        )?;
    }
    Ok(())
}
