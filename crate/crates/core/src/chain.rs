//! Finite Markov chains with transition costs: stationary analysis, exact
//! discounted and differential value functions, Bellman operators, and the
//! contraction factor of `P` on the constants' orthogonal complement.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::linalg;

/// Per-state real vector (values, costs, differential costs).
pub type ValueVector = DVector<f64>;

/// Residual tolerance for the direct linear solves.
pub const SOLVE_TOL: f64 = 1e-10;

/// Residual tolerance for the Poisson-equation least-squares solve.
pub const POISSON_TOL: f64 = 1e-9;

/// A finite chain with transition matrix `p` and transition costs `c(i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovModel {
    p: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl MarkovModel {
    /// Builds a model after checking shapes, finiteness and row sums.
    /// Irreducibility and aperiodicity are checked by [`validate_chain`].
    pub fn new(p: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        linalg::check_row_stochastic(&p, "P")?;
        if c.shape() != p.shape() {
            return Err(Error::Structural(format!(
                "cost matrix is {}x{} but P is {}x{}",
                c.nrows(),
                c.ncols(),
                p.nrows(),
                p.ncols()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structural("cost matrix has non-finite entries".into()));
        }
        Ok(MarkovModel { p, c })
    }

    /// Model whose cost depends only on the current state: `c(i, j) = cost[i]`.
    pub fn with_state_cost(p: DMatrix<f64>, cost: &[f64]) -> Result<Self> {
        let m = p.nrows();
        if cost.len() != m {
            return Err(Error::Structural(format!(
                "state cost has {} entries for {m} states",
                cost.len()
            )));
        }
        let c = DMatrix::from_fn(m, m, |i, _| cost[i]);
        Self::new(p, c)
    }

    pub fn states(&self) -> usize {
        self.p.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.p[(i, j)]
    }

    pub fn c(&self, i: usize, j: usize) -> f64 {
        self.c[(i, j)]
    }

    pub fn to_spec(&self) -> ChainSpec {
        ChainSpec {
            m: Some(self.states()),
            p: linalg::matrix_to_rows(&self.p),
            c: linalg::matrix_to_rows(&self.c),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ChainSpec = serde_json::from_str(s)?;
        spec.build()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_spec())?)
    }
}

/// JSON document form of a chain: `{"m": 2, "P": [[...]], "c": [[...]]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl ChainSpec {
    pub fn build(&self) -> Result<MarkovModel> {
        let p = linalg::matrix_from_rows(&self.p, "P")?;
        let c = linalg::matrix_from_rows(&self.c, "c")?;
        if let Some(m) = self.m {
            if m != p.nrows() {
                return Err(Error::Structural(format!(
                    "declared m = {m} but P has {} rows",
                    p.nrows()
                )));
            }
        }
        MarkovModel::new(p, c)
    }
}

/// Outcome of a successful [`validate_chain`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainReport {
    pub states: usize,
    pub row_stochastic: bool,
    pub irreducible: bool,
    pub aperiodic: bool,
    /// Every state has `p(i, i) > 0`.
    pub self_loops: bool,
}

/// Checks row-stochasticity, irreducibility and aperiodicity.
pub fn validate_chain(model: &MarkovModel) -> Result<ChainReport> {
    linalg::check_row_stochastic(&model.p, "P")?;
    if !linalg::is_irreducible(&model.p) {
        return Err(Error::assumption(
            Assumption::A2,
            "state chain is reducible",
        ));
    }
    if !linalg::is_primitive(&model.p) {
        return Err(Error::assumption(Assumption::A2, "state chain is periodic"));
    }
    Ok(ChainReport {
        states: model.states(),
        row_stochastic: true,
        irreducible: true,
        aperiodic: true,
        self_loops: (0..model.states()).all(|i| model.p[(i, i)] > 0.0),
    })
}

/// Stationary probability vector `eta` of an irreducible chain.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryWeights {
    eta: DVector<f64>,
}

impl StationaryWeights {
    /// Wraps a probability vector, checking positivity and normalisation.
    pub fn new(eta: DVector<f64>) -> Result<Self> {
        if eta.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Numerical(
                "stationary weights must be strictly positive".into(),
            ));
        }
        let s = eta.sum();
        if (s - 1.0).abs() > linalg::STOCHASTIC_TOL {
            return Err(Error::Numerical(format!("stationary weights sum to {s}")));
        }
        Ok(StationaryWeights { eta })
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// `eta^T x`.
    pub fn mean(&self, x: &DVector<f64>) -> f64 {
        self.eta.dot(x)
    }

    /// `sqrt(sum_i eta(i) x(i)^2)`.
    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        weighted_norm(x, &self.eta)
    }

    /// `eta`-weighted inner product.
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.eta.iter().zip(x.iter().zip(y.iter())).map(|(w, (a, b))| w * a * b).sum()
    }
}

/// Solves `eta^T (P - I) = 0`, `sum eta = 1` directly, replacing one balance
/// equation by the normalisation.
pub fn stationary_distribution(model: &MarkovModel) -> Result<StationaryWeights> {
    stationary_of(&model.p)
}

/// Grassmann-Taksar-Heyman elimination: Gaussian elimination on `I - P`
/// arranged so that no subtraction occurs, which keeps small tail
/// probabilities accurate to a few ulps in relative terms.
pub(crate) fn stationary_of(p: &DMatrix<f64>) -> Result<StationaryWeights> {
    let m = p.nrows();
    let mut a = p.clone();
    for k in (1..m).rev() {
        let s: f64 = (0..k).map(|j| a[(k, j)]).sum();
        if s <= 0.0 {
            return Err(Error::Numerical(format!(
                "state {k} cannot reach lower-numbered states; no unique stationary distribution"
            )));
        }
        for i in 0..k {
            a[(i, k)] /= s;
        }
        for i in 0..k {
            let aik = a[(i, k)];
            if aik != 0.0 {
                for j in 0..k {
                    a[(i, j)] += aik * a[(k, j)];
                }
            }
        }
    }
    let mut eta = DVector::zeros(m);
    eta[0] = 1.0;
    for k in 1..m {
        eta[k] = (0..k).map(|i| eta[i] * a[(i, k)]).sum();
    }
    let eta = &eta / eta.sum();
    let resid = (p.transpose() * &eta - &eta).amax();
    if resid > SOLVE_TOL {
        return Err(Error::Numerical(format!(
            "stationary residual {resid:e} exceeds {SOLVE_TOL:e}"
        )));
    }
    StationaryWeights::new(eta)
}

/// Expected one-step cost `cbar(i) = sum_j p(i, j) c(i, j)`.
pub fn mean_cost(model: &MarkovModel) -> ValueVector {
    model.p.component_mul(&model.c).column_sum()
}

fn check_discount(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!(
            "discount factor must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Exact discounted cost `J* = (I - alpha P)^{-1} cbar`.
pub fn discounted_value(model: &MarkovModel, alpha: f64) -> Result<ValueVector> {
    check_discount(alpha)?;
    let m = model.states();
    let a = DMatrix::identity(m, m) - &model.p * alpha;
    let cbar = mean_cost(model);
    let j = linalg::solve_square(&a, &cbar, "discounted value")?;
    let resid = (&a * &j - &cbar).amax();
    if resid > SOLVE_TOL * (1.0 + linalg::max_abs(&cbar)) {
        return Err(Error::Numerical(format!(
            "discounted value residual {resid:e}"
        )));
    }
    Ok(j)
}

/// Long-run average cost `mu* = eta^T cbar`.
pub fn average_cost(model: &MarkovModel) -> Result<f64> {
    let eta = stationary_distribution(model)?;
    Ok(eta.mean(&mean_cost(model)))
}

/// The differential cost solving the Poisson equation
/// `J = cbar - mu* 1 + P J` normalised by `eta^T J = 0`.
pub fn basic_differential_value(model: &MarkovModel) -> Result<ValueVector> {
    let m = model.states();
    let eta = stationary_distribution(model)?;
    let cbar = mean_cost(model);
    let mu = eta.mean(&cbar);

    let mut a = DMatrix::zeros(m + 1, m);
    a.view_mut((0, 0), (m, m))
        .copy_from(&(DMatrix::identity(m, m) - &model.p));
    a.row_mut(m).copy_from(&eta.eta().transpose());
    let mut b = DVector::zeros(m + 1);
    b.rows_mut(0, m).copy_from(&cbar.add_scalar(-mu));

    let svd = a.clone().svd(true, true);
    let j = svd
        .solve(&b, f64::EPSILON)
        .map_err(|e| Error::Numerical(format!("Poisson least squares: {e}")))?;
    let j = j.add_scalar(-eta.mean(&j));

    let resid = (&a * &j - &b).amax();
    let scale = 1.0 + linalg::max_abs(&cbar);
    if resid > POISSON_TOL * scale {
        return Err(Error::Numerical(format!(
            "Poisson equation residual {resid:e} exceeds tolerance"
        )));
    }
    Ok(j)
}

/// `sqrt(sum_i eta(i) x(i)^2)`.
pub fn weighted_norm(x: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    assert_eq!(x.len(), eta.len(), "dimension mismatch in weighted norm");
    eta.iter()
        .zip(x.iter())
        .map(|(w, v)| w * v * v)
        .sum::<f64>()
        .sqrt()
}

/// Discounted Bellman operator `cbar + alpha P x`.
pub fn bellman_discounted(x: &ValueVector, model: &MarkovModel, alpha: f64) -> ValueVector {
    mean_cost(model) + (&model.p * x) * alpha
}

/// Average-cost Bellman operator `cbar - mu* 1 + P x`.
pub fn bellman_average(x: &ValueVector, model: &MarkovModel) -> Result<ValueVector> {
    let mu = average_cost(model)?;
    Ok(mean_cost(model).add_scalar(-mu) + &model.p * x)
}

/// Number of classes of the relation joining any two successors of a
/// common state (closed transitively).
pub fn successor_classes(p: &DMatrix<f64>) -> usize {
    let m = p.nrows();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..m {
        let mut first = None;
        for k in 0..m {
            if p[(i, k)] > 0.0 {
                match first {
                    None => first = Some(k),
                    Some(f) => {
                        let (a, b) = (find(&mut parent, f), find(&mut parent, k));
                        parent[a] = b;
                    }
                }
            }
        }
    }
    (0..m).filter(|&x| find(&mut parent, x) == x).count()
}

/// Orthonormal basis (Euclidean) of the complement of the unit vector `w`,
/// taken from the columns of a Householder reflector.
fn complement_basis(w: &DVector<f64>) -> DMatrix<f64> {
    let m = w.len();
    let mut v = w.clone();
    let sign = if w[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign;
    let h = DMatrix::identity(m, m) - (&v * v.transpose()) * (2.0 / v.norm_squared());
    h.columns(1, m - 1).into_owned()
}

/// `sup ||P x|| / ||x||` over nonzero `x` with `eta^T x = 0`, in the
/// `eta`-weighted norm. Strictly below one when the successor classes
/// cover the state space.
pub fn orthogonal_contraction_factor(model: &MarkovModel) -> Result<f64> {
    let classes = successor_classes(&model.p);
    if classes != 1 {
        return Err(Error::assumption(
            Assumption::Lemma3,
            format!("state space splits into {classes} successor classes"),
        ));
    }
    let m = model.states();
    if m == 1 {
        return Ok(0.0);
    }
    let eta = stationary_distribution(model)?;
    let w = eta.eta().map(f64::sqrt);
    let basis = complement_basis(&w);
    // x = W^{-1} u for u orthonormal and orthogonal to w; ||P x||_eta = |W P W^{-1} u|
    let scaled = DMatrix::from_fn(m, m, |i, j| w[i] * model.p[(i, j)] / w[j]);
    let factor = linalg::singular_values(&(scaled * basis))[0];
    if factor >= 1.0 - 1e-12 {
        return Err(Error::assumption(
            Assumption::Lemma3,
            format!("contraction factor {factor} is not below 1"),
        ));
    }
    Ok(factor)
}

/// Replaces `P` by `(1 - delta) P + delta I`; costs unchanged.
pub fn add_self_loops(model: &MarkovModel, delta: f64) -> Result<MarkovModel> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Argument(format!(
            "self-loop probability must lie in (0, 1), got {delta}"
        )));
    }
    let m = model.states();
    let p = &model.p * (1.0 - delta) + DMatrix::identity(m, m) * delta;
    // re-normalise rows so the stochasticity check sees exact sums
    let p = DMatrix::from_fn(m, m, |i, j| p[(i, j)] / p.row(i).sum());
    MarkovModel::new(p, model.c.clone())
}
