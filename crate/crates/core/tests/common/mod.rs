#![allow(dead_code)]

use gossip_td::chain::{self, MarkovModel};
use gossip_td::features::{BasisEnsemble, FeatureBasis};
use gossip_td::gossip::GossipMatrix;
use gossip_td::learner::{self, AgentEnsemble, Transition};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense chain with strictly positive transitions (irreducible, aperiodic)
/// and costs in `[0, 10)`.
pub fn random_chain(rng: &mut impl Rng, m: usize) -> MarkovModel {
    let mut p = DMatrix::from_fn(m, m, |_, _| rng.random_range(0.05..1.0));
    for mut row in p.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let c = DMatrix::from_fn(m, m, |_, _| rng.random_range(0.0..10.0));
    MarkovModel::new(p, c).unwrap()
}

/// Gaussian-ish entries; full column rank with probability one.
pub fn random_basis(rng: &mut impl Rng, m: usize, k: usize) -> FeatureBasis {
    FeatureBasis::new(DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0))).unwrap()
}

/// Random basis with orthonormal columns (the Q factor of a random
/// matrix), so fixed points stay well conditioned.
pub fn random_orthonormal_basis(rng: &mut impl Rng, m: usize, k: usize) -> FeatureBasis {
    let raw = DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
    FeatureBasis::new(raw.qr().q()).unwrap()
}

/// Random doubly stochastic matrix: a mix of the identity (aperiodic), the
/// cyclic shift (irreducible) and a random permutation.
pub fn random_gossip(rng: &mut impl Rng, n: usize) -> GossipMatrix {
    let w = rng.random_range(0.1..0.7);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut q = DMatrix::identity(n, n) * 0.2;
    for i in 0..n {
        q[(i, (i + 1) % n)] += w;
        q[(i, perm[i])] += 0.8 - w;
    }
    GossipMatrix::new(q).unwrap()
}

/// Exact expected increment `E[r_{t+1} - r_t]` at unit step size of the
/// coupled discounted (`alpha = Some`) or average-cost iteration started
/// from `ens`, with `X ~ eta`, `Y ~ P(X, .)` and neighbours `~ Q(i, .)`.
/// Returns the concatenated weight increment and the `mu` increment.
pub fn expected_increment(
    model: &MarkovModel,
    bases: &BasisEnsemble,
    q: &GossipMatrix,
    ens: &AgentEnsemble,
    alpha: Option<f64>,
) -> (DVector<f64>, f64) {
    let eta = chain::stationary_distribution(model).unwrap();
    let n = bases.agents();
    let m = model.states();
    let mut inc: Vec<DVector<f64>> = bases.dims().iter().map(|&d| DVector::zeros(d)).collect();
    let mut mu_inc = 0.0;
    for x in 0..m {
        for y in 0..m {
            let w = eta.eta()[x] * model.p(x, y);
            if w == 0.0 {
                continue;
            }
            let tr = Transition { from: x, to: y };
            for j in 0..n {
                let neighbors = vec![j; n];
                let mut next = ens.clone();
                match alpha {
                    Some(a) => learner::td0_distributed_step(model, bases, tr, &mut next, &neighbors, a, 1.0),
                    None => learner::avgcost_distributed_step(model, bases, tr, &mut next, &neighbors, 1.0, 1.0),
                }
                for (i, acc) in inc.iter_mut().enumerate() {
                    let d = DVector::from_vec(next.weights[i].clone())
                        - DVector::from_vec(ens.weights[i].clone());
                    *acc += d * (w * q.q(i, j));
                }
                if j == 0 {
                    mu_inc += w * (next.mu - ens.mu);
                }
            }
        }
    }
    let flat = DVector::from_iterator(
        inc.iter().map(|v| v.len()).sum(),
        inc.iter().flat_map(|v| v.iter().copied()),
    );
    (flat, mu_inc)
}

/// Same enumeration for the single-learner steps.
pub fn expected_increment_centralized(
    model: &MarkovModel,
    basis: &FeatureBasis,
    r: &[f64],
    mu: f64,
    alpha: Option<f64>,
) -> (DVector<f64>, f64) {
    let eta = chain::stationary_distribution(model).unwrap();
    let m = model.states();
    let mut inc = DVector::zeros(basis.dim());
    let mut mu_inc = 0.0;
    for x in 0..m {
        for y in 0..m {
            let w = eta.eta()[x] * model.p(x, y);
            let tr = Transition { from: x, to: y };
            let mut next = r.to_vec();
            let mut next_mu = mu;
            match alpha {
                Some(a) => learner::td0_centralized_step(model, basis, tr, &mut next, a, 1.0),
                None => learner::avgcost_centralized_step(model, basis, tr, &mut next, &mut next_mu, 1.0, 1.0),
            }
            inc += (DVector::from_vec(next) - DVector::from_column_slice(r)) * w;
            mu_inc += w * (next_mu - mu);
        }
    }
    (inc, mu_inc)
}

/// Independent single-agent discounted limit: the stationarity condition
/// `Phi^T D (cbar + alpha P Phi r - Phi r) = 0` assembled entrywise from
/// transition pairs and solved by QR.
pub fn stationarity_solve(model: &MarkovModel, basis: &FeatureBasis, alpha: f64) -> DVector<f64> {
    let eta = oracle_stationary(model.transition());
    let m = model.states();
    let k = basis.dim();
    let phi = basis.matrix();
    let mut a = DMatrix::zeros(k, k);
    let mut b = DVector::zeros(k);
    for x in 0..m {
        for y in 0..m {
            let w = eta[x] * model.p(x, y);
            for u in 0..k {
                b[u] += w * phi[(x, u)] * model.c(x, y);
                for v in 0..k {
                    a[(u, v)] += w * phi[(x, u)] * (phi[(x, v)] - alpha * phi[(y, v)]);
                }
            }
        }
    }
    a.qr().solve(&b).expect("stationarity system is nonsingular")
}

/// Stationary distribution by power iteration on the lazy chain
/// `(I + P) / 2`, independent of the library's direct solve.
pub fn power_stationary(p: &DMatrix<f64>) -> DVector<f64> {
    let m = p.nrows();
    let lazy = (DMatrix::identity(m, m) + p) * 0.5;
    let lazy_t = lazy.transpose();
    let mut v = DVector::repeat(m, 1.0 / m as f64);
    for _ in 0..200_000 {
        let next = &lazy_t * &v;
        let diff = (&next - &v).amax();
        v = next;
        if diff < 1e-17 {
            break;
        }
    }
    let s = v.sum();
    v / s
}

/// Exact product form `eta(i+1) / eta(i) = p(i, i+1) / p(i+1, i)` for
/// birth-death chains, power iteration otherwise.
pub fn oracle_stationary(p: &DMatrix<f64>) -> DVector<f64> {
    let m = p.nrows();
    let tridiagonal = (0..m).all(|i| (0..m).all(|j| i.abs_diff(j) <= 1 || p[(i, j)] == 0.0));
    if !tridiagonal {
        return power_stationary(p);
    }
    let mut v = DVector::repeat(m, 1.0);
    for i in 0..m - 1 {
        v[i + 1] = v[i] * p[(i, i + 1)] / p[(i + 1, i)];
    }
    let s = v.sum();
    v / s
}
