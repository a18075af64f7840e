//! TD(0) iterations: the classical single-learner rules for discounted and
//! average cost, the gossip-coupled multi-agent variants, and the simulation
//! loop that drives them along a sampled chain trajectory.

use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::MarkovModel;
use crate::error::{Error, Result};
use crate::features::{BasisEnsemble, FeatureBasis};
use crate::gossip::{self, GossipMatrix};

/// Weights beyond this magnitude are treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Step sizes `gamma_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `gamma_t = a / (1 + t)^p`; admissible for `a > 0`, `p in (0.5, 1]`.
    Power { a: f64, p: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Power { a: 1.0, p: 0.75 }
    }
}

impl StepSchedule {
    /// Checks `sum gamma = inf`, `sum gamma^2 < inf`.
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Power { a, p } => {
                if !(a > 0.0 && a.is_finite()) || !(p > 0.5 && p <= 1.0) {
                    return Err(Error::Argument(format!(
                        "power schedule needs a > 0 and p in (0.5, 1], got a = {a}, p = {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn gamma(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Power { a, p } => a / (1.0 + t as f64).powf(p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Discounted { alpha: f64 },
    Average,
}

impl Criterion {
    pub fn validate(&self) -> Result<()> {
        if let Criterion::Discounted { alpha } = *self {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Argument(format!(
                    "discount factor must lie in (0, 1), got {alpha}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// A single learner with one basis.
    Centralized,
    /// Gossip-coupled agents.
    #[default]
    Distributed,
    /// Every agent runs the single-learner rule on its own basis.
    Uncoupled,
}

/// Simulation parameters shared by every mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub steps: u64,
    pub seed: u64,
    pub schedule: StepSchedule,
    /// Relative step size of the average-cost estimate. Convergence theory
    /// asks for `k` large enough; 1.0 works on the queue experiment.
    pub k: f64,
    pub record_every: u64,
    pub initial_state: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            steps: 200_000,
            seed: 1,
            schedule: StepSchedule::default(),
            k: 1.0,
            record_every: 1_000,
            initial_state: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub settings: RunSettings,
    #[serde(default)]
    pub mode: Mode,
    pub criterion: Criterion,
}

impl RunConfig {
    pub fn new(settings: RunSettings, mode: Mode, criterion: Criterion) -> Self {
        RunConfig {
            settings,
            mode,
            criterion,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.settings;
        if s.steps == 0 {
            return Err(Error::Argument("steps must be at least 1".into()));
        }
        if s.record_every == 0 {
            return Err(Error::Argument("record_every must be at least 1".into()));
        }
        if !(s.k > 0.0 && s.k.is_finite()) {
            return Err(Error::Argument(format!("k must be positive, got {}", s.k)));
        }
        s.schedule.validate()?;
        self.criterion.validate()
    }
}

/// One observed chain transition `(X_t, X_{t+1})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
}

/// Weight vectors of all agents plus the shared average-cost estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentEnsemble {
    pub weights: Vec<Vec<f64>>,
    pub mu: f64,
    pub t: u64,
}

impl AgentEnsemble {
    pub fn zeros(bases: &BasisEnsemble) -> Self {
        AgentEnsemble {
            weights: bases.dims().into_iter().map(|n| vec![0.0; n]).collect(),
            mu: 0.0,
            t: 0,
        }
    }

    /// Splits concatenated weights `[r^1, ..., r^n]` into per-agent blocks.
    pub fn from_concatenated(bases: &BasisEnsemble, r: &DVector<f64>, mu: f64) -> Self {
        let mut it = r.iter().copied();
        let weights = bases
            .dims()
            .into_iter()
            .map(|n| it.by_ref().take(n).collect())
            .collect();
        AgentEnsemble { weights, mu, t: 0 }
    }

    pub fn concatenated(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.weights.iter().map(Vec::len).sum(),
            self.weights.iter().flatten().copied(),
        )
    }

    pub fn agents(&self) -> usize {
        self.weights.len()
    }

    fn check_finite(&self, step: u64) -> Result<()> {
        let bad = |v: f64| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT;
        if let Some((i, _)) = self
            .weights
            .iter()
            .enumerate()
            .find(|(_, w)| w.iter().any(|&v| bad(v)))
        {
            return Err(Error::Divergence {
                step,
                detail: format!("agent {i} weights left the finite range"),
            });
        }
        if bad(self.mu) {
            return Err(Error::Divergence {
                step,
                detail: format!("average-cost estimate {}", self.mu),
            });
        }
        Ok(())
    }
}

#[inline]
fn axpy(r: &mut [f64], scale: f64, x: &[f64]) {
    for (w, f) in r.iter_mut().zip(x) {
        *w += scale * f;
    }
}

/// `r <- r + gamma phi(x) [c(x, y) + alpha phi(y)^T r - phi(x)^T r]`.
pub fn td0_centralized_step(
    model: &MarkovModel,
    basis: &FeatureBasis,
    tr: Transition,
    r: &mut [f64],
    alpha: f64,
    gamma: f64,
) {
    let delta = model.c(tr.from, tr.to) + alpha * basis.value_at(tr.to, r)
        - basis.value_at(tr.from, r);
    axpy(r, gamma * delta, basis.features(tr.from));
}

/// The gossip-coupled discounted step. Agent `i` bootstraps from agent
/// `neighbors[i]`'s estimate of the next state; every agent reads the
/// pre-update weights.
pub fn td0_distributed_step(
    model: &MarkovModel,
    bases: &BasisEnsemble,
    tr: Transition,
    ensemble: &mut AgentEnsemble,
    neighbors: &[usize],
    alpha: f64,
    gamma: f64,
) {
    coupled_update(model, bases, tr, ensemble, neighbors, alpha, 0.0, gamma);
}

/// Average-cost single-learner step:
/// `r <- r + gamma phi(x) [c - mu + phi(y)^T r - phi(x)^T r]`,
/// `mu <- mu + k gamma (c - mu)`, both using the old `mu`.
pub fn avgcost_centralized_step(
    model: &MarkovModel,
    basis: &FeatureBasis,
    tr: Transition,
    r: &mut [f64],
    mu: &mut f64,
    k: f64,
    gamma: f64,
) {
    let cost = model.c(tr.from, tr.to);
    let delta = cost - *mu + basis.value_at(tr.to, r) - basis.value_at(tr.from, r);
    axpy(r, gamma * delta, basis.features(tr.from));
    *mu += k * gamma * (cost - *mu);
}

/// Average-cost gossip-coupled step with one shared `mu`, updated once.
pub fn avgcost_distributed_step(
    model: &MarkovModel,
    bases: &BasisEnsemble,
    tr: Transition,
    ensemble: &mut AgentEnsemble,
    neighbors: &[usize],
    k: f64,
    gamma: f64,
) {
    let cost = model.c(tr.from, tr.to);
    let mu = ensemble.mu;
    coupled_update(model, bases, tr, ensemble, neighbors, 1.0, mu, gamma);
    ensemble.mu += k * gamma * (cost - mu);
}

#[allow(clippy::too_many_arguments)]
fn coupled_update(
    model: &MarkovModel,
    bases: &BasisEnsemble,
    tr: Transition,
    ensemble: &mut AgentEnsemble,
    neighbors: &[usize],
    alpha: f64,
    mu: f64,
    gamma: f64,
) {
    let cost = model.c(tr.from, tr.to);
    let n = ensemble.agents();
    debug_assert_eq!(neighbors.len(), n);
    // pre-update estimates, read by every agent
    let next: Vec<f64> = (0..n)
        .map(|j| bases.get(j).value_at(tr.to, &ensemble.weights[j]))
        .collect();
    for i in 0..n {
        let basis = bases.get(i);
        let r = &mut ensemble.weights[i];
        let delta = cost - mu + alpha * next[neighbors[i]] - basis.value_at(tr.from, r);
        axpy(r, gamma * delta, basis.features(tr.from));
    }
}

/// Weight snapshot taken after `step` transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub weights: Vec<Vec<f64>>,
    pub mu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub mode: Mode,
    pub criterion: Criterion,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory records step 0")
    }

    /// Long-format weights: `step,agent,weight_index,value`.
    pub fn write_weights_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,agent,weight_index,value")?;
        for s in &self.snapshots {
            for (i, w) in s.weights.iter().enumerate() {
                for (k, v) in w.iter().enumerate() {
                    writeln!(out, "{},{},{},{}", s.step, i, k, v)?;
                }
            }
        }
        Ok(())
    }

    /// Average-cost estimate series: `step,mu`. Empty body for discounted runs.
    pub fn write_mu_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,mu")?;
        for s in &self.snapshots {
            if let Some(mu) = s.mu {
                writeln!(out, "{},{}", s.step, mu)?;
            }
        }
        Ok(())
    }
}

/// Random streams for one replication: the chain and the polling draws use
/// separate ChaCha streams of the same seed, so coupled and uncoupled runs
/// with equal seeds see the same state trajectory.
struct Streams {
    chain: ChaCha8Rng,
    gossip: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let chain = ChaCha8Rng::seed_from_u64(seed);
        let mut gossip = ChaCha8Rng::seed_from_u64(seed);
        gossip.set_stream(1);
        Streams { chain, gossip }
    }
}

/// Cumulative transition rows for inverse-CDF sampling of the chain.
fn chain_cdf(model: &MarkovModel) -> Vec<Vec<f64>> {
    model
        .transition()
        .row_iter()
        .map(|row| {
            row.iter()
                .scan(0.0, |acc, v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect()
        })
        .collect()
}

/// Simulates the chain from `initial_state` for `steps` transitions,
/// applying the configured update on each, and records snapshots at step 0,
/// every `record_every` steps and at the end.
pub fn run(
    model: &MarkovModel,
    bases: &BasisEnsemble,
    q: &GossipMatrix,
    config: &RunConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let s = &config.settings;
    let m = model.states();
    let n = bases.agents();
    if bases.states() != m {
        return Err(Error::Structural(format!(
            "bases cover {} states, chain has {m}",
            bases.states()
        )));
    }
    if config.mode == Mode::Distributed && q.agents() != n {
        return Err(Error::Structural(format!(
            "Q has {} agents, bases have {n}",
            q.agents()
        )));
    }
    if config.mode == Mode::Centralized && n != 1 {
        return Err(Error::Argument(format!(
            "centralized mode takes a single basis, got {n}"
        )));
    }
    if s.initial_state >= m {
        return Err(Error::Argument(format!(
            "initial state {} outside 0..{m}",
            s.initial_state
        )));
    }

    let average = matches!(config.criterion, Criterion::Average);
    let alpha = match config.criterion {
        Criterion::Discounted { alpha } => alpha,
        Criterion::Average => 1.0,
    };
    let cdf = chain_cdf(model);
    let mut streams = Streams::new(s.seed);
    let mut ensemble = AgentEnsemble::zeros(bases);
    let mut neighbors = vec![0usize; n];
    let snapshot = |e: &AgentEnsemble| Snapshot {
        step: e.t,
        weights: e.weights.clone(),
        mu: average.then_some(e.mu),
    };
    let mut snapshots = vec![snapshot(&ensemble)];

    let mut state = s.initial_state;
    for t in 0..s.steps {
        let u: f64 = streams.chain.random();
        let next = gossip::draw_from_cdf(&cdf[state], u);
        let tr = Transition {
            from: state,
            to: next,
        };
        let gamma = s.schedule.gamma(t);

        match config.mode {
            Mode::Distributed => {
                gossip::sample_neighbors(q, &mut streams.gossip, &mut neighbors);
                if average {
                    avgcost_distributed_step(model, bases, tr, &mut ensemble, &neighbors, s.k, gamma);
                } else {
                    td0_distributed_step(model, bases, tr, &mut ensemble, &neighbors, alpha, gamma);
                }
            }
            Mode::Centralized | Mode::Uncoupled => {
                let mu = ensemble.mu;
                for (i, r) in ensemble.weights.iter_mut().enumerate() {
                    if average {
                        let mut mu_i = mu;
                        avgcost_centralized_step(model, bases.get(i), tr, r, &mut mu_i, s.k, gamma);
                    } else {
                        td0_centralized_step(model, bases.get(i), tr, r, alpha, gamma);
                    }
                }
                if average {
                    let cost = model.c(tr.from, tr.to);
                    ensemble.mu += s.k * gamma * (cost - mu);
                }
            }
        }

        ensemble.t = t + 1;
        ensemble.check_finite(ensemble.t)?;
        if ensemble.t.is_multiple_of(s.record_every) || ensemble.t == s.steps {
            snapshots.push(snapshot(&ensemble));
        }
        state = next;
    }

    Ok(Trajectory {
        mode: config.mode,
        criterion: config.criterion,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar_model(cost: f64) -> MarkovModel {
        MarkovModel::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, cost)).unwrap()
    }

    fn unit_basis() -> FeatureBasis {
        FeatureBasis::new(DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    #[test]
    fn zero_step_leaves_weights() {
        let model = scalar_model(2.0);
        let mut r = vec![0.3];
        td0_centralized_step(&model, &unit_basis(), Transition { from: 0, to: 0 }, &mut r, 0.9, 0.0);
        assert_eq!(r, vec![0.3]);
        let mut mu = 0.7;
        avgcost_centralized_step(&model, &unit_basis(), Transition { from: 0, to: 0 }, &mut r, &mut mu, 1.0, 0.0);
        assert_eq!((r[0], mu), (0.3, 0.7));
    }

    #[test]
    fn scalar_chain_fixed_point() {
        // r = 1 / (1 - alpha) is stationary for a one-state chain with unit cost
        let model = scalar_model(1.0);
        let mut r = vec![1.0 / (1.0 - 0.9)];
        td0_centralized_step(&model, &unit_basis(), Transition { from: 0, to: 0 }, &mut r, 0.9, 0.5);
        assert!((r[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_admissibility() {
        assert!(StepSchedule::default().validate().is_ok());
        assert!(StepSchedule::Power { a: 1.0, p: 0.5 }.validate().is_err());
        assert!(StepSchedule::Power { a: 0.0, p: 0.8 }.validate().is_err());
        assert!(StepSchedule::Power { a: 2.0, p: 1.0 }.validate().is_ok());
        assert_eq!(StepSchedule::default().gamma(0), 1.0);
    }

    #[test]
    fn constant_cost_mu_converges() {
        let model = scalar_model(4.0);
        let bases = BasisEnsemble::new(vec![unit_basis()]).unwrap();
        let q = GossipMatrix::uniform(1).unwrap();
        let cfg = RunConfig::new(
            RunSettings { steps: 5_000, ..Default::default() },
            Mode::Centralized,
            Criterion::Average,
        );
        let traj = run(&model, &bases, &q, &cfg).unwrap();
        assert!((traj.last().mu.unwrap() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let model = scalar_model(1.0);
        let basis = FeatureBasis::new(DMatrix::from_element(1, 1, 1e4)).unwrap();
        let bases = BasisEnsemble::new(vec![basis]).unwrap();
        let q = GossipMatrix::uniform(1).unwrap();
        let cfg = RunConfig::new(
            RunSettings { steps: 1_000, ..Default::default() },
            Mode::Centralized,
            Criterion::Discounted { alpha: 0.9 },
        );
        match run(&model, &bases, &q, &cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn snapshots_include_first_and_last() {
        let model = scalar_model(1.0);
        let bases = BasisEnsemble::new(vec![unit_basis()]).unwrap();
        let q = GossipMatrix::uniform(1).unwrap();
        let cfg = RunConfig::new(
            RunSettings { steps: 25, record_every: 10, ..Default::default() },
            Mode::Distributed,
            Criterion::Discounted { alpha: 0.5 },
        );
        let traj = run(&model, &bases, &q, &cfg).unwrap();
        let steps: Vec<u64> = traj.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
    }

    #[test]
    fn run_config_json_shape() {
        let json = r#"{"steps": 10, "seed": 3, "mode": "uncoupled",
                       "criterion": {"discounted": {"alpha": 0.9}},
                       "schedule": {"power": {"a": 0.5, "p": 0.8}}}"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.mode, Mode::Uncoupled);
        assert_eq!(cfg.settings.steps, 10);
        assert_eq!(cfg.settings.k, 1.0);
        assert_eq!(cfg.criterion, Criterion::Discounted { alpha: 0.9 });
        let avg: RunConfig = serde_json::from_str(r#"{"criterion": "average"}"#).unwrap();
        assert_eq!(avg.criterion, Criterion::Average);
    }
}
