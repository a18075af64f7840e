//! Experiment construction: the capped single-server queue, JSON
//! configuration, and the solve / simulate / analyse pipeline that writes
//! CSV and JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, ErrorReport, MetricRow};
use crate::augmented::{self, AugmentedSystem, FixedPoint};
use crate::chain::{self, ChainReport, ChainSpec, MarkovModel};
use crate::error::{Error, Result};
use crate::features::{self, BasesSpec, BasisEnsemble};
use crate::gossip::{self, GossipMatrix, GossipReport, GossipSpec};
use crate::learner::{self, Criterion, Mode, RunConfig, RunSettings, Trajectory};

/// Preset name of the discounted queue experiment.
pub const DISCOUNTED_PRESET: &str = gossip::PRESET_NAME;
/// Preset name of the average-cost queue experiment.
pub const AVERAGE_PRESET: &str = "paper-4.1-average";

/// Which endpoint of a transition is charged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostRule {
    /// `c(i, j) = i`.
    #[default]
    Current,
    /// `c(i, j) = j`.
    Next,
}

/// Discrete-time queue: per slot one arrival with probability `p_arrival`
/// and, independently, one departure with probability `p_departure`; the
/// length is clamped to `0..=cap`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueueSpec {
    pub cap: usize,
    pub p_arrival: f64,
    pub p_departure: f64,
    pub cost_rule: CostRule,
}

impl Default for QueueSpec {
    fn default() -> Self {
        QueueSpec {
            cap: 50,
            p_arrival: 0.3,
            p_departure: 0.35,
            cost_rule: CostRule::Current,
        }
    }
}

impl QueueSpec {
    pub fn validate(&self) -> Result<()> {
        let open = |p: f64| p > 0.0 && p < 1.0;
        if !open(self.p_arrival) || !open(self.p_departure) {
            return Err(Error::Argument(format!(
                "queue probabilities must lie in (0, 1), got arrival {} departure {}",
                self.p_arrival, self.p_departure
            )));
        }
        if self.cap < 1 {
            return Err(Error::Argument("queue cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// The birth-death chain of the queue on states `0..=cap`.
pub fn build_queue_chain(spec: &QueueSpec) -> Result<MarkovModel> {
    spec.validate()?;
    let m = spec.cap + 1;
    let mut p = DMatrix::zeros(m, m);
    let (pa, pd) = (spec.p_arrival, spec.p_departure);
    for i in 0..m {
        for (arrive, depart, prob) in [
            (1, 0, pa * (1.0 - pd)),
            (0, 1, (1.0 - pa) * pd),
            (1, 1, pa * pd),
            (0, 0, (1.0 - pa) * (1.0 - pd)),
        ] {
            let next = (i as i64 + arrive - depart).clamp(0, spec.cap as i64) as usize;
            p[(i, next)] += prob;
        }
    }
    let c = DMatrix::from_fn(m, m, |i, j| match spec.cost_rule {
        CostRule::Current => i as f64,
        CostRule::Next => j as f64,
    });
    MarkovModel::new(p, c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainSource {
    Queue { queue: QueueSpec },
    Explicit(ChainSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GossipSource {
    Preset(String),
    Explicit(GossipSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasesSource {
    Preset(String),
    Explicit(BasesSpec),
}

/// Full experiment description, loadable from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub chain: ChainSource,
    pub gossip: GossipSource,
    pub bases: BasesSource,
    /// Discount factor; absent for the average-cost criterion.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Centre every feature (`eta^T phi = 0`). Defaults to on for average
    /// cost and off for discounted cost.
    #[serde(default)]
    pub orthogonalize: Option<bool>,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// The built-in queue experiments: `paper-4.1` (discounted, alpha 0.9)
    /// and `paper-4.1-average` (average cost, centred features).
    pub fn preset(name: &str) -> Result<Self> {
        let alpha = match name {
            DISCOUNTED_PRESET => Some(0.9),
            AVERAGE_PRESET => None,
            other => return Err(Error::Argument(format!("unknown experiment preset {other:?}"))),
        };
        Ok(ExperimentConfig {
            chain: ChainSource::Queue {
                queue: QueueSpec::default(),
            },
            gossip: GossipSource::Preset(gossip::PRESET_NAME.into()),
            bases: BasesSource::Preset(gossip::PRESET_NAME.into()),
            alpha,
            orthogonalize: None,
            run: RunSettings::default(),
            out: default_out(),
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Loads a config file, or a preset when `arg` names one.
    pub fn load(arg: &str) -> Result<Self> {
        if arg == DISCOUNTED_PRESET || arg == AVERAGE_PRESET {
            return Self::preset(arg);
        }
        Self::from_json(&fs::read_to_string(arg)?)
    }

    pub fn criterion(&self) -> Criterion {
        match self.alpha {
            Some(alpha) => Criterion::Discounted { alpha },
            None => Criterion::Average,
        }
    }
}

/// Validation outcome for each experiment component.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub chain: ChainReport,
    pub gossip: GossipReport,
    pub agents: usize,
    pub feature_dims: Vec<usize>,
    pub lifted_states: usize,
}

/// Validated, ready-to-run experiment components.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: MarkovModel,
    pub q: GossipMatrix,
    /// Bases as used by the learners (centred when orthogonalising).
    pub bases: BasisEnsemble,
    pub aug: AugmentedSystem,
    pub report: ValidationReport,
}

impl Experiment {
    /// Builds every component and checks (A1)-(A3) and the lifted-chain
    /// invariants.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.criterion().validate()?;
        let model = match &config.chain {
            ChainSource::Queue { queue } => build_queue_chain(queue)?,
            ChainSource::Explicit(spec) => spec.build()?,
        };
        let chain_report = chain::validate_chain(&model)?;

        let q = match &config.gossip {
            GossipSource::Preset(name) => GossipMatrix::preset(name)?,
            GossipSource::Explicit(spec) => spec.build()?,
        };
        let gossip_report = gossip::validate_gossip(&q)?;

        let bases = match &config.bases {
            BasesSource::Preset(name) if name == gossip::PRESET_NAME => {
                features::build_queue_bases(model.states())?
            }
            BasesSource::Preset(other) => {
                return Err(Error::Argument(format!("unknown basis preset {other:?}")))
            }
            BasesSource::Explicit(spec) => spec.build()?,
        };
        if bases.states() != model.states() {
            return Err(Error::Structural(format!(
                "bases cover {} states, chain has {}",
                bases.states(),
                model.states()
            )));
        }
        bases.validate()?;
        let centre = config
            .orthogonalize
            .unwrap_or(matches!(config.criterion(), Criterion::Average));
        let bases = if centre {
            let eta = chain::stationary_distribution(&model)?;
            bases.orthogonalized(&eta)?
        } else {
            bases
        };

        let aug = augmented::build_augmented(&model, &q, &bases)?;
        let report = ValidationReport {
            chain: chain_report,
            gossip: gossip_report,
            agents: bases.agents(),
            feature_dims: bases.dims(),
            lifted_states: aug.rho.nrows(),
        };
        Ok(Experiment {
            config: config.clone(),
            model,
            q,
            bases,
            aug,
            report,
        })
    }

    /// Coupled fixed point for the configured criterion.
    pub fn fixed_point(&self) -> Result<FixedPoint> {
        match self.config.criterion() {
            Criterion::Discounted { alpha } => augmented::solve_discounted_fixed_point(&self.aug, alpha),
            Criterion::Average => {
                let mu = chain::average_cost(&self.model)?;
                augmented::solve_average_fixed_point(&self.aug, mu)
            }
        }
    }

    pub fn error_report(&self, fp: &FixedPoint) -> Result<ErrorReport> {
        match self.config.criterion() {
            Criterion::Discounted { alpha } => {
                analysis::compute_discounted_errors(&self.model, &self.bases, &self.q, alpha, fp)
            }
            Criterion::Average => analysis::compute_average_errors(&self.model, &self.bases, &self.q, fp),
        }
    }

    pub fn run_mode(&self, mode: Mode) -> Result<Trajectory> {
        let cfg = RunConfig::new(self.config.run.clone(), mode, self.config.criterion());
        learner::run(&self.model, &self.bases, &self.q, &cfg)
    }
}

/// Everything an experiment produces, held in memory until written.
#[derive(Clone, Debug)]
pub struct ExperimentBundle {
    pub fixed_point: FixedPoint,
    pub error_report: ErrorReport,
    pub coupled: Trajectory,
    pub uncoupled: Trajectory,
    pub coupled_metrics: Vec<MetricRow>,
    pub uncoupled_metrics: Vec<MetricRow>,
    pub runtime_seconds: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    fixed_point: &'a FixedPoint,
    error_report: &'a ErrorReport,
    runtime_seconds: f64,
}

/// Solves for the fixed point, runs the coupled and uncoupled learners on
/// the same chain trajectory, and computes the error report and metrics.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentBundle> {
    let start = Instant::now();
    let exp = Experiment::prepare(config)?;
    let fixed_point = exp.fixed_point()?;
    let error_report = exp.error_report(&fixed_point)?;
    let coupled = exp.run_mode(Mode::Distributed)?;
    let uncoupled = exp.run_mode(Mode::Uncoupled)?;
    let coupled_metrics = analysis::metrics_over_time(&coupled, &exp.model, &exp.bases)?;
    let uncoupled_metrics = analysis::metrics_over_time(&uncoupled, &exp.model, &exp.bases)?;
    Ok(ExperimentBundle {
        fixed_point,
        error_report,
        coupled,
        uncoupled,
        coupled_metrics,
        uncoupled_metrics,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

impl ExperimentBundle {
    fn files(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        let mut files = Vec::new();
        let mut buf = Vec::new();
        self.coupled.write_weights_csv(&mut buf)?;
        files.push(("coupled_weights.csv", std::mem::take(&mut buf)));
        self.uncoupled.write_weights_csv(&mut buf)?;
        files.push(("uncoupled_weights.csv", std::mem::take(&mut buf)));
        if matches!(self.coupled.criterion, Criterion::Average) {
            self.coupled.write_mu_csv(&mut buf)?;
            files.push(("coupled_mu.csv", std::mem::take(&mut buf)));
            self.uncoupled.write_mu_csv(&mut buf)?;
            files.push(("uncoupled_mu.csv", std::mem::take(&mut buf)));
        }
        analysis::write_metrics_csv(&self.coupled_metrics, &mut buf)?;
        files.push(("coupled_metrics.csv", std::mem::take(&mut buf)));
        analysis::write_metrics_csv(&self.uncoupled_metrics, &mut buf)?;
        files.push(("uncoupled_metrics.csv", std::mem::take(&mut buf)));
        files.push(("fixed_point.json", serde_json::to_vec_pretty(&self.fixed_point)?));
        files.push(("error_report.json", serde_json::to_vec_pretty(&self.error_report)?));
        let summary = Summary {
            fixed_point: &self.fixed_point,
            error_report: &self.error_report,
            runtime_seconds: self.runtime_seconds,
        };
        files.push(("summary.json", serde_json::to_vec_pretty(&summary)?));
        Ok(files)
    }

    /// Writes every artifact into `dir`; files already written are removed
    /// if any write fails.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let files = self.files()?;
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, bytes) in files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(e.into());
            }
            written.push(path);
        }
        Ok(written)
    }
}
