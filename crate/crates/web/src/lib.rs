//! WebAssembly bindings for the queue experiment. Every export returns a
//! JSON string that the page parses; the pure functions under [`demo`] are
//! usable natively too.

use wasm_bindgen::prelude::*;

pub mod demo {
    use gossip_td::analysis::{self, MetricRow};
    use gossip_td::chain;
    use gossip_td::harness::{
        ChainSource, Experiment, ExperimentConfig, QueueSpec, AVERAGE_PRESET, DISCOUNTED_PRESET,
    };
    use gossip_td::learner::{Criterion, Mode};
    use gossip_td::Result;
    use serde::Serialize;

    /// Largest step count accepted from the page.
    pub const MAX_STEPS: u64 = 2_000_000;

    fn config(average: bool, p_arrival: f64, p_departure: f64) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::preset(if average { AVERAGE_PRESET } else { DISCOUNTED_PRESET })?;
        config.chain = ChainSource::Queue {
            queue: QueueSpec {
                p_arrival,
                p_departure,
                ..Default::default()
            },
        };
        Ok(config)
    }

    #[derive(Serialize)]
    struct Solution {
        /// Target values per queue length.
        target: Vec<f64>,
        /// `Phi^i r*^i` per agent.
        agents: Vec<Vec<f64>>,
        eta: Vec<f64>,
        mu_star: Option<f64>,
        report: analysis::ErrorReport,
    }

    /// Exact values and each agent's limiting estimate.
    pub fn solve_queue(average: bool, p_arrival: f64, p_departure: f64, alpha: f64) -> Result<String> {
        let mut config = config(average, p_arrival, p_departure)?;
        if !average {
            config.alpha = Some(alpha);
        }
        let exp = Experiment::prepare(&config)?;
        let fp = exp.fixed_point()?;
        let report = exp.error_report(&fp)?;
        let eta = chain::stationary_distribution(&exp.model)?;
        let target = analysis::target_value(&exp.model, config.criterion())?;
        let agents = exp
            .bases
            .iter()
            .zip(fp.blocks(exp.bases.dims().as_slice()))
            .map(|(basis, r)| {
                let v = basis.values(&r);
                // average-cost estimates are compared up to a constant
                let v = if matches!(config.criterion(), Criterion::Average) {
                    v.add_scalar(-eta.mean(&v))
                } else {
                    v
                };
                v.iter().copied().collect()
            })
            .collect();
        let out = Solution {
            target: target.iter().copied().collect(),
            agents,
            eta: eta.eta().iter().copied().collect(),
            mu_star: fp.mu_star,
            report,
        };
        Ok(serde_json::to_string(&out)?)
    }

    #[derive(Serialize)]
    struct Comparison {
        coupled: Vec<MetricRow>,
        uncoupled: Vec<MetricRow>,
    }

    /// Coupled and uncoupled learners on one chain path.
    pub fn compare_runs(average: bool, p_arrival: f64, p_departure: f64, seed: u64, steps: u64) -> Result<String> {
        if steps == 0 || steps > MAX_STEPS {
            return Err(gossip_td::Error::Argument(format!(
                "steps must lie in 1..={MAX_STEPS}"
            )));
        }
        let mut config = config(average, p_arrival, p_departure)?;
        config.run.seed = seed;
        config.run.steps = steps;
        config.run.record_every = (steps / 200).max(1);
        let exp = Experiment::prepare(&config)?;
        let metrics = |mode| -> Result<Vec<MetricRow>> {
            let traj = exp.run_mode(mode)?;
            analysis::metrics_over_time(&traj, &exp.model, &exp.bases)
        };
        let out = Comparison {
            coupled: metrics(Mode::Distributed)?,
            uncoupled: metrics(Mode::Uncoupled)?,
        };
        Ok(serde_json::to_string(&out)?)
    }

    /// Contraction factor of `P` on the complement of the constants.
    pub fn contraction_factor(p_arrival: f64, p_departure: f64) -> Result<f64> {
        let spec = QueueSpec {
            p_arrival,
            p_departure,
            ..Default::default()
        };
        chain::orthogonal_contraction_factor(&gossip_td::harness::build_queue_chain(&spec)?)
    }
}

fn js_err(e: gossip_td::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = solveQueue)]
pub fn solve_queue(average: bool, p_arrival: f64, p_departure: f64, alpha: f64) -> Result<String, JsError> {
    demo::solve_queue(average, p_arrival, p_departure, alpha).map_err(js_err)
}

#[wasm_bindgen(js_name = compareRuns)]
pub fn compare_runs(average: bool, p_arrival: f64, p_departure: f64, seed: u32, steps: u32) -> Result<String, JsError> {
    demo::compare_runs(average, p_arrival, p_departure, seed.into(), steps.into()).map_err(js_err)
}

#[wasm_bindgen(js_name = contractionFactor)]
pub fn contraction_factor(p_arrival: f64, p_departure: f64) -> Result<f64, JsError> {
    demo::contraction_factor(p_arrival, p_departure).map_err(js_err)
}
