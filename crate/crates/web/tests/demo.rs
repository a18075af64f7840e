use gossip_td_web::demo;
use serde_json::Value;

#[test]
fn solve_returns_curves_for_every_agent() {
    let v: Value = serde_json::from_str(&demo::solve_queue(false, 0.3, 0.35, 0.9).unwrap()).unwrap();
    assert_eq!(v["target"].as_array().unwrap().len(), 51);
    let agents = v["agents"].as_array().unwrap();
    assert_eq!(agents.len(), 3);
    assert!(agents.iter().all(|a| a.as_array().unwrap().len() == 51));
    assert!(v["mu_star"].is_null());
    assert!(v["report"]["beta"].as_f64().unwrap() < 1.0);
}

#[test]
fn average_solution_is_centred() {
    let v: Value = serde_json::from_str(&demo::solve_queue(true, 0.3, 0.35, 0.9).unwrap()).unwrap();
    let eta: Vec<f64> = serde_json::from_value(v["eta"].clone()).unwrap();
    for agent in v["agents"].as_array().unwrap() {
        let vals: Vec<f64> = serde_json::from_value(agent.clone()).unwrap();
        let mean: f64 = vals.iter().zip(&eta).map(|(a, b)| a * b).sum();
        assert!(mean.abs() < 1e-8);
    }
    assert!(v["mu_star"].as_f64().unwrap() > 0.0);
}

#[test]
fn compare_returns_paired_series() {
    let v: Value = serde_json::from_str(&demo::compare_runs(false, 0.3, 0.35, 1, 10_000).unwrap()).unwrap();
    let c = v["coupled"].as_array().unwrap();
    let u = v["uncoupled"].as_array().unwrap();
    assert_eq!(c.len(), u.len());
    assert_eq!(c.last().unwrap()["step"], 10_000);
    assert_eq!(c[0], u[0]);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(demo::solve_queue(false, 1.5, 0.35, 0.9).is_err());
    assert!(demo::solve_queue(false, 0.3, 0.35, 1.0).is_err());
    assert!(demo::compare_runs(false, 0.3, 0.35, 1, 0).is_err());
    assert!(demo::compare_runs(false, 0.3, 0.35, 1, demo::MAX_STEPS + 1).is_err());
}

#[test]
fn contraction_factor_below_one() {
    let f = demo::contraction_factor(0.3, 0.35).unwrap();
    assert!(f > 0.0 && f < 1.0);
}
