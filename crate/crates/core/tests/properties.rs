mod common;

use gossip_td::analysis;
use gossip_td::augmented;
use gossip_td::chain;
use gossip_td::features::{self, BasisEnsemble, Projection};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

fn random_vector(rng: &mut impl Rng, m: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.random_range(-scale..scale))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_weights_are_invariant(seed in any::<u64>(), m in 1usize..12) {
        let mut rng = common::rng(seed);
        let model = common::random_chain(&mut rng, m);
        let eta = chain::stationary_distribution(&model).unwrap();
        let drift = (model.transition().transpose() * eta.eta() - eta.eta()).amax();
        prop_assert!(drift < 1e-10);
        prop_assert!(eta.eta().iter().all(|&v| v > 0.0));
        prop_assert!((eta.eta().sum() - 1.0).abs() < 1e-12);
        let oracle = common::power_stationary(model.transition());
        prop_assert!((eta.eta() - oracle).amax() < 1e-10);
    }

    #[test]
    fn discounted_value_solves_bellman(seed in any::<u64>(), m in 1usize..10, alpha in 0.05f64..0.99) {
        let mut rng = common::rng(seed);
        let model = common::random_chain(&mut rng, m);
        let j = chain::discounted_value(&model, alpha).unwrap();
        let resid = (chain::bellman_discounted(&j, &model, alpha) - &j).amax();
        prop_assert!(resid < 1e-10 * (1.0 + j.amax()));
    }

    #[test]
    fn basic_differential_value_solves_poisson(seed in any::<u64>(), m in 1usize..10) {
        let mut rng = common::rng(seed);
        let model = common::random_chain(&mut rng, m);
        let eta = chain::stationary_distribution(&model).unwrap();
        let j = chain::basic_differential_value(&model).unwrap();
        let resid = (chain::bellman_average(&j, &model).unwrap() - &j).amax();
        prop_assert!(resid < 1e-9);
        prop_assert!(eta.mean(&j).abs() < 1e-10);
    }

    #[test]
    fn bellman_is_an_eta_contraction(seed in any::<u64>(), m in 1usize..10, alpha in 0.05f64..0.99) {
        let mut rng = common::rng(seed);
        let model = common::random_chain(&mut rng, m);
        let eta = chain::stationary_distribution(&model).unwrap();
        let x = random_vector(&mut rng, m, 10.0);
        let y = random_vector(&mut rng, m, 10.0);
        let tx = chain::bellman_discounted(&x, &model, alpha);
        let ty = chain::bellman_discounted(&y, &model, alpha);
        prop_assert!(eta.norm(&(tx - ty)) <= alpha * eta.norm(&(x - y)) + 1e-12);
    }

    #[test]
    fn projection_laws(seed in any::<u64>(), m in 2usize..10, k_frac in 0.0f64..1.0) {
        let mut rng = common::rng(seed);
        let k = 1 + (k_frac * (m - 1) as f64) as usize;
        let model = common::random_chain(&mut rng, m);
        let eta = chain::stationary_distribution(&model).unwrap();
        let basis = common::random_basis(&mut rng, m, k);
        let proj = Projection::new(&basis, &eta).unwrap();
        let x = random_vector(&mut rng, m, 5.0);
        let px = proj.apply(&x);
        let scale = 1.0 + x.amax();
        // idempotent
        prop_assert!((proj.apply(&px) - &px).amax() < 1e-9 * scale);
        // nonexpansive in the eta norm
        prop_assert!(eta.norm(&px) <= eta.norm(&x) * (1.0 + 1e-12) + 1e-12);
        // Pythagoras
        let lhs = eta.norm(&x).powi(2);
        let rhs = eta.norm(&px).powi(2) + eta.norm(&(&x - &px)).powi(2);
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs));
        // residual orthogonal to every feature
        for f in basis.matrix().column_iter() {
            prop_assert!(eta.inner(&(&x - &px), &f.into_owned()).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn centred_norm_is_inf_over_constants(seed in any::<u64>(), m in 1usize..10) {
        let mut rng = common::rng(seed);
        let model = common::random_chain(&mut rng, m);
        let eta = chain::stationary_distribution(&model).unwrap();
        let x = random_vector(&mut rng, m, 5.0);
        let want = eta.norm(&features::projection_onto_ones_complement(&eta, &x));
        // golden-section search on the convex map c -> |x + c 1|_eta
        let f = |c: f64| eta.norm(&x.add_scalar(c));
        let (mut lo, mut hi) = (-20.0f64, 20.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if f(a) < f(b) { hi = b } else { lo = a }
        }
        prop_assert!((f(0.5 * (lo + hi)) - want).abs() < 1e-6);
    }

    #[test]
    fn self_loops_preserve_eta(seed in any::<u64>(), m in 1usize..10, delta in 0.01f64..0.99) {
        let mut rng = common::rng(seed);
        let model = common::random_chain(&mut rng, m);
        let looped = chain::add_self_loops(&model, delta).unwrap();
        let a = chain::stationary_distribution(&model).unwrap();
        let b = chain::stationary_distribution(&looped).unwrap();
        prop_assert!((a.eta() - b.eta()).amax() < 1e-10);
    }

    #[test]
    fn smoothed_gossip_is_doubly_stochastic(seed in any::<u64>(), n in 1usize..7, a in 0.0f64..0.999) {
        let mut rng = common::rng(seed);
        let q = common::random_gossip(&mut rng, n);
        let qt = analysis::smoothed_gossip(&q, a).unwrap();
        for i in 0..n {
            prop_assert!((qt.row(i).sum() - 1.0).abs() < 1e-10);
            prop_assert!((qt.column(i).sum() - 1.0).abs() < 1e-10);
        }
        prop_assert!(qt.iter().all(|&v| v >= -1e-15));
    }

    #[test]
    fn lifted_chain_invariants(seed in any::<u64>(), m in 2usize..7, n in 1usize..5) {
        let mut rng = common::rng(seed);
        let model = common::random_chain(&mut rng, m);
        let q = common::random_gossip(&mut rng, n);
        let bases = BasisEnsemble::new(
            (0..n).map(|_| {
                let k = rng.random_range(1..=m);
                common::random_basis(&mut rng, m, k)
            }).collect(),
        ).unwrap();
        let aug = augmented::build_augmented(&model, &q, &bases).unwrap();
        for row in aug.rho.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let nu = augmented::lifted_stationary(&aug).unwrap();
        prop_assert!((nu.eta() - &aug.nu).amax() < 1e-10);
    }

    #[test]
    fn discounted_error_invariants(seed in any::<u64>(), m in 2usize..8, n in 1usize..5, alpha in 0.1f64..0.95) {
        let mut rng = common::rng(seed);
        let model = common::random_chain(&mut rng, m);
        let q = common::random_gossip(&mut rng, n);
        let bases = BasisEnsemble::new(
            (0..n).map(|_| {
                let k = rng.random_range(1..=m);
                common::random_basis(&mut rng, m, k)
            }).collect(),
        ).unwrap();
        let aug = augmented::build_augmented(&model, &q, &bases).unwrap();
        let fp = augmented::solve_discounted_fixed_point(&aug, alpha).unwrap();
        let r = analysis::compute_discounted_errors(&model, &bases, &q, alpha, &fp).unwrap();
        for (e, es) in r.e.iter().zip(&r.e_star) {
            prop_assert!(*e >= *es - 1e-9 && *es >= 0.0);
        }
        prop_assert!(r.componentwise_bound_holds());
        prop_assert!(r.max_e() <= r.max_error_bound + analysis::BOUND_SLACK);
        prop_assert!(r.jbar_error <= r.jbar_bound + analysis::BOUND_SLACK);
        if r.side_condition {
            prop_assert!(r.beta > 0.0 && r.beta < 1.0);
        }
    }

    #[test]
    fn average_error_invariants(seed in any::<u64>(), m in 3usize..8, n in 1usize..4) {
        let mut rng = common::rng(seed);
        let model = common::random_chain(&mut rng, m);
        let eta = chain::stationary_distribution(&model).unwrap();
        let q = common::random_gossip(&mut rng, n);
        let bases = BasisEnsemble::new(
            (0..n).map(|_| {
                let k = rng.random_range(1..m);
                common::random_basis(&mut rng, m, k)
            }).collect(),
        ).unwrap().orthogonalized(&eta).unwrap();
        let aug = augmented::build_augmented(&model, &q, &bases).unwrap();
        let mu = chain::average_cost(&model).unwrap();
        let fp = augmented::solve_average_fixed_point(&aug, mu).unwrap();
        let r = analysis::compute_average_errors(&model, &bases, &q, &fp).unwrap();
        for (e, es) in r.e.iter().zip(&r.e_star) {
            prop_assert!(*e >= *es - 1e-9);
        }
        prop_assert!(r.componentwise_bound_holds());
        prop_assert!(r.max_e() <= r.max_error_bound + analysis::BOUND_SLACK);
    }
}
