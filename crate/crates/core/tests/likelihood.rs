mod common;

use common::{
    central_difference, dense_trapezoid_loglik, instance, instance_with, log_sum_exp, perturbed,
    plain_lognormal_loglik, Scale, BROAD_SCALE,
};
use rtcp::{
    changepoint_pmf, conditional_logdensity, marginal_loglik, posterior_weights, score, Adaptation, LatentState,
    Likelihood, ModelConfig, ParamLayout, ParamVector, QuadratureGrid, Reduction, RtMatrix,
};

#[test]
fn score_matches_finite_differences_over_seeds() {
    let grid = QuadratureGrid::gauss_hermite(11).unwrap();
    for seed in 0..20 {
        let inst = instance(seed, 20, 8, 3);
        let theta = perturbed(&inst, seed, 0.2);
        let analytic = score(&inst.data, &theta, &grid, &inst.config).unwrap();
        for (r, a) in analytic.iter().enumerate() {
            let fd = central_difference(&inst.data, &theta, &grid, &inst.config, r, 1e-5);
            let rel = (a - fd).abs() / a.abs().max(1.0);
            assert!(rel < 1e-6, "seed {seed} coord {r}: analytic {a}, fd {fd}, rel {rel}");
        }
    }
}

#[test]
fn psi1_location_term_at_zero() {
    // at psi1 = 0 the location mean over 0..=13 is 6.5
    assert!((rtcp::model::location_mean(0.0, 14) - 6.5).abs() < 1e-13);
}

#[test]
fn beta_score_vanishes_at_exact_means() {
    // gamma = 0, alpha = 0: the data carry no latent information and every
    // residual is zero when y equals beta.
    let cfg = ModelConfig::new(6, 2).unwrap();
    let layout = ParamLayout::new(&cfg);
    let mut values = vec![0.0; layout.dim()];
    for j in 0..6 {
        values[layout.beta(j)] = 1.0 + j as f64;
        values[layout.log_sigma(j)] = (0.3f64).ln();
    }
    values[layout.psi2()] = 0.4;
    let theta = ParamVector::from_values(&cfg, values).unwrap();
    let data = RtMatrix::from_log_rows(vec![(1..=6).map(|v| v as f64).collect(); 3]).unwrap();
    let grid = QuadratureGrid::gauss_hermite(9).unwrap();
    let g = score(&data, &theta, &grid, &cfg).unwrap();
    for j in 0..6 {
        assert!(g[layout.beta(j)].abs() < 1e-12);
    }
}

#[test]
fn single_node_grid_matches_enumeration() {
    let inst = instance(3, 2, 6, 2);
    let grid = QuadratureGrid::new(vec![0.0], vec![1.0]).unwrap();
    let theta = perturbed(&inst, 11, 0.1);
    let (items, psi) = theta.unpack(&inst.config).unwrap();
    let mut want = 0.0;
    for y in inst.data.rows() {
        let terms: Vec<f64> = inst
            .config
            .support()
            .map(|tau| {
                let state = LatentState::new(0.0, tau, &inst.config).unwrap();
                conditional_logdensity(y, &state, &items, &inst.config).unwrap()
                    + changepoint_pmf(tau, 0.0, &psi, &inst.config).unwrap().ln()
            })
            .collect();
        want += log_sum_exp(&terms);
    }
    let got = marginal_loglik(&inst.data, &theta, &grid, &inst.config).unwrap();
    assert!((got - want).abs() < 1e-10 * want.abs(), "{got} vs {want}");
}

#[test]
fn quadrature_agrees_with_dense_trapezoid() {
    let inst = instance_with(42, 10, 8, 3, BROAD_SCALE);
    let theta = inst.truth.clone();
    let grid = QuadratureGrid::gauss_hermite(41).unwrap();
    let got = marginal_loglik(&inst.data, &theta, &grid, &inst.config).unwrap();
    let want = dense_trapezoid_loglik(&inst, &theta, 4001, 8.0);
    assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
}

#[test]
fn quadrature_converges_in_k() {
    let inst = instance_with(5, 50, 10, 4, BROAD_SCALE);
    let g21 = QuadratureGrid::gauss_hermite(21).unwrap();
    let g41 = QuadratureGrid::gauss_hermite(41).unwrap();
    let a = marginal_loglik(&inst.data, &inst.truth, &g21, &inst.config).unwrap();
    let b = marginal_loglik(&inst.data, &inst.truth, &g41, &inst.config).unwrap();
    assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn zero_gamma_reduces_to_plain_model() {
    for seed in 0..5 {
        let inst = instance(100 + seed, 30, 9, 3);
        let mut theta = perturbed(&inst, seed, 0.3);
        let layout = ParamLayout::new(&inst.config);
        for r in layout.gamma_range() {
            theta.values_mut()[r] = 0.0;
        }
        let grid = QuadratureGrid::gauss_hermite(21).unwrap();
        let got = marginal_loglik(&inst.data, &theta, &grid, &inst.config).unwrap();
        let want = plain_lognormal_loglik(&inst.data, &theta, &grid, &inst.config);
        assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn respondent_order_does_not_matter() {
    let inst = instance(8, 40, 8, 3);
    let grid = QuadratureGrid::gauss_hermite(15).unwrap();
    let order: Vec<usize> = (0..40).rev().collect();
    let shuffled = inst.data.select_rows(&order);
    let a = marginal_loglik(&inst.data, &inst.truth, &grid, &inst.config).unwrap();
    let b = marginal_loglik(&shuffled, &inst.truth, &grid, &inst.config).unwrap();
    assert!((a - b).abs() < 1e-9 * a.abs());
}

#[test]
fn ordered_reduction_is_reproducible() {
    let inst = instance(9, 200, 10, 4);
    let grid = QuadratureGrid::gauss_hermite(21).unwrap();
    let lik = Likelihood::new(&inst.data, &grid, &inst.config).unwrap();
    let (a, ga) = lik.loglik_and_score(&inst.truth).unwrap();
    let (b, gb) = lik.loglik_and_score(&inst.truth).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert!(ga.iter().zip(&gb).all(|(x, y)| x.to_bits() == y.to_bits()));
    let unordered = Likelihood::new(&inst.data, &grid, &inst.config)
        .unwrap()
        .with_reduction(Reduction::Unordered);
    assert!((unordered.loglik(&inst.truth).unwrap() - a).abs() < 1e-9 * a.abs());
}

#[test]
fn posterior_weights_normalize_and_split() {
    let inst = instance(10, 25, 8, 3);
    let grid = QuadratureGrid::gauss_hermite(11).unwrap();
    let lik = Likelihood::new(&inst.data, &grid, &inst.config).unwrap();
    for (i, w) in lik.posterior_weights(&inst.truth).unwrap().iter().enumerate() {
        let total: f64 = w.values().iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(w.values().iter().all(|v| *v >= 0.0));
        let marginal = w.tau_marginal();
        let changed: f64 = marginal[..marginal.len() - 1].iter().sum();
        assert!((changed - (1.0 - marginal[marginal.len() - 1])).abs() < 1e-12);
        let single = posterior_weights(inst.data.row(i), &inst.truth, &grid, &inst.config).unwrap();
        assert_eq!(single.values(), w.values());
    }
}

#[test]
fn near_noiseless_data_pin_the_change_point() {
    // alpha = 0 keeps xi out of the likelihood, so a fixed grid is exact
    let scale = Scale {
        alpha: (0.0, 0.0),
        gamma: (0.5, 0.8),
        sigma: (0.001, 0.001),
    };
    let inst = instance_with(77, 30, 10, 3, scale);
    let grid = QuadratureGrid::gauss_hermite(21).unwrap();
    for (i, &tau) in inst.taus.iter().enumerate() {
        let w = posterior_weights(inst.data.row(i), &inst.truth, &grid, &inst.config).unwrap();
        let mass = w.tau_marginal()[inst.config.support_index(tau)];
        assert!(mass > 0.99, "respondent {i}: mass {mass} at tau {tau}");
    }
}

#[test]
fn uninformative_data_return_the_prior() {
    // gamma = alpha = 0: posterior over tau equals the prior mixed over xi
    let cfg = ModelConfig::new(7, 2).unwrap();
    let layout = ParamLayout::new(&cfg);
    let mut values = vec![0.0; layout.dim()];
    values[layout.psi1()] = 0.3;
    values[layout.psi2()] = 0.7;
    values[layout.psi3()] = -0.4;
    let theta = ParamVector::from_values(&cfg, values).unwrap();
    let grid = QuadratureGrid::gauss_hermite(21).unwrap();
    let w = posterior_weights(&[0.3, -1.0, 0.2, 0.0, 1.5, -0.1, 0.4], &theta, &grid, &cfg).unwrap();
    let psi = theta.psi();
    for (s, tau) in cfg.support().enumerate() {
        let prior: f64 = grid
            .iter()
            .map(|(xi, wk)| wk * changepoint_pmf(tau, xi, &psi, &cfg).unwrap())
            .sum();
        assert!((w.tau_marginal()[s] - prior).abs() < 1e-12);
    }
}

#[test]
fn stays_finite_with_tiny_sigma() {
    let inst = instance(12, 10, 8, 3);
    let mut theta = inst.truth.clone();
    let layout = ParamLayout::new(&inst.config);
    for j in 0..8 {
        theta.values_mut()[layout.log_sigma(j)] = (1e-8f64).ln();
    }
    let grid = QuadratureGrid::gauss_hermite(21).unwrap();
    assert!(marginal_loglik(&inst.data, &theta, &grid, &inst.config)
        .unwrap()
        .is_finite());
}

#[test]
fn adapted_grid_matches_dense_trapezoid_on_peaked_posteriors() {
    // simulation-scale items: the posterior sd of xi is far below the
    // spacing of a fixed grid
    let inst = instance(42, 10, 8, 3);
    let grid = QuadratureGrid::gauss_hermite(21).unwrap();
    let lik = Likelihood::new(&inst.data, &grid, &inst.config).unwrap();
    let adaptation = lik.adapt(&inst.truth).unwrap();
    let got = lik.with_adaptation(&adaptation).unwrap().loglik(&inst.truth).unwrap();
    let want = dense_trapezoid_loglik(&inst, &inst.truth, 4001, 8.0);
    assert!(((got - want) / want).abs() < 1e-8, "{got} vs {want}");
}

#[test]
fn identity_adaptation_is_the_plain_grid() {
    let inst = instance(4, 30, 8, 3);
    let grid = QuadratureGrid::gauss_hermite(11).unwrap();
    let identity = Adaptation::identity(30);
    let a = Likelihood::new(&inst.data, &grid, &inst.config).unwrap();
    let b = Likelihood::new(&inst.data, &grid, &inst.config)
        .unwrap()
        .with_adaptation(&identity)
        .unwrap();
    let (la, ga) = a.loglik_and_score(&inst.truth).unwrap();
    let (lb, gb) = b.loglik_and_score(&inst.truth).unwrap();
    assert!((la - lb).abs() < 1e-9 * la.abs());
    assert!(ga.iter().zip(&gb).all(|(x, y)| (x - y).abs() < 1e-8 * x.abs().max(1.0)));
}

#[test]
fn adapted_score_matches_finite_differences() {
    let grid = QuadratureGrid::gauss_hermite(11).unwrap();
    for seed in 0..5 {
        let inst = instance(200 + seed, 20, 8, 3);
        let theta = perturbed(&inst, seed, 0.2);
        let base = Likelihood::new(&inst.data, &grid, &inst.config).unwrap();
        let adaptation = base.adapt(&inst.truth).unwrap();
        let lik = base.with_adaptation(&adaptation).unwrap();
        let (_, analytic) = lik.loglik_and_score(&theta).unwrap();
        for (r, a) in analytic.iter().enumerate() {
            let h = 1e-5;
            let mut plus = theta.clone();
            plus.values_mut()[r] += h;
            let mut minus = theta.clone();
            minus.values_mut()[r] -= h;
            let fd = (lik.loglik(&plus).unwrap() - lik.loglik(&minus).unwrap()) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(1.0);
            assert!(rel < 1e-6, "seed {seed} coord {r}: {a} vs {fd}");
        }
    }
}

#[test]
fn adaptation_rejects_wrong_length() {
    let inst = instance(4, 5, 8, 3);
    let grid = QuadratureGrid::gauss_hermite(11).unwrap();
    let wrong = Adaptation::identity(4);
    assert!(Likelihood::new(&inst.data, &grid, &inst.config)
        .unwrap()
        .with_adaptation(&wrong)
        .is_err());
    assert!(Adaptation::new(vec![0.0], vec![0.0]).is_err());
}
