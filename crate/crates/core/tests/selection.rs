mod common;

use common::instance;
use rtcp::selection::{select_c, total_entropy, Criteria};
use rtcp::*;

#[test]
fn parameter_count_falls_with_the_boundary() {
    assert_eq!(ParamLayout::new(&ModelConfig::new(20, 5).unwrap()).dim(), 77);
    let dims: Vec<usize> = (1..19)
        .map(|c| ParamLayout::new(&ModelConfig::new(20, c).unwrap()).dim())
        .collect();
    assert!(dims.windows(2).all(|w| w[1] == w[0] - 1));
}

#[test]
fn entropy_by_hand() {
    let a = [0.5, 0.5, 0.0];
    let b = [1.0, 0.0, 0.0];
    let h = total_entropy([&a[..], &b[..]]);
    assert!((h - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn selection_on_simulated_data() {
    let inst = instance(12, 200, 8, 3);
    let options = FitOptions {
        standard_errors: false,
        ..FitOptions::default()
    };
    let result = select_c(&inst.data, &[4, 2, 3, 3], &options).unwrap();
    assert!(result.failed.is_empty());
    let boundaries: Vec<usize> = result.candidates.iter().map(|c| c.boundary).collect();
    assert_eq!(boundaries, vec![2, 3, 4]);
    for cand in &result.candidates {
        assert!(cand.criteria.icl >= cand.criteria.bic);
        let again = Criteria::compute(cand.loglik, cand.n_params, 200, cand.entropy_total);
        assert_eq!(again.aic.to_bits(), cand.criteria.aic.to_bits());
        assert_eq!(again.bic.to_bits(), cand.criteria.bic.to_bits());
        assert_eq!(again.icl.to_bits(), cand.criteria.icl.to_bits());
        assert_eq!(
            cand.n_params,
            ParamLayout::new(&ModelConfig::new(8, cand.boundary).unwrap()).dim()
        );
    }
    let pick: [(usize, fn(&selection::CandidateFit) -> f64); 3] = [
        (result.selected.aic, |c| c.criteria.aic),
        (result.selected.bic, |c| c.criteria.bic),
        (result.selected.icl, |c| c.criteria.icl),
    ];
    for (sel, value) in pick {
        let best = result.candidates.iter().map(value).fold(f64::INFINITY, f64::min);
        assert!(value(result.candidate(sel).unwrap()) <= best + 1e-9);
    }
}

#[test]
fn single_candidate_wins() {
    let inst = instance(13, 120, 7, 2);
    let options = FitOptions {
        standard_errors: false,
        ..FitOptions::default()
    };
    let result = select_c(&inst.data, &[2], &options).unwrap();
    assert_eq!(result.selected.aic, 2);
    assert_eq!(result.selected.bic, 2);
    assert_eq!(result.selected.icl, 2);
}

#[test]
fn invalid_candidates_are_configuration_errors() {
    let inst = instance(14, 30, 7, 2);
    let options = FitOptions::default();
    assert!(matches!(select_c(&inst.data, &[], &options), Err(Error::Config(_))));
    assert!(matches!(select_c(&inst.data, &[2, 6], &options), Err(Error::Config(_))));
    assert!(matches!(select_c(&inst.data, &[0], &options), Err(Error::Config(_))));
}
