use nalgebra::DMatrix;

use xkte::dtetests::{
    aipw_ate, cross_fit, kte_statistic, run_test, Method, PropensityMode, TestConfig,
};
use xkte::numerics::{std_normal_cdf, KernelSpec};
use xkte::scenarios::{generate, Design, Link, Scenario, ScenarioConfig};
use xkte::{Dataset, Error};

fn data(scenario: Scenario, design: Design, n: usize, seed: u64) -> Dataset {
    generate(&ScenarioConfig::new(scenario, Link::Linear, design, n, seed)).unwrap()
}

fn quick_config() -> TestConfig {
    TestConfig {
        permutations: 30,
        permutation_seed: 9,
        ..TestConfig::default()
    }
}

#[test]
fn every_method_is_deterministic() {
    let d = data(Scenario::IV, Design::Observational, 80, 1);
    let config = quick_config();
    for m in Method::ALL {
        let a = run_test(m, &d, &config).unwrap();
        let b = run_test(m, &d, &config).unwrap();
        assert_eq!(a.statistic.to_bits(), b.statistic.to_bits(), "{m}");
        assert_eq!(a.p_value.to_bits(), b.p_value.to_bits(), "{m}");
        assert!((0.0..=1.0).contains(&a.p_value));
        assert_eq!(a.reject, a.p_value <= a.alpha);
    }
}

#[test]
fn cross_tests_are_one_sided() {
    for seed in 0..5 {
        let d = data(Scenario::III, Design::Observational, 120, seed);
        for m in [Method::AipwXkte, Method::IpwXkte] {
            let r = run_test(m, &d, &TestConfig::default()).unwrap();
            assert!((r.p_value - (1.0 - std_normal_cdf(r.statistic))).abs() <= 1e-12);
        }
    }
}

#[test]
fn outcome_translation_leaves_statistic_unchanged() {
    let d = data(Scenario::II, Design::Observational, 100, 4);
    let shifted = d
        .with_outcomes(d.outcomes().iter().map(|y| y + 3.25).collect())
        .unwrap();
    let fixed = TestConfig {
        bandwidth_y: Some(0.8),
        ..TestConfig::default()
    };
    for config in [fixed, TestConfig::default()] {
        let a = run_test(Method::AipwXkte, &d, &config).unwrap().statistic;
        let b = run_test(Method::AipwXkte, &shifted, &config).unwrap().statistic;
        // the shift only perturbs rounding of the differences y_i - y_j
        assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

#[test]
fn label_swap_negates_ate_estimate() {
    for seed in 0..4 {
        let d = data(Scenario::II, Design::Observational, 150, seed);
        let swapped = d
            .with_treatment(d.treatment().iter().map(|a| 1 - a).collect())
            .unwrap();
        let config = TestConfig::default();
        let a = aipw_ate(&d, &config).unwrap().psi;
        let b = aipw_ate(&swapped, &config).unwrap().psi;
        assert!((a + b).abs() <= 1e-8, "{a} vs {b}");
    }
}

#[test]
fn ipw_cross_values_have_closed_form_under_known_half() {
    let d = data(Scenario::II, Design::Experimental, 40, 6);
    let config = TestConfig {
        propensity: PropensityMode::Known(0.5),
        ..TestConfig::default()
    };
    let fit = cross_fit(&d, &config, false).unwrap();
    let d1 = d.select(&fit.folds.fold1);
    let d2 = d.select(&fit.folds.fold2);
    let w = |a: u8| if a == 1 { 2.0 } else { -2.0 };
    for i in 0..d1.n() {
        let mut row = 0.0;
        for j in 0..d2.n() {
            row += w(d1.treatment()[i])
                * w(d2.treatment()[j])
                * fit.kernel_y.eval_scalar(d1.outcomes()[i], d2.outcomes()[j]);
        }
        let want = row / d2.n() as f64;
        assert!((fit.stat.f_values[i] - want).abs() <= 1e-12);
    }
}

#[test]
fn kte_identity_permutation_reproduces_observed() {
    let d = data(Scenario::III, Design::Experimental, 60, 2);
    let config = TestConfig {
        propensity: PropensityMode::Known(0.5),
        bandwidth_y: Some(1.0),
        permutations: 20,
        ..TestConfig::default()
    };
    let r = run_test(Method::Kte, &d, &config).unwrap();
    let pis = vec![0.5; d.n()];
    let k = KernelSpec::rbf(1.0).unwrap();
    let direct = kte_statistic(d.outcomes(), d.treatment(), &pis, &k, false);
    assert_eq!(r.statistic, direct);
}

#[test]
fn identical_outcomes_are_degenerate() {
    let d = data(Scenario::I, Design::Observational, 60, 3);
    let flat = d.with_outcomes(vec![1.5; d.n()]).unwrap();
    for m in Method::ALL {
        if m == Method::BaselineAipw {
            continue;
        }
        let err = run_test(m, &flat, &quick_config()).unwrap_err();
        assert!(err.is_degenerate(), "{m}: {err}");
    }
}

#[test]
fn identical_outcomes_with_fixed_bandwidth_give_rank_one_cross_matrix() {
    let d = data(Scenario::I, Design::Observational, 60, 3);
    let flat = d.with_outcomes(vec![1.5; d.n()]).unwrap();
    let config = TestConfig {
        bandwidth_y: Some(1.0),
        ..TestConfig::default()
    };
    let fit = cross_fit(&flat, &config, true).unwrap();
    let sv = fit.inner.singular_values();
    assert!(sv[1] <= 1e-10 * sv[0], "second singular value {}", sv[1]);
}

#[test]
fn single_arm_fold_is_a_configuration_error() {
    // treated units all in the first half
    let n = 20;
    let x = DMatrix::from_fn(n, 2, |i, j| (i * 3 + j) as f64 * 0.1);
    let a = (0..n).map(|i| u8::from(i < 10)).collect();
    let y = (0..n).map(|i| (i as f64).sin()).collect();
    let d = Dataset::new(x, a, y).unwrap();
    let err = run_test(Method::AipwXkte, &d, &TestConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    let ok = TestConfig {
        split_seed: Some(1),
        ..TestConfig::default()
    };
    assert!(run_test(Method::AipwXkte, &d, &ok).is_ok());
}

#[test]
fn permutation_tests_reject_tiny_inputs() {
    let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let d = Dataset::new(x, vec![0, 1], vec![0.0, 1.0]).unwrap();
    for m in Method::ALL {
        assert!(run_test(m, &d, &quick_config()).is_err(), "{m}");
    }
}

#[test]
fn odd_sample_drops_one_unit() {
    let d = data(Scenario::II, Design::Observational, 101, 8);
    let r = run_test(Method::AipwXkte, &d, &TestConfig::default()).unwrap();
    assert_eq!(r.n_effective, 50);
    assert_eq!(r.diagnostics.dropped_unit, Some(100));
}
