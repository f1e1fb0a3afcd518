use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use xkte::numerics::{
    gram, gram_symmetric, kernel_eval, median_heuristic, reg_solve, std_normal_cdf, GramMatrix,
    KernelSpec,
};

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0))
}

fn brute_force_median(points: &DMatrix<f64>) -> f64 {
    let n = points.nrows();
    let mut dists = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push((points.row(i) - points.row(j)).norm_squared());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = dists.len();
    if m % 2 == 1 {
        dists[m / 2]
    } else {
        (dists[m / 2 - 1] + dists[m / 2]) / 2.0
    }
}

#[test]
fn gram_matches_entrywise_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows = random_points(&mut rng, 5, 3);
    let cols = random_points(&mut rng, 4, 3);
    for spec in [KernelSpec::rbf(1.0).unwrap(), KernelSpec::linear()] {
        let g = gram(&spec, &rows, &cols).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let u: Vec<f64> = rows.row(i).iter().copied().collect();
                let v: Vec<f64> = cols.row(j).iter().copied().collect();
                assert_eq!(g.values[(i, j)], kernel_eval(&spec, &u, &v).unwrap());
            }
        }
    }
}

#[test]
fn symmetric_gram_is_exactly_symmetric_and_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 40;
    let pts = random_points(&mut rng, n, 2);
    let g = gram_symmetric(&KernelSpec::rbf(0.7).unwrap(), &pts).unwrap();
    assert_eq!(g.values, g.values.transpose());
    let eig = g.values.clone().symmetric_eigenvalues();
    assert!(eig.min() >= -1e-8 * n as f64, "min eigenvalue {}", eig.min());
}

#[test]
fn median_matches_enumeration_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for n in [2, 3, 4, 7, 50] {
        let pts = random_points(&mut rng, n, 3);
        assert_eq!(median_heuristic(&pts).unwrap(), brute_force_median(&pts), "n = {n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn median_translation_and_scaling(
        seed in any::<u64>(),
        shift in -50.0f64..50.0,
        scale in 0.1f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(&mut rng, 12, 2);
        let base = median_heuristic(&pts).unwrap();
        let moved = median_heuristic(&pts.map(|v| v + shift)).unwrap();
        let scaled = median_heuristic(&pts.map(|v| v * scale)).unwrap();
        prop_assert!((moved - base).abs() <= 1e-9 * base.max(1.0) * (1.0 + shift.abs()));
        prop_assert!((scaled - scale * scale * base).abs() <= 1e-12 * scale * scale * base);
    }

    #[test]
    fn cdf_symmetry(t in -10.0f64..10.0) {
        prop_assert!((std_normal_cdf(t) + std_normal_cdf(-t) - 1.0).abs() <= 1e-12);
    }
}

fn dense_inverse_solve(k: &DMatrix<f64>, lambda: f64, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let a = k + DMatrix::identity(n, n) * lambda;
    a.lu().try_inverse().unwrap() * rhs
}

#[test]
fn reg_solve_residual_on_random_psd_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for &n in &[1usize, 2, 10, 50, 120, 200] {
        for &lambda in &[1e-3, 0.1, 1.0] {
            // low-rank PSD part plus an RBF gram
            let b = DMatrix::from_fn(n, n.div_ceil(2), |_, _| rng.random_range(-1.0..1.0));
            let pts = random_points(&mut rng, n, 3);
            let rbf = gram_symmetric(&KernelSpec::rbf(2.0).unwrap(), &pts).unwrap();
            let k = &b * b.transpose() + &rbf.values;
            let k = (&k + k.transpose()) * 0.5;
            let rhs = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
            let spec = KernelSpec::linear();
            let out = reg_solve(&GramMatrix { values: k.clone(), spec }, lambda, &rhs).unwrap();
            let a = &k + DMatrix::identity(n, n) * lambda;
            let resid = (&a * &out - &rhs).norm() / rhs.norm();
            assert!(resid <= 1e-8, "n={n} λ={lambda}: residual {resid}");
            if n <= 50 {
                let oracle = dense_inverse_solve(&k, lambda, &rhs);
                let rel = (&out - &oracle).norm() / oracle.norm();
                assert!(rel <= 1e-6, "n={n} λ={lambda}: oracle gap {rel}");
            }
        }
    }
}

#[test]
fn reg_solve_ten_by_ten_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let b = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
    let k = &b * b.transpose();
    let rhs = DMatrix::identity(10, 10);
    let g = GramMatrix {
        values: k.clone(),
        spec: KernelSpec::linear(),
    };
    let out = reg_solve(&g, 0.1, &rhs).unwrap();
    let oracle = dense_inverse_solve(&k, 0.1, &rhs);
    let a = &k + DMatrix::identity(10, 10) * 0.1;
    assert!((&a * &out - &rhs).norm() / rhs.norm() <= 1e-8);
    assert!((&out - &oracle).norm() / oracle.norm() <= 1e-8);
}

#[test]
fn normal_cdf_matches_reference_on_fine_grid() {
    let reference = Normal::standard();
    let mut worst = 0.0f64;
    for i in 0..=16_000 {
        let t = -8.0 + i as f64 * 1e-3;
        let gap = (std_normal_cdf(t) - reference.cdf(t)).abs();
        worst = worst.max(gap);
    }
    assert!(worst <= 1e-7, "max abs error {worst}");
    // relative accuracy in the far tail is much better than the absolute bound
    for t in [-8.0, -6.5, -5.0, -3.0, -2.5, -1.0] {
        let rel = (std_normal_cdf(t) / reference.cdf(t) - 1.0).abs();
        assert!(rel < 1e-10, "t={t}: relative error {rel}");
    }
}
