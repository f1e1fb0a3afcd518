use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xkte::embedding::{build_fold_phis, build_phi, ipw_weight, phi_inner, phi_inner_matrix, Observation};
use xkte::nuisance::{fit_cme, fit_propensity, CmeModel, PropensityModel};
use xkte::numerics::KernelSpec;
use xkte::scenarios::{generate, Design, Link, Scenario, ScenarioConfig};
use xkte::{Dataset, FoldAssignment};

struct Setup {
    d1: Dataset,
    d2: Dataset,
    prop: PropensityModel,
    ky: KernelSpec,
    // (control, treated) fitted on the opposite fold
    for1: (CmeModel, CmeModel),
    for2: (CmeModel, CmeModel),
}

fn setup(n: usize, seed: u64, scenario: Scenario) -> Option<Setup> {
    let data = generate(&ScenarioConfig::new(
        scenario,
        Link::Linear,
        Design::Observational,
        n,
        seed,
    ))
    .unwrap();
    let folds = FoldAssignment::new(n, Some(seed)).unwrap();
    let d1 = data.select(&folds.fold1);
    let d2 = data.select(&folds.fold2);
    if !(d1.has_both_arms() && d2.has_both_arms()) {
        return None;
    }
    let prop = fit_propensity(&data, 1e-6, 0.01).unwrap();
    let kx = KernelSpec::rbf(5.0).unwrap();
    let ky = KernelSpec::rbf(1.3).unwrap();
    let fit = |d: &Dataset| {
        (
            fit_cme(d, 0, kx, ky, 0.1).unwrap(),
            fit_cme(d, 1, kx, ky, 0.1).unwrap(),
        )
    };
    Some(Setup {
        for1: fit(&d2),
        for2: fit(&d1),
        d1,
        d2,
        prop,
        ky,
    })
}

/// `(anchor, coefficient)` pairs of φ̂(z) built straight from the nuisance fits.
fn expansion(z: &Observation, prop: &PropensityModel, cme: &(CmeModel, CmeModel)) -> Vec<(f64, f64)> {
    let pi = prop.predict(&z.x).unwrap();
    let w = if z.a == 1 { 1.0 / pi } else { -1.0 / (1.0 - pi) };
    let (c0, c1) = cme;
    let mut terms = vec![(z.y, w)];
    // + β̂₁(x) − w·1{a=1}·β̂₁(x)
    let w1 = c1.weights(&z.x).unwrap();
    for (t, &yt) in c1.anchor_outcomes().iter().enumerate() {
        terms.push((yt, w1[t]));
        if z.a == 1 {
            terms.push((yt, -w * w1[t]));
        }
    }
    // − β̂₀(x) − w·1{a=0}·β̂₀(x)
    let w0 = c0.weights(&z.x).unwrap();
    for (t, &yt) in c0.anchor_outcomes().iter().enumerate() {
        terms.push((yt, -w0[t]));
        if z.a == 0 {
            terms.push((yt, -w * w0[t]));
        }
    }
    terms
}

fn quadruple_sum(s: &Setup) -> Vec<Vec<f64>> {
    let left: Vec<_> = (0..s.d1.n())
        .map(|i| expansion(&Observation::from_dataset(&s.d1, i), &s.prop, &s.for1))
        .collect();
    let right: Vec<_> = (0..s.d2.n())
        .map(|j| expansion(&Observation::from_dataset(&s.d2, j), &s.prop, &s.for2))
        .collect();
    left.iter()
        .map(|p| {
            right
                .iter()
                .map(|q| {
                    let mut total = 0.0;
                    for &(ya, ca) in p {
                        for &(yb, cb) in q {
                            total += ca * cb * (-(ya - yb).powi(2) / (2.0 * 1.3)).exp();
                        }
                    }
                    total
                })
                .collect()
        })
        .collect()
}

#[test]
fn direct_formula_matches_coefficient_form() {
    let s = setup(20, 41, Scenario::IV).unwrap();
    let (c0, c1) = &s.for1;
    for i in 0..s.d1.n() {
        let z = Observation::from_dataset(&s.d1, i);
        let phi = build_phi(&z, &s.prop, c0, c1, &s.ky, 1).unwrap();
        let w = ipw_weight(z.a, s.prop.predict(&z.x).unwrap());
        for probe in [-2.0, -0.5, 0.0, 0.7, 3.1] {
            let beta1 = c1.embedding_at(&z.x, probe).unwrap();
            let beta0 = c0.embedding_at(&z.x, probe).unwrap();
            let beta_a = if z.a == 1 { beta1 } else { beta0 };
            let direct = w * s.ky.eval_scalar(z.y, probe) - w * beta_a + beta1 - beta0;
            assert!((phi.eval_at(probe) - direct).abs() <= 1e-10);
        }
    }
}

#[test]
fn inner_matrix_matches_quadruple_sum() {
    let mut checked = 0;
    for seed in 0..12u64 {
        for n in [8usize, 12, 20] {
            let Some(s) = setup(n, seed, Scenario::III) else {
                continue;
            };
            let left = build_fold_phis(&s.d1, &s.prop, &s.for1.0, &s.for1.1, &s.ky, 1).unwrap();
            let right = build_fold_phis(&s.d2, &s.prop, &s.for2.0, &s.for2.1, &s.ky, 2).unwrap();
            let m = phi_inner_matrix(&left, &right).unwrap();
            let oracle = quadruple_sum(&s);
            for (i, row) in oracle.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    assert!((m[(i, j)] - v).abs() <= 1e-9, "n={n} seed={seed} ({i},{j})");
                    let single = phi_inner(&left[i], &right[j]).unwrap();
                    assert!((m[(i, j)] - single).abs() <= 1e-10);
                }
            }
            checked += 1;
        }
    }
    assert!(checked >= 20);
}

#[test]
fn zeroed_embeddings_reduce_to_ipw_products() {
    let mut checked = 0;
    for seed in 0..10u64 {
        let Some(s) = setup(16, seed, Scenario::II) else {
            continue;
        };
        let zero = |m: &(CmeModel, CmeModel)| (m.0.clone().into_zeroed(), m.1.clone().into_zeroed());
        let (z1, z2) = (zero(&s.for1), zero(&s.for2));
        let left = build_fold_phis(&s.d1, &s.prop, &z1.0, &z1.1, &s.ky, 1).unwrap();
        let right = build_fold_phis(&s.d2, &s.prop, &z2.0, &z2.1, &s.ky, 2).unwrap();
        let m = phi_inner_matrix(&left, &right).unwrap();
        for i in 0..s.d1.n() {
            let zi = Observation::from_dataset(&s.d1, i);
            let wi = ipw_weight(zi.a, s.prop.predict(&zi.x).unwrap());
            for j in 0..s.d2.n() {
                let zj = Observation::from_dataset(&s.d2, j);
                let wj = ipw_weight(zj.a, s.prop.predict(&zj.x).unwrap());
                let want = wi * wj * s.ky.eval_scalar(zi.y, zj.y);
                assert!((m[(i, j)] - want).abs() <= 1e-12);
                assert!((phi_inner(&left[i], &right[j]).unwrap() - want).abs() <= 1e-12);
            }
        }
        checked += 1;
    }
    assert!(checked >= 5);
}

#[test]
fn coefficients_are_bounded_under_clipping() {
    let s = setup(40, 3, Scenario::IV).unwrap();
    let left = build_fold_phis(&s.d1, &s.prop, &s.for1.0, &s.for1.1, &s.ky, 1).unwrap();
    for p in &left {
        assert!(p.own_coeff().abs() <= 100.0);
        let l1: f64 = p.coeffs().iter().map(|c| c.abs()).sum();
        assert!(phi_inner(p, p).unwrap() <= l1 * l1 + 1e-12);
    }
}

#[test]
fn known_half_propensity_gives_unit_weights_of_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let prop = PropensityModel::known(0.5, 0.01).unwrap();
    for _ in 0..20 {
        let a = u8::from(rng.random::<bool>());
        let x = [rng.random_range(-1.0..1.0)];
        let w = ipw_weight(a, prop.predict(&x).unwrap());
        assert_eq!(w.abs(), 2.0);
    }
}

#[test]
fn inner_product_is_symmetric() {
    let s = setup(20, 7, Scenario::IV).unwrap();
    let left = build_fold_phis(&s.d1, &s.prop, &s.for1.0, &s.for1.1, &s.ky, 1).unwrap();
    let right = build_fold_phis(&s.d2, &s.prop, &s.for2.0, &s.for2.1, &s.ky, 2).unwrap();
    for p in &left {
        for q in &right {
            let a = phi_inner(p, q).unwrap();
            let b = phi_inner(q, p).unwrap();
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
