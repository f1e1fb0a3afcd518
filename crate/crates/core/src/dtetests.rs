//! Distributional treatment-effect tests.
//!
//! * [`aipw_xkte`]: cross-fitted doubly-robust embedding, studentized cross
//!   U-statistic, one-sided normal p-value. No permutations.
//! * [`ipw_xkte`]: same statistic with both outcome embeddings pinned to zero.
//! * [`kte_permutation`]: squared MMD between IPW-weighted embeddings,
//!   thresholded by permuting treatment labels.
//! * [`baseline_aipw_test`]: permutation test on the linear-regression AIPW
//!   estimate of the average treatment effect.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SVD};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::embedding::{build_fold_phis, ipw_weight, phi_inner_matrix, FoldAssignment};
use crate::error::{Error, Result};
use crate::numerics::{
    median_heuristic, median_heuristic_scalar, std_normal_cdf, KernelFamily, KernelSpec,
};
use crate::nuisance::{fit_cme, fit_propensity, CmeModel, PropensityModel};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_PERMUTATIONS: usize = 100;
pub const DEFAULT_CLIP_EPS: f64 = 0.01;
pub const DEFAULT_L2: f64 = 1e-6;
const MIN_FOLD_SIZE: usize = 4;
const MIN_PERMUTATION_N: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "aipw-xkte")]
    AipwXkte,
    #[serde(rename = "ipw-xkte")]
    IpwXkte,
    #[serde(rename = "kte")]
    Kte,
    #[serde(rename = "baseline-aipw")]
    BaselineAipw,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::AipwXkte,
        Method::IpwXkte,
        Method::Kte,
        Method::BaselineAipw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::AipwXkte => "aipw-xkte",
            Method::IpwXkte => "ipw-xkte",
            Method::Kte => "kte",
            Method::BaselineAipw => "baseline-aipw",
        }
    }

    pub fn uses_permutations(self) -> bool {
        matches!(self, Method::Kte | Method::BaselineAipw)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::input(format!(
                    "unknown method '{s}' (expected aipw-xkte, ipw-xkte, kte or baseline-aipw)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropensityMode {
    /// Clipped L2-regularized logistic regression on the full sample.
    Logistic,
    /// Known assignment probability (experimental designs).
    Known(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub kernel_x: KernelFamily,
    pub kernel_y: KernelFamily,
    /// Squared RBF bandwidth on covariates; median heuristic when `None`.
    pub bandwidth_x: Option<f64>,
    /// Squared RBF bandwidth on outcomes; median heuristic when `None`.
    pub bandwidth_y: Option<f64>,
    /// Embedding ridge; `1/(2σ_x²)` when `None`.
    pub lambda: Option<f64>,
    pub clip_eps: f64,
    pub l2: f64,
    /// Fold shuffle seed; `None` splits by index halves.
    pub split_seed: Option<u64>,
    pub permutation_seed: u64,
    pub permutations: usize,
    pub propensity: PropensityMode,
    pub alpha: f64,
    /// Use the U-statistic (diagonal-free) form of the KTE statistic.
    pub kte_unbiased: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            kernel_x: KernelFamily::Rbf,
            kernel_y: KernelFamily::Rbf,
            bandwidth_x: None,
            bandwidth_y: None,
            lambda: None,
            clip_eps: DEFAULT_CLIP_EPS,
            l2: DEFAULT_L2,
            split_seed: None,
            permutation_seed: 0,
            permutations: DEFAULT_PERMUTATIONS,
            propensity: PropensityMode::Logistic,
            alpha: DEFAULT_ALPHA,
            kte_unbiased: false,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return Err(Error::config(format!(
                "clip_eps must lie in (0, 0.5), got {}",
                self.clip_eps
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::config(format!("l2 must be nonnegative, got {}", self.l2)));
        }
        for (name, v) in [
            ("bandwidth_x", self.bandwidth_x),
            ("bandwidth_y", self.bandwidth_y),
            ("lambda", self.lambda),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let PropensityMode::Known(p) = self.propensity {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::config(format!(
                    "known propensity must lie in (0, 1), got {p}"
                )));
            }
        }
        Ok(())
    }

    fn propensity_model(&self, data: &Dataset) -> Result<PropensityModel> {
        match self.propensity {
            PropensityMode::Logistic => fit_propensity(data, self.l2, self.clip_eps),
            PropensityMode::Known(p) => PropensityModel::known(p, self.clip_eps),
        }
    }

    fn outcome_kernel(&self, data: &Dataset) -> Result<KernelSpec> {
        match self.kernel_y {
            KernelFamily::Linear => Ok(KernelSpec::linear()),
            KernelFamily::Rbf => {
                let bw = match self.bandwidth_y {
                    Some(bw) => bw,
                    None => median_heuristic_scalar(data.outcomes())?,
                };
                KernelSpec::rbf(bw)
            }
        }
    }

    fn covariate_kernel(&self, data: &Dataset) -> Result<KernelSpec> {
        match self.kernel_x {
            KernelFamily::Linear => Ok(KernelSpec::linear()),
            KernelFamily::Rbf => {
                let bw = match self.bandwidth_x {
                    Some(bw) => bw,
                    None => median_heuristic(data.x())?,
                };
                KernelSpec::rbf(bw)
            }
        }
    }

    fn ridge(&self, kernel_x: &KernelSpec) -> f64 {
        self.lambda.unwrap_or_else(|| kernel_x.nu().unwrap_or(1.0))
    }
}

/// Values echoed alongside a test result.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_x: Option<KernelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_y: Option<KernelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub clip_eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_unit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutation_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propensity_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Units entering the statistic (fold size for the cross tests).
    pub n_effective: usize,
    pub diagnostics: Diagnostics,
}

impl TestResult {
    fn new(
        method: Method,
        statistic: f64,
        p_value: f64,
        alpha: f64,
        n_effective: usize,
        diagnostics: Diagnostics,
    ) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            method,
            statistic,
            p_value,
            alpha,
            reject: p_value <= alpha,
            n_effective,
            diagnostics,
        }
    }
}

/// Studentized cross U-statistic over an `n × n` inner-product matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossStat {
    pub f_values: Vec<f64>,
    pub mean: f64,
    /// Population (divide-by-n) standard deviation of `f_values`.
    pub std: f64,
    pub t: f64,
}

pub fn cross_u_statistic(inner: &DMatrix<f64>) -> Result<CrossStat> {
    let (n, m) = inner.shape();
    if n < 2 || m == 0 {
        return Err(Error::input(format!(
            "cross statistic needs at least 2 rows, got {n}x{m}"
        )));
    }
    let f_values: Vec<f64> = (0..n).map(|i| inner.row(i).sum() / m as f64).collect();
    let nf = n as f64;
    let mean = f_values.iter().sum::<f64>() / nf;
    let var = f_values.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / nf;
    let std = var.sqrt();
    let scale = f_values.iter().fold(0.0f64, |acc, f| acc.max(f.abs()));
    if !std.is_finite() || std <= 1e-12 * scale || std == 0.0 {
        return Err(Error::DegenerateStatistic(
            "cross inner products have zero spread; the studentized statistic is undefined"
                .into(),
        ));
    }
    let t = nf.sqrt() * mean / std;
    Ok(CrossStat {
        f_values,
        mean,
        std,
        t,
    })
}

/// Intermediate products of a cross test, exposed for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct CrossFit {
    pub folds: FoldAssignment,
    pub inner: DMatrix<f64>,
    pub stat: CrossStat,
    pub kernel_y: KernelSpec,
    pub kernel_x: Option<KernelSpec>,
    pub lambda: Option<f64>,
    pub propensity: PropensityModel,
}

fn require_both_arms(fold: &Dataset, which: usize) -> Result<()> {
    if !fold.has_both_arms() {
        return Err(Error::config(format!(
            "fold {which} contains a single treatment arm; use another split seed or more data"
        )));
    }
    Ok(())
}

/// Runs the cross-fitted statistic; `augmented = false` gives the IPW variant.
pub fn cross_fit(data: &Dataset, config: &TestConfig, augmented: bool) -> Result<CrossFit> {
    config.validate()?;
    let folds = FoldAssignment::new(data.n(), config.split_seed)?;
    if folds.fold_size() < MIN_FOLD_SIZE {
        return Err(Error::config(format!(
            "each fold needs at least {MIN_FOLD_SIZE} units, got {} from n = {}",
            folds.fold_size(),
            data.n()
        )));
    }
    let d1 = data.select(&folds.fold1);
    let d2 = data.select(&folds.fold2);
    require_both_arms(&d1, 1)?;
    require_both_arms(&d2, 2)?;

    // Propensity uses the full sample; the outcome embeddings are cross-fitted.
    let propensity = config.propensity_model(data)?;
    let kernel_y = config.outcome_kernel(data)?;

    let (kernel_x, lambda, models) = if augmented {
        let kx = config.covariate_kernel(data)?;
        let lambda = config.ridge(&kx);
        let fit = |fold: &Dataset| -> Result<(CmeModel, CmeModel)> {
            Ok((
                fit_cme(fold, 0, kx, kernel_y, lambda)?,
                fit_cme(fold, 1, kx, kernel_y, lambda)?,
            ))
        };
        (Some(kx), Some(lambda), (fit(&d2)?, fit(&d1)?))
    } else {
        // Covariate kernel is unused by zero embeddings.
        let kx = KernelSpec::linear();
        let zero = |fold: &Dataset| -> Result<(CmeModel, CmeModel)> {
            Ok((
                CmeModel::zero(fold, 0, kx, kernel_y)?,
                CmeModel::zero(fold, 1, kx, kernel_y)?,
            ))
        };
        (None, None, (zero(&d2)?, zero(&d1)?))
    };
    let ((c0_from2, c1_from2), (c0_from1, c1_from1)) = models;

    let phis1 = build_fold_phis(&d1, &propensity, &c0_from2, &c1_from2, &kernel_y, 1)?;
    let phis2 = build_fold_phis(&d2, &propensity, &c0_from1, &c1_from1, &kernel_y, 2)?;
    let inner = phi_inner_matrix(&phis1, &phis2)?;
    let stat = cross_u_statistic(&inner)?;
    Ok(CrossFit {
        folds,
        inner,
        stat,
        kernel_y,
        kernel_x,
        lambda,
        propensity,
    })
}

fn cross_result(method: Method, fit: CrossFit, config: &TestConfig) -> TestResult {
    let p = 1.0 - std_normal_cdf(fit.stat.t);
    let diagnostics = Diagnostics {
        kernel_x: fit.kernel_x,
        kernel_y: Some(fit.kernel_y),
        nu_x: fit.kernel_x.and_then(|k| k.nu()),
        nu_y: fit.kernel_y.nu(),
        lambda: fit.lambda,
        clip_eps: config.clip_eps,
        split_seed: config.split_seed,
        fold_size: Some(fit.folds.fold_size()),
        dropped_unit: fit.folds.dropped,
        propensity_iterations: (fit.propensity.known_constant.is_none())
            .then_some(fit.propensity.iterations),
        ..Diagnostics::default()
    };
    TestResult::new(
        method,
        fit.stat.t,
        p,
        config.alpha,
        fit.folds.fold_size(),
        diagnostics,
    )
}

pub fn aipw_xkte(data: &Dataset, config: &TestConfig) -> Result<TestResult> {
    let fit = cross_fit(data, config, true)?;
    Ok(cross_result(Method::AipwXkte, fit, config))
}

pub fn ipw_xkte(data: &Dataset, config: &TestConfig) -> Result<TestResult> {
    let fit = cross_fit(data, config, false)?;
    Ok(cross_result(Method::IpwXkte, fit, config))
}

fn check_permutation_input(data: &Dataset, b: usize) -> Result<()> {
    if b < 1 {
        return Err(Error::config("number of permutations must be at least 1"));
    }
    if data.n() < MIN_PERMUTATION_N {
        return Err(Error::config(format!(
            "permutation tests need at least {MIN_PERMUTATION_N} units, got {}",
            data.n()
        )));
    }
    if !data.has_both_arms() {
        return Err(Error::config("data contains a single treatment arm"));
    }
    Ok(())
}

/// Squared norm of the difference of IPW-weighted outcome embeddings,
/// `(1/n²) Σ_ij s_i s_j k(y_i, y_j)` with `s_i = a_i/π_i − (1 − a_i)/(1 − π_i)`.
///
/// The unbiased form drops `i = j` and divides by `n(n − 1)`. Kernel values
/// are evaluated on every call.
pub fn kte_statistic(y: &[f64], a: &[u8], pis: &[f64], kernel: &KernelSpec, unbiased: bool) -> f64 {
    let n = y.len();
    let s: Vec<f64> = a.iter().zip(pis).map(|(&ai, &p)| ipw_weight(ai, p)).collect();
    let mut off = 0.0;
    let mut diag = 0.0;
    for i in 0..n {
        let yi = y[i];
        let mut row = 0.0;
        for j in (i + 1)..n {
            row += s[j] * kernel.eval_scalar(yi, y[j]);
        }
        off += s[i] * row;
        diag += s[i] * s[i] * kernel.eval_scalar(yi, yi);
    }
    let nf = n as f64;
    if unbiased {
        2.0 * off / (nf * (nf - 1.0))
    } else {
        (2.0 * off + diag) / (nf * nf)
    }
}

/// Add-one permutation p-value `(1 + #{stat_b ≥ observed}) / (B + 1)`.
pub fn permutation_p_value(observed: f64, permuted: &[f64]) -> f64 {
    let count = permuted.iter().filter(|&&s| s >= observed).count();
    (1 + count) as f64 / (permuted.len() + 1) as f64
}

pub fn kte_permutation(data: &Dataset, config: &TestConfig, b: usize) -> Result<TestResult> {
    config.validate()?;
    check_permutation_input(data, b)?;
    let prop = config.propensity_model(data)?;
    let pis = prop.predict_all(data.x())?;
    let kernel = config.outcome_kernel(data)?;
    let y = data.outcomes();
    let observed = kte_statistic(y, data.treatment(), &pis, &kernel, config.kte_unbiased);

    let mut rng = ChaCha8Rng::seed_from_u64(config.permutation_seed);
    let mut labels = data.treatment().to_vec();
    let permuted: Vec<f64> = (0..b)
        .map(|_| {
            labels.shuffle(&mut rng);
            kte_statistic(y, &labels, &pis, &kernel, config.kte_unbiased)
        })
        .collect();
    let p = permutation_p_value(observed, &permuted);
    let diagnostics = Diagnostics {
        kernel_y: Some(kernel),
        nu_y: kernel.nu(),
        clip_eps: config.clip_eps,
        permutations: Some(b),
        permutation_seed: Some(config.permutation_seed),
        propensity_iterations: prop.known_constant.is_none().then_some(prop.iterations),
        ..Diagnostics::default()
    };
    Ok(TestResult::new(Method::Kte, observed, p, config.alpha, data.n(), diagnostics))
}

/// Linear-regression AIPW estimate of the average treatment effect.
#[derive(Debug, Clone, PartialEq)]
pub struct AteEstimate {
    pub psi: f64,
    /// Influence-function standard error.
    pub std_error: f64,
    pub rank_deficient: bool,
}

/// `(1/N) Σ {θ₁(X_i) − θ₀(X_i) + w_i (Y_i − θ_{A_i}(X_i))}` from given nuisance values.
pub fn aipw_psi(y: &[f64], a: &[u8], theta0: &[f64], theta1: &[f64], pis: &[f64]) -> f64 {
    aipw_terms(y, a, theta0, theta1, pis).iter().sum::<f64>() / y.len() as f64
}

fn aipw_terms(y: &[f64], a: &[u8], theta0: &[f64], theta1: &[f64], pis: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let fitted = if a[i] == 1 { theta1[i] } else { theta0[i] };
            theta1[i] - theta0[i] + ipw_weight(a[i], pis[i]) * (y[i] - fitted)
        })
        .collect()
}

/// Ordinary least squares with intercept on the units of `arm`, predicted
/// for every unit. Returns the predictions and whether the design was
/// rank deficient (solved by pseudo-inverse).
fn ols_arm_predictions(data: &Dataset, arm: u8) -> Result<(Vec<f64>, bool)> {
    let idx = data.arm_indices(arm);
    if idx.is_empty() {
        return Err(Error::Fit(format!("no units with treatment {arm}")));
    }
    let d = data.d();
    let design = DMatrix::from_fn(idx.len(), d + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            data.x()[(idx[r], c - 1)]
        }
    });
    let target = DVector::from_iterator(idx.len(), idx.iter().map(|&i| data.outcomes()[i]));
    let svd = SVD::new(design, true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12 * (idx.len().max(d + 1) as f64);
    let rank = svd.rank(eps);
    let coef = svd
        .solve(&target, eps)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    let preds = (0..data.n())
        .map(|i| coef[0] + (0..d).map(|j| coef[j + 1] * data.x()[(i, j)]).sum::<f64>())
        .collect();
    Ok((preds, rank < d + 1))
}

pub fn aipw_ate(data: &Dataset, config: &TestConfig) -> Result<AteEstimate> {
    let (theta0, rd0) = ols_arm_predictions(data, 0)?;
    let (theta1, rd1) = ols_arm_predictions(data, 1)?;
    let pis = config.propensity_model(data)?.predict_all(data.x())?;
    let terms = aipw_terms(data.outcomes(), data.treatment(), &theta0, &theta1, &pis);
    let n = terms.len() as f64;
    let psi = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - psi) * (t - psi)).sum::<f64>() / n;
    Ok(AteEstimate {
        psi,
        std_error: (var / n).sqrt(),
        rank_deficient: rd0 || rd1,
    })
}

pub fn baseline_aipw_test(data: &Dataset, config: &TestConfig, b: usize) -> Result<TestResult> {
    config.validate()?;
    check_permutation_input(data, b)?;
    let est = aipw_ate(data, config)?;
    let observed = est.psi.abs();
    let mut rank_deficient = est.rank_deficient;

    let mut rng = ChaCha8Rng::seed_from_u64(config.permutation_seed);
    let mut labels = data.treatment().to_vec();
    let mut permuted = Vec::with_capacity(b);
    for _ in 0..b {
        labels.shuffle(&mut rng);
        let shuffled = data.with_treatment(labels.clone())?;
        let e = aipw_ate(&shuffled, config)?;
        rank_deficient |= e.rank_deficient;
        permuted.push(e.psi.abs());
    }
    let p = permutation_p_value(observed, &permuted);
    let mut warnings = Vec::new();
    if rank_deficient {
        warnings.push(
            "rank-deficient outcome regression design; solved by pseudo-inverse".to_string(),
        );
    }
    let diagnostics = Diagnostics {
        clip_eps: config.clip_eps,
        permutations: Some(b),
        permutation_seed: Some(config.permutation_seed),
        warnings,
        ..Diagnostics::default()
    };
    Ok(TestResult::new(
        Method::BaselineAipw,
        est.psi,
        p,
        config.alpha,
        data.n(),
        diagnostics,
    ))
}

/// Dispatches to the named method; permutation methods use `config.permutations`.
pub fn run_test(method: Method, data: &Dataset, config: &TestConfig) -> Result<TestResult> {
    match method {
        Method::AipwXkte => aipw_xkte(data, config),
        Method::IpwXkte => ipw_xkte(data, config),
        Method::Kte => kte_permutation(data, config, config.permutations),
        Method::BaselineAipw => baseline_aipw_test(data, config, config.permutations),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_inner_matrix_is_degenerate() {
        let m = DMatrix::from_element(3, 3, 0.1);
        assert!(matches!(
            cross_u_statistic(&m),
            Err(Error::DegenerateStatistic(_))
        ));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!(matches!(
            cross_u_statistic(&m),
            Err(Error::DegenerateStatistic(_))
        ));
    }

    #[test]
    fn two_by_two_hand_computation() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let s = cross_u_statistic(&m).unwrap();
        assert_eq!(s.f_values, vec![1.0, 0.0]);
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.std, 0.5);
        assert!((s.t - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn permutation_p_value_formula() {
        let below = vec![0.0; 99];
        assert_eq!(permutation_p_value(1.0, &below), 0.01);
        let all_above = vec![2.0; 99];
        assert_eq!(permutation_p_value(1.0, &all_above), 1.0);
        // ties count as exceedances
        assert_eq!(permutation_p_value(1.0, &[1.0, 0.0, 0.0]), 0.5);
    }

    #[test]
    fn aipw_psi_direct_substitution() {
        let psi = aipw_psi(&[2.0, 1.0], &[1, 0], &[0.0, 0.0], &[0.0, 0.0], &[0.5, 0.5]);
        assert_eq!(psi, 1.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("mmd".parse::<Method>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TestConfig::default();
        assert!(c.validate().is_ok());
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        let c = TestConfig {
            propensity: PropensityMode::Known(0.0),
            ..TestConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TestConfig {
            bandwidth_y: Some(-1.0),
            ..TestConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn kte_unbiased_drops_diagonal() {
        let y = [0.0, 1.0, 2.5];
        let a = [1, 0, 1];
        let pis = [0.5; 3];
        let k = KernelSpec::rbf(1.0).unwrap();
        let v = kte_statistic(&y, &a, &pis, &k, false);
        let u = kte_statistic(&y, &a, &pis, &k, true);
        let s = [2.0, -2.0, 2.0];
        let mut full = 0.0;
        let mut diag = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let t = s[i] * s[j] * k.eval_scalar(y[i], y[j]);
                full += t;
                if i == j {
                    diag += t;
                }
            }
        }
        assert!((v - full / 9.0).abs() < 1e-14);
        assert!((u - (full - diag) / 6.0).abs() < 1e-14);
    }
}
