//! Nuisance models: per-arm conditional mean embeddings of the outcome
//! kernel feature, and a clipped L2-regularized logistic propensity model.

use nalgebra::{linalg::Cholesky, DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{gram, gram_symmetric, KernelSpec, RegularizedFactor};

/// Kernel ridge estimate of `E[k(·, Y) | A = arm, X = x]`.
///
/// At a query `x` the embedding is `Σ_t w_t(x) k(·, y_t)` over the arm's
/// training outcomes, with `w(x) = (K_xx + λI)⁻¹ k_x(x)`.
#[derive(Debug, Clone)]
pub struct CmeModel {
    arm: u8,
    anchor_outcomes: Vec<f64>,
    anchor_covariates: DMatrix<f64>,
    kernel_x: KernelSpec,
    kernel_y: KernelSpec,
    lambda: f64,
    // `(K + λI)⁻¹` from the Cholesky factor. `None` pins every weight vector
    // to zero (the IPW reduction).
    inverse: Option<DMatrix<f64>>,
}

pub fn fit_cme(
    data: &Dataset,
    arm: u8,
    kernel_x: KernelSpec,
    kernel_y: KernelSpec,
    lambda: f64,
) -> Result<CmeModel> {
    if arm > 1 {
        return Err(Error::input(format!("arm must be 0 or 1, got {arm}")));
    }
    let idx = data.arm_indices(arm);
    if idx.is_empty() {
        return Err(Error::Fit(format!("no units with treatment {arm}")));
    }
    let anchor_covariates = data.x().select_rows(&idx);
    let anchor_outcomes = idx.iter().map(|&i| data.outcomes()[i]).collect();
    let k = gram_symmetric(&kernel_x, &anchor_covariates)?;
    let inverse = RegularizedFactor::new(&k.values, lambda)?.inverse();
    Ok(CmeModel {
        arm,
        anchor_outcomes,
        anchor_covariates,
        kernel_x,
        kernel_y,
        lambda,
        inverse: Some(inverse),
    })
}

impl CmeModel {
    /// A model over the arm's anchors whose weights are identically zero.
    pub fn zero(data: &Dataset, arm: u8, kernel_x: KernelSpec, kernel_y: KernelSpec) -> Result<Self> {
        let idx = data.arm_indices(arm);
        if idx.is_empty() {
            return Err(Error::Fit(format!("no units with treatment {arm}")));
        }
        Ok(CmeModel {
            arm,
            anchor_outcomes: idx.iter().map(|&i| data.outcomes()[i]).collect(),
            anchor_covariates: data.x().select_rows(&idx),
            kernel_x,
            kernel_y,
            lambda: f64::INFINITY,
            inverse: None,
        })
    }

    pub fn into_zeroed(mut self) -> Self {
        self.inverse = None;
        self.lambda = f64::INFINITY;
        self
    }

    pub fn is_zeroed(&self) -> bool {
        self.inverse.is_none()
    }

    pub fn arm(&self) -> u8 {
        self.arm
    }

    pub fn n_anchors(&self) -> usize {
        self.anchor_outcomes.len()
    }

    pub fn anchor_outcomes(&self) -> &[f64] {
        &self.anchor_outcomes
    }

    pub fn anchor_covariates(&self) -> &DMatrix<f64> {
        &self.anchor_covariates
    }

    pub fn kernel_x(&self) -> &KernelSpec {
        &self.kernel_x
    }

    pub fn kernel_y(&self) -> &KernelSpec {
        &self.kernel_y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        let q = DMatrix::from_row_slice(1, x.len(), x);
        let w = self.weights_batch(&q)?;
        Ok(w.column(0).iter().copied().collect())
    }

    /// Weight vectors for every row of `queries`, one column per query
    /// (`n_anchors × m`).
    pub fn weights_batch(&self, queries: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if queries.ncols() != self.anchor_covariates.ncols() {
            return Err(Error::input(format!(
                "query dimension {} does not match covariate dimension {}",
                queries.ncols(),
                self.anchor_covariates.ncols()
            )));
        }
        match &self.inverse {
            None => Ok(DMatrix::zeros(self.n_anchors(), queries.nrows())),
            Some(inverse) => {
                let kq = gram(&self.kernel_x, &self.anchor_covariates, queries)?;
                Ok(inverse * kq.values)
            }
        }
    }

    /// Evaluates the embedding at `x` as a function of the outcome: `β̂(x)(probe)`.
    pub fn embedding_at(&self, x: &[f64], probe: f64) -> Result<f64> {
        let w = self.weights(x)?;
        Ok(w.iter()
            .zip(&self.anchor_outcomes)
            .map(|(wt, &yt)| wt * self.kernel_y.eval_scalar(yt, probe))
            .sum())
    }
}

pub fn cme_weights(model: &CmeModel, x: &[f64]) -> Result<Vec<f64>> {
    model.weights(x)
}

const MAX_NEWTON_STEPS: usize = 100;
const GRAD_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;

/// Logistic propensity model with predictions clipped to `[ε, 1 − ε]`, or a
/// known constant propensity for experimental designs.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l2: f64,
    pub clip_eps: f64,
    pub known_constant: Option<f64>,
    /// Newton steps taken by the fit (0 for known propensities).
    pub iterations: usize,
    /// Gradient ∞-norm at the returned point.
    pub grad_norm: f64,
}

fn check_clip(clip_eps: f64) -> Result<()> {
    if !(clip_eps > 0.0 && clip_eps < 0.5) {
        return Err(Error::input(format!(
            "clip_eps must lie in (0, 0.5), got {clip_eps}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
#[inline]
fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Penalized log-likelihood `Σ [a η − ln(1 + e^η)] − (l2/2)‖w‖²`; the
/// intercept is not penalized.
pub fn propensity_objective(data: &Dataset, weights: &[f64], intercept: f64, l2: f64) -> f64 {
    let x = data.x();
    let mut ll = 0.0;
    for (i, &a) in data.treatment().iter().enumerate() {
        let eta = intercept + x.row(i).iter().zip(weights).map(|(u, w)| u * w).sum::<f64>();
        ll += f64::from(a) * eta - log1p_exp(eta);
    }
    ll - 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

pub fn fit_propensity(data: &Dataset, l2: f64, clip_eps: f64) -> Result<PropensityModel> {
    check_clip(clip_eps)?;
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::input(format!("l2 must be nonnegative, got {l2}")));
    }
    if !data.has_both_arms() {
        return Err(Error::Fit(
            "propensity fit needs both treated and control units".into(),
        ));
    }
    let n = data.n();
    let d = data.d();
    let p = d + 1;
    // design with a leading intercept column
    let z = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { data.x()[(i, j - 1)] });
    let a: Vec<f64> = data.treatment().iter().map(|&v| f64::from(v)).collect();

    let objective = |theta: &DVector<f64>| {
        propensity_objective(data, &theta.as_slice()[1..], theta[0], l2)
    };

    let mut theta = DVector::zeros(p);
    let mut obj = objective(&theta);
    let mut grad_norm = f64::INFINITY;
    for iter in 0..=MAX_NEWTON_STEPS {
        let eta = &z * &theta;
        let probs: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_fn(n, |i, _| a[i] - probs[i]);
        let mut grad = z.tr_mul(&resid);
        for j in 1..p {
            grad[j] -= l2 * theta[j];
        }
        grad_norm = grad.amax();
        if grad_norm <= GRAD_TOL {
            return Ok(PropensityModel {
                weights: theta.as_slice()[1..].to_vec(),
                intercept: theta[0],
                l2,
                clip_eps,
                known_constant: None,
                iterations: iter,
                grad_norm,
            });
        }
        if iter == MAX_NEWTON_STEPS {
            break;
        }
        // negative Hessian: Zᵀ S Z + l2·diag(0, 1, …, 1)
        let weighted = DMatrix::from_fn(n, p, |i, j| z[(i, j)] * probs[i] * (1.0 - probs[i]));
        let mut info = z.tr_mul(&weighted);
        for j in 1..p {
            info[(j, j)] += l2;
        }
        let step = newton_direction(info, &grad)?;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &theta + &step * t;
            let cand_obj = objective(&cand);
            if cand_obj.is_finite() && cand_obj >= obj - 1e-12 * (1.0 + obj.abs()) {
                theta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::Fit(format!(
                "logistic line search stalled at iteration {iter}; gradient norm {grad_norm:.3e}"
            )));
        }
    }
    Err(Error::Fit(format!(
        "logistic regression did not converge in {MAX_NEWTON_STEPS} steps; gradient norm {grad_norm:.3e}"
    )))
}

fn newton_direction(info: DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = Cholesky::new(info.clone()) {
        return Ok(chol.solve(grad));
    }
    // Unpenalized directions can be flat (e.g. l2 = 0 on separable data).
    let scale = info.trace().abs() / info.nrows() as f64;
    let mut ridge = 1e-10 * scale.max(1e-12);
    for _ in 0..6 {
        let mut m = info.clone();
        for j in 0..m.nrows() {
            m[(j, j)] += ridge;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(chol.solve(grad));
        }
        ridge *= 100.0;
    }
    Err(Error::Fit("logistic Hessian is not positive definite".into()))
}

impl PropensityModel {
    /// A model that returns `p` everywhere (known assignment probability).
    pub fn known(p: f64, clip_eps: f64) -> Result<Self> {
        check_clip(clip_eps)?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::input(format!(
                "known propensity must lie in (0, 1), got {p}"
            )));
        }
        Ok(Self {
            weights: Vec::new(),
            intercept: 0.0,
            l2: 0.0,
            clip_eps,
            known_constant: Some(p),
            iterations: 0,
            grad_norm: 0.0,
        })
    }

    /// Fixed coefficients, mostly useful for tests and bindings.
    pub fn with_coefficients(weights: Vec<f64>, intercept: f64, clip_eps: f64) -> Result<Self> {
        check_clip(clip_eps)?;
        Ok(Self {
            weights,
            intercept,
            l2: 0.0,
            clip_eps,
            known_constant: None,
            iterations: 0,
            grad_norm: 0.0,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if let Some(p) = self.known_constant {
            return Ok(p);
        }
        if x.len() != self.weights.len() {
            return Err(Error::input(format!(
                "propensity model expects {} covariates, got {}",
                self.weights.len(),
                x.len()
            )));
        }
        let eta = self.intercept + x.iter().zip(&self.weights).map(|(u, w)| u * w).sum::<f64>();
        Ok(sigmoid(eta).clamp(self.clip_eps, 1.0 - self.clip_eps))
    }

    pub fn predict_all(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        (0..x.nrows())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.predict(&row)
            })
            .collect()
    }
}

pub fn predict_propensity(model: &PropensityModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}
