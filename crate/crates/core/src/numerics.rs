//! Kernel evaluations, Gram matrices, bandwidth selection, regularized solves
//! and the standard normal CDF.
//!
//! Point sets are `n × d` matrices with one point per row. Outcomes are
//! scalar throughout the crate, so the hot paths also have `*_scalar`
//! variants working on plain slices.

use nalgebra::{linalg::Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Rbf,
    Linear,
}

/// A kernel family together with its bandwidth.
///
/// The RBF kernel is `exp(-‖u - v‖² / (2σ²))` with `bandwidth_sq = σ²`.
/// `bandwidth_sq` is carried but ignored by the linear kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth_sq: f64,
}

impl KernelSpec {
    pub fn rbf(bandwidth_sq: f64) -> Result<Self> {
        if !(bandwidth_sq > 0.0 && bandwidth_sq.is_finite()) {
            return Err(Error::input(format!(
                "RBF bandwidth must be positive and finite, got {bandwidth_sq}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Rbf,
            bandwidth_sq,
        })
    }

    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            bandwidth_sq: 1.0,
        }
    }

    /// Builds a kernel of `family`, taking the RBF bandwidth from `bandwidth_sq`.
    pub fn new(family: KernelFamily, bandwidth_sq: f64) -> Result<Self> {
        match family {
            KernelFamily::Rbf => Self::rbf(bandwidth_sq),
            KernelFamily::Linear => Ok(Self::linear()),
        }
    }

    /// Scale parameter in `exp(-ν‖u - v‖²)` form, i.e. `1 / (2σ²)`.
    pub fn nu(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Rbf => Some(0.5 / self.bandwidth_sq),
            KernelFamily::Linear => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.family == KernelFamily::Rbf
            && !(self.bandwidth_sq > 0.0 && self.bandwidth_sq.is_finite())
        {
            return Err(Error::input("RBF bandwidth must be positive and finite"));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, u: &[f64], v: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Rbf => {
                let sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * self.bandwidth_sq)).exp()
            }
            KernelFamily::Linear => u.iter().zip(v).map(|(a, b)| a * b).sum(),
        }
    }

    #[inline]
    pub fn eval_scalar(&self, u: f64, v: f64) -> f64 {
        match self.family {
            KernelFamily::Rbf => {
                let d = u - v;
                (-(d * d) / (2.0 * self.bandwidth_sq)).exp()
            }
            KernelFamily::Linear => u * v,
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    spec.validate()?;
    if u.len() != v.len() {
        return Err(Error::input(format!(
            "kernel arguments have dimensions {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(spec.eval_unchecked(u, v))
}

/// Kernel matrix between two point sets, tagged with the kernel that built it.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub spec: KernelSpec,
}

impl GramMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// Copies each row of `points` into a contiguous buffer, one point per chunk.
fn row_major(points: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = points.shape();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        out.extend(points.row(i).iter());
    }
    out
}

pub fn gram(spec: &KernelSpec, rows: &DMatrix<f64>, cols: &DMatrix<f64>) -> Result<GramMatrix> {
    spec.validate()?;
    let d = rows.ncols();
    if cols.ncols() != d {
        return Err(Error::input(format!(
            "gram inputs have {} and {} columns",
            d,
            cols.ncols()
        )));
    }
    let (m, n) = (rows.nrows(), cols.nrows());
    let r = row_major(rows);
    let c = row_major(cols);
    let values = if d == 0 {
        DMatrix::from_fn(m, n, |_, _| spec.eval_unchecked(&[], &[]))
    } else {
        DMatrix::from_fn(m, n, |i, j| {
            spec.eval_unchecked(&r[i * d..(i + 1) * d], &c[j * d..(j + 1) * d])
        })
    };
    Ok(GramMatrix {
        values,
        spec: *spec,
    })
}

/// Gram matrix of a point set with itself. Only the upper triangle is
/// evaluated, so the result is exactly symmetric.
pub fn gram_symmetric(spec: &KernelSpec, points: &DMatrix<f64>) -> Result<GramMatrix> {
    spec.validate()?;
    let (n, d) = points.shape();
    let p = row_major(points);
    let mut values = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let k = spec.eval_unchecked(&p[i * d..(i + 1) * d], &p[j * d..(j + 1) * d]);
            values[(i, j)] = k;
            values[(j, i)] = k;
        }
    }
    Ok(GramMatrix {
        values,
        spec: *spec,
    })
}

/// Gram matrix between two sets of scalar points.
pub fn gram_scalar(spec: &KernelSpec, rows: &[f64], cols: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        spec.eval_scalar(rows[i], cols[j])
    })
}

/// Median of the pairwise squared distances over all pairs `i < j`.
///
/// The even-count median is the mean of the two middle order statistics.
pub fn median_heuristic(points: &DMatrix<f64>) -> Result<f64> {
    let (n, d) = points.shape();
    if n < 2 {
        return Err(Error::input("median heuristic needs at least two points"));
    }
    let p = row_major(points);
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let u = &p[i * d..(i + 1) * d];
        for j in (i + 1)..n {
            let v = &p[j * d..(j + 1) * d];
            dists.push(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        }
    }
    median_positive(dists)
}

pub fn median_heuristic_scalar(points: &[f64]) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::input("median heuristic needs at least two points"));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for (i, &u) in points.iter().enumerate() {
        for &v in &points[i + 1..] {
            dists.push((u - v) * (u - v));
        }
    }
    median_positive(dists)
}

fn median_positive(mut values: Vec<f64>) -> Result<f64> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite coordinates in median heuristic"));
    }
    let len = values.len();
    let mid = len / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if len % 2 == 1 {
        upper
    } else {
        let lower_mid = lower
            .iter()
            .copied()
            .max_by(f64::total_cmp)
            .expect("even count has a lower half");
        (lower_mid + upper) / 2.0
    };
    if median > 0.0 {
        return Ok(median);
    }
    // More than half of the pairs coincide. Any distinct pair still admits
    // a usable scale; only a fully degenerate set is rejected.
    let positive_min = values
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .min_by(f64::total_cmp);
    positive_min.ok_or(Error::DegenerateBandwidth)
}

const JITTER_RETRIES: usize = 3;

/// Cholesky factorization of `K + λI`, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct RegularizedFactor {
    chol: Cholesky<f64, Dyn>,
    lambda: f64,
    jitter: f64,
}

impl RegularizedFactor {
    pub fn new(k: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != n {
            return Err(Error::input(format!(
                "regularized solve needs a square matrix, got {}x{}",
                n,
                k.ncols()
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::input(format!(
                "regularization must be positive, got {lambda}"
            )));
        }
        if n == 0 {
            return Err(Error::input("regularized solve on an empty matrix"));
        }
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += lambda;
        }
        if let Some(chol) = Cholesky::new(a.clone()) {
            return Ok(Self {
                chol,
                lambda,
                jitter: 0.0,
            });
        }
        let mut jitter = 1e-10 * (k.trace().abs() / n as f64).max(lambda);
        for _ in 0..JITTER_RETRIES {
            let mut b = a.clone();
            for i in 0..n {
                b[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(b) {
                return Ok(Self {
                    chol,
                    lambda,
                    jitter,
                });
            }
            jitter *= 10.0;
        }
        Err(Error::Numerical(format!(
            "Cholesky of K + {lambda}·I failed after {JITTER_RETRIES} jitter retries"
        )))
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Diagonal jitter that had to be added on top of `λ` (zero normally).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.dim() {
            return Err(Error::input(format!(
                "right-hand side has {} rows, system has {}",
                rhs.nrows(),
                self.dim()
            )));
        }
        Ok(self.chol.solve(rhs))
    }

    /// `(K + λI)⁻¹`, for systems solved against many right-hand sides.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Returns `(K + λI)⁻¹ · rhs`.
pub fn reg_solve(k: &GramMatrix, lambda: f64, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    RegularizedFactor::new(&k.values, lambda)?.solve(rhs)
}

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Complementary error function for `x >= 0`.
///
/// Below 2.5 uses the all-positive series
/// `erf(x) = 2/√π · e^{-x²} · Σ (2x²)ⁿ x / (2n+1)!!`;
/// above, a Lentz-evaluated continued fraction for `erfc`.
fn erfc_nonneg(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 2.5 {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= 2.0 * x2 / (2.0 * k + 1.0);
            sum += term;
            if term <= sum * 1e-17 {
                break;
            }
        }
        1.0 - 2.0 * FRAC_1_SQRT_PI * (-x2).exp() * sum
    } else {
        // erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let tiny = 1e-300;
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..200 {
            let a = 0.5 * k as f64;
            d = x + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = x + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() * FRAC_1_SQRT_PI / f
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    let x = t.abs() * std::f64::consts::FRAC_1_SQRT_2;
    let tail = 0.5 * erfc_nonneg(x);
    if t < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}
