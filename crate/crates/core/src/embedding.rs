//! Finite-anchor representation of the estimated influence embedding
//!
//! ```text
//! φ̂(z) = w(z)·{k(·, y) − β̂_a(x)} + β̂₁(x) − β̂₀(x),   w(z) = a/π̂(x) − (1−a)/(1−π̂(x))
//! ```
//!
//! Each `β̂_a(x)` is a weighted sum of kernel features at one arm's training
//! outcomes, so `φ̂(z)` is a linear combination of `k(·, ·)` at the unit's
//! own outcome plus both arms' anchors. Inner products between two such
//! combinations reduce to `cᵀ K c′` on the outcome kernel.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{gram_scalar, KernelSpec};
use crate::nuisance::{CmeModel, PropensityModel};

/// Two equal-size disjoint folds over `0..total`.
///
/// With an odd total the last unit (in shuffled order) is left out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold1: Vec<usize>,
    pub fold2: Vec<usize>,
    pub seed: Option<u64>,
    pub dropped: Option<usize>,
}

impl FoldAssignment {
    /// Splits `0..total`. Without a seed the first half forms fold 1 and the
    /// second half fold 2; with a seed the order is shuffled first.
    pub fn new(total: usize, seed: Option<u64>) -> Result<Self> {
        if total < 2 {
            return Err(Error::input(format!(
                "cannot split {total} units into two folds"
            )));
        }
        let mut order: Vec<usize> = (0..total).collect();
        if let Some(s) = seed {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
        }
        let dropped = if total % 2 == 1 { order.pop() } else { None };
        let half = order.len() / 2;
        let fold2 = order.split_off(half);
        Ok(Self {
            fold1: order,
            fold2,
            seed,
            dropped,
        })
    }

    pub fn fold_size(&self) -> usize {
        self.fold1.len()
    }
}

/// A single observed unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub a: u8,
    pub y: f64,
}

impl Observation {
    pub fn from_dataset(data: &Dataset, i: usize) -> Self {
        Self {
            x: data.covariates_of(i),
            a: data.treatment()[i],
            y: data.outcomes()[i],
        }
    }
}

/// Coefficients of `φ̂(z)` over its anchor outcomes.
///
/// Anchor layout: the unit's own outcome first, then the treated-arm
/// anchors, then the control-arm anchors. Representations built for one fold
/// share the treated/control block through an `Arc`.
#[derive(Debug, Clone)]
pub struct PhiRepr {
    own_anchor: f64,
    own_coeff: f64,
    shared_anchors: Arc<[f64]>,
    n_treated_anchors: usize,
    shared_coeffs: Vec<f64>,
    kernel_y: KernelSpec,
    fold_tag: u8,
}

impl PhiRepr {
    pub fn n_anchors(&self) -> usize {
        1 + self.shared_anchors.len()
    }

    pub fn n_treated_anchors(&self) -> usize {
        self.n_treated_anchors
    }

    pub fn anchors(&self) -> Vec<f64> {
        std::iter::once(self.own_anchor)
            .chain(self.shared_anchors.iter().copied())
            .collect()
    }

    pub fn coeffs(&self) -> Vec<f64> {
        std::iter::once(self.own_coeff)
            .chain(self.shared_coeffs.iter().copied())
            .collect()
    }

    /// Coefficient on `k(·, y)` at the unit's own outcome, i.e. `w(z)`.
    pub fn own_coeff(&self) -> f64 {
        self.own_coeff
    }

    pub fn kernel_y(&self) -> &KernelSpec {
        &self.kernel_y
    }

    pub fn fold_tag(&self) -> u8 {
        self.fold_tag
    }

    /// `φ̂(z)` evaluated as a function at outcome `probe`.
    pub fn eval_at(&self, probe: f64) -> f64 {
        self.anchors()
            .iter()
            .zip(self.coeffs())
            .map(|(&y, c)| c * self.kernel_y.eval_scalar(y, probe))
            .sum()
    }

    fn same_layout(&self, other: &PhiRepr) -> bool {
        self.n_treated_anchors == other.n_treated_anchors
            && self.kernel_y == other.kernel_y
            && (Arc::ptr_eq(&self.shared_anchors, &other.shared_anchors)
                || self.shared_anchors == other.shared_anchors)
    }
}

/// Signed inverse-propensity weight `a/π − (1 − a)/(1 − π)`.
#[inline]
pub fn ipw_weight(a: u8, pi: f64) -> f64 {
    if a == 1 {
        1.0 / pi
    } else {
        -1.0 / (1.0 - pi)
    }
}

fn check_models(cme0: &CmeModel, cme1: &CmeModel, kernel_y: &KernelSpec) -> Result<()> {
    if cme0.arm() != 0 || cme1.arm() != 1 {
        return Err(Error::input(
            "expected the control-arm model first and the treated-arm model second",
        ));
    }
    if cme0.kernel_y() != kernel_y || cme1.kernel_y() != kernel_y {
        return Err(Error::input(
            "outcome kernel differs from the one the embeddings were fitted with",
        ));
    }
    if cme0.anchor_covariates().ncols() != cme1.anchor_covariates().ncols() {
        return Err(Error::input("embedding models disagree on covariate dimension"));
    }
    Ok(())
}

fn shared_block(cme0: &CmeModel, cme1: &CmeModel) -> Arc<[f64]> {
    cme1.anchor_outcomes()
        .iter()
        .chain(cme0.anchor_outcomes())
        .copied()
        .collect()
}

pub fn build_phi(
    z: &Observation,
    prop: &PropensityModel,
    cme0: &CmeModel,
    cme1: &CmeModel,
    kernel_y: &KernelSpec,
    fold_tag: u8,
) -> Result<PhiRepr> {
    check_models(cme0, cme1, kernel_y)?;
    if z.a > 1 {
        return Err(Error::input("treatment must be 0 or 1"));
    }
    let pi = prop.predict(&z.x)?;
    let w1 = cme1.weights(&z.x)?;
    let w0 = cme0.weights(&z.x)?;
    Ok(assemble(
        z.a,
        z.y,
        pi,
        w1.iter().copied(),
        w0.iter().copied(),
        shared_block(cme0, cme1),
        cme1.n_anchors(),
        *kernel_y,
        fold_tag,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    a: u8,
    y: f64,
    pi: f64,
    w1: impl Iterator<Item = f64>,
    w0: impl Iterator<Item = f64>,
    shared: Arc<[f64]>,
    n_treated: usize,
    kernel_y: KernelSpec,
    fold_tag: u8,
) -> PhiRepr {
    let w = ipw_weight(a, pi);
    let af = f64::from(a);
    let treated_scale = 1.0 - af * w;
    let control_scale = -1.0 - (1.0 - af) * w;
    let shared_coeffs = w1
        .map(|v| treated_scale * v)
        .chain(w0.map(|v| control_scale * v))
        .collect();
    PhiRepr {
        own_anchor: y,
        own_coeff: w,
        shared_anchors: shared,
        n_treated_anchors: n_treated,
        shared_coeffs,
        kernel_y,
        fold_tag,
    }
}

/// Builds `φ̂` for every unit of `fold`, with one batched weight solve per arm
/// and a single shared anchor block.
pub fn build_fold_phis(
    fold: &Dataset,
    prop: &PropensityModel,
    cme0: &CmeModel,
    cme1: &CmeModel,
    kernel_y: &KernelSpec,
    fold_tag: u8,
) -> Result<Vec<PhiRepr>> {
    check_models(cme0, cme1, kernel_y)?;
    let pis = prop.predict_all(fold.x())?;
    let w1 = cme1.weights_batch(fold.x())?;
    let w0 = cme0.weights_batch(fold.x())?;
    let shared = shared_block(cme0, cme1);
    Ok((0..fold.n())
        .map(|i| {
            assemble(
                fold.treatment()[i],
                fold.outcomes()[i],
                pis[i],
                w1.column(i).iter().copied(),
                w0.column(i).iter().copied(),
                Arc::clone(&shared),
                cme1.n_anchors(),
                *kernel_y,
                fold_tag,
            )
        })
        .collect())
}

pub fn phi_inner(p: &PhiRepr, q: &PhiRepr) -> Result<f64> {
    if p.kernel_y != q.kernel_y {
        return Err(Error::input("inner product between different outcome kernels"));
    }
    let k = p.kernel_y;
    let (pa, pc) = (p.anchors(), p.coeffs());
    let (qa, qc) = (q.anchors(), q.coeffs());
    let mut total = 0.0;
    for (&ya, &ca) in pa.iter().zip(&pc) {
        if ca == 0.0 {
            continue;
        }
        let row: f64 = qa
            .iter()
            .zip(&qc)
            .map(|(&yb, &cb)| cb * k.eval_scalar(ya, yb))
            .sum();
        total += ca * row;
    }
    Ok(total)
}

/// All cross inner products `⟨φ̂(Z_i), φ̂(Z_j)⟩` for `i` in `left`, `j` in `right`.
///
/// Writing `c`, `P` for the own and shared coefficients on the left (anchors
/// `u`, `S₁`) and `d`, `Q` on the right (anchors `v`, `S₂`):
///
/// ```text
/// M = diag(c)·K(u,v)·diag(d) + P·K(S₁,v)·diag(d) + [diag(c)·K(u,S₂) + P·K(S₁,S₂)]·Qᵀ
/// ```
///
/// Blocks whose shared coefficients are all zero are skipped.
pub fn phi_inner_matrix(left: &[PhiRepr], right: &[PhiRepr]) -> Result<DMatrix<f64>> {
    let (Some(l0), Some(r0)) = (left.first(), right.first()) else {
        return Err(Error::input("inner-product matrix needs nonempty folds"));
    };
    if l0.kernel_y != r0.kernel_y {
        return Err(Error::input("inner product between different outcome kernels"));
    }
    if !left.iter().all(|p| p.same_layout(l0)) || !right.iter().all(|p| p.same_layout(r0)) {
        return Err(Error::input(
            "representations within a fold must share one anchor layout",
        ));
    }
    let kernel = l0.kernel_y;
    let (n1, n2) = (left.len(), right.len());
    let (m1, m2) = (l0.shared_anchors.len(), r0.shared_anchors.len());

    let u: Vec<f64> = left.iter().map(|p| p.own_anchor).collect();
    let c: Vec<f64> = left.iter().map(|p| p.own_coeff).collect();
    let v: Vec<f64> = right.iter().map(|p| p.own_anchor).collect();
    let d: Vec<f64> = right.iter().map(|p| p.own_coeff).collect();

    let left_shared = left.iter().any(|p| p.shared_coeffs.iter().any(|&x| x != 0.0));
    let right_shared = right.iter().any(|p| p.shared_coeffs.iter().any(|&x| x != 0.0));

    // own × own, scaled by c_i d_j
    let mut result = gram_scalar(&kernel, &u, &v);
    for i in 0..n1 {
        for j in 0..n2 {
            result[(i, j)] *= c[i] * d[j];
        }
    }

    let p_mat = left_shared.then(|| DMatrix::from_fn(n1, m1, |i, a| left[i].shared_coeffs[a]));
    if let Some(p_mat) = &p_mat {
        let mut cross = p_mat * gram_scalar(&kernel, &l0.shared_anchors, &v);
        for (j, &dj) in d.iter().enumerate() {
            cross.column_mut(j).scale_mut(dj);
        }
        result += cross;
    }

    if right_shared {
        let q_mat = DMatrix::from_fn(n2, m2, |j, b| right[j].shared_coeffs[b]);
        let mut t = gram_scalar(&kernel, &u, &r0.shared_anchors);
        for (i, &ci) in c.iter().enumerate() {
            t.row_mut(i).scale_mut(ci);
        }
        if let Some(p_mat) = &p_mat {
            t += p_mat * gram_scalar(&kernel, &l0.shared_anchors, &r0.shared_anchors);
        }
        result += t * q_mat.transpose();
    }
    Ok(result)
}
