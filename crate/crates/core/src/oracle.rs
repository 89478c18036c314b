//! Brute-force reference computations.
//!
//! Everything here works with dense `d × d` matrices and shares nothing
//! with the hot path except the basis types, so agreement between the two
//! is meaningful. Sizes are capped at [`MAX_DIM`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{canonicalize_signs, max_abs};
use crate::subspace::{BasisKind, HiddenState, OrthonormalBasis, RelevanceWeights, VisualFeatureMatrix};

pub const MAX_DIM: usize = 512;
const CONDITION_LIMIT: f64 = 1e12;

fn check_dim(d: usize) -> Result<()> {
    if d > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "oracle dimension {d} exceeds budget {MAX_DIM}"
        )));
    }
    Ok(())
}

fn projector(basis: &OrthonormalBasis) -> DMatrix<f64> {
    let b = basis.columns();
    b * b.transpose()
}

/// Materialized `Π_U`, `Π_P` and `Π_R = I − Π_U − Π_P`.
#[derive(Debug, Clone)]
pub struct DenseProjectors {
    pub pi_u: DMatrix<f64>,
    pub pi_p: DMatrix<f64>,
    pub pi_r: DMatrix<f64>,
}

impl DenseProjectors {
    pub fn new(u: &OrthonormalBasis, p: &OrthonormalBasis) -> Result<Self> {
        if u.dim() != p.dim() {
            return Err(Error::DimensionMismatch {
                context: "dense projectors",
                expected: u.dim(),
                found: p.dim(),
            });
        }
        let d = u.dim();
        check_dim(d)?;
        let pi_u = projector(u);
        let pi_p = projector(p);
        let pi_r = DMatrix::identity(d, d) - &pi_u - &pi_p;
        Ok(Self { pi_u, pi_p, pi_r })
    }

    /// `I + λ_n Π_⊥ + λ_p Π_P` with `Π_⊥ = I − Π_U`.
    pub fn system(&self, lambda_n: f64, lambda_p: f64) -> DMatrix<f64> {
        let d = self.pi_u.nrows();
        let eye = DMatrix::<f64>::identity(d, d);
        let perp = &eye - &self.pi_u;
        eye + perp * lambda_n + &self.pi_p * lambda_p
    }
}

/// Solves the stationarity system of the minimum-norm edit densely and
/// returns `x = h + δ*`.
pub fn qp_oracle(
    h: &HiddenState,
    u: &OrthonormalBasis,
    p: &OrthonormalBasis,
    lambda_n: f64,
    lambda_p: f64,
) -> Result<DVector<f64>> {
    if h.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            context: "qp oracle",
            expected: u.dim(),
            found: h.dim(),
        });
    }
    let proj = DenseProjectors::new(u, p)?;
    let system = proj.system(lambda_n, lambda_p);
    let chol = system
        .cholesky()
        .ok_or(Error::IllConditioned { estimate: f64::INFINITY })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let estimate = (hi / lo).powi(2);
    if !(estimate <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned { estimate });
    }
    Ok(chol.solve(h.as_vector()))
}

/// `½‖δ‖² + ½λ_n‖Π_⊥(h+δ)‖² + ½λ_p‖Π_P(h+δ)‖²`, evaluated densely.
pub fn qp_objective(
    h: &HiddenState,
    delta: &DVector<f64>,
    u: &OrthonormalBasis,
    p: &OrthonormalBasis,
    lambda_n: f64,
    lambda_p: f64,
) -> Result<f64> {
    let proj = DenseProjectors::new(u, p)?;
    let d = h.dim();
    let x = h.as_vector() + delta;
    let perp = DMatrix::<f64>::identity(d, d) - &proj.pi_u;
    Ok(0.5 * delta.norm_squared()
        + 0.5 * lambda_n * (perp * &x).norm_squared()
        + 0.5 * lambda_p * (&proj.pi_p * &x).norm_squared())
}

/// Norm of the gradient of [`qp_objective`] at `delta`.
pub fn stationarity_residual(
    h: &HiddenState,
    delta: &DVector<f64>,
    u: &OrthonormalBasis,
    p: &OrthonormalBasis,
    lambda_n: f64,
    lambda_p: f64,
) -> Result<f64> {
    let proj = DenseProjectors::new(u, p)?;
    let d = h.dim();
    let x = h.as_vector() + delta;
    let perp = DMatrix::<f64>::identity(d, d) - &proj.pi_u;
    Ok((delta + perp * &x * lambda_n + &proj.pi_p * &x * lambda_p).norm())
}

/// Top-`r` eigenvectors of the weighted covariance `Vᵀ W V`, from a dense
/// symmetric eigendecomposition.
pub fn brute_force_weighted_pca(
    v: &VisualFeatureMatrix,
    w: &RelevanceWeights,
    r: usize,
) -> Result<OrthonormalBasis> {
    let d = v.dim();
    check_dim(d)?;
    if w.len() != v.n_tokens() {
        return Err(Error::DimensionMismatch {
            context: "weighted pca",
            expected: v.n_tokens(),
            found: w.len(),
        });
    }
    let rows = v.rows();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (row, wi) in rows.row_iter().zip(w.as_vector().iter()) {
        let col = row.transpose();
        cov.ger(*wi, &col, &col, 1.0);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let k = r.min(d);
    let mut cols = DMatrix::zeros(d, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        cols.set_column(c, &eig.eigenvectors.column(i));
    }
    canonicalize_signs(&mut cols);
    Ok(OrthonormalBasis::from_columns_unchecked(cols, BasisKind::Visual))
}

/// Eigenvalues of `Vᵀ W V`, descending.
pub fn weighted_spectrum(v: &VisualFeatureMatrix, w: &RelevanceWeights) -> Result<Vec<f64>> {
    let d = v.dim();
    check_dim(d)?;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (row, wi) in v.rows().row_iter().zip(w.as_vector().iter()) {
        let col = row.transpose();
        cov.ger(*wi, &col, &col, 1.0);
    }
    let mut values: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Largest principal angle between two subspaces of equal dimension, in
/// radians. Computed from `‖(I − AAᵀ)B‖₂`, which stays accurate for tiny
/// angles.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if b.ncols() == 0 {
        return 0.0;
    }
    let residual = b - a * a.tr_mul(b);
    let sine = residual
        .singular_values()
        .iter()
        .copied()
        .fold(0.0_f64, f64::max);
    sine.min(1.0).asin()
}

/// Max-norm defects of the dense projector algebra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorAudit {
    pub symmetry: f64,
    pub idempotence: f64,
    pub visual_prior: f64,
    pub visual_residual: f64,
    pub prior_residual: f64,
    pub completeness: f64,
}

impl ProjectorAudit {
    pub fn worst(&self) -> f64 {
        [
            self.symmetry,
            self.idempotence,
            self.visual_prior,
            self.visual_residual,
            self.prior_residual,
            self.completeness,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn projector_audit(u: &OrthonormalBasis, p: &OrthonormalBasis) -> Result<ProjectorAudit> {
    let proj = DenseProjectors::new(u, p)?;
    let d = u.dim();
    let all = [&proj.pi_u, &proj.pi_p, &proj.pi_r];
    let symmetry = all
        .iter()
        .map(|m| max_abs(&(*m - m.transpose())))
        .fold(0.0, f64::max);
    let idempotence = all
        .iter()
        .map(|m| max_abs(&(*m * *m - *m)))
        .fold(0.0, f64::max);
    let completeness =
        max_abs(&(&proj.pi_u + &proj.pi_p + &proj.pi_r - DMatrix::<f64>::identity(d, d)));
    Ok(ProjectorAudit {
        symmetry,
        idempotence,
        visual_prior: max_abs(&(&proj.pi_u * &proj.pi_p)),
        visual_residual: max_abs(&(&proj.pi_u * &proj.pi_r)),
        prior_residual: max_abs(&(&proj.pi_p * &proj.pi_r)),
        completeness,
    })
}
