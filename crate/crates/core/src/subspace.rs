//! Subspace estimation and the exact three-way orthogonal decomposition.
//!
//! A hidden state `h` is split as `h = h_U + h_P + h_R`, where `h_U` lies in
//! the context-weighted visual-evidence subspace, `h_P` in the anti-prior
//! subspace estimated from the text cache inside the orthogonal complement
//! of the visual subspace, and `h_R` is whatever is left. Projectors are
//! applied through their thin bases, so a decomposition costs `O(d (r + q))`
//! and no `d × d` matrix is ever formed here.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, canonicalize_signs, max_abs};

/// Tolerance on `‖BᵀB − I‖_max` for a basis to count as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-8;
/// Tolerance on `‖UᵀP‖_max` accepted by [`SubspacePair::new`].
pub const CROSS_TOL: f64 = 1e-8;
/// Frobenius norm below which the weighted visual matrix counts as zero.
pub const ZERO_MATRIX_TOL: f64 = 1e-12;
/// Singular values below this fraction of the input's Frobenius norm are
/// treated as numerically zero when determining rank.
pub const RANK_RTOL: f64 = 1e-10;
/// Relative spectral gap below which a truncation is flagged degenerate.
pub const GAP_TOL: f64 = 1e-10;

/// A single decoder hidden state: a finite real vector of length `d ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState(DVector<f64>);

impl HiddenState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(values))
    }

    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument(
                "hidden state must have length >= 1".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hidden state"));
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::from_vector(DVector::from_iterator(
            values.len(),
            values.iter().map(|&v| f64::from(v)),
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Visual-token features captured once per image at the anchor layer,
/// stored as an `n_v × d` matrix (one token per row).
#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeatureMatrix {
    rows: DMatrix<f64>,
    source_layer: u32,
}

impl VisualFeatureMatrix {
    pub fn new(rows: DMatrix<f64>, source_layer: u32) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "visual feature matrix needs at least one row".into(),
            ));
        }
        if rows.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "visual feature matrix needs d >= 1".into(),
            ));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("visual feature matrix"));
        }
        Ok(Self { rows, source_layer })
    }

    /// Builds the matrix from row-major data of `n_v` rows of width `d`.
    pub fn from_row_major(n_v: usize, d: usize, data: &[f64], source_layer: u32) -> Result<Self> {
        if data.len() != n_v * d {
            return Err(Error::DimensionMismatch {
                context: "visual feature matrix",
                expected: n_v * d,
                found: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n_v, d, data), source_layer)
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn n_tokens(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn source_layer(&self) -> u32 {
        self.source_layer
    }
}

/// Softmax relevance weights over visual tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceWeights(DVector<f64>);

impl RelevanceWeights {
    /// Wraps a probability vector. Entries must be non-negative and sum to
    /// one within `1e-12`.
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "relevance weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "relevance weights sum to {total}, expected 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0 / n as f64))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Visual,
    AntiPrior,
}

/// A `d × k` matrix with orthonormal columns spanning one of the editing
/// subspaces. `k = 0` is allowed and means the projector is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    columns: DMatrix<f64>,
    kind: BasisKind,
    singular_values: Vec<f64>,
    gap_degenerate: bool,
    zero_input: bool,
}

impl OrthonormalBasis {
    /// Validates orthonormality and applies the sign convention.
    pub fn new(mut columns: DMatrix<f64>, kind: BasisKind) -> Result<Self> {
        if columns.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("basis"));
        }
        if columns.ncols() > columns.nrows() {
            return Err(Error::InvalidArgument(format!(
                "basis has {} columns in dimension {}",
                columns.ncols(),
                columns.nrows()
            )));
        }
        let defect = gram_defect(&columns);
        if defect > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { defect });
        }
        canonicalize_signs(&mut columns);
        Ok(Self::assemble(columns, kind))
    }

    /// Wraps columns without any validation. Meant for diagnostics and for
    /// building deliberately broken inputs in tests.
    pub fn from_columns_unchecked(columns: DMatrix<f64>, kind: BasisKind) -> Self {
        Self::assemble(columns, kind)
    }

    pub fn empty(d: usize, kind: BasisKind) -> Self {
        Self::assemble(DMatrix::zeros(d, 0), kind)
    }

    fn assemble(columns: DMatrix<f64>, kind: BasisKind) -> Self {
        Self {
            columns,
            kind,
            singular_values: Vec::new(),
            gap_degenerate: false,
            zero_input: false,
        }
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Number of basis vectors actually held.
    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.rank() == 0
    }

    /// Singular values of the estimated directions, when the basis came
    /// from an SVD.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// The spectral gap at the truncation point was below [`GAP_TOL`]; the
    /// spanned subspace is not unique.
    pub fn is_gap_degenerate(&self) -> bool {
        self.gap_degenerate
    }

    /// The estimator saw a numerically zero input and returned an empty
    /// basis.
    pub fn zero_input(&self) -> bool {
        self.zero_input
    }

    /// Coordinates `Bᵀx`.
    pub fn coordinates(&self, x: &DVector<f64>) -> DVector<f64> {
        self.columns.tr_mul(x)
    }

    /// Orthogonal projection `B Bᵀ x`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.is_empty() {
            return DVector::zeros(x.len());
        }
        &self.columns * self.columns.tr_mul(x)
    }
}

fn gram_defect(columns: &DMatrix<f64>) -> f64 {
    let k = columns.ncols();
    if k == 0 {
        return 0.0;
    }
    let gram = columns.tr_mul(columns);
    max_abs(&(gram - DMatrix::identity(k, k)))
}

/// `‖BᵀB − I_k‖_max`; zero for an empty basis.
pub fn orthonormality_defect(basis: &OrthonormalBasis) -> f64 {
    gram_defect(&basis.columns)
}

/// `‖UᵀP‖_max`; zero when either basis is empty.
pub fn cross_defect(u: &OrthonormalBasis, p: &OrthonormalBasis) -> f64 {
    if u.is_empty() || p.is_empty() {
        return 0.0;
    }
    max_abs(&u.columns.tr_mul(&p.columns))
}

/// Softmax over visual tokens of the cosine similarity between each token
/// and `h`.
///
/// A zero `h` makes every cosine zero, which yields uniform weights.
pub fn relevance_weights(
    v: &VisualFeatureMatrix,
    h: &HiddenState,
    eps: f64,
) -> Result<RelevanceWeights> {
    if v.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            context: "relevance weights",
            expected: v.dim(),
            found: h.dim(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let h_norm = h.norm();
    let dots = v.rows() * h.as_vector();
    let mut logits: Vec<f64> = v
        .rows()
        .row_iter()
        .zip(dots.iter())
        .map(|(row, dot)| dot / (row.norm() * h_norm + eps))
        .collect();

    let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in &mut logits {
        *l = (*l - peak).exp();
        total += *l;
    }
    Ok(RelevanceWeights(DVector::from_iterator(
        logits.len(),
        logits.into_iter().map(|e| e / total),
    )))
}

/// Top-`r` principal directions of the weighted visual matrix
/// `W^{1/2} V`, `W = diag(w)`.
///
/// Returns fewer than `r` columns when the weighted matrix has lower
/// numerical rank, and an empty basis flagged [`OrthonormalBasis::zero_input`]
/// when it is numerically zero.
pub fn visual_basis(
    v: &VisualFeatureMatrix,
    w: &RelevanceWeights,
    r: usize,
) -> Result<OrthonormalBasis> {
    if r == 0 {
        return Err(Error::InvalidArgument("visual rank r must be >= 1".into()));
    }
    if w.len() != v.n_tokens() {
        return Err(Error::DimensionMismatch {
            context: "visual basis weights",
            expected: v.n_tokens(),
            found: w.len(),
        });
    }
    let mut weighted = v.rows().clone();
    for (mut row, wi) in weighted.row_iter_mut().zip(w.as_vector().iter()) {
        row *= wi.sqrt();
    }
    let fro = weighted.norm();
    if fro <= ZERO_MATRIX_TOL {
        let mut basis = OrthonormalBasis::empty(v.dim(), BasisKind::Visual);
        basis.zero_input = true;
        return Ok(basis);
    }
    let svd = linalg::top_right_singular(&weighted, r, RANK_RTOL * fro);
    Ok(from_truncation(svd, r, BasisKind::Visual))
}

/// Top-`q` directions of the text cache after removing its visual
/// component, `T̃ = T (I − U Uᵀ)`.
///
/// The directions are right singular vectors of `T̃` (they live in state
/// space) and are re-orthogonalized against `U` once so that
/// `‖UᵀP‖_max` stays at rounding level.
pub fn anti_prior_basis(
    text: &DMatrix<f64>,
    u: &OrthonormalBasis,
    q: usize,
) -> Result<OrthonormalBasis> {
    let d = u.dim();
    if text.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "anti-prior text cache",
            expected: d,
            found: text.ncols(),
        });
    }
    if text.nrows() == 0 || q == 0 {
        return Ok(OrthonormalBasis::empty(d, BasisKind::AntiPrior));
    }
    if text.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("text cache"));
    }
    let scale = text.norm();
    let projected = if u.is_empty() {
        text.clone()
    } else {
        let coords = text * u.columns();
        text - coords * u.columns().transpose()
    };
    if scale <= ZERO_MATRIX_TOL {
        let mut basis = OrthonormalBasis::empty(d, BasisKind::AntiPrior);
        basis.zero_input = true;
        return Ok(basis);
    }
    let svd = linalg::top_right_singular(&projected, q, RANK_RTOL * scale);
    let mut basis = from_truncation(svd, q, BasisKind::AntiPrior);
    if !u.is_empty() && !basis.is_empty() {
        let mut cols = linalg::orthonormalize_against(&basis.columns, u.columns(), 1e-6);
        canonicalize_signs(&mut cols);
        let kept = cols.ncols();
        basis.columns = cols;
        basis.singular_values.truncate(kept);
    }
    Ok(basis)
}

fn from_truncation(svd: linalg::TruncatedSvd, target: usize, kind: BasisKind) -> OrthonormalBasis {
    let k = svd.values.len();
    let gap_degenerate = match (svd.values.first(), svd.next) {
        (Some(&lead), Some(next)) if k == target && lead > 0.0 => {
            (svd.values[k - 1] - next) / lead < GAP_TOL
        }
        _ => false,
    };
    OrthonormalBasis {
        columns: svd.vectors,
        kind,
        singular_values: svd.values,
        gap_degenerate,
        zero_input: false,
    }
}

/// A visual basis and an anti-prior basis that have been checked to be
/// dimensionally consistent and mutually orthogonal.
#[derive(Debug, Clone)]
pub struct SubspacePair {
    visual: OrthonormalBasis,
    prior: OrthonormalBasis,
}

impl SubspacePair {
    pub fn new(visual: OrthonormalBasis, prior: OrthonormalBasis) -> Result<Self> {
        if visual.dim() != prior.dim() {
            return Err(Error::DimensionMismatch {
                context: "subspace pair",
                expected: visual.dim(),
                found: prior.dim(),
            });
        }
        let defect = cross_defect(&visual, &prior);
        if !(defect <= CROSS_TOL) {
            return Err(Error::NotOrthogonal { defect });
        }
        Ok(Self { visual, prior })
    }

    /// Skips the orthogonality check. Used to inject faults in the
    /// verification harness.
    pub fn new_unchecked(visual: OrthonormalBasis, prior: OrthonormalBasis) -> Self {
        Self { visual, prior }
    }

    pub fn visual(&self) -> &OrthonormalBasis {
        &self.visual
    }

    pub fn prior(&self) -> &OrthonormalBasis {
        &self.prior
    }

    pub fn dim(&self) -> usize {
        self.visual.dim()
    }

    pub fn decompose(&self, h: &HiddenState) -> Result<Decomposition> {
        if h.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "decompose",
                expected: self.dim(),
                found: h.dim(),
            });
        }
        let source = h.as_vector();
        let visual = self.visual.project(source);
        let prior = self.prior.project(source);
        let residual = source - &visual - &prior;
        Ok(Decomposition {
            source: h.clone(),
            visual,
            prior,
            residual,
        })
    }
}

/// `h = h_U + h_P + h_R` for one hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub source: HiddenState,
    pub visual: DVector<f64>,
    pub prior: DVector<f64>,
    pub residual: DVector<f64>,
}

impl Decomposition {
    /// `| ‖h‖² − (‖h_U‖² + ‖h_P‖² + ‖h_R‖²) |`.
    pub fn energy_defect(&self) -> f64 {
        let total = self.source.as_vector().norm_squared();
        (total
            - self.visual.norm_squared()
            - self.prior.norm_squared()
            - self.residual.norm_squared())
        .abs()
    }

    /// `‖h_U + h_P + h_R − h‖`.
    pub fn reconstruction_defect(&self) -> f64 {
        (&self.visual + &self.prior + &self.residual - self.source.as_vector()).norm()
    }

    /// Largest absolute pairwise inner product between the three parts.
    pub fn cross_talk(&self) -> f64 {
        self.visual
            .dot(&self.prior)
            .abs()
            .max(self.visual.dot(&self.residual).abs())
            .max(self.prior.dot(&self.residual).abs())
    }
}

/// Decomposes `h` against `U` and `P`, checking that they are orthogonal.
pub fn decompose(
    h: &HiddenState,
    u: &OrthonormalBasis,
    p: &OrthonormalBasis,
) -> Result<Decomposition> {
    SubspacePair::new(u.clone(), p.clone())?.decompose(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(d: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    fn basis_of(d: usize, idx: &[usize], kind: BasisKind) -> OrthonormalBasis {
        let cols: Vec<_> = idx.iter().map(|&i| unit(d, i)).collect();
        let m = if cols.is_empty() {
            DMatrix::zeros(d, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        OrthonormalBasis::new(m, kind).unwrap()
    }

    #[test]
    fn weights_identical_rows_are_uniform() {
        let h = HiddenState::new(vec![0.3, -1.0, 2.0]).unwrap();
        let rows: Vec<f64> = (0..3).flat_map(|_| h.as_slice().to_vec()).collect();
        let v = VisualFeatureMatrix::from_row_major(3, 3, &rows, 0).unwrap();
        let w = relevance_weights(&v, &h, 1e-8).unwrap();
        for wi in w.as_vector().iter() {
            assert_abs_diff_eq!(*wi, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn weights_match_hand_softmax() {
        // Values from a 40-digit evaluation of softmax(c, -c, 0), c = 1/(1+1e-8).
        let h = HiddenState::new(vec![1.0, 0.0]).unwrap();
        let v = VisualFeatureMatrix::from_row_major(3, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0], 0)
            .unwrap();
        let w = relevance_weights(&v, &h, 1e-8).unwrap();
        let expected = [
            0.665_240_952_948_947_4,
            0.090_030_574_588_551_39,
            0.244_728_472_462_501_2,
        ];
        for (a, b) in w.as_vector().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(w.as_vector().sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weights_zero_state_is_uniform() {
        let h = HiddenState::new(vec![0.0; 4]).unwrap();
        let v = VisualFeatureMatrix::new(DMatrix::from_fn(5, 4, |i, j| (i * 4 + j) as f64), 0)
            .unwrap();
        let w = relevance_weights(&v, &h, 1e-8).unwrap();
        for wi in w.as_vector().iter() {
            assert_abs_diff_eq!(*wi, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn weights_reject_dimension_mismatch() {
        let h = HiddenState::new(vec![1.0; 3]).unwrap();
        let v = VisualFeatureMatrix::new(DMatrix::from_element(2, 4, 1.0), 0).unwrap();
        let err = relevance_weights(&v, &h, 1e-8).unwrap_err();
        assert!(err.is_dimension_mismatch());
    }

    #[test]
    fn hidden_state_rejects_nan_and_empty() {
        assert!(HiddenState::new(vec![]).is_err());
        assert!(matches!(
            HiddenState::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn full_rank_identity_visual_basis_spans_everything() {
        let d = 5;
        let v = VisualFeatureMatrix::new(DMatrix::identity(d, d) * 3.0, 0).unwrap();
        let u = visual_basis(&v, &RelevanceWeights::uniform(d), d).unwrap();
        assert_eq!(u.rank(), d);
        let h = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.0, 7.0]);
        assert!((u.project(&h) - &h).norm() < 1e-12);
    }

    #[test]
    fn visual_basis_reports_true_rank() {
        // Three rows, all multiples of the same direction.
        let rows = DMatrix::from_row_slice(3, 4, &[
            1.0, 2.0, 0.0, -1.0, //
            2.0, 4.0, 0.0, -2.0, //
            -0.5, -1.0, 0.0, 0.5,
        ]);
        let v = VisualFeatureMatrix::new(rows, 0).unwrap();
        let u = visual_basis(&v, &RelevanceWeights::uniform(3), 3).unwrap();
        assert_eq!(u.rank(), 1);
        assert!(orthonormality_defect(&u) < 1e-12);
        // Sign convention: largest-magnitude entry is positive.
        assert!(u.columns()[(1, 0)] > 0.0);
    }

    #[test]
    fn zero_weighted_matrix_gives_flagged_empty_basis() {
        let v = VisualFeatureMatrix::new(DMatrix::zeros(4, 3), 0).unwrap();
        let u = visual_basis(&v, &RelevanceWeights::uniform(4), 2).unwrap();
        assert!(u.is_empty());
        assert!(u.zero_input());
    }

    #[test]
    fn visual_basis_rejects_zero_rank() {
        let v = VisualFeatureMatrix::new(DMatrix::identity(3, 3), 0).unwrap();
        assert!(visual_basis(&v, &RelevanceWeights::uniform(3), 0).is_err());
    }

    #[test]
    fn tied_singular_values_flag_gap_degenerate() {
        let v = VisualFeatureMatrix::new(DMatrix::identity(4, 4), 0).unwrap();
        let u = visual_basis(&v, &RelevanceWeights::uniform(4), 2).unwrap();
        assert_eq!(u.rank(), 2);
        assert!(u.is_gap_degenerate());
    }

    #[test]
    fn text_inside_visual_span_gives_empty_prior() {
        let d = 6;
        let u = basis_of(d, &[0, 1], BasisKind::Visual);
        let text = DMatrix::from_row_slice(3, d, &[
            1.0, 2.0, 0.0, 0.0, 0.0, 0.0, //
            -3.0, 0.5, 0.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        ]);
        let p = anti_prior_basis(&text, &u, 2).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn empty_cache_gives_empty_prior() {
        let u = basis_of(4, &[0], BasisKind::Visual);
        let p = anti_prior_basis(&DMatrix::zeros(0, 4), &u, 5).unwrap();
        assert!(p.is_empty());
        assert_eq!(p.kind(), BasisKind::AntiPrior);
    }

    #[test]
    fn prior_lives_in_visual_complement() {
        let d = 16;
        let u = basis_of(d, &[0, 1, 2], BasisKind::Visual);
        // Rows in span(e_3..e_7) with a leak into the visual span.
        let text = DMatrix::from_fn(10, d, |i, j| {
            if (3..8).contains(&j) {
                ((i * 7 + j * 3) % 11) as f64 - 5.0
            } else if j < 3 {
                0.25 * (i as f64 - j as f64)
            } else {
                0.0
            }
        });
        let p = anti_prior_basis(&text, &u, 2).unwrap();
        assert_eq!(p.rank(), 2);
        assert!(cross_defect(&u, &p) <= 1e-10);
        assert!(orthonormality_defect(&p) <= 1e-8);
        for col in p.columns().column_iter() {
            let outside: f64 = col
                .iter()
                .enumerate()
                .filter(|(j, _)| !(3..8).contains(j))
                .map(|(_, v)| v * v)
                .sum();
            assert!(outside.sqrt() < 1e-12);
        }
    }

    #[test]
    fn decompose_state_in_visual_span() {
        let d = 5;
        let u = basis_of(d, &[1, 3], BasisKind::Visual);
        let p = basis_of(d, &[0], BasisKind::AntiPrior);
        let h = HiddenState::new(vec![0.0, 2.0, 0.0, -1.0, 0.0]).unwrap();
        let dec = decompose(&h, &u, &p).unwrap();
        assert!((dec.visual.clone() - h.as_vector()).norm() <= 1e-10 * h.norm());
        assert!(dec.prior.norm() <= 1e-10 * h.norm());
        assert!(dec.residual.norm() <= 1e-10 * h.norm());
    }

    #[test]
    fn decompose_with_empty_bases_is_all_residual() {
        let h = HiddenState::new(vec![1.0, -2.0, 3.0]).unwrap();
        let dec = decompose(
            &h,
            &OrthonormalBasis::empty(3, BasisKind::Visual),
            &OrthonormalBasis::empty(3, BasisKind::AntiPrior),
        )
        .unwrap();
        assert_eq!(dec.visual, DVector::zeros(3));
        assert_eq!(dec.prior, DVector::zeros(3));
        assert_eq!(&dec.residual, h.as_vector());
    }

    #[test]
    fn decompose_rejects_overlapping_bases() {
        let d = 4;
        let u = basis_of(d, &[0, 1], BasisKind::Visual);
        let p = OrthonormalBasis::from_columns_unchecked(
            DMatrix::from_columns(&[unit(d, 1)]),
            BasisKind::AntiPrior,
        );
        let h = HiddenState::new(vec![1.0; 4]).unwrap();
        match decompose(&h, &u, &p) {
            Err(Error::NotOrthogonal { defect }) => assert_abs_diff_eq!(defect, 1.0),
            other => panic!("expected NotOrthogonal, got {other:?}"),
        }
    }

    #[test]
    fn defect_of_identity_and_scaled_basis() {
        let id = OrthonormalBasis::new(DMatrix::identity(4, 2), BasisKind::Visual).unwrap();
        assert_eq!(orthonormality_defect(&id), 0.0);
        let scaled =
            OrthonormalBasis::from_columns_unchecked(DMatrix::identity(4, 2) * 2.0, BasisKind::Visual);
        assert_abs_diff_eq!(orthonormality_defect(&scaled), 3.0);
        assert_eq!(
            orthonormality_defect(&OrthonormalBasis::empty(4, BasisKind::Visual)),
            0.0
        );
    }

    #[test]
    fn basis_new_rejects_non_orthonormal() {
        let err = OrthonormalBasis::new(DMatrix::identity(3, 2) * 2.0, BasisKind::Visual);
        assert!(matches!(err, Err(Error::NotOrthonormal { .. })));
    }
}
