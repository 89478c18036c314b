//! Small dense linear-algebra helpers shared by the hot path.

use nalgebra::{DMatrix, DVector};

/// Leading right singular vectors of a matrix together with their
/// singular values.
#[derive(Debug, Clone)]
pub(crate) struct TruncatedSvd {
    /// `n × k` matrix whose columns are right singular vectors.
    pub vectors: DMatrix<f64>,
    /// Singular values belonging to `vectors`, descending.
    pub values: Vec<f64>,
    /// First singular value that was not kept, if any.
    pub next: Option<f64>,
}

/// Top `k` right singular vectors of `a` (`m × n`) whose singular values
/// exceed `floor`.
///
/// The matrix is first reduced to a square triangular factor with a
/// Householder QR of its taller orientation, and the small factor is
/// handed to a dense SVD. Cost is `O(m n min(m, n))`, linear in the long
/// dimension.
pub(crate) fn top_right_singular(a: &DMatrix<f64>, k: usize, floor: f64) -> TruncatedSvd {
    let (m, n) = a.shape();
    if m == 0 || n == 0 || k == 0 {
        return TruncatedSvd {
            vectors: DMatrix::zeros(n, 0),
            values: Vec::new(),
            next: None,
        };
    }

    // Candidate right singular vectors as columns (n × p), unsorted.
    let (candidates, sigma) = if m >= n {
        let r = a.clone().qr().r();
        let svd = r.svd(false, true);
        let v_t = svd.v_t.expect("v_t requested");
        (v_t.transpose(), svd.singular_values)
    } else {
        let qr = a.transpose().qr();
        let r = qr.r();
        let svd = r.svd(true, false);
        let u = svd.u.expect("u requested");
        (qr.q() * u, svd.singular_values)
    };

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let kept: Vec<usize> = order
        .iter()
        .copied()
        .take(k)
        .take_while(|&i| sigma[i] > floor)
        .collect();
    let next = order.get(kept.len()).map(|&i| sigma[i]);

    let mut vectors = DMatrix::zeros(n, kept.len());
    for (col, &i) in kept.iter().enumerate() {
        vectors.set_column(col, &candidates.column(i));
    }
    canonicalize_signs(&mut vectors);

    TruncatedSvd {
        vectors,
        values: kept.iter().map(|&i| sigma[i]).collect(),
        next,
    }
}

/// Flip each column so that its entry of largest magnitude is
/// non-negative. Ties go to the lowest row index.
pub fn canonicalize_signs(columns: &mut DMatrix<f64>) {
    for mut col in columns.column_iter_mut() {
        let mut best = 0;
        let mut best_abs = f64::NEG_INFINITY;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col.nrows() > 0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Largest absolute entry of a matrix; 0 when empty.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Modified Gram–Schmidt over the columns of `b`, after removing the
/// components along the orthonormal columns of `against`. Columns that
/// collapse below `floor` (relative to their original norm) are dropped.
pub(crate) fn orthonormalize_against(
    b: &DMatrix<f64>,
    against: &DMatrix<f64>,
    floor: f64,
) -> DMatrix<f64> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(b.ncols());
    for col in b.column_iter() {
        let mut v = col.into_owned();
        let original = v.norm();
        if against.ncols() > 0 {
            let coeffs = against.tr_mul(&v);
            v -= against * coeffs;
        }
        for prev in &out {
            let c = prev.dot(&v);
            v.axpy(-c, prev, 1.0);
        }
        let norm = v.norm();
        if norm > floor * original.max(f64::MIN_POSITIVE) {
            out.push(v / norm);
        }
    }
    if out.is_empty() {
        DMatrix::zeros(b.nrows(), 0)
    } else {
        DMatrix::from_columns(&out)
    }
}
