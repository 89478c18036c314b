//! Seeded random instances for property suites, benchmarks and synthetic
//! traces.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::subspace::{BasisKind, OrthonormalBasis, SubspacePair};

pub type InstanceRng = ChaCha8Rng;

pub fn rng(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 step; spreads `(seed, index)` into independent trial seeds.
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `d × k` matrix with orthonormal columns drawn from the Haar measure
/// (QR of a Gaussian matrix with the R diagonal made positive).
pub fn orthonormal_columns<R: Rng>(rng: &mut R, d: usize, k: usize) -> DMatrix<f64> {
    assert!(k <= d, "cannot draw {k} orthonormal columns in dimension {d}");
    if k == 0 {
        return DMatrix::zeros(d, 0);
    }
    let qr = gaussian_matrix(rng, d, k).qr();
    let mut q = qr.q();
    let r = qr.r();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// A random mutually orthogonal `(U, P)` pair with ranks `r` and `q`.
pub fn basis_pair<R: Rng>(rng: &mut R, d: usize, r: usize, q: usize) -> SubspacePair {
    let joint = orthonormal_columns(rng, d, r + q);
    let u = OrthonormalBasis::new(joint.columns(0, r).into_owned(), BasisKind::Visual)
        .expect("QR columns are orthonormal");
    let p = OrthonormalBasis::new(joint.columns(r, q).into_owned(), BasisKind::AntiPrior)
        .expect("QR columns are orthonormal");
    SubspacePair::new(u, p).expect("disjoint QR columns are orthogonal")
}

/// A state with prescribed energy in each part of `pair`'s decomposition.
pub fn state_with_energies<R: Rng>(
    rng: &mut R,
    pair: &SubspacePair,
    visual: f64,
    prior: f64,
    residual: f64,
) -> DVector<f64> {
    let d = pair.dim();
    let mut out = DVector::zeros(d);
    let mut add = |v: DVector<f64>, energy: f64| {
        let n = v.norm();
        if energy > 0.0 && n > 0.0 {
            out.axpy(energy.sqrt() / n, &v, 1.0);
        }
    };
    let g = gaussian_vector(rng, d);
    add(pair.visual().project(&g), visual);
    let g = gaussian_vector(rng, d);
    add(pair.prior().project(&g), prior);
    let g = gaussian_vector(rng, d);
    let res = &g - pair.visual().project(&g) - pair.prior().project(&g);
    add(res, residual);
    out
}
