use std::time::Instant;

use nalgebra::DMatrix;
use proptest::prelude::*;

use orthoedit_core::random::{self, basis_pair};
use orthoedit_core::trace::{random_trace, Trace};
use orthoedit_core::{
    anti_prior_basis, cross_defect, edit_token, orthonormality_defect, relevance_weights,
    visual_basis, EditConfig, HiddenState, Strengths, TextCache, VisualFeatureMatrix,
};

fn estimated(seed: u64, d: usize, n_v: usize, n_t: usize, r: usize, q: usize) -> (
    orthoedit_core::OrthonormalBasis,
    orthoedit_core::OrthonormalBasis,
) {
    let mut rng = random::rng(seed);
    let v = VisualFeatureMatrix::new(random::gaussian_matrix(&mut rng, n_v, d), 0).unwrap();
    let h = HiddenState::from_vector(random::gaussian_vector(&mut rng, d)).unwrap();
    let w = relevance_weights(&v, &h, 1e-8).unwrap();
    let u = visual_basis(&v, &w, r).unwrap();
    let text = random::gaussian_matrix(&mut rng, n_t, d);
    let p = anti_prior_basis(&text, &u, q).unwrap();
    (u, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cache_keeps_fifo_order(cap in 1usize..64, pushes in 0usize..10_000) {
        let mut cache = TextCache::new(1, cap).unwrap();
        for i in 0..pushes {
            cache.push(&[i as f64]).unwrap();
        }
        let snap = cache.snapshot();
        let kept = pushes.min(cap);
        prop_assert_eq!(snap.nrows(), kept);
        for (row, expected) in (pushes - kept..pushes).enumerate() {
            prop_assert_eq!(snap[(row, 0)], expected as f64);
        }
    }

    #[test]
    fn estimated_bases_are_orthonormal_and_separated(
        seed in any::<u64>(),
        d in 4usize..48,
        n_v in 1usize..40,
        n_t in 0usize..40,
        r in 1usize..9,
        q in 0usize..6,
    ) {
        let (u, p) = estimated(seed, d, n_v, n_t, r, q);
        prop_assert!(u.rank() <= r.min(n_v).min(d));
        prop_assert!(orthonormality_defect(&u) <= 1e-8);
        prop_assert!(orthonormality_defect(&p) <= 1e-8);
        prop_assert!(cross_defect(&u, &p) <= 1e-10);
    }

    #[test]
    fn estimation_is_bit_deterministic(seed in any::<u64>(), d in 4usize..32) {
        let (u1, p1) = estimated(seed, d, 12, 10, 3, 2);
        let (u2, p2) = estimated(seed, d, 12, 10, 3, 2);
        prop_assert_eq!(u1.columns(), u2.columns());
        prop_assert_eq!(p1.columns(), p2.columns());
    }

    #[test]
    fn decompose_is_idempotent(seed in any::<u64>(), d in 4usize..64, r in 0usize..8, q in 0usize..6) {
        prop_assume!(r + q <= d);
        let mut rng = random::rng(seed);
        let pair = basis_pair(&mut rng, d, r, q);
        let h = HiddenState::from_vector(random::gaussian_vector(&mut rng, d)).unwrap();
        let tol = 1e-8 * h.norm().max(1.0);
        let dec = pair.decompose(&h).unwrap();

        let on_u = pair.decompose(&HiddenState::from_vector(dec.visual.clone()).unwrap()).unwrap();
        prop_assert!((&on_u.visual - &dec.visual).norm() <= tol);
        prop_assert!(on_u.prior.norm() <= tol && on_u.residual.norm() <= tol);

        let on_p = pair.decompose(&HiddenState::from_vector(dec.prior.clone()).unwrap()).unwrap();
        prop_assert!((&on_p.prior - &dec.prior).norm() <= tol);
        prop_assert!(on_p.visual.norm() <= tol && on_p.residual.norm() <= tol);
    }

    #[test]
    fn edits_never_grow_the_state(seed in any::<u64>(), d in 4usize..64, r in 1usize..8, q in 0usize..6) {
        prop_assume!(r + q <= d);
        let mut rng = random::rng(seed);
        let pair = basis_pair(&mut rng, d, r, q);
        let h = HiddenState::from_vector(random::gaussian_vector(&mut rng, d)).unwrap();
        let out = edit_token(&h, &pair, &EditConfig::default()).unwrap();
        prop_assert!(out.edited.norm() <= h.norm() + 1e-10);
    }

    #[test]
    fn shrinkage_is_ordered_and_monotone(
        ln in 0.0f64..10.0,
        lp in 0.0f64..10.0,
        bump in 1e-6f64..1.0,
    ) {
        let (ap, ar) = Strengths { lambda_n: ln, lambda_p: lp }.shrinkage();
        prop_assert!(ap <= ar);
        let (ap2, ar2) = Strengths { lambda_n: ln + bump, lambda_p: lp }.shrinkage();
        prop_assert!(ap2 < ap && ar2 < ar);
        let (ap3, ar3) = Strengths { lambda_n: ln, lambda_p: lp + bump }.shrinkage();
        prop_assert!(ap3 < ap);
        prop_assert_eq!(ar3, ar);
    }

    #[test]
    fn trace_bytes_round_trip(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let trace = random_trace(&mut rng, 16, 8, 8);
        let bytes = trace.to_bytes().unwrap();
        prop_assert_eq!(bytes.len() as u64, trace.header().file_len());
        let back = Trace::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}

/// Median nanoseconds per push once the window is full.
fn push_cost(capacity: usize, d: usize) -> f64 {
    let mut cache = TextCache::new(d, capacity).unwrap();
    let row = vec![1.0; d];
    for _ in 0..capacity {
        cache.push(&row).unwrap();
    }
    let mut samples: Vec<f64> = (0..15)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..2000 {
                cache.push(std::hint::black_box(&row)).unwrap();
            }
            start.elapsed().as_nanos() as f64 / 2000.0
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}

#[test]
fn push_cost_does_not_depend_on_capacity() {
    let d = 1024;
    let small = push_cost(8, d);
    let large = push_cost(512, d);
    assert!(large <= 3.0 * small, "512-row push {large:.0} ns vs 8-row push {small:.0} ns");
}

#[test]
fn zero_text_cache_gives_empty_flagged_prior() {
    let (u, _) = estimated(1, 8, 4, 0, 2, 0);
    let p = anti_prior_basis(&DMatrix::zeros(3, 8), &u, 2).unwrap();
    assert!(p.is_empty());
    assert!(p.zero_input());
}
