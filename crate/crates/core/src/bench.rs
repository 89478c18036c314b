//! Wall-clock scaling of the per-token edit path and of subspace
//! estimation, as a function of the state dimension.

use std::time::Instant;

use serde::Serialize;

use crate::config::EditConfig;
use crate::editor::edit_token;
use crate::error::{Error, Result};
use crate::random;
use crate::subspace::{
    anti_prior_basis, relevance_weights, visual_basis, HiddenState, SubspacePair,
    VisualFeatureMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchSpec {
    pub r: usize,
    pub q: usize,
    pub n_v: usize,
    pub n_t: usize,
    /// Distinct states pushed through the edit path per batch.
    pub tokens: usize,
    /// Timed batches for the edit path; the median is reported.
    pub batches: usize,
    /// Timed repetitions of subspace estimation; the median is reported.
    pub estimation_reps: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            r: 8,
            q: 5,
            n_v: 576,
            n_t: 512,
            tokens: 64,
            batches: 21,
            estimation_reps: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub d: usize,
    /// Median per-token time of decomposition, certificates and edit.
    pub projection_micros: f64,
    /// Median time to estimate both bases for one token.
    pub estimation_millis: f64,
    /// `projection_micros` relative to the previous row.
    pub projection_growth: Option<f64>,
    /// Edit-path flops relative to one dense `d × d` matrix-vector product.
    pub flop_fraction: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Times one dimension. Gating is forced so every token takes the full
/// edit path.
pub fn measure(d: usize, spec: &BenchSpec) -> Result<ScalingRow> {
    if spec.r + spec.q > d {
        return Err(Error::InvalidArgument(format!(
            "r + q = {} exceeds d = {d}",
            spec.r + spec.q
        )));
    }
    let mut rng = random::rng(random::trial_seed(spec.seed, d as u64));
    let features = VisualFeatureMatrix::new(random::gaussian_matrix(&mut rng, spec.n_v, d), 0)?;
    let text = random::gaussian_matrix(&mut rng, spec.n_t, d);
    let probe = HiddenState::from_vector(random::gaussian_vector(&mut rng, d))?;

    let mut est = Vec::with_capacity(spec.estimation_reps);
    let mut pair = None;
    for _ in 0..spec.estimation_reps.max(1) {
        let start = Instant::now();
        let w = relevance_weights(&features, &probe, 1e-8)?;
        let u = visual_basis(&features, &w, spec.r)?;
        let p = anti_prior_basis(&text, &u, spec.q)?;
        let built = SubspacePair::new(u, p)?;
        est.push(start.elapsed().as_secs_f64() * 1e3);
        pair = Some(built);
    }
    let pair = pair.expect("at least one repetition");

    let states: Vec<HiddenState> = (0..spec.tokens.max(1))
        .map(|_| HiddenState::from_vector(random::gaussian_vector(&mut rng, d)))
        .collect::<Result<_>>()?;
    let cfg = EditConfig {
        gamma_v: 1.0 + 1e-9,
        ..EditConfig::default()
    };
    // Warm-up pass, untimed.
    for h in &states {
        std::hint::black_box(edit_token(h, &pair, &cfg)?);
    }
    let mut batches = Vec::with_capacity(spec.batches);
    for _ in 0..spec.batches.max(1) {
        let start = Instant::now();
        for h in &states {
            std::hint::black_box(edit_token(std::hint::black_box(h), &pair, &cfg)?);
        }
        batches.push(start.elapsed().as_secs_f64() * 1e6 / states.len() as f64);
    }

    let k = (spec.r + spec.q) as f64;
    Ok(ScalingRow {
        d,
        projection_micros: median(batches),
        estimation_millis: median(est),
        projection_growth: None,
        // Two projections and one re-decomposition, each 4dk.
        flop_fraction: 12.0 * d as f64 * k / (2.0 * (d * d) as f64),
    })
}

/// Measures each dimension in ascending order and fills in the growth
/// ratios between consecutive rows.
pub fn run_scaling(dims: &[usize], spec: &BenchSpec) -> Result<Vec<ScalingRow>> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("dims list is empty".into()));
    }
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("dims must be strictly ascending".into()));
    }
    let mut rows: Vec<ScalingRow> = Vec::with_capacity(dims.len());
    for &d in dims {
        let mut row = measure(d, spec)?;
        if let Some(prev) = rows.last() {
            row.projection_growth = Some(row.projection_micros / prev.projection_micros);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Fitted exponent of estimation time against `d`.
pub fn estimation_exponent(rows: &[ScalingRow]) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| r.d as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.estimation_millis).collect();
    loglog_slope(&xs, &ys)
}

pub fn projection_exponent(rows: &[ScalingRow]) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| r.d as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.projection_micros).collect();
    loglog_slope(&xs, &ys)
}
