//! Synthetic traces with planted visual and prior subspaces.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::format::{GroundTruth, TokenKind, Trace, TraceToken, FLAG_PROMPT_IN_CACHE};
use crate::error::{Error, Result};
use crate::random::{self, gaussian_vector};

/// Weight of the off-prior direction mixed into text-token anchor states.
const ANCHOR_LEAK: f64 = 0.2;

/// Recipe for a planted trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub d: usize,
    pub n_v: usize,
    /// Generated tokens.
    pub n_tokens: usize,
    pub r_true: usize,
    pub q_true: usize,
    /// Squared norm of each generated state's visual component.
    pub visual_energy: f64,
    pub prior_energy: f64,
    pub residual_energy: f64,
    /// Per-entry Gaussian noise on visual rows and anchor states.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Prompt text tokens placed before the generated ones.
    #[serde(default)]
    pub n_prompt: usize,
    #[serde(default = "default_true")]
    pub prompt_in_cache: bool,
}

fn default_true() -> bool {
    true
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.d == 0 || self.n_v == 0 || self.n_tokens == 0 {
            return bad("d, n_v and n_tokens must be >= 1".into());
        }
        if self.r_true + self.q_true > self.d {
            return bad(format!(
                "r_true + q_true = {} exceeds d = {}",
                self.r_true + self.q_true,
                self.d
            ));
        }
        let energies = [self.visual_energy, self.prior_energy, self.residual_energy];
        if energies.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return bad("energies must be finite and non-negative".into());
        }
        if energies.iter().all(|e| *e == 0.0) {
            return bad("at least one energy must be positive".into());
        }
        if self.visual_energy > 0.0 && self.r_true == 0 {
            return bad("visual_energy > 0 needs r_true >= 1".into());
        }
        if self.prior_energy > 0.0 && self.q_true == 0 {
            return bad("prior_energy > 0 needs q_true >= 1".into());
        }
        if self.residual_energy > 0.0 && self.r_true + self.q_true == self.d {
            return bad("residual_energy > 0 needs r_true + q_true < d".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plant spec serializes")
    }
}

fn unit_or_zero(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

fn to_f32(v: &DVector<f64>) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Generates a trace whose visual rows live in a planted `r_true`-dim
/// subspace `U*` (plus noise) and whose text anchor states are dominated by
/// a planted `q_true`-dim subspace `P* ⟂ U*`. Each generated edit-layer
/// state carries exactly the requested energy in `U*`, `P*` and their joint
/// complement. Deterministic in `spec.seed`.
pub fn gen_planted_trace(spec: &PlantSpec) -> Result<(Trace, GroundTruth)> {
    spec.validate()?;
    let d = spec.d;
    let mut rng = random::rng(spec.seed);
    let joint = random::orthonormal_columns(&mut rng, d, spec.r_true + spec.q_true);
    let u_star = joint.columns(0, spec.r_true).into_owned();
    let p_star = joint.columns(spec.r_true, spec.q_true).into_owned();

    let draw_in = |rng: &mut random::InstanceRng, basis: &DMatrix<f64>| -> DVector<f64> {
        if basis.ncols() == 0 {
            return DVector::zeros(d);
        }
        unit_or_zero(basis * gaussian_vector(rng, basis.ncols()))
    };
    let draw_complement = |rng: &mut random::InstanceRng| -> DVector<f64> {
        let g = gaussian_vector(rng, d);
        unit_or_zero(&g - &joint * joint.tr_mul(&g))
    };
    let noise = |rng: &mut random::InstanceRng| -> DVector<f64> {
        if spec.noise_sigma > 0.0 {
            gaussian_vector(rng, d) * spec.noise_sigma
        } else {
            DVector::zeros(d)
        }
    };

    let mut visual = Vec::with_capacity(spec.n_v * d);
    for _ in 0..spec.n_v {
        let coeffs = gaussian_vector(&mut rng, spec.r_true.max(1));
        let scale = 1.0 / (spec.r_true.max(1) as f64).sqrt();
        let mut row = if spec.r_true > 0 {
            &u_star * coeffs * scale
        } else {
            DVector::zeros(d)
        };
        row += noise(&mut rng);
        visual.extend(to_f32(&row));
    }

    let anchor = |rng: &mut random::InstanceRng| -> DVector<f64> {
        let mut a = draw_in(rng, &p_star);
        if spec.q_true == 0 {
            a = draw_complement(rng);
        } else if spec.r_true + spec.q_true < d {
            a.axpy(ANCHOR_LEAK, &draw_complement(rng), 1.0);
        }
        a + noise(rng)
    };

    let mut tokens = Vec::with_capacity(spec.n_prompt + spec.n_tokens);
    for _ in 0..spec.n_prompt {
        let a = anchor(&mut rng);
        tokens.push(TraceToken {
            edit_state: to_f32(&a),
            anchor_state: to_f32(&a),
            kind: TokenKind::Prompt,
        });
    }
    for _ in 0..spec.n_tokens {
        let mut h = DVector::zeros(d);
        h.axpy(spec.visual_energy.sqrt(), &draw_in(&mut rng, &u_star), 1.0);
        h.axpy(spec.prior_energy.sqrt(), &draw_in(&mut rng, &p_star), 1.0);
        if spec.residual_energy > 0.0 {
            h.axpy(spec.residual_energy.sqrt(), &draw_complement(&mut rng), 1.0);
        }
        let a = anchor(&mut rng);
        tokens.push(TraceToken {
            edit_state: to_f32(&h),
            anchor_state: to_f32(&a),
            kind: TokenKind::Generated,
        });
    }

    let trace = Trace {
        d,
        flags: if spec.prompt_in_cache {
            FLAG_PROMPT_IN_CACHE
        } else {
            0
        },
        visual,
        tokens,
    };
    trace.validate()?;
    Ok((trace, GroundTruth::from_matrices(&u_star, &p_star)))
}

/// Draws a uniformly random spec-shaped trace for format tests: arbitrary
/// dimensions, token kinds and finite payloads.
pub fn random_trace<R: Rng>(rng: &mut R, max_d: usize, max_v: usize, max_tokens: usize) -> Trace {
    let d = rng.random_range(1..=max_d);
    let n_v = rng.random_range(1..=max_v);
    let n_tokens = rng.random_range(1..=max_tokens);
    let mut f = |n: usize| -> Vec<f32> {
        (0..n)
            .map(|_| f32::from_bits(rng.random::<u32>() & 0xBFFF_FFFF))
            .collect()
    };
    let visual = f(n_v * d);
    let mut tokens = Vec::with_capacity(n_tokens);
    for _ in 0..n_tokens {
        tokens.push(TraceToken {
            edit_state: f(d),
            anchor_state: f(d),
            kind: TokenKind::Generated,
        });
    }
    for t in &mut tokens {
        t.kind = match rng.random_range(0..3) {
            0 => TokenKind::Generated,
            1 => TokenKind::Visual,
            _ => TokenKind::Prompt,
        };
    }
    Trace {
        d,
        flags: rng.random_range(0..=1),
        visual,
        tokens,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PlantSpec {
        PlantSpec {
            d: 24,
            n_v: 16,
            n_tokens: 5,
            r_true: 3,
            q_true: 2,
            visual_energy: 1.0,
            prior_energy: 0.5,
            residual_energy: 0.25,
            noise_sigma: 0.0,
            seed: 7,
            n_prompt: 2,
            prompt_in_cache: true,
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, ga) = gen_planted_trace(&spec()).unwrap();
        let (b, gb) = gen_planted_trace(&spec()).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
        assert_eq!(ga.to_bytes(), gb.to_bytes());
    }

    #[test]
    fn all_zero_energies_rejected() {
        let s = PlantSpec {
            visual_energy: 0.0,
            prior_energy: 0.0,
            residual_energy: 0.0,
            ..spec()
        };
        assert!(gen_planted_trace(&s).is_err());
    }

    #[test]
    fn generated_states_carry_planted_energies() {
        let (trace, gt) = gen_planted_trace(&spec()).unwrap();
        let u = gt.visual_matrix();
        let p = gt.prior_matrix();
        for tok in trace.tokens.iter().filter(|t| t.kind == TokenKind::Generated) {
            let h = DVector::from_iterator(24, tok.edit_state.iter().map(|&v| f64::from(v)));
            let eu = u.tr_mul(&h).norm_squared();
            let ep = p.tr_mul(&h).norm_squared();
            assert!((eu - 1.0).abs() < 1e-5, "{eu}");
            assert!((ep - 0.5).abs() < 1e-5, "{ep}");
            assert!((h.norm_squared() - 1.75).abs() < 1e-5);
        }
        assert_eq!(trace.generated_count(), 5);
        assert_eq!(trace.tokens.len(), 7);
    }

    #[test]
    fn spec_parses_from_toml() {
        let text = spec().to_toml_string();
        assert_eq!(PlantSpec::from_toml_str(&text).unwrap(), spec());
        assert!(PlantSpec::from_toml_str("d = 3\nbogus = 1\n").is_err());
    }
}
