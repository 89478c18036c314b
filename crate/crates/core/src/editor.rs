//! Certificates, strength scheduling, the closed-form shrinkage edit and
//! the gate that decides whether to apply it.
//!
//! The edit minimizes
//!
//! ```text
//! ½‖δ‖² + ½λ_n‖Π_⊥(h + δ)‖² + ½λ_p‖Π_P(h + δ)‖²,   Π_⊥ = Π_P + Π_R
//! ```
//!
//! whose minimizer is `h' = h_U + α_P h_P + α_R h_R` with
//! `α_P = 1/(1 + λ_n + λ_p)` and `α_R = 1/(1 + λ_n)`.

use nalgebra::DVector;
use serde::Serialize;

use crate::config::EditConfig;
use crate::error::Result;
use crate::subspace::{Decomposition, HiddenState, SubspacePair};

/// Fractions of a state's energy in the visual and anti-prior subspaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificates {
    /// Visual certainty ratio.
    pub vcr: f64,
    /// Prior conflict ratio.
    pub pcr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Strengths {
    pub lambda_n: f64,
    pub lambda_p: f64,
}

impl Strengths {
    pub const ZERO: Strengths = Strengths {
        lambda_n: 0.0,
        lambda_p: 0.0,
    };

    /// Shrinkage applied to the prior and residual parts, `(α_P, α_R)`.
    pub fn shrinkage(&self) -> (f64, f64) {
        (
            1.0 / (1.0 + self.lambda_n + self.lambda_p),
            1.0 / (1.0 + self.lambda_n),
        )
    }
}

/// Result of running one token through the editor.
#[derive(Debug, Clone, PartialEq)]
pub struct EditOutcome {
    /// Final state; identical to the input when `gated` is false.
    pub edited: HiddenState,
    pub gated: bool,
    pub strengths: Strengths,
    pub alpha_p: f64,
    pub alpha_r: f64,
    pub cert_before: Certificates,
    pub cert_after: Certificates,
    /// `‖Uᵀ(h_final − h)‖`.
    pub delta_u_norm: f64,
    /// `‖Pᵀ(h_final − h)‖`.
    pub delta_p_norm: f64,
}

pub fn certificates(dec: &Decomposition, eps_cert: f64) -> Certificates {
    let denom = dec.source.as_vector().norm_squared() + eps_cert;
    Certificates {
        vcr: dec.visual.norm_squared() / denom,
        pcr: dec.prior.norm_squared() / denom,
    }
}

/// Inverse-proportional strengths: weak visual evidence raises `λ_n`,
/// strong prior conflict raises `λ_p`, both capped at `lambda_max`.
pub fn schedule(cert: Certificates, cfg: &EditConfig) -> Strengths {
    let eps = cfg.eps_cert;
    let lambda_n = (cfg.kappa * (1.0 - cert.vcr) / (cert.vcr + eps)).min(cfg.lambda_max);
    let lambda_p = (cfg.lambda0 * cert.pcr / (1.0 - cert.pcr + eps)).min(cfg.lambda_max);
    // Rounding can push 1 - vcr a hair below zero.
    Strengths {
        lambda_n: lambda_n.max(0.0),
        lambda_p: lambda_p.max(0.0),
    }
}

pub fn closed_form_edit(dec: &Decomposition, s: Strengths) -> DVector<f64> {
    let (alpha_p, alpha_r) = s.shrinkage();
    let mut out = dec.visual.clone();
    out.axpy(alpha_p, &dec.prior, 1.0);
    out.axpy(alpha_r, &dec.residual, 1.0);
    out
}

/// Strict inequalities on both sides: a certificate sitting exactly on its
/// threshold does not trigger an edit.
pub fn gate(cert: Certificates, cfg: &EditConfig) -> bool {
    cert.vcr < cfg.gamma_v || cert.pcr > cfg.gamma_p
}

/// Decompose, certify, gate, and (when gated) schedule and apply the
/// closed-form edit. Certificates after the edit are measured against the
/// same bases.
pub fn edit_token(h: &HiddenState, pair: &SubspacePair, cfg: &EditConfig) -> Result<EditOutcome> {
    let dec = pair.decompose(h)?;
    let cert_before = certificates(&dec, cfg.eps_cert);
    if !gate(cert_before, cfg) {
        return Ok(EditOutcome {
            edited: h.clone(),
            gated: false,
            strengths: Strengths::ZERO,
            alpha_p: 1.0,
            alpha_r: 1.0,
            cert_before,
            cert_after: cert_before,
            delta_u_norm: 0.0,
            delta_p_norm: 0.0,
        });
    }
    let strengths = schedule(cert_before, cfg);
    let (alpha_p, alpha_r) = strengths.shrinkage();
    let edited = HiddenState::from_vector(closed_form_edit(&dec, strengths))?;
    let after = pair.decompose(&edited)?;
    let cert_after = certificates(&after, cfg.eps_cert);
    let delta = edited.as_vector() - h.as_vector();
    Ok(EditOutcome {
        delta_u_norm: pair.visual().coordinates(&delta).norm(),
        delta_p_norm: pair.prior().coordinates(&delta).norm(),
        edited,
        gated: true,
        strengths,
        alpha_p,
        alpha_r,
        cert_before,
        cert_after,
    })
}

/// The edit as a map of `h` with bases and strengths held fixed:
/// `T(h) = Π_U h + α_P Π_P h + α_R Π_R h`. Linear, with operator norm at
/// most one.
pub fn frozen_edit(h: &HiddenState, pair: &SubspacePair, s: Strengths) -> Result<DVector<f64>> {
    Ok(closed_form_edit(&pair.decompose(h)?, s))
}
