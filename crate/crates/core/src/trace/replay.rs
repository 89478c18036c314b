//! Replays a decode trace through subspace estimation and the editor.

use std::time::Instant;

use serde::Serialize;

use super::format::{TokenKind, Trace, TraceToken};
use crate::cache::{TextCache, VisualCache};
use crate::config::EditConfig;
use crate::editor::{edit_token, EditOutcome};
use crate::error::{Error, Result};
use crate::subspace::{
    anti_prior_basis, relevance_weights, visual_basis, HiddenState, OrthonormalBasis,
    SubspacePair, VisualFeatureMatrix,
};

/// One row of a replay report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenRecord {
    pub token_idx: usize,
    pub vcr_before: f64,
    pub pcr_before: f64,
    pub vcr_after: f64,
    pub pcr_after: f64,
    pub gated: bool,
    pub lambda_n: f64,
    pub lambda_p: f64,
    pub alpha_p: f64,
    pub alpha_r: f64,
    pub delta_u_norm: f64,
    pub delta_p_norm: f64,
    /// Wall time of decomposition plus edit, in microseconds.
    pub edit_micros: f64,
}

impl TokenRecord {
    fn new(token_idx: usize, out: &EditOutcome, edit_micros: f64) -> Self {
        Self {
            token_idx,
            vcr_before: out.cert_before.vcr,
            pcr_before: out.cert_before.pcr,
            vcr_after: out.cert_after.vcr,
            pcr_after: out.cert_after.pcr,
            gated: out.gated,
            lambda_n: out.strengths.lambda_n,
            lambda_p: out.strengths.lambda_p,
            alpha_p: out.alpha_p,
            alpha_r: out.alpha_r,
            delta_u_norm: out.delta_u_norm,
            delta_p_norm: out.delta_p_norm,
            edit_micros,
        }
    }
}

/// Everything produced for one generated token.
#[derive(Debug, Clone)]
pub struct ReplayStep {
    pub record: TokenRecord,
    pub outcome: EditOutcome,
    pub source: HiddenState,
    pub pair: SubspacePair,
}

/// Stateful single-stream replay: owns the visual cache, the text cache and
/// the current visual basis.
#[derive(Debug)]
pub struct Replayer {
    cfg: EditConfig,
    dim: usize,
    visual: VisualCache,
    text: TextCache,
    prompt_in_cache: bool,
    visual_basis: Option<OrthonormalBasis>,
    generated: usize,
}

impl Replayer {
    pub fn new(trace: &Trace, cfg: &EditConfig) -> Result<Self> {
        cfg.validate()?;
        let d = trace.d;
        if let Some(expected) = cfg.d {
            if expected != d {
                return Err(Error::DimensionMismatch {
                    context: "trace width vs config d",
                    expected,
                    found: d,
                });
            }
        }
        if d == 0 || trace.visual.is_empty() || !trace.visual.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                context: "trace visual block",
                expected: d.max(1) * trace.n_v().max(1),
                found: trace.visual.len(),
            });
        }
        let rows: Vec<f64> = trace.visual.iter().map(|&v| f64::from(v)).collect();
        let features = VisualFeatureMatrix::from_row_major(trace.n_v(), d, &rows, cfg.anchor_layer)?;
        Ok(Self {
            cfg: *cfg,
            dim: d,
            visual: VisualCache::capture("trace", features),
            text: TextCache::new(d, cfg.window)?,
            prompt_in_cache: trace.header().prompt_in_cache(),
            visual_basis: None,
            generated: 0,
        })
    }

    pub fn text_cache(&self) -> &TextCache {
        &self.text
    }

    /// Feeds one token. Returns `Some` for generated tokens only.
    pub fn step(&mut self, index: usize, token: &TraceToken) -> Result<Option<ReplayStep>> {
        for len in [token.edit_state.len(), token.anchor_state.len()] {
            if len != self.dim {
                return Err(Error::TokenDimension {
                    token: index,
                    expected: self.dim,
                    found: len,
                });
            }
        }
        let anchor: Vec<f64> = token.anchor_state.iter().map(|&v| f64::from(v)).collect();
        match token.kind {
            TokenKind::Visual => Ok(None),
            TokenKind::Prompt => {
                if self.prompt_in_cache {
                    self.text.push(&anchor)?;
                }
                Ok(None)
            }
            TokenKind::Generated => {
                let h = HiddenState::from_f32(&token.edit_state)?;
                let pair = self.estimate(&h)?;
                let start = Instant::now();
                let outcome = edit_token(&h, &pair, &self.cfg)?;
                let micros = start.elapsed().as_secs_f64() * 1e6;
                // The cache only ever holds states from earlier steps.
                self.text.push(&anchor)?;
                self.generated += 1;
                Ok(Some(ReplayStep {
                    record: TokenRecord::new(index, &outcome, micros),
                    outcome,
                    source: h,
                    pair,
                }))
            }
        }
    }

    fn estimate(&mut self, h: &HiddenState) -> Result<SubspacePair> {
        let refresh = self.visual_basis.is_none() || self.generated.is_multiple_of(self.cfg.stride);
        if refresh {
            let features = self.visual.features();
            let w = relevance_weights(features, h, self.cfg.eps_cert)?;
            self.visual_basis = Some(visual_basis(features, &w, self.cfg.r)?);
        }
        let u = self.visual_basis.clone().expect("estimated above");
        let p = anti_prior_basis(&self.text.snapshot(), &u, self.cfg.q)?;
        SubspacePair::new(u, p)
    }
}

/// Replays every token, handing each generated-token step to `sink` as
/// soon as it is produced.
pub fn replay_with<F>(trace: &Trace, cfg: &EditConfig, mut sink: F) -> Result<()>
where
    F: FnMut(ReplayStep) -> Result<()>,
{
    let mut replayer = Replayer::new(trace, cfg)?;
    for (i, token) in trace.tokens.iter().enumerate() {
        if let Some(step) = replayer.step(i, token)? {
            sink(step)?;
        }
    }
    Ok(())
}

pub fn replay(trace: &Trace, cfg: &EditConfig) -> Result<Vec<TokenRecord>> {
    let mut out = Vec::with_capacity(trace.generated_count());
    replay_with(trace, cfg, |step| {
        out.push(step.record);
        Ok(())
    })?;
    Ok(out)
}
