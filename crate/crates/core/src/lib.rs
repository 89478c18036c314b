//! Orthogonal decomposition of decoder hidden states into a visual-evidence
//! subspace, an anti-prior subspace and their residual, with a
//! certificate-gated closed-form shrinkage edit.
//!
//! ```
//! use nalgebra::DMatrix;
//! use orthoedit_core::{
//!     anti_prior_basis, edit_token, relevance_weights, visual_basis, EditConfig, HiddenState,
//!     SubspacePair, VisualFeatureMatrix,
//! };
//!
//! let v = VisualFeatureMatrix::new(DMatrix::from_row_slice(2, 4, &[
//!     1.0, 0.0, 0.0, 0.0,
//!     0.9, 0.1, 0.0, 0.0,
//! ]), 0).unwrap();
//! let text = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0]);
//! let h = HiddenState::new(vec![0.2, 0.0, 1.0, 0.5]).unwrap();
//!
//! let w = relevance_weights(&v, &h, 1e-8).unwrap();
//! let u = visual_basis(&v, &w, 1).unwrap();
//! let p = anti_prior_basis(&text, &u, 1).unwrap();
//! let pair = SubspacePair::new(u, p).unwrap();
//!
//! let out = edit_token(&h, &pair, &EditConfig::default()).unwrap();
//! assert!(out.gated);
//! assert!(out.cert_after.vcr > out.cert_before.vcr);
//! ```

// Negated comparisons double as NaN rejection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cache;
pub mod config;
pub mod editor;
pub mod error;
mod linalg;
pub mod oracle;
pub mod random;
pub mod report;
pub mod subspace;
pub mod sweep;
pub mod trace;
pub mod verify;

pub use cache::{TextCache, VisualCache};
pub use config::EditConfig;
pub use editor::{
    certificates, closed_form_edit, edit_token, frozen_edit, gate, schedule, Certificates,
    EditOutcome, Strengths,
};
pub use error::{Error, Result};
pub use linalg::{canonicalize_signs, max_abs};
pub use report::{ReportFormat, ReportWriter, RunSummary, CSV_COLUMNS};
pub use subspace::{
    anti_prior_basis, cross_defect, decompose, orthonormality_defect, relevance_weights,
    visual_basis, BasisKind, Decomposition, HiddenState, OrthonormalBasis, RelevanceWeights,
    SubspacePair, VisualFeatureMatrix,
};
