//! Binary decode-trace and ground-truth sidecar files.
//!
//! Trace layout, all integers and floats little-endian:
//!
//! ```text
//! magic  "HEDT"            4 bytes
//! version u32 = 1
//! d, n_v, n_tokens, flags  u32 each
//! visual  n_v × d f32, row-major
//! n_tokens × { edit_state d f32, anchor_state d f32, kind u8 }
//! ```
//!
//! `kind` is 0 for a generated token, 1 for a visual token and 2 for a
//! prompt text token. Flag bit 0 admits prompt tokens into the text cache.
//!
//! The sidecar starts with "HEDG", version, `d`, `r`, `q` (u32 each),
//! followed by the `d × r` visual basis and the `d × q` prior basis,
//! row-major f32.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

pub const TRACE_MAGIC: [u8; 4] = *b"HEDT";
pub const GROUND_TRUTH_MAGIC: [u8; 4] = *b"HEDG";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const GROUND_TRUTH_HEADER_LEN: usize = 20;

/// Prompt tokens feed the text cache.
pub const FLAG_PROMPT_IN_CACHE: u32 = 1;
const KNOWN_FLAGS: u32 = FLAG_PROMPT_IN_CACHE;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("trailing data: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: u64, found: u64 },
    #[error("non-finite float at byte offset {offset}")]
    NonFinite { offset: u64 },
    #[error("token {token}: invalid kind byte {value}")]
    InvalidTokenKind { token: usize, value: u8 },
}

impl TraceError {
    /// Stable numeric code for each failure class.
    pub fn code(&self) -> u8 {
        match self {
            TraceError::Io(_) => 10,
            TraceError::BadMagic { .. } => 11,
            TraceError::UnsupportedVersion(_) => 12,
            TraceError::InvalidHeader(_) => 13,
            TraceError::Truncated { .. } => 14,
            TraceError::TrailingBytes { .. } => 15,
            TraceError::NonFinite { .. } => 16,
            TraceError::InvalidTokenKind { .. } => 17,
        }
    }

    /// Short stable name for each failure class.
    pub fn name(&self) -> &'static str {
        match self {
            TraceError::Io(_) => "io",
            TraceError::BadMagic { .. } => "bad-magic",
            TraceError::UnsupportedVersion(_) => "version-mismatch",
            TraceError::InvalidHeader(_) => "invalid-header",
            TraceError::Truncated { .. } => "truncated-file",
            TraceError::TrailingBytes { .. } => "trailing-data",
            TraceError::NonFinite { .. } => "non-finite",
            TraceError::InvalidTokenKind { .. } => "invalid-token-kind",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceHeader {
    pub d: u32,
    pub n_v: u32,
    pub n_tokens: u32,
    pub flags: u32,
}

impl TraceHeader {
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.d == 0 || self.n_v == 0 || self.n_tokens == 0 {
            return Err(TraceError::InvalidHeader(format!(
                "d, n_v and n_tokens must be >= 1 (got d={}, n_v={}, n_tokens={})",
                self.d, self.n_v, self.n_tokens
            )));
        }
        if self.flags & !KNOWN_FLAGS != 0 {
            return Err(TraceError::InvalidHeader(format!(
                "unknown flag bits {:#x}",
                self.flags & !KNOWN_FLAGS
            )));
        }
        Ok(())
    }

    /// Exact file length implied by the header.
    pub fn file_len(&self) -> u64 {
        let d = u64::from(self.d);
        HEADER_LEN as u64
            + 4 * u64::from(self.n_v) * d
            + u64::from(self.n_tokens) * (8 * d + 1)
    }

    pub fn prompt_in_cache(&self) -> bool {
        self.flags & FLAG_PROMPT_IN_CACHE != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum TokenKind {
    Generated = 0,
    Visual = 1,
    Prompt = 2,
}

impl TokenKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(TokenKind::Generated),
            1 => Some(TokenKind::Visual),
            2 => Some(TokenKind::Prompt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceToken {
    /// Edit-layer hidden state.
    pub edit_state: Vec<f32>,
    /// Anchor-layer hidden state offered to the text cache.
    pub anchor_state: Vec<f32>,
    pub kind: TokenKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub d: usize,
    pub flags: u32,
    /// Anchor-layer visual features, `n_v × d` row-major.
    pub visual: Vec<f32>,
    pub tokens: Vec<TraceToken>,
}

impl Trace {
    pub fn n_v(&self) -> usize {
        self.visual.len().checked_div(self.d).unwrap_or(0)
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            d: self.d as u32,
            n_v: self.n_v() as u32,
            n_tokens: self.tokens.len() as u32,
            flags: self.flags,
        }
    }

    pub fn generated_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Generated)
            .count()
    }

    /// Checks that every array agrees with the header and that all floats
    /// are finite.
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.d > u32::MAX as usize || self.tokens.len() > u32::MAX as usize {
            return Err(TraceError::InvalidHeader("dimensions exceed u32".into()));
        }
        if self.d == 0 || !self.visual.len().is_multiple_of(self.d) {
            return Err(TraceError::InvalidHeader(format!(
                "visual block of {} floats is not a multiple of d={}",
                self.visual.len(),
                self.d
            )));
        }
        self.header().validate()?;
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.edit_state.len() != self.d || tok.anchor_state.len() != self.d {
                return Err(TraceError::InvalidHeader(format!(
                    "token {i} has states of length {}/{}, expected {}",
                    tok.edit_state.len(),
                    tok.anchor_state.len(),
                    self.d
                )));
            }
        }
        let all = self
            .visual
            .iter()
            .chain(self.tokens.iter().flat_map(|t| t.edit_state.iter().chain(&t.anchor_state)));
        if all.clone().any(|v| !v.is_finite()) {
            return Err(TraceError::NonFinite { offset: 0 });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, TraceError> {
        self.validate()?;
        let header = self.header();
        let mut out = Vec::with_capacity(header.file_len() as usize);
        out.extend_from_slice(&TRACE_MAGIC);
        for v in [FORMAT_VERSION, header.d, header.n_v, header.n_tokens, header.flags] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_f32s(&mut out, &self.visual);
        for tok in &self.tokens {
            put_f32s(&mut out, &tok.edit_state);
            put_f32s(&mut out, &tok.anchor_state);
            out.push(tok.kind as u8);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TraceError> {
        let found = bytes.len() as u64;
        if bytes.len() < 4 {
            return Err(TraceError::Truncated {
                expected: HEADER_LEN as u64,
                found,
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != TRACE_MAGIC {
            return Err(TraceError::BadMagic { found: magic });
        }
        if bytes.len() < HEADER_LEN {
            return Err(TraceError::Truncated {
                expected: HEADER_LEN as u64,
                found,
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != FORMAT_VERSION {
            return Err(TraceError::UnsupportedVersion(word(0)));
        }
        let header = TraceHeader {
            d: word(1),
            n_v: word(2),
            n_tokens: word(3),
            flags: word(4),
        };
        header.validate()?;
        let expected = header.file_len();
        if found < expected {
            return Err(TraceError::Truncated { expected, found });
        }
        if found > expected {
            return Err(TraceError::TrailingBytes { expected, found });
        }

        let d = header.d as usize;
        let mut reader = FloatReader::new(bytes, HEADER_LEN);
        let visual = reader.take(header.n_v as usize * d)?;
        let mut tokens = Vec::with_capacity(header.n_tokens as usize);
        for token in 0..header.n_tokens as usize {
            let edit_state = reader.take(d)?;
            let anchor_state = reader.take(d)?;
            let byte = reader.byte();
            let kind = TokenKind::from_byte(byte)
                .ok_or(TraceError::InvalidTokenKind { token, value: byte })?;
            tokens.push(TraceToken {
                edit_state,
                anchor_state,
                kind,
            });
        }
        Ok(Trace {
            d,
            flags: header.flags,
            visual,
            tokens,
        })
    }
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct FloatReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> FloatReader<'a> {
    fn new(bytes: &'a [u8], pos: usize) -> Self {
        Self { bytes, pos }
    }

    fn take(&mut self, n: usize) -> Result<Vec<f32>, TraceError> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let v = f32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(TraceError::NonFinite {
                    offset: self.pos as u64,
                });
            }
            out.push(v);
            self.pos += 4;
        }
        Ok(out)
    }

    fn byte(&mut self) -> u8 {
        let b = self.bytes[self.pos];
        self.pos += 1;
        b
    }
}

pub fn write_trace(path: impl AsRef<Path>, trace: &Trace) -> Result<(), TraceError> {
    fs::write(path, trace.to_bytes()?)?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    Trace::from_bytes(&fs::read(path)?)
}

/// Planted bases behind a synthetic trace, kept out of the trace itself.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub d: usize,
    pub r: usize,
    pub q: usize,
    /// `d × r` row-major.
    pub visual: Vec<f32>,
    /// `d × q` row-major.
    pub prior: Vec<f32>,
}

impl GroundTruth {
    pub fn from_matrices(visual: &DMatrix<f64>, prior: &DMatrix<f64>) -> Self {
        let flat = |m: &DMatrix<f64>| -> Vec<f32> {
            m.row_iter()
                .flat_map(|row| row.iter().map(|&v| v as f32).collect::<Vec<_>>())
                .collect()
        };
        Self {
            d: visual.nrows(),
            r: visual.ncols(),
            q: prior.ncols(),
            visual: flat(visual),
            prior: flat(prior),
        }
    }

    pub fn visual_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.d, self.r, self.visual.iter().map(|&v| f64::from(v)))
    }

    pub fn prior_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.d, self.q, self.prior.iter().map(|&v| f64::from(v)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(GROUND_TRUTH_HEADER_LEN + 4 * self.d * (self.r + self.q));
        out.extend_from_slice(&GROUND_TRUTH_MAGIC);
        for v in [FORMAT_VERSION, self.d as u32, self.r as u32, self.q as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_f32s(&mut out, &self.visual);
        put_f32s(&mut out, &self.prior);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TraceError> {
        let found = bytes.len() as u64;
        if bytes.len() < 4 {
            return Err(TraceError::Truncated {
                expected: GROUND_TRUTH_HEADER_LEN as u64,
                found,
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != GROUND_TRUTH_MAGIC {
            return Err(TraceError::BadMagic { found: magic });
        }
        if bytes.len() < GROUND_TRUTH_HEADER_LEN {
            return Err(TraceError::Truncated {
                expected: GROUND_TRUTH_HEADER_LEN as u64,
                found,
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != FORMAT_VERSION {
            return Err(TraceError::UnsupportedVersion(word(0)));
        }
        let (d, r, q) = (word(1) as usize, word(2) as usize, word(3) as usize);
        if d == 0 || r + q > d {
            return Err(TraceError::InvalidHeader(format!(
                "ground truth with d={d}, r={r}, q={q}"
            )));
        }
        let expected = (GROUND_TRUTH_HEADER_LEN + 4 * d * (r + q)) as u64;
        if found < expected {
            return Err(TraceError::Truncated { expected, found });
        }
        if found > expected {
            return Err(TraceError::TrailingBytes { expected, found });
        }
        let mut reader = FloatReader::new(bytes, GROUND_TRUTH_HEADER_LEN);
        Ok(Self {
            d,
            r,
            q,
            visual: reader.take(d * r)?,
            prior: reader.take(d * q)?,
        })
    }
}

pub fn write_ground_truth(path: impl AsRef<Path>, gt: &GroundTruth) -> Result<(), TraceError> {
    fs::write(path, gt.to_bytes())?;
    Ok(())
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth, TraceError> {
    GroundTruth::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Trace {
        Trace {
            d: 2,
            flags: FLAG_PROMPT_IN_CACHE,
            visual: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            tokens: vec![
                TraceToken {
                    edit_state: vec![0.5, -0.5],
                    anchor_state: vec![1.5, 2.5],
                    kind: TokenKind::Prompt,
                },
                TraceToken {
                    edit_state: vec![-1.0, 0.25],
                    anchor_state: vec![0.0, 1.0],
                    kind: TokenKind::Generated,
                },
            ],
        }
    }

    #[test]
    fn length_matches_header_arithmetic() {
        let t = tiny();
        let bytes = t.to_bytes().unwrap();
        assert_eq!(bytes.len() as u64, t.header().file_len());
        assert_eq!(bytes.len(), 24 + 4 * 6 + 2 * (16 + 1));
        assert_eq!(&bytes[..4], b"HEDT");
        assert_eq!(Trace::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn truncated_by_one_byte() {
        let bytes = tiny().to_bytes().unwrap();
        let err = Trace::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, TraceError::Truncated { .. }), "{err}");
        assert_eq!(err.name(), "truncated-file");
    }

    #[test]
    fn zero_dimension_header() {
        let mut bytes = tiny().to_bytes().unwrap();
        bytes[8..12].copy_from_slice(&0u32.to_le_bytes());
        let err = Trace::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, TraceError::InvalidHeader(_)), "{err}");
    }

    #[test]
    fn error_codes_are_distinct() {
        let errs = [
            TraceError::Io(std::io::Error::other("x")),
            TraceError::BadMagic { found: *b"XXXX" },
            TraceError::UnsupportedVersion(2),
            TraceError::InvalidHeader(String::new()),
            TraceError::Truncated { expected: 1, found: 0 },
            TraceError::TrailingBytes { expected: 0, found: 1 },
            TraceError::NonFinite { offset: 0 },
            TraceError::InvalidTokenKind { token: 0, value: 9 },
        ];
        let mut codes: Vec<u8> = errs.iter().map(TraceError::code).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), errs.len());
    }

    #[test]
    fn ground_truth_round_trip() {
        let u = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let p = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let gt = GroundTruth::from_matrices(&u, &p);
        let bytes = gt.to_bytes();
        assert_eq!(&bytes[..4], b"HEDG");
        let back = GroundTruth::from_bytes(&bytes).unwrap();
        assert_eq!(back, gt);
        assert_eq!(back.prior_matrix(), p);
    }
}
