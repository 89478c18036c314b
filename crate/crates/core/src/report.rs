//! Per-token report streams and their summary.

use std::io::{self, Write};
use std::str::FromStr;

use serde::Serialize;

use crate::error::Error;
use crate::trace::TokenRecord;

pub const CSV_COLUMNS: [&str; 13] = [
    "token_idx",
    "vcr_before",
    "pcr_before",
    "vcr_after",
    "pcr_after",
    "gated",
    "lambda_n",
    "lambda_p",
    "alpha_p",
    "alpha_r",
    "delta_u_norm",
    "delta_p_norm",
    "edit_micros",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    JsonLines,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json-lines" | "jsonl" => Ok(ReportFormat::JsonLines),
            other => Err(Error::InvalidArgument(format!(
                "unknown report format {other:?} (csv | json-lines)"
            ))),
        }
    }
}

/// Writes one line per record and flushes after each, so an interrupted
/// run leaves a well-formed prefix.
pub struct ReportWriter<W: Write> {
    inner: W,
    format: ReportFormat,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(mut inner: W, format: ReportFormat) -> io::Result<Self> {
        if format == ReportFormat::Csv {
            writeln!(inner, "{}", CSV_COLUMNS.join(","))?;
            inner.flush()?;
        }
        Ok(Self { inner, format })
    }

    pub fn write(&mut self, rec: &TokenRecord) -> io::Result<()> {
        match self.format {
            ReportFormat::Csv => writeln!(
                self.inner,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                rec.token_idx,
                rec.vcr_before,
                rec.pcr_before,
                rec.vcr_after,
                rec.pcr_after,
                u8::from(rec.gated),
                rec.lambda_n,
                rec.lambda_p,
                rec.alpha_p,
                rec.alpha_r,
                rec.delta_u_norm,
                rec.delta_p_norm,
                rec.edit_micros,
            )?,
            ReportFormat::JsonLines => {
                serde_json::to_writer(&mut self.inner, rec)?;
                self.inner.write_all(b"\n")?;
            }
        }
        self.inner.flush()
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// Aggregates over a replay. Every field is a plain function of the
/// records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub tokens: usize,
    pub gated: usize,
    pub gate_rate: f64,
    pub mean_delta_vcr: f64,
    pub mean_delta_pcr: f64,
    pub mean_delta_u_norm: f64,
    pub mean_delta_p_norm: f64,
    /// Generated tokens per second spent in the edit path alone.
    pub edit_tokens_per_sec: f64,
}

impl RunSummary {
    pub fn from_records(records: &[TokenRecord]) -> Self {
        let n = records.len();
        let mean = |f: &dyn Fn(&TokenRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let gated = records.iter().filter(|r| r.gated).count();
        let total_micros: f64 = records.iter().map(|r| r.edit_micros).sum();
        Self {
            tokens: n,
            gated,
            gate_rate: if n == 0 { 0.0 } else { gated as f64 / n as f64 },
            mean_delta_vcr: mean(&|r| r.vcr_after - r.vcr_before),
            mean_delta_pcr: mean(&|r| r.pcr_after - r.pcr_before),
            mean_delta_u_norm: mean(&|r| r.delta_u_norm),
            mean_delta_p_norm: mean(&|r| r.delta_p_norm),
            edit_tokens_per_sec: if total_micros > 0.0 {
                n as f64 / (total_micros * 1e-6)
            } else {
                0.0
            },
        }
    }
}
