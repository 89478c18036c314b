//! One-parameter sensitivity sweeps over a fixed trace.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::EditConfig;
use crate::error::{Error, Result};
use crate::report::RunSummary;
use crate::trace::{replay, Trace};

/// Slack on the per-token monotonicity check.
pub const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    R,
    Q,
    Kappa,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::R => "r",
            SweepParam::Q => "q",
            SweepParam::Kappa => "kappa",
        }
    }

    /// Documented sweep range. Values outside it need an explicit
    /// override.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            SweepParam::R | SweepParam::Q => (4.0, 8.0),
            SweepParam::Kappa => (0.3, 0.8),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, SweepParam::Kappa)
    }

    pub fn apply(self, base: &EditConfig, value: f64) -> EditConfig {
        let mut cfg = *base;
        match self {
            SweepParam::R => cfg.r = value as usize,
            SweepParam::Q => cfg.q = value as usize,
            SweepParam::Kappa => cfg.kappa = value,
        }
        cfg
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" => Ok(SweepParam::R),
            "q" => Ok(SweepParam::Q),
            "kappa" => Ok(SweepParam::Kappa),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep parameter {other:?} (r | q | kappa)"
            ))),
        }
    }
}

fn parse_number(text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidArgument(format!("bad number {text:?} in range")))
}

/// Parses `a:b` (step 1 for integer parameters, 0.1 for κ), `a:b:step`,
/// a comma list, or a single value. Endpoints are inclusive.
pub fn parse_range(param: SweepParam, text: &str, allow_out_of_bounds: bool) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::InvalidArgument("empty range".into()));
    }
    let values: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() > 3 {
            return Err(Error::InvalidArgument(format!("bad range {text:?}")));
        }
        let lo = parse_number(parts[0])?;
        let hi = parse_number(parts[1])?;
        let step = match parts.get(2) {
            Some(s) => parse_number(s)?,
            None if param.is_integer() => 1.0,
            None => 0.1,
        };
        if !(step > 0.0) {
            return Err(Error::InvalidArgument("range step must be positive".into()));
        }
        let count = ((hi - lo) / step + 1e-9).floor();
        if count < 0.0 {
            return Err(Error::InvalidArgument(format!("empty range {text:?}")));
        }
        // Indexed rather than accumulated, so 0.3:0.8:0.1 lands on 0.6.
        (0..=count as usize)
            .map(|i| {
                let v = lo + i as f64 * step;
                (v * 1e12).round() / 1e12
            })
            .collect()
    } else {
        text.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(parse_number)
            .collect::<Result<_>>()?
    };
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!("empty range {text:?}")));
    }
    let (lo, hi) = param.bounds();
    for &v in &values {
        if param.is_integer() && (v.fract() != 0.0 || v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{param} takes non-negative integers, got {v}"
            )));
        }
        if !allow_out_of_bounds && !(lo..=hi).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "{param} = {v} is outside [{lo}, {hi}]; pass the override flag to allow it"
            )));
        }
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub tokens: usize,
    pub gate_rate: f64,
    pub mean_delta_vcr: f64,
    pub mean_delta_pcr: f64,
    /// No token lowered VCR or raised PCR.
    pub monotone: bool,
}

pub const SWEEP_CSV_COLUMNS: [&str; 7] = [
    "param",
    "value",
    "tokens",
    "gate_rate",
    "mean_delta_vcr",
    "mean_delta_pcr",
    "monotone",
];

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.param,
            self.value,
            self.tokens,
            self.gate_rate,
            self.mean_delta_vcr,
            self.mean_delta_pcr,
            u8::from(self.monotone)
        )
    }
}

/// Replays `trace` once per value, in parallel. Rows come back in the
/// order of `values`.
pub fn run_sweep(
    trace: &Trace,
    base: &EditConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty range".into()));
    }
    values
        .par_iter()
        .map(|&value| {
            let cfg = param.apply(base, value);
            cfg.validate()?;
            let records = replay(trace, &cfg)?;
            let summary = RunSummary::from_records(&records);
            let monotone = records.iter().all(|r| {
                r.vcr_after >= r.vcr_before - MONOTONE_SLACK
                    && r.pcr_after <= r.pcr_before + MONOTONE_SLACK
            });
            Ok(SweepRow {
                param,
                value,
                tokens: summary.tokens,
                gate_rate: summary.gate_rate,
                mean_delta_vcr: summary.mean_delta_vcr,
                mean_delta_pcr: summary.mean_delta_pcr,
                monotone,
            })
        })
        .collect()
}

/// `(max − min) / |mean|`; zero for a constant series.
pub fn relative_spread(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (max - min) / mean.abs()
}
