//! Per-iteration quantile envelopes over repeated trials.
//!
//! Quantiles use type-7 interpolation: for sorted values `x_0 ≤ … ≤ x_{N−1}`
//! and level `q`, with `h = (N − 1)q`, the estimate is
//! `x_⌊h⌋ + (h − ⌊h⌋)(x_⌊h⌋+1 − x_⌊h⌋)`.
//!
//! Trials that stop early hold their last logged value for the rest of the
//! grid, so a converged run keeps contributing its final error.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SketchError};
use crate::io::config::BandMetric;
use crate::solver::{ConvergenceLog, LogEntry};

/// Type-7 quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BandMetric {
    /// The metric of one log entry, in percent for the relative metrics.
    pub fn value(self, e: &LogEntry) -> Option<f64> {
        match self {
            BandMetric::RelResidual => Some(100.0 * e.rel_residual),
            BandMetric::BNormError => e.b_norm_error.map(|v| 100.0 * v),
            BandMetric::EuclidError => e.euclid_error,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BandMetric::RelResidual => "rel-residual",
            BandMetric::BNormError => "b-norm-error",
            BandMetric::EuclidError => "euclid-error",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandedTrace {
    pub iters: Vec<usize>,
    /// Ascending levels, one band per level.
    pub quantiles: Vec<f64>,
    pub bands: Vec<Vec<f64>>,
    pub median: Vec<f64>,
    pub mean: Vec<f64>,
    /// Theoretical `ρ^k`, scaled like the metric.
    pub overlay: Option<Vec<f64>>,
}

fn column_name(q: f64) -> String {
    let pct = q * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("q{:02}", pct.round() as i64)
    } else {
        format!("q{pct}")
    }
}

impl BandedTrace {
    /// Sets the overlay to `scale·ρ^k` on the trace's grid.
    pub fn with_overlay(mut self, rho: f64, scale: f64) -> Self {
        self.overlay = Some(self.iters.iter().map(|&k| scale * rho.powi(k as i32)).collect());
        self
    }

    /// Columns: `iter`, the levels below one half, `median`, the remaining
    /// levels, `mean`, then `theory` when an overlay is present.
    pub fn to_csv(&self) -> String {
        let split = self.quantiles.iter().position(|&q| q >= 0.5).unwrap_or(self.quantiles.len());
        let mut header = vec!["iter".to_string()];
        header.extend(self.quantiles[..split].iter().map(|&q| column_name(q)));
        header.push("median".into());
        header.extend(self.quantiles[split..].iter().map(|&q| column_name(q)));
        header.push("mean".into());
        if self.overlay.is_some() {
            header.push("theory".into());
        }
        let mut out = header.join(",");
        out.push('\n');
        for (t, k) in self.iters.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(self.bands[..split].iter().map(|b| b[t].to_string()));
            row.push(self.median[t].to_string());
            row.extend(self.bands[split..].iter().map(|b| b[t].to_string()));
            row.push(self.mean[t].to_string());
            if let Some(o) = &self.overlay {
                row.push(o[t].to_string());
            }
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| SketchError::io(path, e))
    }
}

/// Envelopes of `metric` across `logs`, which must share one iteration
/// grid (every log's iteration sequence is a prefix of the longest one).
pub fn quantile_bands(logs: &[ConvergenceLog], quantiles: &[f64], metric: BandMetric) -> Result<BandedTrace> {
    if logs.len() < 2 {
        return Err(SketchError::Statistics(format!(
            "quantile bands need at least 2 logs, got {}",
            logs.len()
        )));
    }
    if let Some(q) = quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(SketchError::InvalidParameter(format!("quantile {q} outside (0, 1)")));
    }
    let longest = logs.iter().max_by_key(|l| l.len()).expect("non-empty");
    let iters: Vec<usize> = longest.entries.iter().map(|e| e.iter).collect();

    let mut series: Vec<Vec<f64>> = Vec::with_capacity(logs.len());
    for (t, log) in logs.iter().enumerate() {
        if log.is_empty() {
            return Err(SketchError::Statistics(format!("log {t} is empty")));
        }
        let mut vals = Vec::with_capacity(iters.len());
        for (pos, e) in log.entries.iter().enumerate() {
            if e.iter != iters[pos] {
                return Err(SketchError::Statistics(format!(
                    "mismatched iteration grids: log {t} has k = {} where another has k = {}",
                    e.iter, iters[pos]
                )));
            }
            let v = metric.value(e).ok_or_else(|| {
                SketchError::Statistics(format!("log {t} does not record {}", metric.name()))
            })?;
            vals.push(v);
        }
        let last = *vals.last().expect("non-empty");
        vals.resize(iters.len(), last);
        series.push(vals);
    }

    let mut levels = quantiles.to_vec();
    levels.sort_by(f64::total_cmp);
    let mut bands = vec![Vec::with_capacity(iters.len()); levels.len()];
    let mut median = Vec::with_capacity(iters.len());
    let mut mean = Vec::with_capacity(iters.len());
    let mut column = vec![0.0; logs.len()];
    for pos in 0..iters.len() {
        for (c, s) in column.iter_mut().zip(&series) {
            *c = s[pos];
        }
        column.sort_by(f64::total_cmp);
        for (band, &q) in bands.iter_mut().zip(&levels) {
            band.push(quantile_sorted(&column, q));
        }
        median.push(quantile_sorted(&column, 0.5));
        mean.push(column.iter().sum::<f64>() / column.len() as f64);
    }
    Ok(BandedTrace {
        iters,
        quantiles: levels,
        bands,
        median,
        mean,
        overlay: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(values: &[(usize, f64)]) -> ConvergenceLog {
        ConvergenceLog {
            entries: values
                .iter()
                .map(|&(iter, r)| LogEntry {
                    iter,
                    rel_residual: r,
                    b_norm_error: None,
                    euclid_error: None,
                    seconds: 0.0,
                    flops: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn type_seven_median_of_four() {
        let logs: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| log(&[(0, v)])).collect();
        let b = quantile_bands(&logs, &[0.05, 0.95], BandMetric::RelResidual).unwrap();
        assert!((b.median[0] - 250.0).abs() < 1e-12);
        assert!((b.bands[0][0] - 115.0).abs() < 1e-12);
        assert!((b.bands[1][0] - 385.0).abs() < 1e-12);
        assert!((b.mean[0] - 250.0).abs() < 1e-12);
    }

    #[test]
    fn identical_logs_collapse() {
        let l = log(&[(0, 1.0), (5, 0.5), (10, 0.25)]);
        let b = quantile_bands(&[l.clone(), l.clone(), l], &[0.05, 0.95], BandMetric::RelResidual).unwrap();
        for band in b.bands.iter().chain([&b.median, &b.mean]) {
            assert_eq!(band, &vec![100.0, 50.0, 25.0]);
        }
    }

    #[test]
    fn short_logs_carry_their_last_value() {
        let a = log(&[(0, 1.0), (1, 0.5), (2, 0.25)]);
        let b = log(&[(0, 1.0), (1, 1e-5)]);
        let t = quantile_bands(&[a, b], &[0.5], BandMetric::RelResidual).unwrap();
        assert_eq!(t.iters, vec![0, 1, 2]);
        assert!((t.mean[2] - (25.0 + 1e-3) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_and_missing_metric() {
        let a = log(&[(0, 1.0), (1, 0.5)]);
        let b = log(&[(0, 1.0), (2, 0.5)]);
        assert!(quantile_bands(&[a.clone(), b], &[0.5], BandMetric::RelResidual).is_err());
        assert!(quantile_bands(std::slice::from_ref(&a), &[0.5], BandMetric::RelResidual).is_err());
        assert!(quantile_bands(&[a.clone(), a], &[0.5], BandMetric::BNormError).is_err());
    }

    #[test]
    fn csv_has_five_columns_and_overlay() {
        let l = log(&[(0, 1.0), (2, 0.5)]);
        let b = quantile_bands(&[l.clone(), l], &[0.95, 0.05], BandMetric::RelResidual).unwrap();
        let csv = b.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "iter,q05,median,q95,mean");
        let with = b.with_overlay(0.9, 100.0).to_csv();
        let mut lines = with.lines();
        assert_eq!(lines.next().unwrap(), "iter,q05,median,q95,mean,theory");
        lines.next();
        let last: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert!((last[5].parse::<f64>().unwrap() - 81.0).abs() < 1e-12);
    }
}
