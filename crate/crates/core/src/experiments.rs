//! Denoising sweep: add white noise at several levels, process, and compare
//! distances to the clean reference before and after processing.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{process, PipelineConfig, RunReport};
use crate::signal::{add_noise, Signal, NOISE_RNG};

fn check_pair(a: &Signal, b: &Signal) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::domain(
            "experiments",
            format!("length mismatch: {} vs {} samples", a.len(), b.len()),
        ));
    }
    Ok(a.len())
}

/// Mean absolute sample difference, `Σ|a − b| / N`.
pub fn metric_l1(a: &Signal, b: &Signal) -> Result<f64> {
    let n = check_pair(a, b)?;
    if n == 0 {
        return Err(Error::domain("experiments", "metric_l1 needs at least one sample"));
    }
    let sum: f64 = a.samples().iter().zip(b.samples()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / n as f64)
}

/// Population standard deviation of `a − b`.
pub fn metric_std(a: &Signal, b: &Signal) -> Result<f64> {
    let n = check_pair(a, b)?;
    if n < 2 {
        return Err(Error::domain("experiments", "metric_std needs at least two samples"));
    }
    let d: Vec<f64> = a.samples().iter().zip(b.samples()).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(var.sqrt())
}

/// Twelve log-spaced noise levels from 1e-3 to 0.3.
pub fn default_eps_grid() -> Vec<f64> {
    let (lo, hi, n) = (1e-3f64.ln(), 0.3f64.ln(), 12);
    (0..n)
        .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    /// `(s_ε, s)`.
    pub metric_l1_before: f64,
    /// `(ŝ_ε, ŝ)`.
    pub metric_l1_after: f64,
    /// `(ŝ_ε, s)`.
    pub metric_l1_after_vs_clean: f64,
    pub metric_std_before: f64,
    pub metric_std_after: f64,
    pub metric_std_after_vs_clean: f64,
    /// Seed used for this row's noise draw.
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub base_seed: u64,
    pub rng: &'static str,
    pub config: PipelineConfig,
    /// Report of the clean-signal run.
    pub clean_report: RunReport,
}

impl SweepResult {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let err = |e: csv::Error| Error::domain("experiments", format!("CSV write failed: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "eps",
            "metric_l1_before",
            "metric_l1_after",
            "metric_l1_after_vs_clean",
            "metric_std_before",
            "metric_std_after",
            "metric_std_after_vs_clean",
            "seed",
            "rng",
        ])
        .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.eps.to_string(),
                r.metric_l1_before.to_string(),
                r.metric_l1_after.to_string(),
                r.metric_l1_after_vs_clean.to_string(),
                r.metric_std_before.to_string(),
                r.metric_std_after.to_string(),
                r.metric_std_after_vs_clean.to_string(),
                r.seed.to_string(),
                self.rng.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::domain("experiments", format!("CSV write failed: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::domain("experiments", format!("JSON encoding failed: {e}")))
    }
}

/// Runs the sweep. Row `i` draws its noise with seed `seed + i`; the clean
/// signal is processed once and shared by all rows.
pub fn denoise_sweep(signal: &Signal, eps_grid: &[f64], config: &PipelineConfig, seed: u64) -> Result<SweepResult> {
    if eps_grid.is_empty() {
        return Err(Error::domain("experiments", "eps grid is empty"));
    }
    if let Some(e) = eps_grid.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::domain(
            "experiments",
            format!("noise level must be finite and non-negative, got {e}"),
        ));
    }
    if eps_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("experiments", "eps grid must be strictly increasing"));
    }
    let clean = process(signal, config)?;
    let rows = eps_grid
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let row_seed = seed.wrapping_add(i as u64);
            let noisy = add_noise(signal, eps, row_seed)?;
            let out = process(&noisy, config)?.signal;
            Ok(SweepRow {
                eps,
                metric_l1_before: metric_l1(&noisy, signal)?,
                metric_l1_after: metric_l1(&out, &clean.signal)?,
                metric_l1_after_vs_clean: metric_l1(&out, signal)?,
                metric_std_before: metric_std(&noisy, signal)?,
                metric_std_after: metric_std(&out, &clean.signal)?,
                metric_std_after_vs_clean: metric_std(&out, signal)?,
                seed: row_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        rows,
        base_seed: seed,
        rng: NOISE_RNG,
        config: *config,
        clean_report: clean.report,
    })
}
