//! Robust Cauchy fitting of chirpiness samples and descriptive goodness of fit.
//!
//! Location is the sample median and scale is half the interquartile range.
//! Quartiles use linear interpolation between order statistics ("type 7").

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lift::chirpiness_field;
use crate::signal::read_wav;
use crate::tfr::{stft, StftConfig};

/// Quantile rule used for the median and the quartiles.
pub const QUANTILE_CONVENTION: &str = "type7 (linear interpolation between order statistics)";

/// Cauchy(x0, gamma) fitted by median / half-IQR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyFit {
    pub x0: f64,
    pub gamma: f64,
    pub n: usize,
}

impl CauchyFit {
    fn require_scale(&self) -> Result<()> {
        if self.gamma > 0.0 && self.gamma.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(
                "chirpstats",
                format!("degenerate scale: Cauchy fit has gamma = {}", self.gamma),
            ))
        }
    }

    /// Half width of the central interval holding probability `p`: `gamma * tan(p π / 2)`.
    pub fn half_width(&self, p: f64) -> f64 {
        self.gamma * (p * PI / 2.0).tan()
    }

    /// Central interval `I_p = [x0 - hw, x0 + hw]`.
    pub fn interval(&self, p: f64) -> (f64, f64) {
        let hw = self.half_width(p);
        (self.x0 - hw, self.x0 + hw)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.require_scale()?;
        Ok(cdf_unchecked(x, self.x0, self.gamma))
    }

    pub fn quantile(&self, q: f64) -> f64 {
        self.x0 + self.gamma * (PI * (q - 0.5)).tan()
    }
}

fn cdf_unchecked(x: f64, x0: f64, gamma: f64) -> f64 {
    0.5 + ((x - x0) / gamma).atan() / PI
}

/// `F(x) = 1/2 + atan((x - x0)/gamma)/π`.
pub fn cauchy_cdf(x: f64, fit: &CauchyFit) -> Result<f64> {
    fit.cdf(x)
}

fn reject_nan(samples: &[f64]) -> Result<()> {
    let nans = samples.iter().filter(|v| v.is_nan()).count();
    if nans > 0 {
        return Err(Error::domain("chirpstats", format!("{nans} NaN sample(s) in input")));
    }
    Ok(())
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn fit_cauchy(samples: &[f64]) -> Result<CauchyFit> {
    if samples.len() < 4 {
        return Err(Error::domain(
            "chirpstats",
            format!("Cauchy fit needs at least 4 samples, got {}", samples.len()),
        ));
    }
    reject_nan(samples)?;
    let s = sorted(samples);
    let x0 = quantile_sorted(&s, 0.5);
    let gamma = 0.5 * (quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25));
    if !x0.is_finite() || !gamma.is_finite() {
        return Err(Error::domain("chirpstats", "infinite samples dominate the quartiles"));
    }
    Ok(CauchyFit {
        x0,
        gamma,
        n: samples.len(),
    })
}

/// Exact sup-distance between the empirical CDF of `samples` and the fitted law.
pub fn ks_statistic(samples: &[f64], fit: &CauchyFit) -> Result<f64> {
    fit.require_scale()?;
    if samples.is_empty() {
        return Err(Error::domain("chirpstats", "KS statistic of an empty sample"));
    }
    reject_nan(samples)?;
    let s = sorted(samples);
    let n = s.len() as f64;
    let d = s.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf_unchecked(x, fit.x0, fit.gamma);
        d.max((((i + 1) as f64) / n - f).abs()).max((i as f64 / n - f).abs())
    });
    Ok(d)
}

/// Fraction of samples inside the central interval `I_p` of `fit`.
pub fn coverage(samples: &[f64], fit: &CauchyFit, p: f64) -> Result<f64> {
    fit.require_scale()?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::domain(
            "chirpstats",
            format!("confidence level {p} outside [0, 1)"),
        ));
    }
    if samples.is_empty() {
        return Err(Error::domain("chirpstats", "coverage of an empty sample"));
    }
    reject_nan(samples)?;
    let (lo, hi) = fit.interval(p);
    let inside = samples.iter().filter(|&&x| x >= lo && x <= hi).count();
    Ok(inside as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodnessReport {
    pub ks_statistic: f64,
    pub coverage_p: f64,
    pub p_used: f64,
    pub fit: CauchyFit,
}

/// Fit, KS distance and interval coverage for one sample set.
pub fn goodness(samples: &[f64], p: f64) -> Result<GoodnessReport> {
    let fit = fit_cauchy(samples)?;
    Ok(GoodnessReport {
        ks_statistic: ks_statistic(samples, &fit)?,
        coverage_p: coverage(samples, &fit, p)?,
        p_used: p,
        fit,
    })
}

/// One row of a corpus summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRow {
    pub path: PathBuf,
    pub outcome: std::result::Result<GoodnessReport, String>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    path: &'a str,
    x0: f64,
    gamma: f64,
    #[serde(rename = "D_n")]
    d_n: f64,
    coverage_95: f64,
    n_samples: usize,
    status: &'a str,
}

/// Chirpiness statistics for each file: read, transform, field, fit, KS, coverage at 0.95.
///
/// Files that cannot be processed yield a row carrying the error; the
/// remaining files are still processed. Output order follows input order.
pub fn corpus_summary<P: AsRef<Path> + Sync>(paths: &[P], stft_config: Option<StftConfig>, eta: f64) -> Vec<CorpusRow> {
    paths
        .par_iter()
        .map(|p| {
            let path = p.as_ref();
            let outcome = summarize_file(path, stft_config, eta).map_err(|e| e.to_string());
            CorpusRow {
                path: path.to_path_buf(),
                outcome,
            }
        })
        .collect()
}

fn summarize_file(path: &Path, stft_config: Option<StftConfig>, eta: f64) -> Result<GoodnessReport> {
    let signal = read_wav(path)?;
    let cfg = stft_config.unwrap_or_else(|| StftConfig::for_sample_rate(signal.sample_rate()));
    let spec = stft(&signal, cfg)?;
    let field = chirpiness_field(&spec, eta)?;
    goodness(&field.unmasked_values(), 0.95)
}

/// Writes the summary as CSV: `path,x0,gamma,D_n,coverage_95,n_samples,status`.
pub fn write_corpus_csv<W: Write>(rows: &[CorpusRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::domain("chirpstats", format!("CSV write failed: {e}"));
    for row in rows {
        let path = row.path.to_string_lossy();
        let rec = match &row.outcome {
            Ok(r) => CsvRow {
                path: &path,
                x0: r.fit.x0,
                gamma: r.fit.gamma,
                d_n: r.ks_statistic,
                coverage_95: r.coverage_p,
                n_samples: r.fit.n,
                status: "ok",
            },
            Err(msg) => CsvRow {
                path: &path,
                x0: f64::NAN,
                gamma: f64::NAN,
                d_n: f64::NAN,
                coverage_95: f64::NAN,
                n_samples: 0,
                status: msg,
            },
        };
        w.serialize(rec).map_err(err)?;
    }
    if rows.is_empty() {
        w.write_record(["path", "x0", "gamma", "D_n", "coverage_95", "n_samples", "status"])
            .map_err(err)?;
    }
    w.flush()
        .map_err(|e| Error::domain("chirpstats", format!("CSV write failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn even_median() {
        let f = fit_cauchy(&[-1.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(f.x0, 0.5);
        // Q1 = -0.25, Q3 = 1.25 under type 7
        assert_eq!(f.gamma, 0.75);
    }

    #[test]
    fn degenerate_fit() {
        let f = fit_cauchy(&[7.0; 10]).unwrap();
        assert_eq!((f.x0, f.gamma), (7.0, 0.0));
        assert!(f.cdf(7.0).is_err());
        assert!(ks_statistic(&[7.0], &f).is_err());
        assert!(coverage(&[7.0], &f, 0.95).is_err());
    }

    #[test]
    fn too_few_or_nan() {
        assert!(fit_cauchy(&[1.0, 2.0, 3.0]).is_err());
        let err = fit_cauchy(&[1.0, f64::NAN, 2.0, f64::NAN, 3.0]).unwrap_err();
        assert!(err.to_string().contains("2 NaN"), "{err}");
    }

    #[test]
    fn cdf_values() {
        let f = CauchyFit {
            x0: 3.0,
            gamma: 2.0,
            n: 10,
        };
        assert_eq!(cauchy_cdf(3.0, &f).unwrap(), 0.5);
        assert!((cauchy_cdf(5.0, &f).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(cauchy_cdf(f64::INFINITY, &f).unwrap(), 1.0);
        assert_eq!(cauchy_cdf(f64::NEG_INFINITY, &f).unwrap(), 0.0);
    }

    #[test]
    fn single_sample_ks() {
        let f = CauchyFit {
            x0: 1.5,
            gamma: 1.0,
            n: 1,
        };
        assert_eq!(ks_statistic(&[1.5], &f).unwrap(), 0.5);
    }

    #[test]
    fn quantile_sample_ks() {
        // At the (i - 0.5)/n quantiles the step function misses F by exactly 0.5/n.
        let f = CauchyFit {
            x0: -2.0,
            gamma: 0.7,
            n: 0,
        };
        for n in [1usize, 5, 40] {
            let xs: Vec<f64> = (1..=n).map(|i| f.quantile((i as f64 - 0.5) / n as f64)).collect();
            let d = ks_statistic(&xs, &f).unwrap();
            assert!((d - 0.5 / n as f64).abs() < 1e-12, "n={n} d={d}");
        }
    }

    #[test]
    fn coverage_edges() {
        let f = CauchyFit {
            x0: 0.0,
            gamma: 1.0,
            n: 0,
        };
        assert_eq!(coverage(&[0.0; 5], &f, 0.95).unwrap(), 1.0);
        assert_eq!(coverage(&[0.5, -0.5, 3.0], &f, 1e-9).unwrap(), 0.0);
        let hw = f.half_width(0.95);
        assert!((hw - 12.706204736174707).abs() < 1e-9);
        assert_eq!(coverage(&[hw, -hw, hw * 1.0001], &f, 0.95).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn empty_corpus_csv_has_header() {
        let mut out = Vec::new();
        write_corpus_csv(&[], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap().trim(),
            "path,x0,gamma,D_n,coverage_95,n_samples,status"
        );
    }

    proptest! {
        #[test]
        fn fit_is_permutation_invariant_and_affine_equivariant(
            mut xs in prop::collection::vec(-1e3f64..1e3, 4..60),
            a in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
            b in -100.0f64..100.0,
        ) {
            let f = fit_cauchy(&xs).unwrap();
            xs.reverse();
            xs.rotate_left(1);
            prop_assert_eq!(fit_cauchy(&xs).unwrap(), f);
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let g = fit_cauchy(&ys).unwrap();
            let tol = 1e-9 * (1.0 + f.x0.abs() + f.gamma + b.abs()) * a.abs().max(1.0);
            prop_assert!((g.x0 - (a * f.x0 + b)).abs() < tol);
            prop_assert!((g.gamma - a.abs() * f.gamma).abs() < tol);
        }

        #[test]
        fn ks_in_unit_interval(xs in prop::collection::vec(-1e6f64..1e6, 1..50), x0 in -10.0f64..10.0, g in 0.01f64..100.0) {
            let d = ks_statistic(&xs, &CauchyFit { x0, gamma: g, n: xs.len() }).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
