//! End-to-end transform: STFT and lift, Wilson-Cowan processing, projection
//! and inverse STFT.

use serde::{Deserialize, Serialize};

use crate::chirpstats::{CauchyFit, QUANTILE_CONVENTION};
use crate::error::{Error, Result};
use crate::kernel::{discretize, Axis, KernelDiagnostics, KernelParams};
use crate::lift::{
    build_nu_grid, chirpiness_field, lift, project, ChirpinessField, DEFAULT_ETA, DEFAULT_N_NU, DEFAULT_P,
};
use crate::signal::Signal;
use crate::tfr::{Spectrogram, Stft, StftConfig, WindowKind};
use crate::wc::{solve, WcParams};

/// Analysis settings; unset sizes follow [`StftConfig::for_sample_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct StftSettings {
    pub window_size: Option<usize>,
    pub hop: Option<usize>,
    pub window_kind: WindowKind,
}

impl StftSettings {
    pub fn resolve(&self, sample_rate: f64) -> Result<StftConfig> {
        let base = StftConfig::for_sample_rate(sample_rate);
        let window_size = self.window_size.unwrap_or(base.window_size);
        let hop = self.hop.unwrap_or((window_size / 4).max(1));
        StftConfig::new(window_size, hop, self.window_kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiftSettings {
    pub eta: f64,
    pub p_value: f64,
    pub n_nu: usize,
}

impl Default for LiftSettings {
    fn default() -> Self {
        LiftSettings {
            eta: DEFAULT_ETA,
            p_value: DEFAULT_P,
            n_nu: DEFAULT_N_NU,
        }
    }
}

/// Kernel settings. `delta` defaults to the interaction delay; `b` defaults to
/// the value that makes the chirpiness spread over one kernel time,
/// `sqrt(2 b δ)`, equal to two grid steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSettings {
    pub delta: Option<f64>,
    pub b: Option<f64>,
}

/// Wilson-Cowan settings; `delay` defaults to one frame hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WcSettings {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub delay: Option<f64>,
    pub substeps: usize,
}

impl Default for WcSettings {
    fn default() -> Self {
        let d = WcParams::with_defaults(1.0);
        WcSettings {
            alpha: d.alpha,
            beta: d.beta,
            gamma: d.gamma,
            kappa: d.kappa,
            delay: None,
            substeps: d.substeps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub stft: StftSettings,
    #[serde(default)]
    pub lift: LiftSettings,
    #[serde(default)]
    pub kernel: KernelSettings,
    #[serde(default)]
    pub wc: WcSettings,
    /// 0 = plain analysis/synthesis round trip, 1 = fully processed output.
    #[serde(default = "default_mix")]
    pub mix: f64,
}

fn default_mix() -> f64 {
    1.0
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stft: StftSettings::default(),
            lift: LiftSettings::default(),
            kernel: KernelSettings::default(),
            wc: WcSettings::default(),
            mix: 1.0,
        }
    }
}

/// Parameters actually used for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveParams {
    pub stft: StftConfig,
    pub lift: LiftSettings,
    pub kernel: Option<KernelParams>,
    pub wc: WcParams,
    pub mix: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSummary {
    pub x0: f64,
    pub half_width: f64,
    pub step: f64,
    pub n_nu: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub sample_rate: f64,
    pub input_len: usize,
    pub output_len: usize,
    pub pad_front: usize,
    pub pad_back: usize,
    pub n_frames: usize,
    pub n_bins: usize,
    /// True when the input spectrogram is identically zero; nothing is fitted.
    pub silent: bool,
    pub effective: EffectiveParams,
    pub quantile_convention: &'static str,
    pub fit: Option<CauchyFit>,
    pub grid: Option<GridSummary>,
    pub unmasked: usize,
    pub masked_fraction: f64,
    pub kernel: Option<KernelDiagnostics>,
    /// Least-squares gain `g` in `output ≈ g * input`.
    pub gain_estimate: f64,
}

/// Output signal plus the intermediate products a caller may want to dump.
#[derive(Debug, Clone)]
pub struct Processed {
    pub signal: Signal,
    pub report: RunReport,
    /// Spectrogram of the padded input.
    pub spectrogram: Spectrogram,
    pub chirpiness: ChirpinessField,
    /// `(t, Σ|a|²)` per frame.
    pub energy: Vec<(f64, f64)>,
}

fn padding(len: usize, cfg: &StftConfig) -> (usize, usize) {
    let (n, hop) = (cfg.window_size, cfg.hop);
    let front = n.div_ceil(hop) * hop;
    let mut back = n;
    while !(front + len + back - n).is_multiple_of(hop) {
        back += 1;
    }
    (front, back)
}

fn gain(output: &[f64], input: &[f64]) -> f64 {
    let ss: f64 = input.iter().map(|v| v * v).sum();
    if ss == 0.0 {
        return 0.0;
    }
    output.iter().zip(input).map(|(o, i)| o * i).sum::<f64>() / ss
}

/// Resolves per-signal defaults that do not depend on the chirpiness grid.
pub fn resolve_wc(config: &PipelineConfig, hop_time: f64) -> WcParams {
    let w = &config.wc;
    WcParams {
        alpha: w.alpha,
        beta: w.beta,
        gamma: w.gamma,
        kappa: w.kappa,
        delta: w.delay.unwrap_or(hop_time),
        substeps: w.substeps,
    }
}

/// Runs the full transform and returns the processed signal with its report.
///
/// The input is zero-padded by at least one window on each side so every
/// output sample lies in the fully overlapped part of the synthesis; the
/// output is cropped back to the input length.
pub fn process(signal: &Signal, config: &PipelineConfig) -> Result<Processed> {
    if !(0.0..=1.0).contains(&config.mix) {
        return Err(Error::config(
            "pipeline",
            format!("mix must lie in [0, 1], got {}", config.mix),
        ));
    }
    let stft_cfg = config.stft.resolve(signal.sample_rate())?;
    let n = stft_cfg.window_size;
    if signal.len() < 4 * n {
        return Err(Error::domain(
            "pipeline",
            format!(
                "signal of {} samples is shorter than four analysis windows ({} samples)",
                signal.len(),
                4 * n
            ),
        ));
    }
    let hop_time = stft_cfg.hop as f64 / signal.sample_rate();
    let wc = resolve_wc(config, hop_time);
    wc.validate(hop_time)?;

    let (front, back) = padding(signal.len(), &stft_cfg);
    let mut padded = vec![0.0; front];
    padded.extend_from_slice(signal.samples());
    padded.resize(front + signal.len() + back, 0.0);
    let padded = Signal::new(padded, signal.sample_rate())?;

    let engine = Stft::new(stft_cfg)?;
    let spec = engine.forward(&padded)?;
    let field = chirpiness_field(&spec, config.lift.eta)?;
    let crop = |s: Signal| -> Result<Signal> {
        Signal::new(s.samples()[front..front + signal.len()].to_vec(), s.sample_rate())
    };

    let mut report = RunReport {
        sample_rate: signal.sample_rate(),
        input_len: signal.len(),
        output_len: signal.len(),
        pad_front: front,
        pad_back: back,
        n_frames: spec.n_frames(),
        n_bins: spec.n_bins(),
        silent: false,
        effective: EffectiveParams {
            stft: stft_cfg,
            lift: config.lift,
            kernel: None,
            wc,
            mix: config.mix,
        },
        quantile_convention: QUANTILE_CONVENTION,
        fit: None,
        grid: None,
        unmasked: field.unmasked_values().len(),
        masked_fraction: field.masked_fraction(),
        kernel: None,
        gain_estimate: 0.0,
    };

    if spec.values().iter().all(|v| v.re == 0.0 && v.im == 0.0) {
        report.silent = true;
        return Ok(Processed {
            signal: Signal::zeros(signal.len(), signal.sample_rate())?,
            report,
            spectrogram: spec,
            chirpiness: field,
            energy: Vec::new(),
        });
    }

    let grid = build_nu_grid(&field, config.lift.p_value, config.lift.n_nu).map_err(|e| match e {
        Error::Domain { msg, .. } => Error::domain("pipeline", format!("chirpiness grid could not be fitted: {msg}")),
        other => other,
    })?;
    let lifted = lift(&spec, &field, &grid)?;

    let kernel_delta = config.kernel.delta.unwrap_or(wc.delta);
    let b = config
        .kernel
        .b
        .unwrap_or(2.0 * grid.step() * grid.step() / kernel_delta);
    let kparams = KernelParams::new(kernel_delta, b)?;
    let op = discretize(
        Axis::from_points(&spec.bin_freqs())?,
        Axis::from_points(grid.centers())?,
        kparams,
    )?;
    let solution = solve(&lifted, &wc, &op)?;
    let processed = crop(engine.inverse(&project(&solution.activation)?)?)?;

    let out = if config.mix == 1.0 {
        processed
    } else {
        let dry = crop(engine.inverse(&spec)?)?;
        let m = config.mix;
        let mixed = processed
            .samples()
            .iter()
            .zip(dry.samples())
            .map(|(p, d)| m * p + (1.0 - m) * d)
            .collect();
        Signal::new(mixed, signal.sample_rate())?
    };

    report.effective.kernel = Some(kparams);
    report.fit = Some(grid.fit());
    report.grid = Some(GridSummary {
        x0: grid.fit().x0,
        half_width: grid.half_width(),
        step: grid.step(),
        n_nu: grid.len(),
    });
    report.kernel = Some(op.diagnostics().clone());
    report.gain_estimate = gain(out.samples(), signal.samples());
    Ok(Processed {
        signal: out,
        report,
        spectrogram: spec,
        chirpiness: field,
        energy: solution.energy,
    })
}
