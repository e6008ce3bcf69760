//! Chirpiness field, bounded chirpiness grid, and the lift of a spectrogram
//! into the (time, frequency, chirpiness) space.
//!
//! Chirpiness at `(τ, ω)` is the slope `ν` of the level line of `|S|` through
//! that point: `ν ∂_ω|S| + ∂_τ|S| = 0`. Where `∂_ω|S|` vanishes the slope is
//! unbounded, so those entries are masked. The unbounded axis is truncated to
//! the central interval of a Cauchy law fitted to the unmasked slopes.

use serde::{Deserialize, Serialize};

use crate::chirpstats::{fit_cauchy, CauchyFit};
use crate::error::{Error, Result};
use crate::tfr::{Spectrogram, StftConfig};
use crate::C64;

/// Default relative threshold below which `∂_ω|S|` counts as zero.
pub const DEFAULT_ETA: f64 = 1e-8;
/// Default confidence level of the chirpiness interval.
pub const DEFAULT_P: f64 = 0.95;
/// Default number of chirpiness slots.
pub const DEFAULT_N_NU: usize = 41;
/// Minimum unmasked entries required to fit a grid.
pub const MIN_GRID_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ChirpinessField {
    n_frames: usize,
    n_bins: usize,
    nu: Vec<f64>,
    mask: Vec<bool>,
    grad_tau: Vec<f64>,
    grad_omega: Vec<f64>,
}

impl ChirpinessField {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Chirpiness in Hz/s, `None` where masked.
    pub fn nu(&self, frame: usize, bin: usize) -> Option<f64> {
        let k = frame * self.n_bins + bin;
        (!self.mask[k]).then_some(self.nu[k])
    }

    pub fn is_masked(&self, frame: usize, bin: usize) -> bool {
        self.mask[frame * self.n_bins + bin]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// `∂_τ|S|` in magnitude units per second.
    pub fn grad_tau(&self) -> &[f64] {
        &self.grad_tau
    }

    /// `∂_ω|S|` in magnitude units per Hz.
    pub fn grad_omega(&self) -> &[f64] {
        &self.grad_omega
    }

    pub fn unmasked_values(&self) -> Vec<f64> {
        self.nu
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| !m)
            .map(|(&v, _)| v)
            .collect()
    }

    pub fn masked_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }

    /// Writes `frame_time,bin_freq,nu,masked` rows; masked entries have an empty `nu`.
    pub fn write_csv<W: std::io::Write>(&self, spec: &Spectrogram, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::domain("lift", format!("CSV write failed: {e}"));
        w.write_record(["frame_time", "bin_freq", "nu", "masked"])
            .map_err(err)?;
        let times = spec.frame_times();
        let freqs = spec.bin_freqs();
        for (i, t) in times.iter().enumerate() {
            for (j, f) in freqs.iter().enumerate() {
                let nu = self.nu(i, j).map(|v| v.to_string()).unwrap_or_default();
                let masked = if self.is_masked(i, j) { "1" } else { "0" };
                w.write_record([t.to_string(), f.to_string(), nu, masked.to_string()])
                    .map_err(err)?;
            }
        }
        w.flush()
            .map_err(|e| Error::domain("lift", format!("CSV write failed: {e}")))
    }
}

/// Relative size, against the peak magnitude, of a one-step change in `|S|`
/// that is indistinguishable from FFT rounding. Smaller gradients are
/// flushed to exactly zero so stationary input yields exactly zero chirpiness.
pub const ROUNDING_FLOOR: f64 = 1e-11;

/// Time derivative of `|S|` along frames: fourth-order central differences
/// in the interior, second-order next to the ends, one-sided at the ends.
fn time_derivative(mag: &[f64], nf: usize, nb: usize, step: f64, k: usize) -> f64 {
    let (i, j) = (k / nb, k % nb);
    let v = |f: usize| mag[f * nb + j];
    if i == 0 {
        (v(1) - v(0)) / step
    } else if i == nf - 1 {
        (v(nf - 1) - v(nf - 2)) / step
    } else if i == 1 || i == nf - 2 {
        (v(i + 1) - v(i - 1)) / (2.0 * step)
    } else {
        (8.0 * (v(i + 1) - v(i - 1)) - (v(i + 2) - v(i - 2))) / (12.0 * step)
    }
}

/// Frequency derivative of `|S|` at the bin centres, exact for the
/// band-limited interpolation of each frame: the frame spectrum is the DTFT
/// of an `N`-sample windowed segment, so `∂_ω S` is the DFT of the segment
/// multiplied by `-2πi t`.
fn frequency_derivative(spec: &Spectrogram) -> Vec<f64> {
    let cfg = spec.config();
    let (n, nb, hop) = (cfg.window_size, spec.n_bins(), cfg.hop);
    let sr = spec.sample_rate();
    let mut planner = realfft::RealFftPlanner::<f64>::new();
    let inverse = planner.plan_fft_inverse(n);
    let forward = planner.plan_fft_forward(n);
    let mut half = inverse.make_input_vec();
    let mut segment = inverse.make_output_vec();
    let mut spectrum = forward.make_output_vec();
    let mut out = vec![0.0; spec.values().len()];
    for i in 0..spec.n_frames() {
        // undo the absolute-time phase reference of frame i
        let shift = (i * hop) % n;
        let row = spec.frame(i);
        for (j, (h, s)) in half.iter_mut().zip(row).enumerate() {
            let turns = ((shift * j) % n) as f64 / n as f64;
            *h = s * C64::from_polar(1.0, 2.0 * std::f64::consts::PI * turns);
        }
        half[0].im = 0.0;
        half[nb - 1].im = 0.0;
        let local = half.clone();
        inverse
            .process(&mut half, &mut segment)
            .expect("buffers sized by the plan");
        for (m, v) in segment.iter_mut().enumerate() {
            *v *= (m as f64 - (n / 2) as f64) / n as f64;
        }
        forward
            .process(&mut segment, &mut spectrum)
            .expect("buffers sized by the plan");
        let scale = -2.0 * std::f64::consts::PI / sr;
        for (j, (f, g)) in local.iter().zip(&spectrum).enumerate() {
            let r = f.norm();
            out[i * nb + j] = if r > 0.0 {
                (f.conj() * C64::new(0.0, scale) * g).re / r
            } else {
                0.0
            };
        }
    }
    out
}

/// Computes `ν = -∂_τ|S| / ∂_ω|S|` with derivatives in physical units (s, Hz).
///
/// Entries where `|∂_ω|S|| <= eta * max |∂_ω|S||` are masked.
pub fn chirpiness_field(spec: &Spectrogram, eta: f64) -> Result<ChirpinessField> {
    let (nf, nb) = (spec.n_frames(), spec.n_bins());
    if nf < 3 || nb < 3 {
        return Err(Error::domain(
            "lift",
            format!("chirpiness needs at least 3 frames and 3 bins, got {nf} x {nb}"),
        ));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::domain(
            "lift",
            format!("mask threshold must be non-negative, got {eta}"),
        ));
    }
    let mag = spec.magnitude();
    let (dt, dw) = (spec.hop_time(), spec.bin_width());
    let floor = ROUNDING_FLOOR * mag.iter().fold(0.0f64, |m, v| m.max(*v));
    let flush = |g: f64, step: f64| if g.abs() * step <= floor { 0.0 } else { g };
    let grad_tau: Vec<f64> = (0..nf * nb)
        .map(|k| flush(time_derivative(&mag, nf, nb, dt, k), dt))
        .collect();
    let grad_omega: Vec<f64> = frequency_derivative(spec).into_iter().map(|g| flush(g, dw)).collect();
    let max_go = grad_omega.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = eta * max_go;
    let mask: Vec<bool> = grad_omega.iter().map(|g| *g == 0.0 || g.abs() <= threshold).collect();
    let nu = grad_tau
        .iter()
        .zip(&grad_omega)
        .zip(&mask)
        .map(|((gt, go), &m)| if m { f64::NAN } else { -gt / go })
        .collect();
    Ok(ChirpinessField {
        n_frames: nf,
        n_bins: nb,
        nu,
        mask,
        grad_tau,
        grad_omega,
    })
}

/// Uniform chirpiness grid spanning the central interval of a Cauchy fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuGrid {
    centers: Vec<f64>,
    half_width: f64,
    p_value: f64,
    fit: CauchyFit,
}

impl NuGrid {
    /// Grid of `n_nu` points spanning `I_p` of `fit`.
    pub fn from_fit(fit: CauchyFit, p: f64, n_nu: usize) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain("lift", format!("confidence level {p} outside (0, 1)")));
        }
        if n_nu < 3 || n_nu.is_multiple_of(2) {
            return Err(Error::domain(
                "lift",
                format!("grid size must be odd and >= 3, got {n_nu}"),
            ));
        }
        if !(fit.gamma > 0.0 && fit.gamma.is_finite()) {
            return Err(Error::domain(
                "lift",
                format!(
                    "degenerate scale: chirpiness values have zero spread (gamma = {}); \
                     the input looks like a pure stationary tone",
                    fit.gamma
                ),
            ));
        }
        let half_width = fit.half_width(p);
        let c = (n_nu - 1) / 2;
        let step = half_width / c as f64;
        // Built as x0 ± k*step so the grid is exactly symmetric about x0.
        let centers = (0..n_nu)
            .map(|q| {
                let k = q as f64 - c as f64;
                fit.x0 + k * step
            })
            .collect();
        Ok(NuGrid {
            centers,
            half_width,
            p_value: p,
            fit,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.half_width / self.center_slot() as f64
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn p_value(&self) -> f64 {
        self.p_value
    }

    pub fn fit(&self) -> CauchyFit {
        self.fit
    }

    /// Slot holding `ν = x0`.
    pub fn center_slot(&self) -> usize {
        (self.centers.len() - 1) / 2
    }

    /// Nearest slot; values outside the interval go to the boundary slot.
    pub fn slot(&self, nu: f64) -> usize {
        let c = self.center_slot() as f64;
        let q = ((nu - self.fit.x0) / self.step() + c).round();
        q.clamp(0.0, (self.centers.len() - 1) as f64) as usize
    }
}

/// Fits a Cauchy law to the unmasked chirpiness values and builds the grid over `I_p`.
pub fn build_nu_grid(field: &ChirpinessField, p: f64, n_nu: usize) -> Result<NuGrid> {
    let values = field.unmasked_values();
    if values.len() < MIN_GRID_SAMPLES {
        return Err(Error::domain(
            "lift",
            format!(
                "only {} unmasked chirpiness values (need {MIN_GRID_SAMPLES}); use a longer or richer signal",
                values.len()
            ),
        ));
    }
    let fit = fit_cauchy(&values)?;
    NuGrid::from_fit(fit, p, n_nu)
}

/// How [`project`] integrates over the chirpiness axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Values are point masses per slot; projection is a plain sum.
    Sum,
    /// Values are densities in ν; projection multiplies the sum by the grid step.
    Density,
}

/// Complex field over `(τ, ω, ν)`. Storage is `[frame][nu][bin]`, so each
/// frame is a contiguous `(ν, ω)` plane with `ω` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedImage {
    values: Vec<C64>,
    n_frames: usize,
    n_bins: usize,
    grid: NuGrid,
    mode: ProjectionMode,
    sample_rate: f64,
    stft: StftConfig,
    signal_len: usize,
}

impl LiftedImage {
    /// All-zero image with the axes of `spec` and `grid`.
    pub fn zeros(spec: &Spectrogram, grid: NuGrid, mode: ProjectionMode) -> Self {
        let n = spec.n_frames() * spec.n_bins() * grid.len();
        LiftedImage {
            values: vec![C64::new(0.0, 0.0); n],
            n_frames: spec.n_frames(),
            n_bins: spec.n_bins(),
            grid,
            mode,
            sample_rate: spec.sample_rate(),
            stft: spec.config(),
            signal_len: spec.signal_len(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        LiftedImage {
            values: vec![C64::new(0.0, 0.0); self.values.len()],
            grid: self.grid.clone(),
            ..*self
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_nu(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &NuGrid {
        &self.grid
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn stft_config(&self) -> StftConfig {
        self.stft
    }

    pub fn hop_time(&self) -> f64 {
        self.stft.hop as f64 / self.sample_rate
    }

    pub fn bin_freqs(&self) -> Vec<f64> {
        let w = self.sample_rate / self.stft.window_size as f64;
        (0..self.n_bins).map(|j| j as f64 * w).collect()
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.n_frames).map(|i| i as f64 * self.hop_time()).collect()
    }

    fn index(&self, frame: usize, bin: usize, nu: usize) -> usize {
        (frame * self.grid.len() + nu) * self.n_bins + bin
    }

    pub fn get(&self, frame: usize, bin: usize, nu: usize) -> C64 {
        self.values[self.index(frame, bin, nu)]
    }

    pub fn set(&mut self, frame: usize, bin: usize, nu: usize, v: C64) {
        let k = self.index(frame, bin, nu);
        self.values[k] = v;
    }

    /// One `(ν, ω)` plane, `ω` fastest.
    pub fn frame(&self, frame: usize) -> &[C64] {
        let plane = self.grid.len() * self.n_bins;
        &self.values[frame * plane..(frame + 1) * plane]
    }

    pub fn frame_mut(&mut self, frame: usize) -> &mut [C64] {
        let plane = self.grid.len() * self.n_bins;
        &mut self.values[frame * plane..(frame + 1) * plane]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }
}

/// Places each `S(τ, ω)` in the single chirpiness slot nearest to `ν(τ, ω)`.
///
/// Out-of-interval chirpiness goes to the boundary slot and masked entries to
/// the center slot (`ν = x0`), so every entry lands somewhere and
/// [`project`] inverts the lift exactly.
pub fn lift(spec: &Spectrogram, field: &ChirpinessField, grid: &NuGrid) -> Result<LiftedImage> {
    if field.n_frames() != spec.n_frames() || field.n_bins() != spec.n_bins() {
        return Err(Error::domain(
            "lift",
            format!(
                "chirpiness field {}x{} does not match spectrogram {}x{}",
                field.n_frames(),
                field.n_bins(),
                spec.n_frames(),
                spec.n_bins()
            ),
        ));
    }
    let mut img = LiftedImage::zeros(spec, grid.clone(), ProjectionMode::Sum);
    for i in 0..spec.n_frames() {
        for j in 0..spec.n_bins() {
            let q = match field.nu(i, j) {
                Some(nu) => grid.slot(nu),
                None => grid.center_slot(),
            };
            img.set(i, j, q, spec.get(i, j));
        }
    }
    Ok(img)
}

/// Integrates over the chirpiness axis, returning a spectrogram with the source axes.
pub fn project(img: &LiftedImage) -> Result<Spectrogram> {
    let scale = match img.mode {
        ProjectionMode::Sum => 1.0,
        ProjectionMode::Density => img.grid.step(),
    };
    let (nb, nn) = (img.n_bins, img.grid.len());
    let mut out = vec![C64::new(0.0, 0.0); img.n_frames * nb];
    for i in 0..img.n_frames {
        let plane = img.frame(i);
        let row = &mut out[i * nb..(i + 1) * nb];
        for q in 0..nn {
            for (o, v) in row.iter_mut().zip(&plane[q * nb..(q + 1) * nb]) {
                *o += v;
            }
        }
        if scale != 1.0 {
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Spectrogram::from_parts(out, img.n_frames, img.sample_rate, img.stft, img.signal_len)
}

/// Returns a copy of `img` whose values are interpreted with `mode`.
pub fn with_mode(img: &LiftedImage, mode: ProjectionMode) -> LiftedImage {
    LiftedImage { mode, ..img.clone() }
}
