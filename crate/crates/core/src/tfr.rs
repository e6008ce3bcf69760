//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frame `i` covers samples `[i*hop, i*hop + window_size)` with no pre-padding.
//! Phases are referenced to absolute sample time:
//!
//! ```text
//! S[i][j] = Σ_n s(n) W(n - i*hop) exp(-2πi n j / N)
//! ```
//!
//! This is the conventional forward DFT sign (the conjugate of the `e^{+2πitω}`
//! kernel sometimes written for the continuous transform). Magnitudes are
//! unaffected, and analysis and synthesis use the same convention. With the
//! absolute time reference a stationary partial keeps a slowly varying phase
//! from frame to frame, which is what lets the per-bin dynamics downstream
//! integrate it coherently.
//!
//! Only the non-negative half spectrum is stored; synthesis treats it as
//! Hermitian and writes into a real buffer, so the output is real by
//! construction.

use std::f64::consts::PI;
use std::io::{BufWriter, Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::C64;

const COLA_TOL: f64 = 1e-10;

/// Analysis taper. Both kinds are periodic raised cosines with values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hann,
    Hamming,
}

impl WindowKind {
    pub fn samples(self, n: usize) -> Vec<f64> {
        let (a, b) = match self {
            WindowKind::Hann => (0.5, 0.5),
            WindowKind::Hamming => (0.54, 0.46),
        };
        (0..n).map(|k| a - b * (2.0 * PI * k as f64 / n as f64).cos()).collect()
    }
}

impl std::str::FromStr for WindowKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hann" => Ok(WindowKind::Hann),
            "hamming" => Ok(WindowKind::Hamming),
            other => Err(format!("unknown window '{other}' (expected hann or hamming)")),
        }
    }
}

/// How the synthesis window is derived from the analysis window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Synthesis {
    /// Synthesis window = analysis window / Σ W²; requires constant Σ W² over shifts.
    Weighted,
    /// Rectangular synthesis / Σ W; requires constant Σ W over shifts.
    OverlapAdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop: usize,
    #[serde(default)]
    pub window_kind: WindowKind,
}

/// Periodized overlap sum `Σ_k f(n - k*hop)` for `n` in one hop period.
fn overlap_sum(f: &[f64], hop: usize) -> Vec<f64> {
    let mut acc = vec![0.0; hop];
    for (m, v) in f.iter().enumerate() {
        acc[m % hop] += v;
    }
    acc
}

fn is_flat(v: &[f64]) -> Option<f64> {
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    let min = v.iter().cloned().fold(f64::MAX, f64::min);
    (min > 0.0 && (max - min) <= COLA_TOL * max).then_some(max)
}

impl StftConfig {
    pub fn new(window_size: usize, hop: usize, window_kind: WindowKind) -> Result<Self> {
        let cfg = StftConfig {
            window_size,
            hop,
            window_kind,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 23 ms analysis frame rounded up to a power of two, quarter-window hop, Hann taper.
    pub fn for_sample_rate(sample_rate: f64) -> Self {
        let window_size = ((0.023 * sample_rate).ceil() as usize).max(4).next_power_of_two();
        StftConfig {
            window_size,
            hop: window_size / 4,
            window_kind: WindowKind::Hann,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synthesis().map(|_| ())
    }

    /// Checks the constant-overlap-add property and returns the synthesis
    /// mode together with its normalization constant.
    pub fn synthesis(&self) -> Result<(Synthesis, f64)> {
        if self.window_size < 4 {
            return Err(Error::config("tfr", format!("window size {} < 4", self.window_size)));
        }
        if self.hop == 0 || self.hop > self.window_size {
            return Err(Error::config(
                "tfr",
                format!("hop {} must lie in 1..={}", self.hop, self.window_size),
            ));
        }
        let w = self.window_kind.samples(self.window_size);
        let sq: Vec<f64> = w.iter().map(|v| v * v).collect();
        if let Some(c) = is_flat(&overlap_sum(&sq, self.hop)) {
            return Ok((Synthesis::Weighted, c));
        }
        if let Some(c) = is_flat(&overlap_sum(&w, self.hop)) {
            return Ok((Synthesis::OverlapAdd, c));
        }
        Err(Error::config(
            "tfr",
            format!(
                "{:?} window of {} samples is not constant-overlap-add at hop {}",
                self.window_kind, self.window_size, self.hop
            ),
        ))
    }

    pub fn n_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub fn n_frames(&self, signal_len: usize) -> usize {
        if signal_len < self.window_size {
            0
        } else {
            (signal_len - self.window_size) / self.hop + 1
        }
    }
}

/// Complex half-spectrum time-frequency image `S[frame][bin]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Vec<C64>,
    n_frames: usize,
    n_bins: usize,
    sample_rate: f64,
    config: StftConfig,
    signal_len: usize,
}

impl Spectrogram {
    /// Builds a spectrogram from raw values, validating the axis metadata.
    pub fn from_parts(
        values: Vec<C64>,
        n_frames: usize,
        sample_rate: f64,
        config: StftConfig,
        signal_len: usize,
    ) -> Result<Self> {
        config.validate()?;
        let n_bins = config.n_bins();
        if values.len() != n_frames * n_bins {
            return Err(Error::domain(
                "tfr",
                format!("{} values do not fill {n_frames} frames x {n_bins} bins", values.len()),
            ));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::domain("tfr", format!("invalid sample rate {sample_rate}")));
        }
        if n_frames > 0 && signal_len < (n_frames - 1) * config.hop + config.window_size {
            return Err(Error::domain(
                "tfr",
                format!("signal length {signal_len} shorter than the {n_frames} frames it claims"),
            ));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::domain("tfr", "spectrogram contains non-finite entries"));
        }
        Ok(Spectrogram {
            values,
            n_frames,
            n_bins,
            sample_rate,
            config,
            signal_len,
        })
    }

    /// Same axes, new values.
    pub fn with_values(&self, values: Vec<C64>) -> Result<Self> {
        Spectrogram::from_parts(values, self.n_frames, self.sample_rate, self.config, self.signal_len)
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn get(&self, frame: usize, bin: usize) -> C64 {
        self.values[frame * self.n_bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[C64] {
        &self.values[frame * self.n_bins..(frame + 1) * self.n_bins]
    }

    /// Frame spacing in seconds.
    pub fn hop_time(&self) -> f64 {
        self.config.hop as f64 / self.sample_rate
    }

    /// Bin spacing in Hz.
    pub fn bin_width(&self) -> f64 {
        self.sample_rate / self.config.window_size as f64
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.n_frames).map(|i| i as f64 * self.hop_time()).collect()
    }

    pub fn bin_freqs(&self) -> Vec<f64> {
        (0..self.n_bins).map(|j| j as f64 * self.bin_width()).collect()
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Writes `frame_time,bin_freq,re,im` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::domain("tfr", format!("CSV write failed: {e}"));
        w.write_record(["frame_time", "bin_freq", "re", "im"]).map_err(err)?;
        let times = self.frame_times();
        let freqs = self.bin_freqs();
        for (i, t) in times.iter().enumerate() {
            for (j, f) in freqs.iter().enumerate() {
                let v = self.get(i, j);
                w.write_record(&[t.to_string(), f.to_string(), v.re.to_string(), v.im.to_string()])
                    .map_err(err)?;
            }
        }
        w.flush()
            .map_err(|e| Error::domain("tfr", format!("CSV write failed: {e}")))
    }

    /// Compact binary dump, all little-endian:
    ///
    /// | bytes | content |
    /// |-------|---------|
    /// | 8     | magic `CORTISPC` |
    /// | 4     | format version (u32, = 1) |
    /// | 4     | dtype tag (u32, 1 = complex f64 as `re, im` pairs) |
    /// | 8     | n_frames (u64) |
    /// | 8     | n_bins (u64) |
    /// | 8     | window_size (u64) |
    /// | 8     | hop (u64) |
    /// | 8     | signal_len (u64) |
    /// | 8     | sample_rate (f64) |
    /// | 16·n  | values, row-major `[frame][bin]` |
    pub fn write_binary<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(out);
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&1u32.to_le_bytes())?;
        for v in [
            self.n_frames,
            self.n_bins,
            self.config.window_size,
            self.config.hop,
            self.signal_len,
        ] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.sample_rate.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        w.flush()
    }

    /// Reads the layout produced by [`Spectrogram::write_binary`]. The window
    /// kind is not stored and is assumed to be Hann.
    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::domain("tfr", format!("binary read failed: {e}")))?;
        let bad = |msg: &str| Error::domain("tfr", format!("bad spectrogram dump: {msg}"));
        if bytes.len() < 64 || &bytes[..8] != BINARY_MAGIC {
            return Err(bad("missing header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
        if u32_at(8) != 1 || u32_at(12) != 1 {
            return Err(bad("unsupported version or dtype"));
        }
        let (n_frames, n_bins, window_size, hop, signal_len) =
            (u64_at(16), u64_at(24), u64_at(32), u64_at(40), u64_at(48));
        let sample_rate = f64::from_le_bytes(bytes[56..64].try_into().unwrap());
        let body = &bytes[64..];
        if body.len() != n_frames * n_bins * 16 {
            return Err(bad("payload size does not match header"));
        }
        let values = body
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        let config = StftConfig::new(window_size, hop, WindowKind::Hann)?;
        if config.n_bins() != n_bins {
            return Err(bad("bin count inconsistent with window size"));
        }
        Spectrogram::from_parts(values, n_frames, sample_rate, config, signal_len)
    }
}

const BINARY_MAGIC: &[u8; 8] = b"CORTISPC";

/// Reusable forward/inverse transform state for one configuration.
pub struct Stft {
    config: StftConfig,
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
    mode: Synthesis,
    /// `exp(-2πi k/N)` for k in 0..N
    twiddle: Vec<C64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        let (mode, c) = config.synthesis()?;
        let n = config.window_size;
        let analysis = config.window_kind.samples(n);
        let synthesis = match mode {
            Synthesis::Weighted => analysis.iter().map(|w| w / c).collect(),
            Synthesis::OverlapAdd => vec![1.0 / c; n],
        };
        let twiddle = (0..n)
            .map(|k| C64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Stft {
            config,
            analysis,
            synthesis,
            mode,
            twiddle,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn synthesis_mode(&self) -> Synthesis {
        self.mode
    }

    pub fn analysis_window(&self) -> &[f64] {
        &self.analysis
    }

    fn phase_index(&self, frame: usize, bin: usize) -> usize {
        let n = self.config.window_size;
        ((frame * self.config.hop) % n * bin) % n
    }

    pub fn forward(&self, signal: &Signal) -> Result<Spectrogram> {
        let n = self.config.window_size;
        let hop = self.config.hop;
        let s = signal.samples();
        if s.len() < n {
            return Err(Error::domain(
                "tfr",
                format!("signal of {} samples is shorter than one window ({n})", s.len()),
            ));
        }
        let n_frames = self.config.n_frames(s.len());
        let n_bins = self.config.n_bins();
        let mut values = vec![C64::new(0.0, 0.0); n_frames * n_bins];
        values.par_chunks_mut(n_bins).enumerate().for_each_init(
            || (self.forward.make_input_vec(), self.forward.make_scratch_vec()),
            |(buf, scratch), (i, row)| {
                let start = i * hop;
                for (m, b) in buf.iter_mut().enumerate() {
                    *b = s[start + m] * self.analysis[m];
                }
                self.forward
                    .process_with_scratch(buf, row, scratch)
                    .expect("buffer sizes match the plan");
                for (j, v) in row.iter_mut().enumerate() {
                    *v *= self.twiddle[self.phase_index(i, j)];
                }
            },
        );
        Spectrogram::from_parts(values, n_frames, signal.sample_rate(), self.config, s.len())
    }

    pub fn inverse(&self, spec: &Spectrogram) -> Result<Signal> {
        if spec.config().window_size != self.config.window_size || spec.config().hop != self.config.hop {
            return Err(Error::domain(
                "tfr",
                "spectrogram axes do not match the transform configuration",
            ));
        }
        let n = self.config.window_size;
        let hop = self.config.hop;
        let n_bins = spec.n_bins();
        let frames: Vec<Vec<f64>> = (0..spec.n_frames())
            .into_par_iter()
            .map_init(
                || (self.inverse.make_input_vec(), self.inverse.make_scratch_vec()),
                |(buf, scratch), i| {
                    for (j, b) in buf.iter_mut().enumerate() {
                        *b = spec.get(i, j) * self.twiddle[self.phase_index(i, j)].conj();
                    }
                    // Hermitian half spectrum: DC (and Nyquist for even N) are real.
                    buf[0].im = 0.0;
                    if n.is_multiple_of(2) {
                        buf[n_bins - 1].im = 0.0;
                    }
                    let mut out = vec![0.0; n];
                    self.inverse
                        .process_with_scratch(buf, &mut out, scratch)
                        .expect("buffer sizes match the plan");
                    let scale = 1.0 / n as f64;
                    for (o, w) in out.iter_mut().zip(&self.synthesis) {
                        *o *= scale * w;
                    }
                    out
                },
            )
            .collect();
        let mut out = vec![0.0; spec.signal_len()];
        for (i, frame) in frames.iter().enumerate() {
            for (o, v) in out[i * hop..i * hop + n].iter_mut().zip(frame) {
                *o += v;
            }
        }
        Signal::new(out, spec.sample_rate())
    }
}

/// One-shot forward transform.
pub fn stft(signal: &Signal, config: StftConfig) -> Result<Spectrogram> {
    Stft::new(config)?.forward(signal)
}

/// One-shot inverse transform; the output has the length recorded in `spec`.
pub fn istft(spec: &Spectrogram) -> Result<Signal> {
    Stft::new(spec.config())?.inverse(spec)
}
