//! Sampled real waveforms: WAV I/O, synthetic test signals and noise injection.

mod wav;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use wav::{encode_wav, parse_wav, read_wav, write_wav, BitDepth, WriteReport};

use crate::error::{Error, Result};

/// Name of the generator behind [`add_noise`], recorded in experiment output.
pub const NOISE_RNG: &str = "ChaCha8Rng(seed_from_u64) + rand_distr::Normal";

/// A mono, real-valued sampled waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::domain(
                "signal",
                format!("sample rate must be positive, got {sample_rate}"),
            ));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain("signal", format!("sample {i} is not finite")));
        }
        Ok(Signal { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self> {
        Signal::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn scaled(&self, c: f64) -> Signal {
        Signal {
            samples: self.samples.iter().map(|v| v * c).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

fn sample_count(duration: f64, sample_rate: f64) -> Result<usize> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::domain(
            "signal",
            format!("duration must be positive, got {duration}"),
        ));
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::domain(
            "signal",
            format!("sample rate must be positive, got {sample_rate}"),
        ));
    }
    Ok((duration * sample_rate).round() as usize)
}

/// Linear chirp phase in cycles; with `rate == 0` this is exactly `f0 * t`.
fn chirp_cycles(f0: f64, rate: f64, t: f64) -> f64 {
    f0 * t + 0.5 * rate * t * t
}

/// `amplitude * sin(2π freq n / sample_rate)`.
pub fn gen_sine(freq: f64, duration: f64, sample_rate: f64, amplitude: f64) -> Result<Signal> {
    let n = sample_count(duration, sample_rate)?;
    if !(freq > 0.0 && freq < sample_rate / 2.0) {
        return Err(Error::domain(
            "signal",
            format!("sine frequency {freq} Hz outside (0, {}) Hz", sample_rate / 2.0),
        ));
    }
    let samples = (0..n)
        .map(|i| amplitude * (2.0 * PI * chirp_cycles(freq, 0.0, i as f64 / sample_rate)).sin())
        .collect();
    Signal::new(samples, sample_rate)
}

/// Unit-amplitude linear chirp with instantaneous frequency `f0 + rate * t`.
pub fn gen_chirp(f0: f64, rate: f64, duration: f64, sample_rate: f64) -> Result<Signal> {
    let n = sample_count(duration, sample_rate)?;
    let nyq = sample_rate / 2.0;
    let f_end = f0 + rate * duration;
    for f in [f0, f_end] {
        if !(f > 0.0 && f < nyq) {
            return Err(Error::domain(
                "signal",
                format!("chirp frequency {f} Hz leaves the band (0, {nyq}) Hz"),
            ));
        }
    }
    let samples = (0..n)
        .map(|i| (2.0 * PI * chirp_cycles(f0, rate, i as f64 / sample_rate)).sin())
        .collect();
    Signal::new(samples, sample_rate)
}

/// Relative amplitudes of the three partials of [`gen_vowel`].
pub const VOWEL_PARTIALS: [f64; 3] = [1.0, 0.5, 0.25];
/// Vibrato rate of [`gen_vowel`] in Hz.
pub const VOWEL_VIBRATO_RATE: f64 = 5.0;
/// Vibrato depth of [`gen_vowel`] as a fraction of the fundamental.
pub const VOWEL_VIBRATO_DEPTH: f64 = 0.03;

/// Vowel-like test tone: three harmonics of `f0` with a slow sinusoidal vibrato,
/// normalized so that the peak amplitude is at most 1.
pub fn gen_vowel(f0: f64, duration: f64, sample_rate: f64) -> Result<Signal> {
    let n = sample_count(duration, sample_rate)?;
    let top = VOWEL_PARTIALS.len() as f64 * f0 * (1.0 + VOWEL_VIBRATO_DEPTH);
    if !(f0 > 0.0 && top < sample_rate / 2.0) {
        return Err(Error::domain(
            "signal",
            format!("vowel partials up to {top} Hz exceed the Nyquist frequency"),
        ));
    }
    let depth = VOWEL_VIBRATO_DEPTH * f0;
    let norm: f64 = VOWEL_PARTIALS.iter().sum();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            // integral of f0 + depth sin(2π r t)
            let cycles =
                f0 * t + depth * (1.0 - (2.0 * PI * VOWEL_VIBRATO_RATE * t).cos()) / (2.0 * PI * VOWEL_VIBRATO_RATE);
            VOWEL_PARTIALS
                .iter()
                .enumerate()
                .map(|(h, a)| a * (2.0 * PI * (h + 1) as f64 * cycles).sin())
                .sum::<f64>()
                / norm
        })
        .collect();
    Signal::new(samples, sample_rate)
}

/// Adds i.i.d. Gaussian noise of standard deviation `eps`, drawn deterministically from `seed`.
pub fn add_noise(signal: &Signal, eps: f64, seed: u64) -> Result<Signal> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::domain(
            "signal",
            format!("noise level must be non-negative, got {eps}"),
        ));
    }
    if eps == 0.0 {
        return Ok(signal.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, eps).expect("finite positive std");
    let samples = signal.samples.iter().map(|v| v + normal.sample(&mut rng)).collect();
    Signal::new(samples, signal.sample_rate)
}
