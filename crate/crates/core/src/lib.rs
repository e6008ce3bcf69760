//! Auditory-cortex inspired sound processing.
//!
//! A signal is analysed with a short-time Fourier transform, lifted into a
//! time/frequency/chirpiness space, evolved by delayed Wilson-Cowan dynamics
//! whose lateral interactions follow the heat kernel of a Kolmogorov
//! operator, and projected back to a signal.
//!
//! ```no_run
//! use corti::{gen_sine, process, PipelineConfig};
//!
//! let s = gen_sine(440.0, 1.0, 8000.0, 0.5).unwrap();
//! let out = process(&s, &PipelineConfig::default()).unwrap();
//! println!("gain {}", out.report.gain_estimate);
//! ```

mod error;

pub mod chirpstats;
pub mod experiments;
pub mod kernel;
pub mod lift;
pub mod pipeline;
pub mod signal;
pub mod tfr;
pub mod wc;

pub use realfft::num_complex;

pub type C64 = num_complex::Complex<f64>;

pub use chirpstats::{corpus_summary, fit_cauchy, goodness, ks_statistic, CauchyFit, GoodnessReport};
pub use error::{Error, Result};
pub use experiments::{default_eps_grid, denoise_sweep, metric_l1, metric_std, SweepResult, SweepRow};
pub use kernel::{discretize, kolmogorov_density, mc_oracle, Axis, KernelOperator, KernelParams};
pub use lift::{build_nu_grid, chirpiness_field, lift, project, ChirpinessField, LiftedImage, NuGrid, ProjectionMode};
pub use pipeline::{process, PipelineConfig, Processed, RunReport};
pub use signal::{add_noise, gen_chirp, gen_sine, gen_vowel, Signal};
pub use signal::{read_wav, write_wav, BitDepth};
pub use tfr::{istft, stft, Spectrogram, Stft, StftConfig, WindowKind};
pub use wc::{solve, WcParams, WcSolution};
