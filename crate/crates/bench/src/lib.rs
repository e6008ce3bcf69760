//! Inputs shared by the stage benchmarks: one second of vowel-like sound at
//! 8 kHz carried through each stage up to the point a benchmark measures.

use corti::kernel::{discretize, Axis, KernelOperator, KernelParams};
use corti::lift::{build_nu_grid, chirpiness_field, lift, ChirpinessField, LiftedImage, DEFAULT_ETA, DEFAULT_N_NU};
use corti::tfr::{stft, Spectrogram, StftConfig};
use corti::wc::WcParams;
use corti::{add_noise, gen_vowel, Signal};

pub const SAMPLE_RATE: f64 = 8000.0;

pub struct Fixture {
    pub signal: Signal,
    pub config: StftConfig,
    pub spectrogram: Spectrogram,
    pub field: ChirpinessField,
    pub lifted: LiftedImage,
    pub operator: KernelOperator,
    pub wc: WcParams,
}

pub fn fixture(seconds: f64) -> Fixture {
    let signal = add_noise(&gen_vowel(150.0, seconds, SAMPLE_RATE).unwrap(), 0.02, 1).unwrap();
    let config = StftConfig::for_sample_rate(SAMPLE_RATE);
    let spectrogram = stft(&signal, config).unwrap();
    let field = chirpiness_field(&spectrogram, DEFAULT_ETA).unwrap();
    let grid = build_nu_grid(&field, 0.95, DEFAULT_N_NU).unwrap();
    let lifted = lift(&spectrogram, &field, &grid).unwrap();
    let wc = WcParams::with_defaults(spectrogram.hop_time());
    let params = KernelParams::new(wc.delta, 2.0 * grid.step().powi(2) / wc.delta).unwrap();
    let operator = discretize(
        Axis::from_points(&lifted.bin_freqs()).unwrap(),
        Axis::from_points(grid.centers()).unwrap(),
        params,
    )
    .unwrap();
    Fixture {
        signal,
        config,
        spectrogram,
        field,
        lifted,
        operator,
        wc,
    }
}
