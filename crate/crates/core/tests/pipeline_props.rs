mod common;

use corti::signal::{add_noise, gen_chirp, gen_sine, gen_vowel, Signal};
use corti::tfr::{istft, stft};
use corti::{process, PipelineConfig};

use common::rel_l2;

fn fast_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.wc.substeps = 4;
    c
}

#[test]
fn zero_in_zero_out() {
    let p = process(&Signal::zeros(4000, 8000.0).unwrap(), &PipelineConfig::default()).unwrap();
    assert!(p.report.silent);
    assert!(p.signal.samples().iter().all(|v| *v == 0.0));
    assert_eq!(p.signal.len(), 4000);
}

#[test]
fn output_length_matches_input() {
    for len in [1024, 1500, 4001, 8000] {
        let s = add_noise(&gen_vowel(150.0, len as f64 / 8000.0, 8000.0).unwrap(), 0.01, 1).unwrap();
        let s = Signal::new(s.samples()[..len.min(s.len())].to_vec(), 8000.0).unwrap();
        let p = process(&s, &fast_config()).unwrap();
        assert_eq!(p.signal.len(), s.len());
        assert_eq!(p.report.output_len, s.len());
        assert!(p.signal.samples().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn processing_is_deterministic() {
    let s = add_noise(&gen_chirp(400.0, 1200.0, 0.5, 8000.0).unwrap(), 0.05, 9).unwrap();
    let a = process(&s, &PipelineConfig::default()).unwrap();
    let b = process(&s, &PipelineConfig::default()).unwrap();
    assert_eq!(a.signal, b.signal);
    assert_eq!(a.report, b.report);
}

#[test]
fn fast_leak_without_coupling_follows_the_round_trip() {
    let s = gen_sine(440.0, 1.0, 8000.0, 0.8).unwrap();
    let mut c = PipelineConfig::default();
    c.wc.gamma = 0.0;
    c.wc.alpha = 2000.0;
    c.wc.beta = 2000.0;
    c.wc.substeps = 32;
    let out = process(&s, &c).unwrap().signal;
    let cfg = c.stft.resolve(8000.0).unwrap();
    let reference = istft(&stft(&s, cfg).unwrap()).unwrap();
    let n = cfg.window_size;
    let r = n..s.len() - n;
    let e = rel_l2(&out.samples()[r.clone()], &reference.samples()[r]);
    assert!(e <= 0.05, "{e}");
}

#[test]
fn mix_zero_is_the_plain_round_trip() {
    let s = gen_vowel(150.0, 0.5, 8000.0).unwrap();
    let mut c = fast_config();
    c.mix = 0.0;
    let out = process(&s, &c).unwrap().signal;
    let n = c.stft.resolve(8000.0).unwrap().window_size;
    let r = n..s.len() - n;
    assert!(rel_l2(&out.samples()[r.clone()], &s.samples()[r]) <= 1e-9);
}

#[test]
fn homogeneous_in_the_linear_band() {
    let s = add_noise(&gen_vowel(150.0, 0.5, 8000.0).unwrap(), 0.02, 4).unwrap();
    let mut c = PipelineConfig::default();
    c.wc.kappa = 1e-3;
    let base = process(&s, &c).unwrap();
    for scale in [0.5, 2.0] {
        let p = process(&s.scaled(scale), &c).unwrap();
        // Σ|a|² bounds every |a|², so this keeps κ|a| ≤ 1 in every frame
        let peak = p.energy.iter().map(|(_, e)| *e).fold(0.0, f64::max);
        assert!(c.wc.kappa * peak.sqrt() <= 1.0, "left the linear band");
        let want: Vec<f64> = base.signal.samples().iter().map(|v| v * scale).collect();
        let e = rel_l2(p.signal.samples(), &want);
        assert!(e <= 1e-4, "c = {scale}: {e}");
    }
}

#[test]
fn report_records_effective_parameters() {
    let s = gen_chirp(500.0, 1000.0, 0.5, 8000.0).unwrap();
    let p = process(&s, &fast_config()).unwrap();
    let r = &p.report;
    assert!(!r.silent);
    assert_eq!(r.effective.wc.substeps, 4);
    assert!((r.effective.wc.delta - r.effective.stft.hop as f64 / 8000.0).abs() < 1e-15);
    let k = r.effective.kernel.unwrap();
    assert_eq!(k.delta, r.effective.wc.delta);
    assert!(r.fit.is_some() && r.grid.is_some());
    let json = serde_json::to_value(r).unwrap();
    for key in ["effective", "fit", "kernel", "gain_estimate", "quantile_convention"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}
