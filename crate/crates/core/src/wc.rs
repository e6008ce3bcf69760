//! Delayed Wilson-Cowan dynamics on the lifted image:
//!
//! ```text
//! ∂_t a = -α a + β I(t) + γ K[σ(a(t - δ))]
//! ```
//!
//! with `a ≡ 0` for `t ≤ 0`, `K` the discretized Kolmogorov kernel and `σ` the
//! phase-preserving modulus clamp `σ(ρ e^{iθ}) = min(1, max(0, κρ)) e^{iθ}`.
//!
//! Integration is explicit Euler with `substeps` steps per frame. The input
//! is held constant across each frame; output frame `k` is the state at the
//! end of frame `k`, i.e. at `t = (k + 1) * hop_time`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelOperator;
use crate::lift::LiftedImage;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcParams {
    /// Decay rate, 1/s.
    pub alpha: f64,
    /// Input gain, 1/s.
    pub beta: f64,
    /// Interaction gain, 1/s.
    pub gamma: f64,
    /// Sigmoid slope.
    pub kappa: f64,
    /// Interaction delay, s. Must be a whole number of frame hops.
    pub delta: f64,
    /// Euler steps per frame.
    pub substeps: usize,
}

impl WcParams {
    /// Tuning defaults, with the delay set to one frame hop.
    ///
    /// `γκ < α` keeps the quiescent state linearly stable: with `γκ > α`
    /// any perturbation, noise included, grows until the sigmoid saturates.
    pub fn with_defaults(hop_time: f64) -> Self {
        WcParams {
            alpha: 20.0,
            beta: 1.0,
            gamma: 15.0,
            kappa: 1.0,
            delta: hop_time,
            substeps: 8,
        }
    }

    /// Checks the parameter ranges and the explicit-scheme stability bound
    /// for the given frame hop; returns the delay in frames.
    pub fn validate(&self, hop_time: f64) -> Result<usize> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config("wc", format!("{name} must be positive, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("delta", self.delta)?;
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::config(
                "wc",
                format!("gamma must be non-negative, got {}", self.gamma),
            ));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::config(
                "wc",
                format!("kappa must be non-negative, got {}", self.kappa),
            ));
        }
        if self.substeps == 0 {
            return Err(Error::config("wc", "substeps must be at least 1"));
        }
        let dt = hop_time / self.substeps as f64;
        if self.alpha * dt >= 2.0 {
            return Err(Error::config(
                "wc",
                format!(
                    "unstable explicit scheme: alpha*dt = {:.3} >= 2 (alpha = {}, dt = {dt:e} s); raise substeps",
                    self.alpha * dt,
                    self.alpha
                ),
            ));
        }
        let frames = self.delta / hop_time;
        let whole = frames.round();
        if whole < 1.0 || (frames - whole).abs() > 1e-9 * frames.max(1.0) {
            return Err(Error::config(
                "wc",
                format!(
                    "delay {} s is not a whole number of frame hops ({hop_time} s)",
                    self.delta
                ),
            ));
        }
        Ok(whole as usize)
    }
}

/// `min(1, max(0, κ|z|)) · z/|z|`, and 0 at the origin.
pub fn sigmoid(z: C64, kappa: f64) -> C64 {
    let r = z.norm();
    if r == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let s = (kappa * r).clamp(0.0, 1.0);
    z * (s / r)
}

#[derive(Debug, Clone)]
pub struct WcSolution {
    pub activation: LiftedImage,
    /// `(t, Σ|a|²)` at each output frame.
    pub energy: Vec<(f64, f64)>,
}

impl WcSolution {
    pub fn write_energy_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::domain("wc", format!("CSV write failed: {e}"));
        w.write_record(["t", "energy"]).map_err(err)?;
        for (t, e) in &self.energy {
            w.write_record([t.to_string(), e.to_string()]).map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::domain("wc", format!("CSV write failed: {e}")))
    }
}

/// Integrates the delayed equation driven by `input`.
pub fn solve(input: &LiftedImage, params: &WcParams, op: &KernelOperator) -> Result<WcSolution> {
    let hop_time = input.hop_time();
    let delay_frames = params.validate(hop_time)?;
    if op.omega_axis().len != input.n_bins() || op.nu_axis().len != input.n_nu() {
        return Err(Error::domain(
            "wc",
            format!(
                "kernel grid {} x {} does not match the lifted image ({} bins x {} chirpiness slots)",
                op.omega_axis().len,
                op.nu_axis().len,
                input.n_bins(),
                input.n_nu()
            ),
        ));
    }
    let plane = input.n_bins() * input.n_nu();
    let dt = hop_time / params.substeps as f64;
    let delay_steps = delay_frames * params.substeps;
    let interacting = params.gamma > 0.0 && params.kappa > 0.0;

    // history[k % (D + 1)] holds a_k for the last D + 1 steps
    let slots = delay_steps + 1;
    let mut history: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); plane]; if interacting { slots } else { 1 }];
    let mut state = vec![C64::new(0.0, 0.0); plane];
    let mut sig = vec![C64::new(0.0, 0.0); plane];
    let mut scratch = vec![C64::new(0.0, 0.0); plane];
    let mut coupling = vec![C64::new(0.0, 0.0); plane];

    let mut activation = input.zeros_like();
    let mut energy = Vec::with_capacity(input.n_frames());
    let (alpha, beta, gamma) = (params.alpha, params.beta, params.gamma);

    let mut step = 0usize;
    for frame in 0..input.n_frames() {
        let drive = input.frame(frame);
        for _ in 0..params.substeps {
            let use_coupling = interacting && step >= delay_steps && {
                let delayed = &history[(step - delay_steps) % slots];
                let mut any = false;
                for (s, a) in sig.iter_mut().zip(delayed) {
                    *s = sigmoid(*a, params.kappa);
                    any |= s.re != 0.0 || s.im != 0.0;
                }
                any
            };
            if use_coupling {
                op.apply_into(&sig, &mut scratch, &mut coupling)?;
                state
                    .par_iter_mut()
                    .zip(drive.par_iter())
                    .zip(coupling.par_iter())
                    .for_each(|((a, i), j)| {
                        *a += (*a * -alpha + *i * beta + *j * gamma) * dt;
                    });
            } else {
                state.par_iter_mut().zip(drive.par_iter()).for_each(|(a, i)| {
                    *a += (*a * -alpha + *i * beta) * dt;
                });
            }
            step += 1;
            if interacting {
                history[step % slots].copy_from_slice(&state);
            }
        }
        activation.frame_mut(frame).copy_from_slice(&state);
        let e: f64 = state.iter().map(|a| a.norm_sqr()).sum();
        energy.push(((frame + 1) as f64 * hop_time, e));
    }
    Ok(WcSolution { activation, energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chirpstats::CauchyFit;
    use crate::kernel::{discretize, Axis, KernelParams};
    use crate::lift::{NuGrid, ProjectionMode};
    use crate::tfr::{Spectrogram, StftConfig, WindowKind};
    use std::f64::consts::PI;

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(C64::new(0.0, 0.0), 2.0), C64::new(0.0, 0.0));
        let z = C64::from_polar(0.25, PI / 3.0);
        assert!((sigmoid(z, 2.0) - C64::from_polar(0.5, PI / 3.0)).norm() < 1e-15);
        let z = C64::from_polar(10.0, -PI / 4.0);
        assert!((sigmoid(z, 2.0) - C64::from_polar(1.0, -PI / 4.0)).norm() < 1e-15);
        assert_eq!(sigmoid(z, 0.0), C64::new(0.0, 0.0));
    }

    /// Lifted image with `frames` frames of a 16-sample/hop-4 transform at 400 Hz
    /// (hop time 0.01 s), 9 bins and 5 chirpiness slots.
    pub(crate) fn blank(frames: usize) -> (LiftedImage, KernelOperator) {
        let cfg = StftConfig::new(16, 4, WindowKind::Hann).unwrap();
        let spec = Spectrogram::from_parts(
            vec![C64::new(0.0, 0.0); frames * 9],
            frames,
            400.0,
            cfg,
            16 + 4 * (frames - 1),
        )
        .unwrap();
        let grid = NuGrid::from_fit(
            CauchyFit {
                x0: 0.0,
                gamma: 10.0,
                n: 0,
            },
            0.95,
            5,
        )
        .unwrap();
        let img = LiftedImage::zeros(&spec, grid.clone(), ProjectionMode::Sum);
        let op = discretize(
            Axis::from_points(&img.bin_freqs()).unwrap(),
            Axis::from_points(grid.centers()).unwrap(),
            KernelParams::new(0.01, 2.0 * grid.step().powi(2) / 0.01).unwrap(),
        )
        .unwrap();
        (img, op)
    }

    #[test]
    fn zero_input_stays_zero() {
        let (img, op) = blank(20);
        let p = WcParams::with_defaults(img.hop_time());
        let sol = solve(&img, &p, &op).unwrap();
        assert!(sol.activation.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn zero_kappa_matches_zero_gamma() {
        let (mut img, op) = blank(30);
        for f in 0..30 {
            img.set(f, 4, 2, C64::new(0.3, -0.1 * f as f64));
            img.set(f, 5, 1, C64::new(1.0, 0.0));
        }
        let mut p = WcParams::with_defaults(img.hop_time());
        p.kappa = 0.0;
        let a = solve(&img, &p, &op).unwrap();
        p.kappa = 10.0;
        p.gamma = 0.0;
        let b = solve(&img, &p, &op).unwrap();
        assert_eq!(a.activation, b.activation);
    }

    #[test]
    fn rejects_unstable_or_misaligned_configs() {
        let (img, op) = blank(5);
        let mut p = WcParams::with_defaults(img.hop_time());
        p.alpha = 400.0;
        p.substeps = 2;
        let err = solve(&img, &p, &op).unwrap_err();
        assert!(err.to_string().contains("unstable"), "{err}");
        let mut p = WcParams::with_defaults(img.hop_time());
        p.delta = 1.5 * img.hop_time();
        assert!(solve(&img, &p, &op).is_err());
        let mut p = WcParams::with_defaults(img.hop_time());
        p.substeps = 0;
        assert!(solve(&img, &p, &op).is_err());
    }

    #[test]
    fn kernel_shape_must_match() {
        let (img, _) = blank(5);
        let other = discretize(
            Axis::new(0.0, 1.0, 4).unwrap(),
            Axis::new(0.0, 1.0, 5).unwrap(),
            KernelParams::new(0.01, 1.0).unwrap(),
        )
        .unwrap();
        assert!(solve(&img, &WcParams::with_defaults(img.hop_time()), &other).is_err());
    }
}
