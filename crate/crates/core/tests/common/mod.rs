#![allow(dead_code)]

use corti::chirpstats::CauchyFit;
use corti::kernel::{discretize, Axis, KernelOperator, KernelParams};
use corti::lift::{LiftedImage, NuGrid, ProjectionMode};
use corti::tfr::{Spectrogram, StftConfig, WindowKind};
use corti::C64;

/// `‖a − b‖₂ / ‖b‖₂`.
pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// `Σ|a − b| / Σ|b|`.
pub fn rel_l1(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = b.iter().map(|y| y.abs()).sum();
    num / den
}

fn gauss2(x: (f64, f64), mean: (f64, f64), c: [[f64; 2]; 2]) -> f64 {
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let (dx, dy) = (x.0 - mean.0, x.1 - mean.1);
    let q = (c[1][1] * dx * dx - 2.0 * c[0][1] * dx * dy + c[0][0] * dy * dy) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

pub struct FokkerPlanck {
    pub l1_vs_closed_form: f64,
    pub l1_vs_operator: f64,
    pub cells: (usize, usize),
}

/// Solves `∂_t p = −ν ∂_ω p + b ∂²_ν p` from a narrow Gaussian bump around
/// `(0, nu0)` up to `t = δ` (fourth-order central differences, RK4, zero
/// boundaries) on a grid with `cells_per_std` cells per kernel standard
/// deviation along each axis.
///
/// The result is compared with the Gaussian obtained by pushing the bump
/// through the closed-form kernel (exact for Gaussian data), and with one
/// application of the discrete operator to the sampled bump.
pub fn fokker_planck(delta: f64, b: f64, nu0: f64, cells_per_std: f64) -> FokkerPlanck {
    let p = KernelParams::new(delta, b).unwrap();
    let k = p.covariance();
    let (hw, hn) = (k[0][0].sqrt() / cells_per_std, k[1][1].sqrt() / cells_per_std);
    let (s0w, s0n) = (2.0 * hw, 2.0 * hn);

    // exact law at t = δ of X_δ = A X_0 + noise, A = [[1, δ], [0, 1]]
    let mean_end = (nu0 * delta, nu0);
    let c_end = [
        [
            s0w * s0w + delta * delta * s0n * s0n + k[0][0],
            delta * s0n * s0n + k[0][1],
        ],
        [delta * s0n * s0n + k[1][0], s0n * s0n + k[1][1]],
    ];
    let reach_w = 9.0 * c_end[0][0].sqrt();
    let reach_n = 9.0 * c_end[1][1].sqrt();
    let w_lo = (mean_end.0.min(0.0) - reach_w) / hw;
    let w_hi = (mean_end.0.max(0.0) + reach_w) / hw;
    let n_lo = ((nu0 - reach_n) / hn).floor();
    let n_hi = ((nu0 + reach_n) / hn).ceil();
    let w_axis = Axis::new(w_lo.floor() * hw, hw, (w_hi.ceil() - w_lo.floor()) as usize + 1).unwrap();
    let n_axis = Axis::new(n_lo * hn, hn, (n_hi - n_lo) as usize + 1).unwrap();
    let (nw, nn) = (w_axis.len, n_axis.len);

    let mut field = vec![0.0; nw * nn];
    let c0 = [[s0w * s0w, 0.0], [0.0, s0n * s0n]];
    for q in 0..nn {
        for i in 0..nw {
            field[q * nw + i] = gauss2((w_axis.point(i), n_axis.point(q)), (0.0, nu0), c0);
        }
    }
    let initial = field.clone();

    let rhs = |f: &[f64], out: &mut [f64]| {
        let at = |i: isize, q: isize| -> f64 {
            if i < 0 || q < 0 || i >= nw as isize || q >= nn as isize {
                0.0
            } else {
                f[q as usize * nw + i as usize]
            }
        };
        for q in 0..nn as isize {
            let nu = n_axis.point(q as usize);
            for i in 0..nw as isize {
                let dw = (-at(i + 2, q) + 8.0 * at(i + 1, q) - 8.0 * at(i - 1, q) + at(i - 2, q)) / (12.0 * hw);
                let dnn = (-at(i, q + 2) + 16.0 * at(i, q + 1) - 30.0 * at(i, q) + 16.0 * at(i, q - 1) - at(i, q - 2))
                    / (12.0 * hn * hn);
                out[q as usize * nw + i as usize] = -nu * dw + b * dnn;
            }
        }
    };

    let v_max = nu0.abs() + reach_n;
    let dt_max = (0.5 * hw / v_max).min(0.25 * hn * hn / b);
    let steps = (delta / dt_max).ceil() as usize;
    let dt = delta / steps as f64;
    let n = field.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..steps {
        rhs(&field, &mut k1);
        for j in 0..n {
            tmp[j] = field[j] + 0.5 * dt * k1[j];
        }
        rhs(&tmp, &mut k2);
        for j in 0..n {
            tmp[j] = field[j] + 0.5 * dt * k2[j];
        }
        rhs(&tmp, &mut k3);
        for j in 0..n {
            tmp[j] = field[j] + dt * k3[j];
        }
        rhs(&tmp, &mut k4);
        for j in 0..n {
            field[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }

    let mut exact = vec![0.0; n];
    for q in 0..nn {
        for i in 0..nw {
            exact[q * nw + i] = gauss2((w_axis.point(i), n_axis.point(q)), mean_end, c_end);
        }
    }

    let op = discretize(w_axis, n_axis, p).unwrap();
    let masses: Vec<C64> = initial.iter().map(|v| C64::new(v * hw * hn, 0.0)).collect();
    let pushed: Vec<f64> = op.apply(&masses).unwrap().iter().map(|m| m.re / (hw * hn)).collect();

    FokkerPlanck {
        l1_vs_closed_form: rel_l1(&field, &exact),
        l1_vs_operator: rel_l1(&pushed, &field),
        cells: (nw, nn),
    }
}

/// L1 discrepancy between two half-time applications and one full-time
/// application of the discrete kernel to a unit impulse at `(0, δ⁻¹/2)`.
pub fn chapman_kolmogorov(delta: f64, b: f64, h: f64) -> f64 {
    let full = KernelParams::new(delta, b).unwrap();
    let half = KernelParams::new(delta / 2.0, b).unwrap();
    let nu0 = 0.5 / delta;
    let c = full.covariance();
    let reach_n = 7.0 * c[1][1].sqrt();
    let reach_w = 7.0 * c[0][0].sqrt() + reach_n * delta / 2.0;
    let n_lo = ((nu0 - reach_n) / h).floor();
    let n_len = ((2.0 * reach_n) / h).ceil() as usize + 2;
    let w_lo = (-reach_w / h).floor();
    let w_len = ((nu0 * delta + 2.0 * reach_w) / h).ceil() as usize + 2;
    let w_axis = Axis::new(w_lo * h, h, w_len).unwrap();
    let n_axis = Axis::new(n_lo * h, h, n_len).unwrap();

    let op_full = discretize(w_axis, n_axis, full).unwrap();
    let op_half = discretize(w_axis, n_axis, half).unwrap();
    let mut impulse = vec![C64::new(0.0, 0.0); op_full.plane_len()];
    impulse[n_axis.nearest(nu0) * w_len + w_axis.nearest(0.0)] = C64::new(1.0, 0.0);
    let once: Vec<f64> = op_full.apply(&impulse).unwrap().iter().map(|v| v.re).collect();
    let twice: Vec<f64> = op_half
        .apply(&op_half.apply(&impulse).unwrap())
        .unwrap()
        .iter()
        .map(|v| v.re)
        .collect();
    rel_l1(&twice, &once)
}

/// Spectrogram/lift scaffold: a 16-sample window with hop 4 at 400 Hz
/// (hop time 0.01 s, 9 bins) and `n_nu` chirpiness slots of scale `gamma`.
pub fn scaffold(frames: usize, n_nu: usize, gamma: f64) -> (LiftedImage, KernelOperator) {
    let cfg = StftConfig::new(16, 4, WindowKind::Hann).unwrap();
    let spec = Spectrogram::from_parts(
        vec![C64::new(0.0, 0.0); frames * 9],
        frames,
        400.0,
        cfg,
        16 + 4 * (frames - 1),
    )
    .unwrap();
    let grid = NuGrid::from_fit(CauchyFit { x0: 0.0, gamma, n: 0 }, 0.95, n_nu).unwrap();
    let img = LiftedImage::zeros(&spec, grid.clone(), ProjectionMode::Sum);
    let op = discretize(
        Axis::from_points(&img.bin_freqs()).unwrap(),
        Axis::from_points(grid.centers()).unwrap(),
        KernelParams::new(0.01, 2.0 * grid.step().powi(2) / 0.01).unwrap(),
    )
    .unwrap();
    (img, op)
}

/// Spearman rank correlation (no ties expected).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Median chirpiness over the ridge (argmax bin and its two neighbours) of
/// the interior frames.
pub fn ridge_median_chirpiness(s: &corti::Signal) -> f64 {
    let spec = corti::stft(s, StftConfig::for_sample_rate(s.sample_rate())).unwrap();
    let field = corti::chirpiness_field(&spec, corti::lift::DEFAULT_ETA).unwrap();
    let mut vals = Vec::new();
    for i in 2..spec.n_frames() - 2 {
        let j = argmax(spec.frame(i));
        for jj in j.saturating_sub(1)..=(j + 1).min(spec.n_bins() - 1) {
            if let Some(nu) = field.nu(i, jj) {
                vals.push(nu);
            }
        }
    }
    vals.sort_by(f64::total_cmp);
    corti::chirpstats::quantile_sorted(&vals, 0.5)
}

pub fn argmax(row: &[C64]) -> usize {
    (0..row.len())
        .max_by(|&a, &b| row[a].norm().total_cmp(&row[b].norm()))
        .unwrap()
}

/// Fraction of ridge magnitude lifted into the slot of ν = 0 or its two
/// neighbours.
pub fn ridge_mass_near_zero(s: &corti::Signal) -> f64 {
    let spec = corti::stft(s, StftConfig::for_sample_rate(s.sample_rate())).unwrap();
    let field = corti::chirpiness_field(&spec, corti::lift::DEFAULT_ETA).unwrap();
    let grid = corti::build_nu_grid(&field, 0.95, corti::lift::DEFAULT_N_NU).unwrap();
    let img = corti::lift(&spec, &field, &grid).unwrap();
    let zero = grid.slot(0.0);
    let (mut near, mut total) = (0.0, 0.0);
    for i in 1..spec.n_frames() - 1 {
        let j = argmax(spec.frame(i));
        for jj in j.saturating_sub(1)..=(j + 1).min(spec.n_bins() - 1) {
            for q in 0..img.n_nu() {
                let m = img.get(i, jj, q).norm();
                total += m;
                if q.abs_diff(zero) <= 1 {
                    near += m;
                }
            }
        }
    }
    near / total
}

/// Exact KS distance estimated by brute force: `|F_n − F|` on a grid that is
/// uniform in the model CDF (spacing `1/grid`), so the sup is resolved to
/// within `1/grid`.
pub fn ks_brute_force(samples: &[f64], fit: &CauchyFit, grid: usize) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for k in 1..grid {
        let u = k as f64 / grid as f64;
        let x = fit.quantile(u);
        let f = fit.cdf(x).unwrap();
        let below = sorted.partition_point(|&v| v <= x) as f64 / n;
        sup = sup.max((below - f).abs());
    }
    sup
}
