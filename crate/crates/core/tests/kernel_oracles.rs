//! The discrete kernel against independent references: Monte-Carlo moments
//! of the diffusion, an explicit Fokker-Planck solve, and semigroup
//! composition.

mod common;

use corti::kernel::{discretize, kolmogorov_density, mc_oracle, Axis, KernelParams};
use corti::C64;

use common::fokker_planck;

#[test]
fn mc_moments_match_closed_form() {
    let n = 200_000;
    let tol = 4.0 / (n as f64).sqrt();
    for &(delta, b, src) in &[
        (1.0, 1.0, (0.0, 0.0)),
        (0.5, 2.0, (3.0, -1.5)),
        (0.01, 2e4, (440.0, 800.0)),
    ] {
        let p = KernelParams::new(delta, b).unwrap();
        let mc = mc_oracle(src, &p, n, 200, 11).unwrap();
        let (mw, mn) = p.mean(src);
        let c = p.covariance();
        let (sw, sn) = (c[0][0].sqrt(), c[1][1].sqrt());
        assert!((mc.mean.0 - mw).abs() <= tol * sw, "mean ω {} vs {mw}", mc.mean.0);
        assert!((mc.mean.1 - mn).abs() <= tol * sn, "mean ν {} vs {mn}", mc.mean.1);
        assert!((mc.covariance[0][0] / c[0][0] - 1.0).abs() <= tol, "var ω");
        assert!((mc.covariance[1][1] / c[1][1] - 1.0).abs() <= tol, "var ν");
        assert!((mc.covariance[0][1] - c[0][1]).abs() <= tol * sw * sn, "cov");
    }
}

#[test]
fn mc_oracle_is_deterministic_per_seed() {
    let p = KernelParams::new(1.0, 1.0).unwrap();
    let a = mc_oracle((0.0, 0.0), &p, 20_000, 100, 3).unwrap();
    let b = mc_oracle((0.0, 0.0), &p, 20_000, 100, 3).unwrap();
    let c = mc_oracle((0.0, 0.0), &p, 20_000, 100, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn density_matches_fokker_planck_solution() {
    let fp = fokker_planck(1.0, 1.0, 1.0, 8.0);
    assert!(fp.l1_vs_closed_form < 0.02, "closed form L1 {}", fp.l1_vs_closed_form);
    assert!(fp.l1_vs_operator < 0.02, "operator L1 {}", fp.l1_vs_operator);
}

#[test]
fn chapman_kolmogorov_composition() {
    let d = common::chapman_kolmogorov(1.0, 1.0, 0.125);
    assert!(d <= 0.02, "composition L1 {d}");
}

#[test]
fn rows_conserve_mass_and_constant_field_is_reproduced_inside() {
    let p = KernelParams::new(0.5, 1.0).unwrap();
    let (w, n) = (Axis::new(-6.0, 0.1, 121).unwrap(), Axis::new(-4.0, 0.2, 41).unwrap());
    let op = discretize(w, n, p).unwrap();
    for &(i, q) in &[(60, 20), (0, 0), (120, 40), (30, 35)] {
        let total: f64 = op.row(i, q).iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "row ({i},{q}) sums to {total}");
    }

    let ones = vec![C64::new(1.0, 0.0); op.plane_len()];
    let out = op.apply(&ones).unwrap();
    // the ω shear over one kernel time is |ν|δ, so stay clear of the ω edges
    // by that much and of the ν edges by six spreads
    let reach_nu = 6.0 * (2.0 * p.b * p.delta).sqrt();
    for q in 0..n.len {
        let nu = n.point(q);
        if (nu - n.start).abs() < reach_nu || (n.point(n.len - 1) - nu).abs() < reach_nu {
            continue;
        }
        for i in 0..w.len {
            let om = w.point(i);
            let margin = (nu.abs() + reach_nu) * p.delta + 6.0 * p.covariance()[0][0].sqrt();
            if om - w.start < margin || w.point(w.len - 1) - om < margin {
                continue;
            }
            let v = out[q * w.len + i];
            assert!((v.re - 1.0).abs() < 1e-6 && v.im == 0.0, "({i},{q}) -> {v}");
        }
    }
}

#[test]
fn impulse_response_is_the_row() {
    let p = KernelParams::new(1.0, 1.0).unwrap();
    let op = discretize(Axis::new(-4.0, 0.25, 33).unwrap(), Axis::new(-4.0, 0.5, 17).unwrap(), p).unwrap();
    let mut impulse = vec![C64::new(0.0, 0.0); op.plane_len()];
    impulse[8 * 33 + 16] = C64::new(0.0, 2.0);
    let out = op.apply(&impulse).unwrap();
    let row = op.row(16, 8);
    for (o, r) in out.iter().zip(&row) {
        assert_eq!(o.re, 0.0);
        assert!((o.im - 2.0 * r).abs() < 1e-15);
    }
}

#[test]
fn apply_is_linear_in_the_field() {
    let p = KernelParams::new(0.5, 0.5).unwrap();
    let op = discretize(Axis::new(0.0, 0.2, 40).unwrap(), Axis::new(-2.0, 0.25, 17).unwrap(), p).unwrap();
    let f: Vec<C64> = (0..op.plane_len())
        .map(|k| C64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
        .collect();
    let g: Vec<C64> = (0..op.plane_len())
        .map(|k| C64::new((k % 7) as f64, -((k % 3) as f64)))
        .collect();
    let sum: Vec<C64> = f.iter().zip(&g).map(|(a, b)| a * 2.0 + b).collect();
    let (af, ag, asum) = (op.apply(&f).unwrap(), op.apply(&g).unwrap(), op.apply(&sum).unwrap());
    for k in 0..op.plane_len() {
        assert!((asum[k] - (af[k] * 2.0 + ag[k])).norm() < 1e-12);
    }
}

#[test]
fn density_integrates_to_one() {
    let p = KernelParams::new(1.0, 1.0).unwrap();
    let src = (0.5, 1.0);
    let (hw, hn) = (0.02, 0.04);
    let mut total = 0.0;
    for i in -400..=400 {
        for j in -250..=250 {
            let dst = (src.0 + src.1 + i as f64 * hw, src.1 + j as f64 * hn);
            total += kolmogorov_density(dst, src, &p) * hw * hn;
        }
    }
    assert!((total - 1.0).abs() < 1e-6, "{total}");
}
