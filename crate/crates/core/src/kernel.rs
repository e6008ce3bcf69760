//! Transition density of the Kolmogorov diffusion on `(ω, ν)`:
//!
//! ```text
//! dν = sqrt(2b) dW,   dω = ν dt
//! ```
//!
//! whose Fokker-Planck operator is `-ν ∂_ω + b ∂_ν²`. Started at `(ω', ν')`,
//! the state at time `δ` is Gaussian with mean `(ω' + ν'δ, ν')` and covariance
//!
//! ```text
//! [[2bδ³/3, bδ²],
//!  [bδ²,    2bδ ]]
//! ```
//!
//! The density depends on source and destination only through
//! `z_ω = ω - ω' - ν'δ` and `z_ν = ν - ν'`, so on a uniform frequency axis one
//! stencil per `(ν', ν)` pair, shifted along `ω`, represents the whole operator.

use std::f64::consts::{PI, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Stencils are cut at this many standard deviations per axis.
pub const TRUNCATION_SIGMAS: f64 = 6.0;
/// Rows that keep less than this fraction of their mass on the grid are flagged.
pub const LOW_MASS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Kernel time in seconds.
    pub delta: f64,
    /// Diffusion strength of the chirpiness coordinate.
    pub b: f64,
}

impl KernelParams {
    pub fn new(delta: f64, b: f64) -> Result<Self> {
        let p = KernelParams { delta, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::config(
                "kernel",
                format!("delta must be positive, got {}", self.delta),
            ));
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::config("kernel", format!("b must be positive, got {}", self.b)));
        }
        Ok(())
    }

    /// Mean of `(ω, ν)` at time `delta` when started at `src`.
    pub fn mean(&self, src: (f64, f64)) -> (f64, f64) {
        (src.0 + src.1 * self.delta, src.1)
    }

    /// Covariance `[[var_ω, cov], [cov, var_ν]]`.
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let (b, d) = (self.b, self.delta);
        [[2.0 * b * d.powi(3) / 3.0, b * d * d], [b * d * d, 2.0 * b * d]]
    }
}

/// Density at `dst = (ω, ν)` after time `delta` for a walker started at `src = (ω', ν')`.
pub fn kolmogorov_density(dst: (f64, f64), src: (f64, f64), params: &KernelParams) -> f64 {
    let (b, d) = (params.b, params.delta);
    let zw = dst.0 - src.0 - src.1 * d;
    let zn = dst.1 - src.1;
    let q = 3.0 * zw * zw / (b * d.powi(3)) - 3.0 * zw * zn / (b * d * d) + zn * zn / (b * d);
    3f64.sqrt() / (2.0 * PI * b * d * d) * (-q).exp()
}

/// Uniform coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if len < 3 {
            return Err(Error::domain(
                "kernel",
                format!("axis needs at least 3 points, got {len}"),
            ));
        }
        if !(step.is_finite() && step > 0.0 && start.is_finite()) {
            return Err(Error::domain(
                "kernel",
                format!("axis step must be positive, got {step}"),
            ));
        }
        Ok(Axis { start, step, len })
    }

    /// Accepts points that are uniformly spaced to 1e-9 relative.
    pub fn from_points(points: &[f64]) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::domain(
                "kernel",
                format!("axis needs at least 3 points, got {}", points.len()),
            ));
        }
        let step = (points[points.len() - 1] - points[0]) / (points.len() - 1) as f64;
        let tol = 1e-9 * step.abs().max(points[0].abs()).max(points[points.len() - 1].abs());
        for (k, p) in points.iter().enumerate() {
            if (p - (points[0] + k as f64 * step)).abs() > tol {
                return Err(Error::domain("kernel", "axis points are not uniformly spaced"));
            }
        }
        Axis::new(points[0], step, points.len())
    }

    pub fn point(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.point(k)).collect()
    }

    /// Index of the nearest point, clamped to the axis.
    pub fn nearest(&self, x: f64) -> usize {
        ((x - self.start) / self.step).round().clamp(0.0, (self.len - 1) as f64) as usize
    }
}

/// Weights from one source chirpiness slot into one destination slot, as a
/// function of the frequency offset `d = dst_ω - src_ω` (in bins).
#[derive(Debug, Clone)]
struct Stencil {
    src_nu: usize,
    d_min: isize,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelDiagnostics {
    pub rows: usize,
    /// Rows whose on-grid mass before normalization was below [`LOW_MASS_THRESHOLD`].
    pub low_mass_rows: usize,
    /// First few flagged rows as `(omega_index, nu_index)`.
    pub low_mass_examples: Vec<(usize, usize)>,
    /// Rows with no representable on-grid mass; these act as the identity.
    pub empty_rows: usize,
    pub min_row_mass: f64,
    pub max_row_mass: f64,
    pub stencil_entries: usize,
    pub max_stencil_width: usize,
}

/// Discretized kernel acting on complex `(ν, ω)` planes (ω fastest).
///
/// `weights[src][dst]` is the probability that mass at `src` moves to `dst`;
/// rows are normalized to sum to one over the grid, so [`KernelOperator::apply`]
/// conserves total mass.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    params: KernelParams,
    omega: Axis,
    nu: Axis,
    by_dst: Vec<Vec<Stencil>>,
    /// 1 / on-grid row mass, indexed `[src_nu][src_omega]`; zero for empty rows.
    row_scale: Vec<f64>,
    empty_rows: Vec<usize>,
    diagnostics: KernelDiagnostics,
}

/// Standard normal CDF.
fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// P(a < Z < b) for standard normal Z, accurate in both tails.
fn normal_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        phi(-a) - phi(-b)
    } else {
        phi(b) - phi(a)
    }
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Cell-integrated weights from source chirpiness `nu_src` into the cell
/// around `nu_dst`, over frequency offsets in units of the ω step.
///
/// The ν marginal of the cell is exact; the frequency offsets use the
/// conditional law `ω | ν`, Gaussian with mean `ν'δ + (δ/2)(ν - ν')` and
/// variance `bδ³/6`, averaged over the cell by composite Gauss-Legendre.
fn cell_stencil(params: &KernelParams, d_omega: f64, d_nu: f64, nu_src: f64, nu_dst: f64) -> CellWeights {
    let (b, delta) = (params.b, params.delta);
    let sig_nu = (2.0 * b * delta).sqrt();
    let sig_c = (b * delta.powi(3) / 6.0).sqrt();
    let reach = TRUNCATION_SIGMAS * sig_nu;
    let lo = (nu_dst - 0.5 * d_nu).max(nu_src - reach);
    let hi = (nu_dst + 0.5 * d_nu).min(nu_src + reach);
    if lo >= hi {
        return None;
    }
    let p_cell = normal_mass(
        (nu_dst - 0.5 * d_nu - nu_src) / sig_nu,
        (nu_dst + 0.5 * d_nu - nu_src) / sig_nu,
    );
    if p_cell <= 0.0 {
        return None;
    }
    let mean = |nu: f64| nu_src * delta + 0.5 * delta * (nu - nu_src);
    let (m_lo, m_hi) = (mean(lo).min(mean(hi)), mean(lo).max(mean(hi)));
    let spread = TRUNCATION_SIGMAS * sig_c;
    let d_min = ((m_lo - spread) / d_omega - 0.5).ceil() as isize;
    let d_max = ((m_hi + spread) / d_omega + 0.5).floor() as isize;

    // nodes on [lo, hi], each piece at most half a standard deviation wide
    let pieces = (((hi - lo) / (0.5 * sig_nu)).ceil() as usize).clamp(1, 64);
    let h = (hi - lo) / pieces as f64;
    let mut nodes = Vec::with_capacity(3 * pieces);
    for k in 0..pieces {
        let mid = lo + (k as f64 + 0.5) * h;
        for (x, w) in GAUSS3 {
            let nu = mid + 0.5 * h * x;
            let z = (nu - nu_src) / sig_nu;
            nodes.push((nu, w * (-0.5 * z * z).exp()));
        }
    }
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    if total <= 0.0 {
        return None;
    }
    let weights = (d_min..=d_max)
        .map(|d| {
            let (c_lo, c_hi) = ((d as f64 - 0.5) * d_omega, (d as f64 + 0.5) * d_omega);
            let acc: f64 = nodes
                .iter()
                .map(|&(nu, w)| {
                    let m = mean(nu);
                    w * normal_mass((c_lo - m) / sig_c, (c_hi - m) / sig_c)
                })
                .sum();
            p_cell * acc / total
        })
        .collect();
    Some((d_min, weights))
}

/// Offset of the first ω cell and the weights of one (source ν, target ν) pair.
type CellWeights = Option<(isize, Vec<f64>)>;

/// Builds the discrete operator on the given axes.
pub fn discretize(omega: Axis, nu: Axis, params: KernelParams) -> Result<KernelOperator> {
    params.validate()?;
    let (n_w, n_n) = (omega.len, nu.len);
    let pairs: Vec<(usize, usize, CellWeights)> = (0..n_n)
        .into_par_iter()
        .flat_map_iter(|p| {
            (0..n_n).map(move |q| {
                (
                    p,
                    q,
                    cell_stencil(&params, omega.step, nu.step, nu.point(p), nu.point(q)),
                )
            })
        })
        .collect();

    let mut by_dst: Vec<Vec<Stencil>> = vec![Vec::new(); n_n];
    let mut row_mass = vec![0.0; n_n * n_w];
    let mut stencil_entries = 0;
    let mut max_width = 0;
    for (p, q, st) in pairs {
        let Some((d_min, weights)) = st else { continue };
        // on-grid mass for each source column; summed directly because
        // differences of prefix sums lose the tails of edge rows
        let d_max = d_min + weights.len() as isize - 1;
        for src_w in 0..n_w {
            let lo = d_min.max(-(src_w as isize));
            let hi = d_max.min((n_w - 1 - src_w) as isize);
            if lo <= hi {
                let a = (lo - d_min) as usize;
                let b = (hi - d_min) as usize + 1;
                row_mass[p * n_w + src_w] += weights[a..b].iter().sum::<f64>();
            }
        }
        stencil_entries += weights.len();
        max_width = max_width.max(weights.len());
        by_dst[q].push(Stencil {
            src_nu: p,
            d_min,
            weights,
        });
    }

    let mut row_scale = vec![0.0; n_n * n_w];
    let mut empty_rows = Vec::new();
    let mut low = Vec::new();
    let (mut min_mass, mut max_mass) = (f64::INFINITY, 0.0f64);
    for (k, &m) in row_mass.iter().enumerate() {
        min_mass = min_mass.min(m);
        max_mass = max_mass.max(m);
        if m < LOW_MASS_THRESHOLD {
            low.push((k % n_w, k / n_w));
        }
        if m > 1e-300 {
            row_scale[k] = 1.0 / m;
        } else {
            empty_rows.push(k);
        }
    }
    let diagnostics = KernelDiagnostics {
        rows: n_n * n_w,
        low_mass_rows: low.len(),
        low_mass_examples: low.into_iter().take(16).collect(),
        empty_rows: empty_rows.len(),
        min_row_mass: min_mass,
        max_row_mass: max_mass,
        stencil_entries,
        max_stencil_width: max_width,
    };
    Ok(KernelOperator {
        params,
        omega,
        nu,
        by_dst,
        row_scale,
        empty_rows,
        diagnostics,
    })
}

impl KernelOperator {
    pub fn params(&self) -> KernelParams {
        self.params
    }

    pub fn omega_axis(&self) -> Axis {
        self.omega
    }

    pub fn nu_axis(&self) -> Axis {
        self.nu
    }

    pub fn diagnostics(&self) -> &KernelDiagnostics {
        &self.diagnostics
    }

    /// Number of cells in one `(ν, ω)` plane.
    pub fn plane_len(&self) -> usize {
        self.omega.len * self.nu.len
    }

    /// `out(dst) = Σ_src weights[src][dst] field(src)` on a `(ν, ω)` plane.
    pub fn apply(&self, field: &[C64]) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); field.len()];
        let mut scratch = vec![C64::new(0.0, 0.0); field.len()];
        self.apply_into(field, &mut scratch, &mut out)?;
        Ok(out)
    }

    /// Allocation-free [`KernelOperator::apply`]; `scratch` must have the plane length.
    pub fn apply_into(&self, field: &[C64], scratch: &mut [C64], out: &mut [C64]) -> Result<()> {
        let n = self.plane_len();
        if field.len() != n || scratch.len() != n || out.len() != n {
            return Err(Error::domain(
                "kernel",
                format!(
                    "field of {} cells does not match the {} x {} kernel grid",
                    field.len(),
                    self.nu.len,
                    self.omega.len
                ),
            ));
        }
        let n_w = self.omega.len;
        scratch
            .par_chunks_mut(n_w)
            .zip(field.par_chunks(n_w))
            .zip(self.row_scale.par_chunks(n_w))
            .for_each(|((s, f), r)| {
                for ((s, f), r) in s.iter_mut().zip(f).zip(r) {
                    *s = f * r;
                }
            });
        let scaled: &[C64] = scratch;
        out.par_chunks_mut(n_w).enumerate().for_each(|(q, row)| {
            row.fill(C64::new(0.0, 0.0));
            for st in &self.by_dst[q] {
                let src = &scaled[st.src_nu * n_w..(st.src_nu + 1) * n_w];
                for (k, &w) in st.weights.iter().enumerate() {
                    let d = st.d_min + k as isize;
                    let (dst_lo, src_lo, len) = if d >= 0 {
                        let d = d as usize;
                        if d >= n_w {
                            continue;
                        }
                        (d, 0, n_w - d)
                    } else {
                        let d = (-d) as usize;
                        if d >= n_w {
                            continue;
                        }
                        (0, d, n_w - d)
                    };
                    for (o, s) in row[dst_lo..dst_lo + len].iter_mut().zip(&src[src_lo..src_lo + len]) {
                        *o += s * w;
                    }
                }
            }
        });
        for &k in &self.empty_rows {
            out[k] += field[k];
        }
        Ok(())
    }

    /// Normalized weights out of source cell `(src_omega, src_nu)` as a `(ν, ω)` plane.
    pub fn row(&self, src_omega: usize, src_nu: usize) -> Vec<f64> {
        let mut impulse = vec![C64::new(0.0, 0.0); self.plane_len()];
        impulse[src_nu * self.omega.len + src_omega] = C64::new(1.0, 0.0);
        self.apply(&impulse)
            .expect("impulse has the plane shape")
            .into_iter()
            .map(|v| v.re)
            .collect()
    }

    /// Writes `omega,nu,weight` for every cell of one normalized row.
    pub fn write_row_csv<W: std::io::Write>(&self, src_omega: usize, src_nu: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::domain("kernel", format!("CSV write failed: {e}"));
        w.write_record(["omega", "nu", "weight"]).map_err(err)?;
        let row = self.row(src_omega, src_nu);
        for q in 0..self.nu.len {
            for j in 0..self.omega.len {
                w.write_record([
                    self.omega.point(j).to_string(),
                    self.nu.point(q).to_string(),
                    row[q * self.omega.len + j].to_string(),
                ])
                .map_err(err)?;
            }
        }
        w.flush()
            .map_err(|e| Error::domain("kernel", format!("CSV write failed: {e}")))
    }
}

/// Sample moments of `(ω, ν)` at time `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McMoments {
    pub mean: (f64, f64),
    /// `[[var_ω, cov], [cov, var_ν]]`, unbiased.
    pub covariance: [[f64; 2]; 2],
    pub n_paths: usize,
}

const MC_CHUNK: usize = 8192;

/// Simulates `dν = sqrt(2b) dW, dω = ν dt` from `src` up to time `delta`.
///
/// The chirpiness step is Euler-Maruyama (exact for additive noise); the
/// frequency step integrates the drift with the trapezoid rule, which keeps
/// the time-discretization bias of `Var(ω)` at `O(n_steps⁻²)`. Paths are
/// drawn in fixed chunks, chunk `c` on ChaCha stream `c` of `seed`, so the
/// result does not depend on thread scheduling.
pub fn mc_oracle(
    src: (f64, f64),
    params: &KernelParams,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<McMoments> {
    params.validate()?;
    if n_paths < 10_000 || n_steps < 100 {
        return Err(Error::domain(
            "kernel",
            format!("Monte-Carlo oracle needs >= 1e4 paths and >= 100 steps, got {n_paths} / {n_steps}"),
        ));
    }
    let dt = params.delta / n_steps as f64;
    let kick = (2.0 * params.b * dt).sqrt();
    let n_chunks = n_paths.div_ceil(MC_CHUNK);
    // sums of (x, y, xx, yy, xy) with x = ω - ω', y = ν - ν'
    let partial: Vec<[f64; 5]> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let paths = MC_CHUNK.min(n_paths - c * MC_CHUNK);
            let mut acc = [0.0; 5];
            for _ in 0..paths {
                let (mut x, mut y) = (0.0, 0.0);
                for _ in 0..n_steps {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let y_next = y + kick * z;
                    x += 0.5 * ((src.1 + y) + (src.1 + y_next)) * dt;
                    y = y_next;
                }
                acc[0] += x;
                acc[1] += y;
                acc[2] += x * x;
                acc[3] += y * y;
                acc[4] += x * y;
            }
            acc
        })
        .collect();
    let mut s = [0.0; 5];
    for a in &partial {
        for k in 0..5 {
            s[k] += a[k];
        }
    }
    let n = n_paths as f64;
    let (mx, my) = (s[0] / n, s[1] / n);
    let unbias = n / (n - 1.0);
    let vxx = (s[2] / n - mx * mx) * unbias;
    let vyy = (s[3] / n - my * my) * unbias;
    let vxy = (s[4] / n - mx * my) * unbias;
    Ok(McMoments {
        mean: (src.0 + mx, src.1 + my),
        covariance: [[vxx, vxy], [vxy, vyy]],
        n_paths,
    })
}
