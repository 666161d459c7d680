//! The log-time system `dφ/dt + R(t) φ = 0`, its fundamental matrix, and stability estimates.

pub(crate) mod rk;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientField, Radius};
use crate::error::{Error, Result};
use crate::quadrature::integrate_piecewise;
use crate::sphmean::{mean_matrix_r, mu_max, symmetrized_s, SphericalGrid};

/// A matrix-valued generator `t -> R(t)`.
pub trait Generator: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64) -> DMatrix<f64>;
    /// Times where `R` may jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    /// `μ(S)` with `S = -(R + Rᵀ)/2`.
    fn mu(&self, t: f64) -> f64 {
        mu_max(&symmetrized_s(&self.eval(t)))
    }
}

pub struct FnGenerator<F> {
    dim: usize,
    f: F,
    breaks: Vec<f64>,
}

impl<F: Fn(f64) -> DMatrix<f64> + Sync> FnGenerator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f, breaks: Vec::new() }
    }

    pub fn with_breakpoints(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }
}

impl<F: Fn(f64) -> DMatrix<f64> + Sync> Generator for FnGenerator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64) -> DMatrix<f64> {
        (self.f)(t)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }
}

/// `R(e^{-t})` of a coefficient field, by spherical quadrature.
pub struct FieldGenerator<'a> {
    pub field: &'a CoefficientField,
    pub grid: &'a SphericalGrid,
}

impl Generator for FieldGenerator<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn eval(&self, t: f64) -> DMatrix<f64> {
        mean_matrix_r(self.field, Radius::from_log(t), self.grid)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.field.breakpoints().to_vec()
    }
}

impl<G: Generator + ?Sized> Generator for &G {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: f64) -> DMatrix<f64> {
        (**self).eval(t)
    }
    fn breakpoints(&self) -> Vec<f64> {
        (**self).breakpoints()
    }
    fn mu(&self, t: f64) -> f64 {
        (**self).mu(t)
    }
}

/// `R + E` for a generator `R` and a perturbation `E`.
pub struct Sum<'a>(pub &'a dyn Generator, pub &'a dyn Generator);

impl Generator for Sum<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, t: f64) -> DMatrix<f64> {
        self.0.eval(t) + self.1.eval(t)
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.0.breakpoints();
        b.extend(self.1.breakpoints());
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub phi: Vec<DVector<f64>>,
    /// Derivatives at the samples, used for cubic Hermite interpolation.
    pub dphi: Vec<DVector<f64>>,
    pub step_error: Vec<f64>,
    pub tol: f64,
}

impl Trajectory {
    /// Cubic Hermite interpolation between samples.
    pub fn at(&self, t: f64) -> DVector<f64> {
        let k = match self.t.iter().position(|&s| s >= t) {
            Some(0) => return self.phi[0].clone(),
            Some(k) => k,
            None => return self.phi.last().unwrap().clone(),
        };
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        &self.phi[k - 1] * h00 + &self.dphi[k - 1] * (h10 * h) + &self.phi[k] * h01 + &self.dphi[k] * (h11 * h)
    }
}

fn stops_between(t0: f64, t1: f64, breaks: &[f64]) -> Vec<f64> {
    let mut out = vec![t0];
    out.extend(breaks.iter().copied().filter(|&b| b > t0 && b < t1));
    out.push(t1);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Solve `dφ/dt + R(t) φ = 0` on `[t0, t1]`, sampling at breakpoints and at `samples` evenly spaced times.
pub fn integrate_system(gen: &dyn Generator, t0: f64, t1: f64, phi0: &DVector<f64>, tol: f64) -> Result<Trajectory> {
    if !(t1 > t0) {
        return Err(Error::InvalidArgument(format!("need t0 < t1, got [{t0}, {t1}]")));
    }
    let mut grid: Vec<f64> = (0..=1000).map(|k| t0 + (t1 - t0) * k as f64 / 1000.0).collect();
    grid.extend(stops_between(t0, t1, &gen.breakpoints()));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    integrate_on_grid(gen, &grid, phi0, tol)
}

/// Solve on an explicit increasing output grid.
pub fn integrate_on_grid(gen: &dyn Generator, t_grid: &[f64], phi0: &DVector<f64>, tol: f64) -> Result<Trajectory> {
    check_grid(t_grid)?;
    let n = gen.dim();
    if phi0.len() != n {
        return Err(Error::InvalidArgument(format!("phi0 has length {}, expected {n}", phi0.len())));
    }
    let rhs = |t: f64, y: &[f64], d: &mut [f64]| {
        let r = gen.eval(t);
        for i in 0..n {
            d[i] = -(0..n).map(|j| r[(i, j)] * y[j]).sum::<f64>();
        }
    };
    let sol = rk::dopri5(rhs, t_grid, phi0.as_slice(), 0.1 * tol, &gen.breakpoints())?;
    Ok(Trajectory {
        t: sol.t,
        phi: sol.y.into_iter().map(DVector::from_vec).collect(),
        dphi: sol.dy.into_iter().map(DVector::from_vec).collect(),
        step_error: sol.err,
        tol,
    })
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("time grid must be strictly increasing with at least two points".into()));
    }
    Ok(())
}

/// Sampled fundamental matrix with `Φ(t_0) = I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FundamentalMatrixTrack {
    pub t_grid: Vec<f64>,
    pub phi: Vec<DMatrix<f64>>,
    pub step_error: Vec<f64>,
    pub tol: f64,
}

impl FundamentalMatrixTrack {
    pub fn dim(&self) -> usize {
        self.phi[0].nrows()
    }

    /// Replace every `Φ(t)` by `Φ(t) M`.
    pub fn rebased(&self, m: &DMatrix<f64>) -> Self {
        Self { phi: self.phi.iter().map(|p| p * m).collect(), ..self.clone() }
    }
}

pub fn fundamental_matrix(gen: &dyn Generator, t_grid: &[f64], tol: f64) -> Result<FundamentalMatrixTrack> {
    check_grid(t_grid)?;
    let n = gen.dim();
    let rhs = |t: f64, y: &[f64], d: &mut [f64]| {
        let r = gen.eval(t);
        // column-major n×n state
        for c in 0..n {
            for i in 0..n {
                d[c * n + i] = -(0..n).map(|j| r[(i, j)] * y[c * n + j]).sum::<f64>();
            }
        }
    };
    let id = DMatrix::<f64>::identity(n, n);
    let sol = rk::dopri5(rhs, t_grid, id.as_slice(), 0.1 * tol, &gen.breakpoints())?;
    Ok(FundamentalMatrixTrack {
        t_grid: sol.t,
        phi: sol.y.into_iter().map(|v| DMatrix::from_vec(n, n, v)).collect(),
        step_error: sol.err,
        tol,
    })
}

/// Spectral norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    match (m.nrows(), m.ncols()) {
        (1, 1) => m[(0, 0)].abs(),
        (2, 2) => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let s = a * a + b * b + c * c + d * d;
            let det = a * d - b * c;
            (0.5 * (s + (s * s - 4.0 * det * det).max(0.0).sqrt())).sqrt()
        }
        _ => (m.transpose() * m).symmetric_eigen().eigenvalues.max().max(0.0).sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum UniformStability {
    EvidenceStable { k_hat: f64 },
    EvidenceUnstable { growth_exponent: f64 },
    Inconclusive { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum AsymptoticVerdict {
    EvidenceYes { limit: Vec<f64>, residual: f64 },
    EvidenceNo { deviation: f64 },
    Inconclusive { reason: String },
}

impl AsymptoticVerdict {
    pub fn is_yes(&self) -> bool {
        matches!(self, AsymptoticVerdict::EvidenceYes { .. })
    }
}

impl UniformStability {
    pub fn is_stable(&self) -> bool {
        matches!(self, UniformStability::EvidenceStable { .. })
    }
    pub fn is_unstable(&self) -> bool {
        matches!(self, UniformStability::EvidenceUnstable { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub k_hat: f64,
    /// `(window end, K over [t_0, end])` for dyadically expanding windows.
    pub k_trend: Vec<(f64, f64)>,
    pub verdict_uniform_stability: UniformStability,
    pub asymptotic_limit: Option<Vec<f64>>,
    pub verdict_asymptotically_constant: AsymptoticVerdict,
    pub diagnostic: Option<String>,
}

/// Number of halvings between the first trend window and the full window.
pub const TREND_LEVELS: u32 = 10;

/// Right ends `t0 + (t1 - t0) / 2^{M-m}` of the expanding windows, `m = 0..=M`.
pub fn window_ends(t0: f64, t1: f64, levels: u32) -> Vec<f64> {
    (0..=levels).map(|m| t0 + (t1 - t0) / 2f64.powi((levels - m) as i32)).collect()
}

const COND_LIMIT: f64 = 1e12;

/// Running `max_{t_j <= t_i <= t_k} |Φ(t_i) Φ(t_j)^{-1}|` at each sample.
///
/// Stops early, with a diagnostic, once `Φ(t)` becomes too ill-conditioned to invert.
pub fn running_constant(track: &FundamentalMatrixTrack) -> (Vec<f64>, Option<String>) {
    let n = track.dim();
    let nt = track.t_grid.len();
    let mut diagnostic = None;
    let per_k: Vec<f64> = if n == 1 {
        // scalar: max over j <= k of φ_k / φ_j is φ_k / min_{j<=k} φ_j for positive φ
        let mut lo = f64::INFINITY;
        let mut out = Vec::with_capacity(nt);
        for p in &track.phi {
            let v = p[(0, 0)].abs();
            lo = lo.min(v);
            out.push(v / lo);
        }
        out
    } else {
        let mut inverses = Vec::with_capacity(nt);
        for (j, p) in track.phi.iter().enumerate() {
            let inv = p.clone().lu().try_inverse();
            match inv {
                Some(inv) if spectral_norm(p) * spectral_norm(&inv) < COND_LIMIT => inverses.push(inv),
                _ => {
                    diagnostic = Some(format!("Φ(t) ill-conditioned at t = {}", track.t_grid[j]));
                    break;
                }
            }
        }
        let usable = inverses.len();
        (0..usable)
            .into_par_iter()
            .map(|k| (0..=k).map(|j| spectral_norm(&(&track.phi[k] * &inverses[j]))).fold(1.0, f64::max))
            .collect()
    };
    let mut running = Vec::with_capacity(per_k.len());
    let mut m = 1.0f64;
    for v in &per_k {
        m = m.max(*v);
        running.push(m);
    }
    (running, diagnostic)
}

/// `K̂ = max_{t_j <= t_k} |Φ(t_k) Φ(t_j)^{-1}|` together with its trend over expanding windows.
pub fn stability_constant(track: &FundamentalMatrixTrack) -> StabilityReport {
    let (running, diagnostic) = running_constant(track);
    let usable = running.len();
    let t0 = track.t_grid[0];
    let t_last = track.t_grid[usable.max(1) - 1];
    let k_trend: Vec<(f64, f64)> = window_ends(t0, *track.t_grid.last().unwrap(), TREND_LEVELS)
        .into_iter()
        .filter(|&e| e <= t_last)
        .map(|e| {
            let idx = track.t_grid[..usable].partition_point(|&t| t <= e);
            (e, running[idx.max(1) - 1])
        })
        .collect();
    let k_hat = running.last().copied().unwrap_or(1.0);
    let verdict = if let Some(d) = &diagnostic {
        UniformStability::Inconclusive { reason: d.clone() }
    } else {
        trend_verdict(&k_trend, k_hat)
    };
    StabilityReport {
        k_hat,
        k_trend,
        verdict_uniform_stability: verdict,
        asymptotic_limit: None,
        verdict_asymptotically_constant: AsymptoticVerdict::Inconclusive { reason: "not evaluated".into() },
        diagnostic,
    }
}

/// Saturation of the last three windows within 1% means stable; four consecutive
/// increments of `log K` of at least 0.05 each means unstable.
fn trend_verdict(k_trend: &[(f64, f64)], k_hat: f64) -> UniformStability {
    let ks: Vec<f64> = k_trend.iter().map(|p| p.1).collect();
    if ks.len() >= 5 {
        let logs: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
        let inc: Vec<f64> = logs.windows(2).map(|w| w[1] - w[0]).collect();
        let last4 = &inc[inc.len() - 4..];
        if last4.iter().all(|&d| d >= 0.05) {
            return UniformStability::EvidenceUnstable { growth_exponent: last4.iter().sum::<f64>() / 4.0 };
        }
    }
    if ks.len() >= 3 {
        let last3 = &ks[ks.len() - 3..];
        if (last3[2] - last3[0]) <= 0.01 * last3[0] {
            return UniformStability::EvidenceStable { k_hat };
        }
    }
    UniformStability::Inconclusive { reason: format!("K trend neither saturates nor grows steadily (K = {k_hat:.4})") }
}

/// Time-averaged limit over the final `window_fraction` of the trajectory.
pub fn asymptotic_limit(traj: &Trajectory, window_fraction: f64, tol: f64) -> AsymptoticVerdict {
    let (t0, t1) = (traj.t[0], *traj.t.last().unwrap());
    if t1 - t0 < 10.0 {
        return AsymptoticVerdict::Inconclusive { reason: format!("window length {} < 10", t1 - t0) };
    }
    let w = window_fraction * (t1 - t0);
    let window = |lo: f64, hi: f64| -> Option<(DVector<f64>, f64)> {
        let idx: Vec<usize> = (0..traj.t.len()).filter(|&k| traj.t[k] >= lo && traj.t[k] <= hi).collect();
        if idx.len() < 2 {
            return None;
        }
        let mut mean = DVector::zeros(traj.phi[0].len());
        let mut total = 0.0;
        for p in idx.windows(2) {
            let dt = traj.t[p[1]] - traj.t[p[0]];
            mean += (&traj.phi[p[0]] + &traj.phi[p[1]]) * (0.5 * dt);
            total += dt;
        }
        mean /= total;
        let dev = idx.iter().map(|&k| (&traj.phi[k] - &mean).amax()).fold(0.0, f64::max);
        Some((mean, dev))
    };
    let (Some((lim, dev)), Some((_, prev))) = (window(t1 - w, t1), window(t1 - 2.0 * w, t1 - w)) else {
        return AsymptoticVerdict::Inconclusive { reason: "too few samples in the final windows".into() };
    };
    let negligible = 1e-14 * lim.amax().max(1.0);
    if dev <= tol && (dev <= 0.5 * prev || dev <= negligible) {
        AsymptoticVerdict::EvidenceYes { limit: lim.iter().copied().collect(), residual: dev }
    } else if dev > tol && dev > 0.5 * prev {
        AsymptoticVerdict::EvidenceNo { deviation: dev }
    } else {
        AsymptoticVerdict::Inconclusive { reason: format!("tail deviation {dev:e}, previous window {prev:e}") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GronwallCheck {
    pub worst_ratio: f64,
    pub at: (f64, f64),
}

/// Worst ratio `|φ(t)| / (|φ(s)| exp ∫_s^t μ)` over sample pairs `s <= t`.
///
/// With `B(t) = -R(t)` the system reads `φ' = B φ`, and `(B + Bᵀ)/2 = S`, so
/// `μ` must be the top eigenvalue of `S` for the same generator.
pub fn gronwall_bound_check(traj: &Trajectory, mu: &(dyn Fn(f64) -> f64 + Sync), breaks: &[f64]) -> GronwallCheck {
    let nt = traj.t.len();
    let pieces: Vec<f64> = (1..nt)
        .into_par_iter()
        .map(|k| integrate_piecewise(mu, traj.t[k - 1], traj.t[k], breaks, 1e-13).0)
        .collect();
    // w(t) = log|φ(t)| - ∫_{t0}^t μ must be nonincreasing; the worst ratio is max_t (w(t) - min_{s<=t} w(s))
    let mut cum = 0.0;
    let mut best = (0.0, (traj.t[0], traj.t[0]));
    let mut lo = (f64::INFINITY, traj.t[0]);
    for k in 0..nt {
        if k > 0 {
            cum += pieces[k - 1];
        }
        let w = traj.phi[k].norm().ln() - cum;
        if w < lo.0 {
            lo = (w, traj.t[k]);
        }
        if w - lo.0 > best.0 {
            best = (w - lo.0, (lo.1, traj.t[k]));
        }
    }
    GronwallCheck { worst_ratio: best.0.exp(), at: best.1 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub l1_of_difference: f64,
    pub k_hat_r: f64,
    pub k_hat_rtil: f64,
    /// `max(K̃/K, K/K̃)`.
    pub bound_factor: f64,
    /// The constant in the exponent: `max(K̂_R, K̂_R̃)` measured on the window.
    pub c_meas: f64,
    /// `exp(c_meas · l1)`.
    pub bound: f64,
    pub holds: bool,
}

/// Compare stability constants of `R` and `R̃` against `K̃ <= K exp(c ∫|R̃ - R|)`.
pub fn perturbation_equivalence(
    gen: &dyn Generator,
    gen_til: &dyn Generator,
    t_grid: &[f64],
    tol: f64,
) -> Result<PerturbationReport> {
    check_grid(t_grid)?;
    let mut breaks = gen.breakpoints();
    breaks.extend(gen_til.breakpoints());
    let (t0, t1) = (t_grid[0], *t_grid.last().unwrap());
    let diff = |t: f64| spectral_norm(&(gen_til.eval(t) - gen.eval(t)));
    let ends = window_ends(t0, t1, TREND_LEVELS);
    let mut partial = vec![0.0];
    for w in ends.windows(2) {
        let (v, _) = integrate_piecewise(diff, w[0], w[1], &breaks, 1e-12);
        partial.push(partial.last().unwrap() + v);
    }
    let first = integrate_piecewise(diff, t0, ends[0], &breaks, 1e-12).0;
    let l1 = first + partial.last().unwrap();
    let inc: Vec<f64> = partial.windows(2).map(|w| w[1] - w[0]).collect();
    let m = inc.len();
    let tiny = 1e-12 * l1.max(1e-300);
    let growing = m >= 3
        && inc[m - 1] > tiny
        && inc[m - 1] > 0.75 * inc[m - 2]
        && inc[m - 2] > 0.75 * inc[m - 3];
    if growing {
        return Err(Error::NonIntegrable(format!(
            "increments over the last doubling windows {:.3e}, {:.3e}, {:.3e} do not decay",
            inc[m - 3],
            inc[m - 2],
            inc[m - 1]
        )));
    }
    let k = stability_constant(&fundamental_matrix(gen, t_grid, tol)?).k_hat;
    let kt = stability_constant(&fundamental_matrix(gen_til, t_grid, tol)?).k_hat;
    let c_meas = k.max(kt);
    let bound_factor = (kt / k).max(k / kt);
    let bound = (c_meas * l1).exp();
    Ok(PerturbationReport {
        l1_of_difference: l1,
        k_hat_r: k,
        k_hat_rtil: kt,
        bound_factor,
        c_meas,
        bound,
        holds: bound_factor <= bound * (1.0 + 10.0 * tol),
    })
}

/// Run the full stability analysis of a generator on `[t0, t1]`.
pub fn analyze(gen: &dyn Generator, t0: f64, t1: f64, samples: usize, tol: f64) -> Result<StabilityReport> {
    let grid = analysis_grid(t0, t1, samples, &gen.breakpoints());
    let track = fundamental_matrix(gen, &grid, tol)?;
    let mut report = stability_constant(&track);
    let n = gen.dim();
    let mut phi0 = DVector::from_element(n, 1.0);
    phi0 /= (n as f64).sqrt();
    let traj = integrate_on_grid(gen, &grid, &phi0, tol)?;
    let verdict = asymptotic_limit(&traj, 0.05, 1e-4);
    if let AsymptoticVerdict::EvidenceYes { limit, .. } = &verdict {
        report.asymptotic_limit = Some(limit.clone());
    }
    report.verdict_asymptotically_constant = verdict;
    Ok(report)
}

/// Evenly spaced samples plus every breakpoint inside the window.
pub fn analysis_grid(t0: f64, t1: f64, samples: usize, breaks: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=samples).map(|k| t0 + (t1 - t0) * k as f64 / samples as f64).collect();
    grid.extend(breaks.iter().copied().filter(|&b| b > t0 && b < t1));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}
