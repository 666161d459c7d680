//! Finite-volume Dirichlet solver on the square `[-1, 1]²` and pointwise
//! diagnostics at the origin: the spherical split `u = u0 + v·x + w` on
//! circles, the Lipschitz quotient and an extrapolated gradient.
//!
//! The grid is cell-centered with an even number of cells per side, so the
//! origin is a grid vertex and every diagnostic reads the solution through
//! bicubic interpolation.

pub mod sparse;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use sparse::{pcg, Csr};

pub const MIN_CELLS: usize = 16;
pub const MAX_CELLS: usize = 2048;

/// Named Dirichlet data on the boundary of the square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryData {
    #[serde(rename = "x1")]
    X1,
    #[serde(rename = "x2")]
    X2,
    #[serde(rename = "x1^2-x2^2")]
    Saddle,
    #[serde(rename = "x1*x2")]
    Product,
    #[serde(rename = "sin(x1)")]
    SinX1,
    #[serde(rename = "1")]
    One,
}

impl BoundaryData {
    pub const ALL: [BoundaryData; 6] =
        [BoundaryData::X1, BoundaryData::X2, BoundaryData::Saddle, BoundaryData::Product, BoundaryData::SinX1, BoundaryData::One];

    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            BoundaryData::X1 => x,
            BoundaryData::X2 => y,
            BoundaryData::Saddle => x * x - y * y,
            BoundaryData::Product => x * y,
            BoundaryData::SinX1 => x.sin(),
            BoundaryData::One => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryData::X1 => "x1",
            BoundaryData::X2 => "x2",
            BoundaryData::Saddle => "x1^2-x2^2",
            BoundaryData::Product => "x1*x2",
            BoundaryData::SinX1 => "sin(x1)",
            BoundaryData::One => "1",
        }
    }
}

impl fmt::Display for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryData {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        BoundaryData::ALL
            .into_iter()
            .find(|b| b.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown boundary data '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual `|f - Ku| / |f|` at which CG stops.
    pub tol: f64,
    /// Defaults to `100 N`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-13, max_iter: None }
    }
}

/// Cell values on an `N × N` grid, row-major with `x` varying fastest.
#[derive(Clone, Debug)]
pub struct GridSolution {
    pub n_cells: usize,
    pub h: f64,
    pub u: Vec<f64>,
    pub boundary: Option<BoundaryData>,
    pub field: Option<CoefficientField>,
    pub residual_norm: f64,
    pub iterations: usize,
}

fn check_cells(n: usize) -> Result<()> {
    if n % 2 != 0 || !(MIN_CELLS..=MAX_CELLS).contains(&n) {
        return Err(Error::InvalidArgument(format!("cells per side must be even and in [{MIN_CELLS}, {MAX_CELLS}], got {n}")));
    }
    Ok(())
}

impl GridSolution {
    /// Sample `f` at the cell centers; no equation is solved.
    pub fn from_function(n_cells: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_cells(n_cells)?;
        let h = 2.0 / n_cells as f64;
        let c = |i: usize| -1.0 + (i as f64 + 0.5) * h;
        let u = (0..n_cells * n_cells).map(|k| f(c(k % n_cells), c(k / n_cells))).collect();
        Ok(Self { n_cells, h, u, boundary: None, field: None, residual_norm: 0.0, iterations: 0 })
    }

    pub fn center(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * self.h
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.u[j * self.n_cells + i]
    }

    /// Smallest radius the interpolating stencil resolves.
    pub fn min_radius(&self) -> f64 {
        2.0 * self.h
    }

    /// Bicubic Lagrange interpolation through the 4 × 4 nearest cell centers.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let n = self.n_cells;
        let (i0, wx) = stencil(x, self.h, n);
        let (j0, wy) = stencil(y, self.h, n);
        let mut s = 0.0;
        for (b, wyb) in wy.iter().enumerate() {
            let row = (j0 + b) * n + i0;
            let mut acc = 0.0;
            for (a, wxa) in wx.iter().enumerate() {
                acc += wxa * self.u[row + a];
            }
            s += wyb * acc;
        }
        s
    }

    /// `max |u - f|` over cell centers.
    pub fn max_error(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let n = self.n_cells;
        (0..n * n).map(|k| (self.u[k] - f(self.center(k % n), self.center(k / n))).abs()).fold(0.0, f64::max)
    }

    /// Extreme cell values, for maximum-principle checks.
    pub fn range(&self) -> (f64, f64) {
        self.u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

fn stencil(x: f64, h: f64, n: usize) -> (usize, [f64; 4]) {
    let s = (x + 1.0) / h - 0.5;
    let i0 = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let mut w = [0.0; 4];
    for (a, wa) in w.iter_mut().enumerate() {
        let xa = (i0 + a) as f64;
        *wa = (0..4).filter(|&b| b != a).map(|b| (s - (i0 + b) as f64) / (xa - (i0 + b) as f64)).product();
    }
    (i0, w)
}

/// Affine function of the unknowns: `Σ c_k u_k + constant`.
#[derive(Default)]
struct Affine {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

struct Assembler {
    triplets: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl Assembler {
    /// Adds `½ w ℓ(u)²`.
    fn square(&mut self, w: f64, l: &Affine) {
        for &(i, ci) in &l.terms {
            for &(j, cj) in &l.terms {
                self.triplets.push((i, j, w * ci * cj));
            }
            self.rhs[i] -= w * ci * l.constant;
        }
    }

    /// Adds `w ℓx(u) ℓy(u)`.
    fn product(&mut self, w: f64, lx: &Affine, ly: &Affine) {
        for &(i, ci) in &lx.terms {
            for &(j, cj) in &ly.terms {
                self.triplets.push((i, j, w * ci * cj));
                self.triplets.push((j, i, w * ci * cj));
            }
            self.rhs[i] -= w * ci * ly.constant;
        }
        for &(j, cj) in &ly.terms {
            self.rhs[j] -= w * cj * lx.constant;
        }
    }
}

/// Solve `∂_i(a_ij ∂_j u) = 0` in `(-1, 1)²` with `u = boundary` on the edges.
///
/// The discrete problem minimizes a quadrature of `½∫∇uᵀA∇u`: the diagonal
/// coefficients act on face differences (half cells at the boundary), the
/// off-diagonal one on vertex gradients, with ghost cells `2b - u` outside.
/// The resulting matrix is symmetric and is solved by Jacobi-preconditioned CG.
pub fn solve_dirichlet(field: &CoefficientField, n_cells: usize, boundary: BoundaryData, opts: &SolverOptions) -> Result<GridSolution> {
    if field.dim() != 2 {
        return Err(Error::UnsupportedDimension(field.dim()));
    }
    check_cells(n_cells)?;
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::InvalidArgument(format!("solver tol must lie in (0, 1), got {}", opts.tol)));
    }
    let n = n_cells;
    let h = 2.0 / n as f64;
    let c = |i: isize| -1.0 + (i as f64 + 0.5) * h;
    let node = |i: usize| -1.0 + i as f64 * h;
    let idx = |i: usize, j: usize| j * n + i;
    let mut asm = Assembler { triplets: Vec::with_capacity(n * n * 40), rhs: vec![0.0; n * n] };

    // x-faces: between cells (i-1, j) and (i, j), i = 0..=n
    for j in 0..n {
        for i in 0..=n {
            let (x, y) = (node(i), c(j as isize));
            let a11 = field.eval(&[x, y])[(0, 0)];
            let l = if i == 0 {
                Affine { terms: vec![(idx(0, j), 1.0)], constant: -boundary.eval(x, y) }
            } else if i == n {
                Affine { terms: vec![(idx(n - 1, j), 1.0)], constant: -boundary.eval(x, y) }
            } else {
                Affine { terms: vec![(idx(i, j), 1.0), (idx(i - 1, j), -1.0)], constant: 0.0 }
            };
            let w = if i == 0 || i == n { 2.0 * a11 } else { a11 };
            asm.square(w, &l);
        }
    }
    // y-faces
    for j in 0..=n {
        for i in 0..n {
            let (x, y) = (c(i as isize), node(j));
            let a22 = field.eval(&[x, y])[(1, 1)];
            let l = if j == 0 {
                Affine { terms: vec![(idx(i, 0), 1.0)], constant: -boundary.eval(x, y) }
            } else if j == n {
                Affine { terms: vec![(idx(i, n - 1), 1.0)], constant: -boundary.eval(x, y) }
            } else {
                Affine { terms: vec![(idx(i, j), 1.0), (idx(i, j - 1), -1.0)], constant: 0.0 }
            };
            let w = if j == 0 || j == n { 2.0 * a22 } else { a22 };
            asm.square(w, &l);
        }
    }
    // vertices: cross term a12 ∂1u ∂2u
    let cell = |p: isize, q: isize| -> Affine {
        let inside = |v: isize| v >= 0 && v < n as isize;
        if inside(p) && inside(q) {
            return Affine { terms: vec![(idx(p as usize, q as usize), 1.0)], constant: 0.0 };
        }
        let (pi, qi) = (p.clamp(0, n as isize - 1), q.clamp(0, n as isize - 1));
        let b = boundary.eval(0.5 * (c(p) + c(pi)), 0.5 * (c(q) + c(qi)));
        Affine { terms: vec![(idx(pi as usize, qi as usize), -1.0)], constant: 2.0 * b }
    };
    let combine = |parts: [(&Affine, f64); 4]| -> Affine {
        let mut out = Affine::default();
        for (a, s) in parts {
            out.terms.extend(a.terms.iter().map(|&(k, v)| (k, s * v)));
            out.constant += s * a.constant;
        }
        out
    };
    for jv in 0..=n {
        for iv in 0..=n {
            let (x, y) = (node(iv), node(jv));
            let a12 = field.eval(&[x, y])[(0, 1)];
            if a12 == 0.0 {
                continue;
            }
            let edge = (iv == 0 || iv == n) as i32 + (jv == 0 || jv == n) as i32;
            let area = h * h / f64::from(1 << edge);
            let (ii, jj) = (iv as isize, jv as isize);
            let sw = cell(ii - 1, jj - 1);
            let se = cell(ii, jj - 1);
            let nw = cell(ii - 1, jj);
            let ne = cell(ii, jj);
            let gx = combine([(&ne, 1.0), (&nw, -1.0), (&se, 1.0), (&sw, -1.0)]);
            let gy = combine([(&ne, 1.0), (&se, -1.0), (&nw, 1.0), (&sw, -1.0)]);
            asm.product(a12 * area / (4.0 * h * h), &gx, &gy);
        }
    }

    let k = Csr::from_triplets(n * n, asm.triplets);
    let max_iter = opts.max_iter.unwrap_or(100 * n);
    let out = pcg(&k, &asm.rhs, vec![0.0; n * n], opts.tol, max_iter)?;
    Ok(GridSolution {
        n_cells,
        h,
        u: out.x,
        boundary: Some(boundary),
        field: Some(field.clone()),
        residual_norm: out.relative_residual,
        iterations: out.iterations,
    })
}

/// `Pf = f̄ + 2⟨f θ⟩·θ` on equispaced circle samples, and `f - Pf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub projected: Vec<f64>,
    pub residual: Vec<f64>,
    pub mean: f64,
    pub first_moment: [f64; 2],
}

/// Samples are taken at `θ_k = 2πk/M`, `M >= 3`.
pub fn projection_p(samples: &[f64]) -> Result<Projection> {
    let m = samples.len();
    if m < 3 {
        return Err(Error::InvalidArgument(format!("projection needs at least 3 samples, got {m}")));
    }
    let mf = m as f64;
    let ang = |k: usize| 2.0 * PI * k as f64 / mf;
    let mean = samples.iter().sum::<f64>() / mf;
    let mut mom = [0.0; 2];
    for (k, f) in samples.iter().enumerate() {
        mom[0] += f * ang(k).cos() / mf;
        mom[1] += f * ang(k).sin() / mf;
    }
    let projected: Vec<f64> = (0..m).map(|k| mean + 2.0 * (mom[0] * ang(k).cos() + mom[1] * ang(k).sin())).collect();
    let residual = samples.iter().zip(&projected).map(|(f, p)| f - p).collect();
    Ok(Projection { projected, residual, mean, first_moment: mom })
}

/// Dyadic radii `1/4, 1/8, ...` above the interpolation limit.
pub fn dyadic_radii(sol: &GridSolution) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = 0.25;
    while r > sol.min_radius() * (1.0 + 1e-12) {
        out.push(r);
        r *= 0.5;
    }
    out
}

fn check_radii(sol: &GridSolution, radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument(format!("no radii in ({}, 1/2)", sol.min_radius())));
    }
    for &r in radii {
        if r <= sol.min_radius() {
            return Err(Error::RadiusTooSmall { r, min: sol.min_radius() });
        }
        if r >= 0.5 {
            return Err(Error::InvalidArgument(format!("radius {r} must be below 1/2")));
        }
    }
    Ok(())
}

fn circle(sol: &GridSolution, r: f64, m: usize, offset: f64) -> Vec<f64> {
    (0..m)
        .map(|k| {
            let a = 2.0 * PI * (k as f64 + offset) / m as f64;
            sol.interpolate(r * a.cos(), r * a.sin())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleSplit {
    pub r: f64,
    pub u0: f64,
    pub v: [f64; 2],
    /// `max |w|` on the sampling nodes.
    pub w_max: f64,
    /// Mean and first moment of `w` on a rotated node set of twice the size.
    pub w_mean: f64,
    pub w_moment: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    pub nodes: usize,
    pub circles: Vec<CircleSplit>,
    /// Largest `|⨍w|` or `|⨍wθ|` over all circles.
    pub orthogonality: f64,
}

/// Split `u(rθ) = u0(r) + v(r)·rθ + w(r, θ)` on each circle from `m` samples.
pub fn spectral_decompose(sol: &GridSolution, radii: &[f64], m: usize) -> Result<SpectralDecomposition> {
    check_radii(sol, radii)?;
    let mut circles = Vec::with_capacity(radii.len());
    let mut orth = 0.0f64;
    for &r in radii {
        let p = projection_p(&circle(sol, r, m, 0.0))?;
        let v = [2.0 * p.first_moment[0] / r, 2.0 * p.first_moment[1] / r];
        let w_max = p.residual.iter().fold(0.0f64, |a, w| a.max(w.abs()));
        let m2 = 2 * m;
        let fine = circle(sol, r, m2, 0.5);
        let (mut wm, mut wx, mut wy) = (0.0, 0.0, 0.0);
        for (k, u) in fine.iter().enumerate() {
            let a = 2.0 * PI * (k as f64 + 0.5) / m2 as f64;
            let w = u - p.mean - r * (v[0] * a.cos() + v[1] * a.sin());
            wm += w / m2 as f64;
            wx += w * a.cos() / m2 as f64;
            wy += w * a.sin() / m2 as f64;
        }
        orth = orth.max(wm.abs()).max(wx.abs()).max(wy.abs());
        circles.push(CircleSplit { r, u0: p.mean, v, w_max, w_mean: wm, w_moment: [wx, wy] });
    }
    Ok(SpectralDecomposition { nodes: m, circles, orthogonality: orth })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LipschitzVerdict {
    Bounded,
    Unbounded,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub radii: Vec<f64>,
    /// `max_θ |u(rθ) - u(0)| / r`
    pub quotient: Vec<f64>,
    /// `quotient` divided by `(⨍_{B_{1/2}} u²)^{1/2} / (1/2)`.
    pub normalized: Vec<f64>,
    pub u_origin: f64,
    pub verdict: LipschitzVerdict,
}

/// Quotients along decreasing radii. Unbounded when the last three steps each
/// grow by more than 1%, bounded when none of them grows by more than 5%.
pub fn lipschitz_quotient(sol: &GridSolution, radii: &[f64], m: usize) -> Result<LipschitzReport> {
    check_radii(sol, radii)?;
    let u0 = sol.interpolate(0.0, 0.0);
    let quotient: Vec<f64> =
        radii.iter().map(|&r| circle(sol, r, m, 0.0).iter().fold(0.0f64, |a, u| a.max((u - u0).abs())) / r).collect();
    let n = sol.n_cells;
    let (mut s, mut cnt) = (0.0, 0usize);
    for k in 0..n * n {
        let (x, y) = (sol.center(k % n), sol.center(k / n));
        if x * x + y * y < 0.25 {
            s += sol.u[k] * sol.u[k];
            cnt += 1;
        }
    }
    let scale = (s / cnt.max(1) as f64).sqrt() / 0.5;
    let normalized = quotient.iter().map(|q| if scale > 0.0 { q / scale } else { f64::NAN }).collect();
    let steps: Vec<f64> = quotient.windows(2).map(|w| w[1] / w[0]).collect();
    let verdict = if steps.len() < 3 {
        LipschitzVerdict::Inconclusive
    } else {
        let tail = &steps[steps.len() - 3..];
        if tail.iter().all(|&q| q > 1.01) {
            LipschitzVerdict::Unbounded
        } else if tail.iter().all(|&q| q <= 1.05 || !q.is_finite()) {
            LipschitzVerdict::Bounded
        } else {
            LipschitzVerdict::Inconclusive
        }
    };
    Ok(LipschitzReport { radii: radii.to_vec(), quotient, normalized, u_origin: u0, verdict })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientVerdict {
    EvidenceConverged,
    EvidenceNotConverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub radii: Vec<f64>,
    pub v: Vec<[f64; 2]>,
    /// `(4 v(r/2) - v(r)) / 3` for consecutive dyadic radii.
    pub extrapolated: Vec<[f64; 2]>,
    pub estimate: [f64; 2],
    pub verdict: GradientVerdict,
}

/// `∇u(0)` from the first spherical moments `v(r)` on halving radii.
///
/// Converged when the successive differences `|v(r_{k+1}) - v(r_k)|` never
/// grow, differences below `1e-11` counting as zero.
pub fn gradient_at_origin(sol: &GridSolution, radii: &[f64], m: usize) -> Result<GradientEstimate> {
    let dec = spectral_decompose(sol, radii, m)?;
    let v: Vec<[f64; 2]> = dec.circles.iter().map(|c| c.v).collect();
    let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let extrapolated: Vec<[f64; 2]> =
        v.windows(2).map(|w| [(4.0 * w[1][0] - w[0][0]) / 3.0, (4.0 * w[1][1] - w[0][1]) / 3.0]).collect();
    let diffs: Vec<f64> = v.windows(2).map(|w| dist(w[0], w[1])).collect();
    let converged = diffs.len() >= 2 && diffs.windows(2).all(|w| w[1] <= w[0] || w[1] <= 1e-11);
    let estimate = extrapolated.last().copied().or(v.last().copied()).unwrap_or([f64::NAN; 2]);
    Ok(GradientEstimate {
        radii: radii.to_vec(),
        v,
        extrapolated,
        estimate,
        verdict: if converged { GradientVerdict::EvidenceConverged } else { GradientVerdict::EvidenceNotConverged },
    })
}
