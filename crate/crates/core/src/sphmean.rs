//! Mean values over the unit sphere and the radial moment family.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientField, Radius};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Nodes on `S^{n-1}` with weights summing to one.
#[derive(Clone, Debug)]
pub struct SphericalGrid {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SphericalGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mean of `f` over the sphere.
    pub fn mean<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        (0..self.len()).map(|k| self.weights[k] * f(self.node(k))).sum()
    }
}

/// Surface area of `S^{n-1}`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => {
            // 2 π^{n/2} / Γ(n/2) by recursion |S^{n-1}| = 2π/(n-2) |S^{n-3}|
            let mut a = if n % 2 == 0 { 2.0 * PI } else { 4.0 * PI };
            let mut k = if n % 2 == 0 { 2 } else { 3 };
            while k < n {
                k += 2;
                a *= 2.0 * PI / (k - 2) as f64;
            }
            a
        }
    }
}

/// Trapezoid rule on the circle (n = 2) or Gauss–Legendre × uniform azimuth on S² (n = 3).
pub fn sphere_grid(n: usize, resolution: usize) -> Result<SphericalGrid> {
    if resolution < 8 {
        return Err(Error::InvalidArgument(format!("sphere grid resolution {resolution} < 8")));
    }
    match n {
        2 => {
            let m = resolution;
            let mut nodes = Vec::with_capacity(2 * m);
            for k in 0..m {
                let a = 2.0 * PI * k as f64 / m as f64;
                nodes.extend([a.cos(), a.sin()]);
            }
            Ok(SphericalGrid { dim: 2, nodes, weights: vec![1.0 / m as f64; m] })
        }
        3 => {
            let m = resolution;
            let (z, wz) = gauss_legendre(m.div_ceil(2));
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            for (&c, &wc) in z.iter().zip(&wz) {
                let s = (1.0 - c * c).sqrt();
                for k in 0..m {
                    let a = 2.0 * PI * k as f64 / m as f64;
                    nodes.extend([s * a.cos(), s * a.sin(), c]);
                    weights.push(0.5 * wc / m as f64);
                }
            }
            Ok(SphericalGrid { dim: 3, nodes, weights })
        }
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

pub fn default_grid(n: usize) -> Result<SphericalGrid> {
    sphere_grid(n, 64)
}

/// `R(r) = mean(A(rθ) - n (A θ) θᵀ)`.
///
/// The identity part of `A` has exactly zero mean contribution, so only
/// `Ω = A - I` is integrated; rounding then scales with `|Ω|` instead of 1,
/// which matters once `R` is integrated over long log-time ranges.
pub fn mean_matrix_r(field: &CoefficientField, radius: Radius, grid: &SphericalGrid) -> DMatrix<f64> {
    let n = field.dim();
    let nf = n as f64;
    let mut out = DMatrix::zeros(n, n);
    for k in 0..grid.len() {
        let th = grid.node(k);
        let w = grid.weight(k);
        let a = field.deviation_polar(radius, th);
        for l in 0..n {
            let at: f64 = (0..n).map(|j| a[(l, j)] * th[j]).sum();
            for m in 0..n {
                out[(l, m)] += w * (a[(l, m)] - nf * at * th[m]);
            }
        }
    }
    out
}

/// `S = -(R + Rᵀ)/2`.
pub fn symmetrized_s(r: &DMatrix<f64>) -> DMatrix<f64> {
    -(r + r.transpose()) * 0.5
}

/// Largest eigenvalue of a symmetric matrix.
pub fn mu_max(s: &DMatrix<f64>) -> f64 {
    match s.nrows() {
        1 => s[(0, 0)],
        2 => {
            let (a, b, d) = (s[(0, 0)], 0.5 * (s[(0, 1)] + s[(1, 0)]), s[(1, 1)]);
            0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt()
        }
        _ => s.clone().symmetric_eigen().eigenvalues.max(),
    }
}

/// The radial moments at one radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentData {
    pub radius: Radius,
    pub alpha: f64,
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub a_mat: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub c_mat: DMatrix<f64>,
    pub r_mat: DMatrix<f64>,
    pub s_mat: DMatrix<f64>,
    pub mu: f64,
    /// `max |R - (C - nB)|` between the two independent quadrature paths.
    pub consistency: f64,
}

impl MomentData {
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Moments of the identity field.
    pub fn identity(n: usize, radius: Radius) -> Self {
        let id = DMatrix::<f64>::identity(n, n);
        Self {
            radius,
            alpha: 1.0,
            beta: DVector::zeros(n),
            gamma: DVector::zeros(n),
            a_mat: &id / n as f64,
            b_mat: &id / n as f64,
            c_mat: id,
            r_mat: DMatrix::zeros(n, n),
            s_mat: DMatrix::zeros(n, n),
            mu: 0.0,
            consistency: 0.0,
        }
    }
}

pub fn appendix_moments(field: &CoefficientField, radius: Radius, grid: &SphericalGrid) -> MomentData {
    let n = field.dim();
    let mut alpha = 0.0;
    let mut beta = DVector::zeros(n);
    let mut gamma = DVector::zeros(n);
    let mut a_mat = DMatrix::zeros(n, n);
    let mut b_mat = DMatrix::zeros(n, n);
    let mut c_mat = DMatrix::zeros(n, n);
    for k in 0..grid.len() {
        let th = DVector::from_column_slice(grid.node(k));
        let w = grid.weight(k);
        let a = field.eval_polar(radius, grid.node(k));
        let at = &a * &th;
        let q = th.dot(&at);
        alpha += w * q;
        beta.axpy(w * q, &th, 1.0);
        gamma.axpy(w, &at, 1.0);
        a_mat += &th * th.transpose() * (w * q);
        b_mat += &at * th.transpose() * w;
        c_mat += a * w;
    }
    let r_mat = mean_matrix_r(field, radius, grid);
    let consistency = (&c_mat - &b_mat * n as f64 - &r_mat).abs().max();
    let s_mat = symmetrized_s(&r_mat);
    let mu = mu_max(&s_mat);
    MomentData { radius, alpha, beta, gamma, a_mat, b_mat, c_mat, r_mat, s_mat, mu, consistency }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// `mean f(rθ) = 0`
    MeanZero,
    /// `mean θ_k f(rθ) = 0` for every k
    MomentZero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityResidual {
    /// Conclusion integrals: for `MeanZero` the pair is `(mean θ·∇f, 0)`;
    /// for `MomentZero` it is `(max_i |mean ∂_i f|, max_i |mean θ_i θ_j ∂_j f|)`.
    pub residuals: (f64, f64),
    /// Size of the hypothesis integral at this radius.
    pub hypothesis_residual: f64,
    pub violation: Option<String>,
}

/// Evaluate the spherical-mean orthogonality identities for `f` at radius `r`.
pub fn orthogonality_check<F, G>(f: F, grad: G, r: f64, grid: &SphericalGrid, hyp: Hypothesis, tol: f64) -> OrthogonalityResidual
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = grid.dim();
    let point = |th: &[f64]| th.iter().map(|v| r * v).collect::<Vec<f64>>();
    let (residuals, hypothesis_residual) = match hyp {
        Hypothesis::MeanZero => {
            let h = grid.mean(|th| f(&point(th))).abs();
            let c = grid.mean(|th| {
                let g = grad(&point(th));
                (0..n).map(|i| th[i] * g[i]).sum()
            });
            ((c.abs(), 0.0), h)
        }
        Hypothesis::MomentZero => {
            let h = (0..n).map(|k| grid.mean(|th| th[k] * f(&point(th))).abs()).fold(0.0, f64::max);
            let c1 = (0..n).map(|i| grid.mean(|th| grad(&point(th))[i]).abs()).fold(0.0, f64::max);
            let c2 = (0..n)
                .map(|i| {
                    grid.mean(|th| {
                        let g = grad(&point(th));
                        th[i] * (0..n).map(|j| th[j] * g[j]).sum::<f64>()
                    })
                    .abs()
                })
                .fold(0.0, f64::max);
            ((c1, c2), h)
        }
    };
    let violation = (hypothesis_residual > tol)
        .then(|| format!("hypothesis {hyp:?} fails at r = {r}: residual {hypothesis_residual:e}"));
    OrthogonalityResidual { residuals, hypothesis_residual, violation }
}
