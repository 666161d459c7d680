//! First-order block reduction of the radial mode equations (homogeneous mode).
//!
//! With `V = (v, V_2)` the reduced system is `dV/dt + (M_∞ + S_1(t)) V = 0`,
//! where `M_∞` has eigenvalues `0` and `-n`, each `n` times, and `J`
//! diagonalizes it. The change of variables `V = J (φ, ψ)` separates the
//! bounded mode `φ` from the growing mode `ψ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientField, Radius};
use crate::error::{Error, Result};
use crate::sphmean::{appendix_moments, MomentData, SphericalGrid};

fn blocks(n: usize, tl: f64, tr: f64, bl: f64, br: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, i)] = tl;
        m[(i, n + i)] = tr;
        m[(n + i, i)] = bl;
        m[(n + i, n + i)] = br;
    }
    m
}

/// `M_∞ = [[-I, nI], [(1 - 1/n)I, (1 - n)I]]`.
pub fn m_infinity(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    blocks(n, -1.0, nf, 1.0 - 1.0 / nf, 1.0 - nf)
}

/// `J = [[nI, nI], [I, (1 - n)I]]`.
pub fn jordanizer(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    blocks(n, nf, nf, 1.0, 1.0 - nf)
}

/// Closed-form `J^{-1} = [[(n-1)/n², 1/n], [1/n², -1/n]] ⊗ I`.
pub fn jordanizer_inverse(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    blocks(n, (nf - 1.0) / (nf * nf), 1.0 / nf, 1.0 / (nf * nf), -1.0 / nf)
}

fn checked_lu(a: &DMatrix<f64>) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let sv = a.clone().svd(false, false).singular_values;
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > 1e8 {
        return Err(Error::IllConditioned(cond));
    }
    Ok(a.clone().lu())
}

/// `S_1 = [[I - A⁻¹B, A⁻¹ - nI], [C - BA⁻¹B + ((1-n)/n) I, BA⁻¹ - I]]`.
pub fn s1_matrix(m: &MomentData) -> Result<DMatrix<f64>> {
    let n = m.dim();
    let nf = n as f64;
    let id = DMatrix::<f64>::identity(n, n);
    let lu = checked_lu(&m.a_mat)?;
    let solve = |rhs: DMatrix<f64>| lu.solve(&rhs).expect("checked invertible");
    // grouped so that the identity moments give exact zeros
    let d = &id / nf - &m.b_mat;
    let tl = solve(&m.a_mat - &m.b_mat);
    let tr = solve(&id - &m.a_mat * nf);
    // C - BA⁻¹B + ((1-n)/n)I = (C - I) + (I/n - B) + B A⁻¹(A - B)
    let bl = (&m.c_mat - &id) + d + &m.b_mat * &tl;
    // A is symmetric, so (B - A)A⁻¹ = (A⁻¹(B - A)ᵀ)ᵀ
    let br = solve((&m.b_mat - &m.a_mat).transpose()).transpose();
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    s.view_mut((0, 0), (n, n)).copy_from(&tl);
    s.view_mut((0, n), (n, n)).copy_from(&tr);
    s.view_mut((n, 0), (n, n)).copy_from(&bl);
    s.view_mut((n, n), (n, n)).copy_from(&br);
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R1Residual {
    pub r1: DMatrix<f64>,
    /// `max |R_1 - (C - nB)|`
    pub residual: f64,
    /// `max |(C - nB) - R|` with `R` from the direct quadrature.
    pub quadrature_residual: f64,
}

/// `R_1 = ((n-1)/n²) A⁻¹ - ((n-1)/n) A⁻¹B + C - BA⁻¹B + (1/n) BA⁻¹ - I`.
pub fn r1_block_residual(m: &MomentData) -> Result<R1Residual> {
    let n = m.dim();
    let nf = n as f64;
    let id = DMatrix::<f64>::identity(n, n);
    let lu = checked_lu(&m.a_mat)?;
    // R_1 = (C - I) + ((n-1)/n I + B) A⁻¹ (I/n - B)
    let d = &id / nf - &m.b_mat;
    let r1 = (&m.c_mat - &id) + (&id * ((nf - 1.0) / nf) + &m.b_mat) * lu.solve(&d).expect("checked invertible");
    let cnb = &m.c_mat - &m.b_mat * nf;
    let residual = (&r1 - &cnb).abs().max();
    Ok(R1Residual { r1, residual, quadrature_residual: m.consistency })
}

/// `(φ, ψ) = J⁻¹ V`.
pub fn transform_to_phi_psi(v: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    let w = jordanizer_inverse(n) * v;
    (w.rows(0, n).into_owned(), w.rows(n, n).into_owned())
}

/// `V = J (φ, ψ)`.
pub fn transform_from_phi_psi(phi: &DVector<f64>, psi: &DVector<f64>) -> DVector<f64> {
    let n = phi.len();
    let mut w = DVector::zeros(2 * n);
    w.rows_mut(0, n).copy_from(phi);
    w.rows_mut(n, n).copy_from(psi);
    jordanizer(n) * w
}

/// The reduced system of a field, with `S_1` assembled on demand from moments at `r = e^{-t}`.
pub struct ReducedSystem<'a> {
    pub n: usize,
    pub m_inf: DMatrix<f64>,
    pub j: DMatrix<f64>,
    field: &'a CoefficientField,
    grid: &'a SphericalGrid,
}

impl<'a> ReducedSystem<'a> {
    pub fn new(field: &'a CoefficientField, grid: &'a SphericalGrid) -> Self {
        let n = field.dim();
        Self { n, m_inf: m_infinity(n), j: jordanizer(n), field, grid }
    }

    pub fn moments_at(&self, t: f64) -> MomentData {
        appendix_moments(self.field, Radius::from_log(t), self.grid)
    }

    pub fn s1_at(&self, t: f64) -> Result<DMatrix<f64>> {
        s1_matrix(&self.moments_at(t))
    }

    pub fn r1_residual_at(&self, t: f64) -> Result<f64> {
        Ok(r1_block_residual(&self.moments_at(t))?.residual)
    }
}
