//! Compressed sparse rows and Jacobi-preconditioned conjugate gradients.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Assemble from triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        // stable, so duplicates are summed in insertion order
        t.par_sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(t.len() / 2);
        let mut val: Vec<f64> = Vec::with_capacity(t.len() / 2);
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(j);
                val.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col, val }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().with_min_len(1024).for_each(|(i, yi)| {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            *yi = self.col[a..b].iter().zip(&self.val[a..b]).map(|(&j, &v)| v * x[j]).sum();
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
                (a..b).find(|&k| self.col[k] == i).map(|k| self.val[k]).unwrap_or(0.0)
            })
            .collect()
    }

    /// `max |A - Aᵀ|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col[k];
                let (a, b) = (self.row_ptr[j], self.row_ptr[j + 1]);
                let t = self.col[a..b].binary_search(&i).map(|p| self.val[a + p]).unwrap_or(0.0);
                worst = worst.max((self.val[k] - t).abs());
            }
        }
        worst
    }
}

/// Fixed-size chunks summed in order, so the result does not depend on thread scheduling.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> =
        a.par_chunks(4096).zip(b.par_chunks(4096)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
    partial.iter().sum()
}

pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `|b - Ax| / |b|`
    pub relative_residual: f64,
}

/// Solve `Ax = b` for symmetric positive definite `A` to relative residual `tol`.
pub fn pcg(a: &Csr, b: &[f64], x0: Vec<f64>, tol: f64, max_iter: usize) -> Result<CgOutcome> {
    let n = a.n;
    let dinv: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let mut x = x0;
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    for it in 0..max_iter {
        let res = dot(&r, &r).sqrt() / bnorm;
        if it % 100 == 0 {
            history.push(res);
        }
        if res <= tol {
            return Ok(CgOutcome { x, iterations: it, relative_residual: res });
        }
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        z.par_iter_mut().zip(&r).zip(&dinv).for_each(|((zi, ri), di)| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    let res = dot(&r, &r).sqrt() / bnorm;
    Err(Error::NoConvergence { iterations: max_iter, residual: res, history })
}
