//! One-dimensional quadrature rules.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes increasing.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_m
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(m: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let d = m as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Chebyshev–Lobatto interpolation panel on `[-1, 1]` with its
/// cumulative-integration matrix `Q[i][j] = ∫_{-1}^{x_i} ℓ_j`.
#[derive(Clone, Debug)]
pub struct LobattoPanel {
    pub nodes: Vec<f64>,
    pub cumulative: Vec<Vec<f64>>,
}

impl LobattoPanel {
    pub fn new(m: usize) -> Self {
        assert!(m >= 2);
        let nodes: Vec<f64> = (0..=m).map(|j| -(PI * j as f64 / m as f64).cos()).collect();
        let bary: Vec<f64> = (0..=m)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == m {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let (gx, gw) = gauss_legendre(m + 1);
        let mut cumulative = vec![vec![0.0; m + 1]; m + 1];
        for i in 1..=m {
            let (a, b) = (-1.0, nodes[i]);
            let half = 0.5 * (b - a);
            for (&x, &w) in gx.iter().zip(&gw) {
                let y = a + half * (x + 1.0);
                let l = lagrange_basis(&nodes, &bary, y);
                for j in 0..=m {
                    cumulative[i][j] += half * w * l[j];
                }
            }
        }
        Self { nodes, cumulative }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn lagrange_basis(nodes: &[f64], bary: &[f64], y: f64) -> Vec<f64> {
    if let Some(k) = nodes.iter().position(|&x| x == y) {
        let mut out = vec![0.0; nodes.len()];
        out[k] = 1.0;
        return out;
    }
    let terms: Vec<f64> = nodes.iter().zip(bary).map(|(&x, &b)| b / (y - x)).collect();
    let s: f64 = terms.iter().sum();
    terms.into_iter().map(|v| v / s).collect()
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WK[7] * fc;
    let mut g = GK_WG[3] * fc;
    for i in 0..7 {
        let dx = h * GK_X[i];
        let s = f(c - dx) + f(c + dx);
        k += GK_WK[i] * s;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` on `[a, b]`.
///
/// Returns the value and an error estimate. Bisection stops once the summed
/// estimate is below `tol` or after `max_intervals` subintervals.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let max_intervals = 2000;
    let (v, e) = gk15(&f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= tol || pieces.len() >= max_intervals {
            let val = pieces.iter().map(|p| p.2).sum();
            return (val, err);
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// Integral over `[a, b]` split at `breaks` so no rule straddles a jump.
pub fn integrate_piecewise<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> (f64, f64) {
    let mut cuts = vec![a];
    cuts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    let share = tol / (cuts.len() - 1) as f64;
    cuts.windows(2).fold((0.0, 0.0), |(v, e), w| {
        let (dv, de) = integrate(&f, w[0], w[1], share);
        (v + dv, e + de)
    })
}
