//! Dormand–Prince 5(4) with step control, restarts at breakpoints, and outputs at requested times.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MAX_STEPS: usize = 20_000_000;

pub(crate) struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub dy: Vec<Vec<f64>>,
    /// Sum of local error estimates (max norm) over each output interval; the first entry is 0.
    pub err: Vec<f64>,
}

/// Integrate `y' = f(t, y)` from `outputs[0]` through every later output time.
///
/// The right-hand side is never evaluated at or beyond the right end of a
/// segment between consecutive stops, so a jump located at a stop is seen
/// only from the correct side.
pub(crate) fn dopri5<F>(f: F, outputs: &[f64], y0: &[f64], tol: f64, breaks: &[f64]) -> Result<Solution>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let m = y0.len();
    let t0 = outputs[0];
    let t_end = *outputs.last().unwrap();
    let mut stops: Vec<(f64, bool)> = outputs.iter().map(|&t| (t, true)).collect();
    stops.extend(breaks.iter().filter(|&&b| b > t0 && b < t_end).map(|&b| (b, false)));
    stops.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    stops.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 |= b.1;
            true
        } else {
            false
        }
    });

    let (atol, rtol) = (tol, tol);
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; m]; 7];
    let mut ytmp = vec![0.0; m];
    let mut ynew = vec![0.0; m];
    let mut sol = Solution { t: vec![t0], y: vec![y.clone()], dy: vec![], err: vec![0.0] };
    let mut d0 = vec![0.0; m];
    f(t0, &y, &mut d0);
    sol.dy.push(d0);

    let mut h = (0.1 * tol.powf(0.2)).min(t_end - t0).max(1e-12);
    let mut steps = 0usize;
    let mut acc_err = 0.0;

    for w in stops.windows(2) {
        let (a, b) = (w[0].0, w[1].0);
        if b <= a {
            continue;
        }
        let b_left = b.next_down();
        let clamp = |t: f64| if t >= b { b_left } else { t };
        let mut t = a;
        f(t, &y, &mut k[0]);
        let mut rejected = false;
        while t < b {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::StepUnderflow { t });
            }
            let last = h >= b - t;
            let hs = if last { b - t } else { h };
            for s in 1..7 {
                for i in 0..m {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += hs * A[s][j] * kj[i];
                    }
                    ytmp[i] = acc;
                }
                f(clamp(t + C[s] * hs), &ytmp, &mut k[s]);
                if s == 6 {
                    ynew.copy_from_slice(&ytmp);
                }
            }
            let mut errn = 0.0;
            let mut emax = 0.0f64;
            for i in 0..m {
                let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * hs;
                let sc = atol + rtol * y[i].abs().max(ynew[i].abs());
                errn += (e / sc) * (e / sc);
                emax = emax.max(e.abs());
            }
            let errn = (errn / m as f64).sqrt();
            if !errn.is_finite() {
                return Err(Error::StepUnderflow { t });
            }
            if errn <= 1.0 {
                t = if last { b } else { t + hs };
                y.copy_from_slice(&ynew);
                k.swap(0, 6);
                acc_err += emax;
                let fac = if errn == 0.0 { 5.0 } else { (0.9 * errn.powf(-0.2)).clamp(0.2, 5.0) };
                h = if rejected { hs.min(h) } else { hs * fac };
                if last {
                    h = h.max(hs);
                }
                rejected = false;
            } else {
                h = hs * (0.9 * errn.powf(-0.2)).max(0.2);
                rejected = true;
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t });
                }
            }
        }
        if w[1].1 {
            sol.t.push(b);
            sol.y.push(y.clone());
            sol.dy.push(k[0].clone());
            sol.err.push(acc_err);
            acc_err = 0.0;
        }
    }
    Ok(sol)
}
