//! Gilbarg–Serrin fields `a_ij = δ_ij + g(r) θ_i θ_j`.
//!
//! For these fields `R(r) = ((1-n)/n) g(r) I`, so the log-time system is the
//! scalar equation `dφ/dt = ((n-1)/n) g̃(t) φ` with `g̃(t) = g(e^{-t})`.
//! This module builds scalar generators, their closed-form solutions, block
//! generators whose partial integrals are unbounded on windows while the
//! improper integral converges (or tends to `-∞`), and the regular solution of
//! the radial mode equation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientField, Modulus, Radius};
use crate::criteria::{square_dini_integral, IntegralEvidence, LadderBudget};
use crate::dynsys::{
    analysis_grid, asymptotic_limit, fundamental_matrix, integrate_on_grid, stability_constant, window_ends,
    AsymptoticVerdict, Generator, UniformStability, TREND_LEVELS,
};
use crate::error::{Error, Result};
use crate::profile::{Profile, Segment};
use crate::sphmean::{default_grid, mean_matrix_r};

/// A scalar log-time generator `g̃`, acting as `R = -((n-1)/n) g̃`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarGenerator {
    pub n: usize,
    pub gtil: Profile,
    pub breakpoints: Vec<f64>,
    /// `|g̃(t)| <= envelope(t)` when present.
    pub envelope: Option<Profile>,
    /// End of the meaningful window, for constructed generators.
    pub horizon: Option<f64>,
}

impl ScalarGenerator {
    pub fn new(n: usize, gtil: Profile) -> Self {
        let breakpoints = gtil.breakpoints();
        Self { n, gtil, breakpoints, envelope: None, horizon: None }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.gtil.eval_t(t)
    }

    /// Closed-form `∫_{t0}^{t1} g̃`, if any.
    pub fn analytic_integral(&self, t0: f64, t1: f64) -> Option<f64> {
        self.gtil.integral_t(t0, t1)
    }

    /// `(n-1)/n`, the factor in front of `g̃` in the scalar equation.
    pub fn rate(&self) -> f64 {
        (self.n as f64 - 1.0) / self.n as f64
    }

    /// The Gilbarg–Serrin field with profile `g = g̃`.
    pub fn to_field(&self) -> Result<CoefficientField> {
        let omega = self.envelope.clone().unwrap_or_else(|| self.gtil.abs_envelope());
        let f = CoefficientField::gilbarg_serrin(self.n, self.gtil.clone(), Modulus::new(omega))?;
        Ok(match self.horizon {
            Some(h) => f.with_horizon(h),
            None => f,
        })
    }
}

impl Generator for ScalarGenerator {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -self.rate() * self.gtil.eval_t(t))
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
    fn mu(&self, t: f64) -> f64 {
        self.rate() * self.gtil.eval_t(t)
    }
}

/// Reduce a Gilbarg–Serrin field to its scalar generator, cross-checking `R` by quadrature.
pub fn scalar_reduction(field: &CoefficientField) -> Result<(ScalarGenerator, f64)> {
    let g = field.gs_profile().ok_or(Error::NotGilbargSerrin)?;
    let n = field.dim();
    let mut gen = ScalarGenerator::new(n, g.clone());
    gen.envelope = Some(field.modulus().profile.clone());
    gen.horizon = field.horizon();
    let grid = default_grid(n)?;
    let mut worst = 0.0f64;
    for k in 0..40 {
        let t = 0.5 * k as f64;
        let r = mean_matrix_r(field, Radius::from_log(t), &grid);
        let expect = DMatrix::<f64>::identity(n, n) * ((1.0 - n as f64) / n as f64 * gen.eval(t));
        worst = worst.max((r - expect).amax());
    }
    Ok((gen, worst))
}

/// `φ(t) = φ0 exp((n-1)/n ∫_{t0}^{t} g̃)`.
pub fn closed_form_phi(gen: &ScalarGenerator, t0: f64, t: f64, phi0: f64) -> Result<f64> {
    let i = gen.analytic_integral(t0, t).ok_or(Error::MissingClosedForm)?;
    Ok(phi0 * (gen.rate() * i).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CesariKind {
    ConvergentImproper,
    MinusInfinity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CesariParams {
    pub kind: CesariKind,
    pub decay_exponent: f64,
    pub horizon: f64,
    /// Envelope constant `C` in `|g̃(t)| <= C (1 + t)^{-a}`.
    pub envelope: f64,
    /// Positive block integral in the first window.
    pub b0: f64,
    /// Growth of the positive block integral from one window to the next.
    pub delta: f64,
    /// Excess of each negative plateau: `c_j = c0 2^{-j}` or `c_j = c0`.
    pub c0: f64,
    /// Final fraction of the horizon left free of blocks.
    pub quiet_fraction: f64,
    pub t_start: f64,
    pub blocks: usize,
}

impl CesariParams {
    pub fn new(kind: CesariKind) -> Self {
        Self {
            kind,
            decay_exponent: 2.0 / 3.0,
            horizon: 1e4,
            envelope: 2.0,
            b0: 1.0,
            delta: 1.0,
            c0: match kind {
                CesariKind::ConvergentImproper => 0.5,
                CesariKind::MinusInfinity => 1.0,
            },
            quiet_fraction: 0.1,
            t_start: std::f64::consts::LN_2,
            blocks: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub index: usize,
    pub window: (f64, f64),
    /// `[start, switch)` carries `+height`, `[switch, end)` carries `-height`.
    pub start: f64,
    pub switch: f64,
    pub end: f64,
    pub height: f64,
    pub envelope_at_end: f64,
    pub positive_integral: f64,
    pub negative_integral: f64,
    /// `∫_{t_start}^{end} g̃` after the block.
    pub running_integral: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CesariConstruction {
    pub params: CesariParams,
    pub generator: ScalarGenerator,
    pub blocks: Vec<BlockRecord>,
    /// `(window end E_m, sup over t_start <= s <= t <= E_m of ∫_s^t g̃)`.
    pub window_sups: Vec<(f64, f64)>,
    /// `(time, ∫_{t_start}^{time} g̃)` at every breakpoint and window end.
    pub running_integral: Vec<(f64, f64)>,
}

/// Piecewise generator made of `+h/-h` plateau pairs placed in the last dyadic windows of `[t_start, H]`.
///
/// In window `j` (counting from the earliest used window) the positive plateau
/// has integral `b_j = b0 + j·delta` and the negative one `-(b_j + c_j)`; both
/// share the height `h_j = (2 b_j + c_j) / |window|`, so the pair fills the window.
/// `ConvergentImproper` uses `c_j = c0 2^{-j}` and leaves `g̃ = 0` after the
/// blocks, so the running integral settles at `-Σ c_j`. `MinusInfinity` uses
/// `c_j = c0` and fills the time outside the blocks with `-(C/2)(1+t)^{-a}`.
pub fn build_cesari_counterexample(params: &CesariParams) -> Result<CesariConstruction> {
    let a = params.decay_exponent;
    if !(a > 0.5 && a < 1.0) {
        return Err(Error::InvalidArgument(format!("decay exponent {a} outside (1/2, 1)")));
    }
    if params.blocks == 0 || params.blocks as u32 > TREND_LEVELS {
        return Err(Error::InvalidArgument(format!("block count {} outside 1..={TREND_LEVELS}", params.blocks)));
    }
    let h_end = params.horizon;
    let t0 = params.t_start;
    let quiet_start = (1.0 - params.quiet_fraction) * h_end;
    let ends = window_ends(t0, h_end, TREND_LEVELS);
    let first = ends.len() - 1 - params.blocks;
    let env = |t: f64| params.envelope * (1.0 + t).powf(-a);
    let filler = Profile::InvLog { c: -0.5 * params.envelope, a, shift: 1.0 };

    let mut segments = Vec::new();
    let mut blocks = Vec::new();
    let mut cursor = t0;
    for j in 0..params.blocks {
        let (ws, we) = (ends[first + j], ends[first + j + 1].min(quiet_start));
        if we <= ws {
            return Err(Error::Infeasible(format!("window {j} is swallowed by the quiet tail")));
        }
        let b = params.b0 + params.delta * (j + 1) as f64;
        let c = match params.kind {
            CesariKind::ConvergentImproper => params.c0 * 0.5f64.powi(j as i32 + 1),
            CesariKind::MinusInfinity => params.c0,
        };
        let height = (2.0 * b + c) / (we - ws);
        let bound = env(we);
        if height > bound {
            return Err(Error::Infeasible(format!(
                "block {j} on [{ws:.1}, {we:.1}] needs height {height:.3e} for integrals +{b} / -{:.3}, \
                 but the envelope {}·(1+t)^(-{a}) allows only {bound:.3e} at t = {we:.1}",
                b + c,
                params.envelope
            )));
        }
        if params.kind == CesariKind::MinusInfinity && ws > cursor {
            segments.push(Segment { start: cursor, end: ws, value: filler.clone() });
        }
        let switch = ws + b / height;
        segments.push(Segment { start: ws, end: switch, value: Profile::constant(height) });
        segments.push(Segment { start: switch, end: we, value: Profile::constant(-height) });
        blocks.push(BlockRecord {
            index: j,
            window: (ends[first + j], ends[first + j + 1]),
            start: ws,
            switch,
            end: we,
            height,
            envelope_at_end: bound,
            positive_integral: b,
            negative_integral: -(height * (we - switch)),
            running_integral: 0.0,
        });
        cursor = we;
    }
    if params.kind == CesariKind::MinusInfinity && cursor < h_end {
        segments.push(Segment { start: cursor, end: h_end, value: filler.clone() });
    }
    let gtil = Profile::Piecewise { segments };
    for b in &mut blocks {
        b.running_integral = gtil.integral_t(t0, b.end).expect("piecewise closed form");
    }

    let mut knots = gtil.breakpoints();
    knots.extend(&ends);
    knots.push(t0);
    knots.retain(|&t| t >= t0 && t <= h_end);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let running: Vec<(f64, f64)> =
        knots.iter().map(|&t| (t, gtil.integral_t(t0, t).expect("piecewise closed form"))).collect();
    // g̃ keeps one sign between knots, so the extremes of ∫ g̃ sit at knots
    let window_sups = ends
        .iter()
        .map(|&e| {
            let mut lo = f64::INFINITY;
            let mut best = 0.0f64;
            for &(_, f) in running.iter().filter(|p| p.0 <= e) {
                lo = lo.min(f);
                best = best.max(f - lo);
            }
            (e, best)
        })
        .collect();

    let mut generator = ScalarGenerator::new(2, gtil);
    generator.envelope = Some(Profile::InvLog { c: params.envelope, a, shift: 1.0 });
    generator.horizon = Some(h_end);
    Ok(CesariConstruction { params: params.clone(), generator, blocks, window_sups, running_integral: running })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub asym_constant: AsymptoticVerdict,
    pub uniformly_stable: UniformStability,
    pub square_dini: IntegralEvidence,
    pub k_hat: f64,
    pub k_trend: Vec<(f64, f64)>,
    /// `∫ g̃` over the analysis window.
    pub running_integral: f64,
    pub window: (f64, f64),
}

/// Run the stability machinery and the square-Dini test on a scalar generator.
pub fn verify_independence(gen: &ScalarGenerator, tol: f64) -> Result<IndependenceReport> {
    let t0 = std::f64::consts::LN_2;
    let t1 = gen.horizon.unwrap_or(200.0);
    let grid = analysis_grid(t0, t1, 4000, &gen.breakpoints);
    let ode_tol = 1e-10;
    let track = fundamental_matrix(gen, &grid, ode_tol)?;
    let rep = stability_constant(&track);
    let traj = integrate_on_grid(gen, &grid, &DVector::from_element(1, 1.0), ode_tol)?;
    let asym = asymptotic_limit(&traj, 0.05, tol);
    let envelope = gen.envelope.clone().unwrap_or_else(|| gen.gtil.abs_envelope());
    let square_dini = square_dini_integral(&Modulus::new(envelope), &LadderBudget::default());
    let running_integral = crate::quadrature::integrate_piecewise(|t| gen.eval(t), t0, t1, &gen.breakpoints, 1e-12).0;
    Ok(IndependenceReport {
        asym_constant: asym,
        uniformly_stable: rep.verdict_uniform_stability,
        square_dini,
        k_hat: rep.k_hat,
        k_trend: rep.k_trend,
        running_integral,
        window: (t0, t1),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSolution {
    pub r: Vec<f64>,
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    /// `r v'(r)`
    pub rv_prime: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// `exp((n-1)/n ∫_0^t g̃)`, the scalar reduction.
    pub scalar_phi: Vec<f64>,
    /// `(φ(t)/φ(0)) / scalar_phi(t)`; converges when the two agree to first order.
    pub ratio: Vec<f64>,
}

impl ModeSolution {
    /// Relative change of `ratio` over the second half of the samples.
    pub fn ratio_drift(&self) -> f64 {
        let k = self.ratio.len();
        let (mid, last) = (self.ratio[k / 2], self.ratio[k - 1]);
        (last - mid).abs() / last.abs()
    }
}

/// Regular solution `v(r)` of the first-moment mode equation
/// `-[r^n a (r v' + v)]' + r^{n-1} [a r v' + c v] = 0`, `a = (1+g)/n`, `c = 1 + g/n`,
/// normalized by `v(1) = 1`.
///
/// In `t = -ln r` and `V = J (φ, ψ)` the equation separates a neutral mode
/// `φ` from a mode `ψ` growing like `e^{nt}`. The regular solution lies on the
/// invariant manifold `ψ = P(t) φ`, where `P` solves a Riccati equation that is
/// stable when integrated backward from a far time `T` with `P(T) = 0`.
pub fn gs_mode_ode_solution(g: &Profile, n: usize, r_grid: &[f64], tol: f64) -> Result<ModeSolution> {
    if r_grid.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::InvalidArgument("radii must lie in (0, 1]".into()));
    }
    let nf = n as f64;
    let mut ts: Vec<f64> = r_grid.iter().map(|&r| -r.ln()).collect();
    ts.push(0.0);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let t_max = *ts.last().unwrap();
    let t_far = t_max + 40.0 / nf;
    // T = J⁻¹ S_1 J with S_1 = [[0, p], [q, 0]] for these moments
    let coeffs = move |t: f64| {
        let gv = g.eval_t(t);
        let a = (1.0 + gv) / nf;
        let c = 1.0 + gv / nf;
        let p = 1.0 / a - nf;
        let q = c - a - (nf - 1.0) / nf;
        let n2 = nf * nf;
        let t11 = (nf - 1.0) * p / n2 + q;
        let t12 = q - (nf - 1.0) * (nf - 1.0) * p / n2;
        let t21 = p / n2 - q;
        let t22 = (1.0 - nf) * p / n2 - q;
        (t11, t12, t21, t22)
    };
    // backward in s = t_far - t: state (P, L) with L(t) = ∫_t^{t_far} (T11 + T12 P)
    let rhs = |s: f64, y: &[f64], d: &mut [f64]| {
        let t = t_far - s;
        let (t11, t12, t21, t22) = coeffs(t);
        let p = y[0];
        d[0] = -(nf * p - t21 - t22 * p + p * (t11 + t12 * p));
        d[1] = t11 + t12 * p;
    };
    let mut outputs: Vec<f64> = ts.iter().rev().map(|&t| t_far - t).collect();
    outputs.insert(0, 0.0);
    outputs.dedup();
    let breaks: Vec<f64> = g.breakpoints().iter().map(|&b| t_far - b).filter(|&s| s > 0.0).collect();
    let sol = crate::dynsys::rk::dopri5(rhs, &outputs, &[0.0, 0.0], 0.1 * tol, &breaks).map_err(|e| match e {
        Error::StepUnderflow { t } => Error::Stiff { r: (-(t_far - t)).exp() },
        other => other,
    })?;
    // sol samples are in decreasing t
    let mut pl: Vec<(f64, f64, f64)> =
        sol.t.iter().zip(&sol.y).map(|(&s, y)| (t_far - s, y[0], y[1])).filter(|p| p.0 <= t_max + 1e-12).collect();
    pl.reverse();
    let (_, p0, l0) = pl[0];
    let phi0 = 1.0 / (nf * (1.0 + p0));
    let scalar_rate = (nf - 1.0) / nf;
    let mut out = ModeSolution {
        r: vec![],
        t: vec![],
        v: vec![],
        rv_prime: vec![],
        phi: vec![],
        psi: vec![],
        scalar_phi: vec![],
        ratio: vec![],
    };
    let g_int = |t: f64| {
        g.integral_t(0.0, t)
            .unwrap_or_else(|| crate::quadrature::integrate_piecewise(|s| g.eval_t(s), 0.0, t, &g.breakpoints(), 1e-13).0)
    };
    for &(t, p, l) in &pl {
        let phi = phi0 * (l - l0).exp();
        let psi = p * phi;
        let v = nf * (phi + psi);
        let a = (1.0 + g.eval_t(t)) / nf;
        let v2 = phi + (1.0 - nf) * psi;
        let scalar = (scalar_rate * g_int(t)).exp();
        out.r.push((-t).exp());
        out.t.push(t);
        out.v.push(v);
        out.rv_prime.push(v2 / a - v);
        out.phi.push(phi);
        out.psi.push(psi);
        out.scalar_phi.push(scalar);
        out.ratio.push(phi / phi0 / scalar);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reductions() {
        let f = CoefficientField::gilbarg_serrin(2, Profile::inv_log(1.0), Modulus::new(Profile::inv_log(1.0))).unwrap();
        let (gen, resid) = scalar_reduction(&f).unwrap();
        assert!(resid < 1e-10);
        assert!((gen.eval(3.0) - 0.25).abs() < 1e-15);
        assert!(matches!(scalar_reduction(&CoefficientField::identity(2)), Err(Error::NotGilbargSerrin)));
        let g = ScalarGenerator::new(2, Profile::inv_log(1.0));
        assert!((closed_form_phi(&g, 0.0, 8.0, 1.0).unwrap() - 3.0).abs() < 1e-14);
        let e = ScalarGenerator::new(2, Profile::power(1.0, 1.0));
        assert!((closed_form_phi(&e, 0.0, 800.0, 1.0).unwrap() - 0.5f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn cesari_rejects_fast_decay() {
        let mut p = CesariParams::new(CesariKind::ConvergentImproper);
        p.decay_exponent = 0.9;
        match build_cesari_counterexample(&p) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("envelope")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mode_solution_trivial() {
        let r: Vec<f64> = (0..20).map(|k| 0.5f64.powi(k)).collect();
        let s = gs_mode_ode_solution(&Profile::Zero, 2, &r, 1e-10).unwrap();
        assert!(s.v.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(s.rv_prime.iter().all(|v| v.abs() < 1e-12));
    }
}
