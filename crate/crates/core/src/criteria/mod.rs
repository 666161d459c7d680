//! Integral conditions for Lipschitz continuity and differentiability at the origin,
//! evaluated as truncated integrals with convergence evidence.
//!
//! Every condition is an integral over `0 < r < ε` against `dr/r`, i.e. over
//! `t = -ln r` in `(t_ε, ∞)`. Truncations follow the log-doubling ladder
//! `T_k = t_ε + ln 2 · 2^k`, which corresponds to the radii `ε · 2^{-2^k}`.
//! Slowly decaying integrands such as `1/t²` need `t` in the billions before
//! the truncation error reaches `1e-9`; a ladder of plain dyadic radii would
//! stop at `t ≈ 28`.
//!
//! Integrals along the ladder use composite Chebyshev–Lobatto panels, whose
//! cumulative matrices give every nested integral at the nodes at no extra
//! cost, so `R` is evaluated once per node and shared by all conditions.

mod sequence;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sequence::{sequence_verdict, DivergenceRate, SequenceVerdict};

use crate::coeff::{CoefficientField, Modulus, Radius};
use crate::dynsys::{analyze, spectral_norm, FieldGenerator, StabilityReport};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate_piecewise, LobattoPanel};
use crate::sphmean::{default_grid, mean_matrix_r, mu_max, sphere_area, sphere_grid, symmetrized_s, SphericalGrid};

const PANEL_NODES: usize = 16;
const PANELS_PER_LEVEL: usize = 4;
/// Deepest ladder level used by the volume form, which evaluates the field at `r` itself.
pub const VOLUME_MAX_LEVEL: u32 = 9;

/// Numerical budget shared by all criteria.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderBudget {
    pub eps: f64,
    pub k_max: u32,
    pub tol: f64,
    /// Spherical grid resolution; `None` uses the default for the dimension.
    pub grid_resolution: Option<usize>,
    /// Start of the dynamics window (`t_0`, radius `e^{-t_0}`).
    pub t0: f64,
    /// End of the dynamics window when the field declares no horizon.
    pub dynsys_horizon: f64,
    pub dynsys_samples: usize,
    pub dynsys_tol: f64,
}

impl Default for LadderBudget {
    fn default() -> Self {
        Self {
            eps: 0.5,
            k_max: 40,
            tol: 1e-9,
            grid_resolution: None,
            t0: std::f64::consts::LN_2,
            dynsys_horizon: 200.0,
            dynsys_samples: 2000,
            dynsys_tol: 1e-9,
        }
    }
}

impl LadderBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("eps = {} outside (0, 1]", self.eps)));
        }
        if self.k_max < 3 || self.k_max > 40 {
            return Err(Error::InvalidArgument(format!("k_max = {} outside 3..=40", self.k_max)));
        }
        for (name, v) in [("tol", self.tol), ("dynsys_tol", self.dynsys_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.t0 >= 0.0 && self.dynsys_horizon > self.t0 + 10.0 && self.dynsys_horizon <= 1e6) {
            return Err(Error::InvalidArgument(format!(
                "dynamics window [{}, {}] must have length at least 10 and end by 1e6",
                self.t0, self.dynsys_horizon
            )));
        }
        if self.dynsys_samples < 10 {
            return Err(Error::InvalidArgument("dynsys_samples must be at least 10".into()));
        }
        Ok(())
    }

    pub fn grid(&self, n: usize) -> Result<SphericalGrid> {
        match self.grid_resolution {
            Some(res) => sphere_grid(n, res),
            None => default_grid(n),
        }
    }

    fn t_eps(&self) -> f64 {
        -self.eps.ln()
    }
}

/// Composite Lobatto panels covering `[t_start, T_K]` with every ladder level on a panel edge.
#[derive(Clone, Debug)]
pub struct Ladder {
    pub t_start: f64,
    pub levels: Vec<f64>,
    /// Node times; panel `p` owns `nodes[p*m .. (p+1)*m]`.
    pub nodes: Vec<f64>,
    half_widths: Vec<f64>,
    /// Index of the node sitting on each level.
    level_nodes: Vec<usize>,
    panel: LobattoPanel,
}

impl Ladder {
    pub fn new(t_start: f64, k_max: u32, horizon: Option<f64>, breaks: &[f64]) -> Self {
        let ln2 = std::f64::consts::LN_2;
        let mut levels: Vec<f64> = (0..=k_max).map(|k| t_start + ln2 * 2f64.powi(k as i32)).collect();
        if let Some(h) = horizon {
            levels.retain(|&t| t < h);
            if h > t_start {
                levels.push(h);
            }
        }
        let mut edges = vec![t_start];
        let mut prev = t_start;
        for &lv in &levels {
            for j in 1..=PANELS_PER_LEVEL {
                edges.push(prev + (lv - prev) * j as f64 / PANELS_PER_LEVEL as f64);
            }
            prev = lv;
        }
        let t_end = *levels.last().unwrap_or(&t_start);
        edges.extend(breaks.iter().copied().filter(|&b| b > t_start && b < t_end));
        edges.sort_by(f64::total_cmp);
        edges.dedup_by(|b, a| (*b - *a).abs() <= 1e-13 * a.abs().max(1.0));
        let panel = LobattoPanel::new(PANEL_NODES);
        let m = panel.len();
        let mut nodes = Vec::with_capacity(edges.len() * m);
        let mut half_widths = Vec::with_capacity(edges.len());
        let mut level_nodes = Vec::with_capacity(levels.len());
        let mut li = 0;
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (mid, hw) = (0.5 * (a + b), 0.5 * (b - a));
            nodes.extend(panel.nodes.iter().map(|x| mid + hw * x));
            half_widths.push(hw);
            while li < levels.len() && (levels[li] - b).abs() <= 1e-13 * b.abs().max(1.0) {
                level_nodes.push(nodes.len() - 1);
                li += 1;
            }
        }
        levels.truncate(level_nodes.len());
        Self { t_start, levels, nodes, half_widths, level_nodes, panel }
    }

    /// Running integral `∫_{t_start}^{t_i} f` at every node, from nodal values.
    pub fn cumulative<T>(&self, vals: &[T], zero: T) -> Vec<T>
    where
        T: Clone + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
    {
        let m = self.panel.len();
        let mut out = Vec::with_capacity(vals.len());
        let mut base = zero;
        for (p, hw) in self.half_widths.iter().enumerate() {
            let v = &vals[p * m..(p + 1) * m];
            for i in 0..m {
                let mut acc = base.clone();
                for (j, vj) in v.iter().enumerate() {
                    let c = self.panel.cumulative[i][j];
                    if c != 0.0 {
                        acc += vj.clone() * (hw * c);
                    }
                }
                out.push(acc);
            }
            base = out.last().unwrap().clone();
        }
        out
    }

    pub fn at_levels<T: Clone>(&self, per_node: &[T]) -> Vec<T> {
        self.level_nodes.iter().map(|&i| per_node[i].clone()).collect()
    }

    /// Integrate a scalar function along the ladder and return its level partial values.
    pub fn partial_values(&self, f: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
        let vals: Vec<f64> = self.nodes.par_iter().map(|&t| f(t)).collect();
        self.at_levels(&self.cumulative(&vals, 0.0))
    }
}

/// Partial values of a scalar integral on the ladder with their verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralEvidence {
    /// Truncation times `T_k`; the partial value is the integral up to `T_k`.
    pub levels: Vec<f64>,
    pub partial_values: Vec<f64>,
    pub verdict: SequenceVerdict,
    pub diagnostic: Option<String>,
}

impl IntegralEvidence {
    fn from_partials(levels: Vec<f64>, partial_values: Vec<f64>, tol: f64) -> Self {
        let verdict = sequence_verdict(&partial_values, tol);
        Self { levels, partial_values, verdict, diagnostic: None }
    }

    fn forced_inconclusive(mut self, reason: String) -> Self {
        self.verdict = SequenceVerdict::Inconclusive { reason: reason.clone() };
        self.diagnostic = Some(reason);
        self
    }

    /// Radii `e^{-T_k}` of the truncations.
    pub fn radii(&self) -> Vec<f64> {
        self.levels.iter().map(|t| (-t).exp()).collect()
    }
}

/// Entrywise evidence for a matrix-valued integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixEvidence {
    pub levels: Vec<f64>,
    pub partial_values: Vec<DMatrix<f64>>,
    /// Column-major verdicts of the entries.
    pub entry_verdicts: Vec<SequenceVerdict>,
    /// All entries converge, or the first divergent / oscillating entry.
    pub verdict: SequenceVerdict,
    pub limit: Option<DMatrix<f64>>,
    pub diagnostic: Option<String>,
}

impl MatrixEvidence {
    fn from_partials(levels: Vec<f64>, partial_values: Vec<DMatrix<f64>>, tol: f64) -> Self {
        let (r, c) = partial_values.first().map(|m| m.shape()).unwrap_or((0, 0));
        let entry_verdicts: Vec<SequenceVerdict> = (0..r * c)
            .map(|e| {
                let seq: Vec<f64> = partial_values.iter().map(|m| m[e]).collect();
                sequence_verdict(&seq, tol)
            })
            .collect();
        let (verdict, limit) = if !entry_verdicts.is_empty() && entry_verdicts.iter().all(|v| v.converges()) {
            let lim = DMatrix::from_iterator(r, c, entry_verdicts.iter().map(|v| v.limit().unwrap()));
            let mut residual = 0.0f64;
            let mut accelerated = false;
            for v in &entry_verdicts {
                if let SequenceVerdict::Converges { residual: res, accelerated: acc, .. } = v {
                    residual = residual.max(*res);
                    accelerated |= acc;
                }
            }
            (SequenceVerdict::Converges { limit: spectral_norm(&lim), residual, accelerated }, Some(lim))
        } else if let Some(d) = entry_verdicts.iter().find(|v| matches!(v, SequenceVerdict::Diverges { .. })) {
            (d.clone(), None)
        } else if let Some(o) = entry_verdicts.iter().find(|v| matches!(v, SequenceVerdict::Oscillates { .. })) {
            (o.clone(), None)
        } else {
            let reason = entry_verdicts
                .iter()
                .find_map(|v| match v {
                    SequenceVerdict::Inconclusive { reason } => Some(reason.clone()),
                    _ => None,
                })
                .unwrap_or_else(|| "no entries".into());
            (SequenceVerdict::Inconclusive { reason }, None)
        };
        Self { levels, partial_values, entry_verdicts, verdict, limit, diagnostic: None }
    }
}

/// `∫_0^ε ω(r) dr/r`.
pub fn dini_integral(omega: &Modulus, eps: f64, budget: &LadderBudget) -> IntegralEvidence {
    let ladder = Ladder::new(-eps.ln(), budget.k_max, None, &omega.profile.breakpoints());
    let p = ladder.partial_values(|t| omega.profile.eval_t(t));
    IntegralEvidence::from_partials(ladder.levels.clone(), p, budget.tol)
}

/// `∫_0^1 ω(r)² dr/r`.
pub fn square_dini_integral(omega: &Modulus, budget: &LadderBudget) -> IntegralEvidence {
    let ladder = Ladder::new(0.0, budget.k_max, None, &omega.profile.breakpoints());
    let p = ladder.partial_values(|t| omega.profile.eval_t(t).powi(2));
    IntegralEvidence::from_partials(ladder.levels.clone(), p, budget.tol)
}

/// `R` and `μ(S)` at every ladder node of a field, computed once.
pub struct RCache {
    pub ladder: Ladder,
    pub r: Vec<DMatrix<f64>>,
    pub mu: Vec<f64>,
    pub n: usize,
    tol: f64,
}

impl RCache {
    pub fn new(field: &CoefficientField, budget: &LadderBudget) -> Result<Self> {
        budget.validate()?;
        let grid = budget.grid(field.dim())?;
        let ladder = Ladder::new(budget.t_eps(), budget.k_max, field.horizon(), field.breakpoints());
        let r: Vec<DMatrix<f64>> =
            ladder.nodes.par_iter().map(|&t| mean_matrix_r(field, Radius::from_log(t), &grid)).collect();
        let mu = r.iter().map(|m| mu_max(&symmetrized_s(m))).collect();
        Ok(Self { ladder, r, mu, n: field.dim(), tol: budget.tol })
    }

    fn zero(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.n, self.n)
    }

    /// Running sup of `∫_s^t μ` over `t_ε <= s <= t <= T_k`.
    pub fn condition_11(&self) -> IntegralEvidence {
        let cum = self.ladder.cumulative(&self.mu, 0.0);
        let mut lo = 0.0f64;
        let mut best = 0.0f64;
        let running: Vec<f64> = cum
            .iter()
            .map(|&c| {
                lo = lo.min(c);
                best = best.max(c - lo);
                best
            })
            .collect();
        IntegralEvidence::from_partials(self.ladder.levels.clone(), self.ladder.at_levels(&running), self.tol)
    }

    /// `∫_{t_ε}^{T_k} μ`.
    pub fn condition_15(&self) -> IntegralEvidence {
        let cum = self.ladder.cumulative(&self.mu, 0.0);
        IntegralEvidence::from_partials(self.ladder.levels.clone(), self.ladder.at_levels(&cum), self.tol)
    }

    /// `∫_{t_ε}^{T_k} R`, i.e. `∫_{r_k}^ε R(ρ) dρ/ρ`.
    pub fn condition_12a(&self) -> MatrixEvidence {
        let cum = self.ladder.cumulative(&self.r, self.zero());
        MatrixEvidence::from_partials(self.ladder.levels.clone(), self.ladder.at_levels(&cum), self.tol)
    }

    /// `∫ |R(t) I_1(t)|` with `I_1(t) = ∫_t^∞ R` taken from the limit of (12a).
    pub fn condition_12b(&self, a: &MatrixEvidence) -> IntegralEvidence {
        let cum = self.ladder.cumulative(&self.r, self.zero());
        let (limit, reason) = match &a.limit {
            Some(l) => (l.clone(), None),
            None => (cum.last().cloned().unwrap_or_else(|| self.zero()), Some("inner integral (12a) does not converge")),
        };
        let vals: Vec<f64> = self.r.iter().zip(&cum).map(|(r, c)| spectral_norm(&(r * (&limit - c)))).collect();
        let p = self.ladder.at_levels(&self.ladder.cumulative(&vals, 0.0));
        let ev = IntegralEvidence::from_partials(self.ladder.levels.clone(), p, self.tol);
        match reason {
            Some(r) => ev.forced_inconclusive(r.into()),
            None => ev,
        }
    }

    /// Level two: the double integral over `t_ε <= t <= τ <= T_k` of `R(t) R(τ)`, and
    /// `∫ |R(t) I_2(t)|` with `I_2(t) = ∫_t^∞ R(τ) I_1(τ) dτ`.
    pub fn condition_13(&self, a: &MatrixEvidence) -> (MatrixEvidence, IntegralEvidence) {
        let zero = self.zero();
        let cum = self.ladder.cumulative(&self.r, zero.clone());
        let rc: Vec<DMatrix<f64>> = self.r.iter().zip(&cum).map(|(r, c)| r * c).collect();
        let d = self.ladder.cumulative(&rc, zero.clone());
        let partial: Vec<DMatrix<f64>> =
            self.ladder.level_nodes.iter().map(|&i| &cum[i] * &cum[i] - &d[i]).collect();
        let mut level2 = MatrixEvidence::from_partials(self.ladder.levels.clone(), partial, self.tol);
        let Some(l1) = &a.limit else {
            let reason = "level-1 integral (12a) does not converge".to_string();
            level2.verdict = SequenceVerdict::Inconclusive { reason: reason.clone() };
            level2.diagnostic = Some(reason.clone());
            level2.limit = None;
            let empty = IntegralEvidence {
                levels: vec![],
                partial_values: vec![],
                verdict: SequenceVerdict::Inconclusive { reason: reason.clone() },
                diagnostic: Some(reason),
            };
            return (level2, empty);
        };
        let ri1: Vec<DMatrix<f64>> = self.r.iter().zip(&cum).map(|(r, c)| r * (l1 - c)).collect();
        let e = self.ladder.cumulative(&ri1, zero);
        let (l2, reason) = match &level2.limit {
            Some(l) => (l.clone(), None),
            None => (e.last().cloned().unwrap(), Some("level-2 integral (13a) does not converge")),
        };
        let vals: Vec<f64> = self.r.iter().zip(&e).map(|(r, ev)| spectral_norm(&(r * (&l2 - ev)))).collect();
        let p = self.ladder.at_levels(&self.ladder.cumulative(&vals, 0.0));
        let b = IntegralEvidence::from_partials(self.ladder.levels.clone(), p, self.tol);
        let b = match reason {
            Some(r) => b.forced_inconclusive(r.into()),
            None => b,
        };
        (level2, b)
    }
}

/// `∫_{r1}^{r2} μ(S(ρ)) dρ/ρ` by adaptive quadrature.
pub fn mu_window_integral(field: &CoefficientField, r1: f64, r2: f64, grid: &SphericalGrid, tol: f64) -> Result<f64> {
    if !(r1 > 0.0 && r1 < r2 && r2 <= 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 < r1 < r2 <= 1, got {r1}, {r2}")));
    }
    let mu = |t: f64| mu_max(&symmetrized_s(&mean_matrix_r(field, Radius::from_log(t), grid)));
    Ok(integrate_piecewise(mu, -r2.ln(), -r1.ln(), field.breakpoints(), 0.1 * tol).0)
}

/// Sup over windows `r_k <= r1 < r2 <= ε` of `∫_{r1}^{r2} μ dρ/ρ`; bounded when the sequence settles.
pub fn check_condition_11(field: &CoefficientField, budget: &LadderBudget) -> Result<IntegralEvidence> {
    Ok(RCache::new(field, budget)?.condition_11())
}

/// Truncations `∫_{r_k}^ε R(ρ) dρ/ρ`, tested entrywise.
pub fn pv_integral_r(field: &CoefficientField, budget: &LadderBudget) -> Result<MatrixEvidence> {
    Ok(RCache::new(field, budget)?.condition_12a())
}

pub fn l1_condition_12b(field: &CoefficientField, budget: &LadderBudget) -> Result<IntegralEvidence> {
    let cache = RCache::new(field, budget)?;
    Ok(cache.condition_12b(&cache.condition_12a()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IteratedReport {
    pub level1: (MatrixEvidence, IntegralEvidence),
    pub level2: (MatrixEvidence, IntegralEvidence),
}

pub fn iterated_condition_13(field: &CoefficientField, budget: &LadderBudget) -> Result<IteratedReport> {
    let cache = RCache::new(field, budget)?;
    let a = cache.condition_12a();
    let b = cache.condition_12b(&a);
    let level2 = cache.condition_13(&a);
    Ok(IteratedReport { level1: (a, b), level2 })
}

/// `∫_{r_k}^ε μ dρ/ρ`; the condition holds when this tends to `-∞`.
pub fn divergence_condition_15(field: &CoefficientField, budget: &LadderBudget) -> Result<IntegralEvidence> {
    Ok(RCache::new(field, budget)?.condition_15())
}

/// `∫_{r_k < |x| < ε} (A - n (A x̂) ⊗ x̂) dx/|x|^n`, summed over dyadic shells in `|x|` with
/// Gauss–Legendre in the radius and the unnormalized surface measure.
///
/// Equals `|S^{n-1}|` times the truncations of [`pv_integral_r`] at the same
/// levels. Only levels up to [`VOLUME_MAX_LEVEL`] are used, since the shells
/// evaluate the field at `|x|` itself.
pub fn volume_integral_form(field: &CoefficientField, budget: &LadderBudget) -> Result<MatrixEvidence> {
    budget.validate()?;
    let n = field.dim();
    let grid = budget.grid(n)?;
    let area = sphere_area(n);
    let eps = budget.eps;
    let mut levels: Vec<f64> = (0..=VOLUME_MAX_LEVEL).map(|k| budget.t_eps() + std::f64::consts::LN_2 * 2f64.powi(k as i32)).collect();
    if let Some(h) = field.horizon() {
        levels.retain(|&t| t <= h);
    }
    let shells = 1usize << VOLUME_MAX_LEVEL;
    let (gx, gw) = gauss_legendre(12);
    let radial_breaks: Vec<f64> = field.breakpoints().iter().map(|t| (-t).exp()).collect();
    let shell_vals: Vec<DMatrix<f64>> = (0..shells)
        .into_par_iter()
        .map(|j| {
            let (lo, hi) = (eps * 0.5f64.powi(j as i32 + 1), eps * 0.5f64.powi(j as i32));
            let mut cuts = vec![lo];
            cuts.extend(radial_breaks.iter().copied().filter(|&b| b > lo && b < hi));
            cuts.push(hi);
            cuts.sort_by(f64::total_cmp);
            let mut acc = DMatrix::zeros(n, n);
            for c in cuts.windows(2) {
                let (mid, hw) = (0.5 * (c[0] + c[1]), 0.5 * (c[1] - c[0]));
                for (x, w) in gx.iter().zip(&gw) {
                    let rho = mid + hw * x;
                    let rad = Radius::from_r(rho);
                    for k in 0..grid.len() {
                        let th = grid.node(k);
                        let a = field.eval_polar(rad, th);
                        let at = &a * nalgebra::DVector::from_column_slice(th);
                        let outer = DMatrix::from_fn(n, n, |l, m| at[l] * th[m]);
                        acc += (a - outer * n as f64) * (w * hw / rho * area * grid.weight(k));
                    }
                }
            }
            acc
        })
        .collect();
    let mut partial = Vec::with_capacity(levels.len());
    let mut running = DMatrix::zeros(n, n);
    let mut done = 0usize;
    for k in 0..levels.len() {
        let upto = 1usize << k;
        for v in &shell_vals[done..upto] {
            running += v;
        }
        done = upto;
        partial.push(running.clone());
    }
    Ok(MatrixEvidence::from_partials(levels, partial, budget.tol))
}

/// `∫_0^ε ⨍ |A(ρθ) - I| dθ dρ/ρ` with the spectral norm.
pub fn condition_a_minus_i(field: &CoefficientField, budget: &LadderBudget) -> Result<IntegralEvidence> {
    budget.validate()?;
    let n = field.dim();
    let grid = budget.grid(n)?;
    let ladder = Ladder::new(budget.t_eps(), budget.k_max, field.horizon(), field.breakpoints());
    let p = ladder.partial_values(|t| {
        let rad = Radius::from_log(t);
        grid.mean(|th| spectral_norm(&field.deviation_polar(rad, th)))
    });
    Ok(IntegralEvidence::from_partials(ladder.levels.clone(), p, budget.tol))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Inconclusive,
    LipschitzAtOrigin,
    DifferentiableAtOrigin,
    DifferentiableWithZeroGradient,
}

/// Which argument produced the classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// (11) bounded and (15) tends to `-∞`.
    ZeroGradient,
    /// (12a) and (12b).
    FirstIteration,
    /// (12a), (13a) and (13b), used when (12b) is inconclusive.
    SecondIteration,
    /// (11) bounded.
    WindowBound,
    /// Stability evidence from the integrated system.
    Dynamics,
    SquareDiniFails,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub square_dini: IntegralEvidence,
    pub condition_11: IntegralEvidence,
    pub condition_12a: MatrixEvidence,
    pub condition_12b: IntegralEvidence,
    pub condition_13a: MatrixEvidence,
    pub condition_13b: IntegralEvidence,
    pub condition_15: IntegralEvidence,
    pub dynamics: StabilityReport,
    /// The same analysis started at `2 t_0`.
    pub dynamics_sensitivity: StabilityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityVerdict {
    pub classification: Classification,
    pub route: Route,
    pub evidence: Evidence,
    /// Disagreements between analytic routes and the dynamics, reported side by side.
    pub notes: Vec<String>,
}

/// Combine the square-Dini test, the integral conditions and the dynamics into one verdict.
pub fn classify(field: &CoefficientField, budget: &LadderBudget) -> Result<RegularityVerdict> {
    if !field.is_normalized() {
        return Err(Error::NotNormalized);
    }
    budget.validate()?;
    let cache = RCache::new(field, budget)?;
    let square_dini = square_dini_integral(field.modulus(), budget);
    let c11 = cache.condition_11();
    let c15 = cache.condition_15();
    let c12a = cache.condition_12a();
    let c12b = cache.condition_12b(&c12a);
    let (c13a, c13b) = cache.condition_13(&c12a);

    let grid = budget.grid(field.dim())?;
    let gen = FieldGenerator { field, grid: &grid };
    let t1 = field.horizon().unwrap_or(budget.dynsys_horizon);
    let dynamics = analyze(&gen, budget.t0, t1, budget.dynsys_samples, budget.dynsys_tol)?;
    let t0b = (2.0 * budget.t0).max(budget.t0 + 1e-3);
    let dynamics_sensitivity = analyze(&gen, t0b, t1, budget.dynsys_samples, budget.dynsys_tol)?;

    let bounded = c11.verdict.converges();
    let (classification, route) = if !square_dini.verdict.converges() {
        (Classification::Inconclusive, Route::SquareDiniFails)
    } else if bounded && c15.verdict.to_minus_infinity() {
        (Classification::DifferentiableWithZeroGradient, Route::ZeroGradient)
    } else if c12a.verdict.converges() && c12b.verdict.converges() {
        (Classification::DifferentiableAtOrigin, Route::FirstIteration)
    } else if c12a.verdict.converges()
        && matches!(c12b.verdict, SequenceVerdict::Inconclusive { .. })
        && c13a.verdict.converges()
        && c13b.verdict.converges()
    {
        (Classification::DifferentiableAtOrigin, Route::SecondIteration)
    } else if bounded {
        (Classification::LipschitzAtOrigin, Route::WindowBound)
    } else if dynamics.verdict_uniform_stability.is_stable() {
        if dynamics.verdict_asymptotically_constant.is_yes() {
            (Classification::DifferentiableAtOrigin, Route::Dynamics)
        } else {
            (Classification::LipschitzAtOrigin, Route::Dynamics)
        }
    } else {
        (Classification::Inconclusive, Route::None)
    };

    let mut notes = Vec::new();
    if classification != Classification::Inconclusive && dynamics.verdict_uniform_stability.is_unstable() {
        notes.push(format!("analytic route {route:?} disagrees with unstable dynamics evidence"));
    }
    if dynamics.verdict_uniform_stability.is_stable() != dynamics_sensitivity.verdict_uniform_stability.is_stable() {
        notes.push("stability verdict changes when the window starts at 2 t0".into());
    }
    Ok(RegularityVerdict {
        classification,
        route,
        evidence: Evidence {
            square_dini,
            condition_11: c11,
            condition_12a: c12a,
            condition_12b: c12b,
            condition_13a: c13a,
            condition_13b: c13b,
            condition_15: c15,
            dynamics,
            dynamics_sensitivity,
        },
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Profile;

    #[test]
    fn ladder_integrates_polynomials_exactly() {
        let l = Ladder::new(0.3, 6, None, &[1.7]);
        let p = l.partial_values(|t| 3.0 * t * t);
        for (t, v) in l.levels.iter().zip(&p) {
            assert!((v - (t.powi(3) - 0.3f64.powi(3))).abs() < 1e-9 * t.powi(3));
        }
    }

    #[test]
    fn ladder_respects_horizon() {
        let l = Ladder::new(0.0, 40, Some(100.0), &[]);
        assert_eq!(*l.levels.last().unwrap(), 100.0);
        assert!(l.levels.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dini_values() {
        let b = LadderBudget::default();
        let sq = square_dini_integral(&Modulus::new(Profile::inv_log(1.0)), &b);
        assert!((sq.verdict.limit().unwrap() - 1.0).abs() < 1e-8, "{:?}", sq.verdict);
        let d = dini_integral(&Modulus::new(Profile::power(1.0, 0.5)), 1.0, &b);
        assert!((d.verdict.limit().unwrap() - 2.0).abs() < 1e-9);
        let d = dini_integral(&Modulus::new(Profile::inv_log(1.0)), 0.5, &b);
        assert_eq!(d.verdict, SequenceVerdict::Diverges { rate: DivergenceRate::Log });
        let c = square_dini_integral(&Modulus::new(Profile::constant(0.3)), &b);
        assert_eq!(c.verdict, SequenceVerdict::Diverges { rate: DivergenceRate::Log });
    }
}
