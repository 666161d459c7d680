//! Coefficient fields `A(x)` normalized so that `A(0) = I`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::Profile;
use crate::sphmean::{sphere_grid, SphericalGrid};

/// A radius stored through its log `t = -ln r`, so radii below `f64::MIN_POSITIVE` are representable.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Radius {
    t: f64,
}

impl Radius {
    pub fn from_r(r: f64) -> Self {
        Self { t: -r.ln() }
    }

    pub fn from_log(t: f64) -> Self {
        Self { t }
    }

    pub fn origin() -> Self {
        Self { t: f64::INFINITY }
    }

    pub fn t(self) -> f64 {
        self.t
    }

    /// The radius itself; underflows to 0 below `e^{-745}`.
    pub fn r(self) -> f64 {
        (-self.t).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modulus {
    pub profile: Profile,
    pub kappa: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusCheck {
    pub nondecreasing: bool,
    pub vanishes_at_origin: bool,
    pub kappa_condition: bool,
}

impl Modulus {
    pub fn new(profile: Profile) -> Self {
        Self { profile, kappa: 0.5 }
    }

    pub fn with_kappa(profile: Profile, kappa: f64) -> Self {
        Self { profile, kappa }
    }

    pub fn zero() -> Self {
        Self::new(Profile::Zero)
    }

    pub fn omega(&self, r: f64) -> f64 {
        self.profile.eval_r(r)
    }

    pub fn omega_at(&self, radius: Radius) -> f64 {
        self.profile.eval_t(radius.t())
    }

    pub fn analytic_tag(&self) -> String {
        self.profile.to_string()
    }

    /// Sampled checks of monotonicity, vanishing at 0, and `ω(r) r^{κ-1}` nonincreasing near 0.
    pub fn check(&self) -> ModulusCheck {
        let ts: Vec<f64> = (0..400).map(|k| 0.1 * k as f64).collect();
        let w: Vec<f64> = ts.iter().map(|&t| self.profile.eval_t(t)).collect();
        let slack = |a: f64| 1e-12 * a.abs().max(1e-300);
        let nondecreasing = w.windows(2).all(|p| p[1] <= p[0] + slack(p[0]));
        let vanishes_at_origin = self.profile.eval_t(1e12).abs() < 1e-3 && self.profile.at_origin() == 0.0;
        let tail: Vec<f64> = ts
            .iter()
            .zip(&w)
            .filter(|(t, _)| **t >= 4.0)
            .map(|(t, w)| w * ((1.0 - self.kappa) * t).exp())
            .collect();
        let kappa_condition = tail.windows(2).all(|p| p[1] >= p[0] - slack(p[0]));
        ModulusCheck { nondecreasing, vanishes_at_origin, kappa_condition }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyTag {
    Constant,
    Radial,
    GilbargSerrin,
    PerturbedRadial,
    Custom,
}

pub type RadialFn = Arc<dyn Fn(Radius) -> DMatrix<f64> + Send + Sync>;
pub type PolarFn = Arc<dyn Fn(Radius, &[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Constant(DMatrix<f64>),
    GilbargSerrin(Profile),
    Radial(RadialFn),
    Perturbed { a0: RadialFn, a1: PolarFn, a1_origin: DMatrix<f64> },
    Custom(PolarFn),
}

/// An immutable evaluator `x -> A(x)` together with its ellipticity bounds and modulus.
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    kind: Kind,
    ellipticity: (f64, f64),
    modulus: Modulus,
    normalized: bool,
    horizon: Option<f64>,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("family", &self.family_tag())
            .field("ellipticity", &self.ellipticity)
            .field("modulus", &self.modulus.analytic_tag())
            .field("normalized", &self.normalized)
            .finish()
    }
}

/// Log-radii used to validate constructed fields: dyadic down to `2^-60`, then sparse out to `t = 10^6`.
fn verification_times(extra: &[f64]) -> Vec<f64> {
    let ln2 = std::f64::consts::LN_2;
    let mut ts: Vec<f64> = (0..=120).map(|k| 0.5 * ln2 * k as f64).collect();
    ts.extend((0..=24).map(|k| 50.0 * 1.5f64.powi(k)));
    for &b in extra {
        ts.extend([b - 1e-9, b, b + 1e-9]);
    }
    ts.retain(|t| *t >= 0.0);
    ts.sort_by(f64::total_cmp);
    ts
}

fn max_entry(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn check_spd(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    let scale = max_entry(a).max(1e-300);
    let asym = max_entry(&(a - a.transpose()));
    if asym > 1e-14 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = a.clone().symmetric_eigen().eigenvalues;
    let lo = eig.min();
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite(lo));
    }
    Ok((lo, eig.max()))
}

impl CoefficientField {
    /// Constant field. Non-identity matrices give a field flagged non-normalized.
    pub fn constant(a0: DMatrix<f64>) -> Result<Self> {
        let n = a0.nrows();
        if n < 2 || a0.ncols() != n {
            return Err(Error::UnsupportedDimension(n));
        }
        let ellipticity = check_spd(&a0)?;
        let off = max_entry(&(&a0 - DMatrix::identity(n, n)));
        let normalized = off == 0.0;
        let profile = if normalized { Profile::Zero } else { Profile::constant(off) };
        Ok(Self {
            dim: n,
            kind: Kind::Constant(a0),
            ellipticity,
            modulus: Modulus::new(profile),
            normalized,
            horizon: None,
            breakpoints: vec![],
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n)).expect("identity is SPD")
    }

    /// `A = I + g(|x|) θθᵀ`.
    pub fn gilbarg_serrin(n: usize, g: Profile, omega_bound: Modulus) -> Result<Self> {
        if n < 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        let ts = verification_times(&g.breakpoints());
        let (mut lo, mut hi) = (1.0f64, 1.0f64);
        for &t in &ts {
            let v = 1.0 + g.eval_t(t);
            if v <= 0.0 {
                return Err(Error::Ellipticity { r: (-t).exp(), value: v });
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let g0 = g.at_origin();
        if g0 != 0.0 {
            return Err(Error::NonzeroAtOrigin(g0));
        }
        for &t in &ts {
            let (v, b) = (g.eval_t(t).abs(), omega_bound.profile.eval_t(t));
            if v > b * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::ModulusExceeded { r: (-t).exp(), value: v, bound: b });
            }
        }
        let breakpoints = g.breakpoints();
        Ok(Self {
            dim: n,
            kind: Kind::GilbargSerrin(g),
            ellipticity: (lo, hi),
            modulus: omega_bound,
            normalized: true,
            horizon: None,
            breakpoints,
        })
    }

    /// Radial field `A = a0(|x|)`.
    pub fn radial(n: usize, a0: RadialFn, modulus: Modulus) -> Result<Self> {
        let a0c = a0.clone();
        let kind = Kind::Radial(a0);
        Self::validated(n, kind, modulus, move |rad, _| a0c(rad))
    }

    /// `A = a0(|x|) + a1(x) - a1(0)`, where `a1(0)` is the value of `a1` at the origin along `e_1`.
    pub fn perturbed_radial(n: usize, a0: RadialFn, a1: PolarFn, modulus: Modulus) -> Result<Self> {
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        let a1_origin = a1(Radius::origin(), &e1);
        let (a0c, a1c, a1o) = (a0.clone(), a1.clone(), a1_origin.clone());
        let kind = Kind::Perturbed { a0, a1, a1_origin };
        Self::validated(n, kind, modulus, move |rad, th| a0c(rad) + a1c(rad, th) - &a1o)
    }

    /// Arbitrary field given in polar form `(|x|, x/|x|) -> A`.
    pub fn custom(n: usize, f: PolarFn, modulus: Modulus) -> Result<Self> {
        let fc = f.clone();
        Self::validated(n, Kind::Custom(f), modulus, move |rad, th| fc(rad, th))
    }

    fn validated(
        n: usize,
        kind: Kind,
        modulus: Modulus,
        eval: impl Fn(Radius, &[f64]) -> DMatrix<f64>,
    ) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        let grid = sphere_grid(n, if n == 2 { 16 } else { 8 })?;
        let id = DMatrix::<f64>::identity(n, n);
        let (mut lo, mut hi) = (1.0f64, 1.0f64);
        for &t in &verification_times(&modulus.profile.breakpoints()) {
            let rad = Radius::from_log(t);
            let bound = modulus.omega_at(rad);
            for k in 0..grid.len() {
                let a = eval(rad, grid.node(k));
                if a.nrows() != n || a.ncols() != n {
                    return Err(Error::InvalidArgument(format!("evaluator returned {}x{}", a.nrows(), a.ncols())));
                }
                let (l, h) = check_spd(&a).map_err(|e| match e {
                    Error::NotPositiveDefinite(v) => Error::Ellipticity { r: rad.r(), value: v },
                    other => other,
                })?;
                lo = lo.min(l);
                hi = hi.max(h);
                let dev = max_entry(&(&a - &id));
                if dev > bound * (1.0 + 1e-10) + 1e-14 {
                    return Err(Error::ModulusExceeded { r: rad.r(), value: dev, bound });
                }
            }
        }
        let breakpoints = modulus.profile.breakpoints();
        Ok(Self { dim: n, kind, ellipticity: (lo, hi), modulus, normalized: true, horizon: None, breakpoints })
    }

    /// Declare the range of log-radii `[0, horizon]` on which the field is meaningful.
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ellipticity(&self) -> (f64, f64) {
        self.ellipticity
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    /// Log-radii where the field may jump.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn family_tag(&self) -> FamilyTag {
        match self.kind {
            Kind::Constant(_) => FamilyTag::Constant,
            Kind::GilbargSerrin(_) => FamilyTag::GilbargSerrin,
            Kind::Radial(_) => FamilyTag::Radial,
            Kind::Perturbed { .. } => FamilyTag::PerturbedRadial,
            Kind::Custom(_) => FamilyTag::Custom,
        }
    }

    /// The profile `g` of a Gilbarg–Serrin field.
    pub fn gs_profile(&self) -> Option<&Profile> {
        match &self.kind {
            Kind::GilbargSerrin(g) => Some(g),
            _ => None,
        }
    }

    /// `A` at radius `radius` in the unit direction `theta`.
    pub fn eval_polar(&self, radius: Radius, theta: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        match &self.kind {
            Kind::Constant(a) => a.clone(),
            Kind::GilbargSerrin(g) => {
                let gv = g.eval_t(radius.t());
                DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + gv * theta[i] * theta[j])
            }
            Kind::Radial(a0) => a0(radius),
            Kind::Perturbed { a0, a1, a1_origin } => a0(radius) + a1(radius, theta) - a1_origin,
            Kind::Custom(f) => f(radius, theta),
        }
    }

    /// `Ω = A - I` at radius `radius` in direction `theta`.
    ///
    /// Gilbarg–Serrin fields form `g θθᵀ` directly, keeping full relative
    /// precision when `g` is far below machine epsilon.
    pub fn deviation_polar(&self, radius: Radius, theta: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        match &self.kind {
            Kind::GilbargSerrin(g) => {
                let gv = g.eval_t(radius.t());
                DMatrix::from_fn(n, n, |i, j| gv * theta[i] * theta[j])
            }
            _ => self.eval_polar(radius, theta) - DMatrix::<f64>::identity(n, n),
        }
    }

    /// `A(x)`; the origin maps to `I` for normalized fields.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            return match &self.kind {
                Kind::Constant(a) if !self.normalized => a.clone(),
                _ => DMatrix::identity(self.dim, self.dim),
            };
        }
        let theta: Vec<f64> = x.iter().map(|v| v / r).collect();
        self.eval_polar(Radius::from_r(r), &theta)
    }
}

/// Max-entry oscillation `max_θ |A(rθ) - I|` over the grid nodes.
pub fn modulus_estimate(field: &CoefficientField, radius: Radius, grid: &SphericalGrid) -> f64 {
    let n = field.dim();
    let id = DMatrix::<f64>::identity(n, n);
    (0..grid.len()).map(|k| max_entry(&(field.eval_polar(radius, grid.node(k)) - &id))).fold(0.0, f64::max)
}

/// `a0(r) = (1 + p(r)) I`.
pub fn scalar_radial(n: usize, p: Profile) -> RadialFn {
    Arc::new(move |rad: Radius| DMatrix::identity(n, n) * (1.0 + p.eval_t(rad.t())))
}

/// Serializable description of a field, used by configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Identity {
        dim: usize,
    },
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    GilbargSerrin {
        dim: usize,
        g: String,
        #[serde(default)]
        omega: Option<String>,
        #[serde(default)]
        kappa: Option<f64>,
    },
    /// `(1 + p(r)) I`
    Radial {
        dim: usize,
        p: String,
    },
    /// `(1 + p(r)) I + scale g(r) θ_1² E_11`
    PerturbedRadial {
        dim: usize,
        p: String,
        g: String,
        scale: f64,
    },
    /// `a_11 = 1 + g(r) θ_1²`, other entries `δ_ij`.
    Axis {
        dim: usize,
        g: String,
    },
}

impl FieldSpec {
    pub fn build(&self) -> Result<CoefficientField> {
        match self {
            FieldSpec::Identity { dim } => {
                if *dim < 2 {
                    return Err(Error::UnsupportedDimension(*dim));
                }
                Ok(CoefficientField::identity(*dim))
            }
            FieldSpec::Constant { matrix } => {
                let n = matrix.len();
                if matrix.iter().any(|row| row.len() != n) {
                    return Err(Error::InvalidArgument("constant matrix must be square".into()));
                }
                CoefficientField::constant(DMatrix::from_fn(n, n, |i, j| matrix[i][j]))
            }
            FieldSpec::GilbargSerrin { dim, g, omega, kappa } => {
                let g = Profile::parse(g)?;
                let omega = match omega {
                    Some(s) => Profile::parse(s)?,
                    None => g.abs_envelope(),
                };
                CoefficientField::gilbarg_serrin(*dim, g, Modulus::with_kappa(omega, kappa.unwrap_or(0.5)))
            }
            FieldSpec::Radial { dim, p } => {
                let p = Profile::parse(p)?;
                let m = Modulus::new(p.abs_envelope());
                CoefficientField::radial(*dim, scalar_radial(*dim, p), m)
            }
            FieldSpec::PerturbedRadial { dim, p, g, scale } => {
                let p = Profile::parse(p)?;
                let g = Profile::parse(g)?;
                let m = Modulus::new(Profile::Sum { terms: vec![p.abs_envelope(), g.abs_envelope().scaled(scale.abs())] });
                CoefficientField::perturbed_radial(*dim, scalar_radial(*dim, p), axis_term(*dim, g.scaled(*scale)), m)
            }
            FieldSpec::Axis { dim, g } => {
                let g = Profile::parse(g)?;
                let m = Modulus::new(g.abs_envelope());
                let a1 = axis_term(*dim, g);
                let n = *dim;
                CoefficientField::custom(n, Arc::new(move |rad, th| DMatrix::identity(n, n) + a1(rad, th)), m)
            }
        }
    }
}

/// `g(r) θ_1² E_11`.
pub fn axis_term(n: usize, g: Profile) -> PolarFn {
    Arc::new(move |rad: Radius, th: &[f64]| {
        let mut m = DMatrix::zeros(n, n);
        m[(0, 0)] = g.eval_t(rad.t()) * th[0] * th[0];
        m
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_fields() {
        let id = CoefficientField::identity(2);
        assert!(id.is_normalized());
        assert_eq!(id.modulus().omega(0.3), 0.0);
        assert_eq!(id.eval(&[0.0, 0.0]), DMatrix::identity(2, 2));

        let d = CoefficientField::constant(DMatrix::from_diagonal(&nalgebra::dvector![2.0, 1.0])).unwrap();
        assert!(!d.is_normalized());
        let grid = sphere_grid(2, 16).unwrap();
        assert_eq!(modulus_estimate(&d, Radius::from_r(0.4), &grid), 1.0);

        let mut bad = DMatrix::identity(3, 3);
        bad[(2, 2)] = -0.1;
        assert!(matches!(CoefficientField::constant(bad), Err(Error::NotPositiveDefinite(v)) if (v + 0.1).abs() < 1e-14));
        let mut asym = DMatrix::identity(2, 2);
        asym[(0, 1)] = 0.1;
        assert!(matches!(CoefficientField::constant(asym), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn gilbarg_serrin_construction() {
        let g = Profile::inv_log(1.0);
        let f = CoefficientField::gilbarg_serrin(2, g.clone(), Modulus::new(g.clone())).unwrap();
        assert_eq!(f.family_tag(), FamilyTag::GilbargSerrin);
        let grid = sphere_grid(2, 64).unwrap();
        for r in [0.5, 0.1, 1e-3] {
            let est = modulus_estimate(&f, Radius::from_r(r), &grid);
            assert!((est - g.eval_r(r)).abs() < 1e-15);
        }
        let err = CoefficientField::gilbarg_serrin(2, Profile::constant(-2.0), Modulus::new(Profile::constant(2.0)));
        assert!(matches!(err, Err(Error::Ellipticity { .. })));
        let err = CoefficientField::gilbarg_serrin(2, Profile::power(0.5, 1.0), Modulus::new(Profile::power(0.25, 1.0)));
        assert!(matches!(err, Err(Error::ModulusExceeded { .. })));
        let zero = CoefficientField::gilbarg_serrin(3, Profile::Zero, Modulus::zero()).unwrap();
        assert_eq!(zero.eval(&[0.1, 0.2, 0.3]), DMatrix::identity(3, 3));
    }

    #[test]
    fn gs_eval_matches_formula() {
        let g = Profile::power(1.0, 1.0);
        let f = CoefficientField::gilbarg_serrin(2, g, Modulus::new(Profile::power(1.0, 1.0))).unwrap();
        let grid = sphere_grid(2, 16).unwrap();
        assert_eq!(modulus_estimate(&f, Radius::from_r(0.5), &grid), 0.5);
        let x = [0.3, -0.4];
        let a = f.eval(&x);
        let th = [0.6, -0.8];
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 } + 0.5 * th[i] * th[j];
                assert!((a[(i, j)] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn perturbed_radial_composition() {
        let g = Profile::inv_log(0.5);
        let a1 = Arc::new({
            let g = g.clone();
            move |rad: Radius, th: &[f64]| {
                let gv = g.eval_t(rad.t());
                DMatrix::from_fn(2, 2, |i, j| gv * th[i] * th[j])
            }
        });
        let f = CoefficientField::perturbed_radial(2, scalar_radial(2, Profile::Zero), a1, Modulus::new(g.clone())).unwrap();
        let gs = CoefficientField::gilbarg_serrin(2, g.clone(), Modulus::new(g)).unwrap();
        for x in [[0.1, 0.2], [-0.5, 0.01], [1e-9, -3e-9]] {
            assert!((f.eval(&x) - gs.eval(&x)).abs().max() < 1e-15);
        }
        assert_eq!(f.family_tag(), FamilyTag::PerturbedRadial);
    }

    #[test]
    fn spec_round_trip() {
        let s = FieldSpec::GilbargSerrin { dim: 2, g: "-1/log(e^2/r)".into(), omega: None, kappa: None };
        let f = s.build().unwrap();
        assert_eq!(f.family_tag(), FamilyTag::GilbargSerrin);
        let bad = FieldSpec::Axis { dim: 2, g: "-2".into() };
        assert!(bad.build().is_err());
    }

    #[test]
    fn modulus_checks() {
        let m = Modulus::new(Profile::inv_log(1.0));
        let c = m.check();
        assert!(c.nondecreasing && c.vanishes_at_origin && c.kappa_condition);
        let c = Modulus::new(Profile::constant(0.3)).check();
        assert!(!c.vanishes_at_origin);
    }
}
