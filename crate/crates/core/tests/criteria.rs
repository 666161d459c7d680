use dynreg::criteria::*;
use dynreg::gilbarg_serrin::{build_cesari_counterexample, CesariKind, CesariParams};
use dynreg::sphmean::sphere_area;
use dynreg::{CoefficientField, Modulus, Profile};

fn gs(n: usize, g: Profile) -> CoefficientField {
    let omega = g.abs_envelope();
    CoefficientField::gilbarg_serrin(n, g, Modulus::new(omega)).unwrap()
}

fn budget() -> LadderBudget {
    LadderBudget::default()
}

#[test]
fn square_dini_power_moduli() {
    for a in [0.25, 0.5, 1.0] {
        let ev = square_dini_integral(&Modulus::new(Profile::power(1.0, a)), &budget());
        let lim = ev.verdict.limit().unwrap();
        assert!((lim - 1.0 / (2.0 * a)).abs() < 1e-8, "a = {a}: {lim}");
    }
    let z = square_dini_integral(&Modulus::zero(), &budget());
    assert_eq!(z.verdict.limit(), Some(0.0));
}

#[test]
fn window_condition() {
    let b = budget();
    let id = check_condition_11(&CoefficientField::identity(2), &b).unwrap();
    assert_eq!(id.verdict.limit(), Some(0.0));
    let neg = check_condition_11(&gs(2, Profile::inv_log_pow(-1.0, 1.0, 2.0)), &b).unwrap();
    assert_eq!(neg.verdict.limit(), Some(0.0));
    let pos = check_condition_11(&gs(2, Profile::inv_log(1.0)), &b).unwrap();
    assert!(matches!(pos.verdict, SequenceVerdict::Diverges { .. }), "{:?}", pos.verdict);
    // ∫ μ over a window equals (1/2) log((1 + t2)/(1 + t1)) for μ = g/2
    let grid = b.grid(2).unwrap();
    let w = mu_window_integral(&gs(2, Profile::inv_log(1.0)), 0.01, 0.25, &grid, 1e-10).unwrap();
    let (t1, t2) = (-(0.25f64).ln(), -(0.01f64).ln());
    assert!((w - 0.5 * ((1.0 + t2) / (1.0 + t1)).ln()).abs() < 1e-9);
}

#[test]
fn iterated_conditions_match_scalar_oracle() {
    // g̃ = (1+t)^{-2}, R = -g̃/2 I: every level has a closed form
    let f = gs(2, Profile::inv_log_pow(1.0, 2.0, 1.0));
    let rep = iterated_condition_13(&f, &budget()).unwrap();
    let te = std::f64::consts::LN_2;
    let l = -0.5 / (1.0 + te);
    let a = rep.level1.0.limit.as_ref().unwrap();
    assert!((a[(0, 0)] - l).abs() < 1e-9 && a[(0, 1)].abs() < 1e-12, "{a} vs {l}");
    let b = rep.level1.1.verdict.limit().unwrap();
    assert!((b - 1.0 / (8.0 * (1.0 + te).powi(2))).abs() < 1e-9, "{b}");
    let c = rep.level2.0.limit.as_ref().unwrap();
    assert!((c[(0, 0)] - 0.5 * l * l).abs() < 1e-9);
    let d = rep.level2.1.verdict.limit().unwrap();
    assert!((d - 1.0 / (48.0 * (1.0 + te).powi(3))).abs() < 1e-9, "{d}");
}

#[test]
fn twelve_b_needs_convergent_inner_integral() {
    let f = gs(2, Profile::inv_log(1.0));
    let ev = l1_condition_12b(&f, &budget()).unwrap();
    assert!(matches!(ev.verdict, SequenceVerdict::Inconclusive { .. }));
    assert!(ev.diagnostic.is_some());
    let rep = iterated_condition_13(&f, &budget()).unwrap();
    assert!(matches!(rep.level2.0.verdict, SequenceVerdict::Inconclusive { .. }));
}

#[test]
fn radial_fields_pass_everything_trivially() {
    let p = Profile::power(1.0, 1.0);
    let f = CoefficientField::radial(2, dynreg::coeff::scalar_radial(2, p.clone()), Modulus::new(p)).unwrap();
    let rep = iterated_condition_13(&f, &budget()).unwrap();
    assert!(rep.level1.0.verdict.converges() && rep.level1.0.limit.as_ref().unwrap().amax() < 1e-12);
    assert!(rep.level1.1.verdict.converges() && rep.level2.0.verdict.converges() && rep.level2.1.verdict.converges());
    let v = volume_integral_form(&f, &budget()).unwrap();
    assert!(v.partial_values.iter().all(|m| m.amax() < 1e-12));
}

#[test]
fn divergence_condition() {
    let b = budget();
    assert!(divergence_condition_15(&gs(2, Profile::inv_log_pow(-1.0, 1.0, 2.0)), &b).unwrap().verdict.to_minus_infinity());
    let pos = divergence_condition_15(&gs(2, Profile::inv_log(1.0)), &b).unwrap();
    assert!(matches!(pos.verdict, SequenceVerdict::Diverges { rate: DivergenceRate::Log }));
    assert_eq!(divergence_condition_15(&CoefficientField::identity(2), &b).unwrap().verdict.limit(), Some(0.0));
}

#[test]
fn volume_form_matches_polar_form() {
    let b = budget();
    for (n, g) in [
        (2, Profile::inv_log_pow(1.0, 2.0, 1.0)),
        (3, Profile::inv_log_pow(0.5, 2.0, 1.0)),
        (2, Profile::power(0.4, 0.5)),
    ] {
        let f = gs(n, g);
        let vol = volume_integral_form(&f, &b).unwrap();
        let pv = pv_integral_r(&f, &b).unwrap();
        let area = sphere_area(n);
        for (k, v) in vol.partial_values.iter().enumerate() {
            let diff = (v - &pv.partial_values[k] * area).amax();
            assert!(diff < 1e-8, "n = {n}, level {k}: {diff:e}");
        }
    }
}

#[test]
fn a_minus_i_condition() {
    let b = budget();
    assert!(condition_a_minus_i(&gs(2, Profile::power(1.0, 0.5)), &b).unwrap().verdict.converges());
    let d = condition_a_minus_i(&gs(2, Profile::inv_log(1.0)), &b).unwrap();
    assert_eq!(d.verdict, SequenceVerdict::Diverges { rate: DivergenceRate::Log });
    assert_eq!(condition_a_minus_i(&CoefficientField::identity(3), &b).unwrap().verdict.limit(), Some(0.0));
}

#[test]
fn refinement_never_flips_to_divergence() {
    let fields = [
        gs(2, Profile::inv_log_pow(1.0, 2.0, 1.0)),
        gs(2, Profile::power(0.5, 0.5)),
        gs(3, Profile::inv_log_pow(-0.5, 1.0, 1.0)),
        CoefficientField::identity(2),
    ];
    for f in &fields {
        let mut seen_converge = false;
        for k in [10, 15, 20] {
            let b = LadderBudget { k_max: k, ..budget() };
            let v = pv_integral_r(f, &b).unwrap().verdict;
            if seen_converge {
                assert!(!matches!(v, SequenceVerdict::Diverges { .. }), "k_max = {k}: {v:?}");
            }
            seen_converge |= v.converges();
        }
    }
}

#[test]
fn classify_examples() {
    let b = budget();
    let id = classify(&CoefficientField::identity(2), &b).unwrap();
    assert_eq!(id.classification, Classification::DifferentiableAtOrigin);

    let neg = classify(&gs(2, Profile::inv_log_pow(-1.0, 1.0, 2.0)), &b).unwrap();
    assert_eq!(neg.classification, Classification::DifferentiableWithZeroGradient);
    assert_eq!(neg.route, Route::ZeroGradient);

    let pos = classify(&gs(2, Profile::inv_log_pow(1.0, 1.0, 2.0)), &b).unwrap();
    assert_eq!(pos.classification, Classification::Inconclusive);
    assert!(pos.evidence.dynamics.verdict_uniform_stability.is_unstable() || pos.evidence.dynamics.k_hat > 5.0);

    let c = build_cesari_counterexample(&CesariParams::new(CesariKind::ConvergentImproper)).unwrap();
    let field = c.generator.to_field().unwrap();
    let v = classify(&field, &b).unwrap();
    assert_eq!(v.classification, Classification::Inconclusive);
    assert!(v.evidence.square_dini.verdict.converges());
    assert!(v.evidence.dynamics.verdict_uniform_stability.is_unstable());
    assert!(v.evidence.dynamics.verdict_asymptotically_constant.is_yes());

    let d = dynreg::CoefficientField::constant(nalgebra::DMatrix::from_diagonal_element(2, 2, 2.0)).unwrap();
    assert!(matches!(classify(&d, &b), Err(dynreg::Error::NotNormalized)));
}
