use dynreg::dynsys::integrate_on_grid;
use dynreg::gilbarg_serrin::*;
use dynreg::{CoefficientField, Modulus, Profile};
use nalgebra::DVector;

#[test]
fn convergent_improper_construction_data() {
    let c = build_cesari_counterexample(&CesariParams::new(CesariKind::ConvergentImproper)).unwrap();
    assert_eq!(c.blocks.len(), 6);
    // running integral after each block: -Σ c_j, Cauchy with halving gaps
    let after: Vec<f64> = c.blocks.iter().map(|b| b.running_integral).collect();
    for w in after.windows(3) {
        assert!((w[2] - w[1]).abs() <= 0.5 * (w[1] - w[0]).abs() * (1.0 + 1e-9));
    }
    // nothing happens after the last block
    let last = c.blocks.last().unwrap();
    let tail: Vec<f64> = c.running_integral.iter().filter(|p| p.0 >= last.end).map(|p| p.1).collect();
    let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread <= 1e-12);
    // window sups grow and pass 5
    let sups: Vec<f64> = c.window_sups.iter().map(|p| p.1).collect();
    assert!(sups.windows(2).all(|w| w[1] >= w[0]));
    assert!(*sups.last().unwrap() >= 5.0);
    for b in &c.blocks {
        assert!(b.height <= b.envelope_at_end);
        assert!((b.positive_integral + b.negative_integral + c.params.c0 * 0.5f64.powi(b.index as i32 + 1)).abs() < 1e-9);
    }
}

#[test]
fn generator_stays_under_envelope() {
    for kind in [CesariKind::ConvergentImproper, CesariKind::MinusInfinity] {
        let c = build_cesari_counterexample(&CesariParams::new(kind)).unwrap();
        let env = c.generator.envelope.clone().unwrap();
        for k in 0..20000 {
            let t = 0.5 * k as f64;
            assert!(c.generator.eval(t).abs() <= env.eval_t(t) * (1.0 + 1e-12), "{kind:?} at t = {t}");
        }
        assert!(!c.generator.breakpoints.is_empty());
        // the construction is also a valid field
        c.generator.to_field().unwrap();
    }
}

#[test]
fn minus_infinity_construction() {
    let c = build_cesari_counterexample(&CesariParams::new(CesariKind::MinusInfinity)).unwrap();
    let run = &c.running_integral;
    assert!(run.last().unwrap().1 < -10.0);
    let n = run.len();
    assert!(run[n - 1].1 < run[n - 2].1);
    assert!(c.window_sups.last().unwrap().1 >= 5.0);
}

#[test]
fn independence_triple() {
    let c = build_cesari_counterexample(&CesariParams::new(CesariKind::ConvergentImproper)).unwrap();
    let rep = verify_independence(&c.generator, 1e-4).unwrap();
    assert!(rep.asym_constant.is_yes(), "{:?}", rep.asym_constant);
    assert!(rep.uniformly_stable.is_unstable(), "{:?}", rep.uniformly_stable);
    assert!(rep.square_dini.verdict.converges());

    let m = build_cesari_counterexample(&CesariParams::new(CesariKind::MinusInfinity)).unwrap();
    let rep = verify_independence(&m.generator, 1e-4).unwrap();
    assert!(rep.uniformly_stable.is_unstable());
    assert!(rep.running_integral < -10.0);

    let e = ScalarGenerator::new(2, Profile::power(1.0, 1.0));
    let rep = verify_independence(&e, 1e-4).unwrap();
    assert!(rep.uniformly_stable.is_stable() && rep.asym_constant.is_yes());
}

#[test]
fn closed_form_matches_integration() {
    for g in [Profile::power(1.0, 1.0), Profile::inv_log(1.0), Profile::inv_log_pow(-0.7, 2.0, 1.0)] {
        let gen = ScalarGenerator::new(2, g);
        let grid: Vec<f64> = (0..=400).map(|k| 0.25 * k as f64).collect();
        let tr = integrate_on_grid(&gen, &grid, &DVector::from_element(1, 1.0), 1e-10).unwrap();
        for (t, p) in tr.t.iter().zip(&tr.phi) {
            let exact = closed_form_phi(&gen, 0.0, *t, 1.0).unwrap();
            assert!((p[0] - exact).abs() < 1e-8 * exact.max(1.0));
        }
    }
}

#[test]
fn mode_solution_tracks_scalar_reduction() {
    let ts: Vec<f64> = (0..=60).map(|k| 10.0 * k as f64).collect();
    let r: Vec<f64> = ts.iter().map(|t| (-t).exp()).collect();

    // g = r: bounded with a finite limit at the origin
    let s = gs_mode_ode_solution(&Profile::power(0.5, 1.0), 2, &r, 1e-10).unwrap();
    let k = s.v.len();
    assert!((s.v[k - 1] - s.v[k - 2]).abs() < 1e-9);
    assert!(s.ratio_drift() < 1e-9);

    // g = 1/log(e/r): v grows like (1 + log(1/r))^{1/2} and r v'/v -> 0
    let s = gs_mode_ode_solution(&Profile::inv_log(1.0), 2, &r, 1e-10).unwrap();
    let k = s.v.len();
    assert!(s.v[k - 1] > 5.0 * s.v[1]);
    assert!((s.rv_prime[k - 1] / s.v[k - 1]).abs() < 2e-3);
    let scaled: Vec<f64> = s.t.iter().zip(&s.v).map(|(t, v)| v / (1.0 + t).sqrt()).collect();
    assert!((scaled[k - 1] - scaled[k - 2]).abs() < 1e-3 * scaled[k - 1]);
    assert!(s.ratio_drift() < 1e-3);

    // the scalar reduction is the mean of the field's R
    let f = CoefficientField::gilbarg_serrin(3, Profile::inv_log(0.5), Modulus::new(Profile::inv_log(0.5))).unwrap();
    let (gen, resid) = scalar_reduction(&f).unwrap();
    assert!(resid < 1e-10);
    assert!((gen.rate() - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn mode_solution_satisfies_the_radial_equation() {
    // with V2 = a (r v' + v): d/dt v = v - V2/a and d/dt V2 = (a - c) v + (n - 1) V2, t = -ln r
    let g = Profile::Sum { terms: vec![Profile::power(0.6, 0.5), Profile::inv_log(-0.2)] };
    for n in [2usize, 3] {
        let nf = n as f64;
        let h = 1e-3;
        let ts: Vec<f64> = (0..=6000).map(|k| h * k as f64).collect();
        let r: Vec<f64> = ts.iter().map(|t| (-t).exp()).collect();
        let s = gs_mode_ode_solution(&g, n, &r, 1e-12).unwrap();
        let a = |t: f64| (1.0 + g.eval_t(t)) / nf;
        let c = |t: f64| 1.0 + g.eval_t(t) / nf;
        let v2: Vec<f64> = (0..s.t.len()).map(|k| a(s.t[k]) * (s.rv_prime[k] + s.v[k])).collect();
        let mut worst = 0.0f64;
        for k in (1..s.t.len() - 1).step_by(37) {
            let t = s.t[k];
            let dv = (s.v[k + 1] - s.v[k - 1]) / (2.0 * h);
            let dv2 = (v2[k + 1] - v2[k - 1]) / (2.0 * h);
            worst = worst.max((dv - (s.v[k] - v2[k] / a(t))).abs());
            worst = worst.max((dv2 - ((a(t) - c(t)) * s.v[k] + (nf - 1.0) * v2[k])).abs());
        }
        assert!(worst < 1e-5, "n = {n}: {worst:e}");
        assert!((s.v[0] - 1.0).abs() < 1e-14);
    }
}
