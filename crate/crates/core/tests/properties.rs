use dynreg::appendix::{transform_from_phi_psi, transform_to_phi_psi};
use dynreg::dynsys::*;
use dynreg::gilbarg_serrin::{closed_form_phi, ScalarGenerator};
use dynreg::pde::projection_p;
use dynreg::sphmean::{mean_matrix_r, mu_max, sphere_grid, symmetrized_s};
use dynreg::{CoefficientField, Modulus, Profile, Radius};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

fn rotating(a: f64, b: f64, c: f64) -> impl Fn(f64) -> DMatrix<f64> + Sync {
    move |t: f64| {
        let d = 1.0 / (1.0 + t);
        DMatrix::from_row_slice(2, 2, &[a * d, (b + c * t.sin()) * d, -(b + c * t.cos()) * d, 0.5 * a * d])
    }
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn circle_grid_kills_low_harmonics(m in 8usize..80, k in 1usize..8) {
        prop_assume!(k < m);
        let g = sphere_grid(2, m).unwrap();
        let v = g.mean(|x| (k as f64 * x[1].atan2(x[0])).cos());
        prop_assert!(v.abs() < 1e-13);
        prop_assert!((g.mean(|x| x[0] * x[0]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sphere_grid_moments(m in 8usize..40) {
        let g = sphere_grid(3, m).unwrap();
        prop_assert!((g.mean(|x| x[2] * x[2]) - 1.0 / 3.0).abs() < 1e-13);
        prop_assert!((g.mean(|x| x[0] * x[0] * x[1] * x[1]) - 1.0 / 15.0).abs() < 1e-13);
        prop_assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn constant_fields_are_annihilated(n in 2usize..4, d in prop::collection::vec(0.5f64..3.0, 3), off in -0.3f64..0.3, r in 1e-6f64..1.0) {
        let mut a = DMatrix::from_diagonal(&DVector::from_iterator(n, d.into_iter().take(n)));
        a[(0, 1)] = off;
        a[(1, 0)] = off;
        let f = CoefficientField::constant(a).unwrap();
        let grid = sphere_grid(n, 32).unwrap();
        prop_assert!(mean_matrix_r(&f, Radius::from_r(r), &grid).amax() < 1e-12);
    }

    #[test]
    fn radial_fields_are_annihilated(n in 2usize..4, c in 0.05f64..0.9, a in 0.2f64..2.0, t in 0.0f64..50.0) {
        let p = Profile::power(c, a);
        let f = CoefficientField::radial(n, dynreg::coeff::scalar_radial(n, p.clone()), Modulus::new(p)).unwrap();
        let grid = sphere_grid(n, 32).unwrap();
        prop_assert!(mean_matrix_r(&f, Radius::from_log(t), &grid).amax() < 1e-12);
    }

    #[test]
    fn gilbarg_serrin_closed_form(n in 2usize..4, c in -0.8f64..0.8, a in 0.2f64..2.0, t in 0.0f64..40.0) {
        let g = Profile::power(c, a);
        let f = CoefficientField::gilbarg_serrin(n, g.clone(), Modulus::new(g.abs_envelope())).unwrap();
        let grid = sphere_grid(n, 32).unwrap();
        let r = mean_matrix_r(&f, Radius::from_log(t), &grid);
        let nf = n as f64;
        let gv = g.eval_t(t);
        let expect = DMatrix::<f64>::identity(n, n) * ((1.0 - nf) / nf * gv);
        prop_assert!((&r - &expect).amax() <= 1e-12 * gv.abs().max(1e-300));
        prop_assert!((mu_max(&symmetrized_s(&r)) - (1.0 - 1.0 / nf) * gv).abs() <= 1e-12 * gv.abs());
    }

    #[test]
    fn fundamental_matrix_semigroup_and_rebasing(a in -1.0f64..1.0, b in -1.0f64..1.0, c in 0.0f64..1.0, t1 in 1.0f64..5.0) {
        let gen = FnGenerator::new(2, rotating(a, b, c));
        let grid: Vec<f64> = (0..=40).map(|k| t1 * k as f64 / 20.0).collect();
        let full = fundamental_matrix(&gen, &grid, 1e-11).unwrap();
        let late = fundamental_matrix(&gen, &grid[20..], 1e-11).unwrap();
        // Φ(t, 0) = Φ(t, t1) Φ(t1, 0)
        for k in 20..=40 {
            let composed = &late.phi[k - 20] * &full.phi[20];
            prop_assert!((&composed - &full.phi[k]).amax() < 1e-8 * full.phi[k].amax().max(1.0));
        }
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, -0.1, 0.7]);
        let k0 = stability_constant(&full).k_hat;
        let k1 = stability_constant(&full.rebased(&m)).k_hat;
        prop_assert!((k0 - k1).abs() < 1e-8 * k0);
    }

    #[test]
    fn k_trend_is_nondecreasing(a in -1.0f64..1.0, b in -1.0f64..1.0, c in 0.0f64..1.0) {
        let gen = FnGenerator::new(2, rotating(a, b, c));
        let rep = analyze(&gen, 0.0, 30.0, 300, 1e-9).unwrap();
        prop_assert!(rep.k_trend.windows(2).all(|w| w[1].1 >= w[0].1));
        prop_assert!(rep.k_hat >= 1.0 - 1e-12);
    }

    #[test]
    fn gronwall_ratio_never_exceeds_one(a in -1.0f64..1.0, b in -1.0f64..1.0, c in 0.0f64..1.0, x in -1.0f64..1.0) {
        let gen = FnGenerator::new(2, rotating(a, b, c));
        let grid: Vec<f64> = (0..=200).map(|k| 0.1 * k as f64).collect();
        let traj = integrate_on_grid(&gen, &grid, &DVector::from_vec(vec![1.0, x]), 1e-11).unwrap();
        let mu = |t: f64| gen.mu(t);
        let chk = gronwall_bound_check(&traj, &mu, &[]);
        prop_assert!(chk.worst_ratio <= 1.0 + 1e-6, "{}", chk.worst_ratio);
    }

    #[test]
    fn scalar_closed_form_is_a_flow(c in -0.9f64..0.9, t1 in 0.0f64..20.0, t2 in 0.0f64..20.0) {
        let gen = ScalarGenerator::new(2, Profile::inv_log(c));
        let (s, t) = (t1.min(t2), t1.max(t2));
        let direct = closed_form_phi(&gen, 0.0, t, 1.0).unwrap();
        let staged = closed_form_phi(&gen, s, t, closed_form_phi(&gen, 0.0, s, 1.0).unwrap()).unwrap();
        prop_assert!((direct - staged).abs() < 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn phi_psi_round_trip(n in 2usize..6, seed in prop::collection::vec(-10.0f64..10.0, 12)) {
        let v = DVector::from_iterator(2 * n, seed.into_iter().take(2 * n));
        let (phi, psi) = transform_to_phi_psi(&v, n);
        let back = transform_from_phi_psi(&phi, &psi);
        prop_assert!((&back - &v).amax() < 1e-12 * v.amax().max(1.0));
    }

    #[test]
    fn projection_is_idempotent(f in prop::collection::vec(-5.0f64..5.0, 3..64)) {
        let p = projection_p(&f).unwrap();
        let pp = projection_p(&p.projected).unwrap();
        prop_assert!(p.projected.iter().zip(&pp.projected).all(|(a, b)| (a - b).abs() < 1e-12));
        // the residual has no mean and no first moment
        let r = projection_p(&p.residual).unwrap();
        prop_assert!(r.mean.abs() < 1e-12 && r.first_moment[0].abs() < 1e-12 && r.first_moment[1].abs() < 1e-12);
    }
}
