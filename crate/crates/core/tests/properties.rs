use fineq::bounds::{bound_holley_stroock, bound_lipschitz_cheeger, bound_lipschitz_poincare, bound_mollified, MollifiedVariant, ParamSearch, Quantity};
use fineq::measures::{Certified, MeasureModel};
use fineq::mollify::{mollified_grad_f, AtomicMeasure};
use fineq::oracle::{cheeger_1d, muckenhoupt_1d, poincare_1d, GridMeasure1D};
use fineq::sweep::{evaluate_instance, BaseSpec, PertSpec};
use proptest::prelude::*;

fn search() -> ParamSearch {
    ParamSearch::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lipschitz_bound_dominates_oracle(rho in 0.5f64..2.0, c in -1.0f64..1.0) {
        let m = MeasureModel::gaussian(rho, 1).unwrap();
        let f = PertSpec::Bump { amplitude: c, width: 1.0, center: 0.2 }.build(&m);
        let g = GridMeasure1D::from_model(&m, Some(&f), 1024).unwrap();
        let oracle = poincare_1d(&g).unwrap().constant;
        let l = f.meta.lipschitz.finite().unwrap();
        let b = bound_lipschitz_poincare(1.0 / rho, l, &search()).unwrap();
        if b.applicable {
            prop_assert!(b.value.unwrap() >= oracle * 0.999, "{:?} vs {oracle}", b.value);
        }
        let hs = bound_holley_stroock(1.0 / rho, Quantity::Poincare, f.meta.oscillation).unwrap();
        prop_assert!(hs.value.unwrap() >= oracle * 0.999);
    }

    #[test]
    fn every_sweep_row_is_sound(p in 1.0f64..3.0, a in -1.0f64..1.0, w in 0.5f64..2.0) {
        let r = evaluate_instance(0, &BaseSpec::Subbotin { p }, &PertSpec::Bump { amplitude: a, width: w, center: 0.0 }, 1024, 1e-3).unwrap();
        for row in &r.rows {
            prop_assert!(!row.violation, "{row:?}");
        }
    }

    #[test]
    fn muckenhoupt_sandwich(rho in 0.3f64..3.0, q in 0.0f64..0.5) {
        let m = MeasureModel::gaussian(rho, 1).unwrap();
        let f = PertSpec::Quadratic { rho: q }.build(&m);
        let g = GridMeasure1D::from_model(&m, Some(&f), 1024).unwrap();
        let c = poincare_1d(&g).unwrap().constant;
        let b = muckenhoupt_1d(&g).unwrap().constant;
        prop_assert!(b <= c && c <= 4.0 * b, "B={b} C_P={c}");
        // Median Cheeger constant controls C_P.
        let cc = cheeger_1d(&g).unwrap().constant;
        prop_assert!(4.0 * cc * cc >= c * 0.999);
    }
}

proptest! {
    #[test]
    fn lipschitz_bound_monotone(cp in 0.1f64..5.0, l in 0.0f64..1.0, dl in 0.0f64..0.5, k in 1.0f64..2.0) {
        let v = |cp: f64, l: f64| bound_lipschitz_poincare(cp, l, &search()).unwrap();
        let base = v(cp, l);
        let more_l = v(cp, l + dl);
        let more_c = v(cp * k, l);
        if more_l.applicable {
            prop_assert!(base.applicable && more_l.value.unwrap() >= base.value.unwrap() * (1.0 - 1e-12));
        }
        if more_c.applicable {
            prop_assert!(base.applicable && more_c.value.unwrap() >= base.value.unwrap() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn lipschitz_gate_is_strict(cp in 0.1f64..10.0) {
        // L²C_P = 4 sits exactly on the boundary.
        let l = 2.0 / cp.sqrt();
        let at = bound_lipschitz_poincare(cp, l, &search()).unwrap();
        let margin = at.margins.iter().find(|m| m.name == "L2_C_P").unwrap();
        if margin.value >= 4.0 {
            prop_assert!(!at.applicable);
        }
        prop_assert!(bound_lipschitz_poincare(cp, l * 0.999, &search()).unwrap().applicable);
        prop_assert!(!bound_lipschitz_poincare(cp, l * 1.001, &search()).unwrap().applicable);
    }

    #[test]
    fn lipschitz_value_recomputes_from_provenance(cp in 0.1f64..5.0, l in 0.01f64..0.8) {
        let b = bound_lipschitz_poincare(cp, l, &search()).unwrap();
        prop_assume!(b.applicable);
        let c = b.input_value("C_P_mu").unwrap();
        let lip = b.input_value("L").unwrap();
        let eps = b.params["eps"];
        let s = (1.0 + eps) * lip * lip * c / 4.0;
        let again = (1.0 + 1.0 / eps) * c / (1.0 - s);
        prop_assert!((again - b.value.unwrap()).abs() <= 1e-10 * again);
    }

    #[test]
    fn holley_stroock_monotone_in_oscillation(cp in 0.1f64..5.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let v = |o: f64| bound_holley_stroock(cp, Quantity::Poincare, Certified::Finite(o)).unwrap().value.unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(v(lo) <= v(hi));
        prop_assert!(!bound_holley_stroock(cp, Quantity::Poincare, Certified::Infinite).unwrap().applicable);
    }

    #[test]
    fn cheeger_transfer_gate(cc in 0.1f64..3.0, l in 0.0f64..3.0) {
        let b = bound_lipschitz_cheeger(cc, l).unwrap();
        prop_assert_eq!(b.applicable, cc * l < 1.0);
    }

    #[test]
    fn mollified_gradient_bound(
        atoms in prop::collection::vec((-1.5f64..1.5, 0.1f64..1.0), 1..5),
        sigma in 0.2f64..3.0,
        xs in prop::collection::vec(-10.0f64..10.0, 1..50),
    ) {
        let nu = AtomicMeasure::new(atoms.into_iter().map(|(x, w)| (vec![x], w)).collect()).unwrap();
        let cap = nu.radius / (sigma * sigma);
        for x in xs {
            let g = mollified_grad_f(&nu, sigma, &[x])[0];
            prop_assert!(g.abs() <= cap, "|g|={} cap={cap}", g.abs());
        }
    }

    #[test]
    fn mollified_gate_follows_radius(r in 0.0f64..2.0, sigma in 0.1f64..2.0) {
        let b = bound_mollified(r, sigma, MollifiedVariant::GaussianPoincare, &search()).unwrap();
        prop_assert_eq!(b.applicable, r < 2.0 * sigma);
    }
}
