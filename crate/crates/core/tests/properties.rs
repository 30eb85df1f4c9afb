use proptest::prelude::*;
use rdnr_core::cases;
use rdnr_core::ccg::{Instance, InstanceOptions};
use rdnr_core::engine::ClarabelBackend;
use rdnr_core::formulation::evaluate_q;
use rdnr_core::network::radiality_rows;
use rdnr_core::network::topology::{is_radial, max_weight_tree, satisfies_rows, DEFAULT_LOOP_CAP};
use rdnr_core::oracle;
use rdnr_core::polytope;

fn unit(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0..1.0_f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn toy_routes_agree(g in proptest::collection::vec(-1.0..1.0_f64, 2), xi in proptest::collection::vec(0.25..0.75_f64, 2)) {
        let toy = oracle::toy_set();
        prop_assume!(!oracle::enumerate_vertices(&toy, &xi).unwrap().vertices.is_empty());
        let c = oracle::mapping_cross_check(&ClarabelBackend::default(), &toy, &g, &xi).unwrap();
        prop_assert!(c.value_spread() <= 1e-6, "{:?}", c);
        prop_assert!(toy.max_violation(&c.block.0, &xi) <= 1e-7);
    }

    #[test]
    fn production_vertices_match_basis_enumeration(
        rows in proptest::collection::vec((proptest::collection::vec(-1.0..1.0_f64, 3), 0.1..1.0_f64), 1..6),
    ) {
        let a: Vec<Vec<f64>> = rows.iter().map(|(r, _)| r.clone()).collect();
        let b: Vec<f64> = rows.iter().map(|(_, v)| *v).collect();
        let (lo, hi) = (vec![-1.0; 3], vec![1.0; 3]);
        let got = polytope::enumerate_vertices(&a, &b, &lo, &hi, 1e-10).unwrap();
        let mut full = a.clone();
        let mut rhs = b.clone();
        for k in 0..3 {
            let mut e = vec![0.0; 3];
            e[k] = 1.0;
            full.push(e.clone());
            rhs.push(1.0);
            e[k] = -1.0;
            full.push(e);
            rhs.push(1.0);
        }
        let want = oracle::basis_vertices(&full, &rhs, 3).unwrap().vertices;
        prop_assert_eq!(got.len(), want.len());
        for v in &want {
            prop_assert!(got.iter().any(|u| u.iter().zip(v).all(|(p, q)| (p - q).abs() < 1e-7)));
        }
    }

    #[test]
    fn max_weight_trees_are_radial_and_satisfy_the_rows(w in unit(37)) {
        let case = cases::case33();
        let rows = radiality_rows(&case, DEFAULT_LOOP_CAP).unwrap();
        let alpha = max_weight_tree(&case, &w);
        prop_assert!(is_radial(&case, &alpha));
        prop_assert!(satisfies_rows(&rows, &alpha));
    }

    #[test]
    fn recourse_is_convex_in_w(t in unit(7), a in unit(2), b in unit(2)) {
        let inst = Instance::new(&cases::case6(), &InstanceOptions::default()).unwrap();
        let be = ClarabelBackend::default();
        let alpha = max_weight_tree(&inst.case, &t);
        let at = |u: &[f64]| -> Vec<f64> { (0..2).map(|k| inst.unc.w_min[k] + u[k] * (inst.unc.w_max[k] - inst.unc.w_min[k])).collect() };
        let (wa, wb) = (at(&a), at(&b));
        let wm: Vec<f64> = wa.iter().zip(&wb).map(|(p, q)| 0.5 * (p + q)).collect();
        let q = |w: &[f64]| evaluate_q(&inst.model, &be, &alpha, w).unwrap();
        let (qa, qb, qm) = (q(&wa), q(&wb), q(&wm));
        prop_assert!(qm.value <= 0.5 * (qa.value + qb.value) + 1e-7);
        prop_assert!((qa.value - qa.dual_value).abs() <= 1e-6 * (1.0 + qa.value.abs()));
    }

    #[test]
    fn lifted_and_expanded_budgets_agree(u in unit(2)) {
        let case = cases::case6();
        let inst = Instance::new(&case, &InstanceOptions::default()).unwrap();
        let opts = rdnr_core::formulation::UncertaintyOptions { force_lifted: true, ..Default::default() };
        let lifted = rdnr_core::formulation::build_uncertainty(&case, &opts).unwrap();
        let w: Vec<f64> = (0..2).map(|k| inst.unc.w_min[k] + u[k] * (inst.unc.w_max[k] - inst.unc.w_min[k])).collect();
        let xi = inst.unc.w_max.clone();
        prop_assert_eq!(inst.unc.contains(&w, &xi, 1e-12), lifted.contains(&w, &xi, 1e-12));
    }
}
