use rdnr_core::cases;
use rdnr_core::ccg::mapping::block_argmax;
use rdnr_core::ccg::{run_mapping_ccg, CcgSettings, ColumnMode, Instance, InstanceOptions, SpStrategy};
use rdnr_core::engine::ClarabelBackend;
use rdnr_core::formulation::{build_uncertainty, UncertaintyOptions};
use rdnr_core::network::topology::is_radial;
use rdnr_core::oracle;

fn case6() -> Instance {
    Instance::new(&cases::case6(), &InstanceOptions::default()).unwrap()
}

#[test]
fn case6_converges_to_a_radial_slack_free_plan() {
    let inst = case6();
    let be = ClarabelBackend::default();
    let out = run_mapping_ccg(&inst, &be, &CcgSettings::default()).unwrap();
    assert!(out.converged && out.gap() < 1e-4);
    assert!(out.iterations <= 10);
    assert!(is_radial(&inst.case, &out.alpha));
    assert!(out.log.lb_nondecreasing() && out.log.ub_nonincreasing());
    assert!(out.worst_case.recourse.total_slack().abs() < 1e-6);
    // the reported worst case is the brute-force worst case at the incumbent
    let (_, v) = oracle::brute_force_worst_case(&inst.model, &inst.unc, &be, &out.alpha, &out.xi).unwrap();
    assert!((v - out.worst_case.value).abs() < 1e-6);
    assert!((out.objective - inst.first_stage_cost(&out.alpha, &out.xi) - v).abs() < 1e-6);
}

#[test]
fn strategies_reach_the_same_objective() {
    let inst = case6();
    let be = ClarabelBackend::default();
    let run = |s| run_mapping_ccg(&inst, &be, &CcgSettings { sp_strategy: Some(s), ..CcgSettings::default() }).unwrap();
    let (v, m) = (run(SpStrategy::VertexEnum), run(SpStrategy::BigMMilp));
    assert!((v.objective - m.objective).abs() < 1e-6, "{} vs {}", v.objective, m.objective);
}

#[test]
fn fixed_resizing_makes_all_column_modes_agree() {
    let inst = case6().without_resizing_cost();
    let be = ClarabelBackend::default();
    let xi = inst.unc.w_max.clone();
    let objs: Vec<f64> = [ColumnMode::Mapping, ColumnMode::Degenerate, ColumnMode::Classical]
        .into_iter()
        .map(|mode| {
            let s = CcgSettings { mode, xi_fixed: Some(xi.clone()), ..CcgSettings::default() };
            let o = run_mapping_ccg(&inst, &be, &s).unwrap();
            assert!(o.converged);
            assert_eq!(o.xi, xi);
            o.objective
        })
        .collect();
    assert!(objs.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-6), "{objs:?}");
}

#[test]
fn columns_stay_inside_the_final_set() {
    let inst = case6();
    let be = ClarabelBackend::default();
    let out = run_mapping_ccg(&inst, &be, &CcgSettings::default()).unwrap();
    let xi = &out.final_master.xi;
    for w in &out.final_master.column_w {
        assert!(inst.unc.max_violation(w, xi) <= 1e-8);
    }
    for lambda in &out.column_lambdas {
        let g = inst.model.g.tmul(lambda);
        let (w, _) = block_argmax(&be, &inst.unc, &g, xi, true).unwrap();
        assert!(inst.unc.max_violation(&w, xi) <= 1e-8);
    }
}

#[test]
fn extension_rows_shrink_the_worst_case() {
    let case = cases::case6();
    let be = ClarabelBackend::default();
    let base = run_mapping_ccg(&case6(), &be, &CcgSettings::default()).unwrap();
    let unc = build_uncertainty(&case, &UncertaintyOptions::default()).unwrap();
    let opts = InstanceOptions {
        uncertainty: UncertaintyOptions { extension: Some(unc.default_extension()), ..UncertaintyOptions::default() },
        ..InstanceOptions::default()
    };
    let inst = Instance::new(&case, &opts).unwrap();
    assert_eq!(inst.unc.xi_rows.len(), 2 * inst.unc.n_w);
    let ext = run_mapping_ccg(&inst, &be, &CcgSettings::default()).unwrap();
    assert!(ext.converged && ext.iterations <= 10);
    assert!(ext.log.lb_nondecreasing() && ext.log.ub_nonincreasing());
    // a smaller uncertainty set cannot make the robust plan worse
    assert!(ext.objective <= base.objective + 1e-6);
}

#[test]
fn zero_budget_is_the_deterministic_problem() {
    let case = cases::case6();
    let opts = InstanceOptions {
        uncertainty: UncertaintyOptions { gamma_t: Some(0.0), ..UncertaintyOptions::default() },
        ..InstanceOptions::default()
    };
    let inst = Instance::new(&case, &opts).unwrap();
    let be = ClarabelBackend::default();
    let out = run_mapping_ccg(&inst, &be, &CcgSettings::default()).unwrap();
    assert!(out.converged);
    let verts = oracle::enumerate_vertices(&inst.unc, &out.xi).unwrap().vertices;
    assert_eq!(verts.len(), 1);
    assert!(oracle::brute_force_worst_case(&inst.model, &inst.unc, &be, &out.alpha, &out.xi).is_ok());
}

#[test]
fn one_iteration_budget_leaves_a_gap() {
    let inst = case6();
    let be = ClarabelBackend::default();
    let out = run_mapping_ccg(&inst, &be, &CcgSettings { max_iter: 1, ..CcgSettings::default() }).unwrap();
    assert!(!out.converged);
    assert!(out.gap() > 1e-4);
    assert_eq!(out.log.records.len(), 1);
}
