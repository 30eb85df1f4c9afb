//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdnr_cli::commands::{cmd_compare, cmd_oracle_check, cmd_sensitivity, cmd_solve, CheckStatus, CompareReport};
use rdnr_cli::{RunConfig, Task};
use rdnr_core::benders::StopReason;
use rdnr_core::cases;
use rdnr_core::ccg::mapping::block_argmax;
use rdnr_core::ccg::{run_mapping_ccg, solve_subproblem, CcgOutcome, CcgSettings, ColumnMode, Instance, InstanceOptions, SpStrategy};
use rdnr_core::engine::{BnbSettings, ClarabelBackend};
use rdnr_core::formulation::uncertainty::XiRowKind;
use rdnr_core::network::topology::{is_radial, max_weight_tree};
use rdnr_core::oracle::{self, Component, TOY_WEIGHTS};
use rdnr_core::sensitivity::RowRef;

const EPS: f64 = 1e-4;
const AGREE: f64 = 1e-6;
const MEMBERSHIP: f64 = 1e-8;
const COMPARE_GAP: f64 = 1e-3;
const BENDERS_CAP: usize = 100;
const FD_REL: f64 = 0.05;
const FD_ABS: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cfg(task: Task, case: &str, out: &Path) -> RunConfig {
    RunConfig::new(task, case, out)
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let toy = oracle::toy_set();
    let be = ClarabelBackend::default();
    for (xi, want) in [([0.75, 0.75], [0.25, 0.5]), ([0.75, 0.4], [0.35, 0.4])] {
        let c = oracle::mapping_cross_check(&be, &toy, &TOY_WEIGHTS, &xi).map_err(|e| e.to_string())?;
        ensure(sup(&c.vertex.0, &want) <= AGREE, || format!("vertex route gives {:?} at {xi:?}", c.vertex.0))?;
        ensure(sup(&c.block.0, &want) <= AGREE, || format!("block route gives {:?} at {xi:?}", c.block.0))?;
        ensure(c.value_spread() <= AGREE, || format!("values spread {:.2e} at {xi:?}", c.value_spread()))?;
    }
    let t = start.elapsed().as_secs_f64();
    ensure(t < 1.0, || format!("took {t:.2} s"))?;
    Ok(format!("three routes agree at both resizings in {t:.3} s"))
}

fn random_xi(inst: &Instance, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let xi: Vec<f64> = (0..inst.unc.n_w).map(|k| rng.gen_range(inst.domain.lower[k]..=inst.domain.upper[k])).collect();
        let nonempty = oracle::enumerate_vertices(&inst.unc, &xi).is_ok_and(|v| !v.vertices.is_empty());
        if inst.domain.contains(&xi, 0.0) && nonempty {
            return xi;
        }
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let inst = Instance::new(&cases::case6(), &InstanceOptions::default()).map_err(|e| e.to_string())?;
    ensure(inst.unc.n_w == 2 && inst.case.horizon == 1, || "case6 is not T = 1, N_w = 2".into())?;
    let be = ClarabelBackend::default();
    let bnb = BnbSettings { abs_gap: 1e-8, ..BnbSettings::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let weights: Vec<f64> = (0..inst.case.num_branches()).map(|_| rng.gen()).collect();
        let alpha = max_weight_tree(&inst.case, &weights);
        ensure(is_radial(&inst.case, &alpha), || "sampled topology is not radial".into())?;
        let xi = random_xi(&inst, &mut rng);
        let v = solve_subproblem(&inst.model, &inst.unc, &be, &alpha, &xi, SpStrategy::VertexEnum, &bnb).map_err(|e| e.to_string())?;
        let m = solve_subproblem(&inst.model, &inst.unc, &be, &alpha, &xi, SpStrategy::BigMMilp, &bnb).map_err(|e| e.to_string())?;
        worst = worst.max((v.value - m.value).abs());
    }
    let t = start.elapsed().as_secs_f64();
    ensure(worst <= AGREE, || format!("values differ by {worst:.2e}"))?;
    ensure(t < 60.0, || format!("took {t:.1} s"))?;
    Ok(format!("20 draws agree within {worst:.2e} in {t:.1} s"))
}

fn check_ccg_run(name: &str, inst: &Instance, out: &CcgOutcome) -> Result<(), String> {
    ensure(out.converged && out.gap() < EPS, || format!("{name}: gap {:.3e} after {} iterations", out.gap(), out.iterations))?;
    ensure(out.iterations <= 10, || format!("{name}: {} iterations", out.iterations))?;
    ensure((out.ub - out.lb).abs() <= EPS, || format!("{name}: LB {} UB {}", out.lb, out.ub))?;
    ensure(is_radial(&inst.case, &out.alpha), || format!("{name}: final topology is not radial"))?;
    let slack = out.worst_case.recourse.s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    ensure(slack <= AGREE, || format!("{name}: slack {slack:.2e}"))
}

fn criterion_3(runs: &[(&str, &CompareReport)], seconds: f64) -> Outcome {
    let mut parts = Vec::new();
    for (name, r) in runs {
        let inst = Instance::new(&cases::bundled(name).unwrap(), &InstanceOptions::default()).map_err(|e| e.to_string())?;
        check_ccg_run(name, &inst, &r.ccg)?;
        parts.push(format!("{name} {} it", r.ccg.iterations));
    }
    ensure(seconds < 300.0, || format!("C&CG runs took {seconds:.1} s"))?;
    Ok(format!("{}, gap < 1e-4, radial, zero slack, {seconds:.1} s", parts.join(", ")))
}

fn criterion_4(csvs: &[PathBuf]) -> Outcome {
    let mut rows = 0;
    for p in csvs {
        let mut rd = csv::Reader::from_path(p).map_err(|e| format!("{}: {e}", p.display()))?;
        let headers = rd.headers().map_err(|e| e.to_string())?.clone();
        let col = |n: &str| headers.iter().position(|h| h == n).ok_or(format!("{}: no {n} column", p.display()));
        let (ilb, iub) = (col("lb")?, col("ub")?);
        let mut prev: Option<(f64, f64)> = None;
        for rec in rd.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            let lb: f64 = rec[ilb].parse().map_err(|_| "bad lb".to_string())?;
            let ub: f64 = rec[iub].parse().map_err(|_| "bad ub".to_string())?;
            if let Some((pl, pu)) = prev {
                ensure(lb >= pl && ub <= pu, || format!("{} row {}: LB {pl} -> {lb}, UB {pu} -> {ub}", p.display(), rows + 1))?;
            }
            prev = Some((lb, ub));
            rows += 1;
        }
    }
    Ok(format!("{} convergence files, {rows} rows monotone", csvs.len()))
}

fn criterion_5() -> Outcome {
    let inst = Instance::new(&cases::case6(), &InstanceOptions::default()).map_err(|e| e.to_string())?.without_resizing_cost();
    let be = ClarabelBackend::default();
    let run = |mode| {
        let s = CcgSettings { mode, xi_fixed: Some(inst.unc.w_max.clone()), ..CcgSettings::default() };
        run_mapping_ccg(&inst, &be, &s).map_err(|e| e.to_string())
    };
    let mapping = run(ColumnMode::Mapping)?;
    let mut parts = vec![format!("mapping {:.8}", mapping.objective)];
    for (name, mode) in [("degenerate", ColumnMode::Degenerate), ("classical", ColumnMode::Classical)] {
        let o = run(mode)?;
        ensure(o.converged, || format!("{name} did not converge"))?;
        let d = (o.objective - mapping.objective).abs();
        ensure(d <= AGREE, || format!("{name} {:.10} vs mapping {:.10}", o.objective, mapping.objective))?;
        parts.push(format!("{name} {:.8}", o.objective));
    }
    Ok(parts.join(", "))
}

fn column_violation(inst: &Instance, out: &CcgOutcome) -> Result<(f64, usize), String> {
    let be = ClarabelBackend::default();
    let xi = &out.final_master.xi;
    let mut worst: f64 = 0.0;
    for w in &out.final_master.column_w {
        worst = worst.max(inst.unc.max_violation(w, xi));
    }
    // the same columns regenerated from their multipliers at the final resizing
    for lambda in &out.column_lambdas {
        let g = inst.model.g.tmul(lambda);
        let (w, _) = block_argmax(&be, &inst.unc, &g, xi, true).ok_or("column set empty at the final resizing")?;
        worst = worst.max(inst.unc.max_violation(&w, xi));
    }
    Ok((worst, out.final_master.column_w.len()))
}

fn criterion_6(runs: &[(&str, &CompareReport)]) -> Outcome {
    let mut parts = Vec::new();
    for (name, r) in runs {
        let inst = Instance::new(&cases::bundled(name).unwrap(), &InstanceOptions::default()).map_err(|e| e.to_string())?;
        let (v, n) = column_violation(&inst, &r.ccg)?;
        ensure(v <= MEMBERSHIP, || format!("{name}: a column violates W(xi*) by {v:.2e}"))?;
        parts.push(format!("{name} {n} columns, worst {v:.1e}"));
    }
    Ok(parts.join("; "))
}

fn criterion_7(runs: &[(&str, &CompareReport)]) -> Outcome {
    let mut parts = Vec::new();
    for (name, r) in runs {
        let ccg_to = r.ccg.log.iterations_to(COMPARE_GAP).ok_or(format!("{name}: C&CG never reached 1e-3"))?;
        match r.benders.log.iterations_to(COMPARE_GAP) {
            Some(n) => {
                ensure(n >= ccg_to, || format!("{name}: Benders {n} vs C&CG {ccg_to} iterations"))?;
                parts.push(format!("{name} Benders {n} vs C&CG {ccg_to}"));
            }
            None => {
                let capped = r.benders.stop == StopReason::IterationLimit && r.benders.iterations == BENDERS_CAP && r.benders.gap() > 0.0;
                ensure(capped, || {
                    format!("{name}: Benders stopped {:?} at {} without reaching 1e-3", r.benders.stop, r.benders.iterations)
                })?;
                parts.push(format!("{name} Benders capped at {BENDERS_CAP} with gap {:.3e} vs C&CG {ccg_to}", r.benders.gap()));
            }
        }
        if r.ccg.converged && r.benders.converged() {
            let d = (r.ccg.objective - r.benders.objective).abs();
            ensure(d <= COMPARE_GAP, || format!("{name}: objectives differ by {d:.2e}"))?;
        }
    }
    Ok(parts.join("; "))
}

fn criterion_8(dir: &Path) -> Outcome {
    let c = cfg(Task::Sensitivity { solve: true, fd_step: FD_STEP, scan: false }, "case6", dir);
    let s = cmd_sensitivity(&c).map_err(|e| e.to_string())?;
    let inst = Instance::new(&cases::case6(), &InstanceOptions::default()).map_err(|e| e.to_string())?;
    let be = ClarabelBackend::default();
    let fd = |comp| oracle::finite_diff_sensitivity(&inst.model, &inst.unc, &be, &s.alpha, &s.xi, comp, FD_STEP).map_err(|e| e.to_string());
    let close = |m: f64, d: f64| (m - d).abs() <= FD_ABS.max(FD_REL * d.abs());
    let (mut exact, mut ranged) = (0, 0);
    for r in s.report.active_rows() {
        let comp = match r.row {
            RowRef::Fixed { row } => Component::Row(row),
            RowRef::Resizing { row } => match inst.unc.xi_rows[row].kind {
                XiRowKind::Cap { k } => Component::Xi(k),
                XiRowKind::Extension { .. } => continue,
            },
        };
        let d = fd(comp)?;
        if r.degenerate {
            // the central difference averages the one-sided slopes, which bound the face
            let inside = d >= r.range.0 - FD_ABS && d <= r.range.1 + FD_ABS;
            ensure(inside, || format!("{}: difference {d:.6} outside [{:.6}, {:.6}]", r.label, r.range.0, r.range.1))?;
            ranged += 1;
        } else {
            ensure(close(r.multiplier, d), || format!("{}: multiplier {:.6} vs difference {d:.6}", r.label, r.multiplier))?;
            exact += 1;
        }
    }
    let d = fd(Component::PeriodBudget(0))?;
    let g = s.report.period_budget[0];
    ensure(close(g, d), || format!("budget sensitivity {g:.6} vs difference {d:.6}"))?;
    let gap = s.report.duality_gap();
    ensure(gap <= AGREE, || format!("duality gap {gap:.2e}"))?;
    Ok(format!(
        "{exact} nondegenerate rows match, {ranged} degenerate rows inside their ranges, budget {g:.5} vs {d:.5}, duality gap {gap:.1e}"
    ))
}

fn criterion_9(dir: &Path) -> Outcome {
    let mut c = cfg(Task::Solve, "case6", dir);
    c.extension = true;
    let r = cmd_solve(&c).map_err(|e| e.to_string())?;
    let inst = &r.prepared.inst;
    let n_ext = inst.unc.xi_rows.iter().filter(|x| matches!(x.kind, XiRowKind::Extension { .. })).count();
    ensure(n_ext == inst.unc.n_w, || format!("{n_ext} extension rows"))?;
    check_ccg_run("case6+ext", inst, &r.outcome)?;
    let be = ClarabelBackend::default();
    let mut worst: f64 = 0.0;
    for lambda in &r.outcome.column_lambdas {
        let g = inst.model.g.tmul(lambda);
        let chk = oracle::mapping_cross_check_with(&be, &inst.unc, &inst.block_unc, &g, &r.outcome.xi).map_err(|e| e.to_string())?;
        worst = worst.max(chk.value_spread());
    }
    ensure(worst <= AGREE, || format!("extended block disagrees by {worst:.2e}"))?;
    Ok(format!("{} iterations, {} blocks cross-checked within {worst:.1e}", r.outcome.iterations, r.outcome.column_lambdas.len()))
}

fn criterion_10(dir: &Path) -> Outcome {
    let c = cfg(Task::OracleCheck { samples: 20 }, "case6", dir);
    let r = cmd_oracle_check(&c).map_err(|e| e.to_string())?;
    for name in ["radiality-rows", "box-vertices", "toy-vertices", "q-convexity", "strong-duality"] {
        let chk = r.checks.iter().find(|x| x.name == name).ok_or(format!("{name} missing"))?;
        ensure(chk.status == CheckStatus::Pass, || format!("{name}: {:?} {}", chk.status, chk.detail))?;
    }
    Ok(format!("{} checks pass", r.checks.len()))
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |n: &str| tmp.path().join(n);
    let mut results: Vec<(usize, Outcome)> = vec![(1, criterion_1()), (2, criterion_2())];

    let start = Instant::now();
    let mut runs = Vec::new();
    let mut ccg_seconds = 0.0;
    let mut csvs = Vec::new();
    for name in ["case6", "case33"] {
        let c = cfg(Task::Compare { benders_time_limit: None }, name, &dir(name));
        match cmd_compare(&c) {
            Ok(r) => {
                ccg_seconds += r.ccg_seconds;
                csvs.push(dir(name).join("convergence_ccg.csv"));
                csvs.push(dir(name).join("convergence_benders.csv"));
                runs.push((name, r));
            }
            Err(e) => results.push((3, Err(format!("{name}: {e}")))),
        }
    }
    eprintln!("comparison runs took {:.1} s", start.elapsed().as_secs_f64());
    let runs_ref: Vec<(&str, &CompareReport)> = runs.iter().map(|(n, r)| (*n, r)).collect();
    if runs.len() == 2 {
        results.push((3, criterion_3(&runs_ref, ccg_seconds)));
    }
    results.push((5, criterion_5()));
    results.push((6, criterion_6(&runs_ref)));
    results.push((7, criterion_7(&runs_ref)));
    results.push((8, criterion_8(&dir("sens"))));
    csvs.push(dir("sens").join("convergence.csv"));
    results.push((9, criterion_9(&dir("ext"))));
    csvs.push(dir("ext").join("convergence.csv"));
    results.push((10, criterion_10(&dir("oracle"))));
    results.push((4, criterion_4(&csvs)));
    results.sort_by_key(|(n, _)| *n);

    let mut failed = Vec::new();
    for (n, r) in &results {
        match r {
            Ok(m) => println!("PASS criterion {n}: {m}"),
            Err(m) => {
                println!("FAIL criterion {n}: {m}");
                failed.push(*n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
