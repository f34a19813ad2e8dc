//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solpred::bnb::{apply_local_branching_cut, collect_root_info, root_branch_solve, solve, BnbConfig};
use solpred::gcn::{self, bce_loss, forward, init_params, targets_from_labels, Aggregation, GcnHyper};
use solpred::gen::{generate, preset_params, GenSpec, Preset, Problem};
use solpred::label::{generate_labels, Label, LabelConfig, LabelSet};
use solpred::lp::{solve_lp, BoundOverrides, LpStatus};
use solpred::metrics::{average_precision, display_gap, optimality_gap, prevalence_baseline, primal_gap, GAP_DISPLAY_CAP};
use solpred::mip::{canonicalize, evaluate_solution, to_json_string, Constraint, MipInstance, Sense, Variable};
use solpred::predict::{select_for_instance, ETA_GRID};
use solpred::trigraph::{apply_scaler, build_trigraph, fit_scaler, TriGraph};

type Outcome = Result<String, String>;

fn tiny(problem: Problem, seed: u64) -> MipInstance {
    generate(&GenSpec::preset(problem, Preset::Tiny, seed).unwrap()).unwrap()
}

fn same(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= 1e-6,
        (None, None) => true,
        _ => false,
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn solver_oracle() -> Outcome {
    let t = Instant::now();
    let mut count = 0;
    for problem in Problem::ALL {
        for seed in 0..50 {
            let inst = tiny(problem, seed);
            let bins = inst.binaries().len();
            ensure(bins <= 16, || format!("{problem} seed {seed} has {bins} binaries"))?;
            let want = support::brute_force(&inst);
            let got = solve(&inst, &BnbConfig::default()).map_err(|e| e.to_string())?;
            ensure(same(got.objective(), want), || {
                format!("{problem} seed {seed}: bnb {:?} vs enumeration {want:?}", got.objective())
            })?;
            count += 1;
        }
    }
    Ok(format!("{count} instances agree, {:.1}s", t.elapsed().as_secs_f64()))
}

fn root_branching() -> Outcome {
    let mut count = 0;
    for problem in Problem::ALL {
        for seed in 0..50 {
            let inst = tiny(problem, seed);
            let plain = solve(&inst, &BnbConfig::default()).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + problem as u64);
            let z: Vec<f64> = (0..inst.num_vars()).map(|_| rng.gen::<f64>()).collect();
            let eta = ETA_GRID[rng.gen_range(0..ETA_GRID.len())];
            let (s, x_hat) = select_for_instance(&inst, &z, eta).map_err(|e| e.to_string())?;
            for phi in 0..=2 {
                let merged = root_branch_solve(&inst, &x_hat, &s, phi, &BnbConfig::default()).map_err(|e| e.to_string())?;
                ensure(merged.status == plain.status && same(merged.objective(), plain.objective()), || {
                    format!(
                        "{problem} seed {seed} phi {phi}: {:?} {:?} vs plain {:?} {:?}",
                        merged.status,
                        merged.objective(),
                        plain.status,
                        plain.objective()
                    )
                })?;
                count += 1;
            }
        }
    }
    Ok(format!("{count} (instance, phi) pairs match"))
}

fn zero_radius_cut() -> Outcome {
    let pool = [Problem::Fcnf, Problem::Cfl, Problem::Mk, Problem::Tsp, Problem::Vrp];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for draw in 0..100u64 {
        let problem = pool[draw as usize % pool.len()];
        let inst = tiny(problem, draw);
        let bins = inst.binaries();
        ensure(bins.len() <= 12, || format!("{problem} has {} binaries", bins.len()))?;
        let s: Vec<usize> = bins.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        let mut x_hat = vec![0.0; inst.num_vars()];
        for &j in &s {
            x_hat[j] = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        }
        let cut = apply_local_branching_cut(&inst, &x_hat, &s, 0).map_err(|e| e.to_string())?;
        let got: Vec<u32> = support::enumerate(&cut).into_iter().map(|p| p.0).collect();
        let want: Vec<u32> = support::enumerate(&inst)
            .into_iter()
            .map(|p| p.0)
            .filter(|mask| {
                bins.iter().enumerate().all(|(k, j)| !s.contains(j) || ((mask >> k) & 1) as f64 == x_hat[*j])
            })
            .collect();
        ensure(got == want, || format!("draw {draw} ({problem}): {} vs {} feasible masks", got.len(), want.len()))?;
    }
    Ok("100 draws give identical feasible sets".into())
}

fn strong_duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for problem in Problem::ALL {
        for seed in 0..20 {
            let canon = canonicalize(&tiny(problem, seed)).unwrap().instance;
            let bins = canon.binaries();
            for round in 0..6 {
                let fix: BoundOverrides = if round == 0 {
                    BoundOverrides::new()
                } else {
                    let mut fix = BoundOverrides::new();
                    for &j in &bins {
                        if rng.gen_bool(0.3) {
                            let v = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
                            fix.insert(j, (v, v));
                        }
                    }
                    fix
                };
                let lp = solve_lp(&canon, &fix, &[]);
                if lp.status != LpStatus::Optimal {
                    continue;
                }
                let mut fixed = canon.clone();
                for (&j, &(l, u)) in fix.iter() {
                    fixed.variables[j].lb = l;
                    fixed.variables[j].ub = u;
                }
                let d = support::dual_objective(&fixed, &lp);
                let err = (lp.objective - d).abs() / (1.0 + lp.objective.abs());
                worst = worst.max(err);
                ensure(err <= 1e-6 + 1e-12, || format!("{problem} seed {seed} round {round}: {} vs dual {d}", lp.objective))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} optimal LPs, worst relative gap {worst:.2e}"))
}

fn better(inst: &MipInstance, a: f64, b: f64) -> f64 {
    // improvement of a over b in the instance's sense
    if inst.sense == Sense::Maximize {
        a - b
    } else {
        b - a
    }
}

fn proximity_labels() -> Outcome {
    let t = Instant::now();
    let mut optimal_traces = 0;
    for problem in Problem::ALL {
        for seed in 0..20 {
            let inst = tiny(problem, 1000 + seed);
            let set = generate_labels(&inst, &LabelConfig::default()).map_err(|e| e.to_string())?;
            for (k, sol) in set.solutions.iter().enumerate() {
                let ev = evaluate_solution(&inst, &sol.values).map_err(|e| e.to_string())?;
                ensure(ev.feasible, || format!("{problem} seed {seed}: trace point {k} infeasible"))?;
                if k > 0 {
                    let gain = better(&inst, sol.objective, set.solutions[k - 1].objective);
                    ensure(gain >= set.delta - 1e-6, || {
                        format!("{problem} seed {seed}: step {k} improves {gain} < delta {}", set.delta)
                    })?;
                }
            }
            let last = set.solutions.last().ok_or("empty trace")?;
            if let Some(opt) = support::brute_force(&inst) {
                if (last.objective - opt).abs() <= 1e-6 {
                    optimal_traces += 1;
                    for (&j, &l) in set.binaries.iter().zip(&set.labels) {
                        let v = last.values[j].round();
                        let ok = match l {
                            Label::Stable1 => v == 1.0,
                            Label::Stable0 => v == 0.0,
                            Label::Unstable => true,
                        };
                        ensure(ok, || format!("{problem} seed {seed}: label {l:?} on var {j} disagrees with optimum"))?;
                    }
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!("160 traces valid, {optimal_traces} end at the optimum, {secs:.1}s"))
}

fn three_var_graph() -> TriGraph {
    let mut inst = MipInstance::new("toy3", Sense::Maximize);
    let a = inst.add_var(Variable::binary("a"), 3.0);
    let b = inst.add_var(Variable::binary("b"), 2.0);
    let c = inst.add_var(Variable::continuous("c", 0.0, 4.0), 1.0);
    inst.add_row(Constraint::le("cap", vec![(a, 2.0), (b, 1.0), (c, 1.0)], 3.5));
    inst.add_row(Constraint::ge("link", vec![(a, 1.0), (b, 1.0), (c, -0.5)], -1.0));
    let root = collect_root_info(&inst).unwrap();
    let g = build_trigraph(&inst, &root).unwrap();
    apply_scaler(&g, &fit_scaler(std::slice::from_ref(&g)).unwrap())
}

fn gradient_check() -> Outcome {
    let g = three_var_graph();
    let targets: Vec<Option<f64>> = (0..g.num_vars()).map(|j| Some((j % 2) as f64)).collect();
    let mut worst: f64 = 0.0;
    for mode in [Aggregation::Mean, Aggregation::Literal] {
        let hyper = GcnHyper { hidden: 4, out_hidden: 5, transitions: 2, aggregation: mode, ..Default::default() };
        // biases start at zero and scaled constant features are zero, so shift
        // every entry off the ReLU kink before differencing
        let mut params = init_params(&hyper, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for m in params.mats.values_mut() {
            for v in &mut m.data {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let (_, grads) = gcn::gradients(&g, &params, &hyper, &targets).map_err(|e| e.to_string())?;
        let loss = |p: &gcn::GcnParams| bce_loss(&forward(&g, p, &hyper).unwrap(), &targets).unwrap();
        let h = 1e-4;
        for (name, m) in &params.mats {
            for k in 0..m.data.len() {
                let mut plus = params.clone();
                plus.mats.get_mut(name).unwrap().data[k] += h;
                let mut minus = params.clone();
                minus.mats.get_mut(name).unwrap().data[k] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let analytic = grads.mats[name].data[k];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                ensure(rel <= 1e-4, || format!("{mode:?} {name}[{k}]: analytic {analytic} numeric {numeric}"))?;
            }
        }
    }
    Ok(format!("max relative error {worst:.2e} over both modes"))
}

fn gcn_invariants() -> Outcome {
    let hyper = GcnHyper { hidden: 16, out_hidden: 16, ..Default::default() };
    let mut worst: f64 = 0.0;
    for (i, problem) in Problem::ALL.into_iter().enumerate() {
        let inst = tiny(problem, 5);
        let g = build_trigraph(&inst, &collect_root_info(&inst).unwrap()).unwrap();
        let g = apply_scaler(&g, &fit_scaler(std::slice::from_ref(&g)).unwrap());
        let params = init_params(&hyper, i as u64).unwrap();
        let z = forward(&g, &params, &hyper).map_err(|e| e.to_string())?;
        ensure(z.iter().all(|&v| v > 0.0 && v < 1.0), || format!("{problem}: output outside (0,1)"))?;
        let n = g.num_vars();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(i as u64));
        let zp = forward(&g.permute_vars(&perm), &params, &hyper).map_err(|e| e.to_string())?;
        for (k, &old) in perm.iter().enumerate() {
            worst = worst.max((zp[k] - z[old]).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max permutation difference {worst:.2e}"))?;
    Ok(format!("outputs in (0,1), max permutation difference {worst:.2e}"))
}

/// Precision at the rank of each positive, counted pair by pair.
fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    let before = |j: usize, i: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut total = 0.0;
    for i in (0..n).filter(|&i| labels[i]) {
        let rank = (0..n).filter(|&j| before(j, i)).count() as f64;
        let hits = (0..n).filter(|&j| labels[j] && before(j, i)).count() as f64;
        total += hits / rank;
    }
    total / positives
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..60);
        let levels = rng.gen_range(2..20);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let k = rng.gen_range(0..n);
        labels[k] = true;
        let got = average_precision(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((got - brute_ap(&scores, &labels)).abs());
    }
    ensure(worst <= 1e-12, || format!("AP differs from brute force by {worst:.2e}"))?;
    let spots = [
        ("primal_gap(7,7)", primal_gap(7.0, 7.0), 0.0),
        ("primal_gap(110,100)", primal_gap(110.0, 100.0), 1000.0 / 110.0),
        ("primal_gap(0,0)", primal_gap(0.0, 0.0), 0.0),
        ("optimality_gap(100,90)", optimality_gap(100.0, 90.0), 10.0),
        ("optimality_gap(5,5)", optimality_gap(5.0, 5.0), 0.0),
        ("display optimality_gap(0,-1)", display_gap(optimality_gap(0.0, -1.0)), GAP_DISPLAY_CAP),
    ];
    for (what, got, want) in spots {
        ensure((got - want).abs() <= 1e-9 * (1.0 + want.abs()), || format!("{what} = {got}, expected {want}"))?;
    }
    let base = prevalence_baseline(&[true, false, false, true]).map_err(|e| e.to_string())?;
    ensure(base == vec![0.5; 4], || format!("prevalence {base:?}"))?;
    Ok(format!("1000 AP vectors within {worst:.1e}, gap spot values match"))
}

fn stable_ap(z: &[f64], graph: &TriGraph, labels: &HashMap<String, Label>) -> Option<(f64, f64)> {
    let (mut zs, mut ys) = (Vec::new(), Vec::new());
    for (j, t) in targets_from_labels(graph, labels).into_iter().enumerate() {
        if let Some(t) = t {
            zs.push(z[j]);
            ys.push(t == 1.0);
        }
    }
    if !ys.iter().any(|&y| y) {
        return None;
    }
    let ap = average_precision(&zs, &ys).ok()?;
    let base = average_precision(&prevalence_baseline(&ys).ok()?, &ys).ok()?;
    Some((ap, base))
}

fn learning_signal() -> Outcome {
    let t = Instant::now();
    let labeled = |seed: u64| -> Result<(TriGraph, HashMap<String, Label>), String> {
        let inst = generate(&GenSpec::preset(Problem::Sc, Preset::Small, seed).unwrap()).unwrap();
        let set: LabelSet = generate_labels(&inst, &LabelConfig::default()).map_err(|e| e.to_string())?;
        let root = collect_root_info(&inst).map_err(|e| e.to_string())?;
        let g = build_trigraph(&inst, &root).map_err(|e| e.to_string())?;
        Ok((g, set.by_name(&inst)))
    };
    let train: Vec<_> = (0..14).map(|i| labeled(90_000 + i)).collect::<Result<_, _>>()?;
    let test: Vec<_> = (0..4).map(|i| labeled(91_000 + i)).collect::<Result<_, _>>()?;
    let label_secs = t.elapsed().as_secs_f64();
    let graphs: Vec<TriGraph> = train.iter().map(|p| p.0.clone()).collect();
    let scaler = fit_scaler(&graphs).map_err(|e| e.to_string())?;
    let data: Vec<(TriGraph, Vec<Option<f64>>)> = train
        .iter()
        .map(|(g, l)| {
            let g = apply_scaler(g, &scaler);
            let y = targets_from_labels(&g, l);
            (g, y)
        })
        .collect();
    let mut lines = Vec::new();
    let mut all_ok = true;
    for seed in 0..3 {
        let hyper = GcnHyper { hidden: 32, out_hidden: 32, epochs: 100, seed, ..Default::default() };
        let (params, _) = gcn::train(&data, &hyper).map_err(|e| e.to_string())?;
        let mut wins = 0;
        let mut cells = Vec::new();
        for (g, l) in &test {
            let g = apply_scaler(g, &scaler);
            let z = forward(&g, &params, &hyper).map_err(|e| e.to_string())?;
            let (ap, base) = stable_ap(&z, &g, l).ok_or("held-out instance without a Stable1 label")?;
            if ap > base {
                wins += 1;
            }
            cells.push(format!("{ap:.3}/{base:.3}"));
        }
        all_ok &= wins >= 3;
        lines.push(format!("seed {seed}: {wins}/4 wins [{}]", cells.join(" ")));
    }
    let summary = format!(
        "{} (labels {label_secs:.0}s, total {:.0}s)",
        lines.join("; "),
        t.elapsed().as_secs_f64()
    );
    ensure(all_ok, || summary.clone())?;
    Ok(summary)
}

fn solpred(workdir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_solpred"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("solpred {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn mean_gap(report: &serde_json::Value, mode: &str) -> Result<(f64, usize, usize), String> {
    let m = report["modes"]
        .as_array()
        .and_then(|ms| ms.iter().find(|m| m["mode"] == mode))
        .ok_or_else(|| format!("mode {mode} missing from report"))?;
    let gap = m["mean_primal_gap"].as_f64().ok_or("mean primal gap missing")?;
    Ok((gap, m["solved"].as_u64().unwrap_or(0) as usize, m["runs"].as_u64().unwrap_or(0) as usize))
}

fn approximate_sanity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = "problem = \"CFL\"\npreset = \"tinyplus\"\ntrain = 40\nvalid = 10\ntest = 20\nseed = 5\n\
                  [gcn]\nhidden = 32\nout_hidden = 32\nepochs = 100\n\
                  [apply]\ntime_limit_s = 1.0\n[run]\ntime_limit_s = 1.0\n";
    std::fs::write(dir.path().join("config.toml"), config).map_err(|e| e.to_string())?;
    solpred(dir.path(), &["pipeline"])?;
    let text = std::fs::read_to_string(dir.path().join("report.json")).map_err(|e| e.to_string())?;
    let report: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let (approx, a_solved, a_runs) = mean_gap(&report, "approx")?;
    let (base, b_solved, b_runs) = mean_gap(&report, "baseline")?;
    // equal optima differ only by floating-point noise
    let both_optimal = a_solved == a_runs && b_solved == b_runs && (approx - base).abs() <= 1e-6;
    let detail = format!(
        "CFL tinyplus, 20 test instances, 1 s budget: approx gap {approx:.3e}% ({a_solved}/{a_runs} solved), baseline {base:.3e}% ({b_solved}/{b_runs} solved)"
    );
    ensure(approx <= base || both_optimal, || detail.clone())?;
    Ok(detail)
}

fn generator_fidelity() -> Outcome {
    let mut lines = Vec::new();
    for problem in [Problem::Mis, Problem::Ga, Problem::Sc, Problem::Mk] {
        let params = preset_params(problem, Preset::Small).unwrap();
        let (vars, rows) = params.counts();
        let mut seen = Vec::new();
        for seed in 0..5 {
            let spec = GenSpec::preset(problem, Preset::Small, seed).unwrap();
            let a = to_json_string(&generate(&spec).unwrap()).unwrap();
            let b = to_json_string(&generate(&spec).unwrap()).unwrap();
            ensure(a == b, || format!("{problem} seed {seed} is not byte-deterministic"))?;
            let inst = generate(&spec).unwrap();
            let (n, m) = (inst.num_vars(), inst.constraints.len());
            let table = match problem {
                Problem::Mis => (125..=125, 1734..=1929),
                Problem::Ga => (1152..=1152, 108..=108),
                Problem::Sc => (750..=750, 550..=550),
                _ => (315..=350, 19..=21),
            };
            ensure(table.0.contains(&n) && table.1.contains(&m), || {
                format!("{problem} seed {seed}: {n} vars, {m} rows outside {table:?}")
            })?;
            ensure((vars.lo..=vars.hi).contains(&n) && (rows.lo..=rows.hi).contains(&m), || format!("{problem}: preset spans disagree"))?;
            seen.push(format!("{n}x{m}"));
        }
        lines.push(format!("{problem} {}", seen.join(",")));
    }
    Ok(lines.join("; "))
}

fn pipeline_determinism() -> Outcome {
    let mut reports = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        solpred(dir.path(), &["--scale", "0.1", "pipeline"])?;
        let json = std::fs::read(dir.path().join("report.json")).map_err(|e| e.to_string())?;
        let csv = std::fs::read(dir.path().join("report.csv")).map_err(|e| e.to_string())?;
        let tests = std::fs::read_dir(dir.path().join("instances/test")).map_err(|e| e.to_string())?.count();
        reports.push((json, csv, tests));
    }
    ensure(reports[0].2 == 4, || format!("{} test instances, expected 4", reports[0].2))?;
    ensure(reports[0].0 == reports[1].0, || "report.json differs between runs".into())?;
    ensure(reports[0].1 == reports[1].1, || "report.csv differs between runs".into())?;
    Ok(format!("two runs, identical reports ({} bytes json)", reports[0].0.len()))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("solver matches enumeration", solver_oracle),
        ("root branching is exact", root_branching),
        ("zero-radius cut equals fixing", zero_radius_cut),
        ("LP strong duality", strong_duality),
        ("proximity labeling", proximity_labels),
        ("GCN gradient check", gradient_check),
        ("GCN invariants", gcn_invariants),
        ("metric oracles", metric_oracles),
        ("learning signal on SC small", learning_signal),
        ("approximate solve sanity", approximate_sanity),
        ("generator fidelity", generator_fidelity),
        ("pipeline determinism", pipeline_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match res {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
