use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use solpred::bnb::{collect_root_info, solve};
use solpred::gcn::{self, targets_from_labels};
use solpred::label::{generate_labels, Label, LabelFile};
use solpred::metrics::{
    accuracy_at_fraction, average_precision, display_gap, optimality_gap, prevalence_baseline, primal_gap,
    EvalReport, InstanceEval, RunEval, DEFAULT_FRACTIONS,
};
use solpred::mip::{read_instance, write_instance, MipInstance, Sense};
use solpred::predict::{
    align_predictions, apply, default_phi_eta, grid_search, ApplyConfig, ApplyMode, GridResult, ResultRow,
    ValidationCase,
};
use solpred::trigraph::{apply_scaler, build_trigraph, fit_scaler, TriGraph};
use solpred::Error;

use crate::config::ExperimentConfig;
use crate::{CliError, RunMode};

const SPLITS: [&str; 3] = ["train", "valid", "test"];

pub struct Ctx {
    pub root: PathBuf,
    pub cfg: ExperimentConfig,
}

type Res<T = ()> = Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Res {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Res {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Res {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Res<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

/// Removes files with extension `ext` so a rerun leaves no stale outputs.
fn clear_dir(dir: &Path, ext: &str) -> Res {
    if dir.exists() {
        for p in files(dir, ext)? {
            std::fs::remove_file(&p).map_err(|e| io_err(&p, e))?;
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Files with extension `ext` in `dir`, sorted by name.
fn files(dir: &Path, ext: &str) -> Res<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn warn(stage: &str, name: &str, e: impl std::fmt::Display) {
    eprintln!("warning: {stage}: skipping {name}: {e}");
}

impl Ctx {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// `rel` as a directory that must exist and hold at least one `ext` file.
    fn require_dir(&self, rel: &str, ext: &str, stage: &str) -> Res<PathBuf> {
        let dir = self.path(rel);
        if !dir.is_dir() || files(&dir, ext)?.is_empty() {
            return Err(CliError::missing(format!(
                "missing input directory {} (run `solpred {stage}` first)",
                dir.display()
            )));
        }
        Ok(dir)
    }

    fn require_file(&self, rel: &str, stage: &str) -> Res<PathBuf> {
        let p = self.path(rel);
        if !p.is_file() {
            return Err(CliError::missing(format!("missing input file {} (run `solpred {stage}` first)", p.display())));
        }
        Ok(p)
    }

    fn instances(&self, split: &str) -> Res<Vec<PathBuf>> {
        files(&self.require_dir(&format!("instances/{split}"), "json", "gen")?, "json")
    }

    fn read_label(&self, name: &str) -> Res<Option<LabelFile>> {
        let p = self.path(&format!("labels/{name}.json"));
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(LabelFile::read(&p)?))
    }

    fn read_graph(&self, name: &str) -> Res<Option<TriGraph>> {
        let p = self.path(&format!("graphs/{name}.json"));
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(TriGraph::read(&p)?))
    }

    fn read_predictions(&self, name: &str) -> Res<HashMap<String, f64>> {
        let p = self.path(&format!("predictions/{name}.csv"));
        if !p.exists() {
            return Ok(HashMap::new());
        }
        Ok(read_csv::<(String, f64)>(&p)?.into_iter().collect())
    }

    fn seed_for(&self, split: usize, i: usize) -> u64 {
        self.cfg.seed.wrapping_mul(10_000_000).wrapping_add(split as u64 * 1_000_000 + i as u64)
    }
}

pub fn gen(ctx: &Ctx) -> Res {
    for (s, (split, count)) in ctx.cfg.counts().into_iter().enumerate() {
        let dir = ctx.path(&format!("instances/{split}"));
        clear_dir(&dir, "json")?;
        (0..count).into_par_iter().try_for_each(|i| -> Res {
            let spec = ctx.cfg.gen_spec(ctx.seed_for(s, i))?;
            let inst = solpred::gen::generate(&spec)?;
            write_instance(&inst, dir.join(format!("{}.json", inst.name)))?;
            Ok(())
        })?;
        println!("gen: {count} {split} instances in {}", dir.display());
    }
    Ok(())
}

fn all_instances(ctx: &Ctx) -> Res<Vec<PathBuf>> {
    let mut out = Vec::new();
    for split in SPLITS {
        out.extend(ctx.instances(split)?);
    }
    Ok(out)
}

pub fn label(ctx: &Ctx) -> Res {
    let paths = all_instances(ctx)?;
    let dir = ctx.path("labels");
    clear_dir(&dir, "json")?;
    let lc = ctx.cfg.label_config();
    let done: Vec<bool> = paths
        .par_iter()
        .map(|p| -> Res<bool> {
            let inst = read_instance(p)?;
            match generate_labels(&inst, &lc) {
                Ok(set) => {
                    LabelFile::from_set(&inst, &set).write(dir.join(format!("{}.json", stem(p))))?;
                    Ok(true)
                }
                Err(e @ Error::NoFeasibleSolution(_)) => {
                    warn("label", &stem(p), e);
                    Ok(false)
                }
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Res<_>>()?;
    let n = done.iter().filter(|&&d| d).count();
    println!("label: {n} of {} instances labeled", paths.len());
    Ok(())
}

pub fn featurize(ctx: &Ctx) -> Res {
    let mut raw: Vec<(String, bool, TriGraph)> = Vec::new();
    for split in SPLITS {
        let built: Vec<Option<(String, TriGraph)>> = ctx
            .instances(split)?
            .par_iter()
            .map(|p| -> Res<_> {
                let inst = read_instance(p)?;
                let root = match collect_root_info(&inst) {
                    Ok(r) => r,
                    Err(e @ Error::Lp(_)) => {
                        warn("featurize", &stem(p), e);
                        return Ok(None);
                    }
                    Err(e) => return Err(e.into()),
                };
                Ok(Some((stem(p), build_trigraph(&inst, &root)?)))
            })
            .collect::<Res<_>>()?;
        raw.extend(built.into_iter().flatten().map(|(n, g)| (n, split == "train", g)));
    }
    let train: Vec<TriGraph> = raw.iter().filter(|r| r.1).map(|r| r.2.clone()).collect();
    if train.is_empty() {
        return Err(CliError::runtime("featurize: no training instance has a solvable root LP"));
    }
    let scaler = fit_scaler(&train)?;
    let dir = ctx.path("graphs");
    clear_dir(&dir, "json")?;
    raw.par_iter().try_for_each(|(name, _, g)| -> Res {
        apply_scaler(g, &scaler).write(dir.join(format!("{name}.json")))?;
        Ok(())
    })?;
    write_json(&ctx.path("scaler.json"), &scaler)?;
    println!("featurize: {} graphs, scaler fitted on {}", raw.len(), train.len());
    Ok(())
}

type Example = (TriGraph, Vec<Option<f64>>);

fn examples(ctx: &Ctx, split: &str) -> Res<Vec<Example>> {
    let mut out = Vec::new();
    for p in ctx.instances(split)? {
        let name = stem(&p);
        let (Some(g), Some(l)) = (ctx.read_graph(&name)?, ctx.read_label(&name)?) else {
            continue;
        };
        let labels: HashMap<String, Label> = l.labels.into_iter().collect();
        let y = targets_from_labels(&g, &labels);
        if y.iter().any(Option::is_some) {
            out.push((g, y));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct HistoryRow {
    epoch: usize,
    train_loss: f64,
    valid_loss: Option<f64>,
}

pub fn train(ctx: &Ctx) -> Res {
    ctx.require_dir("graphs", "json", "featurize")?;
    ctx.require_dir("labels", "json", "label")?;
    let train = examples(ctx, "train")?;
    let valid = examples(ctx, "valid")?;
    if train.is_empty() {
        return Err(CliError::runtime("train: no training graph has stable labels"));
    }
    let (params, history) = gcn::train_with_validation(&train, &valid, &ctx.cfg.gcn)?;
    gcn::save_params(&params, &ctx.cfg.gcn, ctx.path("model.json"))?;
    let rows: Vec<HistoryRow> = history
        .iter()
        .map(|h| HistoryRow { epoch: h.epoch, train_loss: h.train_loss, valid_loss: h.valid_loss })
        .collect();
    write_csv(&ctx.path("history.csv"), &rows)?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!("train: {} graphs, loss {:.6} -> {:.6}", train.len(), first.train_loss, last.train_loss);
    }
    Ok(())
}

pub fn predict(ctx: &Ctx) -> Res {
    ctx.require_dir("graphs", "json", "featurize")?;
    let (params, hyper) = gcn::load_params(ctx.require_file("model.json", "train")?)?;
    let dir = ctx.path("predictions");
    clear_dir(&dir, "csv")?;
    let mut n = 0;
    for split in ["valid", "test"] {
        let names: Vec<String> = ctx.instances(split)?.iter().map(|p| stem(p)).collect();
        let written: Vec<bool> = names
            .par_iter()
            .map(|name| -> Res<bool> {
                let Some(g) = ctx.read_graph(name)? else { return Ok(false) };
                let z = gcn::forward(&g, &params, &hyper)?;
                let rows: Vec<(&str, f64)> = g.var_names.iter().map(String::as_str).zip(z).collect();
                write_csv_with_header(&dir.join(format!("{name}.csv")), ["varname", "z"], &rows)?;
                Ok(true)
            })
            .collect::<Res<_>>()?;
        n += written.iter().filter(|&&w| w).count();
    }
    println!("predict: {n} prediction files in {}", dir.display());
    Ok(())
}

fn write_csv_with_header<T: Serialize>(path: &Path, header: [&str; 2], rows: &[T]) -> Res {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn better(sense: Sense, a: f64, b: f64) -> bool {
    match sense {
        Sense::Minimize => a < b,
        Sense::Maximize => a > b,
    }
}

/// Best objective in the label trace.
fn label_best(inst: &MipInstance, l: &LabelFile) -> Option<f64> {
    l.trace.iter().copied().reduce(|a, b| if better(inst.sense, b, a) { b } else { a })
}

pub fn gridsearch(ctx: &Ctx) -> Res {
    ctx.require_dir("predictions", "csv", "predict")?;
    ctx.require_dir("labels", "json", "label")?;
    let mut cases = Vec::new();
    for p in ctx.instances("valid")? {
        let name = stem(&p);
        let inst = read_instance(&p)?;
        let Some(reference) = ctx.read_label(&name)?.and_then(|l| label_best(&inst, &l)) else {
            warn("gridsearch", &name, "no reference objective");
            continue;
        };
        let z = align_predictions(&inst, &ctx.read_predictions(&name)?);
        cases.push(ValidationCase { instance: inst, z, reference });
    }
    if cases.is_empty() {
        return Err(CliError::runtime("gridsearch: no labeled validation instance"));
    }
    let a = &ctx.cfg.apply;
    let res = grid_search(&cases, &a.phi_grid, &a.eta_grid, &ctx.cfg.grid_solver())?;
    write_json(&ctx.path("tuned.json"), &res)?;
    println!("gridsearch: phi = {}, eta = {} over {} cells", res.phi, res.eta, res.cells.len());
    Ok(())
}

fn tuned(ctx: &Ctx) -> Res<(u32, f64)> {
    let p = ctx.path("tuned.json");
    if p.exists() {
        let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        let g: GridResult = serde_json::from_str(&text).map_err(|e| CliError::runtime(format!("{}: {e}", p.display())))?;
        return Ok((g.phi, g.eta));
    }
    let (phi, eta) = default_phi_eta(ctx.cfg.problem);
    Ok((ctx.cfg.apply.phi.unwrap_or(phi), ctx.cfg.apply.eta.unwrap_or(eta)))
}

pub fn run(ctx: &Ctx, mode: RunMode) -> Res {
    let paths = ctx.instances("test")?;
    let phi_eta = match mode {
        RunMode::Baseline => None,
        _ => {
            ctx.require_dir("predictions", "csv", "predict")?;
            Some(tuned(ctx)?)
        }
    };
    let solver = ctx.cfg.run_solver();
    let rows: Vec<ResultRow> = paths
        .par_iter()
        .map(|p| -> Res<ResultRow> {
            let name = stem(p);
            let inst = read_instance(p)?;
            let res = match (mode, phi_eta) {
                (RunMode::Baseline, _) | (_, None) => solve(&inst, &solver)?,
                (m, Some((phi, eta))) => {
                    let z = align_predictions(&inst, &ctx.read_predictions(&name)?);
                    let mode = if m == RunMode::Exact { ApplyMode::Exact } else { ApplyMode::Approximate };
                    apply(&inst, &z, &ApplyConfig { phi, eta, solver: solver.clone(), mode })?
                }
            };
            Ok(ResultRow::new(&name, mode.as_str(), phi_eta, &res))
        })
        .collect::<Res<_>>()?;
    let path = ctx.path(&format!("results/{}.csv", mode.as_str()));
    write_csv(&path, &rows)?;
    let solved = rows.iter().filter(|r| r.objective.is_some()).count();
    println!("run {}: {solved} of {} test instances solved, results in {}", mode.as_str(), rows.len(), path.display());
    Ok(())
}

#[derive(Clone, Copy, Serialize)]
struct ReportRow<'a> {
    instance: &'a str,
    mode: &'a str,
    status: &'a str,
    objective: Option<f64>,
    best_objective: Option<f64>,
    primal_gap: Option<f64>,
    optimality_gap: Option<f64>,
    nodes: usize,
    ap: Option<f64>,
    ap_baseline: Option<f64>,
}

pub fn eval(ctx: &Ctx) -> Res {
    ctx.require_dir("labels", "json", "label")?;
    ctx.require_dir("predictions", "csv", "predict")?;
    let mut results: Vec<Vec<ResultRow>> = Vec::new();
    for mode in RunMode::ALL {
        let p = ctx.path(&format!("results/{}.csv", mode.as_str()));
        if p.exists() {
            results.push(read_csv(&p)?);
        }
    }
    let mut instances = Vec::new();
    let (mut pool_z, mut pool_y) = (Vec::new(), Vec::new());
    for p in ctx.instances("test")? {
        let name = stem(&p);
        let inst = read_instance(&p)?;
        let label = ctx.read_label(&name)?;
        let z = align_predictions(&inst, &ctx.read_predictions(&name)?);
        let (mut zs, mut ys) = (Vec::new(), Vec::new());
        for (var, l) in label.iter().flat_map(|l| &l.labels) {
            if let (Some(j), Some(t)) = (inst.var_index(var), l.target()) {
                zs.push(z[j]);
                ys.push(t == 1.0);
            }
        }
        let (ap, ap_baseline) = if ys.iter().any(|&y| y) {
            (Some(average_precision(&zs, &ys)?), Some(average_precision(&prevalence_baseline(&ys)?, &ys)?))
        } else {
            (None, None)
        };
        let rows: Vec<&ResultRow> = results.iter().flatten().filter(|r| r.instance == name).collect();
        let best = label
            .as_ref()
            .and_then(|l| label_best(&inst, l))
            .into_iter()
            .chain(rows.iter().filter(|r| r.status != "infeasible").filter_map(|r| r.objective))
            .reduce(|a, b| if better(inst.sense, b, a) { b } else { a });
        let runs = rows
            .iter()
            .map(|r| RunEval {
                mode: r.mode.clone(),
                status: r.status.clone(),
                objective: r.objective,
                primal_gap: r.objective.zip(best).map(|(o, b)| display_gap(primal_gap(o, b))),
                // the approximate run's bound only holds for the restricted instance
                optimality_gap: match r.mode.as_str() {
                    "approx" => None,
                    _ => r.objective.zip(r.lower_bound).map(|(o, lb)| display_gap(optimality_gap(o, lb))),
                },
                nodes: r.nodes,
            })
            .collect();
        pool_z.extend(&zs);
        pool_y.extend(&ys);
        instances.push(InstanceEval { instance: name, stable_vars: ys.len(), ap, ap_baseline, best_objective: best, runs });
    }
    let curve = if pool_z.is_empty() { Vec::new() } else { accuracy_at_fraction(&pool_z, &pool_y, &DEFAULT_FRACTIONS)? };
    let report = EvalReport::new(instances, curve);

    write_json(&ctx.path("report.json"), &report)?;
    let mut rows = Vec::new();
    for i in &report.instances {
        let base = ReportRow {
            instance: &i.instance,
            mode: "",
            status: "",
            objective: None,
            best_objective: i.best_objective,
            primal_gap: None,
            optimality_gap: None,
            nodes: 0,
            ap: i.ap,
            ap_baseline: i.ap_baseline,
        };
        if i.runs.is_empty() {
            rows.push(base);
        }
        for r in &i.runs {
            rows.push(ReportRow {
                mode: &r.mode,
                status: &r.status,
                objective: r.objective,
                primal_gap: r.primal_gap,
                optimality_gap: r.optimality_gap,
                nodes: r.nodes,
                ..base
            });
        }
    }
    write_csv(&ctx.path("report.csv"), &rows)?;
    let curve: Vec<(f64, f64)> = report.accuracy_curve.clone();
    write_csv_with_header(&ctx.path("curve.csv"), ["fraction", "accuracy"], &curve)?;
    print_summary(&report);
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.4}"))
}

fn print_summary(r: &EvalReport) {
    println!(
        "eval: {} test instances, mean AP {} (baseline {}), model ahead on {}",
        r.instances.len(),
        fmt_opt(r.mean_ap),
        fmt_opt(r.mean_ap_baseline),
        r.ap_wins
    );
    println!("{:<10} {:>6} {:>7} {:>16} {:>18}", "mode", "runs", "solved", "primal gap (%)", "optimality gap (%)");
    for m in &r.modes {
        println!(
            "{:<10} {:>6} {:>7} {:>16} {:>18}",
            m.mode,
            m.runs,
            m.solved,
            fmt_opt(m.mean_primal_gap),
            fmt_opt(m.mean_optimality_gap)
        );
    }
}

pub fn pipeline(ctx: &Ctx) -> Res {
    gen(ctx)?;
    label(ctx)?;
    featurize(ctx)?;
    train(ctx)?;
    predict(ctx)?;
    gridsearch(ctx)?;
    for mode in RunMode::ALL {
        run(ctx, mode)?;
    }
    eval(ctx)
}
