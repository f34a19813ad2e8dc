use std::path::Path;
use std::process::{Command, Output};

fn solpred(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solpred"))
        .arg("--workdir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn train_without_graphs_names_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = solpred(dir.path(), &["train"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("graphs"), "{}", stderr(&out));
}

#[test]
fn run_without_predictions_is_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    assert!(solpred(dir.path(), &["--scale", "0.05", "gen"]).status.success());
    let out = solpred(dir.path(), &["run", "--mode", "approx"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("predictions"));
    // the baseline needs no predictions
    let out = solpred(dir.path(), &["run", "--mode", "baseline"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("results/baseline.csv").exists());
}

#[test]
fn invalid_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    for text in ["bogus = 1\n", "scale = -1.0\n", "[gcn]\nhidden = 0\n", "preset = \"custom\"\n", "[apply]\neta_grid = [1.5]\n"] {
        std::fs::write(&cfg, text).unwrap();
        let out = solpred(dir.path(), &["gen"]);
        assert_eq!(out.status.code(), Some(3), "{text:?}: {}", stderr(&out));
    }
    let out = solpred(dir.path(), &["--config", "no/such/file.toml", "gen"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_is_byte_identical_on_rerun() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        std::fs::write(d.join("config.toml"), "problem = \"GA\"\nseed = 9\nscale = 0.05\n").unwrap();
        assert!(solpred(d, &["gen"]).status.success());
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path().join("instances/train")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for n in names {
        let x = std::fs::read(a.path().join("instances/train").join(&n)).unwrap();
        let y = std::fs::read(b.path().join("instances/train").join(&n)).unwrap();
        assert_eq!(x, y, "{n:?}");
    }
}

#[test]
fn pipeline_writes_every_stage_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("config.toml"),
        "problem = \"MK\"\nscale = 0.05\n[gcn]\nhidden = 8\nout_hidden = 8\nepochs = 20\n[apply]\nphi_grid = [0, 5]\neta_grid = [0.8, 1.0]\n",
    )
    .unwrap();
    let out = solpred(dir.path(), &["pipeline"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["model.json", "history.csv", "scaler.json", "tuned.json", "report.json", "report.csv", "curve.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    for mode in ["approx", "exact", "baseline"] {
        let text = std::fs::read_to_string(dir.path().join(format!("results/{mode}.csv"))).unwrap();
        assert!(text.starts_with("instance,mode,phi,eta,status,objective,lower_bound,nodes,wall_time_s"), "{text}");
        assert_eq!(text.lines().count(), 3, "{text}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["instances"].as_array().unwrap().len(), 2);
    let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 21);
}
