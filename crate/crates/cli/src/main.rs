//! Command-line driver for the solution prediction pipeline.
//!
//! Every stage reads the outputs of earlier stages from the work directory
//! and writes its own files there:
//!
//! ```text
//! instances/{train,valid,test}/*.json   gen
//! labels/*.json                         label
//! graphs/*.json, scaler.json            featurize
//! model.json, history.csv               train
//! predictions/*.csv                     predict
//! tuned.json                            gridsearch
//! results/{approx,exact,baseline}.csv   run
//! report.json, report.csv, curve.csv    eval
//! ```

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "solpred", version, about = "Solution prediction for mixed integer programs")]
struct Cli {
    /// Directory holding all stage outputs.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// TOML experiment config. Defaults to `<workdir>/config.toml` if present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-instance work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the config's count scale.
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Use the sequential objective refresh of the network instead of the mean form.
    #[arg(long, global = true)]
    literal_loops: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train, validation and test instances.
    Gen,
    /// Label every instance by proximity search.
    Label,
    /// Build scaled tripartite graphs.
    Featurize,
    /// Train the graph network.
    Train,
    /// Write predictions for validation and test instances.
    Predict,
    /// Tune phi and eta on the validation instances.
    Gridsearch,
    /// Solve the test instances.
    Run {
        #[arg(long, value_enum)]
        mode: RunMode,
    },
    /// Score predictions and runs.
    Eval,
    /// Run every stage in order, solving in all three modes.
    Pipeline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    Approx,
    Exact,
    Baseline,
}

impl RunMode {
    pub const ALL: [RunMode; 3] = [RunMode::Approx, RunMode::Exact, RunMode::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Approx => "approx",
            RunMode::Exact => "exact",
            RunMode::Baseline => "baseline",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn missing(msg: impl Into<String>) -> Self {
        CliError { code: 2, message: msg.into() }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: 3, message: msg.into() }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError { code: 4, message: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<solpred::Error> for CliError {
    fn from(e: solpred::Error) -> Self {
        match e {
            solpred::Error::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::missing(e.to_string())
            }
            e => CliError::runtime(e.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli.config.clone().or_else(|| {
        let p = cli.workdir.join("config.toml");
        p.exists().then_some(p)
    });
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(&p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.scale {
        cfg.scale = s;
    }
    if cli.literal_loops {
        cfg.gcn.aggregation = solpred::gcn::Aggregation::Literal;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    if cli.jobs == Some(0) {
        return Err(CliError::config("--jobs must be >= 1"));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::runtime(e.to_string()))?;
    let ctx = commands::Ctx { root: cli.workdir.clone(), cfg };
    std::fs::create_dir_all(&ctx.root)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", ctx.root.display())))?;
    pool.install(|| match cli.cmd {
        Command::Gen => commands::gen(&ctx),
        Command::Label => commands::label(&ctx),
        Command::Featurize => commands::featurize(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Predict => commands::predict(&ctx),
        Command::Gridsearch => commands::gridsearch(&ctx),
        Command::Run { mode } => commands::run(&ctx, mode),
        Command::Eval => commands::eval(&ctx),
        Command::Pipeline => commands::pipeline(&ctx),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
