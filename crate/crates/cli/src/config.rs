use std::path::Path;

use serde::{Deserialize, Serialize};
use solpred::bnb::BnbConfig;
use solpred::gcn::GcnHyper;
use solpred::gen::{GenSpec, Params, Preset, Problem};
use solpred::label::LabelConfig;
use solpred::predict::{ETA_GRID, PHI_GRID};

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub preset: Preset,
    /// Generator parameters; required when `preset = "custom"`.
    pub params: Option<Params>,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Multiplies the three counts above.
    pub scale: f64,
    pub seed: u64,
    pub label: LabelSection,
    pub gcn: GcnHyper,
    pub apply: ApplySection,
    pub run: RunSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: Problem::Sc,
            preset: Preset::Tiny,
            params: None,
            train: 140,
            valid: 20,
            test: 40,
            scale: 1.0,
            seed: 0,
            label: LabelSection::default(),
            gcn: GcnHyper::default(),
            apply: ApplySection::default(),
            run: RunSection::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSection {
    pub max_iters: usize,
    pub base_time_limit_s: f64,
    pub max_doublings: u32,
    pub node_limit: usize,
}

impl Default for LabelSection {
    fn default() -> Self {
        let d = LabelConfig::default();
        LabelSection {
            max_iters: d.max_iters,
            base_time_limit_s: d.base_time_limit_s,
            max_doublings: d.max_doublings,
            node_limit: d.node_limit,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApplySection {
    pub phi_grid: Vec<u32>,
    pub eta_grid: Vec<f64>,
    /// Budget of each grid-search run.
    pub time_limit_s: f64,
    pub node_limit: usize,
    /// Used by `run` when no `tuned.json` exists; falls back to the
    /// per-class defaults.
    pub phi: Option<u32>,
    pub eta: Option<f64>,
}

impl Default for ApplySection {
    fn default() -> Self {
        ApplySection {
            phi_grid: PHI_GRID.to_vec(),
            eta_grid: ETA_GRID.to_vec(),
            time_limit_s: 5.0,
            node_limit: 1_000_000,
            phi: None,
            eta: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub time_limit_s: f64,
    pub node_limit: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { time_limit_s: 60.0, node_limit: 1_000_000 }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::config(msg)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::missing(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(invalid("scale must be positive"));
        }
        for (name, n) in [("train", self.train), ("valid", self.valid), ("test", self.test)] {
            if n == 0 {
                return Err(invalid(format!("{name} count must be >= 1")));
            }
        }
        self.gen_spec(0)?;
        if !(self.label.base_time_limit_s > 0.0) || self.label.node_limit == 0 {
            return Err(invalid("label limits must be positive"));
        }
        self.gcn.validate().map_err(|e| invalid(e.to_string()))?;
        if self.apply.phi_grid.is_empty() || self.apply.eta_grid.is_empty() {
            return Err(invalid("apply grids must be nonempty"));
        }
        if self.apply.eta_grid.iter().chain(&self.apply.eta).any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(invalid("eta values must lie in (0, 1]"));
        }
        self.grid_solver().validate().map_err(|e| invalid(e.to_string()))?;
        self.run_solver().validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    /// Instance counts after scaling, each at least 1.
    pub fn counts(&self) -> [(&'static str, usize); 3] {
        let s = |n: usize| ((n as f64 * self.scale).round() as usize).max(1);
        [("train", s(self.train)), ("valid", s(self.valid)), ("test", s(self.test))]
    }

    pub fn gen_spec(&self, seed: u64) -> Result<GenSpec, CliError> {
        let spec = match (&self.params, self.preset) {
            (Some(p), Preset::Custom) => GenSpec::custom(p.clone(), seed),
            (None, Preset::Custom) => return Err(invalid("preset `custom` needs a [params] table")),
            (Some(_), _) => return Err(invalid("[params] is only allowed with preset `custom`")),
            (None, preset) => GenSpec::preset(self.problem, preset, seed).map_err(|e| invalid(e.to_string()))?,
        };
        spec.validate().map_err(|e| invalid(e.to_string()))?;
        if spec.problem != self.problem {
            return Err(invalid(format!("[params] describe {}, not {}", spec.problem, self.problem)));
        }
        Ok(spec)
    }

    pub fn label_config(&self) -> LabelConfig {
        LabelConfig {
            max_iters: self.label.max_iters,
            base_time_limit_s: self.label.base_time_limit_s,
            max_doublings: self.label.max_doublings,
            node_limit: self.label.node_limit,
        }
    }

    pub fn grid_solver(&self) -> BnbConfig {
        BnbConfig {
            time_limit_s: self.apply.time_limit_s,
            node_limit: self.apply.node_limit,
            seed: self.seed,
            ..Default::default()
        }
    }

    pub fn run_solver(&self) -> BnbConfig {
        BnbConfig { time_limit_s: self.run.time_limit_s, node_limit: self.run.node_limit, seed: self.seed, ..Default::default() }
    }
}
