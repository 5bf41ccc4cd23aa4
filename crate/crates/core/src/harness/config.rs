//! JSON run configuration shared by the command-line subcommands. Every
//! section and field is optional; unknown fields are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{BeamHead, GnnConfig, GnnModel, MlpConfig, MlpModel, Network, SystemConfig};
use crate::harness::{EvalOptions, GridSpec, Method};
use crate::objective::Objective;
use crate::scenario::{Scenario, SystemParams};
use crate::train::{init_params, split_dataset, TrainConfig};

/// Environment variable naming the default results directory.
pub const RESULTS_ENV: &str = "RIS_PASS_RESULTS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// N=2, M=2, L=8, K=2.
    #[default]
    Desk,
    /// N=8, M=8, L=32, K=4.
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub preset: Preset,
    pub n_waveguides: Option<usize>,
    pub n_pas: Option<usize>,
    pub n_ris: Option<usize>,
    pub n_users: Option<usize>,
    /// Complete parameter set; replaces the preset when given.
    pub params: Option<SystemParams>,
}

impl SystemSection {
    pub fn resolve(&self) -> Result<SystemParams> {
        let mut p = match (&self.params, self.preset) {
            (Some(p), _) => p.clone(),
            (None, Preset::Desk) => SystemParams::desk_default(),
            (None, Preset::Large) => SystemParams::large_default(),
        };
        p.n_waveguides = self.n_waveguides.unwrap_or(p.n_waveguides);
        p.n_pas_per_wg = self.n_pas.unwrap_or(p.n_pas_per_wg);
        p.n_ris = self.n_ris.unwrap_or(p.n_ris);
        p.n_users = self.n_users.unwrap_or(p.n_users);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub seed: u64,
    pub count: usize,
    /// Existing dataset file used instead of generating one.
    pub path: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { seed: 0, count: 1000, path: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    #[default]
    Gnn,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub arch: Arch,
    pub hidden: usize,
    pub heads: usize,
    /// Hidden layers of the feed-forward baseline.
    pub depth: usize,
    pub beams: BeamHead,
    pub system: SystemConfig,
    pub init_seed: u64,
    /// Checkpoint read by `eval` and `bench`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            arch: Arch::Gnn,
            hidden: 64,
            heads: 1,
            depth: 3,
            beams: BeamHead::Hzm,
            system: SystemConfig::RisPa,
            init_seed: 0,
            checkpoint: None,
        }
    }
}

impl ModelSection {
    /// Freshly initialized network for the full system parameters `params`.
    pub fn build(&self, params: &SystemParams) -> Result<Network> {
        let mut net = match self.arch {
            Arch::Gnn => Network::Gnn(GnnModel::new(
                GnnConfig { hidden: self.hidden, heads: self.heads, system: self.system, beams: self.beams },
                params,
            )?),
            Arch::Mlp => {
                if self.beams != BeamHead::Hzm {
                    return Err(Error::InvalidParams("the feed-forward baseline only has hybrid beams".into()));
                }
                Network::Mlp(MlpModel::new(MlpConfig { hidden: self.hidden, depth: self.depth, system: self.system }, params)?)
            }
        };
        init_params(net.store_mut(), self.init_seed);
        Ok(net)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    #[default]
    All,
    /// The test slice under the training split.
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub method: Method,
    /// Defaults to the model's configuration.
    pub system: Option<SystemConfig>,
    pub objective: Objective,
    /// Refinement iterations.
    pub budget: usize,
    /// Seed of the random baseline.
    pub seed: u64,
    pub subset: Subset,
    /// Evaluate at most this many samples.
    pub limit: Option<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let o = EvalOptions::default();
        Self { method: Method::StrategyI, system: None, objective: o.objective, budget: o.budget, seed: o.seed, subset: Subset::All, limit: None }
    }
}

impl EvalSection {
    pub fn options(&self) -> EvalOptions {
        EvalOptions { objective: self.objective, budget: self.budget, seed: self.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub oracle: GridSpec,
    pub results_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.resolve()?;
        self.train.validate()?;
        if self.model.hidden == 0 || self.model.heads == 0 {
            return Err(Error::InvalidParams("hidden width and head count must be positive".into()));
        }
        if self.oracle.positions < 2 || self.oracle.phase_levels == 0 {
            return Err(Error::InvalidParams("oracle grid needs at least two positions and one phase level".into()));
        }
        Ok(())
    }

    /// Results directory: `explicit`, then the environment, then the
    /// configuration, then `results`.
    pub fn results_dir(&self, explicit: Option<&Path>) -> PathBuf {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(RESULTS_ENV).map(PathBuf::from))
            .or_else(|| self.results_dir.clone())
            .unwrap_or_else(|| PathBuf::from("results"))
    }

    /// The evaluated slice of `data`.
    pub fn eval_slice<'a>(&self, data: &'a [Scenario]) -> &'a [Scenario] {
        let s = match self.eval.subset {
            Subset::All => data,
            Subset::Test => split_dataset(data, self.train.split).2,
        };
        &s[..self.eval.limit.map_or(s.len(), |l| l.min(s.len()))]
    }
}
