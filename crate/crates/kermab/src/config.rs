//! Experiment configuration.
//!
//! One nested key-value document (TOML on disk) configures a whole
//! experiment. Unknown keys are rejected; unspecified keys take the
//! defaults below. Named presets reproduce the synthetic studies at desk
//! scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::netgraph::GraphKind;

/// Which policy the agents run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Independent single-agent IGP-UCB on each local function.
    IgpUcb,
    /// Running-consensus multi-agent policy.
    Ma,
    /// Staged delayed multi-agent policy.
    Mad,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Policy::IgpUcb => "igp_ucb",
            Policy::Ma => "ma",
            Policy::Mad => "mad",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub nu: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: KernelFamily::SquaredExponential,
            lengthscale: 0.1,
            nu: 2.5,
        }
    }
}

impl KernelConfig {
    pub fn build(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.family, self.lengthscale, self.nu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    /// Regularizer in the posterior equations; defaults to eta^2.
    pub lambda: f64,
    /// Constant in front of the information-gain growth bound.
    pub c_gamma: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            lambda: 0.04,
            c_gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub kind: GraphKind,
    pub n: usize,
    /// Edge probability, used by the erdos_renyi kind.
    pub p: f64,
    /// Seed for graph generation and subsampling; the network is fixed
    /// across trials.
    pub seed: u64,
    /// When set, the graph is read from this edge-list file instead of
    /// generated, and `kind`, `n`, `p` are ignored.
    pub edge_list_path: Option<String>,
    /// Size of the connected subgraph sampled from the loaded graph.
    pub subsample_k: Option<usize>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            kind: GraphKind::Cycle,
            n: 5,
            p: 0.04,
            seed: 0,
            edge_list_path: None,
            subsample_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub grid_m: usize,
    pub domain_lo: f64,
    pub domain_hi: f64,
    /// Observation-noise scale.
    pub eta: f64,
    /// Diagonal added to the prior covariance when sampling test functions.
    pub jitter: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid_m: 100,
            domain_lo: 0.0,
            domain_hi: 1.0,
            eta: 0.2,
            jitter: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub policy: Policy,
    /// RKHS norm bound fed to the confidence width.
    #[serde(rename = "B")]
    pub b: f64,
    pub delta: f64,
    pub beta_scale: f64,
    /// Stage length for the delayed policy.
    pub c: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            policy: Policy::Ma,
            b: 1.0,
            delta: 0.1,
            beta_scale: 1.0,
            c: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Horizon: rounds per trial.
    #[serde(rename = "T")]
    pub t_horizon: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    /// Max concurrent trials; 0 means one per available core.
    pub parallel: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_horizon: 200,
            n_trials: 10,
            base_seed: 0,
            parallel: 0,
        }
    }
}

/// The full experiment document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kernel: KernelConfig,
    pub gp: GpConfig,
    pub graph: GraphConfig,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub sim: SimConfig,
}

impl ExperimentConfig {
    /// Parses a TOML document, rejecting unknown keys.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Value-range checks shared by file-based and preset configs.
    pub fn validate(&self) -> Result<()> {
        self.kernel.build()?;
        if !(self.gp.lambda > 0.0) {
            return Err(Error::Config(format!(
                "gp.lambda must be positive, got {}",
                self.gp.lambda
            )));
        }
        if self.gp.c_gamma < 0.0 {
            return Err(Error::Config("gp.c_gamma must be nonnegative".into()));
        }
        if self.env.grid_m < 2 {
            return Err(Error::Config("env.grid_m must be at least 2".into()));
        }
        if !(self.env.domain_hi > self.env.domain_lo) {
            return Err(Error::Config("env domain interval is empty".into()));
        }
        if !(self.env.eta >= 0.0) {
            return Err(Error::Config("env.eta must be nonnegative".into()));
        }
        if !(self.env.jitter >= 0.0) {
            return Err(Error::Config("env.jitter must be nonnegative".into()));
        }
        if !(self.agent.delta > 0.0 && self.agent.delta < 1.0) {
            return Err(Error::Config("agent.delta must lie in (0, 1)".into()));
        }
        if !(self.agent.beta_scale >= 0.0) {
            return Err(Error::Config("agent.beta_scale must be nonnegative".into()));
        }
        if self.agent.policy == Policy::Mad && self.agent.c == 0 {
            return Err(Error::Config("agent.c must be >= 1".into()));
        }
        if self.sim.t_horizon == 0 {
            return Err(Error::Config("sim.T must be >= 1".into()));
        }
        if self.sim.n_trials == 0 {
            return Err(Error::Config("sim.n_trials must be >= 1".into()));
        }
        if self.graph.edge_list_path.is_none() {
            if self.graph.n == 0 {
                return Err(Error::Config("graph.n must be >= 1".into()));
            }
            if self.graph.kind == GraphKind::ErdosRenyi && !(self.graph.p > 0.0 && self.graph.p <= 1.0)
            {
                return Err(Error::Config(format!(
                    "graph.p must lie in (0, 1], got {}",
                    self.graph.p
                )));
            }
        }
        if self.graph.subsample_k == Some(0) {
            return Err(Error::Config("graph.subsample_k must be >= 1".into()));
        }
        Ok(())
    }

    /// Serializes the resolved document back to TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Returns a named preset, if it exists.
///
/// * `paper_small` — 5-agent ring, squared-exponential kernel, T = 1000.
/// * `paper_complete` — the same but completely connected.
/// * `paper_er` — 100-agent connected Erdos-Renyi network with p = 0.04,
///   T = 1500, 100 trials (hours of compute; the other presets are desk
///   scale).
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    cfg.agent.beta_scale = 0.2;
    cfg.sim.t_horizon = 1000;
    cfg.sim.n_trials = 10;
    match name {
        "paper_small" => Some(cfg),
        "paper_complete" => {
            cfg.graph.kind = GraphKind::Complete;
            Some(cfg)
        }
        "paper_er" => {
            cfg.graph.kind = GraphKind::ErdosRenyi;
            cfg.graph.n = 100;
            cfg.graph.p = 0.04;
            cfg.sim.t_horizon = 1500;
            cfg.sim.n_trials = 100;
            cfg.sim.parallel = 2;
            Some(cfg)
        }
        _ => None,
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["paper_small", "paper_complete", "paper_er"]
}
