//! Bulk-synchronous trial orchestration.
//!
//! A trial wires together one environment, one communication graph, and one
//! agent per node, then advances them in lockstep: every round, each agent
//! consumes exactly the round-(t-1) estimate messages of its neighbors,
//! acts, and emits its round-t message. Everything is driven by labeled
//! seed substreams, so a [`TrialConfig`] determines its [`TrialRecord`]
//! bit for bit, regardless of how trials are scheduled across threads.

use std::time::{Duration, Instant};

use crate::agents::{AgentRuntime, BetaSchedule, EstimateMessage, IgpUcbAgent, PolicyMode};
use crate::config::{
    AgentConfig, EnvConfig, ExperimentConfig, GpConfig, GraphConfig, KernelConfig, Policy,
};
use crate::envmodel::{ActionGrid, Environment};
use crate::error::{Error, Result};
use crate::netgraph::{gen_graph, load_edge_list, perron_matrix, sample_connected_subgraph};
use crate::netgraph::{CommGraph, ConsensusMatrices};
use crate::seeding::derive_trial_seed;

/// Everything one trial needs: the per-module configs plus horizon and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub kernel: KernelConfig,
    pub gp: GpConfig,
    pub graph: GraphConfig,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub t_horizon: usize,
    pub trial_seed: u64,
}

impl TrialConfig {
    /// Extracts the trial-level view of an experiment document.
    pub fn from_experiment(cfg: &ExperimentConfig, trial_seed: u64) -> Self {
        Self {
            kernel: cfg.kernel.clone(),
            gp: cfg.gp.clone(),
            graph: cfg.graph.clone(),
            env: cfg.env.clone(),
            agent: cfg.agent.clone(),
            t_horizon: cfg.sim.t_horizon,
            trial_seed,
        }
    }
}

/// Builds the communication graph described by a [`GraphConfig`]: either a
/// generated topology or an edge-list file, optionally subsampled to a
/// connected subgraph. The graph depends only on the config, never on the
/// trial seed.
pub fn build_graph(cfg: &GraphConfig) -> Result<CommGraph> {
    let graph = match &cfg.edge_list_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Input(format!("cannot read edge list {path}: {e}")))?;
            load_edge_list(&text)?
        }
        None => gen_graph(cfg.kind, cfg.n, cfg.p, cfg.seed)?,
    };
    match cfg.subsample_k {
        Some(k) => sample_connected_subgraph(&graph, k, cfg.seed),
        None => Ok(graph),
    }
}

/// One row of a trial record.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRow {
    pub t: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub inst_regret: f64,
    pub cum_regret: f64,
}

/// Complete per-round history of one seeded trial.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub policy: Policy,
    pub trial_seed: u64,
    pub n_agents: usize,
    pub t_horizon: usize,
    pub lambda2: f64,
    /// `actions[t-1][i]` is agent i's grid index in round t.
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<Vec<f64>>,
    pub inst_regret: Vec<f64>,
    pub cum_regret: Vec<f64>,
    pub wall_time: Duration,
}

impl PartialEq for TrialRecord {
    /// Wall time is measurement noise; everything else must match exactly.
    fn eq(&self, other: &Self) -> bool {
        self.policy == other.policy
            && self.trial_seed == other.trial_seed
            && self.n_agents == other.n_agents
            && self.t_horizon == other.t_horizon
            && self.lambda2 == other.lambda2
            && self.actions == other.actions
            && self.rewards == other.rewards
            && self.inst_regret == other.inst_regret
            && self.cum_regret == other.cum_regret
    }
}

enum AgentSet {
    Independent(Vec<IgpUcbAgent>),
    Estimating {
        agents: Vec<AgentRuntime>,
        mailbox: Vec<EstimateMessage>,
        weight_rows: Vec<Vec<f64>>,
    },
}

/// A trial in progress. [`Simulation::step`] advances one bulk-synchronous
/// round; accessors expose the internals for invariant checks.
pub struct Simulation {
    env: Environment,
    graph: CommGraph,
    matrices: ConsensusMatrices,
    sched: BetaSchedule,
    policy: Policy,
    agents: AgentSet,
    round: usize,
    cum_regret: f64,
}

impl Simulation {
    pub fn from_config(cfg: &TrialConfig) -> Result<Self> {
        let kernel = cfg.kernel.build()?;
        let graph = build_graph(&cfg.graph)?;
        if !graph.is_connected() {
            return Err(Error::Input(
                "communication graph must be connected; subsample a connected \
                 component with graph.subsample_k"
                    .into(),
            ));
        }
        let matrices = perron_matrix(&graph)?;
        let n = graph.n();
        let grid = ActionGrid::uniform_1d(cfg.env.grid_m, cfg.env.domain_lo, cfg.env.domain_hi)?;
        let env = Environment::sample(
            &kernel,
            grid,
            n,
            cfg.env.jitter,
            cfg.env.eta,
            cfg.trial_seed,
        )?;
        let sched = BetaSchedule::new(
            cfg.agent.b,
            cfg.env.eta,
            n,
            cfg.agent.delta,
            cfg.agent.beta_scale,
            kernel.family(),
            env.grid().dim(),
            kernel.nu(),
            cfg.gp.c_gamma,
        )?;
        let grid_points = env.grid().points().to_vec();
        let agents = match cfg.agent.policy {
            Policy::IgpUcb => AgentSet::Independent(
                (0..n)
                    .map(|i| IgpUcbAgent::new(i, kernel, cfg.gp.lambda, &grid_points))
                    .collect::<Result<_>>()?,
            ),
            Policy::Ma | Policy::Mad => {
                let mode = match cfg.agent.policy {
                    Policy::Ma => PolicyMode::Ma,
                    _ => PolicyMode::Mad {
                        stage_len: cfg.agent.c,
                    },
                };
                let agents: Vec<AgentRuntime> = (0..n)
                    .map(|i| AgentRuntime::new(i, kernel, cfg.gp.lambda, &grid_points, mode))
                    .collect::<Result<_>>()?;
                let mailbox = agents.iter().map(|a| a.initial_message()).collect();
                let weight_rows = (0..n)
                    .map(|i| matrices.weights.row(i).iter().cloned().collect())
                    .collect();
                AgentSet::Estimating {
                    agents,
                    mailbox,
                    weight_rows,
                }
            }
        };
        Ok(Self {
            env,
            graph,
            matrices,
            sched,
            policy: cfg.agent.policy,
            agents,
            round: 0,
            cum_regret: 0.0,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn consensus(&self) -> &ConsensusMatrices {
        &self.matrices
    }

    pub fn schedule(&self) -> &BetaSchedule {
        &self.sched
    }

    /// The consensus agents, when the policy uses them.
    pub fn estimating_agents(&self) -> Option<&[AgentRuntime]> {
        match &self.agents {
            AgentSet::Estimating { agents, .. } => Some(agents),
            AgentSet::Independent(_) => None,
        }
    }

    /// Advances one round; returns the new row of the record.
    pub fn step(&mut self) -> Result<RoundRow> {
        let t = self.round + 1;
        let n = self.graph.n();
        let mut actions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        let env = &mut self.env;
        match &mut self.agents {
            AgentSet::Independent(agents) => {
                for (i, agent) in agents.iter_mut().enumerate() {
                    let (action, reward) = agent
                        .step(&self.sched, t, |a| env.reward(i, a))
                        .map_err(|e| e.in_context(&format!("round {t} agent {i}")))?;
                    actions.push(action);
                    rewards.push(reward);
                }
            }
            AgentSet::Estimating {
                agents,
                mailbox,
                weight_rows,
            } => {
                debug_assert!(mailbox.iter().all(|m| m.round + 1 == t));
                let mut next_mailbox = Vec::with_capacity(n);
                for (i, agent) in agents.iter_mut().enumerate() {
                    let inbox: Vec<&EstimateMessage> = self
                        .graph
                        .neighbors(i)
                        .iter()
                        .map(|&j| &mailbox[j])
                        .collect();
                    let outcome = match self.policy {
                        Policy::Ma => {
                            agent.ma_step(&inbox, &weight_rows[i], &self.sched, t, |a| {
                                env.reward(i, a)
                            })
                        }
                        Policy::Mad => {
                            agent.mad_step(&inbox, &weight_rows[i], &self.sched, t, |a| {
                                env.reward(i, a)
                            })
                        }
                        Policy::IgpUcb => unreachable!("independent agents handled above"),
                    }
                    .map_err(|e| e.in_context(&format!("round {t} agent {i}")))?;
                    actions.push(outcome.action);
                    rewards.push(outcome.reward);
                    next_mailbox.push(outcome.message);
                }
                *mailbox = next_mailbox;
            }
        }
        let inst = self.env.inst_regret(&actions);
        self.cum_regret += inst;
        self.round = t;
        Ok(RoundRow {
            t,
            actions,
            rewards,
            inst_regret: inst,
            cum_regret: self.cum_regret,
        })
    }
}

/// Runs one seeded trial to its horizon.
pub fn run_trial(cfg: &TrialConfig) -> Result<TrialRecord> {
    let start = Instant::now();
    let mut sim = Simulation::from_config(cfg)?;
    let lambda2 = sim.consensus().lambda2;
    let n_agents = sim.graph().n();
    let mut actions = Vec::with_capacity(cfg.t_horizon);
    let mut rewards = Vec::with_capacity(cfg.t_horizon);
    let mut inst = Vec::with_capacity(cfg.t_horizon);
    let mut cum = Vec::with_capacity(cfg.t_horizon);
    for _ in 0..cfg.t_horizon {
        let row = sim.step()?;
        actions.push(row.actions);
        rewards.push(row.rewards);
        inst.push(row.inst_regret);
        cum.push(row.cum_regret);
    }
    Ok(TrialRecord {
        policy: cfg.agent.policy,
        trial_seed: cfg.trial_seed,
        n_agents,
        t_horizon: cfg.t_horizon,
        lambda2,
        actions,
        rewards,
        inst_regret: inst,
        cum_regret: cum,
        wall_time: start.elapsed(),
    })
}

/// Outcome of one trial inside an experiment; failures are recorded, not
/// fatal.
#[derive(Debug)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub result: Result<TrialRecord>,
}

/// Runs `n_trials` trials of the template config, trial `i` seeded by
/// `derive_trial_seed(base_seed, i)`. Trials may execute concurrently
/// (`parallel` threads; 0 means one per core); outcomes are returned in
/// trial order regardless of completion order.
pub fn run_experiment(
    template: &TrialConfig,
    n_trials: usize,
    base_seed: u64,
    parallel: usize,
) -> Vec<TrialOutcome> {
    let run = |trial: usize| {
        let seed = derive_trial_seed(base_seed, trial as u64);
        let cfg = TrialConfig {
            trial_seed: seed,
            ..template.clone()
        };
        TrialOutcome {
            trial,
            seed,
            result: run_trial(&cfg),
        }
    };
    if parallel == 1 {
        return (0..n_trials).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .expect("thread pool");
    pool.install(|| {
        use rayon::prelude::*;
        (0..n_trials).into_par_iter().map(run).collect()
    })
}

/// Pointwise statistics of the cumulative-regret curves.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurves {
    pub t: Vec<usize>,
    pub mean_cum_regret: Vec<f64>,
    pub std_cum_regret: Vec<f64>,
    pub mean_inst_regret: Vec<f64>,
}

/// Mean and population standard deviation across equal-length records.
pub fn aggregate(records: &[&TrialRecord]) -> Result<AggregateCurves> {
    if records.is_empty() {
        return Err(Error::Input("nothing to aggregate".into()));
    }
    let t_len = records[0].t_horizon;
    if records.iter().any(|r| r.t_horizon != t_len) {
        return Err(Error::Input(
            "records have mismatched horizons; cannot aggregate".into(),
        ));
    }
    let n = records.len() as f64;
    let mut mean_cum = vec![0.0; t_len];
    let mut std_cum = vec![0.0; t_len];
    let mut mean_inst = vec![0.0; t_len];
    for t in 0..t_len {
        let mean: f64 = records.iter().map(|r| r.cum_regret[t]).sum::<f64>() / n;
        let var: f64 = records
            .iter()
            .map(|r| (r.cum_regret[t] - mean).powi(2))
            .sum::<f64>()
            / n;
        mean_cum[t] = mean;
        std_cum[t] = var.sqrt();
        mean_inst[t] = records.iter().map(|r| r.inst_regret[t]).sum::<f64>() / n;
    }
    Ok(AggregateCurves {
        t: (1..=t_len).collect(),
        mean_cum_regret: mean_cum,
        std_cum_regret: std_cum,
        mean_inst_regret: mean_inst,
    })
}
