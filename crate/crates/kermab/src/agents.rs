//! Bandit policies over the action grid.
//!
//! Each agent keeps a GP posterior of its *local* function but acts on an
//! estimate of the *global* function built by running consensus: every
//! round it folds its own posterior innovation into the estimate and mixes
//! with the neighbors' round-(t-1) estimates,
//!
//! ```text
//! est_i <- (local_t - local_{t-1}) + est_i + sum_j w_ij (est_j - est_i)
//! ```
//!
//! applied pointwise on the grid to both the mean and the deviation
//! vectors. Because the mixing matrix is doubly stochastic, the sum of the
//! estimates across agents always equals the sum of the local posteriors,
//! so each estimate chases `N x` the average function.
//!
//! The delayed variant runs in stages of `c` rounds with three estimate
//! tiers: the *running* estimate (updated as above), a *mixing* copy that
//! undergoes pure consensus with no innovations, and a *mixed* copy,
//! promoted at stage boundaries, that actually drives action selection.
//! Decisions therefore use estimates that are stale by up to `2c - 1`
//! rounds but have been mixed at least `c` times. During the first two
//! stages no mixed estimates exist yet and the agent acts on its running
//! estimates.
//!
//! Messages carry only global-estimate vectors: no actions, rewards, or
//! local posteriors ever leave an agent.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp::{gamma_bound, GpState};
use crate::kernel::{KernelFamily, KernelSpec};

/// Confidence-width schedule
/// `beta_t = scale * (B + eta * sqrt(2 (gamma_{t-1} + 1 + ln(N / delta))))`
/// with `gamma_0 = 0`. Nondecreasing in `t`.
#[derive(Debug, Clone)]
pub struct BetaSchedule {
    b: f64,
    eta: f64,
    n_agents: usize,
    delta: f64,
    beta_scale: f64,
    family: KernelFamily,
    dim: usize,
    nu: f64,
    c_gamma: f64,
}

impl BetaSchedule {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        b: f64,
        eta: f64,
        n_agents: usize,
        delta: f64,
        beta_scale: f64,
        family: KernelFamily,
        dim: usize,
        nu: f64,
        c_gamma: f64,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!(
                "confidence level delta must lie in (0, 1), got {delta}"
            )));
        }
        if !(beta_scale >= 0.0) {
            return Err(Error::Config(format!(
                "beta_scale must be nonnegative, got {beta_scale}"
            )));
        }
        if n_agents == 0 {
            return Err(Error::Config("beta schedule needs n_agents >= 1".into()));
        }
        Ok(Self {
            b,
            eta,
            n_agents,
            delta,
            beta_scale,
            family,
            dim,
            nu,
            c_gamma,
        })
    }

    /// `beta_t` for round `t >= 1`.
    pub fn beta(&self, t: usize) -> f64 {
        assert!(t >= 1, "beta schedule starts at t = 1");
        let gamma_prev = if t == 1 {
            0.0
        } else {
            gamma_bound(self.family, t - 1, self.dim, self.nu, self.c_gamma)
        };
        let log_term = (self.n_agents as f64 / self.delta).ln();
        self.beta_scale * (self.b + self.eta * (2.0 * (gamma_prev + 1.0 + log_term)).sqrt())
    }
}

/// Lowest index maximizing `mu + beta * sigma`.
pub fn select_action(mu: &[f64], sigma: &[f64], beta: f64) -> Result<usize> {
    assert_eq!(mu.len(), sigma.len());
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..mu.len() {
        let score = mu[i] + beta * sigma[i];
        if score.is_nan() {
            return Err(Error::Numerical(format!(
                "NaN acquisition value at grid index {i}"
            )));
        }
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    Ok(best)
}

/// One round's estimate broadcast. Contains global-estimate vectors only.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateMessage {
    pub sender: usize,
    pub round: usize,
    pub mu_bar: Vec<f64>,
    pub sigma_bar: Vec<f64>,
    /// Mixing-estimate piggyback, present in delayed mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_mix: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_mix: Option<Vec<f64>>,
}

/// Which consensus policy an [`AgentRuntime`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    /// Running-consensus estimates drive every decision.
    Ma,
    /// Staged delayed estimates with `stage_len` rounds per stage.
    Mad { stage_len: usize },
}

/// Result of stepping an agent one round.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub message: EstimateMessage,
    pub action: usize,
    pub reward: f64,
}

/// Delayed-mode extra state: the mixing and mixed estimate tiers plus the
/// stage counter.
#[derive(Debug, Clone)]
struct StagedEstimates {
    stage_len: usize,
    /// Completed stage boundaries so far (stage counter `s` minus one).
    boundaries: usize,
    mu_mix: Vec<f64>,
    sigma_mix: Vec<f64>,
    mu_mixed: Vec<f64>,
    sigma_mixed: Vec<f64>,
}

/// Per-agent policy state: local GP plus global-estimate vectors over the
/// action grid.
#[derive(Debug, Clone)]
pub struct AgentRuntime {
    id: usize,
    gp: GpState,
    mu_bar: Vec<f64>,
    sigma_bar: Vec<f64>,
    prev_mu: Vec<f64>,
    prev_sigma: Vec<f64>,
    staged: Option<StagedEstimates>,
    round: usize,
}

impl AgentRuntime {
    /// Creates an agent at round 0: running estimates start at the prior
    /// (mean 0, deviation 1 on the unit-variance kernels), which makes the
    /// first-round estimates coincide with the first local posterior.
    pub fn new(
        id: usize,
        kernel: KernelSpec,
        lambda: f64,
        grid_points: &[Vec<f64>],
        mode: PolicyMode,
    ) -> Result<Self> {
        let gp = GpState::with_tracked_grid(kernel, lambda, grid_points)?;
        let (mu0, sigma0) = gp.tracked_posterior().expect("grid is tracked");
        let (mu0, sigma0) = (mu0.to_vec(), sigma0.to_vec());
        let staged = match mode {
            PolicyMode::Ma => None,
            PolicyMode::Mad { stage_len } => {
                if stage_len == 0 {
                    return Err(Error::Config("stage length c must be >= 1".into()));
                }
                Some(StagedEstimates {
                    stage_len,
                    boundaries: 0,
                    mu_mix: mu0.clone(),
                    sigma_mix: sigma0.clone(),
                    mu_mixed: mu0.clone(),
                    sigma_mixed: sigma0.clone(),
                })
            }
        };
        Ok(Self {
            id,
            gp,
            mu_bar: mu0.clone(),
            sigma_bar: sigma0.clone(),
            prev_mu: mu0,
            prev_sigma: sigma0,
            staged,
            round: 0,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn mode(&self) -> PolicyMode {
        match &self.staged {
            None => PolicyMode::Ma,
            Some(s) => PolicyMode::Mad {
                stage_len: s.stage_len,
            },
        }
    }

    /// Rounds completed.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn gp(&self) -> &GpState {
        &self.gp
    }

    /// Running estimate of the global mean over the grid.
    pub fn running_mean(&self) -> &[f64] {
        &self.mu_bar
    }

    /// Running estimate of the global deviation over the grid.
    pub fn running_dev(&self) -> &[f64] {
        &self.sigma_bar
    }

    /// Local posterior mean over the grid as of the last completed round.
    pub fn local_mean(&self) -> &[f64] {
        &self.prev_mu
    }

    pub fn local_dev(&self) -> &[f64] {
        &self.prev_sigma
    }

    pub fn mixed_mean(&self) -> Option<&[f64]> {
        self.staged.as_ref().map(|s| s.mu_mixed.as_slice())
    }

    pub fn mixed_dev(&self) -> Option<&[f64]> {
        self.staged.as_ref().map(|s| s.sigma_mixed.as_slice())
    }

    pub fn mixing_mean(&self) -> Option<&[f64]> {
        self.staged.as_ref().map(|s| s.mu_mix.as_slice())
    }

    pub fn mixing_dev(&self) -> Option<&[f64]> {
        self.staged.as_ref().map(|s| s.sigma_mix.as_slice())
    }

    /// The round-0 broadcast of the initial estimates.
    pub fn initial_message(&self) -> EstimateMessage {
        self.message(0)
    }

    fn message(&self, round: usize) -> EstimateMessage {
        EstimateMessage {
            sender: self.id,
            round,
            mu_bar: self.mu_bar.clone(),
            sigma_bar: self.sigma_bar.clone(),
            mu_mix: self.staged.as_ref().map(|s| s.mu_mix.clone()),
            sigma_mix: self.staged.as_ref().map(|s| s.sigma_mix.clone()),
        }
    }

    fn validate_inbox(
        &self,
        inbox: &[&EstimateMessage],
        weights_row: &[f64],
        t: usize,
    ) -> Result<()> {
        let mut expected: Vec<usize> = (0..weights_row.len())
            .filter(|&j| j != self.id && weights_row[j] > 0.0)
            .collect();
        let mut got: Vec<usize> = inbox.iter().map(|msg| msg.sender).collect();
        expected.sort_unstable();
        got.sort_unstable();
        if expected != got {
            return Err(Error::Protocol(format!(
                "agent {} round {t}: inbox senders {got:?} do not match neighbors {expected:?}",
                self.id
            )));
        }
        if let Some(msg) = inbox.iter().find(|msg| msg.round + 1 != t) {
            return Err(Error::Protocol(format!(
                "agent {} round {t}: message from {} is for round {}, \
                 expected the previous round",
                self.id, msg.sender, msg.round,
            )));
        }
        Ok(())
    }

    /// Running-consensus update: innovation plus weighted disagreement,
    /// grouped so an isolated agent reproduces its local posterior bitwise.
    fn running_update(
        own_bar: &[f64],
        prev_local: &[f64],
        new_local: &[f64],
        neighbor_terms: &[(f64, &[f64])],
    ) -> Vec<f64> {
        (0..own_bar.len())
            .map(|j| {
                let mut drift = own_bar[j] - prev_local[j];
                for (w, bar) in neighbor_terms {
                    drift += w * (bar[j] - own_bar[j]);
                }
                new_local[j] + drift
            })
            .collect()
    }

    /// Pure consensus step, no innovation term.
    fn consensus_update(own: &[f64], neighbor_terms: &[(f64, &[f64])]) -> Vec<f64> {
        (0..own.len())
            .map(|j| {
                let mut v = own[j];
                for (w, other) in neighbor_terms {
                    v += w * (other[j] - own[j]);
                }
                v
            })
            .collect()
    }

    fn observe_and_refresh(
        &mut self,
        action: usize,
        reward_fn: &mut dyn FnMut(usize) -> f64,
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let x = self.gp.tracked_points().expect("grid is tracked")[action].clone();
        let y = reward_fn(action);
        self.gp.observe(&x, y)?;
        let (mu, sigma) = self.gp.tracked_posterior().expect("grid is tracked");
        Ok((y, mu.to_vec(), sigma.to_vec()))
    }

    /// One round of the running-consensus policy: select by the UCB of the
    /// running estimates, observe, update the local posterior, then fold
    /// innovation and neighbor disagreement into the estimates.
    pub fn ma_step(
        &mut self,
        inbox: &[&EstimateMessage],
        weights_row: &[f64],
        sched: &BetaSchedule,
        t: usize,
        mut reward_fn: impl FnMut(usize) -> f64,
    ) -> Result<StepOutcome> {
        if self.staged.is_some() {
            return Err(Error::Protocol(format!(
                "agent {} is configured for delayed stepping",
                self.id
            )));
        }
        self.check_round(t)?;
        self.validate_inbox(inbox, weights_row, t)?;

        let action = select_action(&self.mu_bar, &self.sigma_bar, sched.beta(t))?;
        let (reward, new_mu, new_sigma) = self.observe_and_refresh(action, &mut reward_fn)?;

        let mu_terms: Vec<(f64, &[f64])> = inbox
            .iter()
            .map(|m| (weights_row[m.sender], m.mu_bar.as_slice()))
            .collect();
        let sigma_terms: Vec<(f64, &[f64])> = inbox
            .iter()
            .map(|m| (weights_row[m.sender], m.sigma_bar.as_slice()))
            .collect();
        self.mu_bar = Self::running_update(&self.mu_bar, &self.prev_mu, &new_mu, &mu_terms);
        self.sigma_bar =
            Self::running_update(&self.sigma_bar, &self.prev_sigma, &new_sigma, &sigma_terms);
        self.prev_mu = new_mu;
        self.prev_sigma = new_sigma;
        self.round = t;

        Ok(StepOutcome {
            message: self.message(t),
            action,
            reward,
        })
    }

    /// One round of the staged delayed policy. Within stage `s` the action
    /// maximizes the UCB of the mixed estimates at the stage-frozen width
    /// `beta_{t_s}`, `t_s = (s-1)c`; during stages 1 and 2, when no mixed
    /// estimates exist yet, the agent acts like the running-consensus
    /// policy. Running estimates update every round as in [`Self::ma_step`];
    /// mixing estimates undergo pure consensus; at each stage boundary the
    /// mixed tier is promoted from the mixing tier and the mixing tier is
    /// reseeded from the running tier.
    pub fn mad_step(
        &mut self,
        inbox: &[&EstimateMessage],
        weights_row: &[f64],
        sched: &BetaSchedule,
        t: usize,
        mut reward_fn: impl FnMut(usize) -> f64,
    ) -> Result<StepOutcome> {
        let staged = self
            .staged
            .as_ref()
            .ok_or_else(|| {
                Error::Protocol(format!("agent {} is not configured for delayed stepping", self.id))
            })?;
        let c = staged.stage_len;
        self.check_round(t)?;
        self.validate_inbox(inbox, weights_row, t)?;
        for msg in inbox {
            if msg.mu_mix.is_none() || msg.sigma_mix.is_none() {
                return Err(Error::Protocol(format!(
                    "agent {} round {t}: message from {} lacks mixing estimates",
                    self.id, msg.sender
                )));
            }
        }
        let stage = (t - 1) / c + 1;
        if staged.boundaries + 1 != stage {
            return Err(Error::Protocol(format!(
                "agent {} round {t}: stage counter {} does not match stage {stage}",
                self.id,
                staged.boundaries + 1
            )));
        }

        let action = if stage <= 2 {
            select_action(&self.mu_bar, &self.sigma_bar, sched.beta(t))?
        } else {
            let t_stage = (stage - 1) * c;
            let staged = self.staged.as_ref().unwrap();
            select_action(&staged.mu_mixed, &staged.sigma_mixed, sched.beta(t_stage))?
        };
        let (reward, new_mu, new_sigma) = self.observe_and_refresh(action, &mut reward_fn)?;

        let mu_terms: Vec<(f64, &[f64])> = inbox
            .iter()
            .map(|m| (weights_row[m.sender], m.mu_bar.as_slice()))
            .collect();
        let sigma_terms: Vec<(f64, &[f64])> = inbox
            .iter()
            .map(|m| (weights_row[m.sender], m.sigma_bar.as_slice()))
            .collect();
        self.mu_bar = Self::running_update(&self.mu_bar, &self.prev_mu, &new_mu, &mu_terms);
        self.sigma_bar =
            Self::running_update(&self.sigma_bar, &self.prev_sigma, &new_sigma, &sigma_terms);
        self.prev_mu = new_mu;
        self.prev_sigma = new_sigma;

        let mix_mu_terms: Vec<(f64, &[f64])> = inbox
            .iter()
            .map(|m| (weights_row[m.sender], m.mu_mix.as_deref().unwrap()))
            .collect();
        let mix_sigma_terms: Vec<(f64, &[f64])> = inbox
            .iter()
            .map(|m| (weights_row[m.sender], m.sigma_mix.as_deref().unwrap()))
            .collect();
        {
            let staged = self.staged.as_mut().unwrap();
            staged.mu_mix = Self::consensus_update(&staged.mu_mix, &mix_mu_terms);
            staged.sigma_mix = Self::consensus_update(&staged.sigma_mix, &mix_sigma_terms);
        }

        // Stage boundary: promote mixed <- mixing, then reseed
        // mixing <- running. The outgoing message carries the reseeded
        // mixing estimates, so next round's consensus starts from them.
        if t % c == 0 {
            let next_stage = t / c + 1;
            let mu_bar = self.mu_bar.clone();
            let sigma_bar = self.sigma_bar.clone();
            let staged = self.staged.as_mut().unwrap();
            if next_stage >= 3 {
                staged.mu_mixed = staged.mu_mix.clone();
                staged.sigma_mixed = staged.sigma_mix.clone();
            }
            if next_stage >= 2 {
                staged.mu_mix = mu_bar;
                staged.sigma_mix = sigma_bar;
            }
            staged.boundaries = next_stage - 1;
        }
        self.round = t;

        Ok(StepOutcome {
            message: self.message(t),
            action,
            reward,
        })
    }

    /// Consensus-only round: mixes the running estimates with the
    /// neighbors' without observing anything, as if the local posteriors
    /// were frozen. Used to study pure mixing dynamics.
    pub fn consensus_step(
        &mut self,
        inbox: &[&EstimateMessage],
        weights_row: &[f64],
        t: usize,
    ) -> Result<EstimateMessage> {
        self.validate_inbox(inbox, weights_row, t)?;
        let mu_terms: Vec<(f64, &[f64])> = inbox
            .iter()
            .map(|m| (weights_row[m.sender], m.mu_bar.as_slice()))
            .collect();
        let sigma_terms: Vec<(f64, &[f64])> = inbox
            .iter()
            .map(|m| (weights_row[m.sender], m.sigma_bar.as_slice()))
            .collect();
        self.mu_bar = Self::consensus_update(&self.mu_bar, &mu_terms);
        self.sigma_bar = Self::consensus_update(&self.sigma_bar, &sigma_terms);
        Ok(self.message(t))
    }

    fn check_round(&self, t: usize) -> Result<()> {
        if t != self.round + 1 {
            return Err(Error::Protocol(format!(
                "agent {} stepped with round {t} after completing round {}",
                self.id, self.round
            )));
        }
        Ok(())
    }
}

/// Single-agent IGP-UCB baseline: acts directly on its own posterior, no
/// estimate vectors and no messages.
#[derive(Debug, Clone)]
pub struct IgpUcbAgent {
    id: usize,
    gp: GpState,
    round: usize,
}

impl IgpUcbAgent {
    pub fn new(id: usize, kernel: KernelSpec, lambda: f64, grid_points: &[Vec<f64>]) -> Result<Self> {
        Ok(Self {
            id,
            gp: GpState::with_tracked_grid(kernel, lambda, grid_points)?,
            round: 0,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn gp(&self) -> &GpState {
        &self.gp
    }

    pub fn step(
        &mut self,
        sched: &BetaSchedule,
        t: usize,
        mut reward_fn: impl FnMut(usize) -> f64,
    ) -> Result<(usize, f64)> {
        if t != self.round + 1 {
            return Err(Error::Protocol(format!(
                "agent {} stepped with round {t} after completing round {}",
                self.id, self.round
            )));
        }
        let (mu, sigma) = self.gp.tracked_posterior().expect("grid is tracked");
        let action = select_action(mu, sigma, sched.beta(t))?;
        let x = self.gp.tracked_points().expect("grid is tracked")[action].clone();
        let y = reward_fn(action);
        self.gp.observe(&x, y)?;
        self.round = t;
        Ok((action, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn se_kernel() -> KernelSpec {
        KernelSpec::squared_exponential(0.1).unwrap()
    }

    fn sched(n_agents: usize, beta_scale: f64) -> BetaSchedule {
        BetaSchedule::new(
            1.0,
            0.2,
            n_agents,
            0.1,
            beta_scale,
            KernelFamily::SquaredExponential,
            1,
            2.5,
            1.0,
        )
        .unwrap()
    }

    fn grid(m: usize) -> Vec<Vec<f64>> {
        (0..m).map(|i| vec![i as f64 / (m - 1) as f64]).collect()
    }

    #[test]
    fn beta_first_round_formula() {
        // With delta such that ln(N/delta) = 0 the first width is
        // B + eta sqrt(2).
        let s = BetaSchedule::new(
            1.0,
            0.2,
            1,
            0.999999999999,
            1.0,
            KernelFamily::SquaredExponential,
            1,
            2.5,
            1.0,
        )
        .unwrap();
        assert_relative_eq!(s.beta(1), 1.0 + 0.2 * 2.0f64.sqrt(), max_relative = 1e-9);
        assert_relative_eq!(s.beta(1), 1.282843, max_relative = 1e-6);
    }

    #[test]
    fn beta_zero_scale_is_greedy() {
        let s = sched(5, 0.0);
        for t in 1..20 {
            assert_eq!(s.beta(t), 0.0);
        }
    }

    #[test]
    fn beta_monotone() {
        let s = sched(5, 0.2);
        let mut prev = 0.0;
        for t in 1..=1000 {
            let b = s.beta(t);
            assert!(b >= prev, "beta decreased at t = {t}");
            prev = b;
        }
    }

    #[test]
    fn select_tie_breaks_lowest() {
        let mu = vec![0.0; 4];
        let sigma = vec![1.0; 4];
        assert_eq!(select_action(&mu, &sigma, 2.0).unwrap(), 0);
    }

    #[test]
    fn select_greedy_limit() {
        let mu = vec![0.1, 0.9, 0.3];
        let sigma = vec![5.0, 0.0, 5.0];
        assert_eq!(select_action(&mu, &sigma, 0.0).unwrap(), 1);
    }

    #[test]
    fn select_hand_case() {
        assert_eq!(select_action(&[0.0, 0.5], &[1.0, 0.1], 1.0).unwrap(), 0);
    }

    #[test]
    fn select_rejects_nan() {
        assert!(select_action(&[0.0, f64::NAN], &[1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn running_update_two_agent_midpoint() {
        // Zero innovation, complete two-agent graph (w = 1/2): each estimate
        // moves halfway toward the other.
        let own = vec![0.0, 2.0];
        let other = vec![1.0, 0.0];
        let local = vec![0.3, -0.4];
        let updated = AgentRuntime::running_update(
            &own,
            &local,
            &local,
            &[(0.5, other.as_slice())],
        );
        assert_abs_diff_eq!(updated[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(updated[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn isolated_agent_estimates_track_posterior() {
        let g = grid(20);
        let mut agent =
            AgentRuntime::new(0, se_kernel(), 0.04, &g, PolicyMode::Ma).unwrap();
        let s = sched(1, 0.2);
        let weights = vec![1.0];
        for t in 1..=15 {
            agent.ma_step(&[], &weights, &s, t, |a| g[a][0].sin()).unwrap();
            let (mu, sigma) = agent.gp().tracked_posterior().unwrap();
            assert_eq!(agent.running_mean(), mu);
            assert_eq!(agent.running_dev(), sigma);
        }
    }

    #[test]
    fn inbox_mismatch_is_protocol_error() {
        let g = grid(5);
        let mut agent =
            AgentRuntime::new(0, se_kernel(), 0.04, &g, PolicyMode::Ma).unwrap();
        let s = sched(2, 0.2);
        // Two agents, neighbor 1 expected but inbox empty.
        let weights = vec![0.5, 0.5];
        let err = agent.ma_step(&[], &weights, &s, 1, |_| 0.0).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn stale_message_is_protocol_error() {
        let g = grid(5);
        let mut a = AgentRuntime::new(0, se_kernel(), 0.04, &g, PolicyMode::Ma).unwrap();
        let b = AgentRuntime::new(1, se_kernel(), 0.04, &g, PolicyMode::Ma).unwrap();
        let s = sched(2, 0.2);
        let weights = vec![0.5, 0.5];
        let mut msg = b.initial_message();
        msg.round = 5;
        let err = a.ma_step(&[&msg], &weights, &s, 1, |_| 0.0).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn conservation_on_a_triangle() {
        // Sum of running estimates equals sum of local posteriors at every
        // grid point (doubly stochastic mixing telescopes the innovations).
        let g = grid(12);
        let graph = crate::netgraph::gen_graph(crate::netgraph::GraphKind::Cycle, 3, 0.0, 0)
            .unwrap();
        let mats = crate::netgraph::perron_matrix(&graph).unwrap();
        let s = sched(3, 0.2);
        let mut agents: Vec<AgentRuntime> = (0..3)
            .map(|i| AgentRuntime::new(i, se_kernel(), 0.04, &g, PolicyMode::Ma).unwrap())
            .collect();
        let mut mailbox: Vec<EstimateMessage> =
            agents.iter().map(|a| a.initial_message()).collect();
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| mats.weights.row(i).iter().cloned().collect())
            .collect();
        for t in 1..=25 {
            let mut next = Vec::new();
            for (i, agent) in agents.iter_mut().enumerate() {
                let inbox: Vec<&EstimateMessage> = graph
                    .neighbors(i)
                    .iter()
                    .map(|&j| &mailbox[j])
                    .collect();
                let out = agent
                    .ma_step(&inbox, &rows[i], &s, t, |a| (g[a][0] * 3.0).cos() * 0.5)
                    .unwrap();
                next.push(out.message);
            }
            mailbox = next;
            for j in 0..g.len() {
                let bar_sum: f64 = agents.iter().map(|a| a.running_mean()[j]).sum();
                let local_sum: f64 = agents.iter().map(|a| a.local_mean()[j]).sum();
                assert_abs_diff_eq!(bar_sum, local_sum, epsilon = 1e-8);
                let bar_dev: f64 = agents.iter().map(|a| a.running_dev()[j]).sum();
                let local_dev: f64 = agents.iter().map(|a| a.local_dev()[j]).sum();
                assert_abs_diff_eq!(bar_dev, local_dev, epsilon = 1e-8);
            }
        }
    }

    fn run_mad_pair(
        c: usize,
        t_max: usize,
    ) -> (Vec<AgentRuntime>, Vec<Vec<Vec<f64>>>, Vec<Vec<usize>>) {
        // Two-agent complete graph; returns agents, per-round running means,
        // and per-round actions.
        let g = grid(10);
        let graph = crate::netgraph::gen_graph(crate::netgraph::GraphKind::Complete, 2, 0.0, 0)
            .unwrap();
        let mats = crate::netgraph::perron_matrix(&graph).unwrap();
        let s = sched(2, 0.2);
        let mut agents: Vec<AgentRuntime> = (0..2)
            .map(|i| {
                AgentRuntime::new(i, se_kernel(), 0.04, &g, PolicyMode::Mad { stage_len: c })
                    .unwrap()
            })
            .collect();
        let mut mailbox: Vec<EstimateMessage> =
            agents.iter().map(|a| a.initial_message()).collect();
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|i| mats.weights.row(i).iter().cloned().collect())
            .collect();
        let mut running_log = Vec::new();
        let mut action_log = Vec::new();
        for t in 1..=t_max {
            let mut next = Vec::new();
            let mut actions = Vec::new();
            for (i, agent) in agents.iter_mut().enumerate() {
                let inbox: Vec<&EstimateMessage> = graph
                    .neighbors(i)
                    .iter()
                    .map(|&j| &mailbox[j])
                    .collect();
                let out = agent
                    .mad_step(&inbox, &rows[i], &s, t, |a| {
                        if i == 0 { g[a][0] } else { 1.0 - g[a][0] }
                    })
                    .unwrap();
                actions.push(out.action);
                next.push(out.message);
            }
            mailbox = next;
            running_log.push(agents.iter().map(|a| a.running_mean().to_vec()).collect());
            action_log.push(actions);
        }
        (agents, running_log, action_log)
    }

    #[test]
    fn mad_within_stage_actions_constant() {
        let c = 3;
        let (_, _, actions) = run_mad_pair(c, 5 * c);
        // From stage 3 on, the c rounds of a stage share one action.
        for stage in 3..=5 {
            let lo = (stage - 1) * c; // 0-based round index of stage start
            for agent in 0..2 {
                for offset in 1..c {
                    assert_eq!(
                        actions[lo][agent],
                        actions[lo + offset][agent],
                        "stage {stage} agent {agent}"
                    );
                }
            }
        }
    }

    #[test]
    fn mad_c1_mixed_lags_running_by_two_stages() {
        // With c = 1 on a two-agent graph the mixed tier at stage s is one
        // consensus application of the running tier from two stages back.
        let (agents, running_log, _) = run_mad_pair(1, 8);
        let t = 8usize;
        // mixed at the start of round t+1 equals P * running_{t-1}.
        let p = 0.5;
        for j in 0..agents[0].running_mean().len() {
            let r0 = running_log[t - 2][0][j];
            let r1 = running_log[t - 2][1][j];
            let expected0 = r0 + p * (r1 - r0);
            let expected1 = r1 + p * (r0 - r1);
            assert_abs_diff_eq!(agents[0].mixed_mean().unwrap()[j], expected0, epsilon = 1e-12);
            assert_abs_diff_eq!(agents[1].mixed_mean().unwrap()[j], expected1, epsilon = 1e-12);
        }
    }

    #[test]
    fn mad_single_agent_mixed_is_delayed_running() {
        // N = 1: consensus is the identity, so the mixed tier is exactly the
        // running estimate from two stage boundaries back.
        let g = grid(8);
        let c = 2;
        let mut agent =
            AgentRuntime::new(0, se_kernel(), 0.04, &g, PolicyMode::Mad { stage_len: c })
                .unwrap();
        let s = sched(1, 0.2);
        let weights = vec![1.0];
        let mut history: Vec<Vec<f64>> = vec![agent.running_mean().to_vec()];
        for t in 1..=10 {
            agent.mad_step(&[], &weights, &s, t, |a| g[a][0]).unwrap();
            history.push(agent.running_mean().to_vec());
        }
        // After round 10 (boundary of stage 6), mixed = running at t = 8.
        assert_eq!(agent.mixed_mean().unwrap(), history[8].as_slice());
    }

    #[test]
    fn message_surface_is_estimates_only() {
        let (agents, _, _) = run_mad_pair(2, 6);
        let msg = agents[0].message(6);
        let value = serde_json::to_value(&msg).unwrap();
        let keys: Vec<&str> = value.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(
            keys,
            ["mu_bar", "mu_mix", "round", "sender", "sigma_bar", "sigma_mix"]
        );
        // Estimates, not the local posterior, are what goes on the wire.
        assert_eq!(msg.mu_bar, agents[0].running_mean());
        assert_ne!(
            msg.mu_bar.as_slice(),
            agents[0].gp().tracked_posterior().unwrap().0
        );
    }
}
