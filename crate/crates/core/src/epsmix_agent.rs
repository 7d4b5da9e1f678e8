//! EpsMix: a whole-episode coin flip between the optimistic policy and the baseline.
//!
//! When the optimistic policy's lower bound is below `γ` but the baseline's is
//! not, the optimistic policy is played with probability
//! `ρ = (V̰_b − γ) / (V̰_b − V̰_opt)`, which puts the expected lower bound at `γ`.

use rand::Rng;

use crate::agent::{run_learner, AgentConfig, AgentRun, EpisodePlan, Executed, Learner, LearnerCore};
use crate::bounds::{compute_optimistic_bounds, policy_eva, BoundsTable};
use crate::error::Result;
use crate::mdp::{StochasticPolicy, TabularMdp, Trajectory};
use crate::model::{estimate_transitions, BonusParams, EmpiricalModel};
use crate::record::{Algorithm, Branch, SelectionKind};

/// `δ' = δ / 4`.
pub fn epsmix_delta_prime(delta: f64) -> f64 {
    delta / 4.0
}

/// Confidence bounds on the baseline's value under the current model.
pub fn evaluate_baseline_bounds(
    model: &EmpiricalModel,
    rewards: &ndarray::Array3<f64>,
    baseline: &StochasticPolicy,
    params: &BonusParams,
) -> Result<BoundsTable> {
    policy_eva(model, rewards, baseline, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodicSelection {
    pub kind: SelectionKind,
    /// Probability of the optimistic branch; episodic mixtures only.
    pub rho: Option<f64>,
    pub branch: Branch,
}

/// Picks this episode's branch, flipping `rng` only for a genuine mixture.
pub fn select_episodic<R: Rng + ?Sized>(opt_lcb: f64, base_lcb: f64, gamma: f64, rng: &mut R) -> EpisodicSelection {
    if opt_lcb >= gamma {
        return EpisodicSelection {
            kind: SelectionKind::Optimistic,
            rho: None,
            branch: Branch::Optimistic,
        };
    }
    if base_lcb < gamma {
        return EpisodicSelection {
            kind: SelectionKind::Baseline,
            rho: None,
            branch: Branch::Baseline,
        };
    }
    // opt_lcb < γ ≤ base_lcb, so the denominator is positive.
    let rho = ((base_lcb - gamma) / (base_lcb - opt_lcb)).clamp(0.0, 1.0);
    let branch = if rng.random::<f64>() < rho {
        Branch::Optimistic
    } else {
        Branch::Baseline
    };
    EpisodicSelection {
        kind: SelectionKind::EpisodicMixture,
        rho: Some(rho),
        branch,
    }
}

#[derive(Debug, Clone)]
pub struct EpsMixLearner {
    core: LearnerCore,
    gamma: f64,
    baseline: StochasticPolicy,
}

impl EpsMixLearner {
    pub fn new(mdp: &TabularMdp, cfg: &AgentConfig) -> Result<Self> {
        let shape = mdp.shape();
        cfg.baseline.check_against(shape)?;
        let params = cfg.bonus(shape, epsmix_delta_prime(cfg.delta))?;
        Ok(Self {
            core: LearnerCore::new(mdp, params),
            gamma: cfg.gamma,
            baseline: cfg.baseline.clone(),
        })
    }
}

impl Learner for EpsMixLearner {
    fn algorithm(&self) -> Algorithm {
        Algorithm::EpsMix
    }

    fn plan<R: Rng + ?Sized>(&mut self, coin: &mut R) -> Result<EpisodePlan> {
        let core = &self.core;
        let model = estimate_transitions(&core.counts);
        let (opt_table, optimistic) = compute_optimistic_bounds(&model, &core.rewards, &core.params)?;
        let base_table = evaluate_baseline_bounds(&model, &core.rewards, &self.baseline, &core.params)?;
        let opt_lcb = opt_table.lower_initial(core.start_state);
        let base_lcb = base_table.lower_initial(core.start_state);
        let sel = select_episodic(opt_lcb, base_lcb, self.gamma, coin);
        let plan = match sel.kind {
            SelectionKind::Optimistic => EpisodePlan {
                kind: sel.kind,
                rho: None,
                h_k: None,
                lcb_value: opt_lcb,
                mixed_lcbs: None,
                executed: Executed::Policy(optimistic),
            },
            SelectionKind::Baseline => EpisodePlan {
                kind: sel.kind,
                rho: None,
                h_k: None,
                lcb_value: base_lcb,
                mixed_lcbs: None,
                executed: Executed::Policy(self.baseline.clone()),
            },
            _ => {
                let rho = sel.rho.unwrap_or(0.0);
                EpisodePlan {
                    kind: sel.kind,
                    rho: sel.rho,
                    h_k: None,
                    lcb_value: rho * opt_lcb + (1.0 - rho) * base_lcb,
                    mixed_lcbs: Some([opt_lcb, base_lcb]),
                    executed: Executed::Episodic {
                        rho,
                        optimistic,
                        baseline: self.baseline.clone(),
                        branch: sel.branch,
                    },
                }
            }
        };
        Ok(plan)
    }

    fn observe(&mut self, traj: &Trajectory) -> Result<()> {
        self.core.counts.update(traj)
    }
}

pub fn run_epsmix<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    mdp: &TabularMdp,
    cfg: &AgentConfig,
    episodes: usize,
    rollout_rng: &mut R1,
    coin_rng: &mut R2,
) -> Result<AgentRun> {
    let mut learner = EpsMixLearner::new(mdp, cfg)?;
    run_learner(mdp, cfg, &mut learner, episodes, rollout_rng, coin_rng)
}
