//! The episode loop shared by all online learners, and the unconstrained
//! optimistic learner.
//!
//! Every episode the learner proposes a policy from its data alone; the loop
//! then scores that policy exactly against the true model, rolls it out and
//! feeds the trajectory back.

use ndarray::Array3;
use rand::Rng;

use crate::bounds::compute_optimistic_bounds;
use crate::error::{Error, Result};
use crate::mdp::{expected_return, rollout, solve_optimal, Shape, StochasticPolicy, TabularMdp, Trajectory};
use crate::model::{estimate_transitions, BonusParams, CountTable};
use crate::record::{Algorithm, Branch, EpisodeAudit, EpisodeLog, EpisodeRecord, SelectionKind};

/// Settings shared by the online learners.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// Per-episode threshold `γ` on the expected return.
    pub gamma: f64,
    /// Overall failure probability `δ`.
    pub delta: f64,
    /// Multiplier on every confidence term; 1.0 keeps the theoretical constants.
    pub bonus_scale: f64,
    pub baseline: StochasticPolicy,
}

impl AgentConfig {
    pub fn new(gamma: f64, delta: f64, bonus_scale: f64, baseline: StochasticPolicy) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::Parameter(format!("threshold γ = {gamma} must be finite")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Parameter(format!("δ = {delta} must lie in (0, 1)")));
        }
        if !(bonus_scale > 0.0 && bonus_scale.is_finite()) {
            return Err(Error::Parameter(format!("bonus scale {bonus_scale} must be positive")));
        }
        Ok(Self {
            gamma,
            delta,
            bonus_scale,
            baseline,
        })
    }

    pub(crate) fn bonus(&self, shape: Shape, delta_prime: f64) -> Result<BonusParams> {
        BonusParams::new(shape, delta_prime, self.bonus_scale)
    }
}

/// What a learner will execute this episode.
#[derive(Debug, Clone)]
pub enum Executed {
    Policy(StochasticPolicy),
    /// Coin flip already taken; `branch` says which policy runs.
    Episodic {
        rho: f64,
        optimistic: StochasticPolicy,
        baseline: StochasticPolicy,
        branch: Branch,
    },
}

#[derive(Debug, Clone)]
pub struct EpisodePlan {
    pub kind: SelectionKind,
    pub rho: Option<f64>,
    pub h_k: Option<usize>,
    pub lcb_value: f64,
    pub mixed_lcbs: Option<[f64; 2]>,
    pub executed: Executed,
}

/// An online learner that only sees its own trajectories and the known rewards.
pub trait Learner {
    fn algorithm(&self) -> Algorithm;

    /// Chooses the policy for the next episode. `coin` is only drawn from by
    /// learners that randomize over whole episodes.
    fn plan<R: Rng + ?Sized>(&mut self, coin: &mut R) -> Result<EpisodePlan>;

    fn observe(&mut self, traj: &Trajectory) -> Result<()>;
}

/// Result of one learner run on one environment.
#[derive(Debug, Clone)]
pub struct AgentRun {
    pub algorithm: Algorithm,
    pub optimal_value: f64,
    pub baseline_value: f64,
    pub gamma: f64,
    /// Set when the supplied baseline does not meet the threshold itself.
    pub baseline_warning: Option<String>,
    pub logs: Vec<EpisodeLog>,
}

impl AgentRun {
    pub fn records(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.logs.iter().map(|l| &l.record)
    }

    pub fn violations(&self) -> usize {
        self.records().filter(|r| r.violation).count()
    }

    pub fn regret(&self) -> f64 {
        self.logs.last().map_or(0.0, |l| l.record.cum_regret)
    }
}

pub(crate) fn baseline_check(mdp: &TabularMdp, cfg: &AgentConfig) -> Result<(f64, Option<String>)> {
    let value = expected_return(mdp, &cfg.baseline)?;
    let warning = (value < cfg.gamma).then(|| {
        let msg = format!(
            "baseline value {value:.6} is below the threshold γ = {:.6}; the safety guarantee does not apply",
            cfg.gamma
        );
        log::warn!("{msg}");
        msg
    });
    Ok((value, warning))
}

/// Runs `episodes` episodes of `learner` on `mdp`, scoring each policy exactly.
pub fn run_learner<L: Learner, R1: Rng + ?Sized, R2: Rng + ?Sized>(
    mdp: &TabularMdp,
    cfg: &AgentConfig,
    learner: &mut L,
    episodes: usize,
    rollout_rng: &mut R1,
    coin_rng: &mut R2,
) -> Result<AgentRun> {
    cfg.baseline.check_against(mdp.shape())?;
    let (baseline_value, baseline_warning) = baseline_check(mdp, cfg)?;
    let optimal_value = solve_optimal(mdp).0.initial(mdp.start_state());
    let mut cum_regret = 0.0;
    let mut logs = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let plan = learner.plan(coin_rng)?;
        let (rolled, value, mixture_value, branch) = match &plan.executed {
            Executed::Policy(pi) => (pi, expected_return(mdp, pi)?, None, None),
            Executed::Episodic {
                rho,
                optimistic,
                baseline,
                branch,
            } => {
                let opt_value = expected_return(mdp, optimistic)?;
                let base_value = expected_return(mdp, baseline)?;
                let mixed = rho * opt_value + (1.0 - rho) * base_value;
                match branch {
                    Branch::Optimistic => (optimistic, opt_value, Some(mixed), Some(*branch)),
                    Branch::Baseline => (baseline, base_value, Some(mixed), Some(*branch)),
                }
            }
        };
        let traj = rollout(mdp, rolled, rollout_rng, k);
        learner.observe(&traj)?;
        cum_regret += optimal_value - value;
        let governing = mixture_value.unwrap_or(value);
        logs.push(EpisodeLog {
            record: EpisodeRecord {
                trial: 0,
                episode: k + 1,
                algorithm: learner.algorithm(),
                kind: plan.kind,
                rho: plan.rho,
                h_k: plan.h_k,
                value,
                mixture_value,
                violation: governing < cfg.gamma,
                cum_regret,
            },
            audit: EpisodeAudit {
                lcb_value: plan.lcb_value,
                mixed_lcbs: plan.mixed_lcbs,
                realized_branch: branch,
                realized_violation: value < cfg.gamma,
            },
        });
    }
    Ok(AgentRun {
        algorithm: learner.algorithm(),
        optimal_value,
        baseline_value,
        gamma: cfg.gamma,
        baseline_warning,
        logs,
    })
}

/// State common to the model-based learners.
#[derive(Debug, Clone)]
pub(crate) struct LearnerCore {
    pub rewards: Array3<f64>,
    pub start_state: usize,
    pub counts: CountTable,
    pub params: BonusParams,
}

impl LearnerCore {
    pub fn new(mdp: &TabularMdp, params: BonusParams) -> Self {
        Self {
            rewards: mdp.rewards().clone(),
            start_state: mdp.start_state(),
            counts: CountTable::new(mdp.shape()),
            params,
        }
    }

    pub fn shape(&self) -> Shape {
        self.counts.shape()
    }
}

/// `δ' = δ / (3(H + 1))`, the per-event budget used by StepMix and the optimistic learner.
pub fn stepmix_delta_prime(delta: f64, horizon: usize) -> f64 {
    delta / (3.0 * (horizon as f64 + 1.0))
}

/// Executes the greedy policy on the upper bound every episode, ignoring the threshold.
#[derive(Debug, Clone)]
pub struct OptimisticLearner {
    core: LearnerCore,
}

impl OptimisticLearner {
    pub fn new(mdp: &TabularMdp, cfg: &AgentConfig) -> Result<Self> {
        let shape = mdp.shape();
        let params = cfg.bonus(shape, stepmix_delta_prime(cfg.delta, shape.horizon))?;
        Ok(Self {
            core: LearnerCore::new(mdp, params),
        })
    }
}

impl Learner for OptimisticLearner {
    fn algorithm(&self) -> Algorithm {
        Algorithm::OptimisticOnly
    }

    fn plan<R: Rng + ?Sized>(&mut self, _coin: &mut R) -> Result<EpisodePlan> {
        let model = estimate_transitions(&self.core.counts);
        let (table, policy) = compute_optimistic_bounds(&model, &self.core.rewards, &self.core.params)?;
        Ok(EpisodePlan {
            kind: SelectionKind::Optimistic,
            rho: None,
            h_k: None,
            lcb_value: table.lower_initial(self.core.start_state),
            mixed_lcbs: None,
            executed: Executed::Policy(policy),
        })
    }

    fn observe(&mut self, traj: &Trajectory) -> Result<()> {
        self.core.counts.update(traj)
    }
}

pub fn run_optimistic<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    cfg: &AgentConfig,
    episodes: usize,
    rollout_rng: &mut R,
) -> Result<AgentRun> {
    let mut learner = OptimisticLearner::new(mdp, cfg)?;
    // Never drawn from: the optimistic learner does not randomize over episodes.
    let mut unused = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    run_learner(mdp, cfg, &mut learner, episodes, rollout_rng, &mut unused)
}

/// Runs one of the online learners by tag. Only EpsMix draws from `coin_rng`.
pub fn run_algorithm<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    algorithm: Algorithm,
    mdp: &TabularMdp,
    cfg: &AgentConfig,
    episodes: usize,
    rollout_rng: &mut R1,
    coin_rng: &mut R2,
) -> Result<AgentRun> {
    match algorithm {
        Algorithm::StepMix => crate::stepmix_agent::run_stepmix(mdp, cfg, episodes, rollout_rng),
        Algorithm::EpsMix => crate::epsmix_agent::run_epsmix(mdp, cfg, episodes, rollout_rng, coin_rng),
        Algorithm::OptimisticOnly => run_optimistic(mdp, cfg, episodes, rollout_rng),
    }
}
