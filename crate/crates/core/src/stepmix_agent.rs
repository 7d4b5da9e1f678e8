//! StepMix: safe exploration through step mixtures of candidate policies.
//!
//! Each episode builds `H + 1` candidates; candidate `h0` follows the
//! baseline for the first `h0` steps and the optimistic policy afterwards, so
//! neighbouring candidates differ at exactly one step. The learner picks the
//! smallest `h0` whose lower bound clears `γ` and, unless that is `h0 = 0`,
//! mixes candidates `h0 − 1` and `h0` so the mixture's lower bound is exactly `γ`.
//! Value linearity of one-step-different mixtures makes that bound exact.

use rand::Rng;

use crate::agent::{
    run_learner, stepmix_delta_prime, AgentConfig, AgentRun, EpisodePlan, Executed, Learner, LearnerCore,
};
use crate::bounds::{compute_optimistic_bounds, policy_eva};
use crate::error::{Error, Result};
use crate::mdp::{step_mix, StochasticPolicy, TabularMdp, Trajectory};
use crate::model::{estimate_transitions, CountTable};
use crate::record::{Algorithm, SelectionKind};

/// Below this spread between two straddling lower bounds the mixture weight
/// is numerically meaningless and the safe candidate is used alone.
const MIN_LCB_SPREAD: f64 = 1e-12;

/// Candidates `0..=H`: candidate `h0` plays `baseline` on steps `0..h0` and `optimistic` after.
pub fn build_candidates(optimistic: &StochasticPolicy, baseline: &StochasticPolicy) -> Result<Vec<StochasticPolicy>> {
    (0..=optimistic.horizon())
        .map(|h0| StochasticPolicy::splice(baseline, optimistic, h0))
        .collect()
}

#[derive(Debug, Clone)]
pub struct PolicySelection {
    pub kind: SelectionKind,
    /// Index of the first candidate whose lower bound clears `γ`; mixtures only.
    pub h_k: Option<usize>,
    /// Weight on candidate `h_k − 1`; mixtures only.
    pub rho: Option<f64>,
    pub executed: StochasticPolicy,
    pub lcb_value: f64,
    /// `[lcb of candidate h_k − 1, lcb of candidate h_k]` for mixtures.
    pub mixed_lcbs: Option<[f64; 2]>,
}

/// Chooses the executed policy from the candidates' lower bounds at `s1`.
pub fn select_policy(candidate_lcbs: &[f64], candidates: &[StochasticPolicy], gamma: f64) -> Result<PolicySelection> {
    if candidate_lcbs.len() != candidates.len() || candidates.len() < 2 {
        return Err(Error::Dimension(format!(
            "need H + 1 ≥ 2 candidates with one bound each, got {} candidates and {} bounds",
            candidates.len(),
            candidate_lcbs.len()
        )));
    }
    let baseline_idx = candidates.len() - 1;
    let Some(h_k) = candidate_lcbs.iter().position(|&l| l >= gamma) else {
        return Ok(PolicySelection {
            kind: SelectionKind::Baseline,
            h_k: None,
            rho: None,
            executed: candidates[baseline_idx].clone(),
            lcb_value: candidate_lcbs[baseline_idx],
            mixed_lcbs: None,
        });
    };
    if h_k == 0 {
        return Ok(PolicySelection {
            kind: SelectionKind::Optimistic,
            h_k: None,
            rho: None,
            executed: candidates[0].clone(),
            lcb_value: candidate_lcbs[0],
            mixed_lcbs: None,
        });
    }
    let safe = candidate_lcbs[h_k];
    let unsafe_lcb = candidate_lcbs[h_k - 1];
    let spread = safe - unsafe_lcb;
    if spread <= 0.0 {
        return Err(Error::Invariant(format!(
            "candidate {h_k} has lower bound {safe} ≥ γ but candidate {} has {unsafe_lcb}",
            h_k - 1
        )));
    }
    let rho = if spread < MIN_LCB_SPREAD {
        0.0
    } else {
        ((safe - gamma) / spread).clamp(0.0, 1.0)
    };
    let executed = step_mix(&candidates[h_k - 1], &candidates[h_k], rho)?;
    Ok(PolicySelection {
        kind: SelectionKind::Mixture,
        h_k: Some(h_k),
        rho: Some(rho),
        executed,
        lcb_value: rho * unsafe_lcb + (1.0 - rho) * safe,
        mixed_lcbs: Some([unsafe_lcb, safe]),
    })
}

/// Everything StepMix computed while planning one episode.
#[derive(Debug, Clone)]
pub struct StepMixPlan {
    pub optimistic: StochasticPolicy,
    pub candidates: Vec<StochasticPolicy>,
    pub candidate_lcbs: Vec<f64>,
    pub selection: PolicySelection,
}

#[derive(Debug, Clone)]
pub struct StepMixLearner {
    core: LearnerCore,
    gamma: f64,
    baseline: StochasticPolicy,
}

impl StepMixLearner {
    pub fn new(mdp: &TabularMdp, cfg: &AgentConfig) -> Result<Self> {
        let shape = mdp.shape();
        cfg.baseline.check_against(shape)?;
        let params = cfg.bonus(shape, stepmix_delta_prime(cfg.delta, shape.horizon))?;
        Ok(Self {
            core: LearnerCore::new(mdp, params),
            gamma: cfg.gamma,
            baseline: cfg.baseline.clone(),
        })
    }

    /// Transition counts gathered so far.
    pub fn counts(&self) -> &CountTable {
        &self.core.counts
    }

    pub fn plan_details(&self) -> Result<StepMixPlan> {
        let core = &self.core;
        let model = estimate_transitions(&core.counts);
        let (_, optimistic) = compute_optimistic_bounds(&model, &core.rewards, &core.params)?;
        let candidates = build_candidates(&optimistic, &self.baseline)?;
        let candidate_lcbs = candidates
            .iter()
            .map(|pi| Ok(policy_eva(&model, &core.rewards, pi, &core.params)?.lower_initial(core.start_state)))
            .collect::<Result<Vec<_>>>()?;
        debug_assert_eq!(candidate_lcbs.len(), core.shape().horizon + 1);
        let selection = select_policy(&candidate_lcbs, &candidates, self.gamma)?;
        Ok(StepMixPlan {
            optimistic,
            candidates,
            candidate_lcbs,
            selection,
        })
    }
}

impl Learner for StepMixLearner {
    fn algorithm(&self) -> Algorithm {
        Algorithm::StepMix
    }

    fn plan<R: Rng + ?Sized>(&mut self, _coin: &mut R) -> Result<EpisodePlan> {
        let PolicySelection {
            kind,
            h_k,
            rho,
            executed,
            lcb_value,
            mixed_lcbs,
        } = self.plan_details()?.selection;
        Ok(EpisodePlan {
            kind,
            rho,
            h_k,
            lcb_value,
            mixed_lcbs,
            executed: Executed::Policy(executed),
        })
    }

    fn observe(&mut self, traj: &Trajectory) -> Result<()> {
        self.core.counts.update(traj)
    }
}

pub fn run_stepmix<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    cfg: &AgentConfig,
    episodes: usize,
    rollout_rng: &mut R,
) -> Result<AgentRun> {
    let mut learner = StepMixLearner::new(mdp, cfg)?;
    // Never drawn from: StepMix randomizes within the policy, not over episodes.
    let mut unused = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    run_learner(mdp, cfg, &mut learner, episodes, rollout_rng, &mut unused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{boltzmann_baseline, generate_random_mdp, Shape};
    use ndarray::Array2;

    fn point(action: usize, shape: Shape) -> StochasticPolicy {
        StochasticPolicy::deterministic(&Array2::from_elem((shape.horizon, shape.states), action), shape.actions)
            .unwrap()
    }

    fn three_step() -> (StochasticPolicy, StochasticPolicy) {
        let shape = Shape::new(2, 2, 3).unwrap();
        (point(0, shape), point(1, shape))
    }

    #[test]
    fn candidate_endpoints() {
        let (opt, base) = three_step();
        let c = build_candidates(&opt, &base).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c[0], opt);
        assert_eq!(c[3], base);
    }

    #[test]
    fn neighbours_differ_at_one_step() {
        let (opt, base) = three_step();
        let c = build_candidates(&opt, &base).unwrap();
        for h0 in 0..3 {
            for h in 0..3 {
                let same = c[h0].step(h) == c[h0 + 1].step(h);
                assert_eq!(same, h != h0, "candidates {h0} and {} at step {h}", h0 + 1);
            }
        }
    }

    #[test]
    fn selection_cases() {
        let (opt, base) = three_step();
        let c = build_candidates(&opt, &base).unwrap();

        let s = select_policy(&[2.5, 2.6, 2.7, 2.8], &c, 2.0).unwrap();
        assert_eq!(s.kind, SelectionKind::Optimistic);
        assert_eq!(s.executed, opt);

        let s = select_policy(&[1.0, 1.2, 1.4, 1.9], &c, 2.0).unwrap();
        assert_eq!(s.kind, SelectionKind::Baseline);
        assert_eq!(s.executed, base);

        let s = select_policy(&[1.0, 1.5, 2.5, 2.6], &c, 2.0).unwrap();
        assert_eq!(s.kind, SelectionKind::Mixture);
        assert_eq!(s.h_k, Some(2));
        assert_eq!(s.rho, Some(0.5));
        assert_eq!(s.lcb_value, 2.0);
        assert_eq!(s.executed, step_mix(&c[1], &c[2], 0.5).unwrap());
    }

    #[test]
    fn degenerate_spread_uses_safe_candidate() {
        let (opt, base) = three_step();
        let c = build_candidates(&opt, &base).unwrap();
        let s = select_policy(&[0.0, 2.0 - 1e-14, 2.0, 2.0], &c, 2.0 - 5e-15).unwrap();
        assert_eq!(s.rho, Some(0.0));
        assert_eq!(s.executed, c[2]);
        assert!(select_policy(&[0.0, 1.0], &c, 0.5).is_err());
    }

    #[test]
    fn first_episode_plays_baseline() {
        let mdp = generate_random_mdp(5, 5, 3, 1).unwrap();
        let baseline = boltzmann_baseline(&mdp, 5.0).unwrap();
        let cfg = AgentConfig::new(0.5, 0.1, 1.0, baseline.clone()).unwrap();
        let plan = StepMixLearner::new(&mdp, &cfg).unwrap().plan_details().unwrap();
        assert!(plan.candidate_lcbs.iter().all(|&l| l == 0.0));
        assert_eq!(plan.selection.kind, SelectionKind::Baseline);
        assert_eq!(plan.selection.executed, baseline);
    }

    #[test]
    fn zero_threshold_is_always_optimistic() {
        let mdp = generate_random_mdp(3, 2, 3, 3).unwrap();
        let cfg = AgentConfig::new(0.0, 0.1, 0.01, boltzmann_baseline(&mdp, 2.0).unwrap()).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let run = run_stepmix(&mdp, &cfg, 200, &mut rng).unwrap();
        assert!(run.records().all(|r| r.kind == SelectionKind::Optimistic));
    }
}
