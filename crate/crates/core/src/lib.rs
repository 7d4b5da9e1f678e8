//! Conservative exploration in tabular episodic MDPs.
//!
//! The crate provides exact evaluation of policies in a known environment,
//! empirical models with Bernstein-style confidence bounds, the StepMix and
//! EpsMix learners that keep every episode's expected return above a
//! threshold `γ`, an unconstrained optimistic learner, offline baseline
//! extraction with VI-LCB, and a seeded multi-trial experiment harness.
//!
//! Steps are indexed `0..H` throughout; value tables carry an extra zero row at `H`.

pub mod agent;
pub mod bounds;
pub mod epsmix_agent;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod model;
pub mod offline;
pub mod record;
pub mod seeding;
pub mod stepmix_agent;
pub mod textfmt;

pub use agent::{run_algorithm, run_optimistic, AgentConfig, AgentRun, Learner, OptimisticLearner};
pub use bounds::{compute_optimistic_bounds, policy_eva, BoundsTable};
pub use epsmix_agent::{run_epsmix, select_episodic, EpsMixLearner};
pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentConfig, ExperimentResult, Summary};
pub use mdp::{
    boltzmann_baseline, episodic_mixture_occupancy, episodic_mixture_value, evaluate_policy, expected_return,
    generate_random_mdp, occupancy_measure, rollout, solve_optimal, step_mix, OccupancyTable, Shape, StochasticPolicy,
    TabularMdp, Trajectory, Transition, ValueTable,
};
pub use model::{estimate_transitions, BonusParams, CountTable, EmpiricalModel};
pub use offline::{
    collect_offline, offline_to_online, required_offline_samples, vi_lcb, OfflineConfig, OfflineDataset,
};
pub use record::{Algorithm, EpisodeRecord, SelectionKind};
pub use stepmix_agent::{build_candidates, run_stepmix, select_policy, StepMixLearner};
