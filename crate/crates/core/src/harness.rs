//! Multi-trial experiment runner, configuration and summaries.
//!
//! # Configuration file
//!
//! A flat TOML table; every key is optional except that exactly one of
//! `gamma` and `gamma_frac` must be given.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `states`, `actions`, `horizon` | random environment size | 5, 5, 3 |
//! | `env_seed` | fixed environment seed shared by all trials | per-trial draw |
//! | `env_file` | pinned environment file (excludes the four keys above) | |
//! | `baseline` | `"boltzmann"` or `"offline"` | `"boltzmann"` |
//! | `eta` | Boltzmann temperature of the baseline | 10 |
//! | `behavior_eta` | temperature of the offline behaviour policy | `eta` |
//! | `offline_n` | offline dataset size (required for `"offline"`) | |
//! | `offline_c` | VI-LCB bonus constant | 1 |
//! | `algorithms` | subset of `["stepmix", "epsmix", "optimistic"]` | all |
//! | `gamma` | absolute threshold | |
//! | `gamma_frac` | `α`, giving `γ = (1 − α)·V^{πb}` | |
//! | `delta` | failure probability | 0.1 |
//! | `episodes` | episodes per trial `K` | 2000 |
//! | `trials` | number of trials | 10 |
//! | `root_seed` | root of all randomness | 0 |
//! | `bonus_scale` | multiplier on every confidence term | 1 |
//! | `resample_env` | redraw random environments until the reference policy beats `γ` | true |
//!
//! With an absolute `gamma` and `resample_env`, a random environment is
//! redrawn until the reference policy (the baseline, or the behaviour policy
//! for offline baselines) has value above `γ`. A fixed `env_seed` is tried
//! first and then incremented.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{run_algorithm, AgentConfig};
use crate::error::{Error, Result};
use crate::mdp::{
    boltzmann_baseline, expected_return, generate_random_mdp, solve_optimal, StochasticPolicy, TabularMdp,
};
use crate::offline::{collect_offline, vi_lcb, OfflineConfig};
use crate::record::{Algorithm, EpisodeLog, EpisodeRecord};
use crate::seeding::{stream, trial_seed, Stream};
use crate::textfmt::load_mdp;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Attempts before giving up on finding an environment that satisfies the threshold.
const MAX_ENV_DRAWS: usize = 1000;

/// Raw configuration as read from a file or assembled from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub env_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub env_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behavior_eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offline_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offline_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithms: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_frac: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bonus_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample_env: Option<bool>,
}

impl ConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Keys set in `overrides` replace those in `self`.
    pub fn merge(self, overrides: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => {
                ConfigFile { $($f: overrides.$f.or(self.$f)),* }
            };
        }
        let mut merged = pick!(
            states,
            actions,
            horizon,
            env_seed,
            env_file,
            baseline,
            eta,
            behavior_eta,
            offline_n,
            offline_c,
            algorithms,
            gamma,
            gamma_frac,
            delta,
            episodes,
            trials,
            root_seed,
            bonus_scale,
            resample_env
        );
        // An explicit threshold of one kind on the command line displaces the other.
        if overrides.gamma.is_some() && overrides.gamma_frac.is_none() {
            merged.gamma_frac = None;
        }
        if overrides.gamma_frac.is_some() && overrides.gamma.is_none() {
            merged.gamma = None;
        }
        merged
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_file(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvSource {
    Random {
        states: usize,
        actions: usize,
        horizon: usize,
        env_seed: Option<u64>,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineSpec {
    Boltzmann { eta: f64 },
    Offline { behavior_eta: f64, n: usize, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    /// `γ = (1 − α)·V^{πb}`
    Fraction(f64),
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSource,
    pub baseline: BaselineSpec,
    pub algorithms: Vec<Algorithm>,
    pub threshold: Threshold,
    pub delta: f64,
    pub episodes: usize,
    pub trials: usize,
    pub root_seed: u64,
    pub bonus_scale: f64,
    pub resample_env: bool,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_file(f: &ConfigFile) -> Result<Self> {
        let env = match &f.env_file {
            Some(path) => {
                if f.states.is_some() || f.actions.is_some() || f.horizon.is_some() || f.env_seed.is_some() {
                    return Err(config_err(
                        "env_file cannot be combined with states, actions, horizon or env_seed",
                    ));
                }
                EnvSource::File(path.clone())
            }
            None => EnvSource::Random {
                states: f.states.unwrap_or(5),
                actions: f.actions.unwrap_or(5),
                horizon: f.horizon.unwrap_or(3),
                env_seed: f.env_seed,
            },
        };
        if let EnvSource::Random {
            states,
            actions,
            horizon,
            ..
        } = env
        {
            if states == 0 || actions == 0 || horizon == 0 {
                return Err(config_err(format!(
                    "states, actions and horizon must be positive (got {states}, {actions}, {horizon})"
                )));
            }
        }
        let eta = f.eta.unwrap_or(10.0);
        let check_eta = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(config_err(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )))
            }
        };
        let baseline = match f.baseline.as_deref().unwrap_or("boltzmann") {
            "boltzmann" => {
                if f.offline_n.is_some() || f.behavior_eta.is_some() || f.offline_c.is_some() {
                    return Err(config_err(
                        "offline_n, behavior_eta and offline_c require baseline = \"offline\"",
                    ));
                }
                BaselineSpec::Boltzmann {
                    eta: check_eta("eta", eta)?,
                }
            }
            "offline" => {
                let n = f
                    .offline_n
                    .ok_or_else(|| config_err("baseline = \"offline\" requires offline_n"))?;
                if n == 0 {
                    return Err(config_err("offline_n must be at least 1"));
                }
                let c = f.offline_c.unwrap_or(1.0);
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(config_err(format!("offline_c must be non-negative, got {c}")));
                }
                BaselineSpec::Offline {
                    behavior_eta: check_eta("behavior_eta", f.behavior_eta.unwrap_or(eta))?,
                    n,
                    c,
                }
            }
            other => {
                return Err(config_err(format!(
                    "unknown baseline `{other}` (expected boltzmann or offline)"
                )))
            }
        };
        let algorithms = match &f.algorithms {
            None => Algorithm::ALL.to_vec(),
            Some(names) => {
                let mut algs = Vec::new();
                for name in names {
                    let alg: Algorithm = name.parse()?;
                    if algs.contains(&alg) {
                        return Err(config_err(format!("algorithm `{alg}` listed twice")));
                    }
                    algs.push(alg);
                }
                algs
            }
        };
        if algorithms.is_empty() {
            return Err(config_err("at least one algorithm is required"));
        }
        let threshold = match (f.gamma, f.gamma_frac) {
            (Some(g), None) if g.is_finite() => Threshold::Absolute(g),
            (Some(g), None) => return Err(config_err(format!("gamma must be finite, got {g}"))),
            (None, Some(a)) if (0.0..=1.0).contains(&a) => Threshold::Fraction(a),
            (None, Some(a)) => return Err(config_err(format!("gamma_frac must lie in [0, 1], got {a}"))),
            (Some(_), Some(_)) => return Err(config_err("gamma and gamma_frac are mutually exclusive")),
            (None, None) => return Err(config_err("one of gamma or gamma_frac is required")),
        };
        let delta = f.delta.unwrap_or(0.1);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(config_err(format!("delta must lie in (0, 1), got {delta}")));
        }
        let episodes = f.episodes.unwrap_or(2000);
        let trials = f.trials.unwrap_or(10);
        if episodes == 0 || trials == 0 {
            return Err(config_err(format!(
                "episodes and trials must be at least 1 (got {episodes} and {trials})"
            )));
        }
        let bonus_scale = f.bonus_scale.unwrap_or(1.0);
        if !(bonus_scale > 0.0 && bonus_scale.is_finite()) {
            return Err(config_err(format!("bonus_scale must be positive, got {bonus_scale}")));
        }
        Ok(Self {
            env,
            baseline,
            algorithms,
            threshold,
            delta,
            episodes,
            trials,
            root_seed: f.root_seed.unwrap_or(0),
            bonus_scale,
            resample_env: f.resample_env.unwrap_or(true),
        })
    }
}

/// Environment-level facts about one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialInfo {
    pub trial: usize,
    /// Seed of the random environment; absent for pinned files.
    pub env_seed: Option<u64>,
    pub env_draws: usize,
    pub optimal_value: f64,
    pub baseline_value: f64,
    /// Value of the offline behaviour policy.
    pub behavior_value: Option<f64>,
    pub gamma: f64,
    /// `V^{πb} − γ`
    pub kappa: f64,
    /// `V* − V^{πb}`
    pub delta0: f64,
    pub baseline_warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Sorted by trial, then episode, then algorithm.
    pub logs: Vec<EpisodeLog>,
    pub trials: Vec<TrialInfo>,
    pub summary: Summary,
}

impl ExperimentResult {
    pub fn records(&self) -> Vec<EpisodeRecord> {
        self.logs.iter().map(|l| l.record.clone()).collect()
    }
}

struct Environment {
    mdp: TabularMdp,
    seed: Option<u64>,
    draws: usize,
}

impl ExperimentConfig {
    /// The policy whose value decides whether an environment is usable.
    fn reference_policy(&self, mdp: &TabularMdp) -> Result<StochasticPolicy> {
        match self.baseline {
            BaselineSpec::Boltzmann { eta } => boltzmann_baseline(mdp, eta),
            BaselineSpec::Offline { behavior_eta, .. } => boltzmann_baseline(mdp, behavior_eta),
        }
    }

    fn acceptable(&self, mdp: &TabularMdp) -> Result<bool> {
        match self.threshold {
            Threshold::Absolute(gamma) if self.resample_env => {
                Ok(expected_return(mdp, &self.reference_policy(mdp)?)? > gamma)
            }
            _ => Ok(true),
        }
    }

    fn draw_env(&self, mut next_seed: impl FnMut(usize) -> u64) -> Result<Environment> {
        let EnvSource::Random {
            states,
            actions,
            horizon,
            ..
        } = self.env
        else {
            unreachable!("draw_env is only called for random environments");
        };
        for draw in 0..MAX_ENV_DRAWS {
            let seed = next_seed(draw);
            let mdp = generate_random_mdp(states, actions, horizon, seed)?;
            if self.acceptable(&mdp)? {
                return Ok(Environment {
                    mdp,
                    seed: Some(seed),
                    draws: draw + 1,
                });
            }
        }
        Err(Error::Domain(format!(
            "no environment among {MAX_ENV_DRAWS} draws gives the reference policy a value above γ"
        )))
    }

    fn shared_env(&self) -> Result<Option<Environment>> {
        match &self.env {
            EnvSource::File(path) => {
                let mdp = load_mdp(path)?;
                Ok(Some(Environment {
                    mdp,
                    seed: None,
                    draws: 1,
                }))
            }
            EnvSource::Random {
                env_seed: Some(seed), ..
            } => self.draw_env(|draw| seed.wrapping_add(draw as u64)).map(Some),
            EnvSource::Random { env_seed: None, .. } => Ok(None),
        }
    }

    fn run_trial(&self, trial: usize, shared: Option<&Environment>) -> Result<(Vec<EpisodeLog>, TrialInfo)> {
        let seed = trial_seed(self.root_seed, trial);
        let owned;
        let env = match shared {
            Some(env) => env,
            None => {
                let mut rng = stream(seed, Stream::Environment);
                owned = self.draw_env(|_| rng.next_u64())?;
                &owned
            }
        };
        let mdp = &env.mdp;
        let reference = self.reference_policy(mdp)?;
        let (baseline, behavior_value) = match self.baseline {
            BaselineSpec::Boltzmann { .. } => (reference, None),
            BaselineSpec::Offline { n, c, .. } => {
                let mut rng = stream(seed, Stream::Offline);
                let data = collect_offline(mdp, &reference, n, &mut rng)?;
                let cfg = OfflineConfig::new(self.delta, c)?;
                (
                    vi_lcb(&data, mdp.shape(), mdp.rewards(), &cfg)?,
                    Some(expected_return(mdp, &reference)?),
                )
            }
        };
        let baseline_value = expected_return(mdp, &baseline)?;
        let gamma = match self.threshold {
            Threshold::Absolute(g) => g,
            Threshold::Fraction(alpha) => (1.0 - alpha) * baseline_value,
        };
        let agent_cfg = AgentConfig::new(gamma, self.delta, self.bonus_scale, baseline)?;
        let optimal_value = solve_optimal(mdp).0.initial(mdp.start_state());
        let mut logs = Vec::with_capacity(self.algorithms.len() * self.episodes);
        let mut baseline_warning = None;
        for &alg in &self.algorithms {
            let mut rollout_rng = stream(seed, Stream::Rollout(alg));
            let mut coin_rng = stream(seed, Stream::Coin(alg));
            let run = run_algorithm(alg, mdp, &agent_cfg, self.episodes, &mut rollout_rng, &mut coin_rng)?;
            baseline_warning = run.baseline_warning.clone();
            logs.extend(run.logs.into_iter().map(|mut l| {
                l.record.trial = trial;
                l
            }));
        }
        let info = TrialInfo {
            trial,
            env_seed: env.seed,
            env_draws: env.draws,
            optimal_value,
            baseline_value,
            behavior_value,
            gamma,
            kappa: baseline_value - gamma,
            delta0: optimal_value - baseline_value,
            baseline_warning,
        };
        Ok((logs, info))
    }
}

fn algorithm_rank(a: Algorithm) -> usize {
    Algorithm::ALL.iter().position(|&b| b == a).unwrap_or(usize::MAX)
}

/// Runs every trial (in parallel) and every requested algorithm within it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let shared = cfg.shared_env()?;
    let outputs = (0..cfg.trials)
        .into_par_iter()
        .map(|t| cfg.run_trial(t, shared.as_ref()))
        .collect::<Vec<_>>();
    let mut logs = Vec::with_capacity(cfg.trials * cfg.episodes * cfg.algorithms.len());
    let mut trials = Vec::with_capacity(cfg.trials);
    for out in outputs {
        let (l, info) = out?;
        logs.extend(l);
        trials.push(info);
    }
    logs.sort_by_key(|l| (l.record.trial, l.record.episode, algorithm_rank(l.record.algorithm)));
    let records: Vec<EpisodeRecord> = logs.iter().map(|l| l.record.clone()).collect();
    let summary = summarize_records(&records, trials.clone())?;
    Ok(ExperimentResult { logs, trials, summary })
}

/// Per-algorithm aggregates across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub trials: usize,
    pub episodes: usize,
    pub total_violations: usize,
    pub violations_per_trial: Vec<usize>,
    pub trials_with_violations: usize,
    /// Episodes in the final window (the last 10%, at least one).
    pub final_window_episodes: usize,
    /// Mean of `value` over the final window and all trials.
    pub final_window_mean_value: f64,
    /// `Reg(K)` averaged over trials.
    pub mean_final_regret: f64,
    pub final_regret_per_trial: Vec<f64>,
    /// Selection-kind tallies over all episodes and trials.
    pub kind_counts: BTreeMap<String, usize>,
    /// Mean of `value` over trials, one entry per episode.
    pub mean_value_per_episode: Vec<f64>,
    /// Mean of `cum_regret` over trials, one entry per episode.
    pub mean_regret_per_episode: Vec<f64>,
}

/// Contents of the summary JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub algorithms: BTreeMap<String, AlgorithmSummary>,
    /// Empty when the summary was rebuilt from CSV files alone.
    pub trials: Vec<TrialInfo>,
}

/// Aggregates records; every (algorithm, trial) series must cover episodes `1..=K` for a common `K`.
pub fn summarize_records(records: &[EpisodeRecord], trials: Vec<TrialInfo>) -> Result<Summary> {
    let mut by_alg: BTreeMap<Algorithm, BTreeMap<usize, Vec<&EpisodeRecord>>> = BTreeMap::new();
    for r in records {
        by_alg
            .entry(r.algorithm)
            .or_default()
            .entry(r.trial)
            .or_default()
            .push(r);
    }
    let mut algorithms = BTreeMap::new();
    for (alg, per_trial) in by_alg {
        let mut series: Vec<Vec<&EpisodeRecord>> = per_trial.into_values().collect();
        for s in &mut series {
            s.sort_by_key(|r| r.episode);
        }
        let episodes = series[0].len();
        for s in &series {
            let numbered = s.iter().enumerate().all(|(i, r)| r.episode == i + 1);
            if s.len() != episodes || !numbered {
                return Err(Error::Parameter(format!(
                    "{alg} trial {} does not cover episodes 1..={episodes} exactly once",
                    s[0].trial
                )));
            }
        }
        let n_trials = series.len() as f64;
        let window = episodes.div_ceil(10).max(1);
        let mut mean_value = vec![0.0; episodes];
        let mut mean_regret = vec![0.0; episodes];
        let mut kind_counts = BTreeMap::new();
        let mut window_sum = 0.0;
        for s in &series {
            for (k, r) in s.iter().enumerate() {
                mean_value[k] += r.value / n_trials;
                mean_regret[k] += r.cum_regret / n_trials;
                *kind_counts.entry(r.kind.as_str().to_string()).or_insert(0) += 1;
                if k >= episodes - window {
                    window_sum += r.value;
                }
            }
        }
        let violations_per_trial: Vec<usize> = series
            .iter()
            .map(|s| s.iter().filter(|r| r.violation).count())
            .collect();
        let final_regret_per_trial: Vec<f64> = series.iter().map(|s| s[episodes - 1].cum_regret).collect();
        algorithms.insert(
            alg.as_str().to_string(),
            AlgorithmSummary {
                trials: series.len(),
                episodes,
                total_violations: violations_per_trial.iter().sum(),
                trials_with_violations: violations_per_trial.iter().filter(|&&v| v > 0).count(),
                violations_per_trial,
                final_window_episodes: window,
                final_window_mean_value: window_sum / (window as f64 * n_trials),
                mean_final_regret: final_regret_per_trial.iter().sum::<f64>() / n_trials,
                final_regret_per_trial,
                kind_counts,
                mean_value_per_episode: mean_value,
                mean_regret_per_episode: mean_regret,
            },
        );
    }
    if algorithms.is_empty() {
        return Err(Error::Parameter("no records to summarize".into()));
    }
    Ok(Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        algorithms,
        trials,
    })
}

pub fn emit_summary_json(path: &Path, summary: &Summary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_summary_json(path: &Path) -> Result<Summary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(extra: &str) -> ExperimentConfig {
        let text = format!("states = 3\nactions = 2\nhorizon = 2\nepisodes = 5\ntrials = 2\ngamma_frac = 0.2\n{extra}");
        ConfigFile::from_toml_str(&text).unwrap().resolve().unwrap()
    }

    #[test]
    fn defaults_and_validation() {
        let cfg = ConfigFile::from_toml_str("gamma = 2.2").unwrap().resolve().unwrap();
        assert_eq!(cfg.episodes, 2000);
        assert_eq!(cfg.trials, 10);
        assert_eq!(cfg.algorithms, Algorithm::ALL.to_vec());
        assert_eq!(cfg.baseline, BaselineSpec::Boltzmann { eta: 10.0 });
        for bad in [
            "",
            "gamma = 1\ngamma_frac = 0.1",
            "gamma = 1\ntrials = 0",
            "gamma = 1\nalgorithms = []",
            "gamma = 1\nalgorithms = [\"ucbvi\"]",
            "gamma = 1\nbaseline = \"offline\"",
            "gamma = 1\ndelta = 1.5",
            "gamma = 1\nenv_file = \"x\"\nstates = 3",
        ] {
            let err = ConfigFile::from_toml_str(bad).and_then(|f| f.resolve()).unwrap_err();
            assert!(err.is_config(), "{bad:?} gave {err}");
        }
        let err = ConfigFile::from_toml_str("gamma = 1\nepisode = 3").unwrap_err();
        assert!(err.to_string().contains("episode"));
    }

    #[test]
    fn merge_prefers_overrides() {
        let file = ConfigFile::from_toml_str("gamma = 2.0\ntrials = 4").unwrap();
        let flags = ConfigFile {
            gamma_frac: Some(0.1),
            trials: Some(2),
            ..Default::default()
        };
        let merged = file.merge(flags);
        assert_eq!(merged.trials, Some(2));
        assert_eq!(merged.gamma, None);
        assert_eq!(merged.resolve().unwrap().threshold, Threshold::Fraction(0.1));
    }

    #[test]
    fn records_are_sorted_and_numbered() {
        let result = run_experiment(&small("")).unwrap();
        let records = result.records();
        assert_eq!(records.len(), 2 * 5 * 3);
        let keys: Vec<_> = records
            .iter()
            .map(|r| (r.trial, r.episode, algorithm_rank(r.algorithm)))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let s = &result.summary.algorithms["stepmix"];
        assert_eq!((s.trials, s.episodes, s.final_window_episodes), (2, 5, 1));
        assert_eq!(result.summary.trials.len(), 2);
    }

    #[test]
    fn shared_seed_reuses_environment() {
        let result = run_experiment(&small("env_seed = 11")).unwrap();
        assert!(result.trials.iter().all(|t| t.env_seed == Some(11) && t.env_draws == 1));
        let result = run_experiment(&small("")).unwrap();
        assert_ne!(result.trials[0].env_seed, result.trials[1].env_seed);
    }

    #[test]
    fn absolute_threshold_resamples() {
        let mut cfg = ExperimentConfig {
            threshold: Threshold::Absolute(1.2),
            ..small("")
        };
        let result = run_experiment(&cfg).unwrap();
        assert!(result.trials.iter().all(|t| t.baseline_value > 1.2 && t.kappa > 0.0));
        cfg.threshold = Threshold::Absolute(5.0);
        assert!(matches!(run_experiment(&cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn summary_rejects_ragged_series() {
        let result = run_experiment(&small("")).unwrap();
        let mut records = result.records();
        records.pop();
        assert!(summarize_records(&records, vec![]).is_err());
    }
}
