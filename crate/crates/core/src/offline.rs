//! Offline pessimistic value iteration (VI-LCB) and the offline-to-online pipeline.
//!
//! The dataset is split into `H` buckets; the step-`h` kernel is estimated
//! from bucket `h` alone, which keeps the per-step estimates independent.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{run_algorithm, AgentConfig, AgentRun};
use crate::error::{Error, Result};
use crate::mdp::{argmax, rollout, Shape, StochasticPolicy, TabularMdp, Trajectory, Transition};
use crate::model::{estimate_transitions, CountTable};
use crate::record::Algorithm;

/// Trajectories logged under a behaviour policy, each assigned to one step bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfflineDataset {
    pub trajectories: Vec<Trajectory>,
    /// Bucket of each trajectory, in `0..H`.
    pub buckets: Vec<usize>,
}

impl OfflineDataset {
    pub fn new(trajectories: Vec<Trajectory>, buckets: Vec<usize>) -> Result<Self> {
        if trajectories.len() != buckets.len() {
            return Err(Error::Dimension(format!(
                "{} trajectories but {} bucket labels",
                trajectories.len(),
                buckets.len()
            )));
        }
        Ok(Self { trajectories, buckets })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn bucket_sizes(&self, horizon: usize) -> Vec<usize> {
        let mut sizes = vec![0; horizon];
        for &b in &self.buckets {
            if b < horizon {
                sizes[b] += 1;
            }
        }
        sizes
    }

    /// Trajectories assigned to bucket `h`.
    pub fn bucket(&self, h: usize) -> impl Iterator<Item = &Trajectory> {
        self.trajectories
            .iter()
            .zip(&self.buckets)
            .filter(move |(_, &b)| b == h)
            .map(|(t, _)| t)
    }

    pub fn validate(&self, shape: Shape) -> Result<()> {
        if let Some(&b) = self.buckets.iter().find(|&&b| b >= shape.horizon) {
            return Err(Error::Dimension(format!("bucket {b} is outside 0..{}", shape.horizon)));
        }
        for t in &self.trajectories {
            let start = t.steps.first().map_or(0, |s| s.state);
            t.validate(shape, start)?;
        }
        Ok(())
    }
}

/// Rolls out `behavior` `n` times and assigns the trajectories to `H`
/// buckets whose sizes differ by at most one.
pub fn collect_offline<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    behavior: &StochasticPolicy,
    n: usize,
    rng: &mut R,
) -> Result<OfflineDataset> {
    if n == 0 {
        return Err(Error::Parameter("offline dataset needs at least one trajectory".into()));
    }
    behavior.check_against(mdp.shape())?;
    let horizon = mdp.horizon();
    let trajectories = (0..n).map(|i| rollout(mdp, behavior, rng, i)).collect();
    let mut buckets: Vec<usize> = (0..n).map(|i| i % horizon).collect();
    buckets.shuffle(rng);
    Ok(OfflineDataset { trajectories, buckets })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineConfig {
    pub delta: f64,
    /// Bonus constant `c`.
    pub c: f64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self { delta: 0.1, c: 1.0 }
    }
}

impl OfflineConfig {
    pub fn new(delta: f64, c: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Parameter(format!("δ = {delta} must lie in (0, 1)")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Parameter(format!("bonus constant c = {c} must be non-negative")));
        }
        Ok(Self { delta, c })
    }

    /// `ι = log(2HSA/δ)`: the offline stage spends half of `δ`.
    pub fn iota(&self, shape: Shape) -> f64 {
        (2.0 * shape.tuples() as f64 / self.delta).ln()
    }

    /// `b = c√(H²ι/(n ∨ 1))`
    pub fn bonus(&self, shape: Shape, n: u64) -> f64 {
        let h = shape.horizon as f64;
        self.c * (h * h * self.iota(shape) / n.max(1) as f64).sqrt()
    }

    /// `2cι√(H⁵SA/n)`, the value gap to the behaviour policy that VI-LCB guarantees.
    pub fn gap_bound(&self, shape: Shape, n: usize) -> f64 {
        let h = shape.horizon as f64;
        let sa = (shape.states * shape.actions) as f64;
        2.0 * self.c * self.iota(shape) * (h.powi(5) * sa / n as f64).sqrt()
    }
}

/// Counts where layer `h` holds only the step-`h` transitions of bucket `h`.
pub fn bucket_counts(data: &OfflineDataset, shape: Shape) -> Result<CountTable> {
    data.validate(shape)?;
    let mut counts = CountTable::new(shape);
    for (traj, &b) in data.trajectories.iter().zip(&data.buckets) {
        counts.record_step(b, traj.steps[b]);
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VilcbOutput {
    pub q: Array3<f64>,
    /// `[h, s]` with a zero terminal row.
    pub v: Array2<f64>,
    pub policy: StochasticPolicy,
}

pub fn vi_lcb_details(
    data: &OfflineDataset,
    shape: Shape,
    rewards: &Array3<f64>,
    cfg: &OfflineConfig,
) -> Result<VilcbOutput> {
    if rewards.dim() != (shape.horizon, shape.states, shape.actions) {
        return Err(Error::Dimension(format!(
            "reward tensor {:?} does not match {shape:?}",
            rewards.dim()
        )));
    }
    let model = estimate_transitions(&bucket_counts(data, shape)?);
    let mut q = Array3::zeros((shape.horizon, shape.states, shape.actions));
    let mut v = Array2::zeros((shape.horizon + 1, shape.states));
    let mut choice = Array2::zeros((shape.horizon, shape.states));
    for h in (0..shape.horizon).rev() {
        let v_next = v.row(h + 1).to_owned();
        for s in 0..shape.states {
            for a in 0..shape.actions {
                let b = cfg.bonus(shape, model.visit(h, s, a));
                q[[h, s, a]] = (rewards[[h, s, a]] + model.row(h, s, a).dot(&v_next) - b).max(0.0);
            }
            let best = argmax(q.slice(s![h, s, ..]));
            choice[[h, s]] = best;
            v[[h, s]] = q[[h, s, best]];
        }
    }
    let policy = StochasticPolicy::deterministic(&choice, shape.actions)?;
    Ok(VilcbOutput { q, v, policy })
}

/// The greedy policy on the pessimistic action values, as a point-mass policy.
pub fn vi_lcb(
    data: &OfflineDataset,
    shape: Shape,
    rewards: &Array3<f64>,
    cfg: &OfflineConfig,
) -> Result<StochasticPolicy> {
    vi_lcb_details(data, shape, rewards, cfg).map(|o| o.policy)
}

/// `⌈16c²ι²H⁵SA/(V_μ − γ)²⌉`, the dataset size after which the extracted
/// policy is worth at least `(V_μ + γ)/2`.
pub fn required_offline_samples(
    states: usize,
    actions: usize,
    horizon: usize,
    v_mu: f64,
    gamma: f64,
    cfg: &OfflineConfig,
) -> Result<u64> {
    let shape = Shape::new(states, actions, horizon)?;
    let margin = v_mu - gamma;
    if margin.is_nan() || margin <= 0.0 {
        return Err(Error::Domain(format!(
            "behaviour value {v_mu} does not exceed γ = {gamma}; no dataset size suffices"
        )));
    }
    let iota = cfg.iota(shape);
    let need =
        16.0 * cfg.c * cfg.c * iota * iota * (horizon as f64).powi(5) * (states * actions) as f64 / (margin * margin);
    if need > u64::MAX as f64 {
        return Err(Error::Domain(format!("required sample size {need:e} overflows")));
    }
    Ok(need.ceil() as u64)
}

/// Output of the offline-to-online pipeline.
#[derive(Debug, Clone)]
pub struct OfflineRun {
    pub dataset_size: usize,
    pub extracted: StochasticPolicy,
    pub run: AgentRun,
}

/// Collects `n` trajectories under `behavior`, extracts a baseline with
/// VI-LCB and runs `algorithm` with it. `online.baseline` is replaced.
#[allow(clippy::too_many_arguments)]
pub fn offline_to_online<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    behavior: &StochasticPolicy,
    n: usize,
    offline: &OfflineConfig,
    online: &AgentConfig,
    algorithm: Algorithm,
    episodes: usize,
    rng: &mut R,
) -> Result<OfflineRun> {
    let data = collect_offline(mdp, behavior, n, rng)?;
    let extracted = vi_lcb(&data, mdp.shape(), mdp.rewards(), offline)?;
    let mut cfg = online.clone();
    cfg.baseline = extracted.clone();
    let mut rollout_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut coin_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let run = run_algorithm(algorithm, mdp, &cfg, episodes, &mut rollout_rng, &mut coin_rng)?;
    Ok(OfflineRun {
        dataset_size: n,
        extracted,
        run,
    })
}

const DATASET_KIND: &str = "offline-dataset";

/// Text encoding: `key = value` header lines, then one line per trajectory
/// holding its bucket followed by tab-separated `s a s'` triples.
pub fn write_dataset(data: &OfflineDataset, shape: Shape) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kind = {DATASET_KIND}");
    let _ = writeln!(out, "version = {}", crate::textfmt::FORMAT_VERSION);
    let _ = writeln!(out, "states = {}", shape.states);
    let _ = writeln!(out, "actions = {}", shape.actions);
    let _ = writeln!(out, "horizon = {}", shape.horizon);
    let _ = writeln!(out, "trajectories = {}", data.len());
    for (traj, b) in data.trajectories.iter().zip(&data.buckets) {
        out.push_str(&b.to_string());
        for t in &traj.steps {
            let _ = write!(out, "\t{} {} {}", t.state, t.action, t.next_state);
        }
        out.push('\n');
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<(Shape, OfflineDataset)> {
    let mut header = std::collections::HashMap::new();
    let mut trajectories = Vec::new();
    let mut buckets = Vec::new();
    let bad = |line: usize, msg: String| Error::Parse { line, msg };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            if !trajectories.is_empty() {
                return Err(bad(line_no, "header key after trajectory lines".into()));
            }
            if header
                .insert(k.trim().to_string(), (line_no, v.trim().to_string()))
                .is_some()
            {
                return Err(bad(line_no, format!("duplicate key `{}`", k.trim())));
            }
            continue;
        }
        let mut fields = raw.split('\t');
        let bucket = fields
            .next()
            .and_then(|b| b.trim().parse::<usize>().ok())
            .ok_or_else(|| bad(line_no, "missing bucket index".into()))?;
        let steps = fields
            .map(|f| {
                let v: Vec<usize> = f
                    .split_whitespace()
                    .map(|x| x.parse().map_err(|_| bad(line_no, format!("invalid integer {x:?}"))))
                    .collect::<Result<_>>()?;
                match v.as_slice() {
                    &[state, action, next_state] => Ok(Transition {
                        state,
                        action,
                        next_state,
                    }),
                    _ => Err(bad(line_no, format!("expected a triple `s a s'`, got {f:?}"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        trajectories.push(Trajectory {
            steps,
            episode: trajectories.len(),
        });
        buckets.push(bucket);
    }
    let get = |key: &str| -> Result<(usize, &str)> {
        header
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| bad(0, format!("missing key `{key}`")))
    };
    let (line, kind) = get("kind")?;
    if kind != DATASET_KIND {
        return Err(bad(line, format!("expected kind `{DATASET_KIND}`, found `{kind}`")));
    }
    let number = |key: &str| -> Result<usize> {
        let (line, v) = get(key)?;
        v.parse()
            .map_err(|_| bad(line, format!("`{key}` must be a non-negative integer, got {v:?}")))
    };
    let version = number("version")?;
    if version != crate::textfmt::FORMAT_VERSION as usize {
        return Err(bad(get("version")?.0, format!("unsupported version {version}")));
    }
    let shape = Shape::new(number("states")?, number("actions")?, number("horizon")?)?;
    let declared = number("trajectories")?;
    if declared != trajectories.len() {
        return Err(bad(
            get("trajectories")?.0,
            format!("declares {declared} trajectories, found {}", trajectories.len()),
        ));
    }
    let data = OfflineDataset::new(trajectories, buckets)?;
    data.validate(shape)?;
    Ok((shape, data))
}

pub fn save_dataset(path: &Path, data: &OfflineDataset, shape: Shape) -> Result<()> {
    std::fs::write(path, write_dataset(data, shape)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<(Shape, OfflineDataset)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{boltzmann_baseline, expected_return, generate_random_mdp, solve_optimal};
    use ndarray::Array4;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn buckets_are_balanced() {
        let mdp = generate_random_mdp(3, 2, 3, 1).unwrap();
        let mu = StochasticPolicy::uniform(mdp.shape());
        let data = collect_offline(&mdp, &mu, 3, &mut rng(0)).unwrap();
        assert_eq!(data.bucket_sizes(3), vec![1, 1, 1]);
        let data = collect_offline(&mdp, &mu, 100, &mut rng(0)).unwrap();
        let sizes = data.bucket_sizes(3);
        assert_eq!(sizes.iter().sum::<usize>(), 100);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(collect_offline(&mdp, &mu, 0, &mut rng(0)).is_err());
    }

    #[test]
    fn deterministic_environment_gives_identical_trajectories() {
        let mut p = Array4::zeros((2, 2, 2, 2));
        for h in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    p[[h, s, a, a]] = 1.0;
                }
            }
        }
        let mdp = TabularMdp::new(p, Array3::from_elem((2, 2, 2), 0.5), 0).unwrap();
        let mu = StochasticPolicy::deterministic(&Array2::from_elem((2, 2), 1), 2).unwrap();
        let data = collect_offline(&mdp, &mu, 10, &mut rng(3)).unwrap();
        assert!(data.trajectories.iter().all(|t| t.steps == data.trajectories[0].steps));
    }

    #[test]
    fn bucket_counts_match_pooled_layer() {
        let mdp = generate_random_mdp(4, 2, 3, 2).unwrap();
        let mu = StochasticPolicy::uniform(mdp.shape());
        let data = collect_offline(&mdp, &mu, 50, &mut rng(1)).unwrap();
        let counts = bucket_counts(&data, mdp.shape()).unwrap();
        for h in 0..3 {
            let pooled = CountTable::from_trajectories(mdp.shape(), data.bucket(h)).unwrap();
            assert_eq!(
                counts.visits().slice(s![h, .., ..]),
                pooled.visits().slice(s![h, .., ..])
            );
            assert_eq!(
                counts.next_visits().slice(s![h, .., .., ..]),
                pooled.next_visits().slice(s![h, .., .., ..])
            );
        }
    }

    #[test]
    fn no_data_is_fully_pessimistic() {
        let mdp = generate_random_mdp(3, 2, 3, 4).unwrap();
        let data = OfflineDataset::new(vec![], vec![]).unwrap();
        let out = vi_lcb_details(&data, mdp.shape(), mdp.rewards(), &OfflineConfig::default()).unwrap();
        assert!(out.q.iter().all(|&q| q == 0.0));
        assert_eq!(
            out.policy,
            StochasticPolicy::deterministic(&Array2::zeros((3, 3)), 2).unwrap()
        );
    }

    #[test]
    fn single_action_policy_is_forced() {
        let mdp = generate_random_mdp(3, 1, 2, 5).unwrap();
        let data = collect_offline(&mdp, &StochasticPolicy::uniform(mdp.shape()), 20, &mut rng(5)).unwrap();
        let pi = vi_lcb(&data, mdp.shape(), mdp.rewards(), &OfflineConfig::default()).unwrap();
        assert!(pi.probs().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn values_stay_within_range() {
        let mdp = generate_random_mdp(4, 3, 3, 6).unwrap();
        let mu = boltzmann_baseline(&mdp, 2.0).unwrap();
        let data = collect_offline(&mdp, &mu, 5000, &mut rng(6)).unwrap();
        let out = vi_lcb_details(
            &data,
            mdp.shape(),
            mdp.rewards(),
            &OfflineConfig::new(0.1, 0.05).unwrap(),
        )
        .unwrap();
        assert!(out.q.iter().all(|&q| (0.0..=3.0).contains(&q)));
    }

    #[test]
    fn large_dataset_recovers_near_optimal_policy() {
        let mdp = generate_random_mdp(3, 2, 3, 7).unwrap();
        let mu = StochasticPolicy::uniform(mdp.shape());
        let data = collect_offline(&mdp, &mu, 300_000, &mut rng(7)).unwrap();
        let pi = vi_lcb(
            &data,
            mdp.shape(),
            mdp.rewards(),
            &OfflineConfig::new(0.1, 0.01).unwrap(),
        )
        .unwrap();
        let v_star = solve_optimal(&mdp).0.initial(0);
        assert!(v_star - expected_return(&mdp, &pi).unwrap() < 0.02);
    }

    #[test]
    fn required_samples_scaling() {
        let cfg = OfflineConfig::new(0.1, 1.0).unwrap();
        let a = required_offline_samples(5, 5, 3, 2.5, 2.0, &cfg).unwrap();
        let b = required_offline_samples(5, 5, 3, 3.0, 2.0, &cfg).unwrap();
        assert_eq!(a, 20_794_266);
        assert!((a as f64 / b as f64 - 4.0).abs() < 1e-6);
        let zero = OfflineConfig::new(0.1, 0.0).unwrap();
        assert_eq!(required_offline_samples(5, 5, 3, 2.5, 2.0, &zero).unwrap(), 0);
        assert!(matches!(
            required_offline_samples(5, 5, 3, 2.0, 2.0, &cfg),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn dataset_text_round_trip() {
        let mdp = generate_random_mdp(3, 2, 3, 8).unwrap();
        let data = collect_offline(&mdp, &StochasticPolicy::uniform(mdp.shape()), 7, &mut rng(8)).unwrap();
        let text = write_dataset(&data, mdp.shape());
        assert!(text.lines().nth(6).unwrap().contains('\t'));
        let (shape, back) = parse_dataset(&text).unwrap();
        assert_eq!(shape, mdp.shape());
        assert_eq!(back, data);
        assert!(parse_dataset(&text.replace("trajectories = 7", "trajectories = 8")).is_err());
        assert!(parse_dataset(&text.replacen("\t", "\t9 ", 1)).is_err());
    }
}
