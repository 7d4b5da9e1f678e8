//! Finite-horizon tabular MDPs with known rewards.
//!
//! Steps are indexed `0..H` in code; step `h` here is step `h + 1` in the
//! usual one-based notation. Value tables carry an extra terminal row at
//! index `H` that is identically zero.

use ndarray::{s, Array2, Array3, Array4, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// Tolerance on the sum of every probability vector.
pub const PROB_TOL: f64 = 1e-12;

fn check_simplex(row: ArrayView1<f64>, what: impl FnOnce() -> String) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Probability(format!(
                "{}: entry {p} is not a probability",
                what()
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Probability(format!("{}: entries sum to {sum}", what())));
    }
    Ok(())
}

/// Draws an index from a probability vector with a single uniform draw.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: ArrayView1<f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    // u landed in the rounding slack above the final partial sum.
    last
}

/// Lowest index attaining the maximum.
pub(crate) fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Episodic MDP `(S, A, H, P, r, s1)` with time-inhomogeneous transitions and rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    /// `[h, s, a, s']`
    transitions: Array4<f64>,
    /// `[h, s, a]`, each in `[0, 1]`
    rewards: Array3<f64>,
    start_state: usize,
}

impl TabularMdp {
    pub fn new(transitions: Array4<f64>, rewards: Array3<f64>, start_state: usize) -> Result<Self> {
        let (h, s, a, s2) = transitions.dim();
        if h == 0 || s == 0 || a == 0 {
            return Err(Error::Dimension("S, A and H must all be positive".into()));
        }
        if s2 != s {
            return Err(Error::Dimension(format!(
                "transition tensor maps {s} states onto {s2} next states"
            )));
        }
        if rewards.dim() != (h, s, a) {
            return Err(Error::Dimension(format!(
                "reward tensor has shape {:?}, expected {:?}",
                rewards.dim(),
                (h, s, a)
            )));
        }
        if start_state >= s {
            return Err(Error::Parameter(format!(
                "start state {start_state} out of range for {s} states"
            )));
        }
        for ((hh, ss, aa), &r) in rewards.indexed_iter() {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Parameter(format!(
                    "reward r[{hh}][{ss}][{aa}] = {r} is outside [0, 1]"
                )));
            }
        }
        for hh in 0..h {
            for ss in 0..s {
                for aa in 0..a {
                    check_simplex(transitions.slice(s![hh, ss, aa, ..]), || format!("P[{hh}][{ss}][{aa}]"))?;
                }
            }
        }
        Ok(Self {
            transitions,
            rewards,
            start_state,
        })
    }

    pub fn num_states(&self) -> usize {
        self.rewards.dim().1
    }

    pub fn num_actions(&self) -> usize {
        self.rewards.dim().2
    }

    pub fn horizon(&self) -> usize {
        self.rewards.dim().0
    }

    pub fn start_state(&self) -> usize {
        self.start_state
    }

    pub fn shape(&self) -> Shape {
        Shape {
            states: self.num_states(),
            actions: self.num_actions(),
            horizon: self.horizon(),
        }
    }

    pub fn transitions(&self) -> &Array4<f64> {
        &self.transitions
    }

    pub fn rewards(&self) -> &Array3<f64> {
        &self.rewards
    }

    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> ArrayView1<'_, f64> {
        self.transitions.slice(s![h, s, a, ..])
    }
}

/// Dimensions shared by an MDP, its policies and its statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl Shape {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(Error::Parameter(format!(
                "S, A and H must all be positive (got S={states}, A={actions}, H={horizon})"
            )));
        }
        Ok(Self {
            states,
            actions,
            horizon,
        })
    }

    /// `S * A * H`, the number of step-indexed state-action tuples.
    pub fn tuples(&self) -> usize {
        self.states * self.actions * self.horizon
    }
}

/// Time-indexed action distributions `π_h(a|s)`, stored as `[h, s, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    probs: Array3<f64>,
}

impl StochasticPolicy {
    pub fn new(probs: Array3<f64>) -> Result<Self> {
        let (h, s, a) = probs.dim();
        if h == 0 || s == 0 || a == 0 {
            return Err(Error::Dimension("policy dimensions must be positive".into()));
        }
        for hh in 0..h {
            for ss in 0..s {
                check_simplex(probs.slice(s![hh, ss, ..]), || format!("pi[{hh}][{ss}]"))?;
            }
        }
        Ok(Self { probs })
    }

    pub(crate) fn new_unchecked(probs: Array3<f64>) -> Self {
        debug_assert!(Self::new(probs.clone()).is_ok());
        Self { probs }
    }

    pub fn uniform(shape: Shape) -> Self {
        let p = 1.0 / shape.actions as f64;
        Self {
            probs: Array3::from_elem((shape.horizon, shape.states, shape.actions), p),
        }
    }

    /// Point-mass policy from a `[h, s]` table of chosen actions.
    pub fn deterministic(actions: &Array2<usize>, num_actions: usize) -> Result<Self> {
        let (h, s) = actions.dim();
        let mut probs = Array3::zeros((h, s, num_actions));
        for ((hh, ss), &a) in actions.indexed_iter() {
            if a >= num_actions {
                return Err(Error::Parameter(format!(
                    "action {a} at ({hh}, {ss}) out of range for {num_actions} actions"
                )));
            }
            probs[[hh, ss, a]] = 1.0;
        }
        Self::new(probs)
    }

    pub fn horizon(&self) -> usize {
        self.probs.dim().0
    }

    pub fn num_states(&self) -> usize {
        self.probs.dim().1
    }

    pub fn num_actions(&self) -> usize {
        self.probs.dim().2
    }

    pub fn shape(&self) -> Shape {
        Shape {
            states: self.num_states(),
            actions: self.num_actions(),
            horizon: self.horizon(),
        }
    }

    pub fn probs(&self) -> &Array3<f64> {
        &self.probs
    }

    pub fn action_probs(&self, h: usize, s: usize) -> ArrayView1<'_, f64> {
        self.probs.slice(s![h, s, ..])
    }

    pub fn step(&self, h: usize) -> ArrayView2<'_, f64> {
        self.probs.slice(s![h, .., ..])
    }

    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        self.probs[[h, s, a]]
    }

    /// Follows `prefix` on steps `0..switch` and `suffix` from step `switch` on.
    pub fn splice(prefix: &Self, suffix: &Self, switch: usize) -> Result<Self> {
        ensure_same_shape(prefix, suffix)?;
        if switch > prefix.horizon() {
            return Err(Error::Parameter(format!(
                "switch step {switch} exceeds horizon {}",
                prefix.horizon()
            )));
        }
        let mut probs = suffix.probs.clone();
        probs
            .slice_mut(s![..switch, .., ..])
            .assign(&prefix.probs.slice(s![..switch, .., ..]));
        Ok(Self { probs })
    }

    pub(crate) fn check_against(&self, shape: Shape) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::Dimension(format!(
                "policy has shape {:?}, environment has {:?}",
                self.shape(),
                shape
            )));
        }
        Ok(())
    }
}

fn ensure_same_shape(a: &StochasticPolicy, b: &StochasticPolicy) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "policies have shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// State values `[h, s]` (with terminal row `H`) and action values `[h, s, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub v: Array2<f64>,
    pub q: Array3<f64>,
}

impl ValueTable {
    /// `V_1(s)` in one-based notation.
    pub fn initial(&self, s: usize) -> f64 {
        self.v[[0, s]]
    }
}

/// Occupancy measure `d_h(s, a)`, stored as `[h, s, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    pub d: Array3<f64>,
}

impl OccupancyTable {
    /// `Σ_{h,s,a} d_h(s,a) r_h(s,a)`, which equals the policy's expected return.
    pub fn weighted_reward(&self, rewards: &Array3<f64>) -> f64 {
        (&self.d * rewards).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
    pub episode: usize,
}

impl Trajectory {
    /// Checks length, chaining and the start state against an MDP shape.
    pub fn validate(&self, shape: Shape, start_state: usize) -> Result<()> {
        if self.steps.len() != shape.horizon {
            return Err(Error::Dimension(format!(
                "trajectory has {} steps, horizon is {}",
                self.steps.len(),
                shape.horizon
            )));
        }
        if self.steps[0].state != start_state {
            return Err(Error::Parameter(format!(
                "trajectory starts in {} instead of {start_state}",
                self.steps[0].state
            )));
        }
        for (h, t) in self.steps.iter().enumerate() {
            if t.state >= shape.states || t.next_state >= shape.states || t.action >= shape.actions {
                return Err(Error::Dimension(format!("step {h} is out of range: {t:?}")));
            }
            if let Some(next) = self.steps.get(h + 1) {
                if next.state != t.next_state {
                    return Err(Error::Parameter(format!(
                        "step {h} ends in {} but step {} starts in {}",
                        t.next_state,
                        h + 1,
                        next.state
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Random instance: rewards uniform on `[0, 1]`, each transition row uniform on the simplex.
///
/// Rows are drawn as `S` unit-exponential variates normalized by their sum. All rewards
/// are drawn before any transition row. The start state is 0.
pub fn generate_random_mdp(states: usize, actions: usize, horizon: usize, seed: u64) -> Result<TabularMdp> {
    let shape = Shape::new(states, actions, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards = Array3::from_shape_simple_fn((shape.horizon, shape.states, shape.actions), || rng.random::<f64>());
    let mut transitions = Array4::zeros((shape.horizon, shape.states, shape.actions, shape.states));
    for mut row in transitions.lanes_mut(ndarray::Axis(3)) {
        for p in row.iter_mut() {
            *p = Exp1.sample(&mut rng);
        }
        let total: f64 = row.sum();
        row.mapv_inplace(|x| x / total);
    }
    TabularMdp::new(transitions, rewards, 0)
}

fn expected_next(mdp: &TabularMdp, h: usize, s: usize, a: usize, v_next: ArrayView1<f64>) -> f64 {
    mdp.transition_row(h, s, a).dot(&v_next)
}

/// Backward induction for `Q*` and `V*`; the returned policy is greedy with lowest-index ties.
pub fn solve_optimal(mdp: &TabularMdp) -> (ValueTable, StochasticPolicy) {
    let Shape {
        states,
        actions,
        horizon,
    } = mdp.shape();
    let mut v = Array2::zeros((horizon + 1, states));
    let mut q = Array3::zeros((horizon, states, actions));
    let mut choice = Array2::zeros((horizon, states));
    for h in (0..horizon).rev() {
        for s in 0..states {
            for a in 0..actions {
                q[[h, s, a]] = mdp.rewards[[h, s, a]] + expected_next(mdp, h, s, a, v.row(h + 1));
            }
            let best = argmax(q.slice(s![h, s, ..]));
            choice[[h, s]] = best;
            v[[h, s]] = q[[h, s, best]];
        }
    }
    let policy = StochasticPolicy::deterministic(&choice, actions).expect("argmax is in range");
    (ValueTable { v, q }, policy)
}

/// Exact `V^π` and `Q^π` under the true kernel.
pub fn evaluate_policy(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<ValueTable> {
    let shape = mdp.shape();
    policy.check_against(shape)?;
    let Shape {
        states,
        actions,
        horizon,
    } = shape;
    let mut v = Array2::zeros((horizon + 1, states));
    let mut q = Array3::zeros((horizon, states, actions));
    for h in (0..horizon).rev() {
        for s in 0..states {
            let mut acc = 0.0;
            for a in 0..actions {
                let qa = mdp.rewards[[h, s, a]] + expected_next(mdp, h, s, a, v.row(h + 1));
                q[[h, s, a]] = qa;
                acc += policy.prob(h, s, a) * qa;
            }
            v[[h, s]] = acc;
        }
    }
    Ok(ValueTable { v, q })
}

/// `V_1^π(s1)`, the exact expected return of one episode.
pub fn expected_return(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<f64> {
    Ok(evaluate_policy(mdp, policy)?.initial(mdp.start_state()))
}

/// Forward recursion for the occupancy measure of `policy` from `s1`.
pub fn occupancy_measure(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<OccupancyTable> {
    let shape = mdp.shape();
    policy.check_against(shape)?;
    let Shape {
        states,
        actions,
        horizon,
    } = shape;
    let mut d = Array3::zeros((horizon, states, actions));
    let s1 = mdp.start_state();
    for a in 0..actions {
        d[[0, s1, a]] = policy.prob(0, s1, a);
    }
    for h in 0..horizon - 1 {
        let mut state_mass = vec![0.0; states];
        for s in 0..states {
            for a in 0..actions {
                let w = d[[h, s, a]];
                if w == 0.0 {
                    continue;
                }
                for (next, &p) in mdp.transition_row(h, s, a).iter().enumerate() {
                    state_mass[next] += p * w;
                }
            }
        }
        for (next, &m) in state_mass.iter().enumerate() {
            for a in 0..actions {
                d[[h + 1, next, a]] = policy.prob(h + 1, next, a) * m;
            }
        }
    }
    Ok(OccupancyTable { d })
}

/// Step mixture: `ρ π1_h(·|s) + (1 − ρ) π2_h(·|s)` at every `(h, s)`.
pub fn step_mix(pi1: &StochasticPolicy, pi2: &StochasticPolicy, rho: f64) -> Result<StochasticPolicy> {
    ensure_same_shape(pi1, pi2)?;
    check_weight(rho)?;
    let probs = &pi1.probs * rho + &pi2.probs * (1.0 - rho);
    Ok(StochasticPolicy::new_unchecked(probs))
}

/// Exact value of the episodic mixture that runs `pi1` for the whole episode
/// with probability `rho` and `pi2` otherwise.
pub fn episodic_mixture_value(
    mdp: &TabularMdp,
    pi1: &StochasticPolicy,
    pi2: &StochasticPolicy,
    rho: f64,
) -> Result<f64> {
    check_weight(rho)?;
    Ok(rho * expected_return(mdp, pi1)? + (1.0 - rho) * expected_return(mdp, pi2)?)
}

/// Occupancy measure of the same episodic mixture.
pub fn episodic_mixture_occupancy(
    mdp: &TabularMdp,
    pi1: &StochasticPolicy,
    pi2: &StochasticPolicy,
    rho: f64,
) -> Result<OccupancyTable> {
    check_weight(rho)?;
    let d1 = occupancy_measure(mdp, pi1)?.d;
    let d2 = occupancy_measure(mdp, pi2)?.d;
    Ok(OccupancyTable {
        d: d1 * rho + d2 * (1.0 - rho),
    })
}

fn check_weight(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("mixture weight {rho} is outside [0, 1]")))
    }
}

/// Samples one episode under `policy`, starting from `s1`.
pub fn rollout<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    rng: &mut R,
    episode: usize,
) -> Trajectory {
    let mut state = mdp.start_state();
    let steps = (0..mdp.horizon())
        .map(|h| {
            let action = sample_index(policy.action_probs(h, state), rng);
            let next_state = sample_index(mdp.transition_row(h, state, action), rng);
            let t = Transition {
                state,
                action,
                next_state,
            };
            state = next_state;
            t
        })
        .collect();
    Trajectory { steps, episode }
}

/// Softmax of `η Q*_h(s, ·)` at every `(h, s)`, computed with max subtraction.
pub fn boltzmann_baseline(mdp: &TabularMdp, eta: f64) -> Result<StochasticPolicy> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Parameter(format!(
            "temperature parameter η = {eta} must be finite and ≥ 0"
        )));
    }
    let (optimal, _) = solve_optimal(mdp);
    Ok(softmax_policy(&optimal.q, eta))
}

pub(crate) fn softmax_policy(q: &Array3<f64>, eta: f64) -> StochasticPolicy {
    let mut probs = q.clone();
    for mut row in probs.lanes_mut(ndarray::Axis(2)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (eta * (x - max)).exp());
        let total = row.sum();
        row.mapv_inplace(|x| x / total);
    }
    StochasticPolicy::new_unchecked(probs)
}
