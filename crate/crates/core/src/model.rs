//! Visit counts, the empirical transition kernel and the logarithmic
//! confidence terms shared by every bound recursion.

use std::f64::consts::E;

use ndarray::{s, Array3, Array4, ArrayView1};

use crate::error::{Error, Result};
use crate::mdp::{Shape, TabularMdp, Trajectory, Transition};

/// Per-step visit counts `n_h(s,a)` and transition counts `n_h(s,a,s')`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    visits: Array3<u64>,
    next_visits: Array4<u64>,
    episodes: u64,
}

impl CountTable {
    pub fn new(shape: Shape) -> Self {
        Self {
            visits: Array3::zeros((shape.horizon, shape.states, shape.actions)),
            next_visits: Array4::zeros((shape.horizon, shape.states, shape.actions, shape.states)),
            episodes: 0,
        }
    }

    pub fn shape(&self) -> Shape {
        let (horizon, states, actions) = self.visits.dim();
        Shape {
            states,
            actions,
            horizon,
        }
    }

    /// Adds the `H` transitions of one episode.
    pub fn update(&mut self, traj: &Trajectory) -> Result<()> {
        let shape = self.shape();
        if traj.steps.len() != shape.horizon {
            return Err(Error::Dimension(format!(
                "trajectory has {} steps, horizon is {}",
                traj.steps.len(),
                shape.horizon
            )));
        }
        if let Some(t) = traj
            .steps
            .iter()
            .find(|t| t.state >= shape.states || t.next_state >= shape.states || t.action >= shape.actions)
        {
            return Err(Error::Dimension(format!(
                "transition {t:?} is out of range for {shape:?}"
            )));
        }
        for (h, t) in traj.steps.iter().enumerate() {
            self.visits[[h, t.state, t.action]] += 1;
            self.next_visits[[h, t.state, t.action, t.next_state]] += 1;
        }
        self.episodes += 1;
        Ok(())
    }

    /// Adds a single step-`h` transition without counting an episode.
    pub(crate) fn record_step(&mut self, h: usize, t: Transition) {
        self.visits[[h, t.state, t.action]] += 1;
        self.next_visits[[h, t.state, t.action, t.next_state]] += 1;
    }

    pub fn from_trajectories<'a>(shape: Shape, trajs: impl IntoIterator<Item = &'a Trajectory>) -> Result<Self> {
        let mut counts = Self::new(shape);
        for t in trajs {
            counts.update(t)?;
        }
        Ok(counts)
    }

    pub fn visits(&self) -> &Array3<u64> {
        &self.visits
    }

    pub fn next_visits(&self) -> &Array4<u64> {
        &self.next_visits
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }
}

/// Frequency estimate of the kernel together with the counts it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    p_hat: Array4<f64>,
    visits: Array3<u64>,
}

impl EmpiricalModel {
    /// Builds a model from an explicit kernel and visit counts, bypassing estimation.
    ///
    /// Used to study the bounds at prescribed sample sizes.
    pub fn from_parts(p_hat: Array4<f64>, visits: Array3<u64>) -> Result<Self> {
        let (h, s, a, s2) = p_hat.dim();
        if s2 != s || visits.dim() != (h, s, a) {
            return Err(Error::Dimension(format!(
                "kernel shape {:?} does not match count shape {:?}",
                p_hat.dim(),
                visits.dim()
            )));
        }
        for row in p_hat.lanes(ndarray::Axis(3)) {
            let sum: f64 = row.sum();
            if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > crate::mdp::PROB_TOL {
                return Err(Error::Probability(format!("kernel row {row} is not a distribution")));
            }
        }
        Ok(Self { p_hat, visits })
    }

    pub fn shape(&self) -> Shape {
        let (horizon, states, actions) = self.visits.dim();
        Shape {
            states,
            actions,
            horizon,
        }
    }

    pub fn p_hat(&self) -> &Array4<f64> {
        &self.p_hat
    }

    pub fn visits(&self) -> &Array3<u64> {
        &self.visits
    }

    pub fn visit(&self, h: usize, s: usize, a: usize) -> u64 {
        self.visits[[h, s, a]]
    }

    pub fn row(&self, h: usize, s: usize, a: usize) -> ArrayView1<'_, f64> {
        self.p_hat.slice(s![h, s, a, ..])
    }
}

/// `P̂_h(s'|s,a) = n_h(s,a,s') / n_h(s,a)` when `n_h(s,a) ≥ 1`, uniform otherwise.
pub fn estimate_transitions(counts: &CountTable) -> EmpiricalModel {
    let shape = counts.shape();
    let uniform = 1.0 / shape.states as f64;
    let mut p_hat = Array4::zeros(counts.next_visits.dim());
    for ((h, s, a), &n) in counts.visits.indexed_iter() {
        let mut row = p_hat.slice_mut(s![h, s, a, ..]);
        if n == 0 {
            row.fill(uniform);
        } else {
            let n = n as f64;
            for (p, &c) in row.iter_mut().zip(counts.next_visits.slice(s![h, s, a, ..])) {
                *p = c as f64 / n;
            }
        }
    }
    EmpiricalModel {
        p_hat,
        visits: counts.visits.clone(),
    }
}

/// Parameters of the logarithmic confidence terms.
///
/// `scale` multiplies every term. At 1.0 the terms are the ones that make
/// the concentration events hold with probability `1 − δ'`; other values
/// are an empirical tuning knob with no such guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonusParams {
    pub shape: Shape,
    pub delta_prime: f64,
    pub scale: f64,
}

impl BonusParams {
    pub fn new(shape: Shape, delta_prime: f64, scale: f64) -> Result<Self> {
        if !(delta_prime > 0.0 && delta_prime < 1.0) {
            return Err(Error::Parameter(format!("δ' = {delta_prime} must lie in (0, 1)")));
        }
        Self::unchecked(shape, delta_prime, scale)
    }

    /// Skips the `δ' < 1` check; only for exercising degenerate closed forms.
    pub fn unchecked(shape: Shape, delta_prime: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Parameter(format!("bonus scale {scale} must be positive")));
        }
        if delta_prime.is_nan() || delta_prime <= 0.0 {
            return Err(Error::Parameter(format!("δ' = {delta_prime} must be positive")));
        }
        Ok(Self {
            shape,
            delta_prime,
            scale,
        })
    }

    fn log_tuples(&self) -> f64 {
        (self.shape.tuples() as f64 / self.delta_prime).ln()
    }

    fn log_count(n: u64) -> f64 {
        (8.0 * E * (n as f64 + 1.0)).ln()
    }

    /// `β(n, δ') = log(SAH/δ') + S log(8e(n+1))`
    pub fn beta(&self, n: u64) -> f64 {
        self.scale * (self.log_tuples() + self.shape.states as f64 * Self::log_count(n))
    }

    /// `β*(n, δ') = log(SAH/δ') + log(8e(n+1))`
    pub fn beta_star(&self, n: u64) -> f64 {
        self.scale * (self.log_tuples() + Self::log_count(n))
    }

    /// `β^cnt(δ') = log(SAH/δ')`
    pub fn beta_cnt(&self) -> f64 {
        self.scale * self.log_tuples()
    }
}

/// `Var_{P̂_h(·|s,a)}(V)`, clamped at zero.
pub fn empirical_variance(model: &EmpiricalModel, h: usize, s: usize, a: usize, v_next: ArrayView1<f64>) -> f64 {
    row_variance(model.row(h, s, a), v_next)
}

pub(crate) fn row_variance(p: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    let mut mean = 0.0;
    let mut second = 0.0;
    for (&pi, &vi) in p.iter().zip(v) {
        mean += pi * vi;
        second += pi * vi * vi;
    }
    (second - mean * mean).max(0.0)
}

/// `KL(p ‖ q)`; infinite when `p` puts mass where `q` has none.
pub fn kl_divergence(p: ArrayView1<f64>, q: ArrayView1<f64>) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| if qi > 0.0 { pi * (pi / qi).ln() } else { f64::INFINITY })
        .sum()
}

/// Outcome of checking `n · KL(P̂‖P) ≤ β(n, δ')` at every visited tuple.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GoodEventReport {
    pub checked: usize,
    pub failures: usize,
    /// Tuples with no data, where the KL check is undefined.
    pub skipped: usize,
    pub max_ratio: f64,
}

impl GoodEventReport {
    pub fn failure_fraction(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.failures as f64 / self.checked as f64
        }
    }

    pub fn holds(&self) -> bool {
        self.failures == 0
    }
}

/// Simulation-only check of the KL concentration event against the true kernel.
pub fn good_event_diagnostics(
    mdp: &TabularMdp,
    model: &EmpiricalModel,
    params: &BonusParams,
) -> Result<GoodEventReport> {
    if mdp.shape() != model.shape() {
        return Err(Error::Dimension(format!(
            "model shape {:?} differs from environment shape {:?}",
            model.shape(),
            mdp.shape()
        )));
    }
    let mut report = GoodEventReport::default();
    for ((h, s, a), &n) in model.visits.indexed_iter() {
        if n == 0 {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        let lhs = n as f64 * kl_divergence(model.row(h, s, a), mdp.transition_row(h, s, a));
        let rhs = params.beta(n);
        report.max_ratio = report.max_ratio.max(lhs / rhs);
        if lhs > rhs {
            report.failures += 1;
        }
    }
    Ok(report)
}
