//! Bernstein-style upper and lower confidence bounds on action values.
//!
//! For a tuple with `n = n_h(s,a) ≥ 1`, writing `gap = P̂(Ṽ_{h+1} − V̰_{h+1})`:
//!
//! ```text
//! Q̃_h(s,a) = min(H, r + 3√(Var_P̂(Ṽ_{h+1}) β*/n) + 14H² β/n + gap/H  + P̂Ṽ_{h+1})
//! Q̰_h(s,a) = max(0, r − 3√(Var_P̂(Ṽ_{h+1}) β*/n) − 22H² β/n − 2gap/H + P̂V̰_{h+1})
//! ```
//!
//! Tuples with no data get `Q̃ = H` and `Q̰ = 0`. The state rows either follow
//! the greedy action on `Q̃` or average the action values under a fixed policy.

use ndarray::{s, Array2, Array3};

use crate::error::Result;
use crate::mdp::{argmax, Shape, StochasticPolicy};
use crate::model::{row_variance, BonusParams, EmpiricalModel};

const VARIANCE_COEF: f64 = 3.0;
const UPPER_SECOND_ORDER: f64 = 14.0;
const LOWER_SECOND_ORDER: f64 = 22.0;
const UPPER_GAP_COEF: f64 = 1.0;
const LOWER_GAP_COEF: f64 = 2.0;

/// Paired optimistic and pessimistic tables for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsTable {
    pub q_up: Array3<f64>,
    pub q_lo: Array3<f64>,
    /// `[h, s]` with a zero terminal row at `H`.
    pub v_up: Array2<f64>,
    pub v_lo: Array2<f64>,
}

impl BoundsTable {
    fn zeros(shape: Shape) -> Self {
        let q = Array3::zeros((shape.horizon, shape.states, shape.actions));
        let v = Array2::zeros((shape.horizon + 1, shape.states));
        Self {
            q_up: q.clone(),
            q_lo: q,
            v_up: v.clone(),
            v_lo: v,
        }
    }

    pub fn lower_initial(&self, s: usize) -> f64 {
        self.v_lo[[0, s]]
    }

    pub fn upper_initial(&self, s: usize) -> f64 {
        self.v_up[[0, s]]
    }
}

enum StateRule<'a> {
    Greedy(&'a mut Array2<usize>),
    Follow(&'a StochasticPolicy),
}

fn recursion(
    model: &EmpiricalModel,
    rewards: &Array3<f64>,
    params: &BonusParams,
    mut rule: StateRule<'_>,
) -> BoundsTable {
    let shape = model.shape();
    let horizon = shape.horizon as f64;
    let mut table = BoundsTable::zeros(shape);
    for h in (0..shape.horizon).rev() {
        let (v_up_next, v_lo_next) = (table.v_up.row(h + 1).to_owned(), table.v_lo.row(h + 1).to_owned());
        for s in 0..shape.states {
            for a in 0..shape.actions {
                let n = model.visit(h, s, a);
                let (up, lo) = if n == 0 {
                    (horizon, 0.0)
                } else {
                    let p = model.row(h, s, a);
                    let nf = n as f64;
                    let ev_up = p.dot(&v_up_next);
                    let ev_lo = p.dot(&v_lo_next);
                    let gap = ev_up - ev_lo;
                    let variance = row_variance(p, v_up_next.view());
                    let first_order = VARIANCE_COEF * (variance * params.beta_star(n) / nf).sqrt();
                    let second_order = horizon * horizon * params.beta(n) / nf;
                    let r = rewards[[h, s, a]];
                    let up =
                        r + first_order + UPPER_SECOND_ORDER * second_order + UPPER_GAP_COEF * gap / horizon + ev_up;
                    let lo =
                        r - first_order - LOWER_SECOND_ORDER * second_order - LOWER_GAP_COEF * gap / horizon + ev_lo;
                    (up.min(horizon), lo.max(0.0))
                };
                table.q_up[[h, s, a]] = up;
                table.q_lo[[h, s, a]] = lo;
            }
            match &mut rule {
                StateRule::Greedy(choice) => {
                    let best = argmax(table.q_up.slice(s![h, s, ..]));
                    choice[[h, s]] = best;
                    table.v_up[[h, s]] = table.q_up[[h, s, best]];
                    table.v_lo[[h, s]] = table.q_lo[[h, s, best]];
                }
                StateRule::Follow(policy) => {
                    let probs = policy.action_probs(h, s);
                    table.v_up[[h, s]] = probs.dot(&table.q_up.slice(s![h, s, ..]));
                    table.v_lo[[h, s]] = probs.dot(&table.q_lo.slice(s![h, s, ..]));
                }
            }
        }
    }
    table
}

/// Optimistic bounds with greedy state rows; also returns the greedy policy on `Q̃`.
pub fn compute_optimistic_bounds(
    model: &EmpiricalModel,
    rewards: &Array3<f64>,
    params: &BonusParams,
) -> Result<(BoundsTable, StochasticPolicy)> {
    let shape = model.shape();
    check_rewards(rewards, shape)?;
    let mut choice = Array2::zeros((shape.horizon, shape.states));
    let table = recursion(model, rewards, params, StateRule::Greedy(&mut choice));
    let policy = StochasticPolicy::deterministic(&choice, shape.actions)?;
    Ok((table, policy))
}

/// Bounds on the value of a fixed policy; state rows are policy-weighted.
pub fn policy_eva(
    model: &EmpiricalModel,
    rewards: &Array3<f64>,
    policy: &StochasticPolicy,
    params: &BonusParams,
) -> Result<BoundsTable> {
    let shape = model.shape();
    check_rewards(rewards, shape)?;
    policy.check_against(shape)?;
    Ok(recursion(model, rewards, params, StateRule::Follow(policy)))
}

fn check_rewards(rewards: &Array3<f64>, shape: Shape) -> Result<()> {
    if rewards.dim() != (shape.horizon, shape.states, shape.actions) {
        return Err(crate::Error::Dimension(format!(
            "reward tensor {:?} does not match model shape {shape:?}",
            rewards.dim()
        )));
    }
    Ok(())
}
