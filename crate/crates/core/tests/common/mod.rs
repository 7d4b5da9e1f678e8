//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array3, Array4};
use rand::Rng;
use stepmix::{Shape, StochasticPolicy, TabularMdp};

/// Expected return by summing over every action/next-state sequence.
pub fn brute_force_value(mdp: &TabularMdp, pi: &StochasticPolicy) -> f64 {
    fn walk(mdp: &TabularMdp, pi: &StochasticPolicy, h: usize, s: usize, mass: f64) -> f64 {
        if h == mdp.horizon() || mass == 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for a in 0..mdp.num_actions() {
            let pa = pi.probs()[[h, s, a]];
            if pa == 0.0 {
                continue;
            }
            total += mass * pa * mdp.rewards()[[h, s, a]];
            for s2 in 0..mdp.num_states() {
                let p = mdp.transitions()[[h, s, a, s2]];
                total += walk(mdp, pi, h + 1, s2, mass * pa * p);
            }
        }
        total
    }
    walk(mdp, pi, 0, mdp.start_state(), 1.0)
}

/// Probability of each `(h, s, a)` by the same enumeration.
pub fn brute_force_occupancy(mdp: &TabularMdp, pi: &StochasticPolicy) -> Array3<f64> {
    fn walk(mdp: &TabularMdp, pi: &StochasticPolicy, h: usize, s: usize, mass: f64, d: &mut Array3<f64>) {
        if h == mdp.horizon() {
            return;
        }
        for a in 0..mdp.num_actions() {
            let w = mass * pi.probs()[[h, s, a]];
            d[[h, s, a]] += w;
            for s2 in 0..mdp.num_states() {
                walk(mdp, pi, h + 1, s2, w * mdp.transitions()[[h, s, a, s2]], d);
            }
        }
    }
    let mut d = Array3::zeros((mdp.horizon(), mdp.num_states(), mdp.num_actions()));
    walk(mdp, pi, 0, mdp.start_state(), 1.0, &mut d);
    d
}

/// Brute-force value of the whole-episode coin flip: enumerate the coin, then trajectories.
pub fn brute_force_episodic_value(mdp: &TabularMdp, pi1: &StochasticPolicy, pi2: &StochasticPolicy, rho: f64) -> f64 {
    [(rho, pi1), (1.0 - rho, pi2)]
        .iter()
        .map(|(w, pi)| w * brute_force_value(mdp, pi))
        .sum()
}

/// A random row on the simplex, with roughly a third of entries forced to zero.
fn random_row<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len)
        .map(|_| {
            if rng.random::<f64>() < 0.3 {
                0.0
            } else {
                -(1.0 - rng.random::<f64>()).ln()
            }
        })
        .collect();
    if row.iter().all(|&x| x == 0.0) {
        row[rng.random_range(0..len)] = 1.0;
    }
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
    row
}

pub fn random_policy<R: Rng>(shape: Shape, rng: &mut R) -> StochasticPolicy {
    let mut probs = Array3::zeros((shape.horizon, shape.states, shape.actions));
    for h in 0..shape.horizon {
        for s in 0..shape.states {
            for (a, p) in random_row(shape.actions, rng).into_iter().enumerate() {
                probs[[h, s, a]] = p;
            }
        }
    }
    StochasticPolicy::new(probs).unwrap()
}

/// A random environment with sparse rows and a random start state.
pub fn random_mdp<R: Rng>(shape: Shape, rng: &mut R) -> TabularMdp {
    let mut p = Array4::zeros((shape.horizon, shape.states, shape.actions, shape.states));
    let mut r = Array3::zeros((shape.horizon, shape.states, shape.actions));
    for h in 0..shape.horizon {
        for s in 0..shape.states {
            for a in 0..shape.actions {
                r[[h, s, a]] = rng.random::<f64>();
                for (s2, q) in random_row(shape.states, rng).into_iter().enumerate() {
                    p[[h, s, a, s2]] = q;
                }
            }
        }
    }
    let start = rng.random_range(0..shape.states);
    TabularMdp::new(p, r, start).unwrap()
}

pub fn random_shape<R: Rng>(max_s: usize, max_a: usize, max_h: usize, rng: &mut R) -> Shape {
    Shape::new(
        rng.random_range(1..=max_s),
        rng.random_range(1..=max_a),
        rng.random_range(1..=max_h),
    )
    .unwrap()
}

/// Two policies that agree everywhere except at step `h`.
pub fn one_step_different<R: Rng>(shape: Shape, h: usize, rng: &mut R) -> (StochasticPolicy, StochasticPolicy) {
    let base = random_policy(shape, rng);
    let other = random_policy(shape, rng);
    let pi2 = StochasticPolicy::splice(&base, &StochasticPolicy::splice(&other, &base, h + 1).unwrap(), h).unwrap();
    (base, pi2)
}
