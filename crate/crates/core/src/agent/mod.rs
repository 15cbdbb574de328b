//! Tabular reinforcement learning: environments, double Q-learning,
//! REINFORCE with baselines, count-based intrinsic rewards and exact
//! dynamic-programming oracles.

mod curiosity;
mod dp;
mod qlearn;
mod reinforce;
mod write;


pub use curiosity::{CuriosityModel, IntrinsicKind};
pub use dp::{bellman_residual, greedy_from_values, policy_evaluation, q_from_values, value_iteration};
pub use qlearn::{train_double_q, DoubleQConfig, EpisodeStat, IntrinsicConfig, QTables, MAX_TABLE};
pub use reinforce::{
    advantages, reward_to_go, surrogate, surrogate_grad, train_reinforce, Baseline, BatchStat,
    FeatureMap, ReinforceConfig, SoftmaxPolicy,
};
pub use write::{write_env, WriteEnv, WriteEnvConfig, WRITE_ACTIONS};

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::rng::{self, tag, Rng};

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// A single-consumer episodic environment over a finite state space.
pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn max_steps(&self) -> usize;
    fn is_terminal(&self, state: usize) -> bool;
    fn reset(&mut self) -> usize;
    /// Stepping from a terminal state returns it unchanged with zero reward.
    fn step(&mut self, action: usize) -> Result<Transition>;
    /// Restarts the environment's internal random stream.
    fn reseed(&mut self, seed: u64);
}

/// Explicit MDP with dense `P(s'|s,a)` and `r(s,a,s')` tensors, indexed
/// `[s][a][s']` row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularEnv {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    pub terminal: Vec<bool>,
    pub start: usize,
    pub max_steps: usize,
    #[serde(skip, default = "default_rng")]
    rng: Rng,
    #[serde(skip)]
    state: usize,
}

fn default_rng() -> Rng {
    rng::stream(0, tag::ENV)
}

/// Largest state count accepted by the dense linear-solve oracle.
pub const MAX_DENSE_STATES: usize = 4096;

impl TabularEnv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        terminal: Vec<bool>,
        start: usize,
        max_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = n_states * n_actions * n_states;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("environment needs states and actions"));
        }
        if transition.len() != n || reward.len() != n || terminal.len() != n_states {
            return Err(Error::invalid("environment tensor sizes disagree"));
        }
        if start >= n_states || max_steps == 0 {
            return Err(Error::invalid("invalid start state or max_steps"));
        }
        for (i, row) in transition.chunks(n_states).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "P(.|s={}, a={}) sums to {sum}",
                    i / n_actions,
                    i % n_actions
                )));
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("rewards must be finite"));
        }
        Ok(TabularEnv {
            n_states,
            n_actions,
            transition,
            reward,
            terminal,
            start,
            max_steps,
            rng: rng::stream(seed, tag::ENV),
            state: start,
        })
    }

    pub fn probs(&self, s: usize, a: usize) -> &[f64] {
        let o = (s * self.n_actions + a) * self.n_states;
        &self.transition[o..o + self.n_states]
    }

    pub fn rewards(&self, s: usize, a: usize) -> &[f64] {
        let o = (s * self.n_actions + a) * self.n_states;
        &self.reward[o..o + self.n_states]
    }

    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.probs(s, a)
            .iter()
            .zip(self.rewards(s, a))
            .map(|(p, r)| p * r)
            .sum()
    }

    /// Minimum and maximum reward over transitions with nonzero probability.
    pub fn reward_range(&self) -> (f64, f64) {
        self.transition
            .iter()
            .zip(&self.reward)
            .filter(|(p, _)| **p > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, r)| {
                (lo.min(*r), hi.max(*r))
            })
    }

    pub fn reset_to(&mut self, s: usize) {
        self.state = s;
    }

    pub fn state(&self) -> usize {
        self.state
    }
}

impl Environment for TabularEnv {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    fn reset(&mut self) -> usize {
        self.state = self.start;
        self.state
    }

    fn step(&mut self, a: usize) -> Result<Transition> {
        if a >= self.n_actions {
            return Err(Error::invalid(format!("action {a} out of range")));
        }
        let s = self.state;
        if self.terminal[s] {
            return Ok(Transition {
                state: s,
                reward: 0.0,
                terminal: true,
            });
        }
        let u: f64 = self.rng.gen();
        let probs = self.probs(s, a);
        let mut acc = 0.0;
        let mut next = probs.iter().rposition(|&p| p > 0.0).unwrap_or(s);
        for (j, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        self.state = next;
        Ok(Transition {
            state: next,
            reward: self.rewards(s, a)[next],
            terminal: self.terminal[next],
        })
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = rng::stream(seed, tag::ENV);
    }
}

pub const TIP_STATES: usize = 6;
pub const TIP_ACTIONS: [&str; 4] = ["soft_pulse", "hard_pulse", "gentle_crash", "scan_anneal"];
/// Per action: quality moves with probabilities, then the destruction
/// probability. Moves are clamped to qualities 1..=5.
pub const TIP_MOVES: [(&[(i32, f64)], f64); 4] = [
    (&[(1, 0.70), (0, 0.22), (-1, 0.06)], 0.02),
    (&[(2, 0.65), (0, 0.10), (-2, 0.15)], 0.10),
    (&[(1, 0.30), (-1, 0.45)], 0.25),
    (&[(1, 0.30), (0, 0.70)], 0.0),
];
pub const TIP_STEP_REWARD: f64 = -1.0;
pub const TIP_GOOD_BONUS: f64 = 10.0;
pub const TIP_DESTROY_PENALTY: f64 = -10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TipEnvConfig {
    pub start_state: usize,
    pub max_steps: usize,
}

impl Default for TipEnvConfig {
    fn default() -> Self {
        TipEnvConfig {
            start_state: 3,
            max_steps: 50,
        }
    }
}

/// Tip-conditioning MDP. Quality 0 is a destroyed tip and 5 a good one;
/// both are terminal. Every step costs 1, reaching 5 pays 10 and
/// destruction costs 10.
pub fn tip_env(cfg: &TipEnvConfig, seed: u64) -> Result<TabularEnv> {
    if cfg.start_state == 0 || cfg.start_state >= TIP_STATES {
        return Err(Error::invalid(format!(
            "tip start state must be in 1..{TIP_STATES}, got {}",
            cfg.start_state
        )));
    }
    let (ns, na) = (TIP_STATES, TIP_ACTIONS.len());
    let mut p = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na * ns];
    let terminal: Vec<bool> = (0..ns).map(|s| s == 0 || s == ns - 1).collect();
    for s in 0..ns {
        for (a, (moves, destroy)) in TIP_MOVES.iter().enumerate() {
            let o = (s * na + a) * ns;
            if terminal[s] {
                p[o + s] = 1.0;
                continue;
            }
            p[o] += destroy;
            for &(d, prob) in moves.iter() {
                let to = (s as i32 + d).clamp(1, ns as i32 - 1) as usize;
                p[o + to] += prob;
            }
            for to in 0..ns {
                r[o + to] = TIP_STEP_REWARD
                    + match to {
                        0 => TIP_DESTROY_PENALTY,
                        t if t == ns - 1 => TIP_GOOD_BONUS,
                        _ => 0.0,
                    };
            }
        }
    }
    TabularEnv::new(ns, na, p, r, terminal, cfg.start_state, cfg.max_steps, seed)
}

/// Two states: action 0 advances to the terminal state with reward 1,
/// action 1 stays with reward 0.
pub fn deterministic_chain(seed: u64) -> TabularEnv {
    let p = vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
    let r = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    TabularEnv::new(2, 2, p, r, vec![false, true], 0, 20, seed).expect("valid chain")
}

/// One non-terminal state that loops onto itself with a constant reward.
pub fn self_loop(reward: f64, max_steps: usize, seed: u64) -> Result<TabularEnv> {
    TabularEnv::new(1, 1, vec![1.0], vec![reward], vec![false], 0, max_steps, seed)
}

/// Single-step bandit: arm `a` pays `rewards[a]` and ends the episode.
pub fn bandit(rewards: &[f64], seed: u64) -> Result<TabularEnv> {
    let na = rewards.len();
    let mut p = vec![0.0; 2 * na * 2];
    let mut r = vec![0.0; 2 * na * 2];
    for a in 0..na {
        p[a * 2 + 1] = 1.0;
        r[a * 2 + 1] = rewards[a];
        p[(na + a) * 2 + 1] = 1.0;
    }
    TabularEnv::new(2, na, p, r, vec![false, true], 0, 1, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// Σ γᵗ·rₜ
    pub return_disc: f64,
    pub gamma: f64,
}

pub fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma must be in [0, 1), got {gamma}")));
    }
    Ok(())
}

/// Runs one episode with `choose(state) -> action`, stopping at a terminal
/// state or after `max_steps` steps.
pub fn rollout<E: Environment + ?Sized>(
    env: &mut E,
    gamma: f64,
    mut choose: impl FnMut(usize) -> usize,
) -> Result<Trajectory> {
    let mut s = env.reset();
    let mut steps = Vec::new();
    let (mut ret, mut disc) = (0.0, 1.0);
    while !env.is_terminal(s) && steps.len() < env.max_steps() {
        let a = choose(s);
        let t = env.step(a)?;
        ret += disc * t.reward;
        disc *= gamma;
        steps.push(Step {
            state: s,
            action: a,
            reward: t.reward,
            next: t.state,
        });
        s = t.state;
        if t.terminal {
            break;
        }
    }
    Ok(Trajectory {
        steps,
        return_disc: ret,
        gamma,
    })
}

/// Mean discounted return of `choose` over `n` episodes. Episode `i` reseeds
/// the environment from `(seed, i)`.
pub fn evaluate_policy<E: Environment + ?Sized>(
    env: &mut E,
    gamma: f64,
    n: usize,
    seed: u64,
    mut choose: impl FnMut(usize, &mut Rng) -> usize,
) -> Result<Vec<f64>> {
    let mut rng = rng::stream(seed, tag::EVAL);
    (0..n)
        .map(|i| {
            env.reseed(rng::derive_seed(seed, i as u64));
            rollout(env, gamma, |s| choose(s, &mut rng)).map(|t| t.return_disc)
        })
        .collect()
}

/// Uniform random policy table.
pub fn uniform_policy(n_states: usize, n_actions: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0 / n_actions as f64; n_actions]; n_states]
}

pub fn write_episode_csv(path: &Path, curve: &[EpisodeStat]) -> Result<()> {
    let mut text = String::from("episode,return,epsilon\n");
    for e in curve {
        text.push_str(&format!("{},{},{}\n", e.episode, e.return_disc, e.epsilon));
    }
    io::write_bytes(path, text.as_bytes())
}

pub fn write_batch_csv(path: &Path, curve: &[BatchStat]) -> Result<()> {
    let mut text = String::from("batch,mean_return,grad_norm\n");
    for b in curve {
        text.push_str(&format!("{},{},{}\n", b.batch, b.mean_return, b.grad_norm));
    }
    io::write_bytes(path, text.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    io::write_bytes(path, &bytes)
}
