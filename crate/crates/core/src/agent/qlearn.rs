use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::curiosity::{CuriosityModel, IntrinsicKind};
use super::{check_gamma, Environment};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Largest dense table (states × actions) the trainers allocate.
pub const MAX_TABLE: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTables {
    pub n_states: usize,
    pub n_actions: usize,
    pub q_a: Vec<f64>,
    pub q_b: Vec<f64>,
}

impl QTables {
    pub fn zeros(n_states: usize, n_actions: usize) -> Result<Self> {
        if n_states.saturating_mul(n_actions) > MAX_TABLE {
            return Err(Error::invalid(format!(
                "{n_states} states x {n_actions} actions exceeds the dense table cap {MAX_TABLE}"
            )));
        }
        Ok(QTables {
            n_states,
            n_actions,
            q_a: vec![0.0; n_states * n_actions],
            q_b: vec![0.0; n_states * n_actions],
        })
    }

    /// Mean of the two tables.
    pub fn value(&self, s: usize, a: usize) -> f64 {
        let i = s * self.n_actions + a;
        0.5 * (self.q_a[i] + self.q_b[i])
    }

    /// Greedy action on the mean table, ties to the lowest index.
    pub fn greedy(&self, s: usize) -> usize {
        argmax((0..self.n_actions).map(|a| self.value(s, a)))
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| self.greedy(s)).collect()
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicConfig {
    pub kind: IntrinsicKind,
    /// Laplace smoothing of the learned dynamics.
    pub alpha: f64,
    /// Weight of the intrinsic term added to the extrinsic reward.
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoubleQConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of episodes over which ε decays linearly.
    pub decay_fraction: f64,
    pub n_episodes: usize,
    pub intrinsic: Option<IntrinsicConfig>,
}

impl Default for DoubleQConfig {
    fn default() -> Self {
        DoubleQConfig {
            gamma: 0.95,
            alpha: 0.1,
            eps_start: 1.0,
            eps_end: 0.05,
            decay_fraction: 0.8,
            n_episodes: 2000,
            intrinsic: None,
        }
    }
}

impl DoubleQConfig {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.eps_start)
            || !unit.contains(&self.eps_end)
            || !(self.decay_fraction > 0.0 && self.decay_fraction <= 1.0)
        {
            return Err(Error::invalid("invalid epsilon schedule"));
        }
        if let Some(ic) = self.intrinsic {
            if !(ic.alpha > 0.0) || !(ic.beta >= 0.0) {
                return Err(Error::invalid("invalid intrinsic reward config"));
            }
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let span = self.decay_fraction * self.n_episodes as f64;
        let t = episode as f64 / span;
        if t >= 1.0 {
            self.eps_end
        } else {
            self.eps_start + (self.eps_end - self.eps_start) * t
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub episode: usize,
    /// Discounted extrinsic return.
    pub return_disc: f64,
    pub epsilon: f64,
    /// Mean intrinsic reward per step, 0 without an intrinsic term.
    pub intrinsic_mean: f64,
}

/// Double Q-learning with ε-greedy exploration on the mean of both tables.
/// Each update flips a coin for the table to update; the action is chosen
/// greedily on that table and evaluated on the other.
pub fn train_double_q<E: Environment + ?Sized>(
    env: &mut E,
    cfg: &DoubleQConfig,
    seed: u64,
) -> Result<(QTables, Vec<EpisodeStat>)> {
    cfg.validate()?;
    let na = env.n_actions();
    let mut q = QTables::zeros(env.n_states(), na)?;
    let mut model = match cfg.intrinsic {
        Some(ic) => Some(CuriosityModel::new(env.n_states(), na, ic.alpha)?),
        None => None,
    };
    let mut rng = rng::stream(seed, tag::AGENT);
    env.reseed(rng::derive_seed(seed, u64::MAX));
    let mut curve = Vec::with_capacity(cfg.n_episodes);
    for episode in 0..cfg.n_episodes {
        let eps = cfg.epsilon(episode);
        let mut s = env.reset();
        let (mut ret, mut disc, mut intr_sum) = (0.0, 1.0, 0.0);
        let mut steps = 0;
        while !env.is_terminal(s) && steps < env.max_steps() {
            let a = if rng.gen::<f64>() < eps {
                rng.gen_range(0..na)
            } else {
                q.greedy(s)
            };
            let t = env.step(a)?;
            let mut r = t.reward;
            if let (Some(m), Some(ic)) = (model.as_mut(), cfg.intrinsic) {
                let pi = epsilon_greedy_probs(&q, s, eps);
                let ri = m.intrinsic_reward(s, a, t.state, ic.kind, Some(&pi))?;
                m.observe(s, a, t.state);
                intr_sum += ri;
                r += ic.beta * ri;
            }
            let (upd, other) = if rng.gen::<bool>() {
                (&mut q.q_a, &q.q_b)
            } else {
                (&mut q.q_b, &q.q_a)
            };
            let target = if t.terminal {
                r
            } else {
                let row = &upd[t.state * na..(t.state + 1) * na];
                let a_star = argmax(row.iter().copied());
                r + cfg.gamma * other[t.state * na + a_star]
            };
            let i = s * na + a;
            upd[i] += cfg.alpha * (target - upd[i]);
            if !upd[i].is_finite() {
                return Err(Error::numerical(format!("Q({s}, {a}) diverged")));
            }
            ret += disc * t.reward;
            disc *= cfg.gamma;
            steps += 1;
            s = t.state;
        }
        curve.push(EpisodeStat {
            episode,
            return_disc: ret,
            epsilon: eps,
            intrinsic_mean: if steps > 0 { intr_sum / steps as f64 } else { 0.0 },
        });
    }
    Ok((q, curve))
}

fn epsilon_greedy_probs(q: &QTables, s: usize, eps: f64) -> Vec<f64> {
    let na = q.n_actions;
    let mut p = vec![eps / na as f64; na];
    p[q.greedy(s)] += 1.0 - eps;
    p
}
