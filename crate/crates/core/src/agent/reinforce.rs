use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_gamma, rollout, Environment, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{self, tag, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    OneHot { n_states: usize },
    /// Explicit feature row per state.
    Table { rows: Vec<Vec<f64>> },
}

impl FeatureMap {
    pub fn n_states(&self) -> usize {
        match self {
            FeatureMap::OneHot { n_states } => *n_states,
            FeatureMap::Table { rows } => rows.len(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FeatureMap::OneHot { n_states } => *n_states,
            FeatureMap::Table { rows } => rows.first().map_or(0, Vec::len),
        }
    }

    /// Sparse `(feature, value)` pairs of state `s`.
    fn features(&self, s: usize) -> Vec<(usize, f64)> {
        match self {
            FeatureMap::OneHot { .. } => vec![(s, 1.0)],
            FeatureMap::Table { rows } => rows[s]
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }
}

/// Linear softmax policy `π(a|s) ∝ exp(φ(s)ᵀθ_a)` with θ stored
/// feature-major (`theta[f·n_actions + a]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    pub n_actions: usize,
    pub features: FeatureMap,
    pub theta: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn new(features: FeatureMap, n_actions: usize) -> Result<Self> {
        let nf = features.n_features();
        if nf == 0 || n_actions == 0 {
            return Err(Error::invalid("policy needs features and actions"));
        }
        if let FeatureMap::Table { rows } = &features {
            if rows.iter().any(|r| r.len() != nf || r.iter().any(|v| !v.is_finite())) {
                return Err(Error::invalid("feature rows must share a length and be finite"));
            }
        }
        Ok(SoftmaxPolicy {
            n_actions,
            features,
            theta: vec![0.0; nf * n_actions],
        })
    }

    pub fn one_hot(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(FeatureMap::OneHot { n_states }, n_actions)
    }

    fn logits(&self, s: usize) -> Vec<f64> {
        let mut z = vec![0.0; self.n_actions];
        for (f, v) in self.features.features(s) {
            for (a, zi) in z.iter_mut().enumerate() {
                *zi += v * self.theta[f * self.n_actions + a];
            }
        }
        z
    }

    pub fn probs(&self, s: usize) -> Vec<f64> {
        let z = self.logits(s);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let sum: f64 = e.iter().sum();
        e.iter().map(|v| v / sum).collect()
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        let z = self.logits(s);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        z[a] - lse
    }

    pub fn sample(&self, s: usize, rng: &mut Rng) -> usize {
        let p = self.probs(s);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, pa) in p.iter().enumerate() {
            acc += pa;
            if u < acc {
                return a;
            }
        }
        p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
    }

    /// Table of `π(·|s)` for every state.
    pub fn table(&self) -> Vec<Vec<f64>> {
        (0..self.features.n_states()).map(|s| self.probs(s)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    None,
    Mean,
    Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReinforceConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub n_batches: usize,
    pub batch_size: usize,
    pub baseline: Baseline,
    /// Moving-average rate of the tabular value baseline.
    pub value_rate: f64,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        ReinforceConfig {
            gamma: 0.95,
            alpha: 0.1,
            n_batches: 200,
            batch_size: 32,
            baseline: Baseline::Mean,
            value_rate: 0.1,
        }
    }
}

impl ReinforceConfig {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if !(self.alpha > 0.0) || !self.alpha.is_finite() || self.batch_size == 0 {
            return Err(Error::invalid("invalid learning rate or batch size"));
        }
        if !(self.value_rate > 0.0 && self.value_rate <= 1.0) {
            return Err(Error::invalid("value_rate must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStat {
    pub batch: usize,
    pub mean_return: f64,
    pub grad_norm: f64,
}

/// `Gₜ = Σ_{k≥t} γ^{k−t}·r_k`
pub fn reward_to_go(traj: &Trajectory) -> Vec<f64> {
    let mut g = vec![0.0; traj.steps.len()];
    let mut acc = 0.0;
    for (t, step) in traj.steps.iter().enumerate().rev() {
        acc = step.reward + traj.gamma * acc;
        g[t] = acc;
    }
    g
}

/// Per-step advantages `Gₜ − b`. `values` is required for the value baseline.
pub fn advantages(batch: &[Trajectory], baseline: Baseline, values: Option<&[f64]>) -> Result<Vec<Vec<f64>>> {
    let mean = batch.iter().map(|t| t.return_disc).sum::<f64>() / batch.len().max(1) as f64;
    batch
        .iter()
        .map(|traj| {
            let g = reward_to_go(traj);
            match baseline {
                Baseline::None => Ok(g),
                Baseline::Mean => Ok(g.iter().map(|x| x - mean).collect()),
                Baseline::Value => {
                    let v = values.ok_or_else(|| Error::invalid("value baseline needs a table"))?;
                    Ok(g.iter()
                        .zip(&traj.steps)
                        .map(|(x, st)| x - v[st.state])
                        .collect())
                }
            }
        })
        .collect()
}

/// Surrogate `(1/B)·Σ_τ Σ_t log π(aₜ|sₜ)·Aₜ` whose gradient is the
/// policy-gradient estimate.
pub fn surrogate(policy: &SoftmaxPolicy, batch: &[Trajectory], adv: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for (traj, a) in batch.iter().zip(adv) {
        for (st, w) in traj.steps.iter().zip(a) {
            acc += policy.log_prob(st.state, st.action) * w;
        }
    }
    acc / batch.len() as f64
}

/// Analytic gradient of [`surrogate`]: `∂ log π(a|s)/∂θ_{f,b} = φ_f(s)·(1[b=a] − π(b|s))`.
pub fn surrogate_grad(policy: &SoftmaxPolicy, batch: &[Trajectory], adv: &[Vec<f64>]) -> Vec<f64> {
    let na = policy.n_actions;
    let mut g = vec![0.0; policy.theta.len()];
    for (traj, a) in batch.iter().zip(adv) {
        for (st, w) in traj.steps.iter().zip(a) {
            let p = policy.probs(st.state);
            for (f, v) in policy.features.features(st.state) {
                for b in 0..na {
                    let ind = if b == st.action { 1.0 } else { 0.0 };
                    g[f * na + b] += w * v * (ind - p[b]);
                }
            }
        }
    }
    let n = batch.len() as f64;
    g.iter_mut().for_each(|x| *x /= n);
    g
}

/// REINFORCE by batched gradient ascent on the surrogate.
pub fn train_reinforce<E: Environment + ?Sized>(
    env: &mut E,
    policy: SoftmaxPolicy,
    cfg: &ReinforceConfig,
    seed: u64,
) -> Result<(SoftmaxPolicy, Vec<BatchStat>)> {
    cfg.validate()?;
    if policy.n_actions != env.n_actions() || policy.features.n_states() != env.n_states() {
        return Err(Error::invalid("policy shape does not match the environment"));
    }
    let mut policy = policy;
    let mut values = vec![0.0; env.n_states()];
    let mut rng = rng::stream(seed, tag::AGENT);
    env.reseed(rng::derive_seed(seed, u64::MAX));
    let mut curve = Vec::with_capacity(cfg.n_batches);
    for batch_idx in 0..cfg.n_batches {
        let batch: Vec<Trajectory> = (0..cfg.batch_size)
            .map(|_| rollout(env, cfg.gamma, |s| policy.sample(s, &mut rng)))
            .collect::<Result<_>>()?;
        let adv = advantages(&batch, cfg.baseline, Some(&values))?;
        let grad = surrogate_grad(&policy, &batch, &adv);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite policy gradient at batch {batch_idx}, coordinate {i} (feature {}, action {})",
                i / policy.n_actions,
                i % policy.n_actions
            )));
        }
        for (t, g) in policy.theta.iter_mut().zip(&grad) {
            *t += cfg.alpha * g;
        }
        if cfg.baseline == Baseline::Value {
            for traj in &batch {
                for (st, g) in traj.steps.iter().zip(reward_to_go(traj)) {
                    values[st.state] += cfg.value_rate * (g - values[st.state]);
                }
            }
        }
        curve.push(BatchStat {
            batch: batch_idx,
            mean_return: batch.iter().map(|t| t.return_disc).sum::<f64>() / batch.len() as f64,
            grad_norm: norm,
        });
    }
    Ok((policy, curve))
}
