use super::TabularEnv;
use crate::error::{Error, Result};

use super::{check_gamma, MAX_DENSE_STATES};

pub fn q_from_values(env: &TabularEnv, v: &[f64], gamma: f64) -> Vec<f64> {
    let mut q = vec![0.0; env.n_states * env.n_actions];
    for s in 0..env.n_states {
        if env.terminal[s] {
            continue;
        }
        for a in 0..env.n_actions {
            q[s * env.n_actions + a] = env
                .probs(s, a)
                .iter()
                .zip(env.rewards(s, a))
                .enumerate()
                .map(|(j, (p, r))| p * (r + if env.terminal[j] { 0.0 } else { gamma * v[j] }))
                .sum();
        }
    }
    q
}

fn bellman_optimal(env: &TabularEnv, v: &[f64], gamma: f64) -> Vec<f64> {
    let q = q_from_values(env, v, gamma);
    (0..env.n_states)
        .map(|s| {
            if env.terminal[s] {
                0.0
            } else {
                q[s * env.n_actions..(s + 1) * env.n_actions]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect()
}

/// Sup-norm Bellman-optimality residual `‖TV − V‖∞`.
pub fn bellman_residual(env: &TabularEnv, v: &[f64], gamma: f64) -> f64 {
    bellman_optimal(env, v, gamma)
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Iterates `V ← TV` from zero until the residual of the returned table is
/// below `tol`. Terminal states have value 0.
pub fn value_iteration(env: &TabularEnv, gamma: f64, tol: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut v = vec![0.0; env.n_states];
    loop {
        let next = bellman_optimal(env, &v, gamma);
        let diff = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        // ‖T(TV) − TV‖ ≤ γ·diff
        if gamma * diff < tol && bellman_residual(env, &v, gamma) < tol {
            return Ok(v);
        }
    }
}

/// Greedy action per state, ties to the lowest index.
pub fn greedy_from_values(env: &TabularEnv, v: &[f64], gamma: f64) -> Vec<usize> {
    let q = q_from_values(env, v, gamma);
    (0..env.n_states)
        .map(|s| {
            let row = &q[s * env.n_actions..(s + 1) * env.n_actions];
            let mut best = 0;
            for a in 1..row.len() {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Exact evaluation of a stochastic policy by solving `(I − γPπ)v = rπ`
/// with partial-pivot Gaussian elimination.
pub fn policy_evaluation(env: &TabularEnv, policy: &[Vec<f64>], gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let n = env.n_states;
    if n > MAX_DENSE_STATES {
        return Err(Error::invalid(format!(
            "{n} states exceeds the dense solver limit {MAX_DENSE_STATES}"
        )));
    }
    if policy.len() != n || policy.iter().any(|p| p.len() != env.n_actions) {
        return Err(Error::invalid("policy table shape does not match the environment"));
    }
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        a[s * n + s] = 1.0;
        if env.terminal[s] {
            continue;
        }
        for (act, &pi) in policy[s].iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            b[s] += pi * env.expected_reward(s, act);
            for (j, &p) in env.probs(s, act).iter().enumerate() {
                if !env.terminal[j] {
                    a[s * n + j] -= gamma * pi * p;
                }
            }
        }
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("nonempty");
        if a[piv * n + col] == 0.0 {
            return Err(Error::numerical("singular policy-evaluation system"));
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut v = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * v[k];
        }
        v[row] = acc / a[row * n + row];
    }
    Ok(v)
}
