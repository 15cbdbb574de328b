use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntrinsicKind {
    Curiosity,
    Empowerment,
}

/// Count-based dynamics model `P̂(s'|s,a) = (N(s,a,s') + α) / (N(s,a) + α|S|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuriosityModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub alpha: f64,
    pub counts: Vec<f64>,
}

impl CuriosityModel {
    pub fn new(n_states: usize, n_actions: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("smoothing alpha must be positive, got {alpha}")));
        }
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("curiosity model needs states and actions"));
        }
        Ok(CuriosityModel {
            n_states,
            n_actions,
            alpha,
            counts: vec![0.0; n_states * n_actions * n_states],
        })
    }

    pub fn observe(&mut self, s: usize, a: usize, next: usize) {
        self.counts[(s * self.n_actions + a) * self.n_states + next] += 1.0;
    }

    pub fn p_hat(&self, s: usize, a: usize) -> Vec<f64> {
        let o = (s * self.n_actions + a) * self.n_states;
        let row = &self.counts[o..o + self.n_states];
        let total: f64 = row.iter().sum::<f64>() + self.alpha * self.n_states as f64;
        row.iter().map(|c| (c + self.alpha) / total).collect()
    }

    /// Curiosity is the surprise `−log P̂(s'|s,a)`. Empowerment is
    /// `KL(P̂(·|s,a) ‖ Σ_a' π(a'|s)·P̂(·|s,a'))` and needs `policy = π(·|s)`.
    pub fn intrinsic_reward(
        &self,
        s: usize,
        a: usize,
        next: usize,
        kind: IntrinsicKind,
        policy: Option<&[f64]>,
    ) -> Result<f64> {
        if s >= self.n_states || next >= self.n_states || a >= self.n_actions {
            return Err(Error::invalid(format!("transition ({s}, {a}, {next}) out of range")));
        }
        match kind {
            IntrinsicKind::Curiosity => Ok(-self.p_hat(s, a)[next].ln()),
            IntrinsicKind::Empowerment => {
                let pi = policy.ok_or_else(|| Error::invalid("empowerment needs a policy"))?;
                if pi.len() != self.n_actions {
                    return Err(Error::invalid("policy length does not match actions"));
                }
                let p = self.p_hat(s, a);
                // Written as p + Σπ(p' − p) so identical rows give q == p bit for bit.
                let mut q = p.clone();
                for (b, &w) in pi.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (qj, (pb, pa)) in q.iter_mut().zip(self.p_hat(s, b).iter().zip(&p)) {
                        *qj += w * (pb - pa);
                    }
                }
                let kl: f64 = p.iter().zip(&q).map(|(pj, qj)| pj * (pj / qj).ln()).sum();
                Ok(kl.max(0.0))
            }
        }
    }
}
