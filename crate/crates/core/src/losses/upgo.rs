use crate::error::Result;
use crate::losses::vtrace::importance_ratios;
use crate::losses::{LossConfig, TermLoss};
use crate::policy::{PolicyParams, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct UpgoOutput {
    /// Upgoing returns `G_t`.
    pub returns: Vec<f64>,
    /// Policy-gradient weights `G_t - V(x_t)`, floored at 0 when
    /// `upgo_clip_negative` is set.
    pub weights: Vec<f64>,
    /// Clipped importance ratios `min(rho_bar, pi/mu)`.
    pub rhos: Vec<f64>,
}

/// Upgoing returns: keep following the realized return while the next
/// action's one-step estimate `r_{t+1} + gamma V(x_{t+2})` is at least
/// `V(x_{t+1})`, otherwise bootstrap from `V(x_{t+1})`.
pub fn upgo_returns(traj: &Trajectory, policy: &PolicyParams, cfg: &LossConfig) -> Result<UpgoOutput> {
    let raw = importance_ratios(traj, policy)?;
    let n = traj.len();
    let values: Vec<f64> = traj.steps.iter().map(|s| policy.value(s.state, s.tag)).collect();
    let value_at = |t: usize| if t < n { values[t] } else { traj.bootstrap_value };
    let mut returns = vec![0.0; n];
    for t in (0..n).rev() {
        let r = traj.steps[t].reward;
        returns[t] = if t + 1 == n {
            r + cfg.gamma * traj.bootstrap_value
        } else {
            let q_next = traj.steps[t + 1].reward + cfg.gamma * value_at(t + 2);
            if q_next >= values[t + 1] {
                r + cfg.gamma * returns[t + 1]
            } else {
                r + cfg.gamma * values[t + 1]
            }
        };
    }
    let weights = returns
        .iter()
        .zip(&values)
        .map(|(g, v)| {
            let w = g - v;
            if cfg.upgo_clip_negative {
                w.max(0.0)
            } else {
                w
            }
        })
        .collect();
    Ok(UpgoOutput {
        returns,
        weights,
        rhos: raw.iter().map(|r| r.min(cfg.rho_bar)).collect(),
    })
}

/// `-sum rho_t w_t log pi(a_t|x_t)` with `frozen` weights and ratios.
pub fn upgo_surrogate(traj: &Trajectory, policy: &PolicyParams, frozen: &UpgoOutput) -> TermLoss {
    let mut out = TermLoss::zero(policy);
    for (t, s) in traj.steps.iter().enumerate() {
        let coef = frozen.rhos[t] * frozen.weights[t];
        if coef == 0.0 {
            continue;
        }
        out.loss -= coef * policy.log_probs(s.state, s.tag)[s.action];
        let probs = policy.probs(s.state, s.tag);
        let row = out.grad.logit_row_mut(policy, s.state, s.tag);
        for (a, g) in row.iter_mut().enumerate() {
            let onehot = if a == s.action { 1.0 } else { 0.0 };
            *g -= coef * (onehot - probs[a]);
        }
    }
    out
}

pub fn upgo_loss(traj: &Trajectory, policy: &PolicyParams, cfg: &LossConfig) -> Result<TermLoss> {
    let out = upgo_returns(traj, policy, cfg)?;
    Ok(upgo_surrogate(traj, policy, &out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TrajectoryStep;

    fn two_step(values: (f64, f64), rewards: (f64, f64)) -> (PolicyParams, Trajectory) {
        let mut p = PolicyParams::uniform(2, 1);
        *p.value_mut(0, 0) = values.0;
        *p.value_mut(1, 0) = values.1;
        let mk = |i: usize, r: f64| TrajectoryStep {
            state: i,
            tag: 0,
            action: 0,
            behavior_prob: 0.5,
            reward: r,
            expert: None,
            step_index: i,
        };
        let t = Trajectory {
            model_id: "t".into(),
            opponent_id: "o".into(),
            steps: vec![mk(0, rewards.0), mk(1, rewards.1)],
            bootstrap_value: 0.0,
            outcome: 1,
        };
        (p, t)
    }

    #[test]
    fn hand_recursion() {
        let (p, t) = two_step((0.2, 0.5), (0.0, 1.0));
        let out = upgo_returns(&t, &p, &LossConfig::default()).unwrap();
        assert_eq!(out.returns, vec![1.0, 1.0]);
        assert!((out.weights[0] - 0.8).abs() < 1e-15);
        assert!((out.weights[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bootstraps_when_continuation_disappoints() {
        let (p, t) = two_step((0.2, 0.5), (0.0, -1.0));
        let cfg = LossConfig::default();
        let out = upgo_returns(&t, &p, &cfg).unwrap();
        assert_eq!(out.returns, vec![0.5, -1.0]);
        assert!((out.weights[0] - 0.3).abs() < 1e-15);
        assert_eq!(out.weights[1], 0.0);
        let unclipped = upgo_returns(&t, &p, &LossConfig { upgo_clip_negative: false, ..cfg }).unwrap();
        assert_eq!(unclipped.weights[1], -1.5);
    }

    #[test]
    fn null_trajectory() {
        let (p, t) = two_step((0.0, 0.0), (0.0, 0.0));
        let out = upgo_returns(&t, &p, &LossConfig::default()).unwrap();
        assert_eq!(out.returns, vec![0.0, 0.0]);
        assert_eq!(out.weights, vec![0.0, 0.0]);
        assert_eq!(upgo_surrogate(&t, &p, &out).grad.norm(), 0.0);
    }
}
