use crate::error::{Error, Result};
use crate::losses::{LossConfig, TermLoss, VALUE_LOSS_COEF};
use crate::policy::{PolicyParams, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct VTraceOutput {
    /// Value targets `v_s`.
    pub targets: Vec<f64>,
    /// Policy-gradient advantages `rho_s (r_s + gamma v_{s+1} - V(x_s))`.
    pub advantages: Vec<f64>,
    /// Clipped ratios `min(rho_bar, pi/mu)`.
    pub rhos: Vec<f64>,
    /// Clipped trace coefficients `min(c_bar, pi/mu)`.
    pub cs: Vec<f64>,
    /// Unclipped `pi/mu`.
    pub raw_ratios: Vec<f64>,
    /// Value estimates the targets were built from.
    pub baselines: Vec<f64>,
}

/// Target-policy probability of each recorded action, validated against the
/// behavior probability.
pub(crate) fn importance_ratios(traj: &Trajectory, policy: &PolicyParams) -> Result<Vec<f64>> {
    traj.steps
        .iter()
        .map(|s| {
            if !(s.behavior_prob > 0.0 && s.behavior_prob <= 1.0) {
                return Err(Error::DataIntegrity(format!(
                    "behavior probability {} at step {} of {}",
                    s.behavior_prob, s.step_index, traj.model_id
                )));
            }
            policy.check_tag(s.tag)?;
            Ok(policy.probs(s.state, s.tag)[s.action] / s.behavior_prob)
        })
        .collect()
}

/// Backward V-trace recursion.
pub fn vtrace_targets(traj: &Trajectory, policy: &PolicyParams, cfg: &LossConfig) -> Result<VTraceOutput> {
    let raw = importance_ratios(traj, policy)?;
    let n = traj.len();
    let rhos: Vec<f64> = raw.iter().map(|&r| r.min(cfg.rho_bar)).collect();
    let cs: Vec<f64> = raw.iter().map(|&r| r.min(cfg.c_bar)).collect();
    let baselines: Vec<f64> = traj.steps.iter().map(|s| policy.value(s.state, s.tag)).collect();
    let next_value = |t: usize| if t + 1 < n { baselines[t + 1] } else { traj.bootstrap_value };

    let mut targets = vec![0.0; n];
    // v_{s+1} - V(x_{s+1}); zero past the end because v_T = V(x_T) = bootstrap.
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let r = traj.steps[t].reward;
        let delta = rhos[t] * (r + cfg.gamma * next_value(t) - baselines[t]);
        carry = delta + cfg.gamma * cs[t] * carry;
        targets[t] = baselines[t] + carry;
    }
    let advantages = (0..n)
        .map(|t| {
            let v_next = if t + 1 < n { targets[t + 1] } else { traj.bootstrap_value };
            rhos[t] * (traj.steps[t].reward + cfg.gamma * v_next - baselines[t])
        })
        .collect();
    Ok(VTraceOutput {
        targets,
        advantages,
        rhos,
        cs,
        raw_ratios: raw,
        baselines,
    })
}

/// Policy-gradient and value-regression losses with `frozen` targets:
/// `-sum adv_t log pi(a_t|x_t)` and `0.5 sum (v_t - V(x_t))^2`.
pub fn vtrace_surrogate(traj: &Trajectory, policy: &PolicyParams, frozen: &VTraceOutput) -> (TermLoss, TermLoss) {
    let mut pg = TermLoss::zero(policy);
    let mut value = TermLoss::zero(policy);
    for (t, s) in traj.steps.iter().enumerate() {
        let adv = frozen.advantages[t];
        let logp = policy.log_probs(s.state, s.tag);
        pg.loss -= adv * logp[s.action];
        let probs = policy.probs(s.state, s.tag);
        let row = pg.grad.logit_row_mut(policy, s.state, s.tag);
        for (a, g) in row.iter_mut().enumerate() {
            let onehot = if a == s.action { 1.0 } else { 0.0 };
            *g -= adv * (onehot - probs[a]);
        }
        let err = frozen.targets[t] - policy.value(s.state, s.tag);
        value.loss += VALUE_LOSS_COEF * err * err;
        value.grad.values[policy.slot(s.state, s.tag)] -= 2.0 * VALUE_LOSS_COEF * err;
    }
    (pg, value)
}

pub fn vtrace_loss(traj: &Trajectory, policy: &PolicyParams, cfg: &LossConfig) -> Result<(TermLoss, TermLoss, VTraceOutput)> {
    let out = vtrace_targets(traj, policy, cfg)?;
    let (pg, value) = vtrace_surrogate(traj, policy, &out);
    Ok((pg, value, out))
}
