//! The learner's objective.
//!
//! The reinforcement-learning loss is the sum of a V-trace actor-critic term,
//! an UPGO term, an entropy regularizer and a distillation KL toward the
//! agent's supervised teacher. Two KL terms may be added on top: a
//! rule-guided term on critical states and a divergence-augmented term that
//! anchors early-episode behavior to the previous period's snapshot.
//!
//! Every term is computed as a surrogate whose targets (V-trace targets, UPGO
//! returns) are held fixed, so each exposes an exact gradient with respect to
//! the tabular logits and values.

mod kl;
mod upgo;
mod vtrace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{PolicyParams, Trajectory};

pub use kl::{dapo_loss, distill_loss, entropy_loss, kl_divergence, rgps_loss};
pub use upgo::{upgo_loss, upgo_returns, upgo_surrogate, UpgoOutput};
pub use vtrace::{vtrace_loss, vtrace_surrogate, vtrace_targets, VTraceOutput};

/// Weight of the squared-error value regression inside the V-trace term.
pub const VALUE_LOSS_COEF: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub gamma: f64,
    pub rho_bar: f64,
    pub c_bar: f64,
    pub lambda_vtrace: f64,
    pub lambda_upgo: f64,
    pub lambda_entropy: f64,
    pub lambda_distill: f64,
    pub lambda_rgps: f64,
    pub lambda_dapo: f64,
    /// Number of opening steps where the DAPO term is active; `None` means
    /// `ceil(0.4 * horizon)`.
    pub dapo_window: Option<usize>,
    pub learning_rate: f64,
    /// Drop negative UPGO advantages (the "upgoing" convention).
    pub upgo_clip_negative: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 1.0,
            rho_bar: 1.0,
            c_bar: 1.0,
            lambda_vtrace: 1.0,
            lambda_upgo: 1.0,
            lambda_entropy: 0.01,
            lambda_distill: 0.01,
            lambda_rgps: 1.0,
            lambda_dapo: 1.0,
            dapo_window: None,
            learning_rate: 0.05,
            upgo_clip_negative: true,
        }
    }
}

impl LossConfig {
    pub fn dapo_window_for(&self, horizon: usize) -> usize {
        self.dapo_window
            .unwrap_or_else(|| (0.4 * horizon as f64).ceil() as usize)
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        let lambdas = [
            self.lambda_vtrace,
            self.lambda_upgo,
            self.lambda_entropy,
            self.lambda_distill,
            self.lambda_rgps,
            self.lambda_dapo,
        ];
        if lambdas.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!("loss coefficients must be finite and >= 0: {lambdas:?}")));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.rho_bar > 0.0 && self.c_bar > 0.0) {
            return Err(Error::Config("clip thresholds must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.dapo_window_for(horizon) > horizon {
            return Err(Error::Config(format!(
                "dapo window {} exceeds horizon {horizon}",
                self.dapo_window_for(horizon)
            )));
        }
        Ok(())
    }
}

/// Dense gradient with the same layout as [`PolicyParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub logits: Vec<f64>,
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn zeros_like(p: &PolicyParams) -> Self {
        Gradient {
            logits: vec![0.0; p.logits.len()],
            values: vec![0.0; p.values.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &Gradient, c: f64) {
        for (a, b) in self.logits.iter_mut().zip(&other.logits) {
            *a += c * b;
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.logits.iter_mut().chain(self.values.iter_mut()).for_each(|x| *x *= c);
    }

    pub fn norm(&self) -> f64 {
        self.logits
            .iter()
            .chain(&self.values)
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.logits.iter().chain(&self.values).all(|x| x.is_finite())
    }

    pub(crate) fn logit_row_mut(&mut self, p: &PolicyParams, state: usize, tag: usize) -> &mut [f64] {
        let base = p.slot(state, tag) * p.num_moves;
        &mut self.logits[base..base + p.num_moves]
    }
}

/// A scalar loss with its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct TermLoss {
    pub loss: f64,
    pub grad: Gradient,
}

impl TermLoss {
    pub fn zero(p: &PolicyParams) -> Self {
        TermLoss {
            loss: 0.0,
            grad: Gradient::zeros_like(p),
        }
    }

    fn accumulate(&mut self, other: &TermLoss) {
        self.loss += other.loss;
        self.grad.add_scaled(&other.grad, 1.0);
    }

    fn scale(&mut self, c: f64) {
        self.loss *= c;
        self.grad.scale(c);
    }
}

/// Un-weighted per-term losses of a batch (averaged over trajectories).
#[derive(Clone, Debug)]
pub struct LossTerms {
    pub vtrace_policy: TermLoss,
    pub vtrace_value: TermLoss,
    pub upgo: TermLoss,
    pub entropy: TermLoss,
    pub distill: TermLoss,
    pub rgps: TermLoss,
    pub dapo: TermLoss,
    /// Fraction of steps whose importance ratio hit `rho_bar`.
    pub clipped_fraction: f64,
    pub steps: usize,
}

impl LossTerms {
    /// The coefficient-weighted objective and its gradient.
    pub fn combine(&self, cfg: &LossConfig) -> (f64, Gradient) {
        let parts = [
            (&self.vtrace_policy, cfg.lambda_vtrace),
            (&self.vtrace_value, cfg.lambda_vtrace),
            (&self.upgo, cfg.lambda_upgo),
            (&self.entropy, cfg.lambda_entropy),
            (&self.distill, cfg.lambda_distill),
            (&self.rgps, cfg.lambda_rgps),
            (&self.dapo, cfg.lambda_dapo),
        ];
        let mut grad = Gradient::zeros_like_len(&self.vtrace_policy.grad);
        let mut total = 0.0;
        for (term, lambda) in parts {
            if lambda != 0.0 {
                total += lambda * term.loss;
                grad.add_scaled(&term.grad, lambda);
            }
        }
        (total, grad)
    }
}

impl Gradient {
    fn zeros_like_len(g: &Gradient) -> Self {
        Gradient {
            logits: vec![0.0; g.logits.len()],
            values: vec![0.0; g.values.len()],
        }
    }
}

/// Itemized record of one learner update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub vtrace_policy: f64,
    pub vtrace_value: f64,
    pub upgo: f64,
    pub entropy: f64,
    pub distill: f64,
    pub rgps: f64,
    pub dapo: f64,
    pub total: f64,
    pub grad_norm: f64,
    /// Share of steps with a clipped importance ratio. Kept for a future
    /// ratio-clipped surrogate.
    pub clipped_fraction: f64,
    pub steps: usize,
}

/// Computes every term for a batch, averaged over trajectories.
pub fn compute_terms(
    batch: &[Trajectory],
    policy: &PolicyParams,
    cfg: &LossConfig,
    teacher: Option<&PolicyParams>,
    prev_snapshot: Option<&PolicyParams>,
    horizon: usize,
) -> Result<LossTerms> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let window = cfg.dapo_window_for(horizon);
    let mut terms = LossTerms {
        vtrace_policy: TermLoss::zero(policy),
        vtrace_value: TermLoss::zero(policy),
        upgo: TermLoss::zero(policy),
        entropy: TermLoss::zero(policy),
        distill: TermLoss::zero(policy),
        rgps: TermLoss::zero(policy),
        dapo: TermLoss::zero(policy),
        clipped_fraction: 0.0,
        steps: 0,
    };
    let mut clipped = 0usize;
    for traj in batch {
        let (pg, value, vt) = vtrace_loss(traj, policy, cfg)?;
        terms.vtrace_policy.accumulate(&pg);
        terms.vtrace_value.accumulate(&value);
        clipped += vt.rhos.iter().zip(&vt.raw_ratios).filter(|(r, raw)| *raw > *r).count();
        terms.upgo.accumulate(&upgo_loss(traj, policy, cfg)?);
        terms.entropy.accumulate(&entropy_loss(traj, policy));
        if let Some(t) = teacher {
            terms.distill.accumulate(&distill_loss(traj, policy, t));
        }
        terms.rgps.accumulate(&rgps_loss(traj, policy)?);
        terms.dapo.accumulate(&dapo_loss(traj, policy, prev_snapshot, window));
        terms.steps += traj.len();
    }
    let inv = 1.0 / batch.len() as f64;
    for t in [
        &mut terms.vtrace_policy,
        &mut terms.vtrace_value,
        &mut terms.upgo,
        &mut terms.entropy,
        &mut terms.distill,
        &mut terms.rgps,
        &mut terms.dapo,
    ] {
        t.scale(inv);
    }
    terms.clipped_fraction = clipped as f64 / terms.steps.max(1) as f64;
    Ok(terms)
}

/// One gradient step on the weighted objective. Fails without touching the
/// policy if any term is non-finite.
pub fn total_update(
    batch: &[Trajectory],
    policy: &PolicyParams,
    cfg: &LossConfig,
    teacher: Option<&PolicyParams>,
    prev_snapshot: Option<&PolicyParams>,
    horizon: usize,
) -> Result<(PolicyParams, LossReport)> {
    let terms = compute_terms(batch, policy, cfg, teacher, prev_snapshot, horizon)?;
    let (total, grad) = terms.combine(cfg);
    let report = LossReport {
        vtrace_policy: terms.vtrace_policy.loss,
        vtrace_value: terms.vtrace_value.loss,
        upgo: terms.upgo.loss,
        entropy: terms.entropy.loss,
        distill: terms.distill.loss,
        rgps: terms.rgps.loss,
        dapo: terms.dapo.loss,
        total,
        grad_norm: grad.norm(),
        clipped_fraction: terms.clipped_fraction,
        steps: terms.steps,
    };
    if !total.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite(format!("{report:?}")));
    }
    let mut next = policy.clone();
    apply_gradient(&mut next, &grad, cfg.learning_rate);
    Ok((next, report))
}

pub fn apply_gradient(p: &mut PolicyParams, grad: &Gradient, lr: f64) {
    for (x, g) in p.logits.iter_mut().zip(&grad.logits) {
        *x -= lr * g;
    }
    for (x, g) in p.values.iter_mut().zip(&grad.values) {
        *x -= lr * g;
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    use crate::policy::{PolicyParams, Trajectory, TrajectoryStep};

    pub fn random_policy(m: usize, tags: usize, rng: &mut ChaCha8Rng) -> PolicyParams {
        let mut p = PolicyParams::uniform(m, tags);
        for l in p.logits.iter_mut() {
            *l = rng.random::<f64>() * 2.0 - 1.0;
        }
        for v in p.values.iter_mut() {
            *v = rng.random::<f64>() - 0.5;
        }
        p
    }

    /// Random trajectory over a handful of states, with random behavior
    /// probabilities and a terminal reward.
    pub fn random_trajectory(p: &PolicyParams, len: usize, rng: &mut ChaCha8Rng) -> Trajectory {
        let m = p.num_moves;
        let steps = (0..len)
            .map(|t| {
                let expert = if rng.random::<f64>() < 0.5 {
                    let mut d: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                    let s: f64 = d.iter().sum();
                    d.iter_mut().for_each(|x| *x /= s);
                    Some(d)
                } else {
                    None
                };
                TrajectoryStep {
                    state: rng.random_range(0..6),
                    tag: rng.random_range(0..p.tag_count),
                    action: rng.random_range(0..m),
                    behavior_prob: 0.1 + 0.9 * rng.random::<f64>(),
                    reward: if t + 1 == len { [-1.0, 0.0, 1.0][rng.random_range(0..3)] } else { 0.0 },
                    expert,
                    step_index: t,
                }
            })
            .collect();
        Trajectory {
            model_id: "test".into(),
            opponent_id: "opp".into(),
            steps,
            bootstrap_value: 0.0,
            outcome: 0,
        }
    }
}
