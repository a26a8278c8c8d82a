use crate::error::{Error, Result};
use crate::game::check_distribution;
use crate::losses::TermLoss;
use crate::policy::{PolicyParams, Trajectory};

/// `KL(target || softmax(logits))` with `0 log 0 = 0`, and its gradient with
/// respect to the logits, `pi - target`.
pub fn kl_divergence(target: &[f64], logits: &[f64]) -> (f64, Vec<f64>) {
    let logp = crate::policy::log_softmax(logits);
    let kl = target
        .iter()
        .zip(&logp)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, lq)| p * (p.ln() - lq))
        .sum();
    let grad = logp.iter().zip(target).map(|(lq, p)| lq.exp() - p).collect();
    (kl, grad)
}

fn add_kl(out: &mut TermLoss, policy: &PolicyParams, state: usize, tag: usize, target: &[f64]) {
    let (kl, g) = kl_divergence(target, policy.logits_at(state, tag));
    out.loss += kl;
    for (dst, src) in out.grad.logit_row_mut(policy, state, tag).iter_mut().zip(g) {
        *dst += src;
    }
}

/// Rule-guided term: `KL(expert || pi)` summed over critical steps.
pub fn rgps_loss(traj: &Trajectory, policy: &PolicyParams) -> Result<TermLoss> {
    let mut out = TermLoss::zero(policy);
    for s in &traj.steps {
        if let Some(expert) = &s.expert {
            if expert.len() != policy.num_moves {
                return Err(Error::Domain(format!(
                    "expert distribution has {} entries, expected {}",
                    expert.len(),
                    policy.num_moves
                )));
            }
            check_distribution(expert).map_err(|e| Error::Domain(format!("expert distribution at step {}: {e}", s.step_index)))?;
            add_kl(&mut out, policy, s.state, s.tag, expert);
        }
    }
    Ok(out)
}

/// Divergence-augmented term: `KL(prev || pi)` over steps with
/// `step_index < window`. Zero when there is no previous-period snapshot.
pub fn dapo_loss(traj: &Trajectory, policy: &PolicyParams, prev: Option<&PolicyParams>, window: usize) -> TermLoss {
    let mut out = TermLoss::zero(policy);
    if let Some(prev) = prev {
        for s in traj.steps.iter().filter(|s| s.step_index < window) {
            add_kl(&mut out, policy, s.state, s.tag, &prev.probs(s.state, s.tag));
        }
    }
    out
}

/// Distillation term: `KL(teacher || pi)` over every step.
pub fn distill_loss(traj: &Trajectory, policy: &PolicyParams, teacher: &PolicyParams) -> TermLoss {
    let mut out = TermLoss::zero(policy);
    for s in &traj.steps {
        add_kl(&mut out, policy, s.state, s.tag, &teacher.probs(s.state, s.tag));
    }
    out
}

/// Negative entropy `sum pi log pi` over every step.
pub fn entropy_loss(traj: &Trajectory, policy: &PolicyParams) -> TermLoss {
    let mut out = TermLoss::zero(policy);
    for s in &traj.steps {
        let logp = policy.log_probs(s.state, s.tag);
        let neg_entropy: f64 = logp.iter().map(|lp| lp.exp() * lp).sum();
        out.loss += neg_entropy;
        let row = out.grad.logit_row_mut(policy, s.state, s.tag);
        for (g, lp) in row.iter_mut().zip(&logp) {
            *g += lp.exp() * (lp - neg_entropy);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TrajectoryStep;

    fn single(state: usize, expert: Option<Vec<f64>>, step_index: usize) -> Trajectory {
        Trajectory {
            model_id: "t".into(),
            opponent_id: "o".into(),
            steps: vec![TrajectoryStep {
                state,
                tag: 0,
                action: 0,
                behavior_prob: 0.5,
                reward: 0.0,
                expert,
                step_index,
            }],
            bootstrap_value: 0.0,
            outcome: 0,
        }
    }

    #[test]
    fn rgps_without_critical_steps_is_zero() {
        let p = PolicyParams::uniform(3, 1);
        let out = rgps_loss(&single(0, None, 0), &p).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.grad.norm(), 0.0);
    }

    #[test]
    fn rgps_one_hot_vs_uniform() {
        let p = PolicyParams::uniform(4, 1);
        let out = rgps_loss(&single(0, Some(vec![0.0, 1.0, 0.0, 0.0]), 1), &p).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
        assert!((out.loss - 1.3863).abs() < 1e-4);
        assert_eq!(&out.grad.logits[..4], &[0.25, -0.75, 0.25, 0.25]);
    }

    #[test]
    fn rgps_matching_expert_is_zero() {
        let mut p = PolicyParams::uniform(2, 1);
        p.logits_at_mut(0, 0).copy_from_slice(&[800.0, 0.0]);
        let out = rgps_loss(&single(0, Some(vec![1.0, 0.0]), 1), &p).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn rgps_rejects_unnormalized_expert() {
        let p = PolicyParams::uniform(2, 1);
        assert!(rgps_loss(&single(0, Some(vec![0.7, 0.7]), 1), &p).is_err());
    }

    #[test]
    fn dapo_closed_form_and_window() {
        let prev = PolicyParams::uniform(2, 1);
        let mut live = PolicyParams::uniform(2, 1);
        live.logits_at_mut(0, 0).copy_from_slice(&[0.0, 3f64.ln()]);
        let expected = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        let inside = dapo_loss(&single(0, None, 1), &live, Some(&prev), 2);
        assert!((inside.loss - expected).abs() < 1e-12);
        assert!((inside.loss - 0.14384).abs() < 1e-5);
        let outside = dapo_loss(&single(0, None, 2), &live, Some(&prev), 2);
        assert_eq!(outside.loss, 0.0);
        assert_eq!(dapo_loss(&single(0, None, 0), &live, None, 2).loss, 0.0);
        assert!(dapo_loss(&single(0, None, 0), &live, Some(&live), 2).loss.abs() < 1e-15);
    }

    #[test]
    fn distill_matches_dapo_arithmetic() {
        let teacher = PolicyParams::uniform(2, 1);
        let mut live = PolicyParams::uniform(2, 1);
        live.logits_at_mut(0, 0).copy_from_slice(&[0.0, 3f64.ln()]);
        let d = distill_loss(&single(0, None, 7), &live, &teacher);
        assert!((d.loss - 0.143841).abs() < 1e-6);
        assert_eq!(distill_loss(&single(0, None, 7), &teacher, &teacher).loss, 0.0);
    }

    #[test]
    fn entropy_extremes() {
        let p = PolicyParams::uniform(3, 1);
        let e = entropy_loss(&single(0, None, 0), &p);
        assert!((e.loss + 3f64.ln()).abs() < 1e-12);
        assert!(e.grad.norm() < 1e-15);
        let mut sharp = PolicyParams::uniform(3, 1);
        sharp.logits_at_mut(0, 0).copy_from_slice(&[40.0, 0.0, 0.0]);
        assert!(entropy_loss(&single(0, None, 0), &sharp).loss.abs() < 1e-12);
    }
}
