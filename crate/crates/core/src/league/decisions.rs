//! Pure period-boundary rules. Callers freeze the current model before asking
//! for an inherit/reset decision, so the just-frozen model is a candidate.

use serde::{Deserialize, Serialize};

use super::{LineageTree, RoleConfig};

/// AEE prefers the candidate nearest this win-rate against the main agent.
pub const AEE_PREFERRED_RATE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum PeriodDecision {
    Continue,
    Inherit(String),
    Reset,
}

/// A period ends once the minimum is met and the agent either beats its
/// target above the threshold or hits the maximum.
pub fn boundary_reached(win_rate: Option<f64>, steps_in_period: u64, cfg: &RoleConfig) -> bool {
    steps_in_period >= cfg.max_period_steps
        || (steps_in_period >= cfg.min_period_steps && win_rate.is_some_and(|p| p > cfg.win_threshold))
}

/// ME, LE and SE: freeze and reset on a boundary, otherwise keep going.
pub fn standard_reset_decision(win_rate: Option<f64>, steps_in_period: u64, cfg: &RoleConfig) -> PeriodDecision {
    if boundary_reached(win_rate, steps_in_period, cfg) {
        PeriodDecision::Reset
    } else {
        PeriodDecision::Continue
    }
}

/// EE freezes on the same trigger as the standard roles.
pub fn ee_freeze_now(win_rate: Option<f64>, steps_in_period: u64, cfg: &RoleConfig) -> bool {
    boundary_reached(win_rate, steps_in_period, cfg)
}

/// Inherit the frozen model with the best win-rate against the main agent.
/// Models without results are skipped; with nothing left the agent restarts
/// from its initial model. Ties go to the newer model.
pub fn ee_period_decision(tree: &LineageTree, win_rate_vs_main: &dyn Fn(&str) -> Option<f64>) -> PeriodDecision {
    let mut best: Option<(f64, u64, &str)> = None;
    for n in tree.frozen() {
        if let Some(p) = win_rate_vs_main(&n.model_id) {
            if best.is_none_or(|(bp, bc, _)| p > bp || (p == bp && n.created > bc)) {
                best = Some((p, n.created, &n.model_id));
            }
        }
    }
    match best {
        Some((_, _, id)) => PeriodDecision::Inherit(id.to_string()),
        None => PeriodDecision::Reset,
    }
}

/// Among frozen leaves whose win-rate against the main agent lies in the
/// inclusive AEE window, inherit the one closest to an even match; reset to
/// the initial model when none qualifies. Ties go to the newer model.
pub fn aee_period_decision(
    tree: &LineageTree,
    win_rate_vs_main: &dyn Fn(&str) -> Option<f64>,
    cfg: &RoleConfig,
) -> PeriodDecision {
    let (lo, hi) = cfg.aee_window;
    let mut best: Option<(f64, u64, &str)> = None;
    for n in tree.leaves().into_iter().filter(|n| n.frozen) {
        let Some(p) = win_rate_vs_main(&n.model_id) else { continue };
        if !(lo..=hi).contains(&p) {
            continue;
        }
        let d = (p - AEE_PREFERRED_RATE).abs();
        if best.is_none_or(|(bd, bc, _)| d < bd || (d == bd && n.created > bc)) {
            best = Some((d, n.created, &n.model_id));
        }
    }
    match best {
        Some((_, _, id)) => PeriodDecision::Inherit(id.to_string()),
        None => PeriodDecision::Reset,
    }
}

pub fn ma_snapshot_due(steps_since_snapshot: u64, cfg: &RoleConfig) -> bool {
    steps_since_snapshot >= cfg.ma_snapshot_steps
}
