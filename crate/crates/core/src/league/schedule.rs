use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentState, League, Role, RoleConfig, Target, WinRateTable};
use crate::error::{Error, Result};

/// Prior win-rate for pairs that have not met yet.
pub const UNSEEN_WIN_RATE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    SelfPlay,
    Pfsp,
    Forgotten,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPlan {
    pub learner: String,
    pub opponent: String,
    pub branch: Branch,
}

/// `(1 - p)^k` for each win-rate.
pub fn pfsp_weights(win_rates: &[f64], exponent: f64) -> Vec<f64> {
    win_rates.iter().map(|p| (1.0 - p).clamp(0.0, 1.0).powf(exponent)).collect()
}

/// Prioritized fictitious self-play draw over `candidates`, weighting each by
/// the learner's win-rate against it. Falls back to uniform when every
/// candidate is fully beaten.
pub fn pfsp_pick<'a>(
    learner: &str,
    candidates: &[&'a str],
    table: &WinRateTable,
    exponent: f64,
    rng: &mut ChaCha8Rng,
) -> Result<&'a str> {
    if candidates.is_empty() {
        return Err(Error::EmptyLeague);
    }
    let rates: Vec<f64> = candidates
        .iter()
        .map(|c| table.win_rate(learner, c).unwrap_or(UNSEEN_WIN_RATE))
        .collect();
    let mut w = pfsp_weights(&rates, exponent);
    let mut total: f64 = w.iter().sum();
    if total <= 0.0 {
        w = vec![1.0; candidates.len()];
        total = candidates.len() as f64;
    }
    let mut u = rng.random::<f64>() * total;
    for (c, wi) in candidates.iter().zip(&w) {
        if *wi > 0.0 && u < *wi {
            return Ok(c);
        }
        u -= wi;
    }
    let last = w.iter().rposition(|&x| x > 0.0).expect("positive weight");
    Ok(candidates[last])
}

/// Picks the next opponent for `agent`. The league must hold at least one
/// frozen member.
pub fn schedule_opponent(league: &League, agent: &AgentState, cfg: &RoleConfig, rng: &mut ChaCha8Rng) -> Result<MatchPlan> {
    let frozen = league.frozen();
    if frozen.is_empty() {
        return Err(Error::EmptyLeague);
    }
    let main = league.main_live()?;
    let table = league.winrates();
    let learner = agent.live_id.as_str();
    let plan = |opponent: &str, branch| MatchPlan {
        learner: learner.to_string(),
        opponent: opponent.to_string(),
        branch,
    };
    let all_frozen: Vec<&str> = frozen.iter().map(|r| r.model_id.as_str()).collect();

    if agent.role == Role::MA {
        let mix = cfg.ma_mixture;
        let u: f64 = rng.random();
        if u < mix.self_play {
            return Ok(plan(learner, Branch::SelfPlay));
        }
        if u >= mix.self_play + mix.pfsp {
            let forgotten: Vec<&str> = frozen
                .iter()
                .filter(|r| r.role == Role::MA && r.agent == agent.name)
                .filter(|r| {
                    table
                        .win_rate(main, &r.model_id)
                        .is_some_and(|p| p < cfg.forgotten_threshold)
                })
                .map(|r| r.model_id.as_str())
                .collect();
            if !forgotten.is_empty() {
                let pick = pfsp_pick(learner, &forgotten, table, cfg.pfsp_exponent, rng)?;
                return Ok(plan(pick, Branch::Forgotten));
            }
        }
        let pick = pfsp_pick(learner, &all_frozen, table, cfg.pfsp_exponent, rng)?;
        return Ok(plan(pick, Branch::Pfsp));
    }

    let mut candidates: Vec<&str> = match agent.target {
        Target::MainAgent => frozen
            .iter()
            .filter(|r| r.role == Role::MA)
            .map(|r| r.model_id.as_str())
            .collect(),
        Target::WholeLeague => all_frozen,
    };
    candidates.push(main);
    let pick = pfsp_pick(learner, &candidates, table, cfg.pfsp_exponent, rng)?;
    Ok(plan(pick, Branch::Pfsp))
}
