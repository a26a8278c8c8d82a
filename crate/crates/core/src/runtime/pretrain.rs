//! Starting policies: an imitation-learned baseline cloned from the elite bot,
//! and one fine-tuned copy per strategy tag.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{specific_model, ExperimentConfig, PretrainBlock, BASE_MODEL};
use crate::error::{Error, Result};
use crate::game::{GameSpec, RuleSet, ScriptedBot, Seat};
use crate::imitation::{DemoCorpus, DemoStep, Demonstration, Reweighting, SampledTrajectory, StreamingFeeder};
use crate::losses::{total_update, LossConfig};
use crate::policy::{rollout, Actor, BotActor, PolicyParams, Snapshot};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoPayload {
    pub state: usize,
    pub action: usize,
}

pub fn move_label(a: usize) -> String {
    format!("move-{a}")
}

/// The elite bot against a rotating set of opponents, seats alternating.
pub fn elite_demos(spec: &GameSpec, games: usize, seed_base: u64) -> Result<DemoCorpus<DemoPayload>> {
    let elite = BotActor::new(ScriptedBot::Elite);
    let m = spec.num_moves;
    let demos = (0..games)
        .map(|g| {
            let opp = match g % 4 {
                0 => ScriptedBot::Uniform,
                1 => ScriptedBot::Elite,
                2 => ScriptedBot::CounterLast,
                _ => ScriptedBot::Pure((g / 4) % m),
            };
            let opp = BotActor::new(opp);
            let s = seed::derive(seed_base, &[seed::label("demo"), g as u64]);
            let (r, seat) = if g % 2 == 0 {
                (rollout(spec, &RuleSet::empty(), &elite, &opp, (0, 0), s)?, Seat::First)
            } else {
                (rollout(spec, &RuleSet::empty(), &opp, &elite, (0, 0), s)?, Seat::Second)
            };
            let steps = r
                .trajectory(seat)
                .steps
                .iter()
                .map(|st| DemoStep {
                    label: move_label(st.action),
                    payload: DemoPayload {
                        state: st.state,
                        action: st.action,
                    },
                })
                .collect();
            Ok(Demonstration { steps })
        })
        .collect::<Result<Vec<_>>>()?;
    DemoCorpus::new(demos)
}

/// One weighted cross-entropy step on tag `tag`. Returns the batch loss
/// before the step.
pub fn imitation_step(
    policy: &mut PolicyParams,
    corpus: &DemoCorpus<DemoPayload>,
    batch: &[SampledTrajectory],
    tag: usize,
    lr: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("empty imitation batch".into()));
    }
    let m = policy.num_moves;
    let mut grad = vec![0.0; policy.logits.len()];
    let mut loss = 0.0;
    let inv = 1.0 / batch.len() as f64;
    for s in batch {
        let demo = &corpus.demonstrations()[s.index];
        for (step, &w) in demo.steps.iter().zip(&s.training_weights) {
            let DemoPayload { state, action } = step.payload;
            if state >= policy.num_states || action >= m {
                return Err(Error::DataIntegrity(format!("demo step {state}/{action} out of range")));
            }
            let probs = policy.probs(state, tag);
            loss -= inv * w * probs[action].ln();
            let base = policy.slot(state, tag) * m;
            for (a, p) in probs.iter().enumerate() {
                let target = if a == action { 1.0 } else { 0.0 };
                grad[base + a] += inv * w * (p - target);
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("imitation loss {loss}")));
    }
    policy.logits.iter_mut().zip(&grad).for_each(|(x, g)| *x -= lr * g);
    Ok(loss)
}

/// Copies the rows of tag 0 into every other tag.
pub fn broadcast_tag_zero(p: &mut PolicyParams) {
    let src = p.clone();
    for s in 0..p.num_states {
        for z in 1..p.tag_count {
            p.logits_at_mut(s, z).copy_from_slice(src.logits_at(s, 0));
            *p.value_mut(s, z) = src.value(s, 0);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub il_loss_first: f64,
    pub il_loss_last: f64,
    /// Win-rate of each specific model against its sparring bot over the last
    /// fine-tuning batch.
    pub specific_win_rates: Vec<f64>,
}

pub fn pretrain_baseline(spec: &GameSpec, p: &PretrainBlock, tag_count: usize, seed_base: u64) -> Result<(PolicyParams, f64, f64)> {
    let corpus = elite_demos(spec, p.demo_games, seed_base)?;
    let feeder = StreamingFeeder::new(
        &corpus,
        &p.weights,
        Reweighting::Unbiased,
        p.il_batch,
        seed::rng(seed_base, &[seed::label("il-feed")]),
    )?;
    let mut policy = PolicyParams::uniform(spec.num_moves, tag_count);
    let (mut first, mut last) = (f64::NAN, f64::NAN);
    for (u, batch) in feeder.take(p.il_updates).enumerate() {
        last = imitation_step(&mut policy, &corpus, &batch, 0, p.il_learning_rate)?;
        if u == 0 {
            first = last;
        }
    }
    broadcast_tag_zero(&mut policy);
    Ok((policy, first, last))
}

/// Sparring partner for tag `k` (1-based): pure moves first, then the counter bot.
pub fn sparring_bot(k: usize, m: usize) -> ScriptedBot {
    if k >= 1 && k <= m {
        ScriptedBot::Pure(k - 1)
    } else {
        ScriptedBot::CounterLast
    }
}

/// On-policy fine-tuning of tag `k` against its sparring bot.
pub fn pretrain_specific(spec: &GameSpec, base: &PolicyParams, k: usize, p: &PretrainBlock, seed_base: u64) -> Result<(PolicyParams, f64)> {
    base.check_tag(k)?;
    let bot = BotActor::new(sparring_bot(k, spec.num_moves));
    let cfg = LossConfig {
        lambda_distill: 0.0,
        lambda_rgps: 0.0,
        lambda_dapo: 0.0,
        learning_rate: p.rl_learning_rate,
        ..LossConfig::default()
    };
    let mut policy = base.clone();
    let mut win_rate = 0.0;
    for u in 0..p.rl_updates {
        let me = Snapshot::of(&policy, specific_model(k));
        let mut batch = Vec::with_capacity(p.rl_batch);
        let mut score = 0.0;
        for i in 0..p.rl_batch {
            let s = seed::derive(seed_base, &[seed::label("specific"), k as u64, u as u64, i as u64]);
            let traj = if i % 2 == 0 {
                rollout(spec, &RuleSet::empty(), &me, &bot, (k, 0), s)?.first
            } else {
                rollout(spec, &RuleSet::empty(), &bot, &me, (0, k), s)?.second
            };
            score += (traj.outcome as f64 + 1.0) / 2.0;
            batch.push(traj);
        }
        win_rate = score / p.rl_batch as f64;
        policy = total_update(&batch, &policy, &cfg, None, None, spec.horizon)?.0;
    }
    Ok((policy, win_rate))
}

/// Every starting policy a config needs, keyed by model id.
pub fn pretrain_all(cfg: &ExperimentConfig, spec: &GameSpec) -> Result<(BTreeMap<String, PolicyParams>, PretrainSummary)> {
    let seed_base = seed::derive(cfg.runtime.seed, &[seed::label("pretrain")]);
    let (base, first, last) = pretrain_baseline(spec, &cfg.pretrain, cfg.tag_count(), seed_base)?;
    let specific = (1..=cfg.league.strategy_count)
        .into_par_iter()
        .map(|k| pretrain_specific(spec, &base, k, &cfg.pretrain, seed_base))
        .collect::<Result<Vec<_>>>()?;
    let mut out = BTreeMap::new();
    let summary = PretrainSummary {
        il_loss_first: first,
        il_loss_last: last,
        specific_win_rates: specific.iter().map(|(_, w)| *w).collect(),
    };
    for (k, (p, _)) in specific.into_iter().enumerate() {
        out.insert(specific_model(k + 1), p);
    }
    out.insert(BASE_MODEL.to_string(), base);
    Ok((out, summary))
}

/// Probability that `actor` plays the counter of the opponent's last move,
/// averaged over every last-move pair at an even score.
pub fn counter_agreement(actor: &dyn Actor, spec: &GameSpec, tag: usize) -> f64 {
    let mut total = 0.0;
    let mut n = 0.0;
    for mine in 0..spec.num_moves {
        for theirs in 0..spec.num_moves {
            let view = crate::game::GameState {
                step_index: 1,
                last_moves: Some((mine, theirs)),
                cumulative_score: 0.0,
            };
            total += actor.action_probs(spec, &view, tag)[spec.counter(theirs)];
            n += 1.0;
        }
    }
    total / n
}
