//! Fixtures shared by the benchmarks.

use rand::Rng;

use league_core::game::generate_cyclic_game;
use league_core::policy::{rollout, BotActor};
use league_core::{GameSpec, PayoffMatrix, PolicyParams, RuleSet, ScriptedBot, Snapshot, Trajectory};

pub fn game(m: usize, horizon: usize) -> GameSpec {
    generate_cyclic_game(m, horizon, 0.1, 7).expect("valid game")
}

/// A policy with seeded random logits and values.
pub fn policy(m: usize, tags: usize, seed: u64) -> PolicyParams {
    let mut rng = league_core::seed::rng(seed, &[]);
    let mut p = PolicyParams::uniform(m, tags);
    p.logits.iter_mut().for_each(|l| *l = rng.random::<f64>() * 2.0 - 1.0);
    p.values.iter_mut().for_each(|v| *v = rng.random::<f64>() - 0.5);
    p
}

/// `n` learner-seat trajectories of `p` against the elite bot.
pub fn batch(spec: &GameSpec, rules: &RuleSet, p: &PolicyParams, n: usize) -> Vec<Trajectory> {
    let me = Snapshot::of(p, "bench");
    let bot = BotActor::new(ScriptedBot::Elite);
    (0..n)
        .map(|i| {
            rollout(spec, rules, &me, &bot, (0, 0), i as u64).expect("rollout").first
        })
        .collect()
}

/// Random consistent win-rate table over `k` models; `m0` is named `elite`.
pub fn payoff(k: usize, seed: u64) -> PayoffMatrix {
    let mut rng = league_core::seed::rng(seed, &[]);
    let mut p = vec![vec![0.5; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let x: f64 = rng.random_range(0.05..0.95);
            p[i][j] = x;
            p[j][i] = 1.0 - x;
        }
    }
    let mut ids: Vec<String> = (0..k).map(|i| format!("m{i}")).collect();
    ids[0] = "elite".into();
    PayoffMatrix::from_win_rates(ids, &p, 100).expect("payoff")
}
