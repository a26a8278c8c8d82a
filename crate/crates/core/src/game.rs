//! The toy environment: a seeded two-player zero-sum stochastic game built on a
//! cyclic (non-transitive) payoff core.
//!
//! Both players pick a move simultaneously at every step. The core payoff of
//! the pair is added to a running score (player 1's perspective), optionally
//! perturbed by Gaussian noise. After exactly `horizon` steps the sign of the
//! score decides the match: `+1` win, `0` draw, `-1` loss.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const GAME_SPEC_VERSION: u32 = 1;

/// Which seat a player occupies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Seat {
    First,
    Second,
}

impl Seat {
    pub fn other(self) -> Seat {
        match self {
            Seat::First => Seat::Second,
            Seat::Second => Seat::First,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameSpec {
    pub num_moves: usize,
    pub horizon: usize,
    /// Antisymmetric `num_moves × num_moves` matrix; entry `[i][j]` is the score
    /// gained by playing `i` against `j`.
    pub core_payoff: Vec<Vec<f64>>,
    pub noise_level: f64,
    pub seed: u64,
}

/// Versioned on-disk form of a [`GameSpec`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameSpecDoc {
    pub version: u32,
    pub m: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Row-major payoff entries.
    pub payoff: Vec<f64>,
}

impl GameSpec {
    pub fn new(core_payoff: Vec<Vec<f64>>, horizon: usize, noise_level: f64, seed: u64) -> Result<Self> {
        let m = core_payoff.len();
        if m < 2 {
            return Err(Error::Domain(format!("need at least 2 moves, got {m}")));
        }
        if horizon < 1 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        if !(noise_level >= 0.0 && noise_level.is_finite()) {
            return Err(Error::Domain(format!("noise level must be finite and >= 0, got {noise_level}")));
        }
        for (i, row) in core_payoff.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Domain(format!("payoff row {i} has {} entries, expected {m}", row.len())));
            }
            for (j, &a) in row.iter().enumerate() {
                if !a.is_finite() || a != -core_payoff[j][i] {
                    return Err(Error::Domain(format!("payoff is not antisymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(GameSpec {
            num_moves: m,
            horizon,
            core_payoff,
            noise_level,
            seed,
        })
    }

    pub fn payoff(&self, mine: usize, theirs: usize) -> f64 {
        self.core_payoff[mine][theirs]
    }

    /// The best pure reply to `opponent_move` (lowest index on ties).
    pub fn counter(&self, opponent_move: usize) -> usize {
        let mut best = 0;
        for i in 1..self.num_moves {
            if self.core_payoff[i][opponent_move] > self.core_payoff[best][opponent_move] {
                best = i;
            }
        }
        best
    }

    pub fn initial_state(&self) -> GameState {
        GameState::default()
    }

    pub fn to_doc(&self) -> GameSpecDoc {
        GameSpecDoc {
            version: GAME_SPEC_VERSION,
            m: self.num_moves,
            horizon: self.horizon,
            sigma: self.noise_level,
            seed: self.seed,
            payoff: self.core_payoff.iter().flatten().copied().collect(),
        }
    }

    pub fn from_doc(doc: &GameSpecDoc) -> Result<Self> {
        if doc.version != GAME_SPEC_VERSION {
            return Err(Error::Domain(format!("unsupported game spec version {}", doc.version)));
        }
        if doc.payoff.len() != doc.m * doc.m {
            return Err(Error::Domain(format!(
                "payoff has {} entries, expected {}",
                doc.payoff.len(),
                doc.m * doc.m
            )));
        }
        let rows = doc.payoff.chunks(doc.m.max(1)).map(<[f64]>::to_vec).collect();
        GameSpec::new(rows, doc.horizon, doc.sigma, doc.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        GameSpec::from_doc(&serde_json::from_str(s)?)
    }
}

/// Builds the cyclic game: move `(i + 1) mod m` beats move `i`. For `m > 3`
/// the remaining off-cycle pairs get seeded antisymmetric entries in
/// `(-0.5, 0.5)`, so every move keeps its unique strongest counter.
pub fn generate_cyclic_game(m: usize, horizon: usize, noise_level: f64, seed: u64) -> Result<GameSpec> {
    if m < 2 {
        return Err(Error::Domain(format!("need at least 2 moves, got {m}")));
    }
    if horizon < 1 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let mut a = vec![vec![0.0; m]; m];
    // m = 2 has a single pair; walking the full cycle would overwrite it.
    let cycle_len = if m == 2 { 1 } else { m };
    for i in 0..cycle_len {
        let j = (i + 1) % m;
        a[j][i] = 1.0;
        a[i][j] = -1.0;
    }
    if m > 3 {
        let mut rng = seed::rng(seed, &[seed::label("cyclic-perturbation"), m as u64]);
        for i in 0..m {
            for j in (i + 1)..m {
                let adjacent = j == i + 1 || (i == 0 && j == m - 1);
                if !adjacent {
                    let u: f64 = rng.random::<f64>() - 0.5;
                    a[i][j] = u;
                    a[j][i] = -u;
                }
            }
        }
    }
    GameSpec::new(a, horizon, noise_level, seed)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub step_index: usize,
    /// Player 1's running score.
    pub cumulative_score: f64,
    /// `(player 1 move, player 2 move)` of the previous step.
    pub last_moves: Option<(usize, usize)>,
}

impl GameState {
    /// The state as seen from `seat`: scores negated and moves swapped for the
    /// second seat, so `last_moves.1` is always the opponent's move.
    pub fn view(&self, seat: Seat) -> GameState {
        match seat {
            Seat::First => self.clone(),
            Seat::Second => GameState {
                step_index: self.step_index,
                cumulative_score: -self.cumulative_score,
                last_moves: self.last_moves.map(|(a, b)| (b, a)),
            },
        }
    }

    pub fn is_terminal(&self, spec: &GameSpec) -> bool {
        self.step_index >= spec.horizon
    }

    pub fn opponent_last_move(&self) -> Option<usize> {
        self.last_moves.map(|(_, theirs)| theirs)
    }
}

/// Advances the game by one simultaneous step. Returns the next state and the
/// reward to player 1 (nonzero only on the terminal step).
pub fn step(
    spec: &GameSpec,
    state: &GameState,
    move_p1: usize,
    move_p2: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(GameState, f64)> {
    if state.is_terminal(spec) {
        return Err(Error::Contract(format!(
            "step called on terminal state (t = {}, H = {})",
            state.step_index, spec.horizon
        )));
    }
    if move_p1 >= spec.num_moves || move_p2 >= spec.num_moves {
        return Err(Error::Contract(format!(
            "moves ({move_p1}, {move_p2}) out of range for m = {}",
            spec.num_moves
        )));
    }
    let mut delta = spec.payoff(move_p1, move_p2);
    if spec.noise_level > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        delta += spec.noise_level * z;
    }
    let next = GameState {
        step_index: state.step_index + 1,
        cumulative_score: state.cumulative_score + delta,
        last_moves: Some((move_p1, move_p2)),
    };
    let reward = if next.is_terminal(spec) {
        sign(next.cumulative_score)
    } else {
        0.0
    };
    Ok((next, reward))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A hand-written expert rule: where it applies, it names the distribution an
/// expert would play. Rules are plain data so rule sets can be configured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CriticalRule {
    /// After observing any opponent move, reply with its counter.
    CounterLast { name: String },
    /// After observing the opponent play `trigger`, reply with its counter.
    CounterMove { name: String, trigger: usize },
    /// After observing the opponent play `trigger`, play `expert`.
    OnOpponentMove {
        name: String,
        trigger: usize,
        expert: Vec<f64>,
    },
}

impl CriticalRule {
    pub fn name(&self) -> &str {
        match self {
            CriticalRule::CounterLast { name }
            | CriticalRule::CounterMove { name, .. }
            | CriticalRule::OnOpponentMove { name, .. } => name,
        }
    }

    /// Whether `view` (a seat-relative state) is critical under this rule.
    pub fn applies(&self, view: &GameState) -> bool {
        match self {
            CriticalRule::CounterLast { .. } => view.last_moves.is_some(),
            CriticalRule::CounterMove { trigger, .. } => view.opponent_last_move() == Some(*trigger),
            CriticalRule::OnOpponentMove { trigger, .. } => view.opponent_last_move() == Some(*trigger),
        }
    }

    pub fn expert_distribution(&self, spec: &GameSpec, view: &GameState) -> Vec<f64> {
        match self {
            CriticalRule::CounterLast { .. } | CriticalRule::CounterMove { .. } => {
                let mut d = vec![0.0; spec.num_moves];
                if let Some(theirs) = view.opponent_last_move() {
                    d[spec.counter(theirs)] = 1.0;
                }
                d
            }
            CriticalRule::OnOpponentMove { expert, .. } => expert.clone(),
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if let CriticalRule::CounterMove { name, trigger } = self {
            if *trigger >= m {
                return Err(Error::Domain(format!("rule {name:?} does not fit m = {m}")));
            }
        }
        if let CriticalRule::OnOpponentMove { name, trigger, expert } = self {
            if *trigger >= m || expert.len() != m {
                return Err(Error::Domain(format!("rule {name:?} does not fit m = {m}")));
            }
            check_distribution(expert).map_err(|e| Error::Domain(format!("rule {name:?}: {e}")))?;
        }
        Ok(())
    }
}

/// Returns a description of the problem if `d` is not a probability vector.
pub fn check_distribution(d: &[f64]) -> std::result::Result<(), String> {
    if d.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(format!("negative or non-finite entry in {d:?}"));
    }
    let total: f64 = d.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(format!("sums to {total}, not 1"));
    }
    Ok(())
}

/// Ordered rule list; the first applicable rule wins.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<CriticalRule>,
}

impl RuleSet {
    pub fn empty() -> Self {
        RuleSet { rules: Vec::new() }
    }

    pub fn counter_default() -> Self {
        RuleSet {
            rules: vec![CriticalRule::CounterLast {
                name: "counter-last".into(),
            }],
        }
    }

    /// Counter rules for the listed opponent moves only.
    pub fn counter_moves(triggers: &[usize]) -> Self {
        RuleSet {
            rules: triggers
                .iter()
                .map(|&t| CriticalRule::CounterMove {
                    name: format!("counter-{t}"),
                    trigger: t,
                })
                .collect(),
        }
    }

    pub fn validate(&self, spec: &GameSpec) -> Result<()> {
        self.rules.iter().try_for_each(|r| r.validate(spec.num_moves))
    }
}

/// The expert distribution for a seat-relative state, if the state is critical.
/// Nothing is critical before the opponent has moved.
pub fn critical_oracle(spec: &GameSpec, rules: &RuleSet, view: &GameState) -> Option<Vec<f64>> {
    if view.last_moves.is_none() {
        return None;
    }
    rules
        .rules
        .iter()
        .find(|r| r.applies(view))
        .map(|r| r.expert_distribution(spec, view))
}

/// Fixed baseline policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "move", rename_all = "snake_case")]
pub enum ScriptedBot {
    /// Always plays the given move.
    Pure(usize),
    /// Counters the opponent's previous move; uniform on the first step.
    CounterLast,
    /// `CounterLast` with probability 0.8, uniform otherwise. The zero point
    /// of the rating scale.
    Elite,
    /// Uniformly random.
    Uniform,
}

pub const ELITE_COUNTER_PROB: f64 = 0.8;

impl ScriptedBot {
    pub fn name(&self) -> String {
        match self {
            ScriptedBot::Pure(k) => format!("pure-{k}"),
            ScriptedBot::CounterLast => "counter-last".into(),
            ScriptedBot::Elite => "elite".into(),
            ScriptedBot::Uniform => "uniform".into(),
        }
    }

    /// Move distribution for a seat-relative state.
    pub fn distribution(&self, spec: &GameSpec, view: &GameState) -> Vec<f64> {
        let m = spec.num_moves;
        let uniform = vec![1.0 / m as f64; m];
        match *self {
            ScriptedBot::Pure(k) => {
                let mut d = vec![0.0; m];
                d[k] = 1.0;
                d
            }
            ScriptedBot::Uniform => uniform,
            ScriptedBot::CounterLast => match view.opponent_last_move() {
                None => uniform,
                Some(theirs) => {
                    let mut d = vec![0.0; m];
                    d[spec.counter(theirs)] = 1.0;
                    d
                }
            },
            ScriptedBot::Elite => match view.opponent_last_move() {
                None => uniform,
                Some(theirs) => {
                    let mut d = vec![(1.0 - ELITE_COUNTER_PROB) / m as f64; m];
                    d[spec.counter(theirs)] += ELITE_COUNTER_PROB;
                    d
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rps() -> GameSpec {
        generate_cyclic_game(3, 10, 0.0, 1).unwrap()
    }

    #[test]
    fn cyclic_three_is_rock_paper_scissors() {
        let g = rps();
        let expected = vec![
            vec![0.0, -1.0, 1.0],
            vec![1.0, 0.0, -1.0],
            vec![-1.0, 1.0, 0.0],
        ];
        assert_eq!(g.core_payoff, expected);
        for seed in [0, 99, u64::MAX] {
            assert_eq!(generate_cyclic_game(3, 10, 0.0, seed).unwrap().core_payoff, expected);
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_cyclic_game(7, 4, 0.25, 11).unwrap();
        let b = generate_cyclic_game(7, 4, 0.25, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_cyclic_game(7, 4, 0.25, 12).unwrap();
        assert_ne!(a.core_payoff, c.core_payoff);
    }

    #[test]
    fn every_move_is_beaten_in_five_move_game() {
        let g = generate_cyclic_game(5, 10, 0.0, 7).unwrap();
        for (i, row) in g.core_payoff.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, -g.core_payoff[j][i]);
                if i != j {
                    assert!(v.abs() <= 1.0);
                }
            }
        }
        for col in 0..5 {
            let beaten = (0..5).any(|row| g.core_payoff[row][col] > 0.0);
            assert!(beaten, "move {col} is unbeaten");
            assert_eq!(g.counter(col), (col + 1) % 5);
        }
    }

    #[test]
    fn two_move_game_has_single_dominance() {
        let g = generate_cyclic_game(2, 3, 0.0, 0).unwrap();
        assert_eq!(g.core_payoff, vec![vec![0.0, -1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(generate_cyclic_game(1, 10, 0.0, 0), Err(Error::Domain(_))));
        assert!(matches!(generate_cyclic_game(3, 0, 0.0, 0), Err(Error::Domain(_))));
        assert!(GameSpec::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], 1, 0.0, 0).is_err());
    }

    #[test]
    fn rock_beats_scissors_first_step() {
        let g = rps();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (s, r) = step(&g, &g.initial_state(), 0, 2, &mut rng).unwrap();
        assert_eq!(s.cumulative_score, 1.0);
        assert_eq!(r, 0.0);
        assert_eq!(s.last_moves, Some((0, 2)));
    }

    #[test]
    fn drawn_final_step_pays_zero() {
        let g = generate_cyclic_game(3, 1, 0.0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (s, r) = step(&g, &g.initial_state(), 1, 1, &mut rng).unwrap();
        assert!(s.is_terminal(&g));
        assert_eq!(r, 0.0);
        assert!(matches!(step(&g, &s, 0, 0, &mut rng), Err(Error::Contract(_))));
    }

    #[test]
    fn counter_picking_wins() {
        let g = rps();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = g.initial_state();
        let mut last = 0.0;
        while !s.is_terminal(&g) {
            let (n, r) = step(&g, &s, g.counter(2), 2, &mut rng).unwrap();
            s = n;
            last = r;
        }
        assert_eq!(s.cumulative_score, 10.0);
        assert_eq!(last, 1.0);
    }

    #[test]
    fn view_swaps_perspective() {
        let s = GameState {
            step_index: 2,
            cumulative_score: 1.5,
            last_moves: Some((0, 2)),
        };
        let v = s.view(Seat::Second);
        assert_eq!(v.cumulative_score, -1.5);
        assert_eq!(v.last_moves, Some((2, 0)));
        assert_eq!(v.view(Seat::Second), s);
    }

    #[test]
    fn oracle_counters_opponent() {
        let g = rps();
        let rules = RuleSet::counter_default();
        assert_eq!(critical_oracle(&g, &rules, &g.initial_state()), None);
        let s = GameState {
            step_index: 1,
            cumulative_score: 0.0,
            last_moves: Some((1, 0)),
        };
        assert_eq!(critical_oracle(&g, &rules, &s), Some(vec![0.0, 1.0, 0.0]));
        assert_eq!(critical_oracle(&g, &RuleSet::empty(), &s), None);
    }

    #[test]
    fn observed_move_rule_is_data() {
        let g = rps();
        let rules = RuleSet {
            rules: vec![CriticalRule::OnOpponentMove {
                name: "vs-scissors".into(),
                trigger: 2,
                expert: vec![0.9, 0.05, 0.05],
            }],
        };
        rules.validate(&g).unwrap();
        let mk = |theirs| GameState {
            step_index: 1,
            cumulative_score: 0.0,
            last_moves: Some((0, theirs)),
        };
        assert_eq!(critical_oracle(&g, &rules, &mk(2)), Some(vec![0.9, 0.05, 0.05]));
        assert_eq!(critical_oracle(&g, &rules, &mk(1)), None);
        let bad = RuleSet {
            rules: vec![CriticalRule::OnOpponentMove {
                name: "bad".into(),
                trigger: 0,
                expert: vec![0.5, 0.6, 0.0],
            }],
        };
        assert!(bad.validate(&g).is_err());
    }

    #[test]
    fn scripted_distributions() {
        let g = rps();
        let start = g.initial_state();
        assert_eq!(ScriptedBot::Pure(1).distribution(&g, &start), vec![0.0, 1.0, 0.0]);
        assert_eq!(ScriptedBot::CounterLast.distribution(&g, &start), vec![1.0 / 3.0; 3]);
        let s = GameState {
            step_index: 1,
            cumulative_score: 0.0,
            last_moves: Some((0, 2)),
        };
        let e = ScriptedBot::Elite.distribution(&g, &s);
        assert!((e[0] - (0.8 + 0.2 / 3.0)).abs() < 1e-15);
        assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let g = generate_cyclic_game(5, 8, 0.25, 42).unwrap();
        let back = GameSpec::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(g, back);
        let doc: serde_json::Value = serde_json::from_str(&g.to_json().unwrap()).unwrap();
        assert_eq!(doc["version"], 1);
        assert_eq!(doc["payoff"].as_array().unwrap().len(), 25);
    }
}
