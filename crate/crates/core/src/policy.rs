//! Tabular, tag-conditioned softmax policies and the rollouts they generate.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{self, GameSpec, GameState, RuleSet, ScriptedBot, Seat};
use crate::seed;

pub const SNAPSHOT_VERSION: u32 = 1;

/// Score buckets used by the state encoding: behind, even, ahead.
pub const SCORE_BUCKETS: usize = 3;
pub const SCORE_BUCKET_THRESHOLD: f64 = 0.5;

pub fn num_states(m: usize) -> usize {
    SCORE_BUCKETS * (1 + m * m)
}

/// Encodes a seat-relative state as `(last move pair or start, score bucket)`.
pub fn encode_state(m: usize, view: &GameState) -> usize {
    let bucket = if view.cumulative_score < -SCORE_BUCKET_THRESHOLD {
        0
    } else if view.cumulative_score > SCORE_BUCKET_THRESHOLD {
        2
    } else {
        1
    };
    let pair = match view.last_moves {
        None => 0,
        Some((mine, theirs)) => 1 + mine * m + theirs,
    };
    pair * SCORE_BUCKETS + bucket
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Log-probabilities computed stably from logits.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// Draws an index from a probability vector.
pub fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub num_moves: usize,
    pub num_states: usize,
    pub tag_count: usize,
    /// Flattened `[state][tag][move]`.
    pub logits: Vec<f64>,
    /// Flattened `[state][tag]`.
    pub values: Vec<f64>,
}

impl PolicyParams {
    /// Uniform policy with zero values. `tag_count` includes the zero tag.
    pub fn uniform(num_moves: usize, tag_count: usize) -> Self {
        let num_states = num_states(num_moves);
        PolicyParams {
            num_moves,
            num_states,
            tag_count,
            logits: vec![0.0; num_states * tag_count * num_moves],
            values: vec![0.0; num_states * tag_count],
        }
    }

    pub fn slot(&self, state: usize, tag: usize) -> usize {
        debug_assert!(state < self.num_states && tag < self.tag_count);
        state * self.tag_count + tag
    }

    pub fn logits_at(&self, state: usize, tag: usize) -> &[f64] {
        let base = self.slot(state, tag) * self.num_moves;
        &self.logits[base..base + self.num_moves]
    }

    pub fn logits_at_mut(&mut self, state: usize, tag: usize) -> &mut [f64] {
        let base = self.slot(state, tag) * self.num_moves;
        let m = self.num_moves;
        &mut self.logits[base..base + m]
    }

    pub fn probs(&self, state: usize, tag: usize) -> Vec<f64> {
        softmax(self.logits_at(state, tag))
    }

    pub fn log_probs(&self, state: usize, tag: usize) -> Vec<f64> {
        log_softmax(self.logits_at(state, tag))
    }

    pub fn value(&self, state: usize, tag: usize) -> f64 {
        self.values[self.slot(state, tag)]
    }

    pub fn value_mut(&mut self, state: usize, tag: usize) -> &mut f64 {
        let s = self.slot(state, tag);
        &mut self.values[s]
    }

    pub fn check_tag(&self, tag: usize) -> Result<()> {
        if tag >= self.tag_count {
            return Err(Error::Contract(format!("tag {tag} out of range (tag_count = {})", self.tag_count)));
        }
        Ok(())
    }

    /// Copies every row of `tag` from `other` into this policy.
    pub fn copy_tag_from(&mut self, other: &PolicyParams, tag: usize) {
        for s in 0..self.num_states {
            let src = other.logits_at(s, tag).to_vec();
            self.logits_at_mut(s, tag).copy_from_slice(&src);
            *self.value_mut(s, tag) = other.value(s, tag);
        }
    }
}

pub fn sample_action(policy: &PolicyParams, state: usize, tag: usize, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let probs = policy.probs(state, tag);
    let a = sample_index(&probs, rng);
    (a, probs[a])
}

/// Anything that can pick moves in the game.
pub trait Actor: Send + Sync {
    fn actor_id(&self) -> &str;
    /// Move distribution for a seat-relative state under strategy `tag`.
    fn action_probs(&self, spec: &GameSpec, view: &GameState, tag: usize) -> Vec<f64>;
}

/// An immutable, shareable copy of a policy under a model id.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub model_id: String,
    pub params: Arc<PolicyParams>,
}

impl PartialEq for Snapshot {
    fn eq(&self, other: &Self) -> bool {
        self.model_id == other.model_id && self.params == other.params
    }
}

impl Snapshot {
    /// Deep-copies `policy`.
    pub fn of(policy: &PolicyParams, model_id: impl Into<String>) -> Self {
        Snapshot {
            model_id: model_id.into(),
            params: Arc::new(policy.clone()),
        }
    }

    pub fn to_doc(&self) -> SnapshotDoc {
        let p = &*self.params;
        let logits = (0..p.num_states)
            .map(|s| (0..p.tag_count).map(|z| p.logits_at(s, z).to_vec()).collect())
            .collect();
        let values = (0..p.num_states)
            .map(|s| (0..p.tag_count).map(|z| p.value(s, z)).collect())
            .collect();
        SnapshotDoc {
            version: SNAPSHOT_VERSION,
            model_id: self.model_id.clone(),
            num_moves: p.num_moves,
            tag_count: p.tag_count,
            logits,
            values,
        }
    }

    pub fn from_doc(doc: SnapshotDoc) -> Result<Self> {
        if doc.version != SNAPSHOT_VERSION {
            return Err(Error::DataIntegrity(format!("unsupported snapshot version {}", doc.version)));
        }
        let mut p = PolicyParams::uniform(doc.num_moves, doc.tag_count);
        if doc.logits.len() != p.num_states || doc.values.len() != p.num_states {
            return Err(Error::DataIntegrity(format!("snapshot {} has the wrong number of states", doc.model_id)));
        }
        for (s, (lrow, vrow)) in doc.logits.iter().zip(&doc.values).enumerate() {
            if lrow.len() != p.tag_count || vrow.len() != p.tag_count {
                return Err(Error::DataIntegrity(format!("snapshot {} has the wrong tag count", doc.model_id)));
            }
            for z in 0..p.tag_count {
                if lrow[z].len() != p.num_moves {
                    return Err(Error::DataIntegrity(format!("snapshot {} has a short logit row", doc.model_id)));
                }
                p.logits_at_mut(s, z).copy_from_slice(&lrow[z]);
                *p.value_mut(s, z) = vrow[z];
            }
        }
        Ok(Snapshot {
            model_id: doc.model_id,
            params: Arc::new(p),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Snapshot::from_doc(serde_json::from_str(s)?)
    }
}

impl Actor for Snapshot {
    fn actor_id(&self) -> &str {
        &self.model_id
    }

    fn action_probs(&self, spec: &GameSpec, view: &GameState, tag: usize) -> Vec<f64> {
        let state = encode_state(spec.num_moves, view);
        self.params.probs(state, tag.min(self.params.tag_count - 1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDoc {
    pub version: u32,
    pub model_id: String,
    pub num_moves: usize,
    pub tag_count: usize,
    /// `[state][tag][move]`
    pub logits: Vec<Vec<Vec<f64>>>,
    /// `[state][tag]`
    pub values: Vec<Vec<f64>>,
}

/// A scripted bot with a stable id.
#[derive(Clone, Debug)]
pub struct BotActor {
    pub id: String,
    pub bot: ScriptedBot,
}

impl BotActor {
    pub fn new(bot: ScriptedBot) -> Self {
        BotActor { id: bot.name(), bot }
    }
}

impl Actor for BotActor {
    fn actor_id(&self) -> &str {
        &self.id
    }

    fn action_probs(&self, spec: &GameSpec, view: &GameState, _tag: usize) -> Vec<f64> {
        self.bot.distribution(spec, view)
    }
}

/// Frozen snapshots keyed by model id. Ids are never reused.
#[derive(Clone, Debug, Default)]
pub struct SnapshotStore {
    snapshots: BTreeMap<String, Snapshot>,
}

impl SnapshotStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn freeze(&mut self, policy: &PolicyParams, model_id: &str) -> Result<Snapshot> {
        if self.snapshots.contains_key(model_id) {
            return Err(Error::DuplicateModel(model_id.to_string()));
        }
        let snap = Snapshot::of(policy, model_id);
        self.snapshots.insert(model_id.to_string(), snap.clone());
        Ok(snap)
    }

    pub fn insert(&mut self, snap: Snapshot) -> Result<()> {
        if self.snapshots.contains_key(&snap.model_id) {
            return Err(Error::DuplicateModel(snap.model_id));
        }
        self.snapshots.insert(snap.model_id.clone(), snap);
        Ok(())
    }

    pub fn get(&self, model_id: &str) -> Option<&Snapshot> {
        self.snapshots.get(model_id)
    }

    pub fn contains(&self, model_id: &str) -> bool {
        self.snapshots.contains_key(model_id)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.values()
    }
}

/// How an agent picks its strategy tag each match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyTagConfig {
    pub zero_tag_prob: f64,
    /// `(tag, weight)`; weights sum to 1.
    pub tag_pool: Vec<(usize, f64)>,
}

impl Default for StrategyTagConfig {
    fn default() -> Self {
        StrategyTagConfig {
            zero_tag_prob: 0.5,
            tag_pool: Vec::new(),
        }
    }
}

impl StrategyTagConfig {
    pub fn zero_only() -> Self {
        StrategyTagConfig {
            zero_tag_prob: 1.0,
            tag_pool: Vec::new(),
        }
    }

    /// Zero tag with `zero_tag_prob`, otherwise uniform over `tags`.
    pub fn uniform_pool(zero_tag_prob: f64, tags: impl IntoIterator<Item = usize>) -> Self {
        let tags: Vec<usize> = tags.into_iter().collect();
        let w = 1.0 / tags.len().max(1) as f64;
        StrategyTagConfig {
            zero_tag_prob,
            tag_pool: tags.into_iter().map(|t| (t, w)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.zero_tag_prob) {
            return Err(Error::Config(format!("zero_tag_prob {} outside [0, 1]", self.zero_tag_prob)));
        }
        if !self.tag_pool.is_empty() {
            let total: f64 = self.tag_pool.iter().map(|(_, w)| w).sum();
            if (total - 1.0).abs() > 1e-9 || self.tag_pool.iter().any(|(_, w)| *w < 0.0) {
                return Err(Error::Config(format!("tag pool weights sum to {total}, not 1")));
            }
        } else if self.zero_tag_prob < 1.0 {
            return Err(Error::Config("empty tag pool requires zero_tag_prob = 1".into()));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        if self.tag_pool.is_empty() || rng.random::<f64>() < self.zero_tag_prob {
            return 0;
        }
        let weights: Vec<f64> = self.tag_pool.iter().map(|(_, w)| *w).collect();
        self.tag_pool[sample_index(&weights, rng)].0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state: usize,
    pub tag: usize,
    pub action: usize,
    pub behavior_prob: f64,
    pub reward: f64,
    /// Expert distribution when the step is critical.
    pub expert: Option<Vec<f64>>,
    pub step_index: usize,
}

impl TrajectoryStep {
    pub fn is_critical(&self) -> bool {
        self.expert.is_some()
    }
}

/// One seat's view of a match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Id of the actor that generated the steps.
    pub model_id: String,
    pub opponent_id: String,
    pub steps: Vec<TrajectoryStep>,
    /// Value after the last step; 0 when the episode ran to completion.
    pub bootstrap_value: f64,
    pub outcome: i8,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    pub first: Trajectory,
    pub second: Trajectory,
    /// Player 1's result.
    pub outcome: i8,
}

impl RolloutResult {
    pub fn trajectory(&self, seat: Seat) -> &Trajectory {
        match seat {
            Seat::First => &self.first,
            Seat::Second => &self.second,
        }
    }
}

/// Plays one full episode. All randomness comes from `seed`.
pub fn rollout(
    spec: &GameSpec,
    rules: &RuleSet,
    p1: &dyn Actor,
    p2: &dyn Actor,
    tags: (usize, usize),
    seed: u64,
) -> Result<RolloutResult> {
    let mut rng = seed::rng(seed, &[seed::label("rollout")]);
    let m = spec.num_moves;
    let mut state = spec.initial_state();
    let mut first = Vec::with_capacity(spec.horizon);
    let mut second = Vec::with_capacity(spec.horizon);
    while !state.is_terminal(spec) {
        let v1 = state.view(Seat::First);
        let v2 = state.view(Seat::Second);
        let d1 = p1.action_probs(spec, &v1, tags.0);
        let d2 = p2.action_probs(spec, &v2, tags.1);
        let a1 = sample_index(&d1, &mut rng);
        let a2 = sample_index(&d2, &mut rng);
        let (next, reward) = game::step(spec, &state, a1, a2, &mut rng)?;
        first.push(TrajectoryStep {
            state: encode_state(m, &v1),
            tag: tags.0,
            action: a1,
            behavior_prob: d1[a1],
            reward,
            expert: game::critical_oracle(spec, rules, &v1),
            step_index: state.step_index,
        });
        second.push(TrajectoryStep {
            state: encode_state(m, &v2),
            tag: tags.1,
            action: a2,
            behavior_prob: d2[a2],
            reward: -reward,
            expert: game::critical_oracle(spec, rules, &v2),
            step_index: state.step_index,
        });
        state = next;
    }
    let outcome = match state.cumulative_score {
        s if s > 0.0 => 1,
        s if s < 0.0 => -1,
        _ => 0,
    };
    Ok(RolloutResult {
        first: Trajectory {
            model_id: p1.actor_id().to_string(),
            opponent_id: p2.actor_id().to_string(),
            steps: first,
            bootstrap_value: 0.0,
            outcome,
        },
        second: Trajectory {
            model_id: p2.actor_id().to_string(),
            opponent_id: p1.actor_id().to_string(),
            steps: second,
            bootstrap_value: 0.0,
            outcome: -outcome,
        },
        outcome,
    })
}
