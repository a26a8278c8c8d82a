use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameSpec, RuleSet};
use crate::policy::{rollout, Actor, StrategyTagConfig};
use crate::seed;

/// A policy plus the tag distribution it plays with.
#[derive(Clone)]
pub struct Contestant {
    pub actor: Arc<dyn Actor>,
    pub tags: StrategyTagConfig,
}

impl Contestant {
    pub fn new(actor: Arc<dyn Actor>, tags: StrategyTagConfig) -> Self {
        Contestant { actor, tags }
    }

    pub fn id(&self) -> &str {
        self.actor.actor_id()
    }
}

impl std::fmt::Debug for Contestant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Contestant").field("id", &self.id()).field("tags", &self.tags).finish()
    }
}

/// Aggregate of `n` role-balanced matches between `a` and `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairResult {
    /// Points scored by `a`: 1 per win, 0.5 per draw.
    pub score_a: f64,
    pub matches: u32,
    /// Move counts of `a` and of `b`.
    pub moves_a: Vec<u64>,
    pub moves_b: Vec<u64>,
}

impl PairResult {
    pub fn win_rate(&self) -> f64 {
        self.score_a / self.matches as f64
    }
}

/// Plays `n` matches, alternating seats. Match `k` is seeded from
/// `(seed, coords.., k)` so results do not depend on scheduling.
pub fn play_pair(spec: &GameSpec, a: &Contestant, b: &Contestant, n: u32, seed: u64, coords: &[u64]) -> Result<PairResult> {
    let m = spec.num_moves;
    let rules = RuleSet::empty();
    let mut out = PairResult {
        score_a: 0.0,
        matches: n,
        moves_a: vec![0; m],
        moves_b: vec![0; m],
    };
    let mut pos = coords.to_vec();
    pos.push(0);
    for k in 0..n {
        *pos.last_mut().expect("nonempty") = k as u64;
        let match_seed = seed::derive(seed, &pos);
        let mut tag_rng = seed::rng(match_seed, &[seed::label("tags")]);
        let (ta, tb) = (a.tags.sample(&mut tag_rng), b.tags.sample(&mut tag_rng));
        let a_first = k % 2 == 0;
        let res = if a_first {
            rollout(spec, &rules, a.actor.as_ref(), b.actor.as_ref(), (ta, tb), match_seed)?
        } else {
            rollout(spec, &rules, b.actor.as_ref(), a.actor.as_ref(), (tb, ta), match_seed)?
        };
        let (ta_traj, tb_traj, outcome_a) = if a_first {
            (&res.first, &res.second, res.outcome)
        } else {
            (&res.second, &res.first, -res.outcome)
        };
        out.score_a += match outcome_a {
            1 => 1.0,
            0 => 0.5,
            _ => 0.0,
        };
        ta_traj.steps.iter().for_each(|s| out.moves_a[s.action] += 1);
        tb_traj.steps.iter().for_each(|s| out.moves_b[s.action] += 1);
    }
    Ok(out)
}

/// Win-rates between models. Entry `(i, j)` is `i`'s score against `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub model_ids: Vec<String>,
    /// Points of `i` against `j`.
    pub scores: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u32>>,
}

impl PayoffMatrix {
    pub fn len(&self) -> usize {
        self.model_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model_ids.is_empty()
    }

    /// Builds a matrix from win-rates with a common match count. The diagonal
    /// is ignored.
    pub fn from_win_rates(model_ids: Vec<String>, p: &[Vec<f64>], n: u32) -> Result<Self> {
        let k = model_ids.len();
        if p.len() != k || p.iter().any(|r| r.len() != k) {
            return Err(Error::Domain(format!("win-rate matrix must be {k}x{k}")));
        }
        let mut scores = vec![vec![0.0; k]; k];
        let mut counts = vec![vec![0; k]; k];
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                if !(0.0..=1.0).contains(&p[i][j]) {
                    return Err(Error::Domain(format!("win-rate {} at ({i}, {j}) is outside [0, 1]", p[i][j])));
                }
                scores[i][j] = p[i][j] * n as f64;
                counts[i][j] = n;
            }
        }
        Ok(PayoffMatrix { model_ids, scores, counts })
    }

    /// Win-rate of `i` against `j`; the diagonal is 0.5 and unplayed pairs
    /// read 0.5 as well.
    pub fn p(&self, i: usize, j: usize) -> f64 {
        if i == j || self.counts[i][j] == 0 {
            0.5
        } else {
            self.scores[i][j] / self.counts[i][j] as f64
        }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.model_ids.iter().position(|m| m == id)
    }

    pub fn win_rates(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| (0..self.len()).map(|j| self.p(i, j)).collect()).collect()
    }

    /// Entries rescaled to `2p - 1`.
    pub fn zero_sum(&self) -> Vec<Vec<f64>> {
        self.win_rates()
            .into_iter()
            .map(|r| r.into_iter().map(|p| 2.0 * p - 1.0).collect())
            .collect()
    }

    /// Header row of model ids, then one row of win-rates per model.
    pub fn to_csv(&self) -> Result<String> {
        check_csv_ids(&self.model_ids)?;
        let mut s = format!("model_id,{}\n", self.model_ids.join(","));
        for (i, id) in self.model_ids.iter().enumerate() {
            let row: Vec<String> = (0..self.len()).map(|j| format!("{}", self.p(i, j))).collect();
            s.push_str(&format!("{id},{}\n", row.join(",")));
        }
        Ok(s)
    }

    /// Reads the CSV written by [`PayoffMatrix::to_csv`]. Counts are unknown
    /// there, so every off-diagonal pair gets weight 1.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::DataIntegrity("empty payoff csv".into()))?;
        let ids: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
        let mut p = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut cells = line.split(',');
            let id = cells.next().unwrap_or_default().trim();
            if ids.get(i).map(String::as_str) != Some(id) {
                return Err(Error::DataIntegrity(format!("payoff csv row {i} is {id:?}, expected {:?}", ids.get(i))));
            }
            let row = cells
                .map(|c| c.trim().parse::<f64>().map_err(|e| Error::DataIntegrity(format!("payoff csv row {id}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            p.push(row);
        }
        PayoffMatrix::from_win_rates(ids, &p, 1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: PayoffMatrix = serde_json::from_str(s)?;
        let k = m.model_ids.len();
        if m.scores.len() != k || m.counts.len() != k || m.scores.iter().any(|r| r.len() != k) || m.counts.iter().any(|r| r.len() != k) {
            return Err(Error::DataIntegrity("payoff matrix shape mismatch".into()));
        }
        Ok(m)
    }
}

pub(crate) fn check_csv_ids(ids: &[String]) -> Result<()> {
    match ids.iter().find(|id| id.contains([',', '"', '\n'])) {
        Some(id) => Err(Error::Domain(format!("model id {id:?} cannot be written to csv"))),
        None => Ok(()),
    }
}

/// Every unordered pair plays `n_per_pair` role-balanced matches. Pairs run
/// in parallel; results only depend on positions.
pub fn round_robin(models: &[Contestant], spec: &GameSpec, n_per_pair: u32, seed: u64) -> Result<PayoffMatrix> {
    if models.len() < 2 {
        return Err(Error::Domain("round robin needs at least two models".into()));
    }
    if n_per_pair == 0 {
        return Err(Error::Domain("n_per_pair must be at least 1".into()));
    }
    let k = models.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect();
    let results = pairs
        .par_iter()
        .map(|&(i, j)| play_pair(spec, &models[i], &models[j], n_per_pair, seed, &[i as u64, j as u64]))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = vec![vec![0.0; k]; k];
    let mut counts = vec![vec![0; k]; k];
    for (&(i, j), r) in pairs.iter().zip(&results) {
        scores[i][j] = r.score_a;
        scores[j][i] = r.matches as f64 - r.score_a;
        counts[i][j] = r.matches;
        counts[j][i] = r.matches;
    }
    Ok(PayoffMatrix {
        model_ids: models.iter().map(|m| m.id().to_string()).collect(),
        scores,
        counts,
    })
}

/// `|A| x |B|` win-rates of `a` members against `b` members.
pub fn cross_play(a: &[Contestant], b: &[Contestant], spec: &GameSpec, n_per_pair: u32, seed: u64) -> Result<Vec<Vec<f64>>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("both leagues must be nonempty".into()));
    }
    if n_per_pair == 0 {
        return Err(Error::Domain("n_per_pair must be at least 1".into()));
    }
    let cells: Vec<(usize, usize)> = (0..a.len()).flat_map(|i| (0..b.len()).map(move |j| (i, j))).collect();
    let rates = cells
        .par_iter()
        .map(|&(i, j)| play_pair(spec, &a[i], &b[j], n_per_pair, seed, &[i as u64, j as u64]).map(|r| r.win_rate()))
        .collect::<Result<Vec<_>>>()?;
    Ok(rates.chunks(b.len()).map(|c| c.to_vec()).collect())
}
