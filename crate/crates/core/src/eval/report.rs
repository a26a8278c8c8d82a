use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::payoff::{check_csv_ids, play_pair, Contestant};
use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::league::{Branch, Role};
use crate::seed;

/// One line of the training match log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchLogEntry {
    /// Logical clock: total environment steps taken by the run so far.
    pub timestamp: u64,
    pub match_id: u64,
    pub round: u64,
    pub players: [String; 2],
    /// Seat (0 or 1) of the learning agent.
    pub learner_seat: usize,
    pub learner_agent: String,
    pub learner_role: Role,
    pub branch: Branch,
    pub tags: [usize; 2],
    pub seed: u64,
    /// Result for player 1.
    pub outcome: i8,
    /// Move counts of each seat.
    pub moves: [Vec<u32>; 2],
}

pub fn read_match_log(path: &Path) -> Result<Vec<MatchLogEntry>> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::DataIntegrity(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Shannon entropy in nats of a (not necessarily normalized) histogram.
pub fn entropy(hist: &[f64]) -> f64 {
    let total: f64 = hist.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    hist.iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum()
}

fn normalized(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        counts.iter().map(|c| c / total).collect()
    } else {
        vec![0.0; counts.len()]
    }
}

/// Occurrence probabilities on a fixed move and tag axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub matches: u64,
    pub moves: Vec<f64>,
    pub tags: Vec<f64>,
    pub move_entropy: f64,
}

impl Usage {
    fn from_counts(matches: u64, moves: &[f64], tags: &[f64]) -> Self {
        Usage {
            matches,
            moves: normalized(moves),
            tags: normalized(tags),
            move_entropy: entropy(moves),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub per_agent: BTreeMap<String, Usage>,
    pub pooled: Usage,
    /// Entropy of the pooled move histogram, in nats.
    pub entropy: f64,
}

impl DiversityReport {
    /// Long format: `scope,axis,index,probability`.
    pub fn to_csv(&self) -> Result<String> {
        check_csv_ids(&self.per_agent.keys().cloned().collect::<Vec<_>>())?;
        let mut s = String::from("scope,axis,index,probability\n");
        let scopes = self
            .per_agent
            .iter()
            .map(|(k, v)| (k.as_str(), v))
            .chain(std::iter::once(("pooled", &self.pooled)));
        for (scope, u) in scopes {
            for (i, p) in u.moves.iter().enumerate() {
                s.push_str(&format!("{scope},move,{i},{p}\n"));
            }
            for (i, p) in u.tags.iter().enumerate() {
                s.push_str(&format!("{scope},tag,{i},{p}\n"));
            }
        }
        Ok(s)
    }
}

/// Move and tag usage of the learning side of every selected match, per
/// agent and pooled.
pub fn diversity_report(
    log: &[MatchLogEntry],
    select: &dyn Fn(&MatchLogEntry) -> bool,
    num_moves: usize,
    tag_count: usize,
) -> Result<DiversityReport> {
    let mut per: BTreeMap<String, (u64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut pooled = (0u64, vec![0.0; num_moves], vec![0.0; tag_count]);
    for e in log.iter().filter(|e| select(e)) {
        let seat = e.learner_seat.min(1);
        let moves = &e.moves[seat];
        let tag = e.tags[seat];
        if moves.len() != num_moves || tag >= tag_count {
            return Err(Error::DataIntegrity(format!(
                "match {} does not fit {num_moves} moves and {tag_count} tags",
                e.match_id
            )));
        }
        let entry = per
            .entry(e.learner_agent.clone())
            .or_insert_with(|| (0, vec![0.0; num_moves], vec![0.0; tag_count]));
        for acc in [&mut *entry, &mut pooled] {
            acc.0 += 1;
            acc.1.iter_mut().zip(moves).for_each(|(a, &c)| *a += c as f64);
            acc.2[tag] += 1.0;
        }
    }
    if pooled.0 == 0 {
        return Err(Error::Domain("no matches selected for the diversity report".into()));
    }
    let pooled = Usage::from_counts(pooled.0, &pooled.1, &pooled.2);
    Ok(DiversityReport {
        per_agent: per
            .into_iter()
            .map(|(k, (n, m, t))| (k, Usage::from_counts(n, &m, &t)))
            .collect(),
        entropy: pooled.move_entropy,
        pooled,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub probe: String,
    /// The main agent's move usage against this probe.
    pub moves: Vec<f64>,
    pub win_rate: f64,
}

/// How the main agent's move usage shifts with the opponent. Every probe
/// sees the same match seeds, so identical probes give identical rows.
pub fn response_report(ma: &Contestant, probes: &[Contestant], spec: &GameSpec, n: u32, seed: u64) -> Result<Vec<ResponseRow>> {
    probes
        .par_iter()
        .map(|p| {
            let r = play_pair(spec, ma, p, n, seed, &[seed::label("response")])?;
            let counts: Vec<f64> = r.moves_a.iter().map(|&c| c as f64).collect();
            Ok(ResponseRow {
                probe: p.id().to_string(),
                moves: normalized(&counts),
                win_rate: r.win_rate(),
            })
        })
        .collect()
}

pub fn responses_to_csv(rows: &[ResponseRow]) -> Result<String> {
    check_csv_ids(&rows.iter().map(|r| r.probe.clone()).collect::<Vec<_>>())?;
    let mut s = String::from("probe,move,probability\n");
    for r in rows {
        for (i, p) in r.moves.iter().enumerate() {
            s.push_str(&format!("{},{i},{p}\n", r.probe));
        }
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarRow {
    pub model_id: String,
    pub role: Role,
    /// Main agent's win-rate against this member.
    pub win_rate: f64,
}

/// Main agent against every league member, in the given order.
pub fn league_bar(ma: &Contestant, members: &[(Contestant, Role)], spec: &GameSpec, n: u32, seed: u64) -> Result<Vec<BarRow>> {
    if members.is_empty() {
        return Err(Error::EmptyLeague);
    }
    members
        .par_iter()
        .map(|(c, role)| {
            let r = play_pair(spec, ma, c, n, seed, &[seed::label("league-bar")])?;
            Ok(BarRow {
                model_id: c.id().to_string(),
                role: *role,
                win_rate: r.win_rate(),
            })
        })
        .collect()
}

pub fn bars_to_csv(rows: &[BarRow]) -> Result<String> {
    check_csv_ids(&rows.iter().map(|r| r.model_id.clone()).collect::<Vec<_>>())?;
    let mut s = String::from("model_id,role,win_rate\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.model_id, r.role, r.win_rate));
    }
    Ok(s)
}
