//! League manager: model registry, lineage, win-rates, opponent scheduling
//! and the per-role period rules.

mod agent;
mod decisions;
mod lineage;
mod schedule;
mod winrate;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{PolicyParams, Snapshot, SnapshotStore, StrategyTagConfig};

pub use agent::{advance_period, AgentState, AgentTemplate, PeriodEvent};
pub use decisions::{
    aee_period_decision, boundary_reached, AEE_PREFERRED_RATE, ee_freeze_now, ee_period_decision, ma_snapshot_due, standard_reset_decision,
    PeriodDecision,
};
pub use lineage::{LineageNode, LineageTree};
pub use schedule::{pfsp_pick, pfsp_weights, schedule_opponent, Branch, MatchPlan, UNSEEN_WIN_RATE};
pub use winrate::{PairWindow, WinRateDoc, WinRateTable, WinStats, DEFAULT_WINDOW};

/// Parent id of models that start a line.
pub const ROOT_PARENT: &str = "None";
pub const LEAGUE_STATE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    MA,
    ME,
    LE,
    SE,
    EE,
    AEE,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::MA => "MA",
            Role::ME => "ME",
            Role::LE => "LE",
            Role::SE => "SE",
            Role::EE => "EE",
            Role::AEE => "AEE",
        };
        f.write_str(s)
    }
}

/// Who an agent is trying to beat.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// The main agent and its history.
    MainAgent,
    /// Every frozen league member.
    WholeLeague,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaMixture {
    pub self_play: f64,
    pub pfsp: f64,
    pub forgotten: f64,
}

impl Default for MaMixture {
    fn default() -> Self {
        MaMixture {
            self_play: 0.25,
            pfsp: 0.60,
            forgotten: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoleConfig {
    pub min_period_steps: u64,
    pub max_period_steps: u64,
    pub win_threshold: f64,
    /// Inclusive `[low, high]` win-rate window for AEE inheritance.
    pub aee_window: (f64, f64),
    pub ma_snapshot_steps: u64,
    pub ma_mixture: MaMixture,
    pub pfsp_exponent: f64,
    /// Past MA snapshots below this win-rate against the live MA count as
    /// forgotten.
    pub forgotten_threshold: f64,
    pub winrate_window: usize,
    /// Multiplier on the distillation weight of SE lines.
    pub se_distill_boost: f64,
}

impl Default for RoleConfig {
    fn default() -> Self {
        RoleConfig {
            min_period_steps: 20_000,
            max_period_steps: 40_000,
            win_threshold: 0.70,
            aee_window: (0.20, 0.50),
            ma_snapshot_steps: 80_000,
            ma_mixture: MaMixture::default(),
            pfsp_exponent: 2.0,
            forgotten_threshold: 0.30,
            winrate_window: DEFAULT_WINDOW,
            se_distill_boost: 2.0,
        }
    }
}

impl RoleConfig {
    /// Period decisions are re-evaluated this often once the minimum is met.
    pub fn check_interval(&self) -> u64 {
        (self.min_period_steps / 10).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.aee_window;
        if !(0.0 < lo && lo < hi && hi < self.win_threshold && self.win_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 < aee_window.low < aee_window.high < win_threshold <= 1, got ({lo}, {hi}) and {}",
                self.win_threshold
            )));
        }
        let mix = self.ma_mixture;
        if [mix.self_play, mix.pfsp, mix.forgotten].iter().any(|p| !(0.0..=1.0).contains(p))
            || (mix.self_play + mix.pfsp + mix.forgotten - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!("ma_mixture must be a distribution, got {mix:?}")));
        }
        if self.min_period_steps == 0 || self.max_period_steps < self.min_period_steps {
            return Err(Error::Config(format!(
                "need 0 < min_period_steps <= max_period_steps, got {} and {}",
                self.min_period_steps, self.max_period_steps
            )));
        }
        if self.ma_snapshot_steps == 0 {
            return Err(Error::Config("ma_snapshot_steps must be positive".into()));
        }
        if !(self.pfsp_exponent.is_finite() && self.pfsp_exponent >= 0.0) {
            return Err(Error::Config(format!("pfsp_exponent must be >= 0, got {}", self.pfsp_exponent)));
        }
        if self.winrate_window == 0 {
            return Err(Error::Config("winrate_window must be positive".into()));
        }
        if !(self.se_distill_boost.is_finite() && self.se_distill_boost >= 0.0) {
            return Err(Error::Config(format!("se_distill_boost must be >= 0, got {}", self.se_distill_boost)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    /// `parent:child`
    pub model_id: String,
    /// Name of the agent line this model belongs to.
    pub agent: String,
    pub role: Role,
    /// Path of the snapshot file relative to the state directory, once frozen.
    pub snapshot: Option<String>,
    pub period_index: usize,
    pub frozen: bool,
    pub initial_model: String,
    pub tags: StrategyTagConfig,
    /// Registration order; larger is newer.
    pub created: u64,
}

pub fn make_model_id(parent: &str, child: &str) -> String {
    format!("{parent}:{child}")
}

/// Splits `parent:child`.
pub fn split_model_id(id: &str) -> Result<(&str, &str)> {
    match id.rsplit_once(':') {
        Some((p, c)) if !p.is_empty() && !c.is_empty() && !c.contains(':') && !p.contains(':') => Ok((p, c)),
        _ => Err(Error::Contract(format!("model id {id:?} is not of the form parent:child"))),
    }
}

impl ModelRecord {
    pub fn parent(&self) -> &str {
        split_model_id(&self.model_id).map(|(p, _)| p).unwrap_or(ROOT_PARENT)
    }

    pub fn child(&self) -> &str {
        split_model_id(&self.model_id).map(|(_, c)| c).unwrap_or(&self.model_id)
    }
}

pub fn snapshot_file_name(model_id: &str) -> String {
    format!("snapshots/{}.json", model_id.replace(':', "__"))
}

/// The registry plus everything needed to schedule matches.
#[derive(Clone, Debug)]
pub struct League {
    records: BTreeMap<String, ModelRecord>,
    /// child id -> model id
    children: BTreeMap<String, String>,
    snapshots: SnapshotStore,
    winrates: WinRateTable,
    main_live: Option<String>,
    next_created: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeagueDoc {
    pub version: u32,
    pub records: Vec<ModelRecord>,
    pub winrates: WinRateDoc,
    pub main_live: Option<String>,
    pub next_created: u64,
}

impl League {
    pub fn new(winrate_window: usize) -> Self {
        League {
            records: BTreeMap::new(),
            children: BTreeMap::new(),
            snapshots: SnapshotStore::new(),
            winrates: WinRateTable::new(winrate_window),
            main_live: None,
            next_created: 0,
        }
    }

    /// Adds a live (unfrozen) model. The id must be new and its parent must
    /// be registered or [`ROOT_PARENT`].
    pub fn register(&mut self, mut record: ModelRecord) -> Result<&ModelRecord> {
        let (parent, child) = split_model_id(&record.model_id)?;
        let (parent, child) = (parent.to_string(), child.to_string());
        if self.records.contains_key(&record.model_id) || self.children.contains_key(&child) {
            return Err(Error::DuplicateModel(record.model_id));
        }
        if parent != ROOT_PARENT && !self.children.contains_key(&parent) {
            return Err(Error::UnknownModel(format!("parent {parent} of {}", record.model_id)));
        }
        if record.frozen || record.snapshot.is_some() {
            return Err(Error::Contract(format!("{} must be registered live, then frozen", record.model_id)));
        }
        record.created = self.next_created;
        self.next_created += 1;
        if record.role == Role::MA && self.main_live.is_none() {
            self.main_live = Some(record.model_id.clone());
        }
        self.children.insert(child, record.model_id.clone());
        let id = record.model_id.clone();
        self.records.insert(id.clone(), record);
        Ok(&self.records[&id])
    }

    /// Freezes a live model with the given parameters. Frozen records cannot
    /// be changed afterwards.
    pub fn freeze(&mut self, model_id: &str, params: &PolicyParams) -> Result<Snapshot> {
        let rec = self
            .records
            .get_mut(model_id)
            .ok_or_else(|| Error::UnknownModel(model_id.to_string()))?;
        if rec.frozen {
            return Err(Error::Contract(format!("{model_id} is already frozen")));
        }
        if Some(model_id) == self.main_live.as_deref() {
            return Err(Error::Contract("the live main agent is never frozen in place".into()));
        }
        let snap = self.snapshots.freeze(params, model_id)?;
        rec.frozen = true;
        rec.snapshot = Some(snapshot_file_name(model_id));
        Ok(snap)
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelRecord> {
        self.records.get(model_id)
    }

    pub fn by_child(&self, child: &str) -> Option<&ModelRecord> {
        self.children.get(child).and_then(|id| self.records.get(id))
    }

    pub fn contains(&self, model_id: &str) -> bool {
        self.records.contains_key(model_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &ModelRecord> {
        self.records.values()
    }

    /// Frozen members in registration order.
    pub fn frozen(&self) -> Vec<&ModelRecord> {
        let mut v: Vec<_> = self.records.values().filter(|r| r.frozen).collect();
        v.sort_by_key(|r| r.created);
        v
    }

    pub fn frozen_count(&self) -> usize {
        self.records.values().filter(|r| r.frozen).count()
    }

    pub fn snapshot(&self, model_id: &str) -> Option<&Snapshot> {
        self.snapshots.get(model_id)
    }

    pub fn main_live(&self) -> Result<&str> {
        self.main_live
            .as_deref()
            .ok_or_else(|| Error::Contract("no main agent registered".into()))
    }

    pub fn winrates(&self) -> &WinRateTable {
        &self.winrates
    }

    pub fn win_rate(&self, a: &str, b: &str) -> Option<f64> {
        self.winrates.win_rate(a, b)
    }

    /// Records `outcome` from `a`'s perspective. Both ids must be registered.
    pub fn record_match_result(&mut self, a: &str, b: &str, outcome: i8) -> Result<()> {
        for id in [a, b] {
            if !self.records.contains_key(id) {
                return Err(Error::UnknownModel(id.to_string()));
            }
        }
        if a != b {
            self.winrates.record(a, b, outcome);
        }
        Ok(())
    }

    pub fn lineage(&self, agent: &str) -> LineageTree {
        LineageTree::from_records(self.records.values().filter(|r| r.agent == agent))
    }

    pub fn to_doc(&self) -> LeagueDoc {
        let mut records: Vec<_> = self.records.values().cloned().collect();
        records.sort_by_key(|r| r.created);
        LeagueDoc {
            version: LEAGUE_STATE_VERSION,
            records,
            winrates: self.winrates.to_doc(),
            main_live: self.main_live.clone(),
            next_created: self.next_created,
        }
    }

    /// Writes every frozen snapshot that is not on disk yet under `dir`.
    pub fn write_snapshots(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("snapshots"))?;
        for rec in self.records.values().filter(|r| r.frozen) {
            let rel = rec.snapshot.as_deref().expect("frozen record has a snapshot path");
            let path = dir.join(rel);
            if !path.exists() {
                let snap = &self.snapshots.get(&rec.model_id).expect("frozen record has a snapshot");
                crate::runtime::write_atomic(&path, snap.to_json()?.as_bytes())?;
            }
        }
        Ok(())
    }

    /// Rebuilds a league from its document, loading snapshots from `dir`.
    pub fn from_doc(doc: LeagueDoc, dir: &Path) -> Result<Self> {
        if doc.version != LEAGUE_STATE_VERSION {
            return Err(Error::CorruptState {
                path: dir.to_path_buf(),
                reason: format!("unsupported league state version {}", doc.version),
            });
        }
        let mut league = League::new(doc.winrates.window);
        for rec in doc.records {
            let (_, child) = split_model_id(&rec.model_id)?;
            if league.records.contains_key(&rec.model_id) {
                return Err(Error::DuplicateModel(rec.model_id));
            }
            if rec.frozen {
                let rel = rec.snapshot.as_deref().ok_or_else(|| Error::CorruptState {
                    path: dir.to_path_buf(),
                    reason: format!("frozen record {} has no snapshot", rec.model_id),
                })?;
                let path = dir.join(rel);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::CorruptState {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
                let snap = Snapshot::from_json(&text)?;
                if snap.model_id != rec.model_id {
                    return Err(Error::CorruptState {
                        path,
                        reason: format!("snapshot holds {} instead of {}", snap.model_id, rec.model_id),
                    });
                }
                league.snapshots.insert(snap)?;
            }
            league.children.insert(child.to_string(), rec.model_id.clone());
            league.records.insert(rec.model_id.clone(), rec);
        }
        league.winrates = WinRateTable::from_doc(&doc.winrates);
        league.main_live = doc.main_live;
        league.next_created = doc.next_created;
        Ok(league)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn record(id: &str, agent: &str, role: Role) -> ModelRecord {
        ModelRecord {
            model_id: id.to_string(),
            agent: agent.to_string(),
            role,
            snapshot: None,
            period_index: 0,
            frozen: false,
            initial_model: "init".into(),
            tags: StrategyTagConfig::zero_only(),
            created: 0,
        }
    }
}
