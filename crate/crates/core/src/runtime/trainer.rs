//! The coordinator loop. Each round every agent plays `batch_size` matches
//! against opponents picked by the league, the rollout workers play them,
//! results are applied in match-id order, and every learner takes one update
//! on its own trajectories. Period rules run at the end of the round.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::manifest::{list_files, RunManifest, MANIFEST_VERSION};
use super::pretrain::{pretrain_all, PretrainSummary};
use super::workers::{run_matches, MatchJob};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::eval::{Contestant, MatchLogEntry};
use crate::game::{GameSpec, RuleSet, Seat};
use crate::league::{
    advance_period, schedule_opponent, AgentState, AgentTemplate, League, LeagueDoc, PeriodDecision, Role,
};
use crate::losses::{total_update, LossReport};
use crate::policy::{Actor, PolicyParams, Snapshot, SnapshotDoc, StrategyTagConfig, Trajectory};
use crate::seed;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CONFIG_FILE: &str = "config.json";
pub const STATE_FILE: &str = "state.json";
pub const MATCH_LOG: &str = "match_log.jsonl";
pub const TRAINING_LOG: &str = "training_log.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INITIAL_DIR: &str = "initial";

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainingEvent {
    Pretrain {
        summary: PretrainSummary,
    },
    Update {
        round: u64,
        agent: String,
        model_id: String,
        agent_steps: u64,
        dapo_active: bool,
        report: LossReport,
    },
    Period {
        round: u64,
        agent: String,
        role: Role,
        frozen: String,
        decision: PeriodDecision,
        new_live: String,
        agent_steps: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub template: AgentTemplate,
    pub state: AgentState,
    pub params: SnapshotDoc,
    pub behavior: SnapshotDoc,
    pub matches_since_refresh: u64,
}

/// Everything needed to continue a run, minus the snapshot files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub round: u64,
    pub next_match_id: u64,
    pub env_steps: u64,
    pub league: LeagueDoc,
    pub agents: Vec<AgentCheckpoint>,
    pub match_log_lines: u64,
    pub training_log_lines: u64,
    pub finished: bool,
}

impl Checkpoint {
    pub fn read(path: &Path) -> Result<Checkpoint> {
        let corrupt = |reason: String| Error::CorruptState {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| corrupt(e.to_string()))?;
        let cp: Checkpoint = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {}", cp.version)));
        }
        let actual = cp.config.hash();
        if actual != cp.config_hash {
            return Err(Error::HashMismatch {
                stored: cp.config_hash,
                actual,
            });
        }
        Ok(cp)
    }
}

struct Learner {
    template: AgentTemplate,
    state: AgentState,
    params: PolicyParams,
    /// Stale copy the actors play; its id is the live model id.
    behavior: Arc<Snapshot>,
    matches_since_refresh: u64,
}

impl Learner {
    fn refresh(&mut self) {
        self.behavior = Arc::new(Snapshot::of(&self.params, self.state.live_id.clone()));
        self.matches_since_refresh = 0;
    }
}

struct JsonLines {
    out: BufWriter<File>,
    lines: u64,
}

impl JsonLines {
    fn open(path: &Path, keep_lines: Option<u64>) -> Result<Self> {
        let lines = match keep_lines {
            None => {
                File::create(path)?;
                0
            }
            Some(n) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::CorruptState {
                    path: path.to_path_buf(),
                    reason: e.to_string(),
                })?;
                let kept: Vec<&str> = text.lines().take(n as usize).collect();
                if (kept.len() as u64) < n {
                    return Err(Error::CorruptState {
                        path: path.to_path_buf(),
                        reason: format!("log has {} lines, checkpoint expects {n}", kept.len()),
                    });
                }
                let mut body = kept.join("\n");
                if !body.is_empty() {
                    body.push('\n');
                }
                write_atomic(path, body.as_bytes())?;
                n
            }
        };
        let f = OpenOptions::new().append(true).open(path)?;
        Ok(JsonLines {
            out: BufWriter::new(f),
            lines,
        })
    }

    fn push<T: Serialize>(&mut self, item: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, item)?;
        self.out.write_all(b"\n")?;
        self.lines += 1;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundSummary {
    pub round: u64,
    pub matches: usize,
    pub period_events: usize,
}

pub struct Trainer {
    cfg: ExperimentConfig,
    hash: String,
    spec: GameSpec,
    rules: RuleSet,
    dir: PathBuf,
    league: League,
    learners: Vec<Learner>,
    initial: BTreeMap<String, Arc<PolicyParams>>,
    round: u64,
    next_match_id: u64,
    env_steps: u64,
    match_log: JsonLines,
    training_log: JsonLines,
}

/// Base seeds of the run's random streams.
pub fn module_seeds(cfg: &ExperimentConfig) -> BTreeMap<String, u64> {
    let master = cfg.runtime.seed;
    let mut m = BTreeMap::new();
    m.insert("master".to_string(), master);
    m.insert("game".to_string(), cfg.game.seed);
    for name in ["pretrain", "schedule", "match"] {
        m.insert(name.to_string(), seed::derive(master, &[seed::label(name)]));
    }
    m
}

fn initial_file(id: &str) -> String {
    format!("{INITIAL_DIR}/{id}.json")
}

impl Trainer {
    /// Validates the config, pre-trains the starting policies, seeds the
    /// league and writes the first checkpoint under `dir`.
    pub fn new(cfg: ExperimentConfig, dir: &Path) -> Result<Trainer> {
        cfg.validate()?;
        let spec = cfg.game.build()?;
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join(CONFIG_FILE), cfg.to_json()?.as_bytes())?;

        let (models, summary) = pretrain_all(&cfg, &spec)?;
        for (id, p) in &models {
            write_atomic(&dir.join(initial_file(id)), Snapshot::of(p, id.clone()).to_json()?.as_bytes())?;
        }
        let initial: BTreeMap<String, Arc<PolicyParams>> = models.into_iter().map(|(k, v)| (k, Arc::new(v))).collect();

        let roles = &cfg.league.roles;
        let mut league = League::new(roles.winrate_window);
        let mut templates = cfg.agent_templates()?;
        // the main agent must be registered first
        templates.sort_by_key(|t| t.role != Role::MA);
        let mut learners = Vec::with_capacity(templates.len());
        for t in templates {
            let init = initial
                .get(&t.initial_model)
                .ok_or_else(|| Error::UnknownModel(t.initial_model.clone()))?;
            let state = AgentState::start(&mut league, &t, init, roles)?;
            let mut l = Learner {
                template: t,
                state,
                params: (**init).clone(),
                behavior: Arc::new(Snapshot::of(init, "")),
                matches_since_refresh: 0,
            };
            l.refresh();
            learners.push(l);
        }

        let mut training_log = JsonLines::open(&dir.join(TRAINING_LOG), None)?;
        training_log.push(&TrainingEvent::Pretrain { summary })?;
        let mut t = Trainer {
            hash: cfg.hash(),
            rules: cfg.game.rules.clone(),
            spec,
            dir: dir.to_path_buf(),
            league,
            learners,
            initial,
            round: 0,
            next_match_id: 0,
            env_steps: 0,
            match_log: JsonLines::open(&dir.join(MATCH_LOG), None)?,
            training_log,
            cfg,
        };
        t.checkpoint()?;
        Ok(t)
    }

    /// Reopens a run from its state file. With `expected_hash` set, the
    /// stored config must hash to it.
    pub fn resume(state_path: &Path, expected_hash: Option<&str>) -> Result<Trainer> {
        let cp = Checkpoint::read(state_path)?;
        if let Some(h) = expected_hash {
            if h != cp.config_hash {
                return Err(Error::HashMismatch {
                    stored: cp.config_hash,
                    actual: h.to_string(),
                });
            }
        }
        let dir = state_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let cfg = cp.config;
        cfg.validate()?;
        let spec = cfg.game.build()?;
        let league = League::from_doc(cp.league, &dir)?;

        let mut initial = BTreeMap::new();
        for a in &cp.agents {
            let id = &a.template.initial_model;
            if initial.contains_key(id) {
                continue;
            }
            let path = dir.join(initial_file(id));
            let text = std::fs::read_to_string(&path).map_err(|e| Error::CorruptState {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            initial.insert(id.clone(), Snapshot::from_json(&text)?.params);
        }
        let learners = cp
            .agents
            .into_iter()
            .map(|a| {
                let params = (*Snapshot::from_doc(a.params)?.params).clone();
                let behavior = Arc::new(Snapshot::from_doc(a.behavior)?);
                if behavior.model_id != a.state.live_id {
                    return Err(Error::CorruptState {
                        path: state_path.to_path_buf(),
                        reason: format!("behavior copy of {} is stamped {}", a.state.name, behavior.model_id),
                    });
                }
                Ok(Learner {
                    template: a.template,
                    state: a.state,
                    params,
                    behavior,
                    matches_since_refresh: a.matches_since_refresh,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Trainer {
            hash: cp.config_hash,
            rules: cfg.game.rules.clone(),
            spec,
            match_log: JsonLines::open(&dir.join(MATCH_LOG), Some(cp.match_log_lines))?,
            training_log: JsonLines::open(&dir.join(TRAINING_LOG), Some(cp.training_log_lines))?,
            dir,
            league,
            learners,
            initial,
            round: cp.round,
            next_match_id: cp.next_match_id,
            env_steps: cp.env_steps,
            cfg,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn league(&self) -> &League {
        &self.league
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn agent_names(&self) -> Vec<&str> {
        self.learners.iter().map(|l| l.state.name.as_str()).collect()
    }

    pub fn agent_state(&self, name: &str) -> Option<&AgentState> {
        self.learners.iter().find(|l| l.state.name == name).map(|l| &l.state)
    }

    pub fn agent_params(&self, name: &str) -> Option<&PolicyParams> {
        self.learners.iter().find(|l| l.state.name == name).map(|l| &l.params)
    }

    fn main(&self) -> &Learner {
        &self.learners[0]
    }

    pub fn is_finished(&self) -> bool {
        self.main().state.total_steps >= self.cfg.runtime.total_steps
    }

    /// The live main agent with its current parameters.
    pub fn main_contestant(&self) -> Contestant {
        let m = self.main();
        Contestant::new(
            Arc::new(Snapshot::of(&m.params, m.state.live_id.clone())),
            m.state.tags.clone(),
        )
    }

    /// Every frozen member with its role, in registration order.
    pub fn frozen_contestants(&self) -> Vec<(Contestant, Role)> {
        frozen_of(&self.league)
    }

    /// Frozen main-agent snapshots plus the live main agent.
    pub fn main_history(&self) -> Vec<Contestant> {
        history_of(&self.league, self.main_contestant())
    }

    fn actor_for(&self, id: &str) -> Result<(Arc<dyn Actor>, StrategyTagConfig)> {
        if let Some(snap) = self.league.snapshot(id) {
            let tags = self.league.get(id).expect("snapshot has a record").tags.clone();
            return Ok((Arc::new(snap.clone()), tags));
        }
        self.learners
            .iter()
            .find(|l| l.state.live_id == id)
            .map(|l| (l.behavior.clone() as Arc<dyn Actor>, l.state.tags.clone()))
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    /// Plays one round, updates every learner and applies period rules.
    pub fn step_round(&mut self) -> Result<RoundSummary> {
        let seeds = module_seeds(&self.cfg);
        let (schedule_seed, match_seed) = (seeds["schedule"], seeds["match"]);
        let rt = self.cfg.runtime.clone();
        let roles = self.cfg.league.roles.clone();
        let r = self.round;

        let mut jobs = Vec::new();
        let mut plans = Vec::new();
        for (ai, l) in self.learners.iter().enumerate() {
            for i in 0..rt.batch_size {
                let mut rng = seed::rng(schedule_seed, &[r, ai as u64, i as u64]);
                let plan = schedule_opponent(&self.league, &l.state, &roles, &mut rng)?;
                let (opponent, opp_tags) = self.actor_for(&plan.opponent)?;
                let match_id = self.next_match_id + jobs.len() as u64;
                let s = seed::derive(match_seed, &[match_id]);
                let mut trng = seed::rng(s, &[seed::label("tags")]);
                let mine = l.state.tags.sample(&mut trng);
                let theirs = opp_tags.sample(&mut trng);
                let me: Arc<dyn Actor> = l.behavior.clone();
                let (seat, players, tags) = if match_id % 2 == 0 {
                    (Seat::First, [me, opponent], (mine, theirs))
                } else {
                    (Seat::Second, [opponent, me], (theirs, mine))
                };
                jobs.push(MatchJob {
                    match_id,
                    agent: ai,
                    learner_seat: seat,
                    players,
                    tags,
                    seed: s,
                });
                plans.push(plan);
            }
        }
        self.next_match_id += jobs.len() as u64;
        let done = run_matches(
            &self.spec,
            &self.rules,
            jobs,
            rt.workers,
            rt.queue_capacity,
            Duration::from_secs(rt.watchdog_secs),
        )?;

        let h = self.spec.horizon as u64;
        let mut batches: Vec<Vec<Trajectory>> = vec![Vec::new(); self.learners.len()];
        for (d, plan) in done.iter().zip(&plans) {
            let l = &self.learners[d.agent];
            let traj = d.result.trajectory(d.learner_seat);
            // routing check: a learner only ever sees its own behavior's data
            if traj.model_id != l.behavior.model_id || traj.model_id != plan.learner {
                return Err(Error::Contract(format!(
                    "match {} trajectory stamped {} routed to {}",
                    d.match_id, traj.model_id, l.state.live_id
                )));
            }
            self.league.record_match_result(&plan.learner, &plan.opponent, traj.outcome)?;
            self.env_steps += h;
            let count = |t: &Trajectory| {
                let mut c = vec![0u32; self.spec.num_moves];
                t.steps.iter().for_each(|s| c[s.action] += 1);
                c
            };
            let (first, second) = (&d.result.first, &d.result.second);
            self.match_log.push(&MatchLogEntry {
                timestamp: self.env_steps,
                match_id: d.match_id,
                round: r,
                players: [first.model_id.clone(), second.model_id.clone()],
                learner_seat: match d.learner_seat {
                    Seat::First => 0,
                    Seat::Second => 1,
                },
                learner_agent: l.state.name.clone(),
                learner_role: l.state.role,
                branch: plan.branch,
                tags: [d.tags.0, d.tags.1],
                seed: d.seed,
                outcome: d.result.outcome,
                moves: [count(first), count(second)],
            })?;
            batches[d.agent].push(traj.clone());
        }

        let cfg = &self.cfg;
        let league = &self.league;
        let initial = &self.initial;
        let horizon = self.spec.horizon;
        let updates = self
            .learners
            .par_iter()
            .zip(batches.par_iter())
            .map(|(l, batch)| {
                let loss = cfg.loss_for(&l.template, l.state.total_steps);
                let teacher = (loss.lambda_distill > 0.0).then(|| initial[&l.state.initial_model].as_ref());
                let prev = match (&l.state.dapo_anchor, loss.lambda_dapo > 0.0) {
                    (Some(id), true) => Some(
                        league
                            .snapshot(id)
                            .ok_or_else(|| Error::UnknownModel(format!("dapo anchor {id}")))?
                            .params
                            .as_ref(),
                    ),
                    _ => None,
                };
                let (next, report) = total_update(batch, &l.params, &loss, teacher, prev, horizon)
                    .map_err(|e| match e {
                        Error::NonFinite(m) => Error::NonFinite(format!("agent {} round {r}: {m}", l.state.name)),
                        e => e,
                    })?;
                Ok((next, report, loss.lambda_dapo > 0.0))
            })
            .collect::<Result<Vec<_>>>()?;

        for (l, (next, report, dapo_active)) in self.learners.iter_mut().zip(updates) {
            self.training_log.push(&TrainingEvent::Update {
                round: r,
                agent: l.state.name.clone(),
                model_id: l.state.live_id.clone(),
                agent_steps: l.state.total_steps,
                dapo_active,
                report,
            })?;
            l.params = next;
            l.state.add_steps(rt.batch_size as u64 * h);
            l.matches_since_refresh += rt.batch_size as u64;
            if l.matches_since_refresh >= rt.behavior_refresh_matches {
                l.refresh();
            }
        }

        let mut period_events = 0;
        for l in self.learners.iter_mut() {
            let init = &self.initial[&l.state.initial_model];
            let events = advance_period(&mut self.league, &mut l.state, &l.params, init, &roles)?;
            for ev in events {
                period_events += 1;
                if let Some(p) = ev.restart_params {
                    l.params = p;
                    l.refresh();
                }
                self.training_log.push(&TrainingEvent::Period {
                    round: r,
                    agent: ev.agent,
                    role: ev.role,
                    frozen: ev.frozen,
                    decision: ev.decision,
                    new_live: ev.new_live,
                    agent_steps: ev.total_steps,
                })?;
            }
        }

        self.round += 1;
        let cadence = rt.checkpoint_every_rounds;
        if period_events > 0 || (cadence > 0 && self.round % cadence == 0) {
            self.checkpoint()?;
        }
        Ok(RoundSummary {
            round: r,
            matches: done.len(),
            period_events,
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: self.hash.clone(),
            config: self.cfg.clone(),
            round: self.round,
            next_match_id: self.next_match_id,
            env_steps: self.env_steps,
            league: self.league.to_doc(),
            agents: self
                .learners
                .iter()
                .map(|l| AgentCheckpoint {
                    template: l.template.clone(),
                    state: l.state.clone(),
                    params: Snapshot::of(&l.params, l.state.live_id.clone()).to_doc(),
                    behavior: l.behavior.to_doc(),
                    matches_since_refresh: l.matches_since_refresh,
                })
                .collect(),
            match_log_lines: self.match_log.lines,
            training_log_lines: self.training_log.lines,
            finished: self.is_finished(),
        })
    }

    /// Flushes the logs, writes new snapshots and then the state file.
    pub fn checkpoint(&mut self) -> Result<PathBuf> {
        self.match_log.flush()?;
        self.training_log.flush()?;
        self.league.write_snapshots(&self.dir)?;
        let path = self.dir.join(STATE_FILE);
        write_atomic(&path, serde_json::to_string(&self.to_checkpoint()?)?.as_bytes())?;
        Ok(path)
    }

    /// Runs to the step budget, checkpoints and writes the manifest.
    pub fn run(&mut self) -> Result<RunManifest> {
        while !self.is_finished() {
            self.step_round()?;
        }
        self.finish()
    }

    pub fn finish(&mut self) -> Result<RunManifest> {
        self.checkpoint()?;
        let mut artifacts = list_files(&self.dir)?;
        if !artifacts.iter().any(|a| a == MANIFEST_FILE) {
            artifacts.push(MANIFEST_FILE.to_string());
            artifacts.sort();
        }
        let manifest = RunManifest {
            version: MANIFEST_VERSION,
            config_hash: self.hash.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: module_seeds(&self.cfg),
            artifacts,
            rounds: self.round,
            env_steps: self.env_steps,
            frozen_models: self.league.frozen_count(),
        };
        write_atomic(&self.dir.join(MANIFEST_FILE), manifest.to_json()?.as_bytes())?;
        Ok(manifest)
    }
}

/// `Trainer::new` followed by `run`.
fn frozen_of(league: &League) -> Vec<(Contestant, Role)> {
    league
        .frozen()
        .into_iter()
        .map(|r| {
            let snap = league.snapshot(&r.model_id).expect("frozen member has a snapshot").clone();
            (Contestant::new(Arc::new(snap), r.tags.clone()), r.role)
        })
        .collect()
}

fn history_of(league: &League, live: Contestant) -> Vec<Contestant> {
    let mut v: Vec<Contestant> = frozen_of(league)
        .into_iter()
        .filter(|(_, role)| *role == Role::MA)
        .map(|(c, _)| c)
        .collect();
    v.push(live);
    v
}

/// A run loaded from its state file for evaluation. Unlike
/// [`Trainer::resume`] this never touches the logs.
pub struct SavedRun {
    pub config: ExperimentConfig,
    pub spec: GameSpec,
    pub league: League,
    /// The live main agent.
    pub main: Contestant,
    pub round: u64,
}

impl SavedRun {
    pub fn open(state_path: &Path) -> Result<SavedRun> {
        let cp = Checkpoint::read(state_path)?;
        let dir = state_path.parent().unwrap_or(Path::new("."));
        let spec = cp.config.game.build()?;
        let league = League::from_doc(cp.league, dir)?;
        let a = cp
            .agents
            .into_iter()
            .find(|a| a.state.role == Role::MA)
            .ok_or_else(|| Error::CorruptState {
                path: state_path.to_path_buf(),
                reason: "no main agent in checkpoint".into(),
            })?;
        let main = Contestant::new(Arc::new(Snapshot::from_doc(a.params)?), a.state.tags);
        Ok(SavedRun {
            config: cp.config,
            spec,
            league,
            main,
            round: cp.round,
        })
    }

    pub fn frozen_contestants(&self) -> Vec<(Contestant, Role)> {
        frozen_of(&self.league)
    }

    pub fn main_history(&self) -> Vec<Contestant> {
        history_of(&self.league, self.main.clone())
    }
}

pub fn train(cfg: ExperimentConfig, dir: &Path) -> Result<RunManifest> {
    Trainer::new(cfg, dir)?.run()
}

/// Resumes from a state file and runs to completion.
pub fn resume(state_path: &Path, expected_hash: Option<&str>) -> Result<RunManifest> {
    Trainer::resume(state_path, expected_hash)?.run()
}
