use serde::{Deserialize, Serialize};

use super::{
    aee_period_decision, boundary_reached, ee_period_decision, ma_snapshot_due, make_model_id, League, ModelRecord,
    PeriodDecision, Role, RoleConfig, Target, ROOT_PARENT,
};
use crate::error::{Error, Result};
use crate::policy::{PolicyParams, StrategyTagConfig};

/// Static description of one training line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTemplate {
    pub name: String,
    pub role: Role,
    pub target: Target,
    /// Id of the pre-trained policy this line starts from and resets to.
    pub initial_model: String,
    pub tags: StrategyTagConfig,
    /// Multiplier on the distillation weight.
    pub distill_boost: f64,
}

/// Mutable bookkeeping for a training line. Parameters live with the learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub name: String,
    pub role: Role,
    pub target: Target,
    pub initial_model: String,
    pub tags: StrategyTagConfig,
    pub distill_boost: f64,
    pub live_id: String,
    pub period_index: usize,
    pub steps_in_period: u64,
    pub total_steps: u64,
    pub next_check: u64,
    pub steps_since_snapshot: u64,
    /// Frozen model the divergence term pulls towards.
    pub dapo_anchor: Option<String>,
    pub counter: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodEvent {
    pub agent: String,
    pub role: Role,
    pub frozen: String,
    pub decision: PeriodDecision,
    pub new_live: String,
    /// Parameters to continue from; `None` keeps the current ones.
    pub restart_params: Option<PolicyParams>,
    pub total_steps: u64,
}

fn child_name(name: &str, k: u64) -> String {
    format!("{name}-{k:04}")
}

impl AgentState {
    /// Registers the agent's first live model. The main agent additionally
    /// freezes a copy of its starting point so the league is never empty.
    pub fn start(league: &mut League, t: &AgentTemplate, initial: &PolicyParams, cfg: &RoleConfig) -> Result<AgentState> {
        let (live_id, counter) = if t.role == Role::MA {
            (make_model_id(ROOT_PARENT, &t.name), 0)
        } else {
            (make_model_id(ROOT_PARENT, &child_name(&t.name, 1)), 1)
        };
        let state = AgentState {
            name: t.name.clone(),
            role: t.role,
            target: t.target,
            initial_model: t.initial_model.clone(),
            tags: t.tags.clone(),
            distill_boost: t.distill_boost,
            live_id: live_id.clone(),
            period_index: 0,
            steps_in_period: 0,
            total_steps: 0,
            next_check: cfg.min_period_steps,
            steps_since_snapshot: 0,
            dapo_anchor: None,
            counter,
        };
        league.register(state.record(live_id, 0))?;
        if t.role == Role::MA {
            let seed_id = make_model_id(&t.name, &child_name(&t.name, 0));
            league.register(state.record(seed_id.clone(), 0))?;
            league.freeze(&seed_id, initial)?;
        }
        state.tags.validate()?;
        Ok(state)
    }

    fn record(&self, model_id: String, period_index: usize) -> ModelRecord {
        ModelRecord {
            model_id,
            agent: self.name.clone(),
            role: self.role,
            snapshot: None,
            period_index,
            frozen: false,
            initial_model: self.initial_model.clone(),
            tags: self.tags.clone(),
            created: 0,
        }
    }

    pub fn add_steps(&mut self, n: u64) {
        self.steps_in_period += n;
        self.total_steps += n;
        self.steps_since_snapshot += n;
    }

    /// Win-rate that drives this agent's freeze trigger.
    pub fn target_win_rate(&self, league: &League) -> Result<Option<f64>> {
        Ok(match self.target {
            Target::MainAgent => league.win_rate(&self.live_id, league.main_live()?),
            Target::WholeLeague => league.winrates().aggregate(&self.live_id).win_rate(),
        })
    }
}

/// Applies every period rule that is due for `agent`. `live` are the agent's
/// current parameters and `initial` its reset target.
pub fn advance_period(
    league: &mut League,
    agent: &mut AgentState,
    live: &PolicyParams,
    initial: &PolicyParams,
    cfg: &RoleConfig,
) -> Result<Vec<PeriodEvent>> {
    let mut events = Vec::new();
    if agent.role == Role::MA {
        while ma_snapshot_due(agent.steps_since_snapshot, cfg) {
            agent.counter += 1;
            agent.period_index += 1;
            let id = make_model_id(&agent.name, &child_name(&agent.name, agent.counter));
            league.register(agent.record(id.clone(), agent.period_index))?;
            league.freeze(&id, live)?;
            agent.steps_since_snapshot -= cfg.ma_snapshot_steps;
            agent.dapo_anchor = Some(id.clone());
            events.push(PeriodEvent {
                agent: agent.name.clone(),
                role: agent.role,
                frozen: id,
                decision: PeriodDecision::Continue,
                new_live: agent.live_id.clone(),
                restart_params: None,
                total_steps: agent.total_steps,
            });
        }
        return Ok(events);
    }

    let steps = agent.steps_in_period;
    if steps < cfg.min_period_steps || (steps < cfg.max_period_steps && steps < agent.next_check) {
        return Ok(events);
    }
    let wr = agent.target_win_rate(league)?;
    if !boundary_reached(wr, steps, cfg) {
        while agent.next_check <= steps {
            agent.next_check += cfg.check_interval();
        }
        return Ok(events);
    }

    let frozen = agent.live_id.clone();
    league.freeze(&frozen, live)?;
    let main = league.main_live()?.to_string();
    let tree = league.lineage(&agent.name);
    let vs_main = |id: &str| league.win_rate(id, &main);
    let decision = match agent.role {
        Role::ME | Role::LE | Role::SE => PeriodDecision::Reset,
        Role::EE => ee_period_decision(&tree, &vs_main),
        Role::AEE => aee_period_decision(&tree, &vs_main, cfg),
        Role::MA => unreachable!("handled above"),
    };
    let (parent, restart) = match &decision {
        PeriodDecision::Inherit(id) => {
            let snap = league
                .snapshot(id)
                .ok_or_else(|| Error::UnknownModel(format!("inheritance target {id}")))?;
            let parent = league.get(id).expect("snapshot has a record").child().to_string();
            (parent, (*snap.params).clone())
        }
        _ => (ROOT_PARENT.to_string(), initial.clone()),
    };
    agent.counter += 1;
    agent.period_index += 1;
    let new_live = make_model_id(&parent, &child_name(&agent.name, agent.counter));
    league.register(agent.record(new_live.clone(), agent.period_index))?;
    agent.live_id = new_live.clone();
    agent.steps_in_period = 0;
    agent.next_check = cfg.min_period_steps;
    agent.dapo_anchor = match &decision {
        PeriodDecision::Inherit(id) => Some(id.clone()),
        _ => None,
    };
    events.push(PeriodEvent {
        agent: agent.name.clone(),
        role: agent.role,
        frozen,
        decision,
        new_live,
        restart_params: Some(restart),
        total_steps: agent.total_steps,
    });
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn template(name: &str, role: Role, target: Target) -> AgentTemplate {
        AgentTemplate {
            name: name.into(),
            role,
            target,
            initial_model: "sup-base".into(),
            tags: StrategyTagConfig::zero_only(),
            distill_boost: 1.0,
        }
    }

    fn setup() -> (League, AgentState, RoleConfig, PolicyParams) {
        let cfg = RoleConfig::default();
        let p = PolicyParams::uniform(3, 1);
        let mut league = League::new(cfg.winrate_window);
        let ma = AgentState::start(&mut league, &template("main", Role::MA, Target::MainAgent), &p, &cfg).unwrap();
        (league, ma, cfg, p)
    }

    #[test]
    fn ma_pushes_snapshots_on_schedule() {
        let (mut league, mut ma, cfg, p) = setup();
        assert_eq!(league.frozen_count(), 1);
        ma.add_steps(cfg.ma_snapshot_steps - 1);
        assert!(advance_period(&mut league, &mut ma, &p, &p, &cfg).unwrap().is_empty());
        ma.add_steps(1);
        let ev = advance_period(&mut league, &mut ma, &p, &p, &cfg).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].frozen, "main:main-0001");
        assert_eq!(league.get("main:main-0001").unwrap().period_index, 1);
        for _ in 0..4 {
            ma.add_steps(cfg.ma_snapshot_steps);
            advance_period(&mut league, &mut ma, &p, &p, &cfg).unwrap();
        }
        let pushed = league.frozen().iter().filter(|r| r.period_index >= 1).count();
        assert_eq!(pushed, 5);
        assert_eq!(ma.live_id, "None:main");
    }

    #[test]
    fn exploiter_reset_after_high_win_rate() {
        let (mut league, _ma, cfg, p) = setup();
        let mut me = AgentState::start(&mut league, &template("me", Role::ME, Target::MainAgent), &p, &cfg).unwrap();
        for _ in 0..10 {
            league.record_match_result(&me.live_id, "None:main", 1).unwrap();
        }
        me.add_steps(cfg.min_period_steps - 1);
        assert!(advance_period(&mut league, &mut me, &p, &p, &cfg).unwrap().is_empty());
        me.add_steps(1);
        let ev = advance_period(&mut league, &mut me, &p, &p, &cfg).unwrap();
        assert_eq!(ev[0].decision, PeriodDecision::Reset);
        assert_eq!(ev[0].frozen, "None:me-0001");
        assert_eq!(me.live_id, "None:me-0002");
        assert!(league.get("None:me-0001").unwrap().frozen);
        assert_eq!(me.steps_in_period, 0);
    }

    #[test]
    fn checks_only_on_interval_and_max_forces() {
        let (mut league, _ma, cfg, p) = setup();
        let mut le = AgentState::start(&mut league, &template("le", Role::LE, Target::WholeLeague), &p, &cfg).unwrap();
        le.add_steps(cfg.min_period_steps);
        assert!(advance_period(&mut league, &mut le, &p, &p, &cfg).unwrap().is_empty());
        assert_eq!(le.next_check, cfg.min_period_steps + cfg.check_interval());
        le.add_steps(cfg.max_period_steps - cfg.min_period_steps);
        let ev = advance_period(&mut league, &mut le, &p, &p, &cfg).unwrap();
        assert_eq!(ev.len(), 1);
    }

    #[test]
    fn aee_inherits_leaf_in_window() {
        let (mut league, _ma, cfg, p) = setup();
        let mut a = AgentState::start(&mut league, &template("aee", Role::AEE, Target::MainAgent), &p, &cfg).unwrap();
        // 0.4 against the main agent
        for o in [1, 1, -1, -1, -1] {
            league.record_match_result(&a.live_id, "None:main", o).unwrap();
        }
        a.add_steps(cfg.max_period_steps);
        let ev = advance_period(&mut league, &mut a, &p, &p, &cfg).unwrap();
        assert_eq!(ev[0].decision, PeriodDecision::Inherit("None:aee-0001".into()));
        assert_eq!(a.live_id, "aee-0001:aee-0002");
        assert_eq!(a.dapo_anchor.as_deref(), Some("None:aee-0001"));
    }
}
