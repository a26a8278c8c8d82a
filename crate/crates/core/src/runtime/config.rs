use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::game::{generate_cyclic_game, GameSpec, RuleSet};
use crate::imitation::WeightSpec;
use crate::league::{AgentTemplate, Role, RoleConfig, Target};
use crate::losses::LossConfig;
use crate::policy::StrategyTagConfig;

pub const TEMPLATES: [&str; 5] = ["dlt-formal", "alphastar-surrogate", "dlt-only", "dlt-rgps", "dlt-rgps-dapo"];
pub const DEFAULT_TEMPLATE: &str = "dlt-formal";
/// Id of the imitation-learned starting policy.
pub const BASE_MODEL: &str = "sup-base";
/// Share of the step budget after which DAPO switches on in `dlt-formal`.
pub const DEFAULT_DAPO_FRACTION: f64 = 0.74;

pub fn specific_model(k: usize) -> String {
    format!("sup-spec-{k}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameBlock {
    pub num_moves: usize,
    pub horizon: usize,
    pub noise_level: f64,
    pub seed: u64,
    /// Critical states for the rule-guided term. League runs keep this
    /// narrow; a rule on every state makes the main agent predictable.
    pub rules: RuleSet,
}

impl Default for GameBlock {
    fn default() -> Self {
        GameBlock {
            num_moves: 5,
            horizon: 8,
            noise_level: 0.1,
            seed: 7,
            rules: RuleSet::counter_moves(&[0]),
        }
    }
}

impl GameBlock {
    pub fn build(&self) -> Result<GameSpec> {
        generate_cyclic_game(self.num_moves, self.horizon, self.noise_level, self.seed)
    }
}

/// Per-role replacement values; unset fields keep the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossOverride {
    pub role: Option<Role>,
    pub lambda_vtrace: Option<f64>,
    pub lambda_upgo: Option<f64>,
    pub lambda_entropy: Option<f64>,
    pub lambda_distill: Option<f64>,
    pub lambda_rgps: Option<f64>,
    pub lambda_dapo: Option<f64>,
    pub learning_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossBlock {
    pub base: LossConfig,
    pub overrides: Vec<LossOverride>,
}

impl Default for LossBlock {
    fn default() -> Self {
        LossBlock {
            base: LossConfig {
                lambda_rgps: 0.0,
                ..LossConfig::default()
            },
            overrides: vec![LossOverride {
                role: Some(Role::MA),
                lambda_rgps: Some(1.0),
                ..LossOverride::default()
            }],
        }
    }
}

impl LossBlock {
    pub fn for_role(&self, role: Role) -> LossConfig {
        let mut c = self.base.clone();
        for o in self.overrides.iter().filter(|o| o.role == Some(role)) {
            let set = |dst: &mut f64, v: Option<f64>| {
                if let Some(v) = v {
                    *dst = v;
                }
            };
            set(&mut c.lambda_vtrace, o.lambda_vtrace);
            set(&mut c.lambda_upgo, o.lambda_upgo);
            set(&mut c.lambda_entropy, o.lambda_entropy);
            set(&mut c.lambda_distill, o.lambda_distill);
            set(&mut c.lambda_rgps, o.lambda_rgps);
            set(&mut c.lambda_dapo, o.lambda_dapo);
            set(&mut c.learning_rate, o.learning_rate);
        }
        c
    }

    pub fn set_ma_rgps(&mut self, v: f64) {
        self.overrides.retain(|o| o.role != Some(Role::MA) || o.lambda_rgps.is_none());
        self.overrides.push(LossOverride {
            role: Some(Role::MA),
            lambda_rgps: Some(v),
            ..LossOverride::default()
        });
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DapoActivation {
    Never,
    /// Agent step count at which the term switches on.
    Step(u64),
    /// Fraction of `runtime.total_steps`.
    Fraction(f64),
}

impl DapoActivation {
    pub fn step(&self, total_steps: u64) -> Option<u64> {
        match *self {
            DapoActivation::Never => None,
            DapoActivation::Step(s) => Some(s),
            DapoActivation::Fraction(f) => Some((f * total_steps as f64).round() as u64),
        }
    }
}

/// Which pre-trained policy a line starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialModel {
    Baseline,
    /// Fine-tuned on strategy tag `k`.
    Specific(usize),
}

impl InitialModel {
    pub fn model_id(&self) -> String {
        match self {
            InitialModel::Baseline => BASE_MODEL.to_string(),
            InitialModel::Specific(k) => specific_model(*k),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub role: Role,
    pub target: Target,
    pub initial: InitialModel,
    /// `None` gives the main agent the shared tag pool and exploiters the zero tag.
    #[serde(default)]
    pub tags: Option<StrategyTagConfig>,
    #[serde(default = "one")]
    pub distill_boost: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeagueBlock {
    pub template: String,
    pub roles: RoleConfig,
    /// Replaces the template lineup when set.
    pub lineup: Option<Vec<AgentSpec>>,
    /// Number of nonzero strategy tags.
    pub strategy_count: usize,
    pub ma_zero_tag_prob: f64,
}

impl Default for LeagueBlock {
    fn default() -> Self {
        LeagueBlock {
            template: DEFAULT_TEMPLATE.into(),
            roles: RoleConfig::default(),
            lineup: None,
            strategy_count: 6,
            ma_zero_tag_prob: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeBlock {
    pub workers: usize,
    /// Matches per agent per round; one learner update per agent per round.
    pub batch_size: usize,
    /// Environment steps per agent.
    pub total_steps: u64,
    /// Extra checkpoint every this many rounds; 0 keeps only period-boundary
    /// and shutdown checkpoints.
    pub checkpoint_every_rounds: u64,
    pub seed: u64,
    /// Actors play a stale copy of each learner, refreshed after this many matches.
    pub behavior_refresh_matches: u64,
    pub queue_capacity: usize,
    pub watchdog_secs: u64,
}

impl Default for RuntimeBlock {
    fn default() -> Self {
        RuntimeBlock {
            workers: 2,
            batch_size: 8,
            total_steps: 400_000,
            checkpoint_every_rounds: 0,
            seed: 0,
            behavior_refresh_matches: 50,
            queue_capacity: 64,
            watchdog_secs: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainBlock {
    pub demo_games: usize,
    pub il_updates: usize,
    pub il_batch: usize,
    pub il_learning_rate: f64,
    pub weights: WeightSpec,
    pub rl_updates: usize,
    pub rl_batch: usize,
    pub rl_learning_rate: f64,
}

impl Default for PretrainBlock {
    fn default() -> Self {
        PretrainBlock {
            demo_games: 400,
            il_updates: 300,
            il_batch: 16,
            il_learning_rate: 1.0,
            weights: WeightSpec::default(),
            rl_updates: 150,
            rl_batch: 16,
            rl_learning_rate: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub game: GameBlock,
    pub loss: LossBlock,
    pub league: LeagueBlock,
    pub runtime: RuntimeBlock,
    pub pretrain: PretrainBlock,
    pub dapo_activation: DapoActivation,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            game: GameBlock::default(),
            loss: LossBlock::default(),
            league: LeagueBlock::default(),
            runtime: RuntimeBlock::default(),
            pretrain: PretrainBlock::default(),
            dapo_activation: DapoActivation::Fraction(DEFAULT_DAPO_FRACTION),
        }
    }
}

impl ExperimentConfig {
    /// Defaults with the loss switches each template stands for.
    pub fn for_template(name: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.set_template(name)?;
        Ok(c)
    }

    /// Points the config at `name` and sets its RGPS and DAPO switches.
    pub fn set_template(&mut self, name: &str) -> Result<()> {
        let (rgps, dapo) = match name {
            "dlt-formal" => (1.0, DapoActivation::Fraction(DEFAULT_DAPO_FRACTION)),
            "alphastar-surrogate" | "dlt-only" => (0.0, DapoActivation::Never),
            "dlt-rgps" => (1.0, DapoActivation::Never),
            "dlt-rgps-dapo" => (1.0, DapoActivation::Step(0)),
            other => return Err(unknown_template(other)),
        };
        self.league.template = name.to_string();
        self.loss.set_ma_rgps(rgps);
        self.dapo_activation = dapo;
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn tag_count(&self) -> usize {
        self.league.strategy_count + 1
    }

    pub fn lineup(&self) -> Result<Vec<AgentSpec>> {
        match &self.league.lineup {
            Some(l) => Ok(l.clone()),
            None => template_lineup(
                &self.league.template,
                self.league.strategy_count,
                self.league.roles.se_distill_boost,
            ),
        }
    }

    /// The lineup with tag defaults filled in.
    pub fn agent_templates(&self) -> Result<Vec<AgentTemplate>> {
        let k = self.league.strategy_count;
        Ok(self
            .lineup()?
            .into_iter()
            .map(|a| AgentTemplate {
                tags: a.tags.clone().unwrap_or_else(|| {
                    if a.role == Role::MA && k > 0 {
                        StrategyTagConfig::uniform_pool(self.league.ma_zero_tag_prob, 1..=k)
                    } else {
                        StrategyTagConfig::zero_only()
                    }
                }),
                name: a.name,
                role: a.role,
                target: a.target,
                initial_model: a.initial.model_id(),
                distill_boost: a.distill_boost,
            })
            .collect())
    }

    /// Step at which DAPO switches on, if ever.
    pub fn dapo_step(&self) -> Option<u64> {
        self.dapo_activation.step(self.runtime.total_steps)
    }

    /// Effective loss settings for one agent at its current step count.
    pub fn loss_for(&self, t: &AgentTemplate, agent_steps: u64) -> LossConfig {
        let mut c = self.loss.for_role(t.role);
        c.lambda_distill *= t.distill_boost;
        if !self.dapo_step().is_some_and(|s| agent_steps >= s) {
            c.lambda_dapo = 0.0;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.game.build()?;
        self.game.rules.validate(&spec)?;
        self.league.roles.validate()?;
        if self.runtime.total_steps < self.league.roles.min_period_steps {
            return Err(Error::Config(format!(
                "total_steps {} is shorter than one period ({})",
                self.runtime.total_steps, self.league.roles.min_period_steps
            )));
        }
        let r = &self.runtime;
        if r.workers == 0 || r.batch_size == 0 || r.queue_capacity == 0 || r.behavior_refresh_matches == 0 {
            return Err(Error::Config("workers, batch_size, queue_capacity and behavior_refresh_matches must be positive".into()));
        }
        if r.watchdog_secs == 0 {
            return Err(Error::Config("watchdog_secs must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.league.ma_zero_tag_prob) {
            return Err(Error::Config("ma_zero_tag_prob outside [0, 1]".into()));
        }
        if let DapoActivation::Fraction(f) = self.dapo_activation {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("dapo fraction {f} outside [0, 1]")));
            }
        }
        let p = &self.pretrain;
        if p.il_batch == 0 || p.rl_batch == 0 || p.demo_games == 0 {
            return Err(Error::Config("pretraining batch sizes and demo_games must be positive".into()));
        }
        if !(p.il_learning_rate > 0.0 && p.rl_learning_rate > 0.0) {
            return Err(Error::Config("pretraining learning rates must be positive".into()));
        }
        p.weights.validate()?;
        for role in [Role::MA, Role::ME, Role::LE, Role::SE, Role::EE, Role::AEE] {
            self.loss.for_role(role).validate(spec.horizon)?;
        }
        let templates = self.agent_templates()?;
        let mas = templates.iter().filter(|t| t.role == Role::MA).count();
        if mas != 1 {
            return Err(Error::Config(format!("lineup needs exactly one main agent, found {mas}")));
        }
        let mut names: Vec<&str> = templates.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("agent names must be unique".into()));
        }
        for t in &templates {
            if t.name.is_empty() || t.name.contains(':') || t.name.contains(',') {
                return Err(Error::Config(format!("bad agent name {:?}", t.name)));
            }
            t.tags.validate()?;
            if t.tags.tag_pool.iter().any(|(z, _)| *z >= self.tag_count()) {
                return Err(Error::Config(format!("agent {} uses a tag beyond strategy_count", t.name)));
            }
            if let Some(k) = t.initial_model.strip_prefix("sup-spec-") {
                let k: usize = k.parse().map_err(|_| Error::Config(format!("bad initial model {}", t.initial_model)))?;
                if k == 0 || k > self.league.strategy_count {
                    return Err(Error::Config(format!("agent {} starts from missing tag {k}", t.name)));
                }
            }
            if !(t.distill_boost >= 0.0) {
                return Err(Error::Config(format!("agent {} has a negative distill boost", t.name)));
            }
        }
        Ok(())
    }
}

fn unknown_template(name: &str) -> Error {
    Error::Config(format!("unknown league template {name:?}; known: {}", TEMPLATES.join(", ")))
}

fn agent(name: &str, role: Role, target: Target, initial: InitialModel) -> AgentSpec {
    AgentSpec {
        name: name.into(),
        role,
        target,
        initial,
        tags: None,
        distill_boost: 1.0,
    }
}

/// Built-in lineups. `strategy_count` is the number of nonzero tags.
pub fn template_lineup(name: &str, strategy_count: usize, se_distill_boost: f64) -> Result<Vec<AgentSpec>> {
    let main = agent("main", Role::MA, Target::MainAgent, InitialModel::Baseline);
    match name {
        "alphastar-surrogate" => Ok(vec![
            main,
            agent("me1", Role::ME, Target::MainAgent, InitialModel::Baseline),
            agent("me2", Role::ME, Target::MainAgent, InitialModel::Baseline),
            agent("le1", Role::LE, Target::WholeLeague, InitialModel::Baseline),
            agent("le2", Role::LE, Target::WholeLeague, InitialModel::Baseline),
        ]),
        "dlt-formal" | "dlt-only" | "dlt-rgps" | "dlt-rgps-dapo" => {
            let mut v = vec![
                main,
                agent("aee-general", Role::AEE, Target::MainAgent, InitialModel::Baseline),
                agent("aee-league", Role::AEE, Target::WholeLeague, InitialModel::Baseline),
            ];
            // specific-exploiter / adaptive hybrids, one per strategy tag
            for k in 1..=strategy_count {
                v.push(AgentSpec {
                    tags: Some(StrategyTagConfig::uniform_pool(0.0, [k])),
                    distill_boost: se_distill_boost,
                    ..agent(&format!("aee-se{k}"), Role::AEE, Target::MainAgent, InitialModel::Specific(k))
                });
            }
            Ok(v)
        }
        other => Err(unknown_template(other)),
    }
}
