//! `league`: train, resume and evaluate desk-scale leagues.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use league_core::eval::{
    bars_to_csv, diversity_report, elo_fit, league_bar, nash_solve, read_match_log, round_robin, rpp, Contestant, PayoffMatrix,
    DEFAULT_NASH_EPS,
};
use league_core::imitation::WeightSpec;
use league_core::league::Role;
use league_core::policy::BotActor;
use league_core::runtime::{ablation, EvalBudget, SavedRun, Trainer, DEFAULT_TEMPLATE, STATE_FILE, TEMPLATES};
use league_core::{ExperimentConfig, ScriptedBot, StrategyTagConfig};

/// Default root for every artifact the tool writes.
const ARTIFACT_ENV: &str = "LEAGUE_ARTIFACT_DIR";

#[derive(Parser)]
#[command(name = "league", version, about = "Desk-scale league training on a cyclic toy game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a league from a config file or a template.
    Train(TrainArgs),
    /// Continue a run from its state file.
    Resume {
        #[arg(long)]
        state: PathBuf,
        /// Refuse to resume unless the stored config hashes to this.
        #[arg(long)]
        expect_hash: Option<String>,
    },
    /// Train several templates per seed and compare each with a reference.
    Ablation(AblationArgs),
    /// Print a full config document for a template.
    Config {
        #[arg(long, default_value = DEFAULT_TEMPLATE)]
        template: String,
    },
    /// Population evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// JSON config; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    template: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "game.m")]
    game_m: Option<usize>,
    #[arg(long = "game.horizon")]
    game_horizon: Option<usize>,
    #[arg(long = "game.sigma")]
    game_sigma: Option<f64>,
    #[arg(long = "game.seed")]
    game_seed: Option<u64>,
    #[arg(long = "loss.rho-bar")]
    rho_bar: Option<f64>,
    #[arg(long = "loss.c-bar")]
    c_bar: Option<f64>,
    /// Rule-guided term weight; it only ever applies to the main agent.
    #[arg(long = "loss.lambda-rgps")]
    lambda_rgps: Option<f64>,
    #[arg(long = "loss.dapo-window")]
    dapo_window: Option<usize>,
    #[arg(long = "loss.learning-rate")]
    learning_rate: Option<f64>,
    /// `LABEL=rate,LABEL=rate`
    #[arg(long = "il.downsample")]
    il_downsample: Option<String>,
    #[arg(long = "il.cap")]
    il_cap: Option<f64>,
    /// Probability the main agent plays with the zero tag.
    #[arg(long = "tags.zero-prob")]
    zero_prob: Option<f64>,
    #[arg(long = "runtime.workers")]
    workers: Option<usize>,
    #[arg(long = "runtime.batch-size")]
    batch_size: Option<usize>,
    #[arg(long = "runtime.total-steps")]
    total_steps: Option<u64>,
}

impl Overrides {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str::<ExperimentConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => ExperimentConfig::for_template(self.template.as_deref().unwrap_or(DEFAULT_TEMPLATE))?,
        };
        if let (Some(_), Some(t)) = (&self.config, &self.template) {
            c.set_template(t)?;
        }
        set(&mut c.runtime.seed, self.seed);
        set(&mut c.game.num_moves, self.game_m);
        set(&mut c.game.horizon, self.game_horizon);
        set(&mut c.game.noise_level, self.game_sigma);
        set(&mut c.game.seed, self.game_seed);
        set(&mut c.loss.base.rho_bar, self.rho_bar);
        set(&mut c.loss.base.c_bar, self.c_bar);
        set(&mut c.loss.base.learning_rate, self.learning_rate);
        if let Some(w) = self.dapo_window {
            c.loss.base.dapo_window = Some(w);
        }
        if let Some(v) = self.lambda_rgps {
            c.loss.set_ma_rgps(v);
        }
        if let Some(d) = &self.il_downsample {
            c.pretrain.weights.downsample = WeightSpec::parse_downsample(d)?;
        }
        set(&mut c.pretrain.weights.rare_upsample_cap, self.il_cap);
        set(&mut c.league.ma_zero_tag_prob, self.zero_prob);
        set(&mut c.runtime.workers, self.workers);
        set(&mut c.runtime.batch_size, self.batch_size);
        set(&mut c.runtime.total_steps, self.total_steps);
        c.validate()?;
        Ok(c)
    }
}

fn set<T>(field: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *field = v;
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Run directory; defaults to `$LEAGUE_ARTIFACT_DIR/<template>-seed<seed>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblationArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Comma-separated; defaults to every template.
    #[arg(long, value_delimiter = ',')]
    templates: Vec<String>,
    #[arg(long, default_value = "alphastar-surrogate")]
    reference: String,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Matches per pair in the RPP matrices.
    #[arg(long, default_value_t = 50)]
    n: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Payoff matrix over a run's frozen members (plus scripted bots).
    RoundRobin {
        /// State file of a run.
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: u32,
        /// Scripted bots to include, e.g. `elite,uniform,counter-last,pure-0`.
        #[arg(long, value_delimiter = ',', default_value = "elite")]
        bots: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ratings from a payoff CSV with the baseline pinned at 0.
    Elo {
        #[arg(long)]
        payoff: PathBuf,
        #[arg(long, default_value = "elite")]
        baseline: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Equilibrium of a payoff CSV on the `2p - 1` scale.
    Nash {
        #[arg(long)]
        payoff: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative population performance of league A against league B.
    Rpp {
        #[arg(long)]
        league_a: PathBuf,
        #[arg(long)]
        league_b: PathBuf,
        /// Compare main-agent histories instead of whole leagues.
        #[arg(long)]
        ma_only: bool,
        #[arg(long, default_value_t = 100)]
        n: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Move and tag usage from a match log.
    Report {
        #[arg(long)]
        log: PathBuf,
        /// Leave out the main agent's matches.
        #[arg(long)]
        exploiters_only: bool,
        #[arg(long, default_value_t = 0)]
        from_round: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The live main agent against every frozen member.
    Bar {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn artifact_root() -> PathBuf {
    std::env::var_os(ARTIFACT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("artifacts"))
}

fn eval_dir(out: Option<PathBuf>) -> Result<PathBuf> {
    let d = out.unwrap_or_else(|| artifact_root().join("eval"));
    std::fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    Ok(d)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
    println!("wrote {}", p.display());
    Ok(())
}

fn parse_bot(name: &str) -> Result<ScriptedBot> {
    Ok(match name {
        "elite" => ScriptedBot::Elite,
        "uniform" => ScriptedBot::Uniform,
        "counter-last" => ScriptedBot::CounterLast,
        _ => match name.strip_prefix("pure-").and_then(|k| k.parse().ok()) {
            Some(k) => ScriptedBot::Pure(k),
            None => bail!("unknown bot {name:?}"),
        },
    })
}

fn bot(b: ScriptedBot) -> Contestant {
    Contestant::new(Arc::new(BotActor::new(b)), StrategyTagConfig::zero_only())
}

fn read_payoff(path: &Path) -> Result<PayoffMatrix> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(PayoffMatrix::from_csv(&text)?)
}

fn state_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(STATE_FILE)
    } else {
        p.to_path_buf()
    }
}

fn run_eval(cmd: EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::RoundRobin { models, n, bots, seed, out } => {
            let run = SavedRun::open(&state_path(&models))?;
            let mut players: Vec<Contestant> = bots.iter().map(|b| parse_bot(b).map(bot)).collect::<Result<_>>()?;
            players.extend(run.frozen_contestants().into_iter().map(|(c, _)| c));
            players.push(run.main.clone());
            let pm = round_robin(&players, &run.spec, n, seed)?;
            let dir = eval_dir(out)?;
            write(&dir, "payoff.csv", &pm.to_csv()?)?;
            write(&dir, "payoff.json", &pm.to_json()?)?;
        }
        EvalCommand::Elo { payoff, baseline, out } => {
            let r = elo_fit(&read_payoff(&payoff)?, &baseline)?;
            for (id, x) in r.model_ids.iter().zip(&r.ratings) {
                println!("{id}\t{x:.1}");
            }
            write(&eval_dir(out)?, "elo.json", &r.to_json()?)?;
        }
        EvalCommand::Nash { payoff, out } => {
            let pm = read_payoff(&payoff)?;
            let s = nash_solve(&pm.zero_sum(), DEFAULT_NASH_EPS)?;
            println!("value {:.6} exploitability {:.2e}", s.value, s.exploitability);
            write(&eval_dir(out)?, "nash.json", &serde_json::to_string_pretty(&s)?)?;
        }
        EvalCommand::Rpp { league_a, league_b, ma_only, n, seed, out } => {
            let a = SavedRun::open(&state_path(&league_a))?;
            let b = SavedRun::open(&state_path(&league_b))?;
            if a.config.game != b.config.game {
                bail!("the two runs were trained on different games");
            }
            let members = |r: &SavedRun| -> Vec<Contestant> {
                if ma_only {
                    r.main_history()
                } else {
                    r.frozen_contestants().into_iter().map(|(c, _)| c).collect()
                }
            };
            let r = rpp(&members(&a), &members(&b), &a.spec, n, seed)?;
            println!("rpp {:+.4} (noise bound {:.4})", r.value, r.noise_bound);
            write(&eval_dir(out)?, "rpp.json", &r.to_json()?)?;
        }
        EvalCommand::Report { log, exploiters_only, from_round, out } => {
            let entries = read_match_log(&log)?;
            let Some(first) = entries.first() else { bail!("{} has no matches", log.display()) };
            let m = first.moves[0].len();
            let tags = entries.iter().flat_map(|e| e.tags).max().unwrap_or(0) + 1;
            let rep = diversity_report(
                &entries,
                &|e| e.round >= from_round && !(exploiters_only && e.learner_role == Role::MA),
                m,
                tags,
            )?;
            println!("pooled move entropy {:.4} nats over {} matches", rep.entropy, rep.pooled.matches);
            let dir = eval_dir(out)?;
            write(&dir, "diversity.csv", &rep.to_csv()?)?;
            write(&dir, "diversity.json", &serde_json::to_string_pretty(&rep)?)?;
        }
        EvalCommand::Bar { state, n, seed, out } => {
            let run = SavedRun::open(&state_path(&state))?;
            let rows = league_bar(&run.main, &run.frozen_contestants(), &run.spec, n, seed)?;
            let beaten = rows.iter().filter(|r| r.win_rate > 0.5).count();
            println!("main agent beats {beaten}/{} frozen members", rows.len());
            write(&eval_dir(out)?, "league_bar.csv", &bars_to_csv(&rows)?)?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => {
            let cfg = a.overrides.build()?;
            let dir = a
                .out
                .unwrap_or_else(|| artifact_root().join(format!("{}-seed{}", cfg.league.template, cfg.runtime.seed)));
            if dir.join(STATE_FILE).exists() {
                bail!("{} already holds a run; use `resume`", dir.display());
            }
            let m = Trainer::new(cfg, &dir)?.run()?;
            println!(
                "trained {} rounds, {} env steps, {} frozen models in {}",
                m.rounds,
                m.env_steps,
                m.frozen_models,
                dir.display()
            );
        }
        Command::Resume { state, expect_hash } => {
            let m = league_core::runtime::resume(&state_path(&state), expect_hash.as_deref())?;
            println!("finished at {} rounds, {} frozen models", m.rounds, m.frozen_models);
        }
        Command::Ablation(a) => {
            let base = a.overrides.build()?;
            let templates = if a.templates.is_empty() {
                TEMPLATES.iter().map(|t| t.to_string()).collect()
            } else {
                a.templates
            };
            let budget = EvalBudget {
                n_per_pair: a.n,
                ..EvalBudget::default()
            };
            let out = a.out.unwrap_or_else(|| artifact_root().join("ablation"));
            let rep = ablation(&base, &templates, &a.reference, &a.seeds, &budget, &out)?;
            print!("{}", rep.to_csv());
        }
        Command::Config { template } => {
            println!("{}", ExperimentConfig::for_template(&template)?.to_json()?);
        }
        Command::Eval(cmd) => run_eval(cmd)?,
    }
    Ok(())
}
