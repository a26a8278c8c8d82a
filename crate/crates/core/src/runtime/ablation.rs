//! Trains several league templates under one budget and compares each with
//! a reference league.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::trainer::{Trainer, MATCH_LOG};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::eval::{diversity_report, read_match_log, rpp, Contestant, DiversityReport};
use crate::game::{GameSpec, RuleSet};
use crate::league::Role;
use crate::policy::{rollout, PolicyParams, Snapshot};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalBudget {
    pub n_per_pair: u32,
    pub seed: u64,
    /// Diversity is measured on this trailing share of each run's rounds.
    pub tail_fraction: f64,
    /// Only the most recent members of each league enter the RPP matrices.
    pub max_league_members: usize,
}

impl Default for EvalBudget {
    fn default() -> Self {
        EvalBudget {
            n_per_pair: 50,
            seed: 0,
            tail_fraction: 0.2,
            max_league_members: 48,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub template: String,
    pub seed: u64,
    pub league_rpp: Option<f64>,
    pub league_noise_bound: Option<f64>,
    pub ma_rpp: Option<f64>,
    pub ma_noise_bound: Option<f64>,
    pub entropy: Option<f64>,
    pub reference_entropy: Option<f64>,
    pub frozen_models: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub reference: String,
    pub budget: EvalBudget,
    pub rows: Vec<AblationRow>,
    /// Keyed by `template/seed`.
    pub diversity: BTreeMap<String, DiversityReport>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        fn cell<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(|x| x.to_string()).unwrap_or_default()
        }
        let mut s = String::from(
            "template,seed,league_rpp,league_noise_bound,ma_rpp,ma_noise_bound,entropy,reference_entropy,frozen_models,error\n",
        );
        for r in &self.rows {
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.template,
                r.seed,
                cell(&r.league_rpp),
                cell(&r.league_noise_bound),
                cell(&r.ma_rpp),
                cell(&r.ma_noise_bound),
                cell(&r.entropy),
                cell(&r.reference_entropy),
                cell(&r.frozen_models),
                err
            ));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// What the comparison needs from a finished run.
struct RunView {
    spec: GameSpec,
    league: Vec<Contestant>,
    main: Vec<Contestant>,
    diversity: DiversityReport,
    frozen: usize,
}

fn tail<T: Clone>(v: Vec<T>, n: usize) -> Vec<T> {
    let skip = v.len().saturating_sub(n.max(1));
    v[skip..].to_vec()
}

/// Move usage of the non-main agents over the trailing rounds of a run.
pub fn exploiter_diversity(t: &Trainer, tail_fraction: f64) -> Result<DiversityReport> {
    let log = read_match_log(&t.dir().join(MATCH_LOG))?;
    let from = ((1.0 - tail_fraction.clamp(0.0, 1.0)) * t.round() as f64).floor() as u64;
    diversity_report(
        &log,
        &|e| e.round >= from && e.learner_role != Role::MA,
        t.spec().num_moves,
        t.config().tag_count(),
    )
}

fn view(t: &Trainer, budget: &EvalBudget) -> Result<RunView> {
    let league: Vec<Contestant> = t.frozen_contestants().into_iter().map(|(c, _)| c).collect();
    Ok(RunView {
        spec: t.spec().clone(),
        frozen: league.len(),
        league: tail(league, budget.max_league_members),
        main: tail(t.main_history(), budget.max_league_members),
        diversity: exploiter_diversity(t, budget.tail_fraction)?,
    })
}

fn train_view(cfg: ExperimentConfig, dir: &Path, budget: &EvalBudget) -> Result<RunView> {
    let mut t = Trainer::new(cfg, dir)?;
    t.run()?;
    view(&t, budget)
}

/// Trains every template for every seed and compares it with `reference`
/// trained under the same seed. Failures are reported per row. Writes
/// `ablation.json` and `ablation.csv` under `out_dir`.
pub fn ablation(
    base: &ExperimentConfig,
    templates: &[String],
    reference: &str,
    seeds: &[u64],
    budget: &EvalBudget,
    out_dir: &Path,
) -> Result<AblationReport> {
    if !templates.iter().any(|t| t == reference) {
        return Err(Error::Config(format!("reference template {reference} is not among {templates:?}")));
    }
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let mut rows = Vec::new();
    let mut diversity = BTreeMap::new();
    for &s in seeds {
        let mut views = BTreeMap::new();
        for t in templates {
            let mut cfg = base.clone();
            cfg.league.lineup = None;
            cfg.runtime.seed = s;
            let v = cfg
                .set_template(t)
                .and_then(|_| train_view(cfg, &out_dir.join(format!("{t}-seed{s}")), budget));
            views.insert(t.clone(), v);
        }
        let reference_view = views[reference].as_ref().map_err(|e| e.to_string());
        for t in templates {
            let mut row = AblationRow {
                template: t.clone(),
                seed: s,
                ..AblationRow::default()
            };
            let outcome = (|| -> std::result::Result<(), String> {
                let v = views[t].as_ref().map_err(|e| e.to_string())?;
                row.frozen_models = Some(v.frozen);
                row.entropy = Some(v.diversity.entropy);
                diversity.insert(format!("{t}/{s}"), v.diversity.clone());
                let r = reference_view.as_ref().map_err(|e| format!("reference failed: {e}"))?;
                row.reference_entropy = Some(r.diversity.entropy);
                let eval_seed = seed::derive(budget.seed, &[s]);
                let league = rpp(&v.league, &r.league, &v.spec, budget.n_per_pair, eval_seed).map_err(|e| e.to_string())?;
                row.league_rpp = Some(league.value);
                row.league_noise_bound = Some(league.noise_bound);
                let ma = rpp(&v.main, &r.main, &v.spec, budget.n_per_pair, eval_seed).map_err(|e| e.to_string())?;
                row.ma_rpp = Some(ma.value);
                row.ma_noise_bound = Some(ma.noise_bound);
                Ok(())
            })();
            row.error = outcome.err();
            rows.push(row);
        }
    }
    let report = AblationReport {
        reference: reference.to_string(),
        budget: budget.clone(),
        rows,
        diversity,
    };
    std::fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join("ablation.json"), report.to_json()?.as_bytes())?;
    write_atomic(&out_dir.join("ablation.csv"), report.to_csv().as_bytes())?;
    Ok(report)
}

/// Mean probability the policy gives the expert move on the critical states
/// it visits in `n` self-play matches under strategy tag `tag`.
pub fn expert_agreement(params: &PolicyParams, spec: &GameSpec, rules: &RuleSet, tag: usize, n: u32, seed_base: u64) -> Result<f64> {
    let me = Snapshot::of(params, "probe");
    let (mut total, mut count) = (0.0, 0usize);
    for k in 0..n {
        let r = rollout(spec, rules, &me, &me, (tag, tag), seed::derive(seed_base, &[seed::label("probe"), k as u64]))?;
        for step in r.first.steps.iter().chain(&r.second.steps) {
            if let Some(expert) = &step.expert {
                let probs = params.probs(step.state, tag);
                total += expert.iter().zip(&probs).map(|(e, p)| e * p).sum::<f64>();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Domain("no critical states visited".into()));
    }
    Ok(total / count as f64)
}
