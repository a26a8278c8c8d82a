use std::path::Path;
use std::process::{Command, Output};

use league_core::runtime::STATE_FILE;
use league_core::ExperimentConfig;

fn league(args: &[&str], artifacts: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_league"))
        .args(args)
        .env("LEAGUE_ARTIFACT_DIR", artifacts)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tiny_config(dir: &Path) -> String {
    let mut c = ExperimentConfig::for_template("dlt-formal").unwrap();
    c.game.num_moves = 3;
    c.game.horizon = 4;
    c.league.strategy_count = 1;
    c.league.roles.min_period_steps = 160;
    c.league.roles.max_period_steps = 320;
    c.league.roles.ma_snapshot_steps = 320;
    c.runtime.total_steps = 960;
    c.runtime.workers = 1;
    c.pretrain.demo_games = 20;
    c.pretrain.il_updates = 10;
    c.pretrain.rl_updates = 5;
    let p = dir.join("tiny.json");
    std::fs::write(&p, c.to_json().unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn config_prints_a_loadable_document() {
    let tmp = tempfile::tempdir().unwrap();
    let text = ok(league(&["config", "--template", "alphastar-surrogate"], tmp.path()));
    let c: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(c.league.template, "alphastar-surrogate");
}

#[test]
fn bad_overrides_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(!league(&["train", "--game.m", "1"], tmp.path()).status.success());
    assert!(!league(&["train", "--template", "nope"], tmp.path()).status.success());
    assert!(!league(&["train", "--il.downsample", "NOOP"], tmp.path()).status.success());
}

#[test]
fn train_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let art = tmp.path();
    let cfg = tiny_config(art);
    ok(league(&["train", "--config", &cfg, "--seed", "3"], art));
    let run = art.join("dlt-formal-seed3");
    assert!(run.join(STATE_FILE).exists());

    // same seed, same bytes
    ok(league(&["train", "--config", &cfg, "--seed", "3", "--out", art.join("again").to_str().unwrap()], art));
    for f in league_core::runtime::list_files(&run).unwrap() {
        assert_eq!(std::fs::read(run.join(&f)).unwrap(), std::fs::read(art.join("again").join(&f)).unwrap(), "{f}");
    }
    // an existing run is not overwritten
    assert!(!league(&["train", "--config", &cfg, "--seed", "3"], art).status.success());

    let state = run.join(STATE_FILE);
    let state = state.to_str().unwrap();
    ok(league(&["eval", "round-robin", "--models", state, "--n", "4", "--bots", "elite,uniform"], art));
    let payoff = art.join("eval").join("payoff.csv");
    assert!(std::fs::read_to_string(&payoff).unwrap().contains("elite"));

    let elo = ok(league(&["eval", "elo", "--payoff", payoff.to_str().unwrap(), "--baseline", "elite"], art));
    let elite_line = elo.lines().find(|l| l.starts_with("elite\t")).unwrap();
    assert!(elite_line.ends_with("\t0.0") || elite_line.ends_with("\t-0.0"), "{elite_line}");

    ok(league(&["eval", "nash", "--payoff", payoff.to_str().unwrap()], art));
    let rpp = ok(league(&["eval", "rpp", "--league-a", state, "--league-b", state, "--n", "4"], art));
    assert!(rpp.starts_with("rpp "));
    ok(league(&["eval", "rpp", "--league-a", state, "--league-b", state, "--n", "4", "--ma-only"], art));
    ok(league(&["eval", "bar", "--state", state, "--n", "4"], art));

    let log = run.join(league_core::runtime::MATCH_LOG);
    ok(league(&["eval", "report", "--log", log.to_str().unwrap(), "--exploiters-only"], art));
    let csv = std::fs::read_to_string(art.join("eval").join("diversity.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn resume_checks_the_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let art = tmp.path();
    let cfg = tiny_config(art);
    ok(league(&["train", "--config", &cfg], art));
    let state = art.join("dlt-formal-seed0").join(STATE_FILE);
    let state = state.to_str().unwrap();
    assert!(!league(&["resume", "--state", state, "--expect-hash", "deadbeef"], art).status.success());
    let out = ok(league(&["resume", "--state", state], art));
    assert!(out.starts_with("finished at"), "{out}");
}
