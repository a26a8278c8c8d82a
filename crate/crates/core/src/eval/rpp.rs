use serde::{Deserialize, Serialize};

use super::nash::{nash_solve, NashSolution, DEFAULT_NASH_EPS};
use super::payoff::{cross_play, Contestant};
use crate::error::{Error, Result};
use crate::game::GameSpec;

/// Relative population performance of league A against league B.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RppResult {
    pub league_a: Vec<String>,
    pub league_b: Vec<String>,
    /// Raw win-rates of A members (rows) against B members.
    pub win_rates: Vec<Vec<f64>>,
    /// Game value for A on the `2p - 1` scale.
    pub value: f64,
    pub solution: NashSolution,
    pub n_per_pair: u32,
    /// Three times the largest per-entry standard error on the `2p - 1`
    /// scale. The game value moves by at most the largest entry error.
    pub noise_bound: f64,
}

impl RppResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Standard error of a `2p - 1` entry estimated from `n` matches.
pub fn entry_standard_error(p: f64, n: u32) -> f64 {
    2.0 * (p * (1.0 - p) / n as f64).sqrt()
}

pub fn rpp_from_win_rates(
    league_a: Vec<String>,
    league_b: Vec<String>,
    win_rates: Vec<Vec<f64>>,
    n_per_pair: u32,
) -> Result<RppResult> {
    if win_rates.len() != league_a.len() || win_rates.iter().any(|r| r.len() != league_b.len()) {
        return Err(Error::Domain("cross matrix shape does not match the leagues".into()));
    }
    let a: Vec<Vec<f64>> = win_rates
        .iter()
        .map(|r| r.iter().map(|p| 2.0 * p - 1.0).collect())
        .collect();
    let solution = nash_solve(&a, DEFAULT_NASH_EPS)?;
    let max_se = win_rates
        .iter()
        .flatten()
        .map(|&p| entry_standard_error(p, n_per_pair.max(1)))
        .fold(0.0, f64::max);
    Ok(RppResult {
        league_a,
        league_b,
        win_rates,
        value: solution.value,
        solution,
        n_per_pair,
        noise_bound: 3.0 * max_se,
    })
}

/// Every A member plays every B member `n_per_pair` times.
pub fn rpp(a: &[Contestant], b: &[Contestant], spec: &GameSpec, n_per_pair: u32, seed: u64) -> Result<RppResult> {
    let rates = cross_play(a, b, spec, n_per_pair, seed)?;
    rpp_from_win_rates(
        a.iter().map(|c| c.id().to_string()).collect(),
        b.iter().map(|c| c.id().to_string()).collect(),
        rates,
        n_per_pair,
    )
}
