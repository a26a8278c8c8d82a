//! Population evaluation: tournaments, ratings, equilibrium values and
//! usage reports.

mod elo;
mod nash;
mod payoff;
mod report;
mod rpp;

pub use elo::{elo_expected, elo_fit, elo_loss, Ratings, ELO_CLAMP, ELO_GRAD_TOL};
pub use nash::{
    equilibrium_gaps, nash_exact, nash_solve, nash_solve_capped, NashSolution, DEFAULT_NASH_EPS, DEFAULT_NASH_ITERATIONS,
    EXACT_MAX_SIDE,
};
pub use payoff::{cross_play, play_pair, round_robin, Contestant, PairResult, PayoffMatrix};
pub use report::{
    bars_to_csv, diversity_report, entropy, league_bar, read_match_log, response_report, responses_to_csv, BarRow,
    DiversityReport, MatchLogEntry, ResponseRow, Usage,
};
pub use rpp::{entry_standard_error, rpp, rpp_from_win_rates, RppResult};
