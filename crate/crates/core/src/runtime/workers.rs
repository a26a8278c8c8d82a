//! Rollout workers. Jobs go out over one bounded queue and results come back
//! over another; the coordinator gives up if no result arrives within the
//! watchdog interval.

use std::sync::Arc;
use std::time::Duration;

use crossbeam_channel::{bounded, RecvTimeoutError};

use crate::error::{Error, Result};
use crate::game::{GameSpec, RuleSet, Seat};
use crate::policy::{rollout, Actor, RolloutResult};

#[derive(Clone)]
pub struct MatchJob {
    pub match_id: u64,
    /// Index of the learning agent.
    pub agent: usize,
    pub learner_seat: Seat,
    pub players: [Arc<dyn Actor>; 2],
    pub tags: (usize, usize),
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct MatchDone {
    pub match_id: u64,
    pub agent: usize,
    pub learner_seat: Seat,
    pub tags: (usize, usize),
    pub seed: u64,
    pub result: RolloutResult,
}

/// Plays every job on `workers` threads. Output is sorted by match id, so it
/// does not depend on which worker finished first.
pub fn run_matches(
    spec: &GameSpec,
    rules: &RuleSet,
    jobs: Vec<MatchJob>,
    workers: usize,
    capacity: usize,
    watchdog: Duration,
) -> Result<Vec<MatchDone>> {
    let n = jobs.len();
    let (job_tx, job_rx) = bounded::<MatchJob>(capacity.max(1));
    let (res_tx, res_rx) = bounded::<Result<MatchDone>>(capacity.max(1));
    std::thread::scope(|scope| {
        scope.spawn(move || {
            for job in jobs {
                if job_tx.send(job).is_err() {
                    break;
                }
            }
        });
        for _ in 0..workers.max(1) {
            let job_rx = job_rx.clone();
            let res_tx = res_tx.clone();
            scope.spawn(move || {
                for job in job_rx.iter() {
                    let [p1, p2] = &job.players;
                    let out = rollout(spec, rules, p1.as_ref(), p2.as_ref(), job.tags, job.seed).map(|result| MatchDone {
                        match_id: job.match_id,
                        agent: job.agent,
                        learner_seat: job.learner_seat,
                        tags: job.tags,
                        seed: job.seed,
                        result,
                    });
                    if res_tx.send(out).is_err() {
                        break;
                    }
                }
            });
        }
        drop(job_rx);
        drop(res_tx);

        let mut done = Vec::with_capacity(n);
        let mut failure = None;
        while done.len() < n {
            match res_rx.recv_timeout(watchdog) {
                Ok(Ok(d)) => done.push(d),
                Ok(Err(e)) => {
                    failure = Some(e);
                    break;
                }
                Err(RecvTimeoutError::Timeout) => {
                    failure = Some(Error::Watchdog(watchdog));
                    break;
                }
                Err(RecvTimeoutError::Disconnected) => {
                    failure = Some(Error::Contract(format!(
                        "rollout workers exited after {} of {n} results",
                        done.len()
                    )));
                    break;
                }
            }
        }
        // unblocks any worker still sending so the scope can join
        drop(res_rx);
        match failure {
            Some(e) => Err(e),
            None => {
                done.sort_by_key(|d| d.match_id);
                Ok(done)
            }
        }
    })
}
