//! Desk-scale league training.
//!
//! The crate bundles everything needed to run a diversified league on a small
//! non-transitive zero-sum game:
//!
//! - [`game`]: the seeded cyclic stochastic game, scripted bots and critical-state rules.
//! - [`policy`]: tag-conditioned tabular softmax policies, snapshots and rollouts.
//! - [`losses`]: V-trace, UPGO, entropy, distillation, rule-guided and
//!   divergence-augmented KL terms, each with an exact gradient.
//! - [`imitation`]: importance-weighted demonstration sampling.
//! - [`league`]: the league manager (registry, lineage, win-rates, scheduling,
//!   period decisions).
//! - [`eval`]: payoff matrices, anchored Elo, zero-sum Nash solving, RPP and reports.
//! - [`runtime`]: experiment configuration, the actor/learner training loop,
//!   checkpoints and ablations.

pub mod error;
pub mod eval;
pub mod game;
pub mod imitation;
pub mod league;
pub mod losses;
pub mod policy;
pub mod runtime;
pub mod seed;

pub use error::{Error, Result};
pub use eval::{NashSolution, PayoffMatrix};
pub use game::{CriticalRule, GameSpec, GameState, RuleSet, ScriptedBot};
pub use league::{League, ModelRecord, Role, RoleConfig, WinRateTable};
pub use losses::{LossConfig, LossReport};
pub use policy::{Actor, PolicyParams, Snapshot, StrategyTagConfig, Trajectory};
pub use runtime::{ExperimentConfig, RunManifest};
