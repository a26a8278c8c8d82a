//! Experiment configuration, pre-training, the training loop, checkpoints
//! and template ablations.

mod ablation;
mod config;
mod manifest;
mod pretrain;
mod trainer;
mod workers;

pub use ablation::{ablation, expert_agreement, exploiter_diversity, AblationReport, AblationRow, EvalBudget};
pub use config::{
    specific_model, template_lineup, AgentSpec, DapoActivation, ExperimentConfig, GameBlock, InitialModel, LeagueBlock,
    LossBlock, LossOverride, PretrainBlock, RuntimeBlock, BASE_MODEL, DEFAULT_DAPO_FRACTION, DEFAULT_TEMPLATE, TEMPLATES,
};
pub use manifest::{list_files, RunManifest, MANIFEST_VERSION};
pub use pretrain::{
    broadcast_tag_zero, counter_agreement, elite_demos, imitation_step, move_label, pretrain_all, pretrain_baseline,
    pretrain_specific, sparring_bot, DemoPayload, PretrainSummary,
};
pub use trainer::{
    module_seeds, resume, train, AgentCheckpoint, Checkpoint, RoundSummary, SavedRun, Trainer, TrainingEvent, CHECKPOINT_VERSION,
    CONFIG_FILE, INITIAL_DIR, MANIFEST_FILE, MATCH_LOG, STATE_FILE, TRAINING_LOG,
};
pub use workers::{run_matches, MatchDone, MatchJob};

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Writes `bytes` to a sibling temp file, syncs it and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
