//! Importance-weighted sampling of demonstration trajectories.
//!
//! Every demonstration step gets a point weight from its label: configured
//! labels are downsampled by a fixed rate, labels that occur less than once
//! per demonstration on average are upsampled by `N / count` (capped), and
//! everything else keeps weight 1. Whole trajectories are then drawn with
//! probability proportional to their summed weight.
//!
//! Drawing trajectory `j` with probability `W_j / W` and then using the raw
//! point weights favors heavy trajectories twice. The default
//! [`Reweighting::Unbiased`] scheme hands back `w / W_j * (W / N)` instead, so
//! the expected per-draw weighted loss is exactly the corpus mean
//! `(1/N) sum w * loss`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crossbeam_channel::{bounded, Receiver};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoStep<P> {
    pub label: String,
    pub payload: P,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demonstration<P> {
    pub steps: Vec<DemoStep<P>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoCorpus<P> {
    demonstrations: Vec<Demonstration<P>>,
    label_counts: BTreeMap<String, usize>,
}

fn count_labels<P>(demos: &[Demonstration<P>]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in demos.iter().flat_map(|d| &d.steps) {
        *counts.entry(s.label.clone()).or_insert(0) += 1;
    }
    counts
}

impl<P> DemoCorpus<P> {
    pub fn new(demonstrations: Vec<Demonstration<P>>) -> Result<Self> {
        if demonstrations.is_empty() {
            return Err(Error::Domain("demonstration corpus is empty".into()));
        }
        let label_counts = count_labels(&demonstrations);
        Ok(DemoCorpus {
            demonstrations,
            label_counts,
        })
    }

    /// Builds a corpus with externally supplied counts, rejecting counts that
    /// disagree with the demonstrations.
    pub fn with_counts(demonstrations: Vec<Demonstration<P>>, label_counts: BTreeMap<String, usize>) -> Result<Self> {
        let corpus = DemoCorpus::new(demonstrations)?;
        if corpus.label_counts != label_counts {
            return Err(Error::DataIntegrity("label counts do not match the demonstrations".into()));
        }
        Ok(corpus)
    }

    pub fn demonstrations(&self) -> &[Demonstration<P>] {
        &self.demonstrations
    }

    pub fn label_counts(&self) -> &BTreeMap<String, usize> {
        &self.label_counts
    }

    pub fn demo_count(&self) -> usize {
        self.demonstrations.len()
    }

    pub fn step_count(&self) -> usize {
        self.demonstrations.iter().map(|d| d.steps.len()).sum()
    }
}

impl<P: DeserializeOwned> DemoCorpus<P> {
    /// Reads one demonstration per line.
    pub fn read_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut demos = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                demos.push(serde_json::from_str(&line)?);
            }
        }
        DemoCorpus::new(demos)
    }
}

impl<P: Serialize> DemoCorpus<P> {
    pub fn write_jsonl(&self, mut writer: impl Write) -> Result<()> {
        for d in &self.demonstrations {
            serde_json::to_writer(&mut writer, d)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightSpec {
    pub downsample: BTreeMap<String, f64>,
    pub rare_upsample_cap: f64,
    /// Average occurrences per demonstration below which a label is rare.
    pub rare_threshold: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec {
            downsample: [("NOOP".to_string(), 0.2), ("SMART".to_string(), 0.25)].into_iter().collect(),
            rare_upsample_cap: 10.0,
            rare_threshold: 1.0,
        }
    }
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        if self.downsample.values().any(|&r| !(r > 0.0)) {
            return Err(Error::Config("downsample rates must be positive".into()));
        }
        if !(self.rare_upsample_cap >= 1.0) {
            return Err(Error::Config("upsample cap must be >= 1".into()));
        }
        Ok(())
    }

    /// Parses `LABEL=rate,LABEL=rate`.
    pub fn parse_downsample(s: &str) -> Result<BTreeMap<String, f64>> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|pair| {
                let (label, rate) = pair
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("expected LABEL=rate, got {pair:?}")))?;
                let rate: f64 = rate
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad rate in {pair:?}")))?;
                Ok((label.trim().to_string(), rate))
            })
            .collect()
    }

    /// Weight of a label occurring `count` times across `demo_count` demonstrations.
    pub fn weight_for(&self, label: &str, count: usize, demo_count: usize) -> f64 {
        if let Some(&rate) = self.downsample.get(label) {
            return rate;
        }
        let n = demo_count as f64;
        let c = count as f64;
        if c / n < self.rare_threshold {
            (n / c).min(self.rare_upsample_cap)
        } else {
            1.0
        }
    }
}

/// Point weights per demonstration step.
#[derive(Clone, Debug, PartialEq)]
pub struct PointWeights {
    pub per_demo: Vec<Vec<f64>>,
}

impl PointWeights {
    pub fn trajectory_totals(&self) -> Vec<f64> {
        self.per_demo.iter().map(|w| w.iter().sum()).collect()
    }
}

pub fn compute_pointwise_weights<P>(corpus: &DemoCorpus<P>, spec: &WeightSpec) -> Result<PointWeights> {
    let n = corpus.demo_count();
    let per_demo = corpus
        .demonstrations
        .iter()
        .map(|d| {
            d.steps
                .iter()
                .map(|s| match corpus.label_counts.get(&s.label) {
                    Some(&c) if c > 0 => Ok(spec.weight_for(&s.label, c, n)),
                    _ => Err(Error::DataIntegrity(format!("label {:?} has no recorded count", s.label))),
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(PointWeights { per_demo })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reweighting {
    /// `w / W_j * (W / N)`: the sampled loss is unbiased for the corpus mean.
    #[default]
    Unbiased,
    /// Reassign the raw point weights.
    Raw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledTrajectory {
    pub index: usize,
    pub training_weights: Vec<f64>,
}

/// Draws whole demonstrations proportionally to their summed point weight.
#[derive(Clone, Debug)]
pub struct TrajectorySampler {
    weights: PointWeights,
    totals: Vec<f64>,
    cumulative: Vec<f64>,
    grand_total: f64,
    reweighting: Reweighting,
}

impl TrajectorySampler {
    pub fn new(weights: PointWeights, reweighting: Reweighting) -> Result<Self> {
        let totals = weights.trajectory_totals();
        if totals.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("trajectory weights must be finite and >= 0".into()));
        }
        let mut acc = 0.0;
        let cumulative: Vec<f64> = totals
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::Domain("all trajectory weights are zero".into()));
        }
        Ok(TrajectorySampler {
            weights,
            totals,
            cumulative,
            grand_total: acc,
            reweighting,
        })
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.totals.iter().map(|w| w / self.grand_total).collect()
    }

    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }

    /// Training weights handed out when trajectory `index` is drawn.
    pub fn training_weights(&self, index: usize) -> Vec<f64> {
        let w = &self.weights.per_demo[index];
        match self.reweighting {
            Reweighting::Raw => w.clone(),
            Reweighting::Unbiased => {
                let scale = self.grand_total / self.totals.len() as f64 / self.totals[index];
                w.iter().map(|x| x * scale).collect()
            }
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> SampledTrajectory {
        let u = rng.random::<f64>() * self.grand_total;
        // The first cumulative total above `u` always belongs to a
        // positive-weight trajectory; `u` can only round up to the grand total.
        let index = match self.cumulative.partition_point(|&c| c <= u) {
            i if i < self.totals.len() => i,
            _ => self.totals.iter().rposition(|&w| w > 0.0).expect("positive total"),
        };
        SampledTrajectory {
            index,
            training_weights: self.training_weights(index),
        }
    }
}

pub fn sample_trajectory<P>(
    corpus: &DemoCorpus<P>,
    weights: &PointWeights,
    rng: &mut ChaCha8Rng,
) -> Result<SampledTrajectory> {
    debug_assert_eq!(corpus.demo_count(), weights.per_demo.len());
    Ok(TrajectorySampler::new(weights.clone(), Reweighting::Unbiased)?.sample(rng))
}

/// Endless source of weighted batches drawn from one sampler.
pub struct StreamingFeeder {
    sampler: Arc<TrajectorySampler>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl StreamingFeeder {
    pub fn new<P>(
        corpus: &DemoCorpus<P>,
        spec: &WeightSpec,
        reweighting: Reweighting,
        batch_size: usize,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Domain("batch size must be at least 1".into()));
        }
        let weights = compute_pointwise_weights(corpus, spec)?;
        Ok(StreamingFeeder {
            sampler: Arc::new(TrajectorySampler::new(weights, reweighting)?),
            batch_size,
            rng,
        })
    }

    pub fn sampler(&self) -> &TrajectorySampler {
        &self.sampler
    }
}

impl Iterator for StreamingFeeder {
    type Item = Vec<SampledTrajectory>;

    fn next(&mut self) -> Option<Self::Item> {
        Some((0..self.batch_size).map(|_| self.sampler.sample(&mut self.rng)).collect())
    }
}

/// A feeder running on its own thread. At most `capacity` batches are
/// buffered; the producer blocks until the consumer catches up and exits
/// once the handle is dropped.
pub struct ReplayActor {
    receiver: Receiver<Vec<SampledTrajectory>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl ReplayActor {
    pub fn spawn(mut feeder: StreamingFeeder, capacity: usize) -> Self {
        let (tx, rx) = bounded(capacity.max(1));
        let handle = std::thread::spawn(move || {
            for batch in feeder.by_ref() {
                if tx.send(batch).is_err() {
                    break;
                }
            }
        });
        ReplayActor {
            receiver: rx,
            handle: Some(handle),
        }
    }

    pub fn next_batch(&self) -> Option<Vec<SampledTrajectory>> {
        self.receiver.recv().ok()
    }

    pub fn buffered(&self) -> usize {
        self.receiver.len()
    }
}

impl Drop for ReplayActor {
    fn drop(&mut self) {
        // Disconnect first so a blocked producer wakes up.
        let (_, dead) = bounded(0);
        self.receiver = dead;
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
