//! Schedule, batching and logging shared by the training loops.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::models::NetState;
use crate::optim::Adam;
use crate::params::ParamSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    /// Learning rate before and after the plateau drop.
    pub lr_phases: [f64; 2],
    pub batch_size: usize,
    pub steps: u64,
    /// Validation period in steps.
    pub eval_every: u64,
    /// Evaluations without a new validation minimum before the rate drops.
    pub plateau_patience: u32,
    /// Stop early once the validation quality metric reaches this value.
    pub stop_at: Option<f64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { lr_phases: [1e-4, 1e-5], batch_size: 4, steps: 2000, eval_every: 200, plateau_patience: 10, stop_at: None }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 || self.plateau_patience == 0 {
            return Err(Error::InvalidConfig("batch_size, eval_every and plateau_patience must be positive".into()));
        }
        if self.lr_phases.iter().any(|lr| !(lr.is_finite() && *lr > 0.0)) {
            return Err(Error::InvalidConfig(format!("learning rates must be positive, got {:?}", self.lr_phases)));
        }
        Ok(())
    }
}

/// Drops the learning rate once validation loss stops improving.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauTracker {
    pub best: f64,
    pub since_best: u32,
    pub patience: u32,
    /// Index into the schedule's learning-rate phases.
    pub phase: usize,
}

impl PlateauTracker {
    pub fn new(patience: u32) -> Self {
        Self { best: f64::INFINITY, since_best: 0, patience, phase: 0 }
    }

    /// Record a validation loss; returns true when this evaluation triggers the drop.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.since_best = 0;
            return false;
        }
        self.since_best += 1;
        if self.phase == 0 && self.since_best >= self.patience {
            self.phase = 1;
            self.since_best = 0;
            return true;
        }
        false
    }

    pub fn lr(&self, schedule: &Schedule) -> f64 {
        schedule.lr_phases[self.phase.min(1)]
    }

    pub fn store(&self, prefix: &str, scalars: &mut BTreeMap<String, f64>) {
        scalars.insert(format!("{prefix}.plateau_best"), self.best);
        scalars.insert(format!("{prefix}.plateau_since_best"), self.since_best as f64);
        scalars.insert(format!("{prefix}.plateau_phase"), self.phase as f64);
    }

    pub fn restore(prefix: &str, scalars: &BTreeMap<String, f64>, patience: u32) -> Self {
        let get = |k: &str| scalars.get(&format!("{prefix}.{k}")).copied();
        Self {
            best: get("plateau_best").unwrap_or(f64::INFINITY),
            since_best: get("plateau_since_best").unwrap_or(0.0) as u32,
            patience,
            phase: get("plateau_phase").unwrap_or(0.0) as usize,
        }
    }
}

/// Batch indices for a given step: consecutive slices of per-epoch shuffles.
#[derive(Clone, Debug)]
pub struct BatchOrder {
    len: usize,
    batch: usize,
    seed: u64,
}

impl BatchOrder {
    pub fn new(len: usize, batch: usize, seed: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { len, batch, seed })
    }

    fn epoch(&self, e: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(self.seed, e, 0xE90C)));
        idx
    }

    /// Indices of the batch used at `step`; a pure function of `(seed, step)`.
    pub fn batch(&self, step: u64) -> Vec<usize> {
        let start = step as u128 * self.batch as u128;
        let mut out = Vec::with_capacity(self.batch);
        let mut epoch_id = (start / self.len as u128) as u64;
        let mut pos = (start % self.len as u128) as usize;
        let mut order = self.epoch(epoch_id);
        while out.len() < self.batch {
            if pos == self.len {
                epoch_id += 1;
                order = self.epoch(epoch_id);
                pos = 0;
            }
            out.push(order[pos]);
            pos += 1;
        }
        out
    }
}

/// SplitMix64-style mixing of three words into one seed.
pub fn mix(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ c.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hex SHA-256 of any serializable configuration.
pub fn fingerprint<C: Serialize>(cfg: &C) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(cfg).expect("config serializes")))
}

/// One line of a training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step { stage: String, step: u64, lr: f64, generator: LossBreakdown, discriminator: BTreeMap<String, f64> },
    Eval { stage: String, step: u64, lr: f64, val_loss: f64, metrics: BTreeMap<String, f64> },
    LrDrop { stage: String, step: u64, lr: f64 },
}

pub fn logs_to_jsonl(logs: &[LogRecord]) -> String {
    logs.iter().map(|r| serde_json::to_string(r).expect("log serializes") + "\n").collect()
}

/// Apply an Adam update to a network, creating optimizer state on first use.
pub(crate) fn adam_step(net: &mut NetState, grads: &ParamSet<f32>, lr: f64, cfg: crate::optim::AdamConfig) -> Result<()> {
    let adam = net.adam.get_or_insert_with(|| Adam::new(&net.params, cfg));
    adam.update(&mut net.params, grads, lr)
}

pub(crate) fn require_finite(step: u64, what: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite { step, detail: format!("{what} = {v}") });
    }
    Ok(())
}
