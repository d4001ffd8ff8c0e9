//! Appearance recovery: one generator `G2` evaluated on two paths per step.
//!
//! Path 1 fills the invisible part of a partially visible vehicle from
//! `(I, M̂, M)`. Path 2 paints the whole vehicle into the bare background
//! from `(Î, 0, M)`. Both regress to the unoccluded target and share every
//! parameter. Only path 1 is used at inference.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::image::{images_to_tensor, masks_to_tensor, ImageTensor, MaskTensor};
use crate::losses::{self, ExtractorConfig, FeatureExtractor, GenAdvForm, LossBreakdown};
use crate::metrics::pixel_errors;
use crate::models::{ArchConfig, Checkpoint, NetArch, NetRole, NetState};
use crate::optim::AdamConfig;
use crate::params::{Bound, ParamSet};
use crate::seg_trainer::{g1_forward, SegBatch, SegTrainState, SegTrainer};
use crate::silhouette_pool::SilhouettePool;
use crate::synth_data::TrainingSample;
use crate::tensor::{Real, Tensor};
use crate::train::{self, adam_step, mix, require_finite, BatchOrder, LogRecord, PlateauTracker, Schedule};

pub const STAGE: &str = "app";
pub const STEP_COUNTER: &str = "app_step";
pub const JOINT_STAGE: &str = "joint";
pub const JOINT_COUNTER: &str = "joint_step";

thread_local! {
    static PATH2_BUILDS: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

/// Number of path-2 inputs assembled on the current thread so far.
pub fn path2_inputs_built() -> u64 {
    PATH2_BUILDS.with(|c| c.get())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppLossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AppLossWeights {
    fn default() -> Self {
        Self { lambda1: 10.0, lambda2: 10.0, beta1: 1.0, beta2: 1.0 }
    }
}

impl AppLossWeights {
    pub fn validate(&self) -> Result<()> {
        if ![self.lambda1, self.lambda2, self.beta1, self.beta2].iter().all(|w| *w >= 0.0) {
            return Err(Error::InvalidConfig(format!("appearance loss weights must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    #[default]
    TwoPath,
    /// Path 1 only: no path-2 reconstruction, adversarial term or discriminator fake.
    OnePath,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    /// Completed masks from a frozen stage-1 `G1`.
    #[default]
    Predicted,
    /// Ground-truth full masks; `G1` is never run.
    GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppTrainConfig {
    pub arch: ArchConfig,
    pub weights: AppLossWeights,
    pub adv_form: GenAdvForm,
    pub path_mode: PathMode,
    pub mask_source: MaskSource,
    /// Put the target mask in the middle slot of path 2 and the zero map last.
    pub swap_path2_slots: bool,
    pub adversarial: bool,
    pub schedule: Schedule,
    pub adam: AdamConfig,
    pub extractor: ExtractorConfig,
    pub max_nonfinite_steps: u32,
    pub seed: u64,
}

impl Default for AppTrainConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            weights: AppLossWeights::default(),
            adv_form: GenAdvForm::NonSaturating,
            path_mode: PathMode::TwoPath,
            mask_source: MaskSource::Predicted,
            swap_path2_slots: false,
            adversarial: true,
            schedule: Schedule::default(),
            adam: AdamConfig::default(),
            extractor: ExtractorConfig::default(),
            max_nonfinite_steps: 10,
            seed: 0,
        }
    }
}

/// Inputs of both paths plus the shared target.
#[derive(Clone, Debug)]
pub struct TwoPathBatch {
    /// `[N, 3, H, W]` occluded images `I`.
    pub image: Tensor<f32>,
    /// `[N, 1, H, W]` visible masks `M̂`.
    pub visible: Tensor<f32>,
    /// `[N, 3, H, W]` background plates `Î`.
    pub background: Tensor<f32>,
    /// `[N, 1, H, W]` completed masks `M`.
    pub mask: Tensor<f32>,
    /// `[N, 3, H, W]` unoccluded targets.
    pub target: Tensor<f32>,
    pub swap_path2_slots: bool,
}

impl TwoPathBatch {
    pub fn new(samples: &[&TrainingSample], masks: &[&MaskTensor], swap_path2_slots: bool) -> Result<Self> {
        if samples.len() != masks.len() {
            return Err(Error::shape(format!("{} samples but {} masks", samples.len(), masks.len())));
        }
        Ok(Self {
            image: images_to_tensor(&samples.iter().map(|s| &s.image_occluded).collect::<Vec<_>>())?,
            visible: masks_to_tensor(&samples.iter().map(|s| &s.visible_mask).collect::<Vec<_>>())?,
            background: images_to_tensor(&samples.iter().map(|s| &s.background_plate).collect::<Vec<_>>())?,
            mask: masks_to_tensor(masks)?,
            target: images_to_tensor(&samples.iter().map(|s| &s.target_unoccluded).collect::<Vec<_>>())?,
            swap_path2_slots,
        })
    }

    pub fn len(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Path inputs on the tape, with `mask` supplied as a variable.
    pub fn path_inputs<T: Real>(&self, g: &mut Graph<T>, mask: Var) -> Result<(Var, Var)> {
        let image = g.constant(self.image.cast());
        let visible = g.constant(self.visible.cast());
        let background = g.constant(self.background.cast());
        let zero = g.constant(Tensor::zeros(self.visible.shape()));
        let p1 = g.concat(&[image, visible, mask])?;
        PATH2_BUILDS.with(|c| c.set(c.get() + 1));
        let p2 = if self.swap_path2_slots { g.concat(&[background, mask, zero])? } else { g.concat(&[background, zero, mask])? };
        Ok((p1, p2))
    }

    /// Concrete `[N, 5, H, W]` inputs of both paths.
    pub fn inputs(&self) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let mut g = Graph::<f32>::new();
        let m = g.constant(self.mask.clone());
        let (p1, p2) = self.path_inputs(&mut g, m)?;
        Ok((g.value(p1).clone(), g.value(p2).clone()))
    }
}

/// Both path outputs from one bound parameter set.
pub fn two_path_graph(g: &mut Graph<f32>, g2: &NetState, bound: &Bound, p1: Var, p2: Var) -> Result<(Var, Var)> {
    let cfg = g2.generator_config()?;
    let out1 = cfg.forward(g, bound, p1)?;
    let out2 = cfg.forward(g, bound, p2)?;
    Ok((out1, out2))
}

/// Evaluate `G2` on both paths of a batch.
pub fn two_path_forward(g2: &NetState, batch: &TwoPathBatch) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let mut g = Graph::new();
    let bound = g2.params.bind(&mut g, false);
    let m = g.constant(batch.mask.clone());
    let (p1, p2) = batch.path_inputs(&mut g, m)?;
    let (o1, o2) = two_path_graph(&mut g, g2, &bound, p1, p2)?;
    Ok((g.value(o1).clone(), g.value(o2).clone()))
}

/// Assemble the appearance objective. `None` outputs or logits mask their terms.
#[allow(clippy::too_many_arguments)]
pub fn assemble_app_loss<T: Real>(
    g: &mut Graph<T>,
    extractor: &FeatureExtractor<T>,
    weights: &AppLossWeights,
    form: GenAdvForm,
    target: Var,
    out1: Option<Var>,
    out2: Option<Var>,
    logit1: Option<Var>,
    logit2: Option<Var>,
) -> Result<(Option<Var>, LossBreakdown)> {
    let adv1 = logit1.map(|l| losses::generator_adversarial(g, l, form));
    let adv2 = logit2.map(|l| losses::generator_adversarial(g, l, form));
    let recon = |g: &mut Graph<T>, out: Option<Var>, w: f64, perceptual: bool| -> Result<Option<Var>> {
        let Some(out) = out else { return Ok(None) };
        if w <= 0.0 {
            return Ok(None);
        }
        if g.value(out).shape() != g.value(target).shape() {
            return Err(Error::shape(format!("output {:?} vs target {:?}", g.value(out).shape(), g.value(target).shape())));
        }
        let l = if perceptual { extractor.loss(g, out, target)? } else { losses::l1_loss(g, out, target)? };
        Ok(Some(g.scale(l, w)))
    };
    let l1_1 = recon(g, out1, weights.lambda1, false)?;
    let perc_1 = recon(g, out1, weights.beta1, true)?;
    let l1_2 = recon(g, out2, weights.lambda2, false)?;
    let perc_2 = recon(g, out2, weights.beta2, true)?;
    let terms = [("adv1", adv1), ("adv2", adv2), ("l1_1", l1_1), ("perc_1", perc_1), ("l1_2", l1_2), ("perc_2", perc_2)];
    Ok((losses::sum_terms(g, &terms)?, LossBreakdown::from_terms(g, &terms)))
}

/// Appearance objective on fixed outputs and discriminator logit maps.
#[allow(clippy::too_many_arguments)]
pub fn app_loss(
    extractor: &FeatureExtractor<f32>,
    weights: &AppLossWeights,
    form: GenAdvForm,
    target: &Tensor<f32>,
    outputs: (&Tensor<f32>, Option<&Tensor<f32>>),
    d2_logit_maps: (Option<&Tensor<f32>>, Option<&Tensor<f32>>),
) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let t = g.constant(target.clone());
    let o1 = g.constant(outputs.0.clone());
    let o2 = outputs.1.map(|o| g.constant(o.clone()));
    let l1 = d2_logit_maps.0.map(|l| g.constant(l.clone()));
    let l2 = d2_logit_maps.1.map(|l| g.constant(l.clone()));
    Ok(assemble_app_loss(&mut g, extractor, weights, form, t, Some(o1), o2, l1, l2)?.1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppTrainState {
    pub g2: NetState,
    pub d2: NetState,
    pub step: u64,
    pub lr: f64,
    pub plateau: PlateauTracker,
}

impl AppTrainState {
    pub fn new(cfg: &AppTrainConfig) -> Result<Self> {
        Ok(Self {
            g2: NetState::fresh(NetArch::Generator(cfg.arch.g2()), mix(cfg.seed, 4, 0), cfg.adam)?,
            d2: NetState::fresh(NetArch::PatchDisc(cfg.arch.d2()), mix(cfg.seed, 5, 0), cfg.adam)?,
            step: 0,
            lr: cfg.schedule.lr_phases[0],
            plateau: PlateauTracker::new(cfg.schedule.plateau_patience),
        })
    }

    pub fn store(&self, c: &mut Checkpoint) {
        c.nets.insert(NetRole::G2, self.g2.clone());
        c.nets.insert(NetRole::D2, self.d2.clone());
        c.counters.insert(STEP_COUNTER.into(), self.step);
        c.scalars.insert(format!("{STAGE}.lr"), self.lr);
        self.plateau.store(STAGE, &mut c.scalars);
    }

    pub fn from_checkpoint(c: &Checkpoint, cfg: &AppTrainConfig) -> Result<Self> {
        Ok(Self {
            g2: c.net(NetRole::G2)?.clone(),
            d2: c.net(NetRole::D2)?.clone(),
            step: c.counter(STEP_COUNTER),
            lr: c.scalars.get(&format!("{STAGE}.lr")).copied().unwrap_or(cfg.schedule.lr_phases[0]),
            plateau: PlateauTracker::restore(STAGE, &c.scalars, cfg.schedule.plateau_patience),
        })
    }
}

/// Which path terms enter a generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathSelect {
    Both,
    Path1,
    Path2,
}

/// `threshold(G1(I, M̂), 0.5) ∪ M̂` for every sample of a batch.
pub fn predicted_masks(g1: &NetState, batch: &SegBatch) -> Result<Vec<MaskTensor>> {
    let mut g = Graph::new();
    let (fwd, _) = g1_forward(&mut g, g1, false, batch)?;
    union_with_visible(g.value(fwd.mask), batch)
}

fn union_with_visible(raw: &Tensor<f32>, batch: &SegBatch) -> Result<Vec<MaskTensor>> {
    let (n, _, h, w) = raw.dims4();
    (0..n)
        .map(|i| {
            let m = MaskTensor::from_planar(h, w, &raw.data()[i * h * w..(i + 1) * h * w])?.threshold(0.5);
            let vis = MaskTensor::from_planar(h, w, &batch.visible.data()[i * h * w..(i + 1) * h * w])?;
            m.union(&vis)
        })
        .collect()
}

pub struct AppTrainer {
    pub config: AppTrainConfig,
    extractor: FeatureExtractor<f32>,
}

#[derive(Clone, Debug)]
pub struct AppOutcome {
    pub state: AppTrainState,
    /// Stage-2 networks merged with the stage-1 checkpoint when one was given.
    pub checkpoint: Checkpoint,
    pub logs: Vec<LogRecord>,
    /// Number of `G1` batch evaluations performed to obtain masks.
    pub g1_forward_calls: usize,
}

impl AppTrainer {
    pub fn new(config: AppTrainConfig) -> Result<Self> {
        config.weights.validate()?;
        config.schedule.validate()?;
        config.arch.validate()?;
        let extractor = FeatureExtractor::new(3, &config.extractor)?;
        Ok(Self { config, extractor })
    }

    pub fn extractor(&self) -> &FeatureExtractor<f32> {
        &self.extractor
    }

    fn two_path(&self) -> bool {
        self.config.path_mode == PathMode::TwoPath
    }

    /// Generator terms for the selected paths, with `D2` bound as constants.
    fn generator_objective(&self, g: &mut Graph<f32>, d2: &NetState, target: Var, out1: Option<Var>, out2: Option<Var>) -> Result<(Option<Var>, LossBreakdown)> {
        self.objective(g, &self.extractor, d2, &d2.params, target, out1, out2)
    }

    #[allow(clippy::too_many_arguments)]
    fn objective<T: Real>(
        &self,
        g: &mut Graph<T>,
        extractor: &FeatureExtractor<T>,
        d2: &NetState,
        d2_params: &ParamSet<T>,
        target: Var,
        out1: Option<Var>,
        out2: Option<Var>,
    ) -> Result<(Option<Var>, LossBreakdown)> {
        let (logit1, logit2) = if self.config.adversarial {
            let b = d2_params.bind(g, false);
            let cfg = d2.patch_disc_config()?;
            let l1 = out1.map(|o| cfg.forward(g, &b, o)).transpose()?;
            let l2 = out2.map(|o| cfg.forward(g, &b, o)).transpose()?;
            (l1, l2)
        } else {
            (None, None)
        };
        assemble_app_loss(g, extractor, &self.config.weights, self.config.adv_form, target, out1, out2, logit1, logit2)
    }

    /// `D2` ascent step: targets real, path outputs fake.
    pub(crate) fn discriminator_step(&self, state: &mut AppTrainState, target: &Tensor<f32>, out1: &Tensor<f32>, out2: Option<&Tensor<f32>>, lr: f64) -> Result<BTreeMap<String, f64>> {
        let mut g = Graph::<f32>::new();
        let b = state.d2.params.bind(&mut g, true);
        let cfg = state.d2.patch_disc_config()?.clone();
        let real = g.constant(target.clone());
        let f1 = g.constant(out1.clone());
        let lr_real = cfg.forward(&mut g, &b, real)?;
        let lf1 = cfg.forward(&mut g, &b, f1)?;
        let loss = match out2 {
            Some(o2) => {
                let f2 = g.constant(o2.clone());
                let lf2 = cfg.forward(&mut g, &b, f2)?;
                losses::neg_one_real_two_fake(&mut g, lr_real, lf1, lf2)?
            }
            None => losses::neg_standard(&mut g, lr_real, lf1)?,
        };
        let value = -g.value(loss).item() as f64;
        require_finite(state.step, "image discriminator loss", value)?;
        g.backward(loss)?;
        let grads = state.d2.params.grads_from(&g, &b);
        adam_step(&mut state.d2, &grads, lr, self.config.adam)?;
        Ok(BTreeMap::from([("j_d2".to_string(), value)]))
    }

    /// One alternating update of `D2` then `G2`.
    pub fn step(&self, state: &mut AppTrainState, batch: &TwoPathBatch) -> Result<LogRecord> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut next = state.clone();
        let mut g = Graph::<f32>::new();
        let bound = next.g2.params.bind(&mut g, true);
        let m = g.constant(batch.mask.clone());
        let (p1, p2) = batch.path_inputs(&mut g, m)?;
        let cfg = next.g2.generator_config()?.clone();
        let out1 = cfg.forward(&mut g, &bound, p1)?;
        let out2 = if self.two_path() { Some(cfg.forward(&mut g, &bound, p2)?) } else { None };
        let lr = next.lr;
        let disc = if self.config.adversarial {
            let o1 = g.value(out1).clone();
            let o2 = out2.map(|o| g.value(o).clone());
            self.discriminator_step(&mut next, &batch.target, &o1, o2.as_ref(), lr)?
        } else {
            BTreeMap::new()
        };
        let target = g.constant(batch.target.clone());
        let (loss, breakdown) = self.generator_objective(&mut g, &next.d2, target, Some(out1), out2)?;
        require_finite(state.step, "appearance loss", breakdown.total)?;
        if let Some(loss) = loss {
            g.backward(loss)?;
            let grads = next.g2.params.grads_from(&g, &bound);
            if !grads.is_finite() {
                return Err(Error::NonFinite { step: state.step, detail: "appearance gradient".into() });
            }
            adam_step(&mut next.g2, &grads, lr, self.config.adam)?;
        }
        next.step += 1;
        let record = LogRecord::Step { stage: STAGE.into(), step: next.step, lr, generator: breakdown, discriminator: disc };
        *state = next;
        Ok(record)
    }

    /// Generator objective on a batch, without any update.
    pub fn g2_loss(&self, state: &AppTrainState, batch: &TwoPathBatch) -> Result<LossBreakdown> {
        self.g2_loss_with(&self.extractor, state, &state.g2.params, &state.d2.params, batch)
    }

    /// Generator objective with every weight and input cast to `T`.
    pub fn g2_loss_as<T: Real>(&self, state: &AppTrainState, batch: &TwoPathBatch) -> Result<LossBreakdown> {
        let ext = FeatureExtractor::<T>::new(3, &self.config.extractor)?;
        self.g2_loss_with(&ext, state, &state.g2.params.cast(), &state.d2.params.cast(), batch)
    }

    fn g2_loss_with<T: Real>(&self, ext: &FeatureExtractor<T>, state: &AppTrainState, g2: &ParamSet<T>, d2: &ParamSet<T>, batch: &TwoPathBatch) -> Result<LossBreakdown> {
        let mut g = Graph::<T>::new();
        let bound = g2.bind(&mut g, false);
        let m = g.constant(batch.mask.cast());
        let (p1, p2) = batch.path_inputs(&mut g, m)?;
        let cfg = state.g2.generator_config()?.clone();
        let out1 = cfg.forward(&mut g, &bound, p1)?;
        let out2 = self.two_path().then(|| cfg.forward(&mut g, &bound, p2)).transpose()?;
        let target = g.constant(batch.target.cast());
        Ok(self.objective(&mut g, ext, &state.d2, d2, target, Some(out1), out2)?.1)
    }

    /// Gradient of the generator objective restricted to some paths, without updating.
    pub fn generator_gradients(&self, state: &AppTrainState, batch: &TwoPathBatch, select: PathSelect) -> Result<ParamSet<f32>> {
        let mut g = Graph::<f32>::new();
        let bound = state.g2.params.bind(&mut g, true);
        let m = g.constant(batch.mask.clone());
        let (p1, p2) = batch.path_inputs(&mut g, m)?;
        let cfg = state.g2.generator_config()?.clone();
        let out1 = matches!(select, PathSelect::Both | PathSelect::Path1).then(|| cfg.forward(&mut g, &bound, p1)).transpose()?;
        let out2 = matches!(select, PathSelect::Both | PathSelect::Path2).then(|| cfg.forward(&mut g, &bound, p2)).transpose()?;
        let target = g.constant(batch.target.clone());
        let (loss, _) = self.generator_objective(&mut g, &state.d2, target, out1, out2)?;
        match loss {
            Some(l) => {
                g.backward(l)?;
                Ok(state.g2.params.grads_from(&g, &bound))
            }
            None => Ok(state.g2.params.zeros_like()),
        }
    }

    /// Mean loss plus full-frame and invisible-region L1 of path 1 over `samples`.
    pub fn validate(&self, state: &AppTrainState, samples: &[TrainingSample], masks: &[MaskTensor]) -> Result<(f64, BTreeMap<String, f64>)> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let bs = self.config.schedule.batch_size;
        let (mut loss, mut inv, mut full, mut inv_n) = (0.0, 0.0, 0.0, 0usize);
        for (chunk, mchunk) in samples.chunks(bs).zip(masks.chunks(bs)) {
            let batch = TwoPathBatch::new(&chunk.iter().collect::<Vec<_>>(), &mchunk.iter().collect::<Vec<_>>(), self.config.swap_path2_slots)?;
            let mut g = Graph::new();
            let bound = state.g2.params.bind(&mut g, false);
            let m = g.constant(batch.mask.clone());
            let (p1, p2) = batch.path_inputs(&mut g, m)?;
            let cfg = state.g2.generator_config()?.clone();
            let out1 = cfg.forward(&mut g, &bound, p1)?;
            let out2 = if self.two_path() { Some(cfg.forward(&mut g, &bound, p2)?) } else { None };
            let target = g.constant(batch.target.clone());
            let (_, b) = self.generator_objective(&mut g, &state.d2, target, Some(out1), out2)?;
            loss += b.total * chunk.len() as f64;
            let o = g.value(out1);
            let (h, w) = chunk[0].size();
            for (i, s) in chunk.iter().enumerate() {
                let img = ImageTensor::from_planar(h, w, &o.data()[i * 3 * h * w..(i + 1) * 3 * h * w])?;
                full += pixel_errors(&img, &s.target_unoccluded, None)?.0;
                let region = s.invisible_region();
                if region.count() > 0 {
                    inv += pixel_errors(&img, &s.target_unoccluded, Some(&region))?.0;
                    inv_n += 1;
                }
            }
        }
        let n = samples.len() as f64;
        let metrics = BTreeMap::from([("full_l1".to_string(), full / n), ("invisible_l1".to_string(), if inv_n > 0 { inv / inv_n as f64 } else { 0.0 })]);
        Ok((loss / n, metrics))
    }

    /// Masks used as `M` for every sample, and the number of `G1` evaluations spent.
    pub fn masks_for(&self, samples: &[TrainingSample], seg: Option<&Checkpoint>) -> Result<(Vec<MaskTensor>, usize)> {
        match self.config.mask_source {
            MaskSource::GroundTruth => Ok((samples.iter().map(|s| s.full_mask.clone()).collect(), 0)),
            MaskSource::Predicted => {
                let ckpt = seg.ok_or_else(|| Error::InvalidInput("predicted-mask mode needs a stage-1 checkpoint".into()))?;
                let g1 = ckpt.net(NetRole::G1)?;
                let mut out = Vec::with_capacity(samples.len());
                let mut calls = 0;
                for chunk in samples.chunks(self.config.schedule.batch_size) {
                    let batch = SegBatch::new(&chunk.iter().collect::<Vec<_>>())?;
                    out.extend(predicted_masks(g1, &batch)?);
                    calls += 1;
                }
                Ok((out, calls))
            }
        }
    }

    /// Full stage-2 loop.
    pub fn train(&self, samples: &[TrainingSample], validation: Option<&[TrainingSample]>, seg: Option<&Checkpoint>, init: Option<AppTrainState>) -> Result<AppOutcome> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (masks, mut calls) = self.masks_for(samples, seg)?;
        let (val, val_masks) = match validation {
            Some(v) => {
                let (m, c) = self.masks_for(v, seg)?;
                calls += c;
                (v, m)
            }
            None => (samples, masks.clone()),
        };
        let mut state = match init {
            Some(s) => s,
            None => AppTrainState::new(&self.config)?,
        };
        let sched = &self.config.schedule;
        let order = BatchOrder::new(samples.len(), sched.batch_size, mix(self.config.seed, 0xA99, 0))?;
        let mut logs = Vec::new();
        let mut failures = 0;
        while state.step < sched.steps {
            let idx = order.batch(state.step);
            let refs: Vec<&TrainingSample> = idx.iter().map(|&i| &samples[i]).collect();
            let mrefs: Vec<&MaskTensor> = idx.iter().map(|&i| &masks[i]).collect();
            let batch = TwoPathBatch::new(&refs, &mrefs, self.config.swap_path2_slots)?;
            match self.step(&mut state, &batch) {
                Ok(rec) => {
                    failures = 0;
                    logs.push(rec);
                }
                Err(Error::NonFinite { step, detail }) => {
                    log::warn!("skipping non-finite step {step}: {detail}");
                    failures += 1;
                    if failures > self.config.max_nonfinite_steps {
                        return Err(Error::NonFinite { step, detail: format!("{detail} (persisted for {failures} steps)") });
                    }
                    state.step += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
            if state.step % sched.eval_every == 0 || state.step == sched.steps {
                let (val_loss, metrics) = self.validate(&state, val, &val_masks)?;
                let inv = metrics["invisible_l1"];
                log::info!("app step {} lr {:e} val loss {val_loss:.4} invisible l1 {inv:.4}", state.step, state.lr);
                logs.push(LogRecord::Eval { stage: STAGE.into(), step: state.step, lr: state.lr, val_loss, metrics });
                if state.plateau.observe(val_loss) {
                    state.lr = state.plateau.lr(sched);
                    logs.push(LogRecord::LrDrop { stage: STAGE.into(), step: state.step, lr: state.lr });
                }
                if sched.stop_at.is_some_and(|t| inv <= t) {
                    break;
                }
            }
        }
        let mut checkpoint = match seg {
            Some(c) => c.clone(),
            None => Checkpoint::new(""),
        };
        checkpoint.config_fingerprint = train::fingerprint(&(&self.config, &checkpoint.config_fingerprint));
        state.store(&mut checkpoint);
        Ok(AppOutcome { state, checkpoint, logs, g1_forward_calls: calls })
    }
}

/// Free-function form of [`AppTrainer::train`].
pub fn train_app(samples: &[TrainingSample], seg_checkpoint: Option<&Checkpoint>, config: &AppTrainConfig) -> Result<AppOutcome> {
    AppTrainer::new(config.clone())?.train(samples, None, seg_checkpoint, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointConfig {
    pub lr: f64,
    pub steps: u64,
    pub batch_size: usize,
    /// Route appearance gradients through the completed mask into `G1`.
    pub backflow: bool,
    pub seed: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self { lr: 1e-6, steps: 200, batch_size: 4, backflow: true, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    pub seg: SegTrainState,
    pub app: AppTrainState,
    pub step: u64,
}

impl JointState {
    pub fn from_checkpoint(c: &Checkpoint, seg: &SegTrainer, app: &AppTrainer) -> Result<Self> {
        Ok(Self { seg: SegTrainState::from_checkpoint(c, &seg.config)?, app: AppTrainState::from_checkpoint(c, &app.config)?, step: c.counter(JOINT_COUNTER) })
    }

    pub fn to_checkpoint(&self, fingerprint: &str) -> Checkpoint {
        let mut c = self.seg.to_checkpoint(fingerprint);
        self.app.store(&mut c);
        c.counters.insert(JOINT_COUNTER.into(), self.step);
        c
    }
}

/// End-to-end fine-tuning of all five networks.
pub struct JointTrainer<'a> {
    pub seg: &'a SegTrainer,
    pub app: &'a AppTrainer,
    pub config: JointConfig,
}

#[derive(Clone, Debug)]
pub struct JointOutcome {
    pub state: JointState,
    pub checkpoint: Checkpoint,
    pub logs: Vec<LogRecord>,
}

impl JointTrainer<'_> {
    /// Discriminator steps, then one descent step of `G1` and `G2` on the summed objectives.
    pub fn step(&self, state: &mut JointState, samples: &[&TrainingSample], pool: &SilhouettePool) -> Result<LogRecord> {
        let lr = self.config.lr;
        let seg_batch = SegBatch::new(samples)?;
        let mut next = state.clone();
        let mut g = Graph::<f32>::new();
        let (fwd, g1_bound) = g1_forward(&mut g, &next.seg.g1, true, &seg_batch)?;
        let soft = g.value(fwd.mask).clone();
        let mut disc = BTreeMap::new();
        if self.seg.config.adversarial {
            let sil_step = mix(next.seg.step, state.step, 0x7);
            disc.extend(self.seg.discriminator_step(&mut next.seg, &seg_batch, &soft, pool, lr, sil_step)?);
        }

        let masks = union_with_visible(&soft, &seg_batch)?;
        let batch = TwoPathBatch::new(samples, &masks.iter().collect::<Vec<_>>(), self.app.config.swap_path2_slots)?;
        let m = if self.config.backflow { g.straight_through(fwd.mask, batch.mask.clone())? } else { g.constant(batch.mask.clone()) };
        let (p1, p2) = batch.path_inputs(&mut g, m)?;
        let g2_bound = next.app.g2.params.bind(&mut g, true);
        let cfg = next.app.g2.generator_config()?.clone();
        let out1 = cfg.forward(&mut g, &g2_bound, p1)?;
        let out2 = if self.app.two_path() { Some(cfg.forward(&mut g, &g2_bound, p2)?) } else { None };
        if self.app.config.adversarial {
            let o1 = g.value(out1).clone();
            let o2 = out2.map(|o| g.value(o).clone());
            disc.extend(self.app.discriminator_step(&mut next.app, &batch.target, &o1, o2.as_ref(), lr)?);
        }

        let (seg_loss, seg_terms) = self.seg.generator_objective(&mut g, &next.seg, &fwd)?;
        let target = g.constant(batch.target.clone());
        let (app_loss, app_terms) = self.app.generator_objective(&mut g, &next.app.d2, target, Some(out1), out2)?;
        let mut breakdown = LossBreakdown::default();
        for (prefix, b) in [("seg.", &seg_terms), ("app.", &app_terms)] {
            for (k, v) in &b.terms {
                breakdown.terms.insert(format!("{prefix}{k}"), *v);
            }
        }
        breakdown.total = seg_terms.total + app_terms.total;
        require_finite(state.step, "joint loss", breakdown.total)?;
        let loss = match (seg_loss, app_loss) {
            (Some(a), Some(b)) => Some(g.add(a, b)?),
            (a, b) => a.or(b),
        };
        if let Some(loss) = loss {
            g.backward(loss)?;
            let g1_grads = next.seg.g1.params.grads_from(&g, &g1_bound);
            let g2_grads = next.app.g2.params.grads_from(&g, &g2_bound);
            if !g1_grads.is_finite() || !g2_grads.is_finite() {
                return Err(Error::NonFinite { step: state.step, detail: "joint gradient".into() });
            }
            adam_step(&mut next.seg.g1, &g1_grads, lr, self.seg.config.adam)?;
            adam_step(&mut next.app.g2, &g2_grads, lr, self.app.config.adam)?;
        }
        next.step += 1;
        let record = LogRecord::Step { stage: JOINT_STAGE.into(), step: next.step, lr, generator: breakdown, discriminator: disc };
        *state = next;
        Ok(record)
    }

    pub fn train(&self, samples: &[TrainingSample], checkpoint: &Checkpoint, pool: &SilhouettePool) -> Result<JointOutcome> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(self.config.lr > 0.0 && self.config.batch_size > 0) {
            return Err(Error::InvalidConfig("joint learning rate and batch size must be positive".into()));
        }
        let mut state = JointState::from_checkpoint(checkpoint, self.seg, self.app)?;
        let order = BatchOrder::new(samples.len(), self.config.batch_size, mix(self.config.seed, 0x701, 0))?;
        let mut logs = Vec::new();
        let end = state.step + self.config.steps;
        while state.step < end {
            let idx = order.batch(state.step);
            let refs: Vec<&TrainingSample> = idx.iter().map(|&i| &samples[i]).collect();
            logs.push(self.step(&mut state, &refs, pool)?);
        }
        let fp = train::fingerprint(&(&self.config, &checkpoint.config_fingerprint));
        Ok(JointOutcome { checkpoint: state.to_checkpoint(&fp), state, logs })
    }
}

/// Free-function form of [`JointTrainer::train`].
pub fn train_joint(
    samples: &[TrainingSample],
    checkpoint: &Checkpoint,
    seg: &SegTrainer,
    app: &AppTrainer,
    config: &JointConfig,
    pool: &SilhouettePool,
) -> Result<JointOutcome> {
    JointTrainer { seg, app, config: config.clone() }.train(samples, checkpoint, pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seg_trainer::SegTrainConfig;
    use crate::silhouette_pool::build_procedural_pool;
    use crate::synth_data::{generate_dataset, SynthConfig};

    fn arch() -> ArchConfig {
        ArchConfig { gen_width: 4, res_blocks: 1, dilation: 2, disc_width: 4, disc_stages: 3, disc_max_width: 8 }
    }

    fn micro() -> AppTrainConfig {
        AppTrainConfig {
            arch: arch(),
            mask_source: MaskSource::GroundTruth,
            schedule: Schedule { batch_size: 2, steps: 2, eval_every: 2, ..Schedule::default() },
            ..AppTrainConfig::default()
        }
    }

    fn data(n: usize) -> Vec<TrainingSample> {
        generate_dataset(&SynthConfig::default(), 21, n).unwrap()
    }

    fn gt_batch(samples: &[TrainingSample]) -> TwoPathBatch {
        TwoPathBatch::new(&samples.iter().collect::<Vec<_>>(), &samples.iter().map(|s| &s.full_mask).collect::<Vec<_>>(), false).unwrap()
    }

    #[test]
    fn path_inputs_follow_the_slot_layout() {
        let samples = data(1);
        let batch = gt_batch(&samples);
        let (p1, p2) = batch.inputs().unwrap();
        assert_eq!(p1.shape(), &[1, 5, 64, 64]);
        let plane = |t: &Tensor<f32>, c: usize| t.data()[c * 4096..(c + 1) * 4096].to_vec();
        assert_eq!(plane(&p1, 3), batch.visible.data());
        assert_eq!(plane(&p1, 4), batch.mask.data());
        assert!(plane(&p2, 3).iter().all(|&v| v == 0.0));
        assert_eq!(plane(&p2, 4), plane(&p1, 4));
        let swapped = TwoPathBatch { swap_path2_slots: true, ..batch };
        let (_, q2) = swapped.inputs().unwrap();
        assert_eq!(plane(&q2, 3), plane(&p1, 4));
        assert!(plane(&q2, 4).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_path_inputs_give_identical_outputs() {
        let cfg = micro();
        let s = AppTrainState::new(&cfg).unwrap();
        let samples = data(2);
        let mut batch = gt_batch(&samples);
        batch.background = batch.image.clone();
        batch.visible = Tensor::zeros(batch.visible.shape());
        let (o1, o2) = two_path_forward(&s.g2, &batch).unwrap();
        assert!(o1.bit_eq(&o2));
        assert_eq!(o1.shape(), &[2, 3, 64, 64]);
    }

    #[test]
    fn step_updates_own_networks_deterministically() {
        let cfg = micro();
        let t = AppTrainer::new(cfg.clone()).unwrap();
        let s0 = AppTrainState::new(&cfg).unwrap();
        let batch = gt_batch(&data(2));
        let mut a = s0.clone();
        t.step(&mut a, &batch).unwrap();
        assert_ne!(a.g2.params.fingerprint(), s0.g2.params.fingerprint());
        assert_ne!(a.d2.params.fingerprint(), s0.d2.params.fingerprint());
        let mut b = s0.clone();
        t.step(&mut b, &batch).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ground_truth_mode_never_runs_g1() {
        let out = train_app(&data(2), None, &micro()).unwrap();
        assert_eq!(out.g1_forward_calls, 0);
        let predicted = AppTrainConfig { mask_source: MaskSource::Predicted, ..micro() };
        assert!(train_app(&data(2), None, &predicted).is_err());
        let zero = AppTrainConfig { schedule: Schedule { steps: 0, ..micro().schedule }, ..micro() };
        assert_eq!(train_app(&data(2), None, &zero).unwrap().state, AppTrainState::new(&zero).unwrap());
    }

    #[test]
    fn one_path_weights_zeroed_equal_one_path_objective() {
        let cfg = micro();
        let t = AppTrainer::new(cfg.clone()).unwrap();
        let s = AppTrainState::new(&cfg).unwrap();
        let batch = gt_batch(&data(2));
        let (o1, o2) = two_path_forward(&s.g2, &batch).unwrap();
        let zeroed = AppLossWeights { lambda2: 0.0, beta2: 0.0, ..AppLossWeights::default() };
        let mut g = Graph::new();
        let b = s.d2.params.bind(&mut g, false);
        let x = g.constant(o1.clone());
        let l = s.d2.patch_disc_config().unwrap().forward(&mut g, &b, x).unwrap();
        let logits = g.value(l).clone();
        let a = app_loss(t.extractor(), &zeroed, GenAdvForm::NonSaturating, &batch.target, (&o1, Some(&o2)), (Some(&logits), None)).unwrap();
        let b = app_loss(t.extractor(), &AppLossWeights::default(), GenAdvForm::NonSaturating, &batch.target, (&o1, None), (Some(&logits), None)).unwrap();
        assert_eq!(a.total, b.total);
    }

    #[test]
    fn joint_step_moves_all_five_networks() {
        let seg_cfg = SegTrainConfig { arch: arch(), ..SegTrainConfig::default() };
        let app_cfg = micro();
        let seg = SegTrainer::new(seg_cfg.clone()).unwrap();
        let app = AppTrainer::new(app_cfg.clone()).unwrap();
        let mut c = SegTrainState::new(&seg_cfg, 64).unwrap().to_checkpoint("");
        AppTrainState::new(&app_cfg).unwrap().store(&mut c);
        let pool = build_procedural_pool(4, 0).unwrap();
        let samples = data(2);
        let jt = JointTrainer { seg: &seg, app: &app, config: JointConfig { steps: 1, batch_size: 2, ..JointConfig::default() } };
        let out = jt.train(&samples, &c, &pool).unwrap();
        for role in [NetRole::G1, NetRole::DObj, NetRole::DIns, NetRole::G2, NetRole::D2] {
            assert_ne!(out.checkpoint.net(role).unwrap().params.fingerprint(), c.net(role).unwrap().params.fingerprint(), "{role:?}");
        }
        let LogRecord::Step { lr, .. } = &out.logs[0] else { panic!() };
        assert_eq!(*lr, 1e-6);
    }
}
