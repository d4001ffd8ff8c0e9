//! Segmentation completion: `G1` trained against an object discriminator and
//! an instance discriminator that share one batch of silhouette samples.
//!
//! The silhouettes count as real for `D_obj` (they are plausible vehicles)
//! and as fake for `D_ins` (they are not this instance's completion).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::image::{masks_to_tensor, images_to_tensor, MaskTensor};
use crate::losses::{self, ExtractorConfig, FeatureExtractor, GenAdvForm, LossBreakdown};
use crate::metrics::mask_metrics;
use crate::models::{ArchConfig, Checkpoint, GeneratorConfig, NetArch, NetRole, NetState};
use crate::optim::AdamConfig;
use crate::silhouette_pool::{sample_aligned_with, AlignJitter, SilhouettePool};
use crate::synth_data::TrainingSample;
use crate::params::{Bound, ParamSet};
use crate::tensor::{Real, Tensor};
use crate::train::{self, adam_step, mix, require_finite, BatchOrder, LogRecord, PlateauTracker, Schedule};

pub const STAGE: &str = "seg";
pub const STEP_COUNTER: &str = "seg_step";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegLossWeights {
    pub lambda_l1: f64,
    pub beta_perc: f64,
}

impl Default for SegLossWeights {
    fn default() -> Self {
        Self { lambda_l1: 10.0, beta_perc: 1.0 }
    }
}

impl SegLossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_l1 >= 0.0 && self.beta_perc >= 0.0) {
            return Err(Error::InvalidConfig(format!("segmentation loss weights must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscMode {
    /// `D_obj` and `D_ins` with silhouette samples.
    #[default]
    Coupled,
    /// `D_ins` alone, without silhouettes.
    Single,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegTrainConfig {
    pub arch: ArchConfig,
    pub weights: SegLossWeights,
    pub adv_form: GenAdvForm,
    pub disc_mode: DiscMode,
    /// When false, no discriminator is trained and no adversarial term is used.
    pub adversarial: bool,
    pub schedule: Schedule,
    pub adam: AdamConfig,
    pub jitter: AlignJitter,
    pub extractor: ExtractorConfig,
    /// Consecutive non-finite steps tolerated before training aborts.
    pub max_nonfinite_steps: u32,
    pub seed: u64,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            weights: SegLossWeights::default(),
            adv_form: GenAdvForm::NonSaturating,
            disc_mode: DiscMode::Coupled,
            adversarial: true,
            schedule: Schedule::default(),
            adam: AdamConfig::default(),
            jitter: AlignJitter::default(),
            extractor: ExtractorConfig::default(),
            max_nonfinite_steps: 10,
            seed: 0,
        }
    }
}

/// A batch in tensor form.
#[derive(Clone, Debug)]
pub struct SegBatch {
    /// `[N, 3, H, W]`.
    pub image: Tensor<f32>,
    /// `[N, 1, H, W]`.
    pub visible: Tensor<f32>,
    /// `[N, 1, H, W]`.
    pub full: Tensor<f32>,
    pub full_masks: Vec<MaskTensor>,
}

impl SegBatch {
    pub fn new(samples: &[&TrainingSample]) -> Result<Self> {
        let image = images_to_tensor(&samples.iter().map(|s| &s.image_occluded).collect::<Vec<_>>())?;
        let visible = masks_to_tensor(&samples.iter().map(|s| &s.visible_mask).collect::<Vec<_>>())?;
        let full_masks: Vec<MaskTensor> = samples.iter().map(|s| s.full_mask.clone()).collect();
        let full = masks_to_tensor(&full_masks.iter().collect::<Vec<_>>())?;
        Ok(Self { image, visible, full, full_masks })
    }

    pub fn len(&self) -> usize {
        self.full_masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.full_masks.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegTrainState {
    pub g1: NetState,
    pub d_obj: NetState,
    pub d_ins: NetState,
    pub step: u64,
    pub lr: f64,
    pub plateau: PlateauTracker,
}

impl SegTrainState {
    pub fn new(cfg: &SegTrainConfig, image_size: usize) -> Result<Self> {
        let a = &cfg.arch;
        Ok(Self {
            g1: NetState::fresh(NetArch::Generator(a.g1()), mix(cfg.seed, 1, 0), cfg.adam)?,
            d_obj: NetState::fresh(NetArch::MaskDisc(a.d_obj(image_size)), mix(cfg.seed, 2, 0), cfg.adam)?,
            d_ins: NetState::fresh(NetArch::MaskDisc(a.d_ins(image_size)), mix(cfg.seed, 3, 0), cfg.adam)?,
            step: 0,
            lr: cfg.schedule.lr_phases[0],
            plateau: PlateauTracker::new(cfg.schedule.plateau_patience),
        })
    }

    pub fn to_checkpoint(&self, fingerprint: &str) -> Checkpoint {
        let mut c = Checkpoint::new(fingerprint);
        c.nets.insert(NetRole::G1, self.g1.clone());
        c.nets.insert(NetRole::DObj, self.d_obj.clone());
        c.nets.insert(NetRole::DIns, self.d_ins.clone());
        c.counters.insert(STEP_COUNTER.into(), self.step);
        c.scalars.insert(format!("{STAGE}.lr"), self.lr);
        self.plateau.store(STAGE, &mut c.scalars);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint, cfg: &SegTrainConfig) -> Result<Self> {
        Ok(Self {
            g1: c.net(NetRole::G1)?.clone(),
            d_obj: c.net(NetRole::DObj)?.clone(),
            d_ins: c.net(NetRole::DIns)?.clone(),
            step: c.counter(STEP_COUNTER),
            lr: c.scalars.get(&format!("{STAGE}.lr")).copied().unwrap_or(cfg.schedule.lr_phases[0]),
            plateau: PlateauTracker::restore(STAGE, &c.scalars, cfg.schedule.plateau_patience),
        })
    }
}

/// Graph handles for `G1`'s output on a batch.
pub struct G1Forward {
    pub image: Var,
    pub visible: Var,
    pub full: Var,
    pub mask: Var,
}

/// `G1(concat(I, M̂))` on the tape.
pub fn g1_forward(g: &mut Graph<f32>, g1: &NetState, trainable: bool, batch: &SegBatch) -> Result<(G1Forward, Bound)> {
    forward_as(g, g1.generator_config()?, &g1.params, trainable, batch)
}

fn forward_as<T: Real>(g: &mut Graph<T>, cfg: &GeneratorConfig, params: &ParamSet<T>, trainable: bool, batch: &SegBatch) -> Result<(G1Forward, Bound)> {
    let bound = params.bind(g, trainable);
    let image = g.constant(batch.image.cast());
    let visible = g.constant(batch.visible.cast());
    let full = g.constant(batch.full.cast());
    let x = g.concat(&[image, visible])?;
    let mask = cfg.forward(g, &bound, x)?;
    Ok((G1Forward { image, visible, full, mask }, bound))
}

/// Mask discriminator logits on the tape.
pub fn mask_disc_logits<T: Real>(g: &mut Graph<T>, d: &NetState, bound: &Bound, x: Var) -> Result<Var> {
    d.mask_disc_config()?.forward(g, bound, x)
}

/// Assemble the generator objective from its parts.
///
/// `obj_logit` / `ins_logit` are the discriminator logits on the generated
/// mask; `None` masks the corresponding adversarial term.
#[allow(clippy::too_many_arguments)]
pub fn assemble_g1_loss<T: Real>(
    g: &mut Graph<T>,
    extractor: &FeatureExtractor<T>,
    weights: &SegLossWeights,
    form: GenAdvForm,
    mask: Var,
    full: Var,
    obj_logit: Option<Var>,
    ins_logit: Option<Var>,
) -> Result<(Option<Var>, LossBreakdown)> {
    if g.value(mask).shape() != g.value(full).shape() {
        return Err(Error::shape(format!("generated mask {:?} vs ground truth {:?}", g.value(mask).shape(), g.value(full).shape())));
    }
    let adv_obj = obj_logit.map(|l| losses::generator_adversarial(g, l, form));
    let adv_ins = ins_logit.map(|l| losses::generator_adversarial(g, l, form));
    let l1 = if weights.lambda_l1 > 0.0 {
        let l = losses::l1_loss(g, mask, full)?;
        Some(g.scale(l, weights.lambda_l1))
    } else {
        None
    };
    let perc = if weights.beta_perc > 0.0 {
        let l = extractor.loss(g, mask, full)?;
        Some(g.scale(l, weights.beta_perc))
    } else {
        None
    };
    let terms = [("adv_obj", adv_obj), ("adv_ins", adv_ins), ("l1", l1), ("perc", perc)];
    Ok((losses::sum_terms(g, &terms)?, LossBreakdown::from_terms(g, &terms)))
}

fn ins_input<T: Real>(g: &mut Graph<T>, mask: Var, image: Var, visible: Var) -> Result<Var> {
    g.concat(&[mask, image, visible])
}

/// Stage-1 trainer: configuration plus the fixed perceptual extractor.
pub struct SegTrainer {
    pub config: SegTrainConfig,
    extractor: FeatureExtractor<f32>,
}

/// Final state and logs of a training run.
#[derive(Clone, Debug)]
pub struct SegOutcome {
    pub state: SegTrainState,
    pub checkpoint: Checkpoint,
    pub logs: Vec<LogRecord>,
}

impl SegTrainer {
    pub fn new(config: SegTrainConfig) -> Result<Self> {
        config.weights.validate()?;
        config.schedule.validate()?;
        config.arch.validate()?;
        let extractor = FeatureExtractor::new(1, &config.extractor)?;
        Ok(Self { config, extractor })
    }

    pub fn extractor(&self) -> &FeatureExtractor<f32> {
        &self.extractor
    }

    fn coupled(&self) -> bool {
        self.config.adversarial && self.config.disc_mode == DiscMode::Coupled
    }

    /// One aligned silhouette per instance, drawn from `(seed, step, index)`.
    pub fn silhouettes(&self, batch: &SegBatch, pool: &SilhouettePool, step: u64) -> Result<Tensor<f32>> {
        let draws = batch
            .full_masks
            .iter()
            .enumerate()
            .map(|(i, m)| sample_aligned_with(pool, m, mix(self.config.seed, step, i as u64 + 1), self.config.jitter).map(|a| a.mask))
            .collect::<Result<Vec<_>>>()?;
        masks_to_tensor(&draws.iter().collect::<Vec<_>>())
    }

    /// Generator objective on a batch, without any update.
    pub fn g1_loss(&self, state: &SegTrainState, batch: &SegBatch) -> Result<LossBreakdown> {
        let mut g = Graph::new();
        let (fwd, _) = g1_forward(&mut g, &state.g1, false, batch)?;
        let (_, breakdown) = self.generator_objective(&mut g, state, &fwd)?;
        Ok(breakdown)
    }

    /// Gradient of the generator objective with respect to `G1`, without updating.
    pub fn g1_gradients(&self, state: &SegTrainState, batch: &SegBatch) -> Result<ParamSet<f32>> {
        let mut g = Graph::new();
        let (fwd, bound) = g1_forward(&mut g, &state.g1, true, batch)?;
        match self.generator_objective(&mut g, state, &fwd)?.0 {
            Some(loss) => {
                g.backward(loss)?;
                Ok(state.g1.params.grads_from(&g, &bound))
            }
            None => Ok(state.g1.params.zeros_like()),
        }
    }

    /// Generator objective with every weight and input cast to `T`.
    pub fn g1_loss_as<T: Real>(&self, state: &SegTrainState, batch: &SegBatch) -> Result<LossBreakdown> {
        let ext = FeatureExtractor::<T>::new(1, &self.config.extractor)?;
        let mut g = Graph::<T>::new();
        let (fwd, _) = forward_as(&mut g, state.g1.generator_config()?, &state.g1.params.cast(), false, batch)?;
        Ok(self.objective(&mut g, &ext, state, (&state.d_obj.params.cast(), &state.d_ins.params.cast()), &fwd)?.1)
    }

    pub(crate) fn generator_objective(&self, g: &mut Graph<f32>, state: &SegTrainState, fwd: &G1Forward) -> Result<(Option<Var>, LossBreakdown)> {
        self.objective(g, &self.extractor, state, (&state.d_obj.params, &state.d_ins.params), fwd)
    }

    fn objective<T: Real>(
        &self,
        g: &mut Graph<T>,
        extractor: &FeatureExtractor<T>,
        state: &SegTrainState,
        (d_obj, d_ins): (&ParamSet<T>, &ParamSet<T>),
        fwd: &G1Forward,
    ) -> Result<(Option<Var>, LossBreakdown)> {
        let obj_logit = if self.coupled() {
            let b = d_obj.bind(g, false);
            Some(mask_disc_logits(g, &state.d_obj, &b, fwd.mask)?)
        } else {
            None
        };
        let ins_logit = if self.config.adversarial {
            let b = d_ins.bind(g, false);
            let x = ins_input(g, fwd.mask, fwd.image, fwd.visible)?;
            Some(mask_disc_logits(g, &state.d_ins, &b, x)?)
        } else {
            None
        };
        assemble_g1_loss(g, extractor, &self.config.weights, self.config.adv_form, fwd.mask, fwd.full, obj_logit, ins_logit)
    }

    pub(crate) fn discriminator_step(&self, state: &mut SegTrainState, batch: &SegBatch, generated: &Tensor<f32>, pool: &SilhouettePool, lr: f64, step: u64) -> Result<BTreeMap<String, f64>> {
        let mut g = Graph::<f32>::new();
        let bo = state.d_obj.params.bind(&mut g, true);
        let bi = state.d_ins.params.bind(&mut g, true);
        let fake = g.constant(generated.clone());
        let gt = g.constant(batch.full.clone());
        let image = g.constant(batch.image.clone());
        let visible = g.constant(batch.visible.clone());
        let mut report = BTreeMap::new();

        let ins_gt_x = ins_input(&mut g, gt, image, visible)?;
        let ins_fake_x = ins_input(&mut g, fake, image, visible)?;
        let i_gt = mask_disc_logits(&mut g, &state.d_ins, &bi, ins_gt_x)?;
        let i_fake = mask_disc_logits(&mut g, &state.d_ins, &bi, ins_fake_x)?;
        let loss = if self.coupled() {
            let sil = g.constant(self.silhouettes(batch, pool, step)?);
            let ins_sil_x = ins_input(&mut g, sil, image, visible)?;
            let i_sil = mask_disc_logits(&mut g, &state.d_ins, &bi, ins_sil_x)?;
            let o_fake = mask_disc_logits(&mut g, &state.d_obj, &bo, fake)?;
            let o_gt = mask_disc_logits(&mut g, &state.d_obj, &bo, gt)?;
            let o_sil = mask_disc_logits(&mut g, &state.d_obj, &bo, sil)?;
            let lo = losses::neg_one_fake_two_real(&mut g, o_fake, o_gt, o_sil)?;
            let li = losses::neg_one_real_two_fake(&mut g, i_gt, i_fake, i_sil)?;
            report.insert("j_obj".to_string(), -g.value(lo).item() as f64);
            report.insert("j_ins".to_string(), -g.value(li).item() as f64);
            g.add(lo, li)?
        } else {
            let li = losses::neg_standard(&mut g, i_gt, i_fake)?;
            report.insert("j_ins".to_string(), -g.value(li).item() as f64);
            li
        };
        require_finite(step, "discriminator loss", g.value(loss).item() as f64)?;
        g.backward(loss)?;
        let grads_i = state.d_ins.params.grads_from(&g, &bi);
        adam_step(&mut state.d_ins, &grads_i, lr, self.config.adam)?;
        if self.coupled() {
            let grads_o = state.d_obj.params.grads_from(&g, &bo);
            adam_step(&mut state.d_obj, &grads_o, lr, self.config.adam)?;
        }
        Ok(report)
    }

    /// One alternating update: discriminators on the detached mask, then `G1`.
    ///
    /// On a non-finite loss the state is left untouched.
    pub fn step(&self, state: &mut SegTrainState, batch: &SegBatch, pool: &SilhouettePool) -> Result<LogRecord> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut next = state.clone();
        let mut g = Graph::<f32>::new();
        let (fwd, g1_bound) = g1_forward(&mut g, &next.g1, true, batch)?;
        let disc = if self.config.adversarial {
            let generated = g.value(fwd.mask).clone();
            let lr = next.lr;
            self.discriminator_step(&mut next, batch, &generated, pool, lr, state.step)?
        } else {
            BTreeMap::new()
        };
        let (loss, breakdown) = self.generator_objective(&mut g, &next, &fwd)?;
        require_finite(state.step, "generator loss", breakdown.total)?;
        if let Some(loss) = loss {
            g.backward(loss)?;
            let grads = next.g1.params.grads_from(&g, &g1_bound);
            if !grads.is_finite() {
                return Err(Error::NonFinite { step: state.step, detail: "generator gradient".into() });
            }
            let lr = next.lr;
            adam_step(&mut next.g1, &grads, lr, self.config.adam)?;
        }
        next.step += 1;
        let record = LogRecord::Step { stage: STAGE.into(), step: next.step, lr: next.lr, generator: breakdown, discriminator: disc };
        *state = next;
        Ok(record)
    }

    /// Mean generator loss and mask metrics of thresholded `G1` output over `samples`.
    pub fn validate(&self, state: &SegTrainState, samples: &[TrainingSample]) -> Result<(f64, BTreeMap<String, f64>)> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let bs = self.config.schedule.batch_size;
        let mut loss = 0.0;
        let mut iou = 0.0;
        let mut l1 = 0.0;
        for chunk in samples.chunks(bs) {
            let refs: Vec<&TrainingSample> = chunk.iter().collect();
            let batch = SegBatch::new(&refs)?;
            let mut g = Graph::new();
            let (fwd, _) = g1_forward(&mut g, &state.g1, false, &batch)?;
            let (_, b) = self.generator_objective(&mut g, state, &fwd)?;
            loss += b.total * chunk.len() as f64;
            let out = g.value(fwd.mask);
            let (h, w) = chunk[0].size();
            for (i, s) in chunk.iter().enumerate() {
                let raw = MaskTensor::from_planar(h, w, &out.data()[i * h * w..(i + 1) * h * w])?;
                let m = mask_metrics(&raw.threshold(0.5), &s.full_mask)?;
                iou += m.iou;
                l1 += m.l1;
            }
        }
        let n = samples.len() as f64;
        let metrics = BTreeMap::from([("iou".to_string(), iou / n), ("mask_l1".to_string(), l1 / n)]);
        Ok((loss / n, metrics))
    }

    /// Full stage-1 loop with plateau learning-rate drop.
    pub fn train(&self, samples: &[TrainingSample], validation: Option<&[TrainingSample]>, pool: &SilhouettePool, init: Option<SegTrainState>) -> Result<SegOutcome> {
        let first = samples.first().ok_or(Error::EmptyDataset)?;
        if self.coupled() && pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        let mut state = match init {
            Some(s) => s,
            None => SegTrainState::new(&self.config, first.size().0)?,
        };
        let sched = &self.config.schedule;
        let order = BatchOrder::new(samples.len(), sched.batch_size, mix(self.config.seed, 0xBA7C, 0))?;
        let val = validation.unwrap_or(samples);
        let mut logs = Vec::new();
        let mut failures = 0;
        while state.step < sched.steps {
            let idx = order.batch(state.step);
            let refs: Vec<&TrainingSample> = idx.iter().map(|&i| &samples[i]).collect();
            let batch = SegBatch::new(&refs)?;
            match self.step(&mut state, &batch, pool) {
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
                let (val_loss, metrics) = self.validate(&state, val)?;
                let iou = metrics["iou"];
                log::info!("seg step {} lr {:e} val loss {val_loss:.4} iou {iou:.4}", state.step, state.lr);
                logs.push(LogRecord::Eval { stage: STAGE.into(), step: state.step, lr: state.lr, val_loss, metrics });
                if state.plateau.observe(val_loss) {
                    state.lr = state.plateau.lr(sched);
                    logs.push(LogRecord::LrDrop { stage: STAGE.into(), step: state.step, lr: state.lr });
                }
                if sched.stop_at.is_some_and(|t| iou >= t) {
                    break;
                }
            }
        }
        let checkpoint = state.to_checkpoint(&train::fingerprint(&self.config));
        Ok(SegOutcome { state, checkpoint, logs })
    }
}

/// Free-function form of [`SegTrainer::train`].
pub fn train_seg(samples: &[TrainingSample], config: &SegTrainConfig, pool: &SilhouettePool) -> Result<SegOutcome> {
    SegTrainer::new(config.clone())?.train(samples, None, pool, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::silhouette_pool::build_procedural_pool;
    use crate::synth_data::{generate_dataset, SynthConfig};

    fn micro() -> SegTrainConfig {
        SegTrainConfig {
            arch: ArchConfig { gen_width: 4, res_blocks: 1, dilation: 2, disc_width: 4, disc_stages: 3, disc_max_width: 8 },
            schedule: Schedule { batch_size: 2, steps: 3, eval_every: 2, ..Schedule::default() },
            ..SegTrainConfig::default()
        }
    }

    fn data(n: usize) -> Vec<TrainingSample> {
        generate_dataset(&SynthConfig::default(), 11, n).unwrap()
    }

    fn batch(samples: &[TrainingSample]) -> SegBatch {
        SegBatch::new(&samples.iter().collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn step_updates_every_network_and_only_its_own() {
        let cfg = micro();
        let t = SegTrainer::new(cfg.clone()).unwrap();
        let samples = data(2);
        let pool = build_procedural_pool(4, 0).unwrap();
        let s0 = SegTrainState::new(&cfg, 64).unwrap();
        let mut s = s0.clone();
        t.step(&mut s, &batch(&samples), &pool).unwrap();
        assert_ne!(s.g1.params.fingerprint(), s0.g1.params.fingerprint());
        assert_ne!(s.d_obj.params.fingerprint(), s0.d_obj.params.fingerprint());
        assert_ne!(s.d_ins.params.fingerprint(), s0.d_ins.params.fingerprint());
        assert_eq!(s.step, 1);

        let mut again = s0.clone();
        t.step(&mut again, &batch(&samples), &pool).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn disabled_objective_leaves_parameters_unchanged() {
        let cfg = SegTrainConfig { weights: SegLossWeights { lambda_l1: 0.0, beta_perc: 0.0 }, adversarial: false, ..micro() };
        let t = SegTrainer::new(cfg.clone()).unwrap();
        let pool = build_procedural_pool(2, 0).unwrap();
        let s0 = SegTrainState::new(&cfg, 64).unwrap();
        let mut s = s0.clone();
        let rec = t.step(&mut s, &batch(&data(2)), &pool).unwrap();
        assert!(s.g1.params.bit_eq(&s0.g1.params));
        assert!(s.d_obj.params.bit_eq(&s0.d_obj.params));
        assert!(s.d_ins.params.bit_eq(&s0.d_ins.params));
        let LogRecord::Step { generator, .. } = rec else { panic!() };
        assert_eq!(generator.total, 0.0);
    }

    #[test]
    fn single_mode_never_touches_object_discriminator() {
        let cfg = SegTrainConfig { disc_mode: DiscMode::Single, ..micro() };
        let t = SegTrainer::new(cfg.clone()).unwrap();
        let s0 = SegTrainState::new(&cfg, 64).unwrap();
        let mut s = s0.clone();
        let rec = t.step(&mut s, &batch(&data(2)), &SilhouettePool::default()).unwrap();
        assert!(s.d_obj.params.bit_eq(&s0.d_obj.params));
        let LogRecord::Step { generator, .. } = rec else { panic!() };
        assert_eq!(generator.get("adv_obj"), 0.0);
        assert!(generator.get("adv_ins") > 0.0);
    }

    #[test]
    fn zero_step_budget_returns_initial_state() {
        let mut cfg = micro();
        cfg.schedule.steps = 0;
        let pool = build_procedural_pool(2, 0).unwrap();
        let out = train_seg(&data(2), &cfg, &pool).unwrap();
        let init = SegTrainState::new(&cfg, 64).unwrap();
        assert_eq!(out.state, init);
        assert!(out.logs.is_empty());
        assert!(matches!(train_seg(&[], &cfg, &pool), Err(Error::EmptyDataset)));
    }

    #[test]
    fn training_is_deterministic_and_checkpoints_round_trip() {
        let cfg = micro();
        let pool = build_procedural_pool(4, 1).unwrap();
        let samples = data(3);
        let a = train_seg(&samples, &cfg, &pool).unwrap();
        let b = train_seg(&samples, &cfg, &pool).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.logs, b.logs);
        let bytes = a.checkpoint.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(SegTrainState::from_checkpoint(&back, &cfg).unwrap(), a.state);
        assert!(a.logs.iter().any(|l| matches!(l, LogRecord::Eval { .. })));
    }
}
