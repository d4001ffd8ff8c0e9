//! Inference: visible segmentation, mask completion, appearance recovery,
//! compositing and iterative refinement.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::image::{images_to_tensor, masks_to_tensor, ImageTensor, MaskTensor, Sized2d};
use crate::losses;
use crate::models::{ArchConfig, Checkpoint, NetArch, NetRole, NetState};
use crate::optim::AdamConfig;
use crate::synth_data::TrainingSample;
use crate::tensor::Tensor;
use crate::train::{adam_step, mix, BatchOrder};

pub const DEFAULT_ITERATIONS: usize = 2;
pub const MASK_THRESHOLD: f32 = 0.5;

/// The two generators used at inference, plus an optional trained segmenter.
#[derive(Clone, Debug, PartialEq)]
pub struct Models {
    pub g1: NetState,
    pub g2: NetState,
    pub segmenter: Option<NetState>,
}

impl Models {
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        Ok(Self { g1: c.net(NetRole::G1)?.clone(), g2: c.net(NetRole::G2)?.clone(), segmenter: c.nets.get(&NetRole::Segmenter).cloned() })
    }
}

/// Source of the visible mask of the target instance.
#[derive(Clone, Debug, PartialEq)]
pub enum VisibleSegmenter {
    /// The sample's ground-truth visible mask, returned for every image.
    Oracle(MaskTensor),
    /// A trained image-to-mask network, thresholded at 0.5.
    Trained(NetState),
    /// A mask read from disk, returned for every image.
    File(MaskTensor),
}

impl VisibleSegmenter {
    pub fn oracle(sample: &TrainingSample) -> Self {
        Self::Oracle(sample.visible_mask.clone())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::File(MaskTensor::read_png(path)?.threshold(MASK_THRESHOLD)))
    }

    pub fn segment(&self, image: &ImageTensor) -> Result<MaskTensor> {
        let m = match self {
            Self::Oracle(m) | Self::File(m) => m.clone(),
            Self::Trained(net) => {
                let x = images_to_tensor::<f32>(&[image])?;
                let out = forward(net, x)?;
                MaskTensor::from_planar(image.height(), image.width(), out.data())?.threshold(MASK_THRESHOLD)
            }
        };
        if m.dims() != image.dims() {
            return Err(Error::shape(format!("segmenter mask {:?} vs image {:?}", m.dims(), image.dims())));
        }
        Ok(m)
    }
}

fn forward(net: &NetState, x: Tensor<f32>) -> Result<Tensor<f32>> {
    let mut g = Graph::new();
    let b = net.params.bind(&mut g, false);
    let x = g.constant(x);
    let y = net.generator_config()?.forward(&mut g, &b, x)?;
    Ok(g.value(y).clone())
}

fn check_pair(image: &ImageTensor, mask: &MaskTensor, what: &str) -> Result<()> {
    if image.dims() != mask.dims() {
        return Err(Error::shape(format!("{what} {:?} vs image {:?}", mask.dims(), image.dims())));
    }
    mask.require_binary(what)
}

/// `threshold(G1(I, M̂), 0.5) ∪ M̂`.
pub fn complete_mask(g1: &NetState, image: &ImageTensor, visible: &MaskTensor) -> Result<MaskTensor> {
    check_pair(image, visible, "visible mask")?;
    let i = images_to_tensor::<f32>(&[image])?;
    let m = masks_to_tensor::<f32>(&[visible])?;
    let mut g = Graph::new();
    let (iv, mv) = (g.constant(i), g.constant(m));
    let x = g.concat(&[iv, mv])?;
    let b = g1.params.bind(&mut g, false);
    let raw = g1.generator_config()?.forward(&mut g, &b, x)?;
    MaskTensor::from_planar(image.height(), image.width(), g.value(raw).data())?.threshold(MASK_THRESHOLD).union(visible)
}

/// Path-1 output of `G2` on `(I, M̂, M)`; full frame.
pub fn recover_appearance(g2: &NetState, image: &ImageTensor, visible: &MaskTensor, mask: &MaskTensor) -> Result<ImageTensor> {
    check_pair(image, visible, "visible mask")?;
    check_pair(image, mask, "completed mask")?;
    let mut g = Graph::new();
    let i = g.constant(images_to_tensor(&[image])?);
    let v = g.constant(masks_to_tensor(&[visible])?);
    let m = g.constant(masks_to_tensor(&[mask])?);
    let x = g.concat(&[i, v, m])?;
    let b = g2.params.bind(&mut g, false);
    let out = g2.generator_config()?.forward(&mut g, &b, x)?;
    ImageTensor::from_planar(image.height(), image.width(), g.value(out).data())
}

/// `R = M ∧ ¬M̂` and `I_r = I·(1−R) + gen·R`.
pub fn composite(image: &ImageTensor, generated: &ImageTensor, mask: &MaskTensor, visible: &MaskTensor) -> Result<(ImageTensor, MaskTensor)> {
    if generated.dims() != image.dims() {
        return Err(Error::shape(format!("generated image {:?} vs input {:?}", generated.dims(), image.dims())));
    }
    check_pair(image, mask, "completed mask")?;
    check_pair(image, visible, "visible mask")?;
    let region = mask.minus(visible)?;
    let mut out = image.clone();
    for r in 0..image.height() {
        for c in 0..image.width() {
            if region.is_set(r, c) {
                out.set_pixel(r, c, generated.pixel(r, c));
            }
        }
    }
    Ok((out, region))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryResult {
    /// 1-based.
    pub iteration_index: usize,
    pub input_image: ImageTensor,
    pub visible_mask: MaskTensor,
    pub completed_mask: MaskTensor,
    pub generator_image: ImageTensor,
    pub recovered_image: ImageTensor,
    pub invisible_region: MaskTensor,
}

/// One segment→complete→recover→composite pass.
pub fn recover_once(models: &Models, segmenter: &VisibleSegmenter, image: &ImageTensor, iteration_index: usize) -> Result<RecoveryResult> {
    let visible = segmenter.segment(image)?;
    if visible.count() == 0 {
        return Err(Error::EmptyVisibleMask { iteration: iteration_index });
    }
    let completed = complete_mask(&models.g1, image, &visible)?;
    let generated = recover_appearance(&models.g2, image, &visible, &completed)?;
    let (recovered, region) = composite(image, &generated, &completed, &visible)?;
    Ok(RecoveryResult {
        iteration_index,
        input_image: image.clone(),
        visible_mask: visible,
        completed_mask: completed,
        generator_image: generated,
        recovered_image: recovered,
        invisible_region: region,
    })
}

/// `k` refinement passes, each re-segmenting the previous recovered image.
pub fn run_iterations(models: &Models, segmenter: &VisibleSegmenter, image: &ImageTensor, k: usize) -> Result<Vec<RecoveryResult>> {
    if k == 0 {
        return Err(Error::InvalidInput("iteration count must be at least 1".into()));
    }
    let mut out: Vec<RecoveryResult> = Vec::with_capacity(k);
    for t in 1..=k {
        let input = out.last().map_or(image, |r| &r.recovered_image);
        let res = recover_once(models, segmenter, input, t)?;
        out.push(res);
    }
    Ok(out)
}

/// Training settings for the image-to-mask networks (visible segmenter and segmentation proxy).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskNetConfig {
    pub arch: ArchConfig,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MaskNetConfig {
    fn default() -> Self {
        Self { arch: ArchConfig { gen_width: 8, res_blocks: 1, ..ArchConfig::default() }, steps: 300, batch_size: 4, lr: 1e-3, seed: 0 }
    }
}

/// Fit an image-to-mask network by L1 regression.
pub fn train_mask_net(pairs: &[(&ImageTensor, &MaskTensor)], cfg: &MaskNetConfig) -> Result<NetState> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidConfig("mask network batch size and learning rate must be positive".into()));
    }
    let mut net = NetState::fresh(NetArch::Generator(cfg.arch.segmenter()), mix(cfg.seed, 6, 0), AdamConfig::default())?;
    let order = BatchOrder::new(pairs.len(), cfg.batch_size, mix(cfg.seed, 6, 1))?;
    let gen = net.generator_config()?.clone();
    for step in 0..cfg.steps {
        let idx = order.batch(step);
        let x = images_to_tensor::<f32>(&idx.iter().map(|&i| pairs[i].0).collect::<Vec<_>>())?;
        let y = masks_to_tensor::<f32>(&idx.iter().map(|&i| pairs[i].1).collect::<Vec<_>>())?;
        let mut g = Graph::new();
        let b = net.params.bind(&mut g, true);
        let (xv, yv) = (g.constant(x), g.constant(y));
        let p = gen.forward(&mut g, &b, xv)?;
        let loss = losses::l1_loss(&mut g, p, yv)?;
        g.backward(loss)?;
        let grads = net.params.grads_from(&g, &b);
        if !grads.is_finite() {
            return Err(Error::NonFinite { step, detail: "mask network gradient".into() });
        }
        adam_step(&mut net, &grads, cfg.lr, AdamConfig::default())?;
    }
    Ok(net)
}

/// Visible segmenter trained on `(occluded image, visible mask)` pairs.
pub fn train_visible_segmenter(samples: &[TrainingSample], cfg: &MaskNetConfig) -> Result<NetState> {
    let pairs: Vec<_> = samples.iter().map(|s| (&s.image_occluded, &s.visible_mask)).collect();
    train_mask_net(&pairs, cfg)
}
