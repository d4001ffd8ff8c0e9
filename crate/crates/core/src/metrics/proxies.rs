//! Small frozen networks standing in for recognizability and segmentability judges.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{softmax, Graph, Var};
use crate::error::{Error, Result};
use crate::image::{images_to_tensor, ImageTensor, MaskTensor, Sized2d};
use crate::kernels::ConvSpec;
use crate::models::{ArchConfig, NetState};
use crate::optim::{Adam, AdamConfig};
use crate::params::{Bound, ParamSet};
use crate::pipeline::{train_mask_net, MaskNetConfig, MASK_THRESHOLD};
use crate::synth_data::shapes::VEHICLE_CLASSES;
use crate::synth_data::TrainingSample;
use crate::train::{mix, BatchOrder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxyConfig {
    pub crop_size: usize,
    pub classifier_width: usize,
    pub classifier_steps: u64,
    pub segmenter: MaskNetConfig,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            crop_size: 32,
            classifier_width: 8,
            classifier_steps: 400,
            segmenter: MaskNetConfig { arch: ArchConfig { gen_width: 8, res_blocks: 1, ..ArchConfig::default() }, ..MaskNetConfig::default() },
            batch_size: 16,
            lr: 2e-3,
            seed: 0xC1A55,
        }
    }
}

/// Square crop around the mask's bounding box, resampled to `side × side`.
///
/// Pixels of the square that fall outside the frame are black.
pub fn foreground_crop(image: &ImageTensor, mask: &MaskTensor, side: usize) -> Result<ImageTensor> {
    if image.dims() != mask.dims() {
        return Err(Error::shape(format!("crop mask {:?} vs image {:?}", mask.dims(), image.dims())));
    }
    let bb = mask.bbox().ok_or(Error::EmptyRegion)?;
    let extent = bb.height().max(bb.width()) as f64;
    let r0 = (bb.r0 + bb.r1) as f64 / 2.0 + 0.5 - extent / 2.0;
    let c0 = (bb.c0 + bb.c1) as f64 / 2.0 + 0.5 - extent / 2.0;
    let mut out = ImageTensor::filled(side, side, [0.0; 3])?;
    let step = extent / side as f64;
    for i in 0..side {
        let r = (r0 + (i as f64 + 0.5) * step).floor();
        for j in 0..side {
            let c = (c0 + (j as f64 + 0.5) * step).floor();
            if r >= 0.0 && c >= 0.0 && (r as usize) < image.height() && (c as usize) < image.width() {
                out.set_pixel(i, j, image.pixel(r as usize, c as usize));
            }
        }
    }
    Ok(out)
}

/// Three strided convolutions and a linear head over vehicle classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyClassifier {
    pub params: ParamSet<f32>,
    pub crop_size: usize,
    pub classes: usize,
}

const CLASSIFIER_STAGES: usize = 3;

impl ProxyClassifier {
    pub fn init(crop_size: usize, width: usize, classes: usize, seed: u64) -> Result<Self> {
        if !crop_size.is_multiple_of(1 << CLASSIFIER_STAGES) || crop_size == 0 || width == 0 || classes == 0 {
            return Err(Error::InvalidConfig(format!("classifier needs crop size divisible by 8 and positive widths, got {crop_size}/{width}/{classes}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let mut cin = 3;
        for s in 0..CLASSIFIER_STAGES {
            let cout = width << s;
            p.init_weight(&format!("c{s}.w"), &[cout, cin, 3, 3], cin * 9, std::f64::consts::SQRT_2, &mut rng);
            p.init_zeros(&format!("c{s}.b"), &[cout]);
            cin = cout;
        }
        let side = crop_size >> CLASSIFIER_STAGES;
        let feat = cin * side * side;
        p.init_weight("fc.w", &[classes, feat], feat, 1.0, &mut rng);
        p.init_zeros("fc.b", &[classes]);
        Ok(Self { params: p, crop_size, classes })
    }

    fn logits(&self, g: &mut Graph<f32>, b: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for s in 0..CLASSIFIER_STAGES {
            let c = g.conv2d(h, b.var(&format!("c{s}.w")), b.opt(&format!("c{s}.b")), ConvSpec::new(2, 1, 1))?;
            h = g.leaky_relu(c, 0.2);
        }
        g.linear(h, b.var("fc.w"), b.opt("fc.b"))
    }

    /// Class probabilities of each crop.
    pub fn probabilities(&self, crops: &[ImageTensor]) -> Result<Vec<Vec<f64>>> {
        if crops.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let b = self.params.bind(&mut g, false);
        let x = g.constant(images_to_tensor(&crops.iter().collect::<Vec<_>>())?);
        let l = self.logits(&mut g, &b, x)?;
        Ok(g.value(l).data().chunks(self.classes).map(|row| softmax(row).into_iter().map(f64::from).collect()).collect())
    }
}

/// Train the classifier on clean vehicle crops of `samples`.
pub fn train_proxy_classifier(samples: &[TrainingSample], cfg: &ProxyConfig) -> Result<ProxyClassifier> {
    let mut crops = Vec::new();
    let mut labels = Vec::new();
    for s in samples {
        let label = s.vehicle_class.ok_or_else(|| Error::Sample { sample_id: s.sample_id.clone(), reason: "no vehicle class".into() })?;
        crops.push(foreground_crop(&s.target_unoccluded, &s.full_mask, cfg.crop_size)?);
        labels.push(label);
    }
    if crops.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut clf = ProxyClassifier::init(cfg.crop_size, cfg.classifier_width, VEHICLE_CLASSES, mix(cfg.seed, 1, 0))?;
    let adam_cfg = AdamConfig::default();
    let mut adam = Adam::new(&clf.params, adam_cfg);
    let order = BatchOrder::new(crops.len(), cfg.batch_size, mix(cfg.seed, 2, 0))?;
    for step in 0..cfg.classifier_steps {
        let idx = order.batch(step);
        let mut g = Graph::new();
        let b = clf.params.bind(&mut g, true);
        let x = g.constant(images_to_tensor(&idx.iter().map(|&i| &crops[i]).collect::<Vec<_>>())?);
        let l = clf.logits(&mut g, &b, x)?;
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let loss = g.softmax_xent(l, &y)?;
        g.backward(loss)?;
        let grads = clf.params.grads_from(&g, &b);
        adam.update(&mut clf.params, &grads, cfg.lr)?;
    }
    Ok(clf)
}

/// Mean probability the classifier assigns to each crop's true class.
pub fn icp_score(classifier: &ProxyClassifier, crops: &[ImageTensor], labels: &[usize]) -> Result<f64> {
    if crops.len() != labels.len() {
        return Err(Error::shape(format!("{} crops but {} labels", crops.len(), labels.len())));
    }
    if crops.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classifier.classes) {
        return Err(Error::LabelOutOfRange { label, classes: classifier.classes });
    }
    let probs = classifier.probabilities(crops)?;
    Ok(probs.iter().zip(labels).map(|(p, &l)| p[l]).sum::<f64>() / crops.len() as f64)
}

/// Image-to-vehicle-mask network trained on unoccluded images.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxySegmenter {
    pub net: NetState,
}

impl ProxySegmenter {
    pub fn predict(&self, image: &ImageTensor) -> Result<MaskTensor> {
        let mut g = Graph::new();
        let b = self.net.params.bind(&mut g, false);
        let x = g.constant(images_to_tensor::<f32>(&[image])?);
        let y = self.net.generator_config()?.forward(&mut g, &b, x)?;
        Ok(MaskTensor::from_planar(image.height(), image.width(), g.value(y).data())?.threshold(MASK_THRESHOLD))
    }
}

pub fn train_proxy_segmenter(samples: &[TrainingSample], cfg: &ProxyConfig) -> Result<ProxySegmenter> {
    let pairs: Vec<_> = samples.iter().map(|s| (&s.target_unoccluded, &s.full_mask)).collect();
    let seg_cfg = MaskNetConfig { seed: mix(cfg.seed, 3, 0), ..cfg.segmenter.clone() };
    Ok(ProxySegmenter { net: train_mask_net(&pairs, &seg_cfg)? })
}

/// Fraction of pixels where `pred` agrees with `gt`.
pub fn pixel_accuracy(pred: &MaskTensor, gt: &MaskTensor) -> Result<f64> {
    pred.require_same(gt, "pixel accuracy")?;
    let agree = pred.data().iter().zip(gt.data()).filter(|(a, b)| (**a >= 0.5) == (**b >= 0.5)).count();
    Ok(agree as f64 / gt.data().len() as f64)
}

/// Mean pixel accuracy of the proxy's masks on `images` against `gt_masks`.
pub fn seg_score(proxy: &ProxySegmenter, images: &[ImageTensor], gt_masks: &[MaskTensor]) -> Result<f64> {
    if images.len() != gt_masks.len() {
        return Err(Error::shape(format!("{} images but {} masks", images.len(), gt_masks.len())));
    }
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (im, gt) in images.iter().zip(gt_masks) {
        if im.dims() != gt.dims() {
            return Err(Error::shape(format!("image {:?} vs mask {:?}", im.dims(), gt.dims())));
        }
        total += pixel_accuracy(&proxy.predict(im)?, gt)?;
    }
    Ok(total / images.len() as f64)
}
