//! Reconstruction, perceptual and adversarial loss terms.
//!
//! Discriminators emit logits; every probability below is `σ(logit)` and the
//! logarithms are evaluated through `log σ` for stability.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{log_sigmoid, Graph, Var};
use crate::error::{Error, Result};
use crate::kernels::ConvSpec;
use crate::params::ParamSet;
use crate::tensor::{Real, Tensor};

/// Fixed (never trained) feature map used by the perceptual loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractorConfig {
    /// Use the raw input as one of the feature taps.
    pub include_input: bool,
    /// Output widths of the random convolution stages; each stage after the first halves resolution.
    pub widths: Vec<usize>,
    pub seed: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self { include_input: false, widths: vec![8, 16], seed: 0x5EED }
    }
}

impl ExtractorConfig {
    /// Single tap equal to the input.
    pub fn identity() -> Self {
        Self { include_input: true, widths: Vec::new(), seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct FeatureExtractor<T> {
    in_channels: usize,
    include_input: bool,
    stages: Vec<Tensor<T>>,
}

impl<T: Real> FeatureExtractor<T> {
    pub fn new(in_channels: usize, cfg: &ExtractorConfig) -> Result<Self> {
        if !cfg.include_input && cfg.widths.is_empty() {
            return Err(Error::InvalidConfig("feature extractor has no taps".into()));
        }
        if in_channels == 0 || cfg.widths.contains(&0) {
            return Err(Error::InvalidConfig("feature extractor widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ in_channels as u64);
        let mut p = ParamSet::<T>::new();
        let mut cin = in_channels;
        for (i, &w) in cfg.widths.iter().enumerate() {
            p.init_weight(&format!("{i}"), &[w, cin, 3, 3], cin * 9, std::f64::consts::SQRT_2, &mut rng);
            cin = w;
        }
        let stages = (0..cfg.widths.len()).map(|i| p.get(&i.to_string()).expect("inserted").clone()).collect();
        Ok(Self { in_channels, include_input: cfg.include_input, stages })
    }

    pub fn identity(in_channels: usize) -> Self {
        Self { in_channels, include_input: true, stages: Vec::new() }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn features(&self, g: &mut Graph<T>, x: Var) -> Result<Vec<Var>> {
        let c = g.value(x).shape().get(1).copied();
        if c != Some(self.in_channels) {
            return Err(Error::shape(format!("feature extractor expects {} channels, got {:?}", self.in_channels, g.value(x).shape())));
        }
        let mut taps = Vec::new();
        if self.include_input {
            taps.push(x);
        }
        let mut h = x;
        for (i, w) in self.stages.iter().enumerate() {
            if i > 0 {
                h = g.avgpool2(h)?;
            }
            let wv = g.constant(w.clone());
            let c = g.conv2d(h, wv, None, ConvSpec::new(1, 1, 1))?;
            h = g.leaky_relu(c, 0.2);
            taps.push(h);
        }
        Ok(taps)
    }

    /// Mean over taps of the mean absolute feature difference.
    pub fn loss(&self, g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
        if g.value(a).shape() != g.value(b).shape() {
            return Err(Error::shape(format!("perceptual operands {:?} vs {:?}", g.value(a).shape(), g.value(b).shape())));
        }
        let fa = self.features(g, a)?;
        let fb = self.features(g, b)?;
        let mut terms = Vec::with_capacity(fa.len());
        for (x, y) in fa.into_iter().zip(fb) {
            let d = g.sub(x, y)?;
            let d = g.abs(d);
            terms.push(g.mean(d));
        }
        let n = terms.len() as f64;
        let sum = g.sum_scalars(&terms)?;
        Ok(g.scale(sum, 1.0 / n))
    }
}

/// Perceptual distance between two `[N, C, H, W]` tensors.
pub fn perceptual_loss<T: Real>(extractor: &FeatureExtractor<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let mut g = Graph::new();
    let (av, bv) = (g.constant(a.clone()), g.constant(b.clone()));
    let l = extractor.loss(&mut g, av, bv)?;
    Ok(g.value(l).item().as_f64())
}

/// `mean |a - b|` on the tape.
pub fn l1_loss<T: Real>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let d = g.abs(d);
    Ok(g.mean(d))
}

/// Generator adversarial surrogate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenAdvForm {
    /// `-E[log σ(D(G))]`.
    #[default]
    NonSaturating,
    /// `E[log(1 - σ(D(G)))]`, literally as written in the minimax objective.
    Saturating,
}

/// `E[log σ(x)]` (`sign = 1`) or `E[log(1 - σ(x))]` (`sign = -1`) over all logits.
fn mean_log_prob<T: Real>(g: &mut Graph<T>, logits: Var, positive: bool) -> Var {
    let x = if positive { logits } else { g.scale(logits, -1.0) };
    let ls = g.log_sigmoid(x);
    g.mean(ls)
}

pub fn generator_adversarial<T: Real>(g: &mut Graph<T>, logits: Var, form: GenAdvForm) -> Var {
    match form {
        GenAdvForm::NonSaturating => {
            let m = mean_log_prob(g, logits, true);
            g.scale(m, -1.0)
        }
        GenAdvForm::Saturating => mean_log_prob(g, logits, false),
    }
}

/// `-J` for a discriminator with one real and two half-weighted fake sets.
///
/// `J = E[log σ(real)] + ½(E[log(1-σ(fake_a))] + E[log(1-σ(fake_b))])`.
pub fn neg_one_real_two_fake<T: Real>(g: &mut Graph<T>, real: Var, fake_a: Var, fake_b: Var) -> Result<Var> {
    let r = mean_log_prob(g, real, true);
    let fa = mean_log_prob(g, fake_a, false);
    let fb = mean_log_prob(g, fake_b, false);
    let f = g.add(fa, fb)?;
    let f = g.scale(f, 0.5);
    let j = g.add(r, f)?;
    Ok(g.scale(j, -1.0))
}

/// `-J` for a discriminator with one fake and two half-weighted real sets.
///
/// `J = E[log(1-σ(fake))] + ½(E[log σ(real_a)] + E[log σ(real_b)])`.
pub fn neg_one_fake_two_real<T: Real>(g: &mut Graph<T>, fake: Var, real_a: Var, real_b: Var) -> Result<Var> {
    let f = mean_log_prob(g, fake, false);
    let ra = mean_log_prob(g, real_a, true);
    let rb = mean_log_prob(g, real_b, true);
    let r = g.add(ra, rb)?;
    let r = g.scale(r, 0.5);
    let j = g.add(f, r)?;
    Ok(g.scale(j, -1.0))
}

/// `-J` for the plain objective `E[log σ(real)] + E[log(1-σ(fake))]`.
pub fn neg_standard<T: Real>(g: &mut Graph<T>, real: Var, fake: Var) -> Result<Var> {
    let r = mean_log_prob(g, real, true);
    let f = mean_log_prob(g, fake, false);
    let j = g.add(r, f)?;
    Ok(g.scale(j, -1.0))
}

fn mean_of(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    xs.iter().map(|&x| f(x)).sum::<f64>() / xs.len() as f64
}

fn check_logits(sets: &[&[f64]]) -> Result<()> {
    for s in sets {
        if s.is_empty() {
            return Err(Error::InvalidInput("empty logit set".into()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite discriminator logit".into()));
        }
    }
    Ok(())
}

/// Object discriminator objective (maximized by the discriminator).
pub fn d_obj_objective(logit_fake: &[f64], logit_real_gt: &[f64], logit_real_sil: &[f64]) -> Result<f64> {
    check_logits(&[logit_fake, logit_real_gt, logit_real_sil])?;
    Ok(mean_of(logit_fake, |x| log_sigmoid(-x)) + 0.5 * (mean_of(logit_real_gt, log_sigmoid) + mean_of(logit_real_sil, log_sigmoid)))
}

/// Instance discriminator objective (maximized by the discriminator).
pub fn d_ins_objective(logit_real_gt: &[f64], logit_fake_gen: &[f64], logit_fake_sil: &[f64]) -> Result<f64> {
    check_logits(&[logit_real_gt, logit_fake_gen, logit_fake_sil])?;
    Ok(mean_of(logit_real_gt, log_sigmoid) + 0.5 * (mean_of(logit_fake_gen, |x| log_sigmoid(-x)) + mean_of(logit_fake_sil, |x| log_sigmoid(-x))))
}

/// Named, weighted loss terms; `total` is their sum.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub terms: BTreeMap<String, f64>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_terms<T: Real>(g: &Graph<T>, terms: &[(&str, Option<Var>)]) -> Self {
        let terms: BTreeMap<String, f64> = terms.iter().map(|(k, v)| (k.to_string(), v.map_or(0.0, |v| g.value(v).item().as_f64()))).collect();
        let total = terms.values().sum();
        Self { terms, total }
    }

    pub fn get(&self, name: &str) -> f64 {
        self.terms.get(name).copied().unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.terms.values().all(|v| v.is_finite())
    }
}

/// Sum of the present terms, or `None` when every term is disabled.
pub fn sum_terms<T: Real>(g: &mut Graph<T>, terms: &[(&str, Option<Var>)]) -> Result<Option<Var>> {
    let present: Vec<Var> = terms.iter().filter_map(|(_, v)| *v).collect();
    if present.is_empty() {
        return Ok(None);
    }
    g.sum_scalars(&present).map(Some)
}
