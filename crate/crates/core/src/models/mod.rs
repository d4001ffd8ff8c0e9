//! Network families as pure forward functions over explicit parameter sets.
//!
//! * [`GeneratorParams`]: encoder (two stride-2 stages, 4x downsampling),
//!   a body of dilated residual blocks, and a resize-then-convolve decoder
//!   with a sigmoid head. Used for `G1` (mask completion) and `G2`
//!   (appearance recovery).
//! * [`PatchDiscParams`]: stride-2 convolution stack ending in a one-channel
//!   logit map. Used for `D2`.
//! * [`MaskDiscParams`]: a patch backbone followed by a fully connected layer
//!   producing one logit per instance. Used for `D_obj` and `D_ins`.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NetRole, NetState, CHECKPOINT_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::kernels::ConvSpec;
use crate::params::{Bound, ParamSet};
use crate::tensor::{Real, Tensor};

/// Number of stride-2 encoder stages; total downsampling is `2^ENCODER_STAGES`.
pub const ENCODER_STAGES: usize = 2;
pub const DOWNSAMPLE_FACTOR: usize = 1 << ENCODER_STAGES;

const RELU_GAIN: f64 = std::f64::consts::SQRT_2;
const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default = "default_gen_width")]
    pub base_width: usize,
    #[serde(default = "default_res_blocks")]
    pub res_blocks: usize,
    #[serde(default = "default_dilation")]
    pub dilation: usize,
}

fn default_gen_width() -> usize {
    64
}
fn default_res_blocks() -> usize {
    8
}
fn default_dilation() -> usize {
    2
}

impl GeneratorConfig {
    /// Full-size layout: width 64, eight residual blocks with dilation 2.
    pub fn standard(in_channels: usize, out_channels: usize) -> Self {
        Self { in_channels, out_channels, base_width: 64, res_blocks: 8, dilation: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.base_width == 0 {
            return Err(Error::InvalidConfig(format!("generator channel counts must be positive: {self:?}")));
        }
        if self.res_blocks == 0 || self.dilation == 0 {
            return Err(Error::InvalidConfig("generator needs at least one residual block and dilation >= 1".into()));
        }
        Ok(())
    }

    fn width(&self, stage: usize) -> usize {
        self.base_width << stage
    }

    pub fn init<T: Real>(&self, seed: u64) -> Result<GeneratorParams<T>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let conv = |p: &mut ParamSet<T>, name: &str, cout: usize, cin: usize, k: usize, gain: f64, rng: &mut ChaCha8Rng| {
            p.init_weight(&format!("{name}.w"), &[cout, cin, k, k], cin * k * k, gain, rng);
        };
        conv(&mut p, "in", self.width(0), self.in_channels, 3, RELU_GAIN, &mut rng);
        for s in 0..ENCODER_STAGES {
            conv(&mut p, &format!("down{s}"), self.width(s + 1), self.width(s), 3, RELU_GAIN, &mut rng);
        }
        let body = self.width(ENCODER_STAGES);
        for b in 0..self.res_blocks {
            conv(&mut p, &format!("res{b}.a"), body, body, 3, RELU_GAIN, &mut rng);
            conv(&mut p, &format!("res{b}.b"), body, body, 3, 1.0, &mut rng);
        }
        for s in 0..ENCODER_STAGES {
            let from = self.width(ENCODER_STAGES - s);
            conv(&mut p, &format!("up{s}"), from / 2, from, 3, RELU_GAIN, &mut rng);
        }
        conv(&mut p, "out", self.out_channels, self.width(0), 3, 1.0, &mut rng);
        p.init_zeros("out.b", &[self.out_channels]);
        Ok(GeneratorParams { config: self.clone(), params: p })
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        match shape {
            [_, c, h, w] if *c == self.in_channels && h % DOWNSAMPLE_FACTOR == 0 && w % DOWNSAMPLE_FACTOR == 0 && *h > 0 && *w > 0 => Ok(()),
            [_, c, h, w] => Err(Error::shape(format!(
                "generator expects {} channels with sides divisible by {DOWNSAMPLE_FACTOR}, got {c} channels at {h}x{w}",
                self.in_channels
            ))),
            s => Err(Error::shape(format!("generator expects [N, C, H, W], got {s:?}"))),
        }
    }

    /// Generator forward on the tape; returns `[N, Cout, H, W]` in `[0, 1]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        self.check_input(g.value(x).shape())?;
        let same = ConvSpec::new(1, 1, 1);
        let mut h = conv_norm_relu(g, p, "in", x, same)?;
        for s in 0..ENCODER_STAGES {
            h = conv_norm_relu(g, p, &format!("down{s}"), h, ConvSpec::new(2, 1, 1))?;
        }
        h = self.forward_body(g, p, h)?;
        for s in 0..ENCODER_STAGES {
            let up = g.upsample2(h);
            h = conv_norm_relu(g, p, &format!("up{s}"), up, same)?;
        }
        let logits = g.conv2d(h, p.var("out.w"), p.opt("out.b"), same)?;
        Ok(g.sigmoid(logits))
    }

    /// Residual body: `x + IN(conv(relu(IN(conv(x)))))` per block.
    pub fn forward_body<T: Real>(&self, g: &mut Graph<T>, p: &Bound, mut h: Var) -> Result<Var> {
        let spec = ConvSpec::new(1, self.dilation, self.dilation);
        for b in 0..self.res_blocks {
            let a = conv_norm_relu(g, p, &format!("res{b}.a"), h, spec)?;
            let c = g.conv2d(a, p.var(&format!("res{b}.b.w")), None, spec)?;
            let c = g.instance_norm(c)?;
            h = g.add(h, c)?;
        }
        Ok(h)
    }
}

fn conv_norm_relu<T: Real>(g: &mut Graph<T>, p: &Bound, name: &str, x: Var, spec: ConvSpec) -> Result<Var> {
    let c = g.conv2d(x, p.var(&format!("{name}.w")), None, spec)?;
    let n = g.instance_norm(c)?;
    Ok(g.relu(n))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchDiscConfig {
    pub in_channels: usize,
    #[serde(default = "default_disc_width")]
    pub base_width: usize,
    /// Number of stride-2 stages; the logit map is `1 / 2^stages` of the input.
    #[serde(default = "default_disc_stages")]
    pub stages: usize,
    #[serde(default = "default_disc_max_width")]
    pub max_width: usize,
}

fn default_disc_width() -> usize {
    64
}
fn default_disc_stages() -> usize {
    4
}
fn default_disc_max_width() -> usize {
    512
}

impl PatchDiscConfig {
    pub fn standard(in_channels: usize) -> Self {
        Self { in_channels, base_width: 64, stages: 4, max_width: 512 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_width == 0 || self.stages == 0 || self.max_width == 0 {
            return Err(Error::InvalidConfig(format!("discriminator sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    fn width(&self, stage: usize) -> usize {
        (self.base_width << stage).min(self.max_width)
    }

    /// Smallest accepted input side.
    pub fn min_input(&self) -> usize {
        1 << self.stages
    }

    /// Logit-map side for an input side, following the stride schedule.
    pub fn output_side(&self, input: usize) -> Option<usize> {
        let mut side = input;
        for _ in 0..self.stages {
            side = ConvSpec::new(2, 1, 1).out_len(side, 4)?;
        }
        ConvSpec::new(1, 1, 1).out_len(side, 3).filter(|&s| s > 0)
    }

    fn init_into<T: Real>(&self, p: &mut ParamSet<T>, rng: &mut ChaCha8Rng) {
        let mut cin = self.in_channels;
        for s in 0..self.stages {
            let cout = self.width(s);
            p.init_weight(&format!("stage{s}.w"), &[cout, cin, 4, 4], cin * 16, RELU_GAIN, rng);
            p.init_zeros(&format!("stage{s}.b"), &[cout]);
            cin = cout;
        }
        p.init_weight("score.w", &[1, cin, 3, 3], cin * 9, 1.0, rng);
        p.init_zeros("score.b", &[1]);
    }

    pub fn init<T: Real>(&self, seed: u64) -> Result<PatchDiscParams<T>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        self.init_into(&mut p, &mut rng);
        Ok(PatchDiscParams { config: self.clone(), params: p })
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        match shape {
            [_, c, h, w] if *c == self.in_channels && *h >= self.min_input() && *w >= self.min_input() => Ok(()),
            [_, c, h, w] => Err(Error::shape(format!(
                "discriminator expects {} channels and sides >= {}, got {c} channels at {h}x{w}",
                self.in_channels,
                self.min_input()
            ))),
            s => Err(Error::shape(format!("discriminator expects [N, C, H, W], got {s:?}"))),
        }
    }

    /// Logit map `[N, 1, h, w]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        self.check_input(g.value(x).shape())?;
        let mut h = x;
        for s in 0..self.stages {
            let c = g.conv2d(h, p.var(&format!("stage{s}.w")), p.opt(&format!("stage{s}.b")), ConvSpec::new(2, 1, 1))?;
            h = g.leaky_relu(c, LEAKY_SLOPE);
        }
        g.conv2d(h, p.var("score.w"), p.opt("score.b"), ConvSpec::new(1, 1, 1))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskDiscConfig {
    pub backbone: PatchDiscConfig,
    /// Input side the fully connected head is sized for.
    pub input_size: usize,
}

impl MaskDiscConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.backbone.output_side(self.input_size).is_none() || self.input_size < self.backbone.min_input() {
            return Err(Error::InvalidConfig(format!("input size {} too small for {} discriminator stages", self.input_size, self.backbone.stages)));
        }
        Ok(())
    }

    fn head_inputs(&self) -> usize {
        let side = self.backbone.output_side(self.input_size).expect("validated");
        side * side
    }

    pub fn init<T: Real>(&self, seed: u64) -> Result<MaskDiscParams<T>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        self.backbone.init_into(&mut p, &mut rng);
        let f = self.head_inputs();
        p.init_weight("fc.w", &[1, f], f, 1.0, &mut rng);
        p.init_zeros("fc.b", &[1]);
        Ok(MaskDiscParams { config: self.clone(), params: p })
    }

    /// One logit per instance, `[N, 1]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let shape = g.value(x).shape().to_vec();
        if shape.len() == 4 && (shape[2] != self.input_size || shape[3] != self.input_size) {
            return Err(Error::shape(format!("mask discriminator sized for {0}x{0}, got {1}x{2}", self.input_size, shape[2], shape[3])));
        }
        let map = self.backbone.forward(g, p, x)?;
        g.linear(map, p.var("fc.w"), p.opt("fc.b"))
    }
}

macro_rules! net_params {
    ($name:ident, $cfg:ty) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<T> {
            pub config: $cfg,
            pub params: ParamSet<T>,
        }

        impl<T: Real> $name<T> {
            pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
                self.params.bind(g, trainable)
            }

            pub fn forward_graph(&self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Result<Var> {
                self.config.forward(g, bound, x)
            }

            /// Pure forward evaluation outside any training graph.
            pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
                let mut g = Graph::new();
                let bound = self.params.bind(&mut g, false);
                let xv = g.constant(x.clone());
                let out = self.config.forward(&mut g, &bound, xv)?;
                Ok(g.value(out).clone())
            }

            pub fn fingerprint(&self) -> u64 {
                self.params.fingerprint()
            }
        }
    };
}

net_params!(GeneratorParams, GeneratorConfig);
net_params!(PatchDiscParams, PatchDiscConfig);
net_params!(MaskDiscParams, MaskDiscConfig);

/// Architecture of any of the networks, as stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetArch {
    Generator(GeneratorConfig),
    PatchDisc(PatchDiscConfig),
    MaskDisc(MaskDiscConfig),
}

impl NetArch {
    pub fn init<T: Real>(&self, seed: u64) -> Result<ParamSet<T>> {
        Ok(match self {
            NetArch::Generator(c) => c.init(seed)?.params,
            NetArch::PatchDisc(c) => c.init(seed)?.params,
            NetArch::MaskDisc(c) => c.init(seed)?.params,
        })
    }
}

/// Deterministic initialization of any architecture.
pub fn init_params<T: Real>(arch: &NetArch, seed: u64) -> Result<ParamSet<T>> {
    arch.init(seed)
}

pub fn generator_forward<T: Real>(params: &GeneratorParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    params.forward(x)
}

pub fn patch_disc_forward<T: Real>(params: &PatchDiscParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    params.forward(x)
}

pub fn mask_disc_forward<T: Real>(params: &MaskDiscParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    params.forward(x)
}

/// Channel count of the object discriminator input: the mask alone.
pub const D_OBJ_CHANNELS: usize = 1;
/// Channel count of the instance discriminator input: mask, image, visible mask.
pub const D_INS_CHANNELS: usize = 1 + 3 + 1;

/// Widths and depths shared by every network of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub gen_width: usize,
    pub res_blocks: usize,
    pub dilation: usize,
    pub disc_width: usize,
    pub disc_stages: usize,
    pub disc_max_width: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { gen_width: 64, res_blocks: 8, dilation: 2, disc_width: 64, disc_stages: 4, disc_max_width: 512 }
    }
}

impl ArchConfig {
    fn generator(&self, in_channels: usize, out_channels: usize) -> GeneratorConfig {
        GeneratorConfig { in_channels, out_channels, base_width: self.gen_width, res_blocks: self.res_blocks, dilation: self.dilation }
    }

    fn patch(&self, in_channels: usize) -> PatchDiscConfig {
        PatchDiscConfig { in_channels, base_width: self.disc_width, stages: self.disc_stages, max_width: self.disc_max_width }
    }

    /// Mask completion: image and visible mask in, mask out.
    pub fn g1(&self) -> GeneratorConfig {
        self.generator(3 + 1, 1)
    }

    /// Appearance recovery: image, visible-mask slot and target-mask slot in, image out.
    pub fn g2(&self) -> GeneratorConfig {
        self.generator(3 + 1 + 1, 3)
    }

    /// Visible-mask segmenter: image in, mask out.
    pub fn segmenter(&self) -> GeneratorConfig {
        self.generator(3, 1)
    }

    pub fn d_obj(&self, image_size: usize) -> MaskDiscConfig {
        MaskDiscConfig { backbone: self.patch(D_OBJ_CHANNELS), input_size: image_size }
    }

    pub fn d_ins(&self, image_size: usize) -> MaskDiscConfig {
        MaskDiscConfig { backbone: self.patch(D_INS_CHANNELS), input_size: image_size }
    }

    pub fn d2(&self) -> PatchDiscConfig {
        self.patch(3)
    }

    pub fn validate(&self) -> Result<()> {
        self.g2().validate()?;
        self.d2().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_input<T: Real>(shape: &[usize], seed: u64) -> Tensor<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..shape.iter().product::<usize>()).map(|_| T::of(rng.random::<f64>())).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    fn small_gen() -> GeneratorConfig {
        GeneratorConfig { in_channels: 5, out_channels: 1, base_width: 4, res_blocks: 2, dilation: 2 }
    }

    #[test]
    fn init_is_deterministic_finite_and_seed_dependent() {
        let cfg = small_gen();
        let a = cfg.init::<f32>(11).unwrap();
        let b = cfg.init::<f32>(11).unwrap();
        let c = cfg.init::<f32>(12).unwrap();
        assert!(a.params.bit_eq(&b.params));
        assert!(a.params.is_finite());
        assert!(!a.params.bit_eq(&c.params));
        assert!(a.params.get("out.b").unwrap().data().iter().all(|&v| v == 0.0));
        let d = MaskDiscConfig { backbone: PatchDiscConfig { in_channels: 5, base_width: 4, stages: 3, max_width: 16 }, input_size: 32 };
        let dp = d.init::<f32>(1).unwrap();
        assert!(dp.params.iter().filter(|(k, _)| k.ends_with(".b")).all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn generator_preserves_spatial_size_and_bounds_output() {
        let cfg = small_gen();
        let p = cfg.init::<f32>(3).unwrap();
        for side in [8, 16, 64] {
            let out = generator_forward(&p, &random_input(&[2, 5, side, side], 9)).unwrap();
            assert_eq!(out.shape(), &[2, 1, side, side]);
            assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        let wide = GeneratorConfig { out_channels: 3, ..cfg };
        let p = wide.init::<f32>(3).unwrap();
        assert_eq!(generator_forward(&p, &random_input(&[1, 5, 12, 20], 1)).unwrap().shape(), &[1, 3, 12, 20]);
    }

    #[test]
    fn full_size_generator_maps_256_to_256() {
        let cfg = GeneratorConfig { base_width: 4, ..GeneratorConfig::standard(5, 1) };
        assert_eq!(cfg.res_blocks, 8);
        let p = cfg.init::<f32>(0).unwrap();
        let out = generator_forward(&p, &random_input(&[1, 5, 256, 256], 2)).unwrap();
        assert_eq!(out.shape(), &[1, 1, 256, 256]);
    }

    #[test]
    fn generator_rejects_bad_shapes() {
        let p = small_gen().init::<f32>(0).unwrap();
        assert!(generator_forward(&p, &random_input(&[1, 5, 10, 12], 0)).is_err());
        assert!(generator_forward(&p, &random_input(&[1, 4, 16, 16], 0)).is_err());
    }

    #[test]
    fn zeroed_residual_branches_make_the_body_an_identity() {
        let cfg = small_gen();
        let mut p = cfg.init::<f64>(5).unwrap();
        let names: Vec<String> = p.params.names().filter(|n| n.starts_with("res")).cloned().collect();
        for n in names {
            let t = p.params.get_mut(&n).unwrap();
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let feats = random_input::<f64>(&[2, 16, 4, 4], 8);
        let mut g = Graph::new();
        let bound = p.bind(&mut g, false);
        let x = g.constant(feats.clone());
        let y = cfg.forward_body(&mut g, &bound, x).unwrap();
        assert!(g.value(y).bit_eq(&feats));
    }

    #[test]
    fn patch_map_size_follows_stride_schedule() {
        let cfg = PatchDiscConfig { in_channels: 3, base_width: 2, stages: 4, max_width: 8 };
        assert_eq!(cfg.output_side(256), Some(16));
        let p = cfg.init::<f32>(0).unwrap();
        let out = patch_disc_forward(&p, &random_input(&[1, 3, 256, 256], 4)).unwrap();
        assert_eq!(out.shape(), &[1, 1, 16, 16]);
        let small = patch_disc_forward(&p, &random_input(&[1, 3, 64, 48], 4)).unwrap();
        assert_eq!(small.shape(), &[1, 1, 4, 3]);
        assert!(patch_disc_forward(&p, &random_input(&[1, 3, 8, 8], 4)).is_err());
    }

    #[test]
    fn patch_disc_is_deterministic() {
        let cfg = PatchDiscConfig { in_channels: 3, base_width: 4, stages: 3, max_width: 16 };
        let p = cfg.init::<f32>(1).unwrap();
        let x = random_input(&[2, 3, 32, 32], 5);
        assert!(patch_disc_forward(&p, &x).unwrap().bit_eq(&patch_disc_forward(&p, &x).unwrap()));
    }

    #[test]
    fn patch_map_is_translation_covariant_on_the_interior() {
        let cfg = PatchDiscConfig { in_channels: 1, base_width: 4, stages: 2, max_width: 8 };
        let p = cfg.init::<f64>(2).unwrap();
        let stride = 1 << cfg.stages;
        let side = 48;
        let impulse = |r: usize, c: usize| {
            let mut t = Tensor::<f64>::zeros(&[1, 1, side, side]);
            for dr in 0..3 {
                for dc in 0..3 {
                    t.data_mut()[(r + dr) * side + c + dc] = 1.0;
                }
            }
            t
        };
        let a = patch_disc_forward(&p, &impulse(20, 20)).unwrap();
        let b = patch_disc_forward(&p, &impulse(20, 20 + stride)).unwrap();
        let m = side / stride;
        for r in 1..m - 1 {
            for c in 1..m - 2 {
                let va = a.data()[r * m + c];
                let vb = b.data()[r * m + c + 1];
                assert!((va - vb).abs() < 1e-12, "cell ({r},{c}): {va} vs {vb}");
            }
        }
    }

    #[test]
    fn mask_discriminators_emit_one_finite_logit_per_instance() {
        let obj = MaskDiscConfig { backbone: PatchDiscConfig { in_channels: D_OBJ_CHANNELS, base_width: 4, stages: 3, max_width: 16 }, input_size: 32 };
        let ins = MaskDiscConfig { backbone: PatchDiscConfig { in_channels: D_INS_CHANNELS, ..obj.backbone.clone() }, ..obj.clone() };
        assert_eq!(D_INS_CHANNELS, 5);
        let po = obj.init::<f32>(0).unwrap();
        let pi = ins.init::<f32>(0).unwrap();
        let x1 = random_input(&[3, 1, 32, 32], 1);
        let x5 = random_input(&[3, 5, 32, 32], 1);
        let lo = mask_disc_forward(&po, &x1).unwrap();
        assert_eq!(lo.shape(), &[3, 1]);
        assert!(lo.is_finite());
        assert!(lo.bit_eq(&mask_disc_forward(&po, &x1).unwrap()));
        assert_eq!(mask_disc_forward(&pi, &x5).unwrap().shape(), &[3, 1]);
        assert!(mask_disc_forward(&po, &x5).is_err());
        assert!(mask_disc_forward(&po, &random_input(&[1, 1, 16, 16], 0)).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(GeneratorConfig { in_channels: 0, ..small_gen() }.init::<f32>(0).is_err());
        assert!(GeneratorConfig { res_blocks: 0, ..small_gen() }.init::<f32>(0).is_err());
        let bad = MaskDiscConfig { backbone: PatchDiscConfig::standard(1), input_size: 8 };
        assert!(bad.init::<f32>(0).is_err());
    }
}
