//! Deterministic synthetic occluded-vehicle samples.
//!
//! Each sample is a procedural vehicle painted over a procedural background,
//! partially covered by alpha-composited occluders whose joint scale is
//! bisected until the occluded fraction of the vehicle lands in the
//! configured range.

mod dataset;
pub mod shapes;

pub use dataset::{read_dataset, write_dataset, MANIFEST_NAME};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{quantize, ImageTensor, MaskTensor, Sized2d};
use crate::silhouette_pool::{procedural_silhouette, SilhouettePool};
use shapes::{random_color, OccluderShape, Part, VehiclePose};

/// Placement retries before a configuration is declared infeasible.
pub const MAX_ATTEMPTS: usize = 64;
const BISECTION_STEPS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    ProceduralCar,
    /// Vehicles stretched from silhouettes of a caller-supplied pool.
    Imported,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub image_size: usize,
    pub occluder_count_range: [usize; 2],
    pub occlusion_fraction_range: [f64; 2],
    pub color_jitter_strength: f64,
    pub vehicle_shape_family: ShapeFamily,
    /// Vehicle length as a fraction of the image side.
    pub vehicle_length_range: [f64; 2],
    /// Amplitude of per-pixel uniform texture noise.
    pub texture_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            occluder_count_range: [1, 3],
            occlusion_fraction_range: [0.1, 0.5],
            color_jitter_strength: 0.1,
            vehicle_shape_family: ShapeFamily::ProceduralCar,
            vehicle_length_range: [0.55, 0.85],
            texture_noise: 0.02,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if ![64, 128, 256].contains(&self.image_size) {
            return bad(format!("image_size must be 64, 128 or 256, got {}", self.image_size));
        }
        let [cmin, cmax] = self.occluder_count_range;
        if cmin == 0 || cmin > cmax {
            return bad(format!("occluder_count_range must satisfy 1 <= min <= max, got [{cmin}, {cmax}]"));
        }
        let [lo, hi] = self.occlusion_fraction_range;
        if !(0.05..=0.8).contains(&lo) || !(0.05..=0.8).contains(&hi) || lo > hi {
            return bad(format!("occlusion_fraction_range must be ordered within [0.05, 0.8], got [{lo}, {hi}]"));
        }
        if !(0.0..=1.0).contains(&self.color_jitter_strength) {
            return bad(format!("color_jitter_strength must lie in [0, 1], got {}", self.color_jitter_strength));
        }
        let [l0, l1] = self.vehicle_length_range;
        if !(l0 > 0.1 && l0 <= l1 && l1 <= 0.95) {
            return bad(format!("vehicle_length_range must be ordered within (0.1, 0.95], got [{l0}, {l1}]"));
        }
        if !(0.0..=0.2).contains(&self.texture_noise) {
            return bad(format!("texture_noise must lie in [0, 0.2], got {}", self.texture_noise));
        }
        Ok(())
    }

    /// Seed of the per-sample stream: SHA-256 of the canonical config and the sample seed.
    fn stream(&self, seed: u64) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        h.update(seed.to_le_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(key)
    }
}

/// One supervised instance.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub sample_id: String,
    /// `None` for ingested real data.
    pub seed: Option<u64>,
    /// Body archetype of procedural vehicles.
    pub vehicle_class: Option<usize>,
    pub image_occluded: ImageTensor,
    pub visible_mask: MaskTensor,
    pub full_mask: MaskTensor,
    pub target_unoccluded: ImageTensor,
    pub background_plate: ImageTensor,
    pub occlusion_fraction: f64,
}

impl TrainingSample {
    /// Validated assembly; the occlusion fraction is recomputed from the masks.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sample_id: impl Into<String>,
        seed: Option<u64>,
        vehicle_class: Option<usize>,
        image_occluded: ImageTensor,
        visible_mask: MaskTensor,
        full_mask: MaskTensor,
        target_unoccluded: ImageTensor,
        background_plate: ImageTensor,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        let fail = |reason: String| Error::Sample { sample_id: sample_id.clone(), reason };
        let dims = image_occluded.dims();
        if visible_mask.dims() != dims || full_mask.dims() != dims || target_unoccluded.dims() != dims || background_plate.dims() != dims {
            return Err(fail("images and masks differ in size".into()));
        }
        if !visible_mask.is_binary() || !full_mask.is_binary() {
            return Err(fail("masks must be binary".into()));
        }
        if !visible_mask.is_subset_of(&full_mask) {
            return Err(fail("visible mask extends past the full mask".into()));
        }
        let full = full_mask.count();
        let visible = visible_mask.count();
        if full > 0 && visible == 0 {
            return Err(fail("vehicle is fully occluded".into()));
        }
        let occlusion_fraction = if full == 0 { 0.0 } else { 1.0 - visible as f64 / full as f64 };
        Ok(Self { sample_id, seed, vehicle_class, image_occluded, visible_mask, full_mask, target_unoccluded, background_plate, occlusion_fraction })
    }

    pub fn size(&self) -> (usize, usize) {
        self.image_occluded.dims()
    }

    /// Invisible ground-truth region `M^gt AND NOT M̂`.
    pub fn invisible_region(&self) -> MaskTensor {
        self.full_mask.minus(&self.visible_mask).expect("validated sizes")
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.sample_id == other.sample_id
            && self.seed == other.seed
            && self.vehicle_class == other.vehicle_class
            && self.occlusion_fraction.to_bits() == other.occlusion_fraction.to_bits()
            && self.image_occluded.bit_eq(&other.image_occluded)
            && self.visible_mask.bit_eq(&other.visible_mask)
            && self.full_mask.bit_eq(&other.full_mask)
            && self.target_unoccluded.bit_eq(&other.target_unoccluded)
            && self.background_plate.bit_eq(&other.background_plate)
    }
}

/// A sample together with the union of occluder footprints that produced it.
#[derive(Clone, Debug)]
pub struct TracedSample {
    pub sample: TrainingSample,
    pub occluder_union: MaskTensor,
}

/// RGB patch with per-pixel alpha, anchored anywhere relative to a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbaPatch {
    pub height: usize,
    pub width: usize,
    /// Row-major `H x W x 3`.
    pub rgb: Vec<f32>,
    /// Row-major `H x W`, values in `[0, 1]`.
    pub alpha: Vec<f32>,
}

impl RgbaPatch {
    pub fn new(height: usize, width: usize, rgb: Vec<f32>, alpha: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || rgb.len() != height * width * 3 || alpha.len() != height * width {
            return Err(Error::shape(format!("rgba patch {height}x{width} has {} rgb and {} alpha values", rgb.len(), alpha.len())));
        }
        if rgb.iter().chain(&alpha).any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("rgba patch values must lie in [0, 1]".into()));
        }
        Ok(Self { height, width, rgb, alpha })
    }

    pub fn solid(height: usize, width: usize, rgb: [f32; 3], alpha: f32) -> Result<Self> {
        Self::new(height, width, (0..height * width).flat_map(|_| rgb).collect(), vec![alpha; height * width])
    }
}

/// Alpha-composite `patch` with its top-left corner at `position` (may be negative).
///
/// Returns the composited image and the footprint mask of pixels with `alpha > 0`.
pub fn composite_occluder(base: &ImageTensor, patch: &RgbaPatch, position: (isize, isize)) -> Result<(ImageTensor, MaskTensor)> {
    let (h, w) = base.dims();
    let r0 = position.0.max(0);
    let c0 = position.1.max(0);
    let r1 = (position.0 + patch.height as isize).min(h as isize);
    let c1 = (position.1 + patch.width as isize).min(w as isize);
    if r0 >= r1 || c0 >= c1 {
        return Err(Error::OccluderOutsideFrame);
    }
    let mut out = base.data().to_vec();
    let mut footprint = MaskTensor::zeros(h, w);
    for r in r0..r1 {
        for c in c0..c1 {
            let pr = (r - position.0) as usize;
            let pc = (c - position.1) as usize;
            let a = patch.alpha[pr * patch.width + pc];
            if a <= 0.0 {
                continue;
            }
            let (r, c) = (r as usize, c as usize);
            footprint.set(r, c, true);
            for k in 0..3 {
                let i = (r * w + c) * 3 + k;
                let p = patch.rgb[(pr * patch.width + pc) * 3 + k];
                out[i] = if a >= 1.0 { p } else { a * p + (1.0 - a) * out[i] };
            }
        }
    }
    Ok((ImageTensor::new(h, w, out)?, footprint))
}

/// `full_mask AND NOT occluder_union`.
pub fn visible_mask_of(full_mask: &MaskTensor, occluder_union: &MaskTensor) -> Result<MaskTensor> {
    full_mask.require_same(occluder_union, "visible mask operands")?;
    full_mask.require_binary("full mask")?;
    occluder_union.require_binary("occluder union")?;
    full_mask.minus(occluder_union)
}

pub fn generate_sample(cfg: &SynthConfig, seed: u64) -> Result<TrainingSample> {
    Ok(generate_sample_traced(cfg, seed, None)?.sample)
}

/// Generate one sample; `pool` supplies vehicle shapes for [`ShapeFamily::Imported`].
pub fn generate_sample_traced(cfg: &SynthConfig, seed: u64, pool: Option<&SilhouettePool>) -> Result<TracedSample> {
    cfg.validate()?;
    if cfg.vehicle_shape_family == ShapeFamily::Imported && pool.is_none_or(|p| p.is_empty()) {
        return Err(Error::InvalidConfig("the imported shape family needs a nonempty silhouette pool".into()));
    }
    let mut rng = cfg.stream(seed);
    let [lo, hi] = cfg.occlusion_fraction_range;
    for _ in 0..MAX_ATTEMPTS {
        if let Some(traced) = attempt(cfg, seed, pool, &mut rng)? {
            let f = traced.sample.occlusion_fraction;
            if f >= lo && f <= hi {
                return Ok(traced);
            }
        }
    }
    Err(Error::InfeasibleOcclusion { lo, hi, attempts: MAX_ATTEMPTS, seed })
}

/// `count` samples with seeds `base_seed..base_seed + count`, generated in parallel.
pub fn generate_dataset(cfg: &SynthConfig, base_seed: u64, count: usize) -> Result<Vec<TrainingSample>> {
    (0..count as u64).into_par_iter().map(|i| generate_sample(cfg, base_seed + i)).collect()
}

pub fn sample_id_for(seed: u64) -> String {
    format!("syn{seed:08}")
}

struct Vehicle {
    class: Option<usize>,
    mask: MaskTensor,
    /// Per-pixel colors inside the mask, row-major `H x W x 3`.
    rgb: Vec<f32>,
}

fn attempt(cfg: &SynthConfig, seed: u64, pool: Option<&SilhouettePool>, rng: &mut ChaCha8Rng) -> Result<Option<TracedSample>> {
    let s = cfg.image_size;
    let background = render_background(s, cfg.texture_noise as f32, rng);
    let vehicle = match cfg.vehicle_shape_family {
        ShapeFamily::ProceduralCar => render_procedural_vehicle(cfg, rng),
        ShapeFamily::Imported => render_imported_vehicle(cfg, pool.expect("checked"), rng),
    };
    let full = vehicle.mask.count();
    if full < 16 {
        return Ok(None);
    }
    let mut target = background.clone();
    for i in 0..s * s {
        if vehicle.mask.data()[i] >= 0.5 {
            target[i * 3..i * 3 + 3].copy_from_slice(&vehicle.rgb[i * 3..i * 3 + 3]);
        }
    }
    let target = ImageTensor::new(s, s, target)?;
    let background = ImageTensor::new(s, s, background)?;

    let goal = rng.random_range(cfg.occlusion_fraction_range[0]..=cfg.occlusion_fraction_range[1]);
    let n = rng.random_range(cfg.occluder_count_range[0]..=cfg.occluder_count_range[1]);
    let bb = vehicle.mask.bbox().expect("nonempty");
    let extent = bb.height().max(bb.width()) as f64;
    let set: Vec<(usize, usize)> = (0..s * s).filter(|&i| vehicle.mask.data()[i] >= 0.5).map(|i| (i / s, i % s)).collect();
    let mut occluders = Vec::with_capacity(n);
    for _ in 0..n {
        let (pr, pc) = set[rng.random_range(0..set.len())];
        let center = (pr as f64 + 0.5, pc as f64 + 0.5);
        let r = rng.random_range(0.15..0.4) * extent;
        occluders.push(random_occluder(center, r, rng));
    }

    let coverage = |scale: f64| -> (MaskTensor, f64) {
        let union = occluder_union(&occluders, s, scale);
        let hidden = vehicle.mask.intersect(&union).expect("same size").count();
        (union, hidden as f64 / full as f64)
    };
    let mut lo_s = 0.0;
    let mut hi_s = 1.0;
    while coverage(hi_s).1 < goal {
        hi_s *= 2.0;
        if hi_s > 16.0 {
            return Ok(None);
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo_s + hi_s);
        if coverage(mid).1 < goal {
            lo_s = mid;
        } else {
            hi_s = mid;
        }
    }
    let (lo_frac, hi_frac) = (coverage(lo_s).1, coverage(hi_s).1);
    let scale = if (goal - lo_frac).abs() <= (hi_frac - goal).abs() && lo_frac > 0.0 { lo_s } else { hi_s };

    let mut image = target.clone();
    let mut union = MaskTensor::zeros(s, s);
    for occ in &occluders {
        let Some((patch, pos)) = occluder_patch(occ, scale, cfg, rng) else { continue };
        match composite_occluder(&image, &patch, pos) {
            Ok((next, footprint)) => {
                image = next;
                union = union.union(&footprint)?;
            }
            Err(Error::OccluderOutsideFrame) => continue,
            Err(e) => return Err(e),
        }
    }
    let visible = visible_mask_of(&vehicle.mask, &union)?;
    if visible.count() == 0 {
        return Ok(None);
    }
    let sample = TrainingSample::new(sample_id_for(seed), Some(seed), vehicle.class, image, visible, vehicle.mask, target, background)?;
    Ok(Some(TracedSample { sample, occluder_union: union }))
}

fn noise(rng: &mut ChaCha8Rng, amp: f32) -> f32 {
    if amp > 0.0 {
        rng.random_range(-amp..=amp)
    } else {
        0.0
    }
}

fn push_pixel(buf: &mut Vec<f32>, rgb: [f32; 3], n: f32) {
    buf.extend(rgb.map(|v| quantize(v + n)));
}

/// Sky gradient over ground with a few block buildings on the horizon.
fn render_background(s: usize, amp: f32, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let horizon = (rng.random_range(0.4..0.65) * s as f64) as usize;
    let sky_top = random_color(rng, 0.45, 0.9);
    let sky_low = random_color(rng, 0.6, 1.0);
    let ground = random_color(rng, 0.2, 0.55);
    let buildings: Vec<(usize, usize, usize, [f32; 3])> = (0..rng.random_range(1..5))
        .map(|_| {
            let c0 = rng.random_range(0..s);
            let w = rng.random_range(s / 10..s / 3);
            let top = horizon.saturating_sub(rng.random_range(s / 10..s / 3));
            (c0, (c0 + w).min(s), top, random_color(rng, 0.25, 0.75))
        })
        .collect();
    let mut buf = Vec::with_capacity(s * s * 3);
    for r in 0..s {
        for c in 0..s {
            let rgb = if r >= horizon {
                ground
            } else if let Some(b) = buildings.iter().find(|b| c >= b.0 && c < b.1 && r >= b.2) {
                b.3
            } else {
                let t = r as f32 / horizon.max(1) as f32;
                [0, 1, 2].map(|k| sky_top[k] * (1.0 - t) + sky_low[k] * t)
            };
            let n = noise(rng, amp);
            push_pixel(&mut buf, rgb, n);
        }
    }
    buf
}

fn render_procedural_vehicle(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vehicle {
    let s = cfg.image_size;
    let [l0, l1] = cfg.vehicle_length_range;
    let pose = VehiclePose::random(rng, s, (l0, l1.max(l0 + 1e-9)));
    let amp = cfg.texture_noise as f32;
    let window = [0.12, 0.16, 0.22];
    let mut mask = MaskTensor::zeros(s, s);
    let mut rgb = vec![0.0; s * s * 3];
    for r in 0..s {
        for c in 0..s {
            let Some(part) = pose.part_at(r as f64 + 0.5, c as f64 + 0.5) else { continue };
            let base = match part {
                Part::Body => pose.body_rgb,
                Part::Window => window,
                Part::Tire => [0.06, 0.06, 0.07],
                Part::Hub => [0.62, 0.62, 0.64],
            };
            mask.set(r, c, true);
            let n = noise(rng, amp);
            let i = (r * s + c) * 3;
            for k in 0..3 {
                rgb[i + k] = quantize(base[k] + n);
            }
        }
    }
    Vehicle { class: Some(pose.class), mask, rgb }
}

fn render_imported_vehicle(cfg: &SynthConfig, pool: &SilhouettePool, rng: &mut ChaCha8Rng) -> Vehicle {
    let s = cfg.image_size;
    let sil = &pool.silhouettes()[rng.random_range(0..pool.len())];
    let [l0, l1] = cfg.vehicle_length_range;
    let width = (rng.random_range(l0..=l1) * s as f64).max(2.0);
    let height = (width * sil.height() as f64 / sil.width() as f64).clamp(2.0, s as f64 - 2.0);
    let top = rng.random_range(0.0..=(s as f64 - height));
    let left = rng.random_range(0.0..=(s as f64 - width));
    let body = random_color(rng, 0.25, 0.95);
    let amp = cfg.texture_noise as f32;
    let mut mask = MaskTensor::zeros(s, s);
    let mut rgb = vec![0.0; s * s * 3];
    for r in 0..s {
        for c in 0..s {
            let v = (r as f64 + 0.5 - top) / height;
            let u = (c as f64 + 0.5 - left) / width;
            if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&v) {
                continue;
            }
            let sr = ((v * sil.height() as f64) as usize).min(sil.height() - 1);
            let sc = ((u * sil.width() as f64) as usize).min(sil.width() - 1);
            if sil.is_set(sr, sc) {
                mask.set(r, c, true);
                let n = noise(rng, amp);
                let i = (r * s + c) * 3;
                for k in 0..3 {
                    rgb[i + k] = quantize(body[k] + n);
                }
            }
        }
    }
    Vehicle { class: None, mask, rgb }
}

fn random_occluder(center: (f64, f64), r: f64, rng: &mut ChaCha8Rng) -> OccluderShape {
    match rng.random_range(0..3) {
        0 => OccluderShape::Ellipse { center, radii: (r * rng.random_range(0.5..1.0), r * rng.random_range(0.5..1.0)), angle: rng.random_range(0.0..std::f64::consts::PI) },
        1 => {
            let n = rng.random_range(5..9);
            OccluderShape::Polygon { center, radii: (0..n).map(|_| r * rng.random_range(0.6..1.0)).collect(), phase: rng.random_range(0.0..std::f64::consts::TAU) }
        }
        _ => {
            let mask = procedural_silhouette(rng, 48);
            let aspect = mask.height() as f64 / mask.width() as f64;
            OccluderShape::Silhouette { center, half: (r * aspect, r), mask }
        }
    }
}

fn occluder_union(occluders: &[OccluderShape], s: usize, scale: f64) -> MaskTensor {
    let mut union = MaskTensor::zeros(s, s);
    for occ in occluders {
        let (r0, c0, r1, c1) = occ.pixel_bounds(scale);
        for r in r0.max(0)..=r1.min(s as isize - 1) {
            for c in c0.max(0)..=c1.min(s as isize - 1) {
                let (r, c) = (r as usize, c as usize);
                if !union.is_set(r, c) && occ.contains(r as f64 + 0.5, c as f64 + 0.5, scale) {
                    union.set(r, c, true);
                }
            }
        }
    }
    union
}

/// Render one occluder as a jittered RGBA patch and its frame position.
fn occluder_patch(occ: &OccluderShape, scale: f64, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Option<(RgbaPatch, (isize, isize))> {
    let (r0, c0, r1, c1) = occ.pixel_bounds(scale);
    let (h, w) = ((r1 - r0 + 1) as usize, (c1 - c0 + 1) as usize);
    let base = random_color(rng, 0.05, 0.95);
    let j = cfg.color_jitter_strength as f32;
    let brightness = noise(rng, j);
    let contrast = 1.0 + noise(rng, j);
    let amp = cfg.texture_noise as f32;
    let mut rgb = Vec::with_capacity(h * w * 3);
    let mut alpha = Vec::with_capacity(h * w);
    for pr in 0..h {
        for pc in 0..w {
            let (r, c) = ((r0 + pr as isize) as f64 + 0.5, (c0 + pc as isize) as f64 + 0.5);
            if occ.contains(r, c, scale) {
                let n = noise(rng, amp);
                rgb.extend(base.map(|v| quantize((v + n - 0.5) * contrast + 0.5 + brightness)));
                alpha.push(1.0);
            } else {
                rgb.extend([0.0; 3]);
                alpha.push(0.0);
            }
        }
    }
    if alpha.iter().all(|&a| a == 0.0) {
        return None;
    }
    Some((RgbaPatch::new(h, w, rgb, alpha).ok()?, (r0, c0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SynthConfig {
        SynthConfig::default()
    }

    #[test]
    fn same_seed_gives_identical_samples() {
        let a = generate_sample(&cfg(), 7).unwrap();
        let b = generate_sample(&cfg(), 7).unwrap();
        assert!(a.bit_eq(&b));
        let c = generate_sample(&cfg(), 8).unwrap();
        assert!(!a.bit_eq(&c));
    }

    #[test]
    fn occlusion_fraction_is_in_range_by_pixel_count() {
        let cfg = SynthConfig { occlusion_fraction_range: [0.2, 0.4], ..cfg() };
        for seed in 0..20 {
            let s = generate_sample(&cfg, seed).unwrap();
            let full = s.full_mask.data().iter().filter(|&&v| v == 1.0).count() as f64;
            let vis = s.visible_mask.data().iter().filter(|&&v| v == 1.0).count() as f64;
            let f = 1.0 - vis / full;
            assert!((0.2..=0.4).contains(&f), "seed {seed}: {f}");
            assert_eq!(f, s.occlusion_fraction);
        }
    }

    #[test]
    fn sample_invariants_hold() {
        for size in [64, 128] {
            let cfg = SynthConfig { image_size: size, ..cfg() };
            for seed in 0..6 {
                let t = generate_sample_traced(&cfg, seed, None).unwrap();
                let s = &t.sample;
                assert!(s.visible_mask.is_subset_of(&s.full_mask));
                for r in 0..size {
                    for c in 0..size {
                        if !t.occluder_union.is_set(r, c) {
                            assert_eq!(s.image_occluded.pixel(r, c), s.target_unoccluded.pixel(r, c));
                        }
                        if !s.full_mask.is_set(r, c) {
                            assert_eq!(s.background_plate.pixel(r, c), s.target_unoccluded.pixel(r, c));
                        }
                        assert_eq!(s.visible_mask.is_set(r, c), s.full_mask.is_set(r, c) && !t.occluder_union.is_set(r, c));
                    }
                }
                assert!(s.visible_mask.count() > 0);
            }
        }
    }

    #[test]
    fn zero_alpha_leaves_base_untouched() {
        let base = ImageTensor::filled(8, 8, [0.3, 0.4, 0.5]).unwrap();
        let patch = RgbaPatch::solid(4, 4, [1.0; 3], 0.0).unwrap();
        let (out, fp) = composite_occluder(&base, &patch, (2, 2)).unwrap();
        assert!(out.bit_eq(&base));
        assert_eq!(fp.count(), 0);
    }

    #[test]
    fn opaque_corner_patch_sets_four_pixels() {
        let base = ImageTensor::filled(8, 8, [0.0; 3]).unwrap();
        let patch = RgbaPatch::solid(2, 2, [1.0; 3], 1.0).unwrap();
        let (out, fp) = composite_occluder(&base, &patch, (0, 0)).unwrap();
        let ones = out.data().chunks(3).filter(|p| p.iter().all(|&v| v == 1.0)).count();
        assert_eq!(ones, 4);
        assert_eq!(out.data().iter().filter(|&&v| v != 0.0).count(), 12);
        assert_eq!(fp.count(), 4);
    }

    #[test]
    fn footprint_counts_positive_alpha_after_clipping() {
        let base = ImageTensor::filled(8, 8, [0.2; 3]).unwrap();
        let alpha: Vec<f32> = (0..16).map(|i| if i % 3 == 0 { 0.0 } else { 0.5 }).collect();
        let patch = RgbaPatch::new(4, 4, vec![0.9; 48], alpha.clone()).unwrap();
        let (_, fp) = composite_occluder(&base, &patch, (-1, 6)).unwrap();
        let expected = (1..4).flat_map(|r| (0..2).map(move |c| r * 4 + c)).filter(|&i| alpha[i] > 0.0).count();
        assert_eq!(fp.count(), expected);
    }

    #[test]
    fn occluder_outside_frame_is_an_error() {
        let base = ImageTensor::filled(8, 8, [0.2; 3]).unwrap();
        let patch = RgbaPatch::solid(2, 2, [1.0; 3], 1.0).unwrap();
        assert!(matches!(composite_occluder(&base, &patch, (8, 0)), Err(Error::OccluderOutsideFrame)));
        assert!(matches!(composite_occluder(&base, &patch, (-2, -2)), Err(Error::OccluderOutsideFrame)));
    }

    #[test]
    fn visible_mask_examples() {
        let full = MaskTensor::from_fn(8, 8, |r, c| r == 0 && c < 3);
        let none = MaskTensor::zeros(8, 8);
        assert!(visible_mask_of(&full, &none).unwrap().bit_eq(&full));
        let all = MaskTensor::from_fn(8, 8, |_, _| true);
        assert_eq!(visible_mask_of(&full, &all).unwrap().count(), 0);
        let one = MaskTensor::from_fn(8, 8, |r, c| r == 0 && c == 1);
        assert_eq!(visible_mask_of(&full, &one).unwrap().count(), 2);
        assert!(visible_mask_of(&full, &MaskTensor::zeros(8, 9)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig { image_size: 96, ..cfg() }.validate().is_err());
        assert!(SynthConfig { occluder_count_range: [3, 1], ..cfg() }.validate().is_err());
        assert!(SynthConfig { occlusion_fraction_range: [0.5, 0.2], ..cfg() }.validate().is_err());
        assert!(SynthConfig { occlusion_fraction_range: [0.01, 0.2], ..cfg() }.validate().is_err());
        let err = serde_json::from_str::<SynthConfig>(r#"{"image_size": 64, "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn narrow_infeasible_range_reports_infeasibility() {
        // A zero-width range at a fraction pixel counts cannot hit exactly.
        let cfg = SynthConfig { occlusion_fraction_range: [0.123456789, 0.123456789], ..cfg() };
        assert!(matches!(generate_sample(&cfg, 1), Err(Error::InfeasibleOcclusion { attempts: MAX_ATTEMPTS, .. })));
    }

    #[test]
    fn parallel_generation_matches_sequential() {
        let par = generate_dataset(&cfg(), 100, 6).unwrap();
        for (i, s) in par.iter().enumerate() {
            assert!(s.bit_eq(&generate_sample(&cfg(), 100 + i as u64).unwrap()));
        }
    }
}
