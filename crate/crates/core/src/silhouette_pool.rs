//! Pool of binary vehicle silhouettes used as extra adversarial samples.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{MaskTensor, Sized2d};
use crate::synth_data::shapes::VehiclePose;

/// Default pool size for procedural pools.
pub const DEFAULT_POOL_SIZE: usize = 2048;
pub const POOL_INDEX: &str = "pool.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Procedural,
    Imported,
}

/// Scale and shift jitter applied when fitting a silhouette to a reference box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignJitter {
    /// Scale factor drawn from `[1 - scale, 1 + scale]`.
    pub scale: f64,
    /// Shift drawn from `[-shift, shift]` times the box size.
    pub shift: f64,
}

impl Default for AlignJitter {
    fn default() -> Self {
        Self { scale: 0.1, shift: 0.1 }
    }
}

impl AlignJitter {
    pub const NONE: Self = Self { scale: 0.0, shift: 0.0 };
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SilhouettePool {
    silhouettes: Vec<MaskTensor>,
    tags: Vec<SourceTag>,
}

impl SilhouettePool {
    /// Pool from tight-cropped binary silhouettes.
    pub fn from_entries(entries: Vec<(MaskTensor, SourceTag)>) -> Result<Self> {
        let mut pool = Self::default();
        for (m, tag) in entries {
            m.require_binary("silhouette")?;
            let tight = m.tight_crop().ok_or_else(|| Error::InvalidInput("silhouette is empty".into()))?;
            if !tight.bit_eq(&m) {
                return Err(Error::InvalidInput("silhouette is not tight-cropped".into()));
            }
            pool.silhouettes.push(m);
            pool.tags.push(tag);
        }
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.silhouettes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.silhouettes.is_empty()
    }

    pub fn silhouettes(&self) -> &[MaskTensor] {
        &self.silhouettes
    }

    pub fn tags(&self) -> &[SourceTag] {
        &self.tags
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.tags == other.tags && self.len() == other.len() && self.silhouettes.iter().zip(&other.silhouettes).all(|(a, b)| a.bit_eq(b))
    }
}

/// Tight-cropped silhouette of a random procedural vehicle rendered in a `side x side` frame.
pub fn procedural_silhouette(rng: &mut impl Rng, side: usize) -> MaskTensor {
    loop {
        let pose = VehiclePose::random(rng, side, (0.6, 0.9));
        let m = MaskTensor::from_fn(side, side, |r, c| pose.part_at(r as f64 + 0.5, c as f64 + 0.5).is_some());
        if let Some(t) = m.tight_crop() {
            return t;
        }
    }
}

fn fill_ratio(m: &MaskTensor) -> f64 {
    m.count() as f64 / (m.height() * m.width()) as f64
}

/// `n` distinct procedural silhouettes, deterministic in `(n, seed)`.
pub fn build_procedural_pool(n: usize, seed: u64) -> Result<SilhouettePool> {
    if n < 1 {
        return Err(Error::InvalidInput("pool size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut pool = SilhouettePool::default();
    while pool.len() < n {
        let m = procedural_silhouette(&mut rng, 64);
        let fill = fill_ratio(&m);
        if !(fill > 0.2 && fill < 0.95) {
            continue;
        }
        let key: (usize, usize, Vec<bool>) = (m.height(), m.width(), m.data().iter().map(|&v| v >= 0.5).collect());
        if seen.insert(key) {
            pool.silhouettes.push(m);
            pool.tags.push(SourceTag::Procedural);
        }
    }
    Ok(pool)
}

/// Result of importing a directory of grayscale renders.
#[derive(Debug)]
pub struct ImportOutcome {
    pub pool: SilhouettePool,
    /// Files whose foreground was empty after thresholding.
    pub skipped: Vec<PathBuf>,
}

/// Threshold dark-on-light renders at 0.5, keep the largest 8-connected component, tight-crop.
pub fn import_silhouettes(dir: &Path) -> Result<ImportOutcome> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidInput(format!("no png images in {}", dir.display())));
    }
    let mut pool = SilhouettePool::default();
    let mut skipped = Vec::new();
    for path in files {
        let gray = MaskTensor::read_png(&path)?;
        match silhouette_from_gray(&gray) {
            Some(m) => {
                pool.silhouettes.push(m);
                pool.tags.push(SourceTag::Imported);
            }
            None => {
                log::warn!("skipping {}: empty foreground", path.display());
                skipped.push(path);
            }
        }
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(ImportOutcome { pool, skipped })
}

/// Foreground is darker than 0.5; returns the tight crop of the largest component.
pub fn silhouette_from_gray(gray: &MaskTensor) -> Option<MaskTensor> {
    let (h, w) = gray.dims();
    let fg: Vec<bool> = gray.data().iter().map(|&v| v < 0.5).collect();
    let mut label = vec![0usize; h * w];
    let mut best = (0usize, 0usize);
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !fg[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if fg[j] && label[j] == 0 {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
        if size > best.1 {
            best = (next, size);
        }
    }
    if best.1 == 0 {
        return None;
    }
    MaskTensor::from_fn(h, w, |r, c| label[r * w + c] == best.0).tight_crop()
}

/// An aligned draw together with the pool index it came from.
#[derive(Clone, Debug)]
pub struct AlignedSample {
    pub index: usize,
    pub mask: MaskTensor,
}

/// Draw a silhouette uniformly and fit it to the reference mask's bounding box with default jitter.
pub fn sample_aligned(pool: &SilhouettePool, reference: &MaskTensor, rng_seed: u64) -> Result<MaskTensor> {
    Ok(sample_aligned_with(pool, reference, rng_seed, AlignJitter::default())?.mask)
}

pub fn sample_aligned_with(pool: &SilhouettePool, reference: &MaskTensor, rng_seed: u64, jitter: AlignJitter) -> Result<AlignedSample> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let bb = reference.bbox().ok_or(Error::EmptyReference)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let index = rng.random_range(0..pool.len());
    let sil = &pool.silhouettes[index];
    let mut draw = |amp: f64| if amp > 0.0 { rng.random_range(-amp..=amp) } else { 0.0 };
    let scale = 1.0 + draw(jitter.scale);
    let (bh, bw) = (bb.height() as f64, bb.width() as f64);
    let dy = draw(jitter.shift) * bh;
    let dx = draw(jitter.shift) * bw;
    let (th, tw) = (bh * scale, bw * scale);
    let top = bb.r0 as f64 + bh / 2.0 + dy - th / 2.0;
    let left = bb.c0 as f64 + bw / 2.0 + dx - tw / 2.0;
    let (h, w) = reference.dims();
    let (sh, sw) = sil.dims();
    let mask = MaskTensor::from_fn(h, w, |r, c| {
        let v = (r as f64 + 0.5 - top) / th;
        let u = (c as f64 + 0.5 - left) / tw;
        if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&v) {
            return false;
        }
        sil.is_set(((v * sh as f64) as usize).min(sh - 1), ((u * sw as f64) as usize).min(sw - 1))
    });
    Ok(AlignedSample { index, mask })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolRecord {
    file: String,
    tag: SourceTag,
}

/// Write the pool as `masks/<index>.png` plus an index file.
pub fn write_pool(pool: &SilhouettePool, dir: &Path) -> Result<PathBuf> {
    let masks = dir.join("masks");
    fs::create_dir_all(&masks).map_err(|e| Error::io(&masks, e))?;
    let mut index = Vec::new();
    for (i, (m, tag)) in pool.silhouettes.iter().zip(&pool.tags).enumerate() {
        let rel = format!("masks/{i:06}.png");
        m.write_png(&dir.join(&rel))?;
        serde_json::to_writer(&mut index, &PoolRecord { file: rel, tag: *tag })?;
        index.push(b'\n');
    }
    let path = dir.join(POOL_INDEX);
    fs::File::create(&path).and_then(|mut f| f.write_all(&index)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_pool(index: &Path) -> Result<SilhouettePool> {
    if !index.exists() {
        return Err(Error::MissingArtifact(index.to_path_buf()));
    }
    let root = index.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(index).map_err(|e| Error::io(index, e))?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: PoolRecord = serde_json::from_str(line).map_err(|e| Error::Corrupt { what: format!("pool index line {}", n + 1), reason: e.to_string() })?;
        let path = root.join(&rec.file);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        entries.push((MaskTensor::read_png(&path)?, rec.tag));
    }
    SilhouettePool::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(cr: f64, cc: f64, radius: f64) -> impl Fn(usize, usize) -> bool {
        move |r, c| (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2) <= radius * radius
    }

    fn is_tight(m: &MaskTensor) -> bool {
        m.bbox().is_some_and(|b| b.r0 == 0 && b.c0 == 0 && b.r1 == m.height() - 1 && b.c1 == m.width() - 1)
    }

    #[test]
    fn single_entry_pool() {
        let pool = build_procedural_pool(1, 0).unwrap();
        assert_eq!(pool.len(), 1);
        assert!(pool.silhouettes()[0].is_binary());
        assert!(is_tight(&pool.silhouettes()[0]));
        assert!(build_procedural_pool(0, 0).is_err());
    }

    #[test]
    fn pools_are_deterministic_and_distinct() {
        let a = build_procedural_pool(100, 3).unwrap();
        assert!(a.bit_eq(&build_procedural_pool(100, 3).unwrap()));
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert!(!a.silhouettes()[i].bit_eq(&a.silhouettes()[j]));
            }
        }
    }

    #[test]
    fn fill_ratio_within_bounds() {
        let pool = build_procedural_pool(50, 1).unwrap();
        for m in pool.silhouettes() {
            let set = m.data().iter().filter(|&&v| v == 1.0).count() as f64;
            let fill = set / (m.height() * m.width()) as f64;
            assert!(fill > 0.2 && fill < 0.95, "{fill}");
            assert!(is_tight(m));
        }
    }

    fn gray_image(dir: &Path, name: &str, h: usize, w: usize, fg: impl Fn(usize, usize) -> bool) {
        let data = (0..h * w).map(|i| if fg(i / w, i % w) { 0.1 } else { 0.9 }).collect();
        MaskTensor::new(h, w, data).unwrap().write_png(&dir.join(name)).unwrap();
    }

    #[test]
    fn import_disc_and_largest_blob() {
        let dir = tempfile::tempdir().unwrap();
        gray_image(dir.path(), "a.png", 32, 32, disc(15.0, 16.0, 6.0));
        let out = import_silhouettes(dir.path()).unwrap();
        assert_eq!(out.pool.len(), 1);
        assert_eq!(out.pool.tags()[0], SourceTag::Imported);
        let expected = MaskTensor::from_fn(32, 32, disc(15.0, 16.0, 6.0)).tight_crop().unwrap();
        assert!(out.pool.silhouettes()[0].bit_eq(&expected));

        // Blobs of 100 and 25 pixels: squares 10x10 and 5x5.
        let dir2 = tempfile::tempdir().unwrap();
        gray_image(dir2.path(), "b.png", 32, 32, |r, c| (r < 10 && c < 10) || ((20..25).contains(&r) && (20..25).contains(&c)));
        let out = import_silhouettes(dir2.path()).unwrap();
        let m = &out.pool.silhouettes()[0];
        assert_eq!(m.count(), 100);
        assert_eq!(m.dims(), (10, 10));
    }

    #[test]
    fn all_white_image_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        gray_image(dir.path(), "blank.png", 16, 16, |_, _| false);
        assert!(matches!(import_silhouettes(dir.path()), Err(Error::EmptyPool)));
        gray_image(dir.path(), "disc.png", 16, 16, disc(8.0, 8.0, 4.0));
        let out = import_silhouettes(dir.path()).unwrap();
        assert_eq!(out.pool.len(), 1);
        assert_eq!(out.skipped.len(), 1);
        let empty = tempfile::tempdir().unwrap();
        assert!(import_silhouettes(empty.path()).is_err());
    }

    #[test]
    fn unjittered_fit_to_full_frame_is_nearest_rescale() {
        let pool = build_procedural_pool(1, 5).unwrap();
        let sil = &pool.silhouettes()[0];
        let reference = MaskTensor::from_fn(64, 64, |_, _| true);
        let got = sample_aligned_with(&pool, &reference, 9, AlignJitter::NONE).unwrap();
        let (sh, sw) = sil.dims();
        let expected = MaskTensor::from_fn(64, 64, |r, c| sil.is_set((r * 2 + 1) * sh / 128, (c * 2 + 1) * sw / 128));
        assert!(got.mask.bit_eq(&expected));
    }

    #[test]
    fn draws_are_deterministic_and_uniform() {
        let pool = build_procedural_pool(10, 2).unwrap();
        let reference = MaskTensor::from_fn(64, 64, |r, c| (16..40).contains(&r) && (8..56).contains(&c));
        let a = sample_aligned(&pool, &reference, 77).unwrap();
        assert!(a.bit_eq(&sample_aligned(&pool, &reference, 77).unwrap()));
        let mut counts = [0usize; 10];
        for seed in 0..1000 {
            counts[sample_aligned_with(&pool, &reference, seed, AlignJitter::default()).unwrap().index] += 1;
        }
        assert!(counts.iter().all(|&n| (60..=140).contains(&n)), "{counts:?}");
    }

    #[test]
    fn aligned_box_overlaps_reference() {
        let pool = build_procedural_pool(20, 4).unwrap();
        let reference = MaskTensor::from_fn(64, 64, |r, c| (20..44).contains(&r) && (10..54).contains(&c));
        let rb = reference.bbox().unwrap();
        for seed in 0..200 {
            let m = sample_aligned(&pool, &reference, seed).unwrap();
            assert!(m.is_binary());
            assert!(m.bbox().unwrap().iou(&rb) >= 0.5);
        }
    }

    #[test]
    fn errors_on_empty_inputs() {
        let pool = build_procedural_pool(2, 0).unwrap();
        assert!(matches!(sample_aligned(&pool, &MaskTensor::zeros(8, 8), 0), Err(Error::EmptyReference)));
        let empty = SilhouettePool::default();
        assert!(matches!(sample_aligned(&empty, &MaskTensor::from_fn(8, 8, |_, _| true), 0), Err(Error::EmptyPool)));
    }

    #[test]
    fn pool_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pool = build_procedural_pool(12, 8).unwrap();
        let index = write_pool(&pool, dir.path()).unwrap();
        assert!(read_pool(&index).unwrap().bit_eq(&pool));
    }
}
