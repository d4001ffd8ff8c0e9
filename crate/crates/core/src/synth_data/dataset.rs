//! On-disk dataset layout: `manifest.jsonl`, `images/<id>_{occ,tgt,bg}.png`,
//! `masks/<id>_{vis,full}.png`, with a SHA-256 per file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainingSample;
use crate::error::{Error, Result};
use crate::image::{ImageTensor, MaskTensor};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

const IMAGE_KEYS: [&str; 3] = ["occ", "tgt", "bg"];
const MASK_KEYS: [&str; 2] = ["vis", "full"];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    sample_id: String,
    seed: Option<u64>,
    #[serde(default)]
    vehicle_class: Option<usize>,
    occlusion_fraction: f64,
    files: BTreeMap<String, String>,
    checksums: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(Error::Sample { sample_id: id.into(), reason: "sample ids must be nonempty [A-Za-z0-9_-]".into() });
    }
    Ok(())
}

/// Write samples under `dir` and return the manifest path.
pub fn write_dataset(samples: &[TrainingSample], dir: &Path) -> Result<PathBuf> {
    for sub in ["images", "masks"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let manifest = dir.join(MANIFEST_NAME);
    let mut out = Vec::new();
    for s in samples {
        check_id(&s.sample_id)?;
        let mut files = BTreeMap::new();
        let mut checksums = BTreeMap::new();
        let images = [&s.image_occluded, &s.target_unoccluded, &s.background_plate];
        for (key, img) in IMAGE_KEYS.iter().zip(images) {
            let rel = format!("images/{}_{key}.png", s.sample_id);
            img.write_png(&dir.join(&rel))?;
            checksums.insert(key.to_string(), sha256_file(&dir.join(&rel))?);
            files.insert(key.to_string(), rel);
        }
        for (key, mask) in MASK_KEYS.iter().zip([&s.visible_mask, &s.full_mask]) {
            let rel = format!("masks/{}_{key}.png", s.sample_id);
            mask.write_png(&dir.join(&rel))?;
            checksums.insert(key.to_string(), sha256_file(&dir.join(&rel))?);
            files.insert(key.to_string(), rel);
        }
        let rec = Record { sample_id: s.sample_id.clone(), seed: s.seed, vehicle_class: s.vehicle_class, occlusion_fraction: s.occlusion_fraction, files, checksums };
        serde_json::to_writer(&mut out, &rec)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(&manifest).map_err(|e| Error::io(&manifest, e))?;
    f.write_all(&out).map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

/// Load and verify every sample listed in a manifest.
pub fn read_dataset(manifest: &Path) -> Result<Vec<TrainingSample>> {
    if !manifest.exists() {
        return Err(Error::MissingArtifact(manifest.to_path_buf()));
    }
    let root = manifest.parent().unwrap_or(Path::new("."));
    let f = fs::File::open(manifest).map_err(|e| Error::io(manifest, e))?;
    let mut samples = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(manifest, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Corrupt { what: format!("manifest line {}", n + 1), reason: e.to_string() })?;
        samples.push(load_record(root, rec)?);
    }
    Ok(samples)
}

fn load_record(root: &Path, rec: Record) -> Result<TrainingSample> {
    let id = rec.sample_id.clone();
    check_id(&id)?;
    let fail = |reason: String| Error::Sample { sample_id: id.clone(), reason };
    let path_of = |key: &str| -> Result<PathBuf> {
        let rel = rec.files.get(key).ok_or_else(|| fail(format!("manifest lists no `{key}` file")))?;
        let path = root.join(rel);
        if !path.exists() {
            return Err(fail(format!("missing file {}", path.display())));
        }
        let want = rec.checksums.get(key).ok_or_else(|| fail(format!("manifest lists no `{key}` checksum")))?;
        if &sha256_file(&path)? != want {
            return Err(Error::Checksum { path });
        }
        Ok(path)
    };
    let img = |key: &str| -> Result<ImageTensor> { ImageTensor::read_png(&path_of(key)?) };
    let mask = |key: &str| -> Result<MaskTensor> { MaskTensor::read_png(&path_of(key)?) };
    let (occ, tgt, bg) = (img("occ")?, img("tgt")?, img("bg")?);
    let (vis, full) = (mask("vis")?, mask("full")?);
    let sample = TrainingSample::new(id.clone(), rec.seed, rec.vehicle_class, occ, vis, full, tgt, bg)?;
    if sample.occlusion_fraction.to_bits() != rec.occlusion_fraction.to_bits() {
        return Err(fail(format!("recorded occlusion fraction {} disagrees with masks ({})", rec.occlusion_fraction, sample.occlusion_fraction)));
    }
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth_data::{generate_dataset, SynthConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let samples = generate_dataset(&SynthConfig::default(), 0, 8).unwrap();
        let manifest = write_dataset(&samples, dir.path()).unwrap();
        let back = read_dataset(&manifest).unwrap();
        assert_eq!(back.len(), 8);
        for (a, b) in samples.iter().zip(&back) {
            assert!(a.bit_eq(b), "{} differs", a.sample_id);
        }
    }

    #[test]
    fn missing_mask_names_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        let samples = generate_dataset(&SynthConfig::default(), 3, 2).unwrap();
        let manifest = write_dataset(&samples, dir.path()).unwrap();
        let victim = &samples[1].sample_id;
        fs::remove_file(dir.path().join(format!("masks/{victim}_full.png"))).unwrap();
        let err = read_dataset(&manifest).unwrap_err();
        assert!(matches!(&err, Error::Sample { sample_id, .. } if sample_id == victim), "{err}");
    }

    #[test]
    fn tampered_file_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let samples = generate_dataset(&SynthConfig::default(), 3, 1).unwrap();
        let manifest = write_dataset(&samples, dir.path()).unwrap();
        let id = &samples[0].sample_id;
        let path = dir.path().join(format!("images/{id}_bg.png"));
        samples[0].image_occluded.write_png(&path).unwrap();
        assert!(matches!(read_dataset(&manifest), Err(Error::Checksum { .. })));
    }

    #[test]
    fn empty_manifest_is_an_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(&[], dir.path()).unwrap();
        assert!(read_dataset(&manifest).unwrap().is_empty());
    }

    #[test]
    fn corrupt_manifest_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join(MANIFEST_NAME);
        fs::write(&manifest, "{not json\n").unwrap();
        assert!(matches!(read_dataset(&manifest), Err(Error::Corrupt { .. })));
    }
}
