use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::proxies::{foreground_crop, icp_score, pixel_accuracy, ProxyClassifier, ProxySegmenter};
use super::{mask_metrics, pixel_errors, MaskMetrics};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, MaskTensor};
use crate::pipeline::{run_iterations, Models, VisibleSegmenter, DEFAULT_ITERATIONS};
use crate::synth_data::TrainingSample;

/// What produces the completed mask and recovered image of each sample.
#[derive(Clone, Copy, Debug)]
pub enum Method<'a> {
    Pipeline(&'a Models),
    /// `M = M̂`, `I_r = I`.
    CopyInput,
    /// Emits the ground-truth mask and target image.
    GroundTruth,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmenterChoice {
    #[default]
    Oracle,
    Trained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iterations: usize,
    pub segmenter: SegmenterChoice,
    pub icp: bool,
    pub ss: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iterations: DEFAULT_ITERATIONS, segmenter: SegmenterChoice::Oracle, icp: true, ss: true }
    }
}

/// Frozen judges for the recognizability and segmentability columns.
#[derive(Clone, Copy, Debug)]
pub struct Proxies<'a> {
    pub classifier: Option<&'a ProxyClassifier>,
    pub segmenter: Option<&'a ProxySegmenter>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub iteration: usize,
    pub mask: MaskMetrics,
    pub image_l1: f64,
    pub image_l2: f64,
    /// Errors inside the ground-truth invisible region; absent when it is empty.
    pub invisible_l1: Option<f64>,
    pub invisible_l2: Option<f64>,
    pub icp: Option<f64>,
    pub ss: Option<f64>,
}

/// Per-iteration means of the sample rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub iteration: usize,
    pub samples: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub mask_l1: f64,
    pub mask_l2: f64,
    pub image_l1: f64,
    pub image_l2: f64,
    pub invisible_l1: Option<f64>,
    pub invisible_l2: Option<f64>,
    pub icp: Option<f64>,
    pub ss: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl Summary {
    pub fn of(iteration: usize, rows: &[&SampleRow]) -> Self {
        let m = |f: fn(&SampleRow) -> f64| mean(rows.iter().map(|r| f(r))).unwrap_or(0.0);
        let o = |f: fn(&SampleRow) -> Option<f64>| mean(rows.iter().filter_map(|r| f(r)));
        Self {
            iteration,
            samples: rows.len(),
            precision: m(|r| r.mask.precision),
            recall: m(|r| r.mask.recall),
            f1: m(|r| r.mask.f1),
            iou: m(|r| r.mask.iou),
            mask_l1: m(|r| r.mask.l1),
            mask_l2: m(|r| r.mask.l2),
            image_l1: m(|r| r.image_l1),
            image_l2: m(|r| r.image_l2),
            invisible_l1: o(|r| r.invisible_l1),
            invisible_l2: o(|r| r.invisible_l2),
            icp: o(|r| r.icp),
            ss: o(|r| r.ss),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub config_fingerprint: String,
    pub sample_count: usize,
    pub summaries: Vec<Summary>,
    pub rows: Vec<SampleRow>,
}

impl MetricsReport {
    pub fn summary(&self, iteration: usize) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.iteration == iteration)
    }

    pub fn last(&self) -> &Summary {
        self.summaries.last().expect("report has at least one iteration")
    }

    /// Fixed-width table, one line per iteration.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut s = format!("# {} ({} samples, config {})\n", self.label, self.sample_count, &self.config_fingerprint[..self.config_fingerprint.len().min(12)]);
        let _ = writeln!(
            s,
            "{:>4} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "iter", "Precision", "Recall", "F1", "IoU", "MaskL1", "MaskL2", "L1", "L2", "ICP", "SS"
        );
        for m in &self.summaries {
            let _ = writeln!(
                s,
                "{:>4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9} {:>9}",
                m.iteration,
                m.precision,
                m.recall,
                m.f1,
                m.iou,
                m.mask_l1,
                m.mask_l2,
                m.image_l1,
                m.image_l2,
                opt(m.icp),
                opt(m.ss)
            );
        }
        s
    }

    pub fn rows_jsonl(&self) -> String {
        self.rows.iter().map(|r| serde_json::to_string(r).expect("row serializes") + "\n").collect()
    }
}

struct Outcome {
    mask: MaskTensor,
    image: ImageTensor,
}

fn outcomes(method: Method<'_>, sample: &TrainingSample, cfg: &EvalConfig) -> Result<Vec<Outcome>> {
    match method {
        Method::CopyInput => Ok((0..cfg.iterations).map(|_| Outcome { mask: sample.visible_mask.clone(), image: sample.image_occluded.clone() }).collect()),
        Method::GroundTruth => Ok((0..cfg.iterations).map(|_| Outcome { mask: sample.full_mask.clone(), image: sample.target_unoccluded.clone() }).collect()),
        Method::Pipeline(models) => {
            let seg = match cfg.segmenter {
                SegmenterChoice::Oracle => VisibleSegmenter::oracle(sample),
                SegmenterChoice::Trained => VisibleSegmenter::Trained(
                    models.segmenter.clone().ok_or_else(|| Error::InvalidInput("trained segmenter requested but the checkpoint has none".into()))?,
                ),
            };
            let res = run_iterations(models, &seg, &sample.image_occluded, cfg.iterations).map_err(|e| Error::Sample { sample_id: sample.sample_id.clone(), reason: e.to_string() })?;
            Ok(res.into_iter().map(|r| Outcome { mask: r.completed_mask, image: r.recovered_image }).collect())
        }
    }
}

fn row(sample: &TrainingSample, iteration: usize, out: &Outcome, proxies: Proxies<'_>, cfg: &EvalConfig) -> Result<SampleRow> {
    let mask = mask_metrics(&out.mask, &sample.full_mask)?;
    let (image_l1, image_l2) = pixel_errors(&out.image, &sample.target_unoccluded, None)?;
    let region = sample.invisible_region();
    let (invisible_l1, invisible_l2) = if region.count() > 0 {
        let (a, b) = pixel_errors(&out.image, &sample.target_unoccluded, Some(&region))?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    let icp = match (proxies.classifier, sample.vehicle_class, cfg.icp) {
        (Some(clf), Some(label), true) => {
            let crop_mask = if out.mask.count() > 0 { &out.mask } else { &sample.full_mask };
            Some(icp_score(clf, &[foreground_crop(&out.image, crop_mask, clf.crop_size)?], &[label])?)
        }
        _ => None,
    };
    let ss = match (proxies.segmenter, cfg.ss) {
        (Some(p), true) => Some(pixel_accuracy(&p.predict(&out.image)?, &sample.full_mask)?),
        _ => None,
    };
    Ok(SampleRow { sample_id: sample.sample_id.clone(), iteration, mask, image_l1, image_l2, invisible_l1, invisible_l2, icp, ss })
}

/// Score `method` on every sample at iterations `1..=cfg.iterations`.
pub fn evaluate(method: Method<'_>, dataset: &[TrainingSample], cfg: &EvalConfig, proxies: Proxies<'_>, label: &str, config_fingerprint: &str) -> Result<MetricsReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.iterations == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one iteration".into()));
    }
    let per_sample: Vec<Vec<SampleRow>> = dataset
        .par_iter()
        .map(|s| outcomes(method, s, cfg)?.iter().enumerate().map(|(i, o)| row(s, i + 1, o, proxies, cfg)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let rows: Vec<SampleRow> = (0..cfg.iterations).flat_map(|k| per_sample.iter().map(move |r| r[k].clone())).collect();
    let summaries = (1..=cfg.iterations)
        .map(|k| Summary::of(k, &rows.iter().filter(|r| r.iteration == k).collect::<Vec<_>>()))
        .collect();
    Ok(MetricsReport { label: label.to_string(), config_fingerprint: config_fingerprint.to_string(), sample_count: dataset.len(), summaries, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth_data::{generate_dataset, SynthConfig};

    fn data() -> Vec<TrainingSample> {
        generate_dataset(&SynthConfig::default(), 40, 6).unwrap()
    }

    const NONE: Proxies<'static> = Proxies { classifier: None, segmenter: None };

    #[test]
    fn ground_truth_method_is_perfect() {
        let r = evaluate(Method::GroundTruth, &data(), &EvalConfig::default(), NONE, "gt", "").unwrap();
        for s in &r.summaries {
            assert_eq!((s.iou, s.image_l1, s.invisible_l1), (1.0, 0.0, Some(0.0)));
        }
    }

    #[test]
    fn copy_baseline_matches_direct_iou() {
        let d = data();
        let r = evaluate(Method::CopyInput, &d, &EvalConfig { iterations: 1, ..EvalConfig::default() }, NONE, "copy", "").unwrap();
        let direct: f64 = d
            .iter()
            .map(|s| {
                let inter = s.visible_mask.data().iter().zip(s.full_mask.data()).filter(|(a, b)| **a == 1.0 && **b == 1.0).count();
                let uni = s.visible_mask.data().iter().zip(s.full_mask.data()).filter(|(a, b)| **a == 1.0 || **b == 1.0).count();
                inter as f64 / uni as f64
            })
            .sum::<f64>()
            / d.len() as f64;
        assert!((r.last().iou - direct).abs() < 1e-12);
    }

    #[test]
    fn aggregates_are_row_means() {
        let r = evaluate(Method::CopyInput, &data(), &EvalConfig::default(), NONE, "copy", "ab").unwrap();
        assert_eq!(r.rows.len(), 12);
        for s in &r.summaries {
            let rows: Vec<_> = r.rows.iter().filter(|x| x.iteration == s.iteration).collect();
            let l1 = rows.iter().map(|x| x.image_l1).sum::<f64>() / rows.len() as f64;
            assert!((s.image_l1 - l1).abs() < 1e-9);
        }
        assert_eq!(r.rows_jsonl().lines().count(), 12);
        assert!(r.to_table().contains("IoU"));
    }
}
