//! Mask metrics, image errors, proxy recognizability/segmentability scores
//! and batch evaluation.

mod evaluate;
mod proxies;

pub use evaluate::{evaluate, EvalConfig, Method, MetricsReport, Proxies, SampleRow, SegmenterChoice, Summary};
pub use proxies::{foreground_crop, icp_score, pixel_accuracy, seg_score, train_proxy_classifier, train_proxy_segmenter, ProxyClassifier, ProxyConfig, ProxySegmenter};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, MaskTensor, Sized2d};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub l1: f64,
    pub l2: f64,
}

/// Ratio with the empty-mask conventions: `0/0 = 1` when both masks are
/// empty, `0` when only one is.
fn ratio(num: usize, den: usize, both_empty: bool) -> f64 {
    if den == 0 {
        if both_empty {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall, F1, IoU and per-pixel errors of predicted mask `p` against `g`.
pub fn mask_metrics(p: &MaskTensor, g: &MaskTensor) -> Result<MaskMetrics> {
    p.require_same(g, "mask metrics")?;
    p.require_binary("predicted mask")?;
    g.require_binary("ground-truth mask")?;
    let (mut tp, mut np, mut ng, mut diff) = (0usize, 0usize, 0usize, 0usize);
    for (&a, &b) in p.data().iter().zip(g.data()) {
        let (a, b) = (a == 1.0, b == 1.0);
        tp += (a && b) as usize;
        np += a as usize;
        ng += b as usize;
        diff += (a != b) as usize;
    }
    let both_empty = np == 0 && ng == 0;
    let precision = ratio(tp, np, both_empty);
    let recall = ratio(tp, ng, both_empty);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    let iou = ratio(tp, np + ng - tp, both_empty);
    let l1 = diff as f64 / p.data().len() as f64;
    Ok(MaskMetrics { precision, recall, f1, iou, l1, l2: l1 })
}

/// Mean absolute and mean squared difference over all channels, optionally within `region`.
pub fn pixel_errors(a: &ImageTensor, b: &ImageTensor, region: Option<&MaskTensor>) -> Result<(f64, f64)> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!("pixel errors: {:?} vs {:?}", a.dims(), b.dims())));
    }
    if let Some(r) = region {
        if r.dims() != a.dims() {
            return Err(Error::shape(format!("region {:?} vs image {:?}", r.dims(), a.dims())));
        }
    }
    let (mut l1, mut l2, mut n) = (0.0f64, 0.0f64, 0usize);
    for (i, (pa, pb)) in a.data().chunks(3).zip(b.data().chunks(3)).enumerate() {
        if region.is_some_and(|r| r.data()[i] < 0.5) {
            continue;
        }
        for (&x, &y) in pa.iter().zip(pb) {
            let d = (x as f64 - y as f64).abs();
            l1 += d;
            l2 += d * d;
        }
        n += 3;
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok((l1 / n as f64, l2 / n as f64))
}
