use serde::{Deserialize, Serialize};

use super::dataset::SequenceRecord;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};

pub const THRESHOLDS: usize = 21;
pub const PRECISION_RADIUS: f64 = 20.0;

/// Overlap threshold for curve sample `k`.
pub fn threshold(k: usize) -> f64 {
    k as f64 / (THRESHOLDS - 1) as f64
}

/// Summary statistics over a set of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frames: usize,
    /// `(threshold, fraction of frames with IoU above it)`.
    pub success: Vec<(f64, f64)>,
    pub auc: f64,
    pub precision: f64,
    pub mean_iou: f64,
    pub mean_center_error: f64,
    pub failure_rate: f64,
}

impl FrameStats {
    /// Success at θ counts IoU > θ, except at θ = 1 where IoU = 1 counts so
    /// that perfect results score an AUC of exactly 1.
    pub fn from_pairs(ious: &[f64], errors: &[f64]) -> Self {
        let n = ious.len();
        let frac = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
        let success: Vec<(f64, f64)> = (0..THRESHOLDS)
            .map(|k| {
                let th = threshold(k);
                let hits = if k + 1 == THRESHOLDS {
                    ious.iter().filter(|&&v| v >= 1.0).count()
                } else {
                    ious.iter().filter(|&&v| v > th).count()
                };
                (th, frac(hits))
            })
            .collect();
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        FrameStats {
            frames: n,
            auc: success.iter().map(|s| s.1).sum::<f64>() / THRESHOLDS as f64,
            success,
            precision: frac(errors.iter().filter(|&&e| e <= PRECISION_RADIUS).count()),
            mean_iou: mean(ious),
            mean_center_error: mean(errors),
            failure_rate: frac(ious.iter().filter(|&&v| v == 0.0).count()),
        }
    }

    /// Trapezoidal area under the success curve.
    pub fn trapezoid_auc(&self) -> f64 {
        self.success.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: FrameStats,
    pub occluded: FrameStats,
    pub visible: FrameStats,
}

impl MetricReport {
    pub fn auc(&self) -> f64 {
        self.overall.auc
    }
}

/// Per-frame IoU and centre error of `boxes` against the ground truth.
pub fn frame_scores(boxes: &[BoundingBox], gt: &SequenceRecord) -> Result<(Vec<f64>, Vec<f64>)> {
    if boxes.len() != gt.boxes.len() {
        return Err(Error::ShapeMismatch(format!("{} results for {} ground-truth frames", boxes.len(), gt.boxes.len())));
    }
    Ok(boxes.iter().zip(&gt.boxes).map(|(b, g)| (iou(b, g), b.center().distance(g.center()))).unzip())
}

fn split_stats(ious: &[f64], errors: &[f64], occluded: &[bool]) -> MetricReport {
    let pick = |want: bool| -> (Vec<f64>, Vec<f64>) {
        (0..ious.len()).filter(|&i| occluded[i] == want).map(|i| (ious[i], errors[i])).unzip()
    };
    let (oi, oe) = pick(true);
    let (vi, ve) = pick(false);
    MetricReport {
        overall: FrameStats::from_pairs(ious, errors),
        occluded: FrameStats::from_pairs(&oi, &oe),
        visible: FrameStats::from_pairs(&vi, &ve),
    }
}

pub fn evaluate(boxes: &[BoundingBox], gt: &SequenceRecord) -> Result<MetricReport> {
    let (ious, errors) = frame_scores(boxes, gt)?;
    Ok(split_stats(&ious, &errors, &gt.occluded))
}

/// Pools frames from several sequences into one report.
pub fn evaluate_suite(results: &[Vec<BoundingBox>], gts: &[SequenceRecord]) -> Result<MetricReport> {
    if results.len() != gts.len() {
        return Err(Error::ShapeMismatch(format!("{} result sets for {} sequences", results.len(), gts.len())));
    }
    let (mut ious, mut errors, mut occluded) = (Vec::new(), Vec::new(), Vec::new());
    for (boxes, gt) in results.iter().zip(gts) {
        let (i, e) = frame_scores(boxes, gt)?;
        ious.extend(i);
        errors.extend(e);
        occluded.extend_from_slice(&gt.occluded);
    }
    Ok(split_stats(&ious, &errors, &occluded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;
    use proptest::prelude::*;

    fn record(boxes: Vec<BoundingBox>) -> SequenceRecord {
        let n = boxes.len();
        SequenceRecord {
            frames: vec![Frame::filled(4, 4, 0.0); n],
            boxes,
            occluded: (0..n).map(|i| i % 3 == 0).collect(),
            camera: None,
        }
    }

    fn gt_boxes(n: usize) -> Vec<BoundingBox> {
        (0..n).map(|i| BoundingBox::new(50.0 + i as f64, 40.0, 10.0, 12.0).unwrap()).collect()
    }

    #[test]
    fn identical_results_are_perfect() {
        let gt = record(gt_boxes(9));
        let r = evaluate(&gt.boxes, &gt).unwrap();
        assert_eq!(r.overall.auc, 1.0);
        assert_eq!(r.overall.precision, 1.0);
        assert_eq!(r.overall.failure_rate, 0.0);
        assert_eq!(r.occluded.frames, 3);
        assert_eq!(r.visible.frames, 6);
    }

    #[test]
    fn far_results_fail() {
        let gt = record(gt_boxes(6));
        let far: Vec<_> = gt.boxes.iter().map(|b| b.translated(crate::geometry::Point2::new(500.0, 0.0))).collect();
        let r = evaluate(&far, &gt).unwrap();
        assert_eq!(r.overall.auc, 0.0);
        assert_eq!(r.overall.failure_rate, 1.0);
        assert_eq!(r.overall.precision, 0.0);
    }

    #[test]
    fn half_and_half() {
        let gt = record(gt_boxes(10));
        let mut res = gt.boxes.clone();
        for b in res.iter_mut().skip(5) {
            *b = b.translated(crate::geometry::Point2::new(100.0, 0.0));
        }
        let r = evaluate(&res, &gt).unwrap();
        for &(th, s) in &r.overall.success {
            if th > 0.0 && th < 1.0 {
                assert_eq!(s, 0.5);
            }
        }
        assert!((r.overall.auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let gt = record(gt_boxes(4));
        assert!(matches!(evaluate(&gt.boxes[..3], &gt), Err(Error::ShapeMismatch(_))));
    }

    proptest! {
        #[test]
        fn curve_monotone_and_auc_bounded(ious in proptest::collection::vec(0.0..=1.0f64, 1..60)) {
            let errs = vec![0.0; ious.len()];
            let s = FrameStats::from_pairs(&ious, &errs);
            prop_assert!(s.success.windows(2).all(|w| w[1].1 <= w[0].1));
            prop_assert!((0.0..=1.0).contains(&s.auc));
            // the sampled mean and the trapezoid rule differ only through the endpoint weights
            let f0 = s.success[0].1;
            let f1 = s.success[THRESHOLDS - 1].1;
            let sum: f64 = s.success.iter().map(|p| p.1).sum();
            let expected = (f0 + f1) / 40.0 - sum / 420.0;
            prop_assert!((s.auc - s.trapezoid_auc() - expected).abs() < 1e-12);
        }

        #[test]
        fn trapezoid_close_when_curve_tails_match(center in 0.05..0.95f64, spread in 0.0..0.05f64, n in 20usize..80) {
            // continuous overlap distributions without perfect frames
            let ious: Vec<f64> = (0..n).map(|i| (center + spread * ((i as f64 * 0.37).sin())).clamp(0.001, 0.999)).collect();
            let s = FrameStats::from_pairs(&ious, &vec![0.0; n]);
            prop_assert!((s.auc - s.trapezoid_auc()).abs() <= 0.025);
        }
    }
}
