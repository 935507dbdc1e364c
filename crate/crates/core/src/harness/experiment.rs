//! Training-data preparation, model training per variant, and evaluation
//! of trained variants over sequence suites.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::{load_sequence, SequenceRecord};
use super::metrics::{evaluate_suite, MetricReport};
use super::synth::{generate_suite, SuiteConfig};
use crate::assess::{
    calibrate_temperature, mine_hard_negatives, mine_samples, train_assessment, AssessConfig, AssessTrainConfig, AssessmentNet,
    CalibrationParams, CandidateContext, LabeledSample,
};
use crate::bgmotion::{MotionEstimator, PyramidConfig};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{default_sigma, iou, BoundingBox, Point2};
use crate::pipeline::{run_sequence, run_sequence_with_oracle, FrameResult, GroundTruthOracle, Models, PipelineConfig, Selection};
use crate::tracker::{CorrelationTracker, Embedding, Tracker, TrackerConfig};
use crate::trajnet::{
    frame_on_grid, map_grid, train_trajectory, LocationEncoding, TrajTrainConfig, TrajectoryNet, TrajectoryNetConfig,
    TrajectorySample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    Complete,
    TrackerOnly,
    NoBg,
    NoImg,
    NoLoc,
    Temp21,
    Temp51,
    NoHeatmap,
    Weight,
    NoCalibration,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Complete,
        Variant::TrackerOnly,
        Variant::NoBg,
        Variant::NoImg,
        Variant::NoLoc,
        Variant::Temp21,
        Variant::Temp51,
        Variant::NoHeatmap,
        Variant::Weight,
        Variant::NoCalibration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Complete => "complete",
            Variant::TrackerOnly => "tracker-only",
            Variant::NoBg => "no-bg",
            Variant::NoImg => "no-img",
            Variant::NoLoc => "no-loc",
            Variant::Temp21 => "temp-21",
            Variant::Temp51 => "temp-51",
            Variant::NoHeatmap => "no-heatmap",
            Variant::Weight => "weight",
            Variant::NoCalibration => "no-calibration",
        }
    }

    pub fn uses_trajectory(self) -> bool {
        self != Variant::TrackerOnly
    }

    /// Variants that differ only after trajectory training reuse the
    /// complete method's network.
    pub fn trajectory_source(self) -> Variant {
        match self {
            Variant::NoHeatmap | Variant::Weight | Variant::NoCalibration => Variant::Complete,
            v => v,
        }
    }

    /// Variants that differ only after assessment training reuse its net.
    pub fn assessment_source(self) -> Variant {
        match self {
            Variant::NoCalibration => Variant::Complete,
            v => v,
        }
    }

    pub fn net_config(self, base: &TrajectoryNetConfig) -> TrajectoryNetConfig {
        let mut c = base.clone();
        match self {
            Variant::NoImg => c.use_image = false,
            Variant::NoLoc => c.location_encoding = LocationEncoding::Coordinates,
            Variant::Temp21 => c.past_len = 21,
            Variant::Temp51 => c.past_len = 51,
            _ => {}
        }
        c
    }

    pub fn assess_config(self, base: &AssessConfig, past_len: usize) -> AssessConfig {
        AssessConfig {
            history_len: past_len,
            use_heatmap: base.use_heatmap && !matches!(self, Variant::NoHeatmap | Variant::Weight),
            ..base.clone()
        }
    }

    pub fn pipeline_config(self) -> PipelineConfig {
        PipelineConfig {
            compensate: self != Variant::NoBg,
            selection: if self == Variant::Weight { Selection::HeatmapWeight } else { Selection::Assessment },
            ..PipelineConfig::default()
        }
    }

    pub fn calibrated(self) -> bool {
        self != Variant::NoCalibration
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variant `{s}`")))
    }
}

/// Everything needed to train one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub train: SuiteConfig,
    pub validation: SuiteConfig,
    pub net: TrajectoryNetConfig,
    pub traj: TrajTrainConfig,
    pub assess: AssessConfig,
    pub assess_train: AssessTrainConfig,
    /// Frames between the starts of consecutive training windows.
    pub window_stride: usize,
    /// Lazy threshold as a percentile of tracker peaks on correctly tracked
    /// visible training frames.
    pub tau_percentile: f64,
    /// Copies of each hard-negative pair (wrong rollout candidate against the
    /// ground truth) in the assessment training set; 0 disables them.
    pub hard_negative_weight: usize,
    pub tracker: TrackerConfig,
    /// Directories of sequence directories replacing the synthetic suites.
    pub train_dir: Option<PathBuf>,
    pub validation_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            train: SuiteConfig { count: 24, seed: 100, ..SuiteConfig::default() },
            validation: SuiteConfig { count: 8, seed: 200, ..SuiteConfig::default() },
            net: TrajectoryNetConfig::desk(),
            traj: TrajTrainConfig::default(),
            assess: AssessConfig::default(),
            assess_train: AssessTrainConfig::default(),
            window_stride: 3,
            tau_percentile: 0.2,
            hard_negative_weight: 5,
            tracker: TrackerConfig::default(),
            train_dir: None,
            validation_dir: None,
        }
    }
}

/// A trained variant: frozen models plus the settings used to run them.
#[derive(Debug, Clone)]
pub struct TrainedVariant {
    pub variant: Variant,
    pub models: Models,
    pub pipeline: PipelineConfig,
    pub tracker: TrackerConfig,
}

pub fn make_tracker(cfg: &TrackerConfig) -> Box<dyn Tracker> {
    Box::new(CorrelationTracker::new(cfg.clone(), Embedding::Identity))
}

pub fn make_estimator(width: usize, height: usize) -> Result<MotionEstimator> {
    MotionEstimator::new(PyramidConfig::for_frame(width, height), Embedding::Identity)
}

/// Maps `f` over `items` on all available cores, preserving order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Accumulated background motion of every frame relative to frame 0,
/// estimated with the ground-truth boxes masked out.
pub fn sequence_motion(seq: &SequenceRecord, estimator: &MotionEstimator) -> Result<Vec<Point2>> {
    if seq.len() < 2 {
        return Ok(vec![Point2::ZERO; seq.len()]);
    }
    let (_, acc) = estimator.sequence(&seq.frames, &seq.boxes)?;
    Ok(std::iter::once(Point2::ZERO).chain(acc).collect())
}

/// Training windows cut from one sequence, in compensated coordinates
/// (or raw frame coordinates when `compensate` is off).
pub fn trajectory_samples(
    seq: &SequenceRecord,
    net: &TrajectoryNetConfig,
    motion: Option<&[Point2]>,
    stride: usize,
) -> Result<Vec<TrajectorySample>> {
    let Some(first) = seq.frames.first() else {
        return Ok(Vec::new());
    };
    let grid = map_grid(first.width(), first.height(), net.map_rows, net.map_cols)?;
    let sigma = default_sigma(&grid);
    let small: Vec<Frame> = seq.frames.iter().map(|f| frame_on_grid(f, &grid)).collect();
    let zero = vec![Point2::ZERO; seq.len()];
    let m = motion.unwrap_or(&zero);
    let len = net.window_len();
    let mut out = Vec::new();
    let mut s = 0;
    while s + len <= seq.len() {
        let anchor = m[s + net.past_len - 1];
        let comp = |t: usize| seq.boxes[t].center() - (m[t] - anchor);
        out.push(TrajectorySample {
            frames: small[s..s + net.past_len].to_vec(),
            past: (s..s + net.past_len).map(comp).collect(),
            future: (s + net.past_len..s + len).map(comp).collect(),
            grid,
            sigma,
        });
        s += stride.max(1);
    }
    Ok(out)
}

/// Tracker peak scores on visible frames where the tracker is still on
/// target (box overlap above 0.5), i.e. the peaks of successful tracking.
pub fn visible_peaks(seq: &SequenceRecord, tracker: &TrackerConfig) -> Result<Vec<f64>> {
    let mut t = make_tracker(tracker);
    let Some(first) = seq.frames.first() else {
        return Ok(Vec::new());
    };
    t.init(first, &seq.boxes[0])?;
    let mut peaks = Vec::new();
    for (i, f) in seq.frames.iter().enumerate().skip(1) {
        let out = t.track(f)?;
        let g = &seq.boxes[i];
        if !seq.occluded[i] && iou(&BoundingBox::centered_at(out.location, g.w, g.h), g) > 0.5 {
            peaks.push(out.peak_score);
        }
    }
    Ok(peaks)
}

/// The `q`-quantile (nearest rank, rounding down) of `values`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * q.clamp(0.0, 1.0)).floor() as usize;
    Ok(v[idx])
}

/// Candidate contexts from ground-truth-guided rollouts: the trajectory
/// branch runs on every frame and the candidate nearer the truth is kept.
pub fn rollout_contexts(
    seq: &SequenceRecord,
    models: &Models,
    pipeline: &PipelineConfig,
    tracker: &TrackerConfig,
) -> Result<Vec<CandidateContext>> {
    let Some(first) = seq.frames.first() else {
        return Ok(Vec::new());
    };
    let estimator = make_estimator(first.width(), first.height())?;
    let cfg = PipelineConfig { lazy: false, keep_contexts: true, ..pipeline.clone() };
    let mut oracle = GroundTruthOracle { boxes: &seq.boxes };
    let results =
        run_sequence_with_oracle(&seq.frames, &seq.boxes[0], models, &estimator, make_tracker(tracker), cfg, &mut oracle)?;
    Ok(results.into_iter().filter_map(|r| r.contexts).flat_map(|(a, b)| [a, b]).collect())
}

/// Mines labelled assessment samples from rollouts over `seqs`.
pub fn assessment_samples(
    seqs: &[SequenceRecord],
    models: &Models,
    pipeline: &PipelineConfig,
    tracker: &TrackerConfig,
    seed: u64,
    hard_negative_weight: usize,
) -> Result<Vec<LabeledSample>> {
    let per_seq = par_map(seqs, |s| rollout_contexts(s, models, pipeline, tracker));
    let mut out = Vec::new();
    for (i, (ctx, seq)) in per_seq.into_iter().zip(seqs).enumerate() {
        let ctx = ctx?;
        out.extend(mine_samples(&ctx, &seq.boxes, seed.wrapping_add(i as u64))?);
        if hard_negative_weight > 0 {
            let hard = mine_hard_negatives(&ctx, &seq.boxes)?;
            for _ in 0..hard_negative_weight {
                out.extend(hard.iter().cloned());
            }
        }
    }
    Ok(out)
}

/// Every sequence directory directly under `dir`, in name order.
pub fn load_suite_dir(dir: &Path) -> Result<Vec<SequenceRecord>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("groundtruth_rect.txt").exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    dirs.iter().map(|d| load_sequence(d)).collect()
}

/// Training and validation sequences. Synthetic training sequences are
/// lengthened when a variant's windows would not fit.
pub fn training_data(cfg: &TrainConfig, net: &TrajectoryNetConfig) -> Result<(Vec<SequenceRecord>, Vec<SequenceRecord>)> {
    let train = match &cfg.train_dir {
        Some(d) => load_suite_dir(d)?,
        None => {
            let need = net.window_len() + 4 * cfg.window_stride.max(1);
            generate_suite(&SuiteConfig { length: cfg.train.length.max(need), ..cfg.train.clone() })?
        }
    };
    let validation = match &cfg.validation_dir {
        Some(d) => load_suite_dir(d)?,
        None => generate_suite(&cfg.validation)?,
    };
    Ok((train, validation))
}

pub fn train_trajectory_net(
    seqs: &[SequenceRecord],
    net_cfg: &TrajectoryNetConfig,
    compensate: bool,
    cfg: &TrainConfig,
) -> Result<(TrajectoryNet, Vec<f64>)> {
    let first = seqs.first().and_then(|s| s.frames.first()).ok_or(Error::EmptyDataset)?;
    let estimator = make_estimator(first.width(), first.height())?;
    let per_seq = par_map(seqs, |s| -> Result<Vec<TrajectorySample>> {
        let motion = if compensate { Some(sequence_motion(s, &estimator)?) } else { None };
        trajectory_samples(s, net_cfg, motion.as_deref(), cfg.window_stride)
    });
    let mut samples = Vec::new();
    for s in per_seq {
        samples.extend(s?);
    }
    let mut net = TrajectoryNet::new(net_cfg.clone(), cfg.seed)?;
    let curve = train_trajectory(&mut net, &samples, &TrajTrainConfig { seed: cfg.seed, ..cfg.traj.clone() })?;
    Ok((net, curve))
}

pub fn lazy_threshold(seqs: &[SequenceRecord], cfg: &TrainConfig) -> Result<f64> {
    let mut peaks = Vec::new();
    for p in par_map(seqs, |s| visible_peaks(s, &cfg.tracker)) {
        peaks.extend(p?);
    }
    percentile(&peaks, cfg.tau_percentile)
}

/// Trains a fresh assessment net for `variant` on rollouts of `train`.
pub fn train_assessment_net(
    variant: Variant,
    trajectory: &TrajectoryNet,
    tau: f64,
    train: &[SequenceRecord],
    cfg: &TrainConfig,
) -> Result<AssessmentNet> {
    let acfg = variant.assess_config(&cfg.assess, trajectory.config.past_len);
    let mut models = Models {
        trajectory: Some(trajectory.clone()),
        assessment: AssessmentNet::new(acfg, cfg.seed.wrapping_add(1))?,
        calibration: CalibrationParams::default(),
        tau,
    };
    let samples = assessment_samples(train, &models, &variant.pipeline_config(), &cfg.tracker, cfg.seed, cfg.hard_negative_weight)?;
    train_assessment(&mut models.assessment, &samples, &AssessTrainConfig { seed: cfg.seed, ..cfg.assess_train.clone() })?;
    Ok(models.assessment)
}

/// Fits the temperature of trained models on rollouts of `validation`;
/// variants without calibration keep `T = 1`.
pub fn fit_calibration(trained: &TrainedVariant, validation: &[SequenceRecord], cfg: &TrainConfig) -> Result<CalibrationParams> {
    if !trained.variant.calibrated() || trained.models.trajectory.is_none() {
        return Ok(CalibrationParams::default());
    }
    let val = assessment_samples(validation, &trained.models, &trained.pipeline, &trained.tracker, cfg.seed.wrapping_add(1_000), cfg.hard_negative_weight.min(1))?;
    calibrate_temperature(&val, &trained.models.assessment)
}

/// Assessment training followed by calibration.
pub fn train_assessment_stage(
    variant: Variant,
    trajectory: &TrajectoryNet,
    tau: f64,
    train: &[SequenceRecord],
    validation: &[SequenceRecord],
    cfg: &TrainConfig,
) -> Result<(AssessmentNet, CalibrationParams)> {
    let assessment = train_assessment_net(variant, trajectory, tau, train, cfg)?;
    let models = Models { trajectory: Some(trajectory.clone()), assessment, calibration: CalibrationParams::default(), tau };
    let trained = TrainedVariant { variant, models, pipeline: variant.pipeline_config(), tracker: cfg.tracker.clone() };
    let calibration = fit_calibration(&trained, validation, cfg)?;
    Ok((trained.models.assessment, calibration))
}

/// Trains every stage of one variant from scratch.
pub fn train_variant(variant: Variant, cfg: &TrainConfig) -> Result<TrainedVariant> {
    let net_cfg = variant.net_config(&cfg.net);
    let (train, validation) = training_data(cfg, &net_cfg)?;
    let tau = lazy_threshold(&train, cfg)?;
    let pipeline = variant.pipeline_config();
    if !variant.uses_trajectory() {
        let assessment = AssessmentNet::new(variant.assess_config(&cfg.assess, net_cfg.past_len), cfg.seed)?;
        let models = Models { trajectory: None, assessment, calibration: CalibrationParams::default(), tau };
        return Ok(TrainedVariant { variant, models, pipeline, tracker: cfg.tracker.clone() });
    }
    let (net, _) = train_trajectory_net(&train, &net_cfg, pipeline.compensate, cfg)?;
    let (assessment, calibration) = train_assessment_stage(variant, &net, tau, &train, &validation, cfg)?;
    let models = Models { trajectory: Some(net), assessment, calibration, tau };
    Ok(TrainedVariant { variant, models, pipeline, tracker: cfg.tracker.clone() })
}

/// Trains several variants, sharing the trajectory and assessment stages
/// between variants that only differ downstream of them.
pub fn train_variants(variants: &[Variant], cfg: &TrainConfig) -> Result<Vec<TrainedVariant>> {
    let mut cache: BTreeMap<Variant, TrainedVariant> = BTreeMap::new();
    for &v in variants {
        ensure_trained(v, cfg, &mut cache)?;
    }
    Ok(variants.iter().map(|v| cache[v].clone()).collect())
}

fn ensure_trained(v: Variant, cfg: &TrainConfig, cache: &mut BTreeMap<Variant, TrainedVariant>) -> Result<()> {
    if cache.contains_key(&v) {
        return Ok(());
    }
    let src = v.trajectory_source();
    if src == v {
        cache.insert(v, train_variant(v, cfg)?);
        return Ok(());
    }
    ensure_trained(src, cfg, cache)?;
    let base = &cache[&src];
    let net = base.models.trajectory.clone().ok_or_else(|| Error::MissingVariant(src.to_string()))?;
    let tau = base.models.tau;
    let (assessment, calibration) = if v.assessment_source() == src {
        let cal = if v.calibrated() { base.models.calibration } else { CalibrationParams::default() };
        (base.models.assessment.clone(), cal)
    } else {
        let (train, validation) = training_data(cfg, &net.config)?;
        train_assessment_stage(v, &net, tau, &train, &validation, cfg)?
    };
    let models = Models { trajectory: Some(net), assessment, calibration, tau };
    cache.insert(v, TrainedVariant { variant: v, models, pipeline: v.pipeline_config(), tracker: cfg.tracker.clone() });
    Ok(())
}

/// Runs a trained variant over one sequence from its first ground-truth box.
pub fn track_sequence(trained: &TrainedVariant, seq: &SequenceRecord, lazy: Option<bool>) -> Result<Vec<FrameResult>> {
    let first = seq.frames.first().ok_or(Error::EmptyDataset)?;
    let estimator = make_estimator(first.width(), first.height())?;
    let mut pipeline = trained.pipeline.clone();
    if let Some(l) = lazy {
        pipeline.lazy = l;
    }
    run_sequence(&seq.frames, &seq.boxes[0], &trained.models, &estimator, make_tracker(&trained.tracker), pipeline)
}

/// Tracks every sequence and pools the metrics.
pub fn evaluate_variant(trained: &TrainedVariant, suite: &[SequenceRecord]) -> Result<MetricReport> {
    let runs = par_map(suite, |s| track_sequence(trained, s, None));
    let boxes: Vec<Vec<BoundingBox>> = runs
        .into_iter()
        .map(|r| r.map(|rs| rs.iter().map(|f| f.bbox).collect()))
        .collect::<Result<_>>()?;
    evaluate_suite(&boxes, suite)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn get(&self, v: Variant) -> Option<&MetricReport> {
        self.rows.iter().find(|r| r.variant == v.name()).map(|r| &r.report)
    }
}

/// Evaluates each requested variant on `suite`. A variant without a
/// trained entry is an error naming it.
pub fn run_ablation(suite: &[SequenceRecord], trained: &[TrainedVariant], variants: &[Variant]) -> Result<AblationTable> {
    let mut rows = Vec::new();
    for v in variants {
        let t = trained.iter().find(|t| t.variant == *v).ok_or_else(|| Error::MissingVariant(v.to_string()))?;
        rows.push(AblationRow { variant: v.to_string(), report: evaluate_variant(t, suite)? });
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{generate_sequence, SynthConfig, TargetMotion};

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }

    #[test]
    fn percentile_nearest_rank() {
        let v = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 0.5).unwrap(), 3.0);
        assert_eq!(percentile(&v, 1.0).unwrap(), 5.0);
        assert!(percentile(&[], 0.5).is_err());
    }

    #[test]
    fn windows_follow_ground_truth_without_motion() {
        let seq = generate_sequence(&SynthConfig {
            length: 24,
            motion: TargetMotion::ConstantVelocity { velocity: Point2::new(1.0, 0.5) },
            start: Point2::new(30.0, 40.0),
            ..Default::default()
        })
        .unwrap();
        let net = TrajectoryNetConfig::desk();
        let w = trajectory_samples(&seq, &net, None, 2).unwrap();
        // windows of 17 starting at 0, 2, ..., 6
        assert_eq!(w.len(), 4);
        assert_eq!(w[1].past[0], seq.boxes[2].center());
        assert_eq!(w[1].future[0], seq.boxes[2 + net.past_len].center());
        assert_eq!(w[0].frames.len(), net.past_len);
        assert_eq!(w[0].frames[0].width(), net.map_cols);
    }

    #[test]
    fn compensated_windows_anchor_at_last_past_frame() {
        let seq = generate_sequence(&SynthConfig { length: 20, ..Default::default() }).unwrap();
        let net = TrajectoryNetConfig::desk();
        let motion: Vec<Point2> = (0..20).map(|t| Point2::new(-(t as f64), 0.0)).collect();
        let w = trajectory_samples(&seq, &net, Some(&motion), 1).unwrap();
        let s = &w[0];
        let last = s.past[net.past_len - 1];
        assert_eq!(last, seq.boxes[net.past_len - 1].center());
        // earlier frames move by the motion difference
        assert_eq!(s.past[0], seq.boxes[0].center() - (motion[0] - motion[net.past_len - 1]));
    }

    #[test]
    fn static_camera_motion_is_zero() {
        let seq = generate_sequence(&SynthConfig { length: 5, ..Default::default() }).unwrap();
        let est = make_estimator(96, 96).unwrap();
        assert_eq!(sequence_motion(&seq, &est).unwrap(), vec![Point2::ZERO; 5]);
    }

    #[test]
    fn par_map_keeps_order() {
        let v: Vec<usize> = (0..37).collect();
        assert_eq!(par_map(&v, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn missing_variant_named() {
        let err = run_ablation(&[], &[], &[Variant::NoBg]).unwrap_err();
        match err {
            Error::MissingVariant(name) => assert_eq!(name, "no-bg"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
