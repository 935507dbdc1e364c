//! Per-frame orchestration: appearance tracking, background motion,
//! trajectory prediction, candidate assessment and branch selection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::assess::{heatmap_summary, AssessmentNet, CalibrationParams, CandidateContext};
use crate::bgmotion::MotionEstimator;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{default_sigma, BoundingBox, Point2, ScoreMap, SimilarityTransform};
use crate::tracker::{TrackOutput, Tracker};
use crate::trajnet::{compensate, future_offsets, map_grid, FutureMotion, TrajectoryNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Tracker,
    Trajectory,
}

/// Which heatmap summarises the evidence for the trajectory candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrajEvidence {
    /// The tracker heatmap, for both candidates.
    #[default]
    TrackerHeatmap,
    /// The trajectory net's own response map for the current frame.
    Prediction,
}

/// How the two candidates are compared.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Selection {
    /// Calibrated assessment scores.
    #[default]
    Assessment,
    /// Assessment score multiplied by the tracker heatmap value at the
    /// candidate (clamped to `[0, 1]`) instead of feeding the heatmap in.
    HeatmapWeight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Skip the trajectory branch while the tracker peak stays at or above `tau`.
    pub lazy: bool,
    /// Express past locations in background-compensated coordinates.
    pub compensate: bool,
    pub future_motion: FutureMotion,
    pub traj_evidence: TrajEvidence,
    pub selection: Selection,
    /// Gaussian width of location maps in pixels; derived from the map grid when `None`.
    pub sigma: Option<f64>,
    /// Rescale the output box by the accumulated background scale change.
    pub rescale_box: bool,
    /// Keep the assessment contexts of both candidates in each result.
    pub keep_contexts: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lazy: true,
            compensate: true,
            future_motion: FutureMotion::Constant,
            traj_evidence: TrajEvidence::TrackerHeatmap,
            selection: Selection::Assessment,
            sigma: None,
            rescale_box: true,
            keep_contexts: false,
        }
    }
}

/// Frozen learned components shared by every sequence.
#[derive(Debug, Clone)]
pub struct Models {
    /// `None` runs the tracker alone.
    pub trajectory: Option<TrajectoryNet>,
    pub assessment: AssessmentNet,
    pub calibration: CalibrationParams,
    /// Lazy-trigger threshold on the tracker peak score.
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    pub frame_index: usize,
    pub location: Point2,
    pub bbox: BoundingBox,
    pub branch: Branch,
    pub tracker_location: Point2,
    pub tracker_peak: f64,
    pub traj_location: Option<Point2>,
    pub s_tracker: Option<f64>,
    pub s_traj: Option<f64>,
    /// Predicted locations for the frames after this one.
    pub futures: Vec<Point2>,
    /// Background motion from the previous frame to this one.
    pub motion: SimilarityTransform,
    /// Accumulated background motion since the first frame.
    pub accumulated_motion: Point2,
    pub warning: Option<String>,
    /// Tracker and trajectory candidate contexts, when requested.
    pub contexts: Option<(CandidateContext, CandidateContext)>,
}

/// Chooses between the two candidates given their scores.
pub fn select_branch(s_tracker: f64, s_traj: f64) -> Branch {
    if s_traj > s_tracker {
        Branch::Trajectory
    } else {
        Branch::Tracker
    }
}

/// Branch and calibrated scores `σ(z / T)` from the two assessment margins.
/// The margins are compared directly: `σ(· / T)` is increasing for every
/// `T > 0`, and comparing probabilities would turn two large margins into a
/// tie once both round to 1.
pub fn assessed_branch(cal: &CalibrationParams, z_tracker: f64, z_traj: f64) -> (Branch, f64, f64) {
    (select_branch(z_tracker, z_traj), cal.positive_probability(z_tracker), cal.positive_probability(z_traj))
}

/// Decides a branch from outside the pipeline, e.g. from ground truth when
/// collecting training rollouts.
pub trait Oracle {
    fn choose(&mut self, frame_index: usize, tracker: Point2, trajectory: Point2) -> Branch;
}

/// Picks whichever candidate lies closer to the ground-truth centre (ties: tracker).
pub struct GroundTruthOracle<'a> {
    pub boxes: &'a [BoundingBox],
}

impl Oracle for GroundTruthOracle<'_> {
    fn choose(&mut self, frame_index: usize, tracker: Point2, trajectory: Point2) -> Branch {
        let c = self.boxes[frame_index.min(self.boxes.len() - 1)].center();
        if trajectory.distance(c) < tracker.distance(c) {
            Branch::Trajectory
        } else {
            Branch::Tracker
        }
    }
}

struct History {
    frames: VecDeque<Frame>,
    locations: VecDeque<Point2>,
    /// Motion from the previous buffered frame into each slot.
    steps: VecDeque<SimilarityTransform>,
}

pub struct Pipeline<'m> {
    models: &'m Models,
    motion: &'m MotionEstimator,
    tracker: Box<dyn Tracker + 'm>,
    pub config: PipelineConfig,
    past_len: usize,
    history: History,
    size: (f64, f64),
    scale: f64,
    accumulated: Point2,
    frame_index: usize,
}

impl<'m> Pipeline<'m> {
    /// Initialises the tracker on `frame0` and fills the history with copies
    /// of the first frame state, as if the target had been standing still.
    pub fn new(
        models: &'m Models,
        motion: &'m MotionEstimator,
        mut tracker: Box<dyn Tracker + 'm>,
        config: PipelineConfig,
        frame0: &Frame,
        box0: &BoundingBox,
    ) -> Result<Self> {
        let inside = box0.right() > -0.5
            && box0.bottom() > -0.5
            && box0.left() < frame0.width() as f64 - 0.5
            && box0.top() < frame0.height() as f64 - 0.5;
        if !inside {
            return Err(Error::BoxOutsideFrame);
        }
        tracker.init(frame0, box0)?;
        let past_len = models.assessment.config.history_len;
        if let Some(net) = &models.trajectory {
            if net.config.past_len != past_len {
                return Err(Error::InvalidParameter(format!(
                    "trajectory net uses {} past frames, assessment net {}",
                    net.config.past_len, past_len
                )));
            }
        }
        let history = History {
            frames: std::iter::repeat(frame0.clone()).take(past_len).collect(),
            locations: std::iter::repeat(box0.center()).take(past_len).collect(),
            steps: std::iter::repeat(SimilarityTransform::IDENTITY).take(past_len).collect(),
        };
        Ok(Self {
            models,
            motion,
            tracker,
            config,
            past_len,
            history,
            size: (box0.w, box0.h),
            scale: 1.0,
            accumulated: Point2::ZERO,
            frame_index: 0,
        })
    }

    pub fn history_locations(&self) -> Vec<Point2> {
        self.history.locations.iter().copied().collect()
    }

    pub fn current_box(&self, center: Point2) -> BoundingBox {
        let s = if self.config.rescale_box { self.scale } else { 1.0 };
        BoundingBox::centered_at(center, self.size.0 * s, self.size.1 * s)
    }

    /// The accumulated motion of each buffered slot (first slot at zero)
    /// followed by the current frame's.
    fn window_motion(&self, current: &SimilarityTransform) -> Vec<Point2> {
        let mut acc = Vec::with_capacity(self.past_len + 1);
        let mut m = Point2::ZERO;
        acc.push(m);
        for step in self.history.steps.iter().skip(1).chain(std::iter::once(current)) {
            m = step.motion_vector() + m;
            acc.push(m);
        }
        acc
    }

    pub fn step(&mut self, frame: &Frame) -> Result<FrameResult> {
        self.step_inner(frame, None)
    }

    /// Like [`Self::step`], but an oracle picks the branch.
    pub fn step_with_oracle(&mut self, frame: &Frame, oracle: &mut dyn Oracle) -> Result<FrameResult> {
        self.step_inner(frame, Some(oracle))
    }

    fn step_inner(&mut self, frame: &Frame, oracle: Option<&mut dyn Oracle>) -> Result<FrameResult> {
        self.frame_index += 1;
        let track = self.tracker.track(frame)?;
        let last = *self.history.locations.back().expect("full history");
        let prev_frame = self.history.frames.back().expect("full history");
        let mut warning = None;
        let motion = match self.motion.estimate(prev_frame, frame, &self.current_box(last)) {
            Ok(est) if !est.degenerate => est.transform,
            Ok(_) => {
                warning = Some("background motion degenerate".to_string());
                SimilarityTransform::IDENTITY
            }
            Err(e) => {
                warning = Some(format!("background motion failed: {e}"));
                SimilarityTransform::IDENTITY
            }
        };

        let mut result = FrameResult {
            frame_index: self.frame_index,
            location: track.location,
            bbox: self.current_box(track.location),
            branch: Branch::Tracker,
            tracker_location: track.location,
            tracker_peak: track.peak_score,
            traj_location: None,
            s_tracker: None,
            s_traj: None,
            futures: Vec::new(),
            motion,
            accumulated_motion: Point2::ZERO,
            warning: warning.clone(),
            contexts: None,
        };
        let skip = self.models.trajectory.is_none()
            || warning.is_some()
            || (self.config.lazy && oracle.is_none() && track.peak_score >= self.models.tau);
        if !skip {
            self.run_trajectory(frame, &track, &motion, oracle, &mut result)?;
        }

        self.scale *= motion.scale;
        self.accumulated = motion.motion_vector() + self.accumulated;
        result.accumulated_motion = self.accumulated;
        result.bbox = self.current_box(result.location);
        self.push(frame.clone(), result.location, motion);
        self.tracker.set_location(result.location);
        Ok(result)
    }

    fn run_trajectory(
        &self,
        frame: &Frame,
        track: &TrackOutput,
        motion: &SimilarityTransform,
        oracle: Option<&mut dyn Oracle>,
        result: &mut FrameResult,
    ) -> Result<()> {
        let net = self.models.trajectory.as_ref().expect("checked by caller");
        let cfg = &net.config;
        let grid = map_grid(frame.width(), frame.height(), cfg.map_rows, cfg.map_cols)?;
        let sigma = self.config.sigma.unwrap_or_else(|| default_sigma(&grid));
        let locations: Vec<Point2> = self.history.locations.iter().copied().collect();
        let (window, step) = if self.config.compensate {
            let m = self.window_motion(motion);
            (m[..self.past_len].to_vec(), m[self.past_len] - m[self.past_len - 1])
        } else {
            (vec![Point2::ZERO; self.past_len], Point2::ZERO)
        };
        let past = compensate(&locations, &window)?;
        let frames: Vec<Frame> = self.history.frames.iter().cloned().collect();
        let offsets = future_offsets(step, cfg.outputs(), self.config.future_motion);
        let pred = net.predict(&frames, &past, grid, sigma, &offsets)?;
        let traj = pred.locations[0];

        // history in the current frame's coordinates
        let history: Vec<Point2> = past.iter().map(|&p| p + step).collect();
        let ctx = |candidate: Point2, heatmap: &ScoreMap| CandidateContext {
            frame_index: self.frame_index,
            candidate,
            history: history.clone(),
            heatmap: heatmap.clone(),
            frame_width: frame.width(),
            frame_height: frame.height(),
        };
        let traj_map = match self.config.traj_evidence {
            TrajEvidence::TrackerHeatmap => &track.heatmap,
            TrajEvidence::Prediction => &pred.response_maps[0],
        };
        let tracker_ctx = ctx(track.location, &track.heatmap);
        let traj_ctx = ctx(traj, traj_map);
        let a = &self.models.assessment;
        let cal = &self.models.calibration;
        let (mut chosen, mut s_tracker, mut s_traj) =
            assessed_branch(cal, a.margin(&tracker_ctx.input())?, a.margin(&traj_ctx.input())?);
        if self.config.selection == Selection::HeatmapWeight {
            let w = |p: Point2| heatmap_summary(&track.heatmap, p)[3].clamp(0.0, 1.0);
            s_tracker *= w(track.location);
            s_traj *= w(traj);
            chosen = select_branch(s_tracker, s_traj);
        }
        let branch = match oracle {
            Some(o) => o.choose(self.frame_index, track.location, traj),
            None => chosen,
        };
        result.branch = branch;
        result.location = if branch == Branch::Trajectory { traj } else { track.location };
        result.traj_location = Some(traj);
        result.s_tracker = Some(s_tracker);
        result.s_traj = Some(s_traj);
        result.futures = pred.locations[1..].to_vec();
        if self.config.keep_contexts {
            result.contexts = Some((tracker_ctx, traj_ctx));
        }
        Ok(())
    }

    fn push(&mut self, frame: Frame, location: Point2, step: SimilarityTransform) {
        let h = &mut self.history;
        h.frames.pop_front();
        h.locations.pop_front();
        h.steps.pop_front();
        h.frames.push_back(frame);
        h.locations.push_back(location);
        h.steps.push_back(step);
    }
}

/// Result record for the initial frame.
pub fn initial_result(box0: &BoundingBox) -> FrameResult {
    FrameResult {
        frame_index: 0,
        location: box0.center(),
        bbox: *box0,
        branch: Branch::Tracker,
        tracker_location: box0.center(),
        tracker_peak: 1.0,
        traj_location: None,
        s_tracker: None,
        s_traj: None,
        futures: Vec::new(),
        motion: SimilarityTransform::IDENTITY,
        accumulated_motion: Point2::ZERO,
        warning: None,
        contexts: None,
    }
}

/// Runs a whole sequence; the first result is the initial box.
pub fn run_sequence(
    frames: &[Frame],
    box0: &BoundingBox,
    models: &Models,
    motion: &MotionEstimator,
    tracker: Box<dyn Tracker + '_>,
    config: PipelineConfig,
) -> Result<Vec<FrameResult>> {
    run_sequence_inner(frames, box0, models, motion, tracker, config, None)
}

/// [`run_sequence`] with branch choices made by an oracle.
pub fn run_sequence_with_oracle(
    frames: &[Frame],
    box0: &BoundingBox,
    models: &Models,
    motion: &MotionEstimator,
    tracker: Box<dyn Tracker + '_>,
    config: PipelineConfig,
    oracle: &mut dyn Oracle,
) -> Result<Vec<FrameResult>> {
    run_sequence_inner(frames, box0, models, motion, tracker, config, Some(oracle))
}

fn run_sequence_inner(
    frames: &[Frame],
    box0: &BoundingBox,
    models: &Models,
    motion: &MotionEstimator,
    tracker: Box<dyn Tracker + '_>,
    config: PipelineConfig,
    mut oracle: Option<&mut dyn Oracle>,
) -> Result<Vec<FrameResult>> {
    let first = frames.first().ok_or(Error::EmptyDataset)?;
    let mut p = Pipeline::new(models, motion, tracker, config, first, box0)?;
    let mut out = Vec::with_capacity(frames.len());
    out.push(initial_result(box0));
    for f in &frames[1..] {
        let r = match oracle.as_deref_mut() {
            Some(o) => p.step_with_oracle(f, o)?,
            None => p.step(f)?,
        };
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assess::AssessConfig;
    use crate::harness::experiment::{make_estimator, make_tracker};
    use crate::harness::synth::{generate_sequence, SynthConfig, TargetMotion};
    use crate::tracker::TrackerConfig;
    use crate::trajnet::TrajectoryNetConfig;

    fn models(tau: f64, trajectory: bool) -> Models {
        let net_cfg = TrajectoryNetConfig { map_rows: 16, map_cols: 16, hidden: 2, stream_channels: 2, ..TrajectoryNetConfig::desk() };
        Models {
            trajectory: trajectory.then(|| TrajectoryNet::new(net_cfg.clone(), 3).unwrap()),
            assessment: AssessmentNet::new(AssessConfig { history_len: net_cfg.past_len, ..AssessConfig::default() }, 4).unwrap(),
            calibration: CalibrationParams::default(),
            tau,
        }
    }

    fn scene(length: usize) -> crate::harness::dataset::SequenceRecord {
        generate_sequence(&SynthConfig {
            width: 48,
            height: 48,
            length,
            start: Point2::new(20.0, 23.5),
            motion: TargetMotion::ConstantVelocity { velocity: Point2::new(1.0, 0.0) },
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn run(m: &Models, lazy: bool, length: usize) -> Vec<FrameResult> {
        let seq = scene(length);
        let est = make_estimator(48, 48).unwrap();
        let cfg = PipelineConfig { lazy, ..PipelineConfig::default() };
        run_sequence(&seq.frames, &seq.boxes[0], m, &est, make_tracker(&TrackerConfig::default()), cfg).unwrap()
    }

    #[test]
    fn history_starts_as_copies_of_the_first_box() {
        let m = models(0.5, true);
        let seq = scene(2);
        let est = make_estimator(48, 48).unwrap();
        let p = Pipeline::new(&m, &est, make_tracker(&TrackerConfig::default()), PipelineConfig::default(), &seq.frames[0], &seq.boxes[0])
            .unwrap();
        assert_eq!(p.history_locations(), vec![seq.boxes[0].center(); 11]);
    }

    #[test]
    fn box_outside_frame_is_rejected() {
        let m = models(0.5, true);
        let seq = scene(2);
        let est = make_estimator(48, 48).unwrap();
        let far = BoundingBox::new(-40.0, 10.0, 8.0, 8.0).unwrap();
        let r = Pipeline::new(&m, &est, make_tracker(&TrackerConfig::default()), PipelineConfig::default(), &seq.frames[0], &far);
        assert!(matches!(r, Err(Error::BoxOutsideFrame)));
    }

    #[test]
    fn single_frame_returns_the_initial_box() {
        let out = run(&models(0.5, true), true, 1);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].location, scene(1).boxes[0].center());
        assert_eq!(out[0].branch, Branch::Tracker);
    }

    #[test]
    fn temperature_never_changes_the_branches() {
        let base = models(f64::INFINITY, true);
        let reference = run(&base, false, 8);
        for t in [0.01, 0.3, 7.0, 1e4] {
            let m = Models { calibration: CalibrationParams::new(t).unwrap(), ..base.clone() };
            let out = run(&m, false, 8);
            let branches = |r: &[FrameResult]| r.iter().map(|f| f.branch).collect::<Vec<_>>();
            assert_eq!(branches(&out), branches(&reference), "temperature {t}");
        }
    }

    #[test]
    fn saturated_probabilities_keep_the_margin_order() {
        let cal = CalibrationParams::new(0.01).unwrap();
        let (b, st, sj) = assessed_branch(&cal, 40.0, 41.0);
        assert_eq!((st, sj), (1.0, 1.0));
        assert_eq!(b, Branch::Trajectory);
        assert_eq!(assessed_branch(&cal, 2.0, 2.0).0, Branch::Tracker);
    }

    #[test]
    fn runs_are_deterministic() {
        let m = models(f64::INFINITY, true);
        let a = run(&m, true, 6);
        let b = run(&m, true, 6);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.location, y.location);
            assert_eq!(x.s_tracker, y.s_tracker);
            assert_eq!(x.s_traj, y.s_traj);
            assert_eq!(x.futures, y.futures);
        }
    }

    #[test]
    fn ties_go_to_the_tracker() {
        assert_eq!(select_branch(0.4, 0.4), Branch::Tracker);
        assert_eq!(select_branch(0.4, 0.41), Branch::Trajectory);
        let boxes = [BoundingBox::new(10.0, 10.0, 4.0, 4.0).unwrap()];
        let mut o = GroundTruthOracle { boxes: &boxes };
        assert_eq!(o.choose(0, Point2::new(12.0, 10.0), Point2::new(8.0, 10.0)), Branch::Tracker);
    }

    #[test]
    fn lazy_mode_skips_confident_frames() {
        // every peak is at or above a threshold of minus infinity
        let out = run(&models(f64::NEG_INFINITY, true), true, 5);
        assert!(out.iter().all(|r| r.s_traj.is_none() && r.traj_location.is_none() && r.branch == Branch::Tracker));
        assert!(out.iter().all(|r| r.location == r.tracker_location));
    }

    #[test]
    fn eager_mode_scores_both_candidates() {
        let out = run(&models(f64::NEG_INFINITY, true), false, 5);
        for r in &out[1..] {
            assert!(r.s_tracker.is_some() && r.s_traj.is_some());
            assert_eq!(r.futures.len(), 5);
            let expected = if r.branch == Branch::Trajectory { r.traj_location.unwrap() } else { r.tracker_location };
            assert_eq!(r.location, expected);
        }
    }

    #[test]
    fn tracker_only_models_never_switch() {
        let out = run(&models(f64::INFINITY, false), false, 5);
        assert!(out.iter().all(|r| r.branch == Branch::Tracker && r.s_traj.is_none()));
    }
}
