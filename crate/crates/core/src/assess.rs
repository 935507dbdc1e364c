//! Candidate assessment: a small 1-D conv net scores how plausible a
//! candidate location is given the compensated track history and the tracker
//! heatmap, trained with binary cross-entropy and calibrated by temperature
//! scaling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, Point2, ScoreMap};
use crate::nn::{sigmoid, tanh_backward, tanh_inplace, Adam, Conv1d, Params, Tensor3};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;
/// Number of heatmap summary features.
pub const SUMMARY_LEN: usize = 4;
/// Relative coordinates are multiplied by this before entering the network.
const COORD_GAIN: f64 = 10.0;

/// Heatmap statistics fed to the network: peak, mean, peak minus mean, and
/// the value at the candidate (the map minimum when it falls off the grid).
pub fn heatmap_summary(heatmap: &ScoreMap, candidate: Point2) -> [f64; SUMMARY_LEN] {
    let peak = heatmap.max();
    let mean = heatmap.mean();
    let at = heatmap.value_at(candidate).unwrap_or_else(|| heatmap.min());
    [peak, mean, peak - mean, at]
}

/// Network input with coordinates normalised by the frame size.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentInput {
    pub candidate: Point2,
    /// Compensated past locations, oldest first.
    pub history: Vec<Point2>,
    pub heatmap_summary: [f64; SUMMARY_LEN],
}

impl AssessmentInput {
    /// Builds an input from pixel coordinates on a `width`×`height` frame.
    pub fn from_pixels(
        candidate: Point2,
        history: &[Point2],
        width: usize,
        height: usize,
        heatmap_summary: [f64; SUMMARY_LEN],
    ) -> Self {
        let norm = |p: Point2| Point2::new(p.x / width as f64, p.y / height as f64);
        Self { candidate: norm(candidate), history: history.iter().map(|&p| norm(p)).collect(), heatmap_summary }
    }

    fn check(&self, history_len: usize) -> Result<()> {
        if self.history.len() != history_len {
            return Err(Error::ShapeMismatch(format!(
                "history of {} points, expected {history_len}",
                self.history.len()
            )));
        }
        let finite = self.candidate.is_finite()
            && self.history.iter().all(|p| p.is_finite())
            && self.heatmap_summary.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("assessment input".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub input: AssessmentInput,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessConfig {
    pub history_len: usize,
    pub hidden: usize,
    pub kernel: usize,
    /// Feed the heatmap summary to the network.
    pub use_heatmap: bool,
}

impl Default for AssessConfig {
    fn default() -> Self {
        Self { history_len: 11, hidden: 16, kernel: 3, use_heatmap: true }
    }
}

impl AssessConfig {
    fn in_channels(&self) -> usize {
        2 + if self.use_heatmap { SUMMARY_LEN } else { 0 }
    }
}

/// Three 1-D conv layers over the history plus candidate, mean-pooled to two logits.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentNet {
    pub config: AssessConfig,
    pub layers: Vec<Conv1d>,
}

struct AssessCache {
    acts: Vec<Tensor3>,
}

impl AssessmentNet {
    pub fn new(config: AssessConfig, seed: u64) -> Result<Self> {
        if config.history_len == 0 || config.hidden == 0 || config.kernel % 2 == 0 {
            return Err(Error::InvalidParameter("assessment net needs history, hidden channels and an odd kernel".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, h) = (config.kernel, config.hidden);
        let layers = vec![
            Conv1d::new(config.in_channels(), h, k, &mut rng),
            Conv1d::new(h, h, k, &mut rng),
            Conv1d::new(h, 2, k, &mut rng),
        ];
        Ok(Self { config, layers })
    }

    /// Input tensor `[channels][1][history_len + 1]`: positions relative to
    /// the last history point, then the broadcast heatmap summary.
    pub fn features(&self, inp: &AssessmentInput) -> Result<Tensor3> {
        inp.check(self.config.history_len)?;
        let anchor = *inp.history.last().expect("checked non-empty");
        let seq: Vec<Point2> = inp.history.iter().copied().chain(std::iter::once(inp.candidate)).collect();
        let len = seq.len();
        let mut x = Tensor3::zeros(self.config.in_channels(), 1, len);
        for (t, p) in seq.iter().enumerate() {
            let d = (*p - anchor) * COORD_GAIN;
            x.data[t] = d.x;
            x.data[len + t] = d.y;
            if self.config.use_heatmap {
                for (f, v) in inp.heatmap_summary.iter().enumerate() {
                    x.data[(2 + f) * len + t] = *v;
                }
            }
        }
        Ok(x)
    }

    fn forward_cached(&self, x: Tensor3) -> ([f64; 2], AssessCache) {
        let mut acts = vec![x];
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(acts.last().expect("input"));
            if i + 1 < self.layers.len() {
                tanh_inplace(&mut y);
            }
            acts.push(y);
        }
        let out = acts.last().expect("output");
        let len = out.w as f64;
        let z0 = out.channel(0).iter().sum::<f64>() / len;
        let z1 = out.channel(1).iter().sum::<f64>() / len;
        ([z0, z1], AssessCache { acts })
    }

    fn backward(&self, cache: &AssessCache, dlogits: [f64; 2], grad: &mut AssessmentNet) {
        let out = cache.acts.last().expect("output");
        let len = out.w;
        let mut d = Tensor3::zeros(2, 1, len);
        for t in 0..len {
            d.data[t] = dlogits[0] / len as f64;
            d.data[len + t] = dlogits[1] / len as f64;
        }
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                d = tanh_backward(&cache.acts[i + 1], &d);
            }
            d = self.layers[i].backward(&cache.acts[i], &d, &mut grad.layers[i]);
        }
    }

    /// Raw logit pair `(z0, z1)`; class 1 means "candidate is correct".
    pub fn score_raw(&self, inp: &AssessmentInput) -> Result<[f64; 2]> {
        Ok(self.forward_cached(self.features(inp)?).0)
    }

    /// Logit margin `z1 - z0`.
    pub fn margin(&self, inp: &AssessmentInput) -> Result<f64> {
        let z = self.score_raw(inp)?;
        Ok(z[1] - z[0])
    }

    /// BCE of the positive-class probability for one sample; accumulates
    /// parameter gradients into `grad` when given.
    pub fn sample_loss(&self, sample: &LabeledSample, grad: Option<&mut AssessmentNet>) -> Result<f64> {
        let (z, cache) = self.forward_cached(self.features(&sample.input)?);
        let s = sigmoid(z[1] - z[0]);
        let a = if sample.label { 1.0 } else { 0.0 };
        let loss = bce_loss(s, a);
        if let Some(g) = grad {
            // the clamp makes the loss flat outside [EPS, 1 - EPS]
            let dz = if (EPS..=1.0 - EPS).contains(&s) { s - a } else { 0.0 };
            self.backward(&cache, [-dz, dz], g);
        }
        Ok(loss)
    }
}

impl Params for AssessmentNet {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
        self.layers.collect(&format!("{prefix}.layers"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.layers.collect_mut(out);
    }
}

/// `-[a log s + (1 - a) log(1 - s)]` with `s` clamped to `[EPS, 1 - EPS]`.
pub fn bce_loss(score: f64, label: f64) -> f64 {
    let s = score.clamp(EPS, 1.0 - EPS);
    -(label * s.ln() + (1.0 - label) * (1.0 - s).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationParams {
    pub temperature: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self { temperature: 1.0 }
    }
}

impl CalibrationParams {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidParameter(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { temperature })
    }

    /// Positive-class probability `σ(z / T)` for a logit margin `z`.
    pub fn positive_probability(&self, margin: f64) -> f64 {
        sigmoid(margin / self.temperature)
    }

    /// Confidence of the winning class: the larger softmax component of `logits / T`.
    pub fn score_calibrated(&self, logits: [f64; 2]) -> f64 {
        let p = self.positive_probability(logits[1] - logits[0]);
        p.max(1.0 - p)
    }
}

/// Mean BCE of `σ(z / T)` against the labels.
pub fn calibration_nll(margins: &[f64], labels: &[bool], temperature: f64) -> f64 {
    let cal = CalibrationParams { temperature };
    let n = margins.len().max(1) as f64;
    margins
        .iter()
        .zip(labels)
        .map(|(&z, &a)| bce_loss(cal.positive_probability(z), if a { 1.0 } else { 0.0 }))
        .sum::<f64>()
        / n
}

pub const MIN_TEMPERATURE: f64 = 0.05;
pub const MAX_TEMPERATURE: f64 = 20.0;

/// Fits the temperature minimising validation NLL over `[0.05, 20]`.
///
/// The NLL is convex in `1/T`, so a golden-section search over the inverse
/// temperature finds the global minimum; `T = 1` is returned if it is no worse.
pub fn fit_temperature(margins: &[f64], labels: &[bool]) -> Result<CalibrationParams> {
    if margins.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if margins.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} margins, {} labels", margins.len(), labels.len())));
    }
    if labels.iter().all(|&a| a) || labels.iter().all(|&a| !a) {
        return Err(Error::SingleClass);
    }
    let f = |beta: f64| calibration_nll(margins, labels, 1.0 / beta);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (1.0 / MAX_TEMPERATURE, 1.0 / MIN_TEMPERATURE);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo < 1e-10 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let beta = (lo + hi) / 2.0;
    let t = (1.0 / beta).clamp(MIN_TEMPERATURE, MAX_TEMPERATURE);
    if calibration_nll(margins, labels, t) <= calibration_nll(margins, labels, 1.0) {
        CalibrationParams::new(t)
    } else {
        Ok(CalibrationParams::default())
    }
}

/// Temperature calibration of a frozen network on a validation split.
pub fn calibrate_temperature(validation: &[LabeledSample], net: &AssessmentNet) -> Result<CalibrationParams> {
    if validation.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let margins = validation.iter().map(|s| net.margin(&s.input)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<bool> = validation.iter().map(|s| s.label).collect();
    fit_temperature(&margins, &labels)
}

/// Everything needed to rebuild an assessment input for a moved candidate.
#[derive(Debug, Clone)]
pub struct CandidateContext {
    pub frame_index: usize,
    /// Candidate location in frame pixels.
    pub candidate: Point2,
    /// Compensated history in the current frame's coordinates, pixels.
    pub history: Vec<Point2>,
    pub heatmap: ScoreMap,
    pub frame_width: usize,
    pub frame_height: usize,
}

impl CandidateContext {
    pub fn input_at(&self, candidate: Point2) -> AssessmentInput {
        AssessmentInput::from_pixels(
            candidate,
            &self.history,
            self.frame_width,
            self.frame_height,
            heatmap_summary(&self.heatmap, candidate),
        )
    }

    pub fn input(&self) -> AssessmentInput {
        self.input_at(self.candidate)
    }
}

/// Box of the ground-truth size centred on a candidate.
fn candidate_box(c: Point2, gt: &BoundingBox) -> BoundingBox {
    BoundingBox::centered_at(c, gt.w, gt.h)
}

/// Point displaced from `c` in a random direction by `U[0.5, 1.5]` box
/// diagonals, redrawn until its box overlaps the ground truth by at most 0.5.
pub fn drift_candidate(c: Point2, gt: &BoundingBox, rng: &mut impl Rng) -> Point2 {
    let diag = gt.diagonal();
    loop {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let mag = rng.gen_range(0.5..=1.5) * diag;
        let p = c + Point2::new(angle.cos(), angle.sin()) * mag;
        if iou(&candidate_box(p, gt), gt) <= 0.5 {
            return p;
        }
    }
}

/// Labels candidates by IoU with the ground truth: each candidate whose box
/// overlaps by more than 0.5 becomes a positive and contributes one drifted
/// negative, so the classes are balanced.
pub fn mine_samples(candidates: &[CandidateContext], gt: &[BoundingBox], seed: u64) -> Result<Vec<LabeledSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for c in candidates {
        let g = gt
            .get(c.frame_index)
            .ok_or_else(|| Error::ShapeMismatch(format!("no ground truth for frame {}", c.frame_index)))?;
        if iou(&candidate_box(c.candidate, g), g) > 0.5 {
            out.push(LabeledSample { input: c.input(), label: true });
            let p = drift_candidate(c.candidate, g, &mut rng);
            out.push(LabeledSample { input: c.input_at(p), label: false });
        }
    }
    Ok(out)
}

/// Candidates the pipeline actually proposed that miss the target (IoU at
/// most 0.5) become negatives, each paired with a positive at the
/// ground-truth centre of the same context. Teaches the net that a confident
/// heatmap peak alone does not make a candidate correct.
pub fn mine_hard_negatives(candidates: &[CandidateContext], gt: &[BoundingBox]) -> Result<Vec<LabeledSample>> {
    let mut out = Vec::new();
    for c in candidates {
        let g = gt
            .get(c.frame_index)
            .ok_or_else(|| Error::ShapeMismatch(format!("no ground truth for frame {}", c.frame_index)))?;
        if iou(&candidate_box(c.candidate, g), g) <= 0.5 {
            out.push(LabeledSample { input: c.input(), label: false });
            out.push(LabeledSample { input: c.input_at(g.center()), label: true });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for AssessTrainConfig {
    fn default() -> Self {
        Self { epochs: 20, lr: 2e-4, seed: 0 }
    }
}

/// Per-sample Adam on the BCE loss. Returns the mean loss of each epoch.
pub fn train_assessment(net: &mut AssessmentNet, samples: &[LabeledSample], cfg: &AssessTrainConfig) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let mut grad = net.zeros_like();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut total = 0.0;
        for &i in &order {
            grad.zero();
            total += net.sample_loss(&samples[i], Some(&mut grad))?;
            adam.update(net, &grad);
        }
        curve.push(total / samples.len() as f64);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MapGrid;
    use crate::nn::gradcheck::max_relative_error;

    fn random_input(rng: &mut ChaCha8Rng) -> AssessmentInput {
        let mut p = Point2::new(rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8));
        let v = Point2::new(rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02));
        let history = (0..11)
            .map(|_| {
                p = p + v;
                p
            })
            .collect();
        AssessmentInput {
            candidate: p + v + Point2::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)),
            history,
            heatmap_summary: [rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.3), rng.gen_range(0.0..1.0), rng.gen_range(-0.5..1.0)],
        }
    }

    #[test]
    fn zero_weights_give_bias_logits() {
        let mut net = AssessmentNet::new(AssessConfig::default(), 1).unwrap();
        net.zero();
        net.layers[2].bias = vec![0.3, -0.7];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let z = net.score_raw(&random_input(&mut rng)).unwrap();
            assert!((z[0] - 0.3).abs() < 1e-15 && (z[1] + 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn scoring_is_deterministic_and_rejects_nan() {
        let net = AssessmentNet::new(AssessConfig::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inp = random_input(&mut rng);
        assert_eq!(net.score_raw(&inp).unwrap(), net.score_raw(&inp).unwrap());
        let mut bad = inp.clone();
        bad.candidate.x = f64::NAN;
        assert!(matches!(net.score_raw(&bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for use_heatmap in [true, false] {
            let net = AssessmentNet::new(AssessConfig { use_heatmap, ..Default::default() }, 5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            for label in [true, false] {
                let s = LabeledSample { input: random_input(&mut rng), label };
                let mut g = net.zeros_like();
                net.sample_loss(&s, Some(&mut g)).unwrap();
                let err = max_relative_error(&net, &g, |n| n.sample_loss(&s, None).unwrap(), 1e-5, 1e-6, 1);
                assert!(err < 1e-4, "rel err {err}");
            }
        }
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(0.5, 1.0) - 2f64.ln()).abs() < 1e-12);
        assert!((bce_loss(0.5, 0.0) - 2f64.ln()).abs() < 1e-12);
        assert!(bce_loss(1.0, 1.0) < 1e-6);
        assert!(bce_loss(0.0, 0.0) < 1e-6);
        assert!((bce_loss(0.9, 0.0) - 10f64.ln()).abs() < 1e-12);
        assert!(bce_loss(0.0, 1.0).is_finite());
    }

    #[test]
    fn calibrated_score_examples() {
        let one = CalibrationParams::default();
        assert_eq!(one.score_calibrated([0.4, 0.4]), 0.5);
        assert_eq!(CalibrationParams::new(3.0).unwrap().score_calibrated([1.0, 1.0]), 0.5);
        assert!((one.positive_probability(2.0) - 0.8807970779778823).abs() < 1e-12);
        assert!((CalibrationParams::new(1e9).unwrap().score_calibrated([0.0, 5.0]) - 0.5).abs() < 1e-8);
        assert!(CalibrationParams::new(0.0).is_err());
    }

    fn synthetic_logits(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let margins: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let labels = margins.iter().map(|&z| rng.gen_range(0.0..1.0) < sigmoid(z)).collect();
        (margins, labels)
    }

    #[test]
    fn temperature_recovers_scaling() {
        let (m, l) = synthetic_logits(20_000, 7);
        let t = fit_temperature(&m, &l).unwrap().temperature;
        assert!((t - 1.0).abs() < 0.1, "{t}");
        let scaled: Vec<f64> = m.iter().map(|z| z * 10.0).collect();
        let t = fit_temperature(&scaled, &l).unwrap().temperature;
        assert!((t - 10.0).abs() < 1.0, "{t}");
        assert!(calibration_nll(&scaled, &l, t) <= calibration_nll(&scaled, &l, 1.0));
    }

    #[test]
    fn temperature_errors() {
        assert!(matches!(fit_temperature(&[1.0, 2.0], &[true, true]), Err(Error::SingleClass)));
        assert!(matches!(fit_temperature(&[], &[]), Err(Error::EmptyDataset)));
    }

    fn context(candidate: Point2, frame_index: usize) -> CandidateContext {
        CandidateContext {
            frame_index,
            candidate,
            history: (0..11).map(|k| Point2::new(20.0 + k as f64, 30.0)).collect(),
            heatmap: ScoreMap::zeros(MapGrid::with_placement(10, 10, Point2::new(20.0, 20.0), 2.0)),
            frame_width: 64,
            frame_height: 64,
        }
    }

    #[test]
    fn mining_labels_and_balance() {
        let gt = vec![BoundingBox::new(31.0, 30.0, 10.0, 10.0).unwrap(); 3];
        let cands = vec![
            context(Point2::new(31.0, 30.0), 0),          // exact: positive
            context(Point2::new(31.0 + 28.3, 30.0), 1),   // 2 diagonals away: dropped
            context(Point2::new(31.0 + 10.0 / 3.0, 30.0), 2), // IoU exactly 0.5: dropped
        ];
        assert!((iou(&candidate_box(cands[2].candidate, &gt[2]), &gt[2]) - 0.5).abs() < 1e-12);
        let s = mine_samples(&cands, &gt, 1).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[0].label && !s[1].label);
        let pos = s.iter().filter(|x| x.label).count();
        assert_eq!(pos * 2, s.len());
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<LabeledSample> = (0..200)
            .map(|i| {
                let mut inp = random_input(&mut rng);
                let label = i % 2 == 0;
                if !label {
                    inp.candidate = inp.candidate + Point2::new(0.15, -0.1);
                }
                LabeledSample { input: inp, label }
            })
            .collect();
        let mut net = AssessmentNet::new(AssessConfig::default(), 1).unwrap();
        let cfg = AssessTrainConfig { epochs: 10, lr: 1e-3, seed: 2 };
        let curve = train_assessment(&mut net, &samples, &cfg).unwrap();
        assert!(curve.last().unwrap() < &(0.5 * curve[0]), "{curve:?}");
    }
}
