//! Camera-motion estimation by masked template matching over a small
//! scale/rotation pyramid, plus its accumulation across frames.
//!
//! Sign convention: the translation `v` is the displacement of the best
//! match inside the winning hypothesis' search patch. For a pure translation
//! it equals how far the background content moved between the two frames, and
//! in general `r·c·v` (the accumulated step) is that content displacement.

use crate::error::{Error, Result};
use crate::frame::{crop_patch, Frame, Patch};
use crate::geometry::{accumulate_motion_with, AccumulationMode, BoundingBox, MapGrid, Point2, ScoreMap, SimilarityTransform};
use crate::nn::Tensor3;
use crate::tracker::{match_patches, Embedding};
use crate::xcorr;

/// Heatmaps whose max−min spread is below this are treated as flat.
const FLAT_SPREAD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidConfig {
    pub scale_factors: Vec<f64>,
    /// Radians.
    pub rotation_factors: Vec<f64>,
    pub template_size: usize,
    pub search_size: usize,
    /// The target box is enlarged by this factor before masking.
    pub mask_margin: f64,
    /// Refine the winning peak to sub-cell precision with a parabola fit.
    pub subpixel: bool,
    pub accumulation: AccumulationMode,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        let five = 5f64.to_radians();
        Self {
            scale_factors: vec![0.95, 1.0, 1.05],
            rotation_factors: vec![-five, 0.0, five],
            template_size: 48,
            search_size: 64,
            mask_margin: 1.5,
            subpixel: true,
            accumulation: AccumulationMode::Literal,
        }
    }
}

impl PyramidConfig {
    /// Default factors with window sizes scaled to a frame: the template
    /// spans half the shorter side and the search window a third more.
    pub fn for_frame(width: usize, height: usize) -> Self {
        let template_size = (width.min(height) / 2).max(4);
        Self { template_size, search_size: template_size * 4 / 3, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.scale_factors.is_empty() || !self.scale_factors.contains(&1.0) || !sorted(&self.scale_factors) {
            return Err(Error::InvalidParameter("scale factors must be strictly sorted and contain 1.0".into()));
        }
        if self.scale_factors.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::InvalidParameter("scale factors must be positive".into()));
        }
        if self.rotation_factors.is_empty() || !self.rotation_factors.contains(&0.0) || !sorted(&self.rotation_factors) {
            return Err(Error::InvalidParameter("rotation factors must be strictly sorted and contain 0".into()));
        }
        if self.template_size == 0 || self.search_size < self.template_size {
            return Err(Error::InvalidParameter(format!(
                "template {} must be positive and fit in search {}",
                self.template_size, self.search_size
            )));
        }
        Ok(())
    }
}

/// One scale or rotation hypothesis and its matching heatmap.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub scale: f64,
    pub rotation: f64,
    pub heatmap: ScoreMap,
}

#[derive(Debug, Clone)]
pub struct MotionEstimate {
    pub transform: SimilarityTransform,
    pub peak_response: f64,
    /// Every heatmap was flat; the transform fell back to identity.
    pub degenerate: bool,
    pub hypotheses: Vec<Hypothesis>,
}

/// Replaces the pixels inside `b` (clipped to the frame) with the whole-frame mean.
pub fn mask_target(frame: &Frame, b: &BoundingBox) -> Frame {
    let mean = frame.mean();
    let (x0, x1, y0, y1) = frame.box_pixels(b);
    let mut out = frame.clone();
    for y in y0..y1 {
        for x in x0..x1 {
            out.set(x, y, mean);
        }
    }
    out
}

/// Background matching heatmap; each cell holds the displacement of the
/// template centre from the search-patch centre.
///
/// `valid` holds the template and search validity masks: 1 on background
/// pixels, 0 on the masked target and on fill outside the frame. Only pixels
/// valid in both take part in a window's score; `None` uses every pixel.
pub fn match_background(
    embedding: &Embedding,
    template: &Patch,
    search: &Patch,
    valid: Option<(&Frame, &Frame)>,
) -> Result<ScoreMap> {
    if template.size() > search.size() {
        return Err(Error::ShapeMismatch(format!(
            "background template {} larger than search {}",
            template.size(),
            search.size()
        )));
    }
    let origin = -search.pixels.center();
    let Some((t_valid, s_valid)) = valid else {
        return match_patches(embedding, template, &Patch { pixels: search.pixels.clone(), origin });
    };
    for (m, f, name) in [(t_valid, &template.pixels, "template"), (s_valid, &search.pixels, "search")] {
        if m.width() != f.width() || m.height() != f.height() {
            return Err(Error::ShapeMismatch(format!(
                "{name} mask {}x{} for a {}x{} patch",
                m.width(),
                m.height(),
                f.width(),
                f.height()
            )));
        }
    }
    let zf = embedding.embed(&template.pixels)?;
    let xf = embedding.embed(&search.pixels)?;
    let stride = embedding.stride();
    let (zm, xm) = (feature_mask(t_valid, stride, &zf), feature_mask(s_valid, stride, &xf));
    let (rows, cols, values) = xcorr::correlate_masked(&xf, &xm, &zf, &zm)?;
    let half = (template.size() as f64 - 1.0) / 2.0;
    let grid = MapGrid::with_placement(rows, cols, origin + Point2::new(half, half), embedding.stride() as f64);
    ScoreMap::from_values(grid, values)
}

/// A feature cell is valid when every pixel of its `stride`×`stride` block is.
fn feature_mask(valid: &Frame, stride: usize, features: &Tensor3) -> Tensor3 {
    let mut plane = Vec::with_capacity(features.h * features.w);
    for i in 0..features.h {
        for j in 0..features.w {
            let ok = (i * stride..((i + 1) * stride).min(valid.height()))
                .all(|y| (j * stride..((j + 1) * stride).min(valid.width())).all(|x| valid.get(x, y) != 0.0));
            plane.push(if ok { 1.0 } else { 0.0 });
        }
    }
    let data = (0..features.c).flat_map(|_| plane.iter().copied()).collect();
    Tensor3 { c: features.c, h: features.h, w: features.w, data }
}

/// Whether the pixel `(x, y)` is background: inside the frame and outside the
/// masked pixel range `(x0, x1, y0, y1)`.
fn is_background(frame: &Frame, masked: (usize, usize, usize, usize), x: isize, y: isize) -> bool {
    let (x0, x1, y0, y1) = masked;
    let in_frame = x >= 0 && y >= 0 && (x as usize) < frame.width() && (y as usize) < frame.height();
    let in_mask = x >= x0 as isize && x < x1 as isize && y >= y0 as isize && y < y1 as isize;
    in_frame && !in_mask
}

/// Validity mask of an axis-aligned crop.
fn crop_validity(patch: &Patch, frame: &Frame, mask: &BoundingBox) -> Frame {
    let masked = frame.box_pixels(mask);
    let (ox, oy) = (patch.origin.x.round() as isize, patch.origin.y.round() as isize);
    Frame::from_fn(patch.pixels.width(), patch.pixels.height(), |u, v| {
        if is_background(frame, masked, ox + u as isize, oy + v as isize) {
            1.0
        } else {
            0.0
        }
    })
}

/// Samples a `size`×`size` patch of `frame` around `center` through the
/// hypothesis `p ↦ center + c·R·p`, with its validity mask: a pixel is valid
/// when every bilinear tap with non-zero weight is background.
fn warped_patch(
    frame: &Frame,
    masked: (usize, usize, usize, usize),
    center: Point2,
    size: usize,
    hypothesis: (f64, f64),
    fill: f64,
) -> (Patch, Frame) {
    let (scale, rotation) = hypothesis;
    let warp = SimilarityTransform { rotation, scale, translation: Point2::ZERO };
    let half = (size as f64 - 1.0) / 2.0;
    let at = |u: usize, v: usize| {
        let q = warp.rotate_scale(Point2::new(u as f64 - half, v as f64 - half));
        Point2::new(center.x + q.x, center.y + q.y)
    };
    let pixels = Frame::from_fn(size, size, |u, v| {
        let p = at(u, v);
        frame.sample(p.x, p.y, fill)
    });
    let valid = Frame::from_fn(size, size, |u, v| {
        let p = at(u, v);
        let (x0, y0) = (p.x.floor(), p.y.floor());
        let xs = if p.x > x0 { 2 } else { 1 };
        let ys = if p.y > y0 { 2 } else { 1 };
        let ok = (0..ys).all(|dy| (0..xs).all(|dx| is_background(frame, masked, x0 as isize + dx, y0 as isize + dy)));
        if ok {
            1.0
        } else {
            0.0
        }
    });
    (Patch { pixels, origin: center - Point2::new(half, half) }, valid)
}

/// Offset of the extremum of the parabola through three samples, in `[-0.5, 0.5]`.
fn parabola_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

fn peak_position(map: &ScoreMap, subpixel: bool) -> Result<Point2> {
    let (r, c) = map.argmax_cell()?;
    let mut p = map.grid.cell_to_pixel(r, c);
    // an exact match is already on the grid
    if subpixel && map.get(r, c) < 1.0 - 1e-9 {
        let step = map.grid.scale;
        if c > 0 && c + 1 < map.cols() {
            p.x += step * parabola_offset(map.get(r, c - 1), map.get(r, c), map.get(r, c + 1));
        }
        if r > 0 && r + 1 < map.rows() {
            p.y += step * parabola_offset(map.get(r - 1, c), map.get(r, c), map.get(r + 1, c));
        }
    }
    Ok(p)
}

/// Ordering key for equal maxima: identity first, then smaller deviation.
fn tie_rank(h: &Hypothesis) -> (bool, f64, f64) {
    let identity = h.scale == 1.0 && h.rotation == 0.0;
    (!identity, (h.scale - 1.0).abs(), h.rotation.abs())
}

fn best<'a>(it: impl Iterator<Item = &'a Hypothesis>) -> Option<&'a Hypothesis> {
    it.fold(None, |acc: Option<&Hypothesis>, h| match acc {
        None => Some(h),
        Some(b) => {
            let (hm, bm) = (h.heatmap.max(), b.heatmap.max());
            if hm > bm || (hm == bm && tie_rank(h) < tie_rank(b)) {
                Some(h)
            } else {
                Some(b)
            }
        }
    })
}

/// Estimates camera motion between two frames with a given embedding.
#[derive(Debug, Clone, Default)]
pub struct MotionEstimator {
    pub config: PyramidConfig,
    pub embedding: Embedding,
}

impl MotionEstimator {
    pub fn new(config: PyramidConfig, embedding: Embedding) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, embedding })
    }

    pub fn estimate(&self, prev: &Frame, cur: &Frame, target: &BoundingBox) -> Result<MotionEstimate> {
        if prev.width() != cur.width() || prev.height() != cur.height() {
            return Err(Error::ShapeMismatch(format!(
                "frames {}x{} and {}x{}",
                prev.width(),
                prev.height(),
                cur.width(),
                cur.height()
            )));
        }
        let cfg = &self.config;
        let mask = BoundingBox::centered_at(target.center(), target.w * cfg.mask_margin, target.h * cfg.mask_margin);
        let prev_m = mask_target(prev, &mask);
        let cur_m = mask_target(cur, &mask);
        let center = prev.center();
        let template = crop_patch(&prev_m, center, cfg.template_size)?;
        let t_valid = crop_validity(&template, prev, &mask);
        let masked = cur.box_pixels(&mask);
        let fill = cur_m.mean();

        let mut hypotheses = Vec::with_capacity(cfg.scale_factors.len() + cfg.rotation_factors.len() - 1);
        let pairs = cfg
            .scale_factors
            .iter()
            .map(|&c| (c, 0.0))
            .chain(cfg.rotation_factors.iter().filter(|&&r| r != 0.0).map(|&r| (1.0, r)));
        for (scale, rotation) in pairs {
            let (search, s_valid) = warped_patch(&cur_m, masked, center, cfg.search_size, (scale, rotation), fill);
            let heatmap = match_background(&self.embedding, &template, &search, Some((&t_valid, &s_valid)))?;
            hypotheses.push(Hypothesis { scale, rotation, heatmap });
        }

        if hypotheses.iter().all(|h| h.heatmap.max() - h.heatmap.min() < FLAT_SPREAD) {
            return Ok(MotionEstimate {
                transform: SimilarityTransform::IDENTITY,
                peak_response: 0.0,
                degenerate: true,
                hypotheses,
            });
        }
        let winner = best(hypotheses.iter()).expect("at least the identity hypothesis");
        let v = peak_position(&winner.heatmap, cfg.subpixel)?;
        let peak_response = winner.heatmap.max();
        let transform = SimilarityTransform::new(winner.rotation, winner.scale, v)?;
        Ok(MotionEstimate { transform, peak_response, degenerate: false, hypotheses })
    }

    /// Per-pair estimates over a sequence followed by accumulation.
    /// `boxes[t]` masks the target in frames `t` and `t+1`.
    pub fn sequence(&self, frames: &[Frame], boxes: &[BoundingBox]) -> Result<(Vec<SimilarityTransform>, Vec<Point2>)> {
        if frames.len() < 2 {
            return Err(Error::NoMotionSteps);
        }
        if boxes.len() != frames.len() {
            return Err(Error::ShapeMismatch(format!("{} boxes for {} frames", boxes.len(), frames.len())));
        }
        let steps = frames
            .windows(2)
            .zip(boxes)
            .map(|(pair, b)| self.estimate(&pair[0], &pair[1], b).map(|e| e.transform))
            .collect::<Result<Vec<_>>>()?;
        let acc = accumulate_motion_with(&steps, self.config.accumulation)?;
        Ok((steps, acc))
    }
}

/// [`MotionEstimator::estimate`] with the identity embedding.
pub fn estimate_transform(prev: &Frame, cur: &Frame, target: &BoundingBox, cfg: &PyramidConfig) -> Result<MotionEstimate> {
    MotionEstimator::new(cfg.clone(), Embedding::Identity)?.estimate(prev, cur, target)
}

/// Accumulated background motion `m` for frames `1..n` relative to frame 0.
pub fn background_motion_sequence(frames: &[Frame], boxes: &[BoundingBox], cfg: &PyramidConfig) -> Result<Vec<Point2>> {
    Ok(MotionEstimator::new(cfg.clone(), Embedding::Identity)?.sequence(frames, boxes)?.1)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Smooth random texture: a sum of random plane waves.
    fn smooth_texture(seed: u64) -> impl Fn(f64, f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<(f64, f64, f64, f64)> = (0..12)
            .map(|_| {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let f = rng.gen_range(0.08..0.35);
                (f * a.cos(), f * a.sin(), rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.3..1.0))
            })
            .collect();
        let norm: f64 = waves.iter().map(|w| w.3).sum();
        move |x, y| 0.5 + 0.5 * waves.iter().map(|&(fx, fy, ph, a)| a * (fx * x + fy * y + ph).sin()).sum::<f64>() / norm
    }

    fn render(tex: &impl Fn(f64, f64) -> f64, w: usize, h: usize, t: &SimilarityTransform) -> Frame {
        // content at p in the base frame appears at T(p) in the warped frame
        let inv = t.inverse();
        let c = Point2::new((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        Frame::from_fn(w, h, |x, y| {
            let p = inv.apply_about(c, Point2::new(x as f64, y as f64));
            tex(p.x, p.y)
        })
    }

    fn target() -> BoundingBox {
        BoundingBox::new(20.0, 20.0, 8.0, 8.0).unwrap()
    }

    fn cfg() -> PyramidConfig {
        PyramidConfig::for_frame(96, 96)
    }

    #[test]
    fn mask_whole_frame_is_constant_mean() {
        let f = Frame::from_fn(6, 4, |x, y| (x * y) as f64);
        let m = mask_target(&f, &BoundingBox::new(2.5, 1.5, 10.0, 10.0).unwrap());
        assert!(m.data().iter().all(|&v| v == f.mean()));
    }

    #[test]
    fn mask_outside_frame_is_noop() {
        let f = Frame::from_fn(6, 4, |x, y| (x + y) as f64);
        let m = mask_target(&f, &BoundingBox::new(50.0, 50.0, 4.0, 4.0).unwrap());
        assert_eq!(m, f);
    }

    #[test]
    fn mask_half_of_two_tone() {
        let f = Frame::from_fn(8, 4, |x, _| if x < 4 { 0.0 } else { 1.0 });
        let m = mask_target(&f, &BoundingBox::from_top_left(-0.5, -0.5, 4.0, 4.0).unwrap());
        for y in 0..4 {
            for x in 0..8 {
                assert_eq!(m.get(x, y), if x < 4 { 0.5 } else { 1.0 });
            }
        }
        // box region already at the frame mean
        let g = Frame::from_fn(8, 4, |x, _| if x < 4 { 0.5 } else { (x % 2) as f64 });
        assert_eq!(mask_target(&g, &BoundingBox::from_top_left(-0.5, -0.5, 4.0, 4.0).unwrap()), g);
    }

    #[test]
    fn background_match_centered_and_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = Frame::from_fn(6, 6, |_, _| rng.gen_range(0.0..1.0));
        let template = Patch { pixels: t.clone(), origin: Point2::ZERO };
        let padded = Frame::from_fn(12, 12, |x, y| t.get_or(x as isize - 3, y as isize - 3, 0.5));
        let map = match_background(&Embedding::Identity, &template, &Patch { pixels: padded, origin: Point2::ZERO }, None).unwrap();
        assert_eq!(crate::geometry::argmax_location(&map).unwrap(), Point2::ZERO);
        let shifted = Frame::from_fn(12, 12, |x, y| t.get_or(x as isize - 5, y as isize - 3, 0.5));
        let map = match_background(&Embedding::Identity, &template, &Patch { pixels: shifted, origin: Point2::ZERO }, None).unwrap();
        assert_eq!(crate::geometry::argmax_location(&map).unwrap(), Point2::new(2.0, 0.0));
    }

    #[test]
    fn background_match_raw_correlation_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = crate::nn::Tensor3::from_vec(1, 12, 12, (0..144).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let t = crate::nn::Tensor3::from_vec(1, 6, 6, (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (rows, cols, v) = xcorr::correlate(&s, &t).unwrap();
        for i in 0..rows {
            for j in 0..cols {
                let mut acc = 0.0;
                for u in 0..6 {
                    for w in 0..6 {
                        acc += s.at(0, i + u, j + w) * t.at(0, u, w);
                    }
                }
                assert!((v[i * cols + j] - acc).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn template_larger_than_search_rejected() {
        let p = |n| Patch { pixels: Frame::filled(n, n, 0.0), origin: Point2::ZERO };
        assert!(match_background(&Embedding::Identity, &p(8), &p(6), None).is_err());
    }

    #[test]
    fn self_match_is_identity() {
        let tex = smooth_texture(1);
        let f = render(&tex, 96, 96, &SimilarityTransform::IDENTITY);
        let est = estimate_transform(&f, &f, &target(), &cfg()).unwrap();
        assert!(est.transform.is_identity(), "{:?}", est.transform);
        assert!(!est.degenerate);
        assert_eq!(est.hypotheses.len(), 5);
    }

    #[test]
    fn recovers_translation() {
        let tex = smooth_texture(2);
        let f0 = render(&tex, 96, 96, &SimilarityTransform::IDENTITY);
        let f1 = render(&tex, 96, 96, &SimilarityTransform::translation(Point2::new(5.0, 0.0)));
        let t = estimate_transform(&f0, &f1, &target(), &cfg()).unwrap().transform;
        assert!(t.translation.distance(Point2::new(5.0, 0.0)) < 1.0, "{t:?}");
        assert_eq!((t.scale, t.rotation), (1.0, 0.0));
    }

    #[test]
    fn recovers_scale_and_rotation_factors() {
        let tex = smooth_texture(3);
        let c = cfg();
        let f0 = render(&tex, 96, 96, &SimilarityTransform::IDENTITY);
        for &s in &c.scale_factors {
            let f1 = render(&tex, 96, 96, &SimilarityTransform::new(0.0, s, Point2::ZERO).unwrap());
            assert_eq!(estimate_transform(&f0, &f1, &target(), &c).unwrap().transform.scale, s);
        }
        for &r in &c.rotation_factors {
            let f1 = render(&tex, 96, 96, &SimilarityTransform::new(r, 1.0, Point2::ZERO).unwrap());
            assert_eq!(estimate_transform(&f0, &f1, &target(), &c).unwrap().transform.rotation, r);
        }
    }

    #[test]
    fn flat_frames_are_degenerate() {
        let f = Frame::filled(96, 96, 0.4);
        let est = estimate_transform(&f, &f, &target(), &cfg()).unwrap();
        assert!(est.degenerate);
        assert!(est.transform.is_identity());
    }

    #[test]
    fn static_and_drifting_sequences() {
        let tex = smooth_texture(4);
        let still: Vec<Frame> = (0..4).map(|_| render(&tex, 96, 96, &SimilarityTransform::IDENTITY)).collect();
        let boxes = vec![target(); 4];
        let m = background_motion_sequence(&still, &boxes, &cfg()).unwrap();
        assert_eq!(m, vec![Point2::ZERO; 3]);

        let drift: Vec<Frame> = (0..4)
            .map(|t| render(&tex, 96, 96, &SimilarityTransform::translation(Point2::new(t as f64, 0.0))))
            .collect();
        let m = background_motion_sequence(&drift, &boxes, &cfg()).unwrap();
        for (k, p) in m.iter().enumerate() {
            assert!(p.distance(Point2::new(k as f64 + 1.0, 0.0)) < 0.5, "{m:?}");
        }

        // pan for two steps, then hold still
        let xs = [0.0, 2.0, 4.0, 4.0, 4.0];
        let pan: Vec<Frame> = xs
            .iter()
            .map(|&x| render(&tex, 96, 96, &SimilarityTransform::translation(Point2::new(x, 0.0))))
            .collect();
        let m = background_motion_sequence(&pan, &vec![target(); 5], &cfg()).unwrap();
        assert!((m[1].x - 4.0).abs() < 0.5);
        assert_eq!(m[2], m[1]);
        assert_eq!(m[3], m[1]);
    }

    #[test]
    fn too_few_frames() {
        let f = Frame::filled(8, 8, 0.0);
        assert!(matches!(
            background_motion_sequence(&[f], &[target()], &cfg()),
            Err(Error::NoMotionSteps)
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = PyramidConfig::default();
        c.scale_factors = vec![1.05, 1.0];
        assert!(c.validate().is_err());
        let mut c = PyramidConfig::default();
        c.rotation_factors = vec![0.1];
        assert!(c.validate().is_err());
        assert!(PyramidConfig::default().validate().is_ok());
    }
}
