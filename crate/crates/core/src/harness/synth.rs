//! Procedural test sequences: a textured square moving over a textured
//! world, filmed by a scripted camera, passing behind opaque occluders.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::SequenceRecord;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{BoundingBox, Point2, SimilarityTransform};

#[derive(Debug, Clone, PartialEq)]
pub enum TargetMotion {
    ConstantVelocity { velocity: Point2 },
    /// Constant drift plus a sideways sinusoid.
    Sinusoid { velocity: Point2, amplitude: f64, period: f64 },
    /// Velocity changes at the listed frames; the first segment starts at 0.
    Piecewise { segments: Vec<(usize, Point2)> },
}

impl TargetMotion {
    /// World position at frame `t` relative to the start.
    fn offset(&self, t: usize) -> Point2 {
        match self {
            TargetMotion::ConstantVelocity { velocity } => *velocity * t as f64,
            TargetMotion::Sinusoid { velocity, amplitude, period } => {
                let n = velocity.norm();
                let side = if n > 0.0 { Point2::new(-velocity.y / n, velocity.x / n) } else { Point2::new(0.0, 1.0) };
                *velocity * t as f64 + side * (amplitude * (std::f64::consts::TAU * t as f64 / period).sin())
            }
            TargetMotion::Piecewise { segments } => {
                let mut p = Point2::ZERO;
                for k in 0..t {
                    let v = segments.iter().rev().find(|(start, _)| *start <= k).map(|s| s.1).unwrap_or(Point2::ZERO);
                    p = p + v;
                }
                p
            }
        }
    }
}

/// Camera movement per frame, in world pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMotion {
    pub pan: Point2,
    /// Standard deviation of independent per-frame position jitter.
    pub shake: f64,
    /// Camera roll per frame, radians.
    pub rotation: f64,
    /// Zoom factor per frame.
    pub zoom: f64,
}

impl Default for CameraMotion {
    fn default() -> Self {
        Self { pan: Point2::ZERO, shake: 0.0, rotation: 0.0, zoom: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OcclusionWindow {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub length: usize,
    pub target_size: f64,
    /// World position of the target at frame 0 (the frame-0 view is the
    /// identity, so this is also its pixel position).
    pub start: Point2,
    pub motion: TargetMotion,
    pub camera: CameraMotion,
    pub occlusions: Vec<OcclusionWindow>,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 96,
            height: 96,
            length: 50,
            target_size: 12.0,
            start: Point2::new(47.5, 47.5),
            motion: TargetMotion::ConstantVelocity { velocity: Point2::ZERO },
            camera: CameraMotion::default(),
            occlusions: Vec::new(),
            noise: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 || self.length == 0 {
            return Err(Error::DegenerateConfig("frames must be at least 16x16 and the sequence non-empty".into()));
        }
        if !(self.target_size >= 2.0) {
            return Err(Error::DegenerateConfig("target size must be at least 2 px".into()));
        }
        if !(self.camera.zoom > 0.0) || self.noise < 0.0 || self.camera.shake < 0.0 {
            return Err(Error::DegenerateConfig("zoom must be positive, noise and shake non-negative".into()));
        }
        for w in &self.occlusions {
            if w.len == 0 || w.start == 0 || w.start + w.len > self.length {
                return Err(Error::DegenerateConfig(format!(
                    "occlusion window {}+{} outside frames 1..{}",
                    w.start, w.len, self.length
                )));
            }
        }
        Ok(())
    }
}

/// Hash of a lattice point, uniform in `[0, 1)`.
fn lattice(seed: u64, x: i64, y: i64) -> f64 {
    let mut z = seed ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothly interpolated lattice noise with cells of `cell` pixels.
fn value_noise(seed: u64, p: Point2, cell: f64) -> f64 {
    let (u, v) = (p.x / cell, p.y / cell);
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (s(fx), s(fy));
    let (xi, yi) = (x0 as i64, y0 as i64);
    let a = lattice(seed, xi, yi);
    let b = lattice(seed, xi + 1, yi);
    let c = lattice(seed, xi, yi + 1);
    let d = lattice(seed, xi + 1, yi + 1);
    (a * (1.0 - sx) + b * sx) * (1.0 - sy) + (c * (1.0 - sx) + d * sx) * sy
}

/// Background intensity at a world point: three octaves of value noise.
fn world_texture(seed: u64, p: Point2) -> f64 {
    let n = 0.5 * value_noise(seed, p, 16.0) + 0.3 * value_noise(seed ^ 1, p, 8.0) + 0.2 * value_noise(seed ^ 2, p, 4.0);
    0.2 + 0.6 * n
}

/// Blocky two-level pattern used for targets and occluders.
fn block_texture(seed: u64, local: Point2, cell: f64, lo: f64, hi: f64) -> f64 {
    if lattice(seed, (local.x / cell).floor() as i64, (local.y / cell).floor() as i64) < 0.5 {
        lo
    } else {
        hi
    }
}

/// Camera view at one frame: world point `p` appears at
/// `center + zoom·R(angle)·(p - position)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Point2,
    pub angle: f64,
    pub zoom: f64,
}

impl CameraPose {
    pub fn transform(&self) -> SimilarityTransform {
        SimilarityTransform { rotation: self.angle, scale: self.zoom, translation: Point2::ZERO }
    }

    pub fn to_frame(&self, center: Point2, p: Point2) -> Point2 {
        center + self.transform().rotate_scale(p - self.position)
    }

    pub fn to_world(&self, center: Point2, q: Point2) -> Point2 {
        self.position + self.transform().inverse().rotate_scale(q - center)
    }
}

fn axis_box(center: Point2, w: f64, h: f64) -> (f64, f64, f64, f64) {
    (center.x - w / 2.0, center.y - h / 2.0, center.x + w / 2.0, center.y + h / 2.0)
}

fn inside(b: &(f64, f64, f64, f64), p: Point2) -> bool {
    p.x >= b.0 && p.x < b.2 && p.y >= b.1 && p.y < b.3
}

/// Fraction of box `a` covered by box `b`.
fn coverage(a: &(f64, f64, f64, f64), b: &(f64, f64, f64, f64)) -> f64 {
    let w = (a.2.min(b.2) - a.0.max(b.0)).max(0.0);
    let h = (a.3.min(b.3) - a.1.max(b.1)).max(0.0);
    w * h / ((a.2 - a.0) * (a.3 - a.1))
}

/// Renders a sequence. The ground truth follows the target even while it is
/// hidden; a frame is flagged occluded when a painted occluder fully covers
/// the target, which holds for every frame of every window.
pub fn generate_sequence(cfg: &SynthConfig) -> Result<SequenceRecord> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let texture_seed: u64 = rng.gen();
    let target_seed: u64 = rng.gen();
    let center = Point2::new((cfg.width as f64 - 1.0) / 2.0, (cfg.height as f64 - 1.0) / 2.0);

    let jitter = Normal::new(0.0, cfg.camera.shake.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let poses: Vec<CameraPose> = (0..cfg.length)
        .map(|t| {
            let mut position = center + cfg.camera.pan * t as f64;
            if t > 0 && cfg.camera.shake > 0.0 {
                position = position + Point2::new(jitter.sample(&mut rng), jitter.sample(&mut rng));
            }
            CameraPose { position, angle: -cfg.camera.rotation * t as f64, zoom: cfg.camera.zoom.powi(t as i32) }
        })
        .collect();
    let world_target: Vec<Point2> = (0..cfg.length).map(|t| cfg.start + cfg.motion.offset(t)).collect();

    // each occluder sits still in the world, covers the target's whole path
    // through its window and is painted only during that window
    let half = cfg.target_size / 2.0;
    let occluders: Vec<((f64, f64, f64, f64), u64, std::ops::Range<usize>)> = cfg
        .occlusions
        .iter()
        .map(|w| {
            let pts = &world_target[w.start..w.start + w.len];
            let x0 = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - half - 1.0;
            let y0 = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - half - 1.0;
            let x1 = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + half + 1.0;
            let y1 = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + half + 1.0;
            ((x0, y0, x1, y1), rng.gen(), w.start..w.start + w.len)
        })
        .collect();

    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut frames = Vec::with_capacity(cfg.length);
    let mut boxes = Vec::with_capacity(cfg.length);
    let mut occluded = Vec::with_capacity(cfg.length);
    let mut outside = 0;
    for t in 0..cfg.length {
        let pose = &poses[t];
        let target = axis_box(world_target[t], cfg.target_size, cfg.target_size);
        let active: Vec<_> = occluders.iter().filter(|o| o.2.contains(&t)).collect();
        let frame = Frame::from_fn(cfg.width, cfg.height, |x, y| {
            let w = pose.to_world(center, Point2::new(x as f64, y as f64));
            let mut v = world_texture(texture_seed, w);
            if inside(&target, w) {
                v = block_texture(target_seed, w - Point2::new(target.0, target.1), 3.0, 0.05, 0.95);
            }
            for (rect, seed, _) in &active {
                if inside(rect, w) {
                    v = block_texture(*seed, w - Point2::new(rect.0, rect.1), 4.0, 0.15, 0.85);
                }
            }
            v
        });
        // quantised to 8 bits so frames survive a PNG round trip
        let data = frame
            .data()
            .iter()
            .map(|&v| {
                let v = if cfg.noise > 0.0 { v + noise.sample(&mut rng) } else { v };
                (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
            })
            .collect();
        frames.push(Frame::new(cfg.width, cfg.height, data)?);

        let c = pose.to_frame(center, world_target[t]);
        if c.x < 0.0 || c.y < 0.0 || c.x > cfg.width as f64 - 1.0 || c.y > cfg.height as f64 - 1.0 {
            outside += 1;
        }
        let side = cfg.target_size * pose.zoom;
        boxes.push(BoundingBox::new(c.x, c.y, side, side)?);
        occluded.push(active.iter().any(|(rect, _, _)| coverage(&target, rect) >= 1.0));
    }
    if outside * 2 > cfg.length {
        return Err(Error::DegenerateConfig(format!(
            "target outside the frame in {outside} of {} frames",
            cfg.length
        )));
    }
    let camera = poses.iter().map(|p| SimilarityTransform { translation: p.position, ..p.transform() }).collect();
    Ok(SequenceRecord { frames, boxes, occluded, camera: Some(camera) })
}

/// Randomised scene parameters for a benchmark or training suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub count: usize,
    pub seed: u64,
    pub length: usize,
    pub width: usize,
    pub height: usize,
    pub target_size: f64,
    /// Target speed range, px/frame.
    pub speed: (f64, f64),
    /// Camera pan speed range, px/frame.
    pub pan: (f64, f64),
    pub shake: f64,
    pub occlusion_len: usize,
    /// Occlusion windows per sequence.
    pub occlusions: usize,
    pub noise: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            count: 50,
            seed: 1,
            length: 50,
            width: 96,
            height: 96,
            target_size: 12.0,
            speed: (1.5, 3.0),
            pan: (0.5, 1.5),
            shake: 1.5,
            occlusion_len: 5,
            occlusions: 1,
            noise: 0.02,
        }
    }
}

/// Scene configuration `index` of a suite. Targets move with constant,
/// sinusoidal or piecewise velocity; the camera pans roughly along with them.
pub fn suite_member(suite: &SuiteConfig, index: usize) -> SynthConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let speed = if suite.speed.1 > suite.speed.0 { rng.gen_range(suite.speed.0..suite.speed.1) } else { suite.speed.0 };
    let dir = Point2::new(angle.cos(), angle.sin());
    let velocity = dir * speed;
    let motion = match rng.gen_range(0..3) {
        0 => TargetMotion::ConstantVelocity { velocity },
        1 => TargetMotion::Sinusoid { velocity, amplitude: rng.gen_range(1.0..3.0), period: rng.gen_range(16.0..30.0) },
        _ => {
            let turn = rng.gen_range(-0.6..0.6f64);
            let (s, c) = turn.sin_cos();
            let v2 = Point2::new(c * velocity.x - s * velocity.y, s * velocity.x + c * velocity.y);
            TargetMotion::Piecewise { segments: vec![(0, velocity), (rng.gen_range(suite.length / 3..suite.length * 2 / 3), v2)] }
        }
    };
    let pan_speed = if suite.pan.1 > suite.pan.0 { rng.gen_range(suite.pan.0..suite.pan.1) } else { suite.pan.0 };
    let pan_angle = angle + rng.gen_range(-0.5..0.5);
    let pan = Point2::new(pan_angle.cos(), pan_angle.sin()) * pan_speed;
    let center = Point2::new((suite.width as f64 - 1.0) / 2.0, (suite.height as f64 - 1.0) / 2.0);
    // start behind centre so the target crosses the view
    let lead = (speed - pan_speed).max(0.0) * suite.length as f64 / 2.0;
    let start = center - dir * lead.min(suite.width.min(suite.height) as f64 / 3.0);
    let mut occlusions = Vec::new();
    if suite.occlusions > 0 && suite.occlusion_len > 0 {
        let span = suite.length / suite.occlusions;
        for k in 0..suite.occlusions {
            let lo = (k * span + span / 3).max(12);
            let hi = ((k + 1) * span).saturating_sub(suite.occlusion_len + 4).max(lo + 1);
            let start = rng.gen_range(lo..hi).min(suite.length - suite.occlusion_len - 1);
            occlusions.push(OcclusionWindow { start, len: suite.occlusion_len });
        }
    }
    SynthConfig {
        width: suite.width,
        height: suite.height,
        length: suite.length,
        target_size: suite.target_size,
        start,
        motion,
        camera: CameraMotion { pan, shake: suite.shake, rotation: 0.0, zoom: 1.0 },
        occlusions,
        noise: suite.noise,
        seed: rng.gen(),
    }
}

/// Generates every member of a suite, skipping none: a degenerate member is an error.
pub fn generate_suite(suite: &SuiteConfig) -> Result<Vec<SequenceRecord>> {
    (0..suite.count).map(|i| generate_sequence(&suite_member(suite, i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_scene_is_constant() {
        let seq = generate_sequence(&SynthConfig { length: 4, ..Default::default() }).unwrap();
        assert!(seq.frames.windows(2).all(|w| w[0] == w[1]));
        assert!(seq.boxes.windows(2).all(|w| w[0] == w[1]));
        assert!(seq.occluded.iter().all(|&o| !o));
    }

    #[test]
    fn same_seed_same_sequence() {
        let cfg = suite_member(&SuiteConfig::default(), 3);
        let a = generate_sequence(&cfg).unwrap();
        let b = generate_sequence(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_sequence(&SynthConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn camera_pan_drifts_static_target() {
        let cfg = SynthConfig { length: 5, camera: CameraMotion { pan: Point2::new(1.0, 0.0), ..Default::default() }, ..Default::default() };
        let seq = generate_sequence(&cfg).unwrap();
        for (t, b) in seq.boxes.iter().enumerate() {
            assert!((b.cx - (47.5 - t as f64)).abs() < 1e-12);
            assert_eq!(b.cy, 47.5);
        }
        // background content moves left by one pixel per frame
        assert_eq!(seq.frames[1].get(10, 5), seq.frames[0].get(11, 5));
    }

    #[test]
    fn occluded_frames_hide_the_target() {
        let cfg = SynthConfig {
            length: 20,
            motion: TargetMotion::ConstantVelocity { velocity: Point2::new(2.0, 0.0) },
            start: Point2::new(20.0, 47.5),
            occlusions: vec![OcclusionWindow { start: 8, len: 5 }],
            ..Default::default()
        };
        let seq = generate_sequence(&cfg).unwrap();
        let flagged: Vec<usize> = (0..20).filter(|&t| seq.occluded[t]).collect();
        assert_eq!(flagged, vec![8, 9, 10, 11, 12]);
        // the occluder appears with the window: frame 7 shows the target
        let b7 = seq.boxes[7];
        let clean = generate_sequence(&SynthConfig { occlusions: Vec::new(), ..cfg.clone() }).unwrap();
        let (x0, x1, y0, y1) = seq.frames[7].box_pixels(&b7);
        for y in y0..y1 {
            for x in x0..x1 {
                assert_eq!(seq.frames[7].get(x, y), clean.frames[7].get(x, y));
            }
        }
        // the pixels under the target are the same in every occluded frame
        let b = seq.boxes[10];
        let (x0, x1, y0, y1) = seq.frames[10].box_pixels(&b);
        for t in 8..13 {
            for y in y0..y1 {
                for x in x0..x1 {
                    assert_eq!(seq.frames[t].get(x, y), seq.frames[10].get(x, y));
                }
            }
        }
    }

    #[test]
    fn leaving_target_is_degenerate() {
        let cfg = SynthConfig {
            length: 40,
            motion: TargetMotion::ConstantVelocity { velocity: Point2::new(5.0, 0.0) },
            ..Default::default()
        };
        assert!(matches!(generate_sequence(&cfg), Err(Error::DegenerateConfig(_))));
    }

    #[test]
    fn bad_windows_rejected() {
        let cfg = SynthConfig { occlusions: vec![OcclusionWindow { start: 48, len: 5 }], ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_suite_members_are_valid() {
        let suite = SuiteConfig::default();
        for i in 0..suite.count {
            let cfg = suite_member(&suite, i);
            cfg.validate().unwrap();
        }
    }
}
