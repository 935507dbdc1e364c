//! Appearance tracking by template cross-correlation.
//!
//! Any tracker that implements [`Tracker`] can drive the pipeline; the built-in
//! [`CorrelationTracker`] scores a search window around the last location
//! against a template taken from the first frame.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame::{crop_patch, Frame, Patch};
use crate::geometry::{argmax_location, BoundingBox, MapGrid, Point2, ScoreMap};
use crate::nn::{tanh_inplace, Conv2d, Params, Tensor3};
use crate::xcorr;

/// Small convolutional feature extractor: three 3×3 layers, strides 2, 2, 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvEmbedding {
    pub layers: Vec<Conv2d>,
}

impl ConvEmbedding {
    pub const STRIDE: usize = 4;
    pub const MIN_SIZE: usize = 8;

    pub fn new(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            layers: vec![
                Conv2d::new(1, channels, 3, 2, &mut rng),
                Conv2d::new(channels, channels, 3, 2, &mut rng),
                Conv2d::new(channels, channels, 3, 1, &mut rng),
            ],
        }
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i != last {
                tanh_inplace(&mut h);
            }
        }
        h
    }
}

impl Params for ConvEmbedding {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
        self.layers.collect(&format!("{prefix}.layers"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.layers.collect_mut(out);
    }
}

/// Feature embedding shared by the tracker and the background matcher.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Embedding {
    /// Raw grayscale pixels.
    #[default]
    Identity,
    Conv(ConvEmbedding),
}

impl Embedding {
    /// Pixels per feature cell.
    pub fn stride(&self) -> usize {
        match self {
            Embedding::Identity => 1,
            Embedding::Conv(_) => ConvEmbedding::STRIDE,
        }
    }

    pub fn min_size(&self) -> usize {
        match self {
            Embedding::Identity => 1,
            Embedding::Conv(_) => ConvEmbedding::MIN_SIZE,
        }
    }

    pub fn embed(&self, patch: &Frame) -> Result<Tensor3> {
        let min = self.min_size();
        if patch.width() < min || patch.height() < min {
            return Err(Error::PatchTooSmall { width: patch.width(), height: patch.height(), min });
        }
        let x = Tensor3::from_frame(patch);
        Ok(match self {
            Embedding::Identity => x,
            Embedding::Conv(net) => net.forward(&x),
        })
    }
}

/// Embeds both patches and returns the normalised correlation heatmap,
/// placed so that each cell holds the frame position of the template centre.
pub fn match_patches(embedding: &Embedding, template: &Patch, search: &Patch) -> Result<ScoreMap> {
    let zf = embedding.embed(&template.pixels)?;
    let xf = embedding.embed(&search.pixels)?;
    let (rows, cols, values) = xcorr::correlate_normalized(&xf, &zf)?;
    let half = (template.size() as f64 - 1.0) / 2.0;
    let grid = MapGrid::with_placement(rows, cols, search.origin + Point2::new(half, half), embedding.stride() as f64);
    ScoreMap::from_values(grid, values)
}

#[derive(Debug, Clone)]
pub struct TrackOutput {
    pub heatmap: ScoreMap,
    pub location: Point2,
    pub peak_score: f64,
}

/// Plug-in contract for appearance trackers.
pub trait Tracker: Send {
    fn init(&mut self, frame: &Frame, target: &BoundingBox) -> Result<()>;

    fn track(&mut self, frame: &Frame) -> Result<TrackOutput>;

    /// Re-centres the next search on `location` (the pipeline's final choice).
    fn set_location(&mut self, location: Point2);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TemplateSource {
    /// Template captured once on the initial frame.
    #[default]
    Initial,
    /// Template re-cropped from each frame at the tracked location.
    Previous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Template side in pixels; derived from the initial box when `None`.
    pub template_size: Option<usize>,
    /// Search side as a multiple of the template side.
    pub search_factor: f64,
    pub template_source: TemplateSource,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { template_size: None, search_factor: 2.0, template_source: TemplateSource::Initial }
    }
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    pub template: Patch,
    pub last_location: Point2,
    pub template_size: usize,
    pub search_size: usize,
}

#[derive(Debug, Clone)]
pub struct CorrelationTracker {
    pub config: TrackerConfig,
    pub embedding: Embedding,
    state: Option<TrackerState>,
}

impl CorrelationTracker {
    pub fn new(config: TrackerConfig, embedding: Embedding) -> Self {
        Self { config, embedding, state: None }
    }

    pub fn state(&self) -> Option<&TrackerState> {
        self.state.as_ref()
    }
}

impl Default for CorrelationTracker {
    fn default() -> Self {
        Self::new(TrackerConfig::default(), Embedding::Identity)
    }
}

impl Tracker for CorrelationTracker {
    fn init(&mut self, frame: &Frame, target: &BoundingBox) -> Result<()> {
        let template_size = self
            .config
            .template_size
            .unwrap_or_else(|| target.w.max(target.h).round() as usize)
            .max(self.embedding.min_size());
        let search_size = ((template_size as f64 * self.config.search_factor).round() as usize).max(template_size + 1);
        let template = crop_patch(frame, target.center(), template_size)?;
        self.embedding.embed(&template.pixels)?;
        self.state = Some(TrackerState { template, last_location: target.center(), template_size, search_size });
        Ok(())
    }

    fn track(&mut self, frame: &Frame) -> Result<TrackOutput> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::InvalidParameter("tracker used before init".into()))?;
        let search = crop_patch(frame, state.last_location, state.search_size)?;
        let heatmap = match_patches(&self.embedding, &state.template, &search)?;
        let location = argmax_location(&heatmap)?;
        let peak_score = heatmap.max();
        state.last_location = location;
        if self.config.template_source == TemplateSource::Previous {
            state.template = crop_patch(frame, location, state.template_size)?;
        }
        Ok(TrackOutput { heatmap, location, peak_score })
    }

    fn set_location(&mut self, location: Point2) {
        if let Some(s) = self.state.as_mut() {
            s.last_location = location;
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    fn textured(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(w, h, |_, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn identity_embedding_is_passthrough() {
        let f = textured(9, 9, 1);
        let e = Embedding::Identity.embed(&f).unwrap();
        assert_eq!(e.data, f.data());
    }

    #[test]
    fn zero_weight_conv_embedding_is_constant_bias() {
        let mut net = ConvEmbedding::new(4, 3);
        net.zero();
        for (i, b) in net.layers[2].bias.iter_mut().enumerate() {
            *b = i as f64 * 0.25;
        }
        let out = Embedding::Conv(net).embed(&textured(16, 16, 2)).unwrap();
        assert_eq!(out.shape(), [4, 4, 4]);
        for c in 0..4 {
            assert!(out.channel(c).iter().all(|&v| v == c as f64 * 0.25));
        }
    }

    #[test]
    fn conv_embedding_is_deterministic_and_checks_size() {
        let p = textured(16, 16, 4);
        let a = Embedding::Conv(ConvEmbedding::new(4, 7)).embed(&p).unwrap();
        let b = Embedding::Conv(ConvEmbedding::new(4, 7)).embed(&p).unwrap();
        assert_eq!(a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert!(matches!(
            Embedding::Conv(ConvEmbedding::new(4, 7)).embed(&textured(6, 6, 1)),
            Err(Error::PatchTooSmall { .. })
        ));
    }

    #[test]
    fn tracks_translated_copy_within_a_pixel() {
        let f0 = textured(64, 64, 9);
        let target = BoundingBox::new(30.0, 28.0, 12.0, 12.0).unwrap();
        let mut t = CorrelationTracker::default();
        t.init(&f0, &target).unwrap();
        // shift the whole scene by (3, -2)
        let f1 = Frame::from_fn(64, 64, |x, y| f0.get_or(x as isize - 3, y as isize + 2, 0.5));
        let out = t.track(&f1).unwrap();
        assert!(out.location.distance(Point2::new(33.0, 26.0)) <= 1.0, "{:?}", out.location);
        assert!((out.peak_score - 1.0).abs() < 1e-9);
        assert_eq!(out.location, argmax_location(&out.heatmap).unwrap());
        assert_eq!(out.peak_score, out.heatmap.max());
    }

    #[test]
    fn constant_scene_gives_flat_heatmap() {
        let f = Frame::filled(40, 40, 0.5);
        let mut t = CorrelationTracker::default();
        t.init(&f, &BoundingBox::new(20.0, 20.0, 8.0, 8.0).unwrap()).unwrap();
        let out = t.track(&f).unwrap();
        assert!(out.heatmap.values.iter().all(|&v| v == 0.0));
        assert_eq!(out.location, out.heatmap.grid.cell_to_pixel(0, 0));
    }

    #[test]
    fn previous_template_mode_refreshes() {
        let f0 = textured(48, 48, 5);
        let f1 = textured(48, 48, 6);
        let cfg = TrackerConfig { template_source: TemplateSource::Previous, ..Default::default() };
        let mut t = CorrelationTracker::new(cfg, Embedding::Identity);
        t.init(&f0, &BoundingBox::new(24.0, 24.0, 8.0, 8.0).unwrap()).unwrap();
        let before = t.state().unwrap().template.clone();
        t.track(&f1).unwrap();
        assert_ne!(t.state().unwrap().template, before);
    }
}
