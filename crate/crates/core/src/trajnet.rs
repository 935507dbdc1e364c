//! Two-stream convolutional LSTM encoder-decoder for trajectory forecasting.
//!
//! Each past step feeds a location map and a downscaled frame through their
//! own five-layer conv stream; the concatenated features drive the encoder
//! cell. A second, input-less cell then unrolls from the final encoder state
//! and a transposed-conv head turns each of its hidden states into a response
//! map. All locations handled here live in the background-compensated frame
//! anchored at the last past frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{gaussian_location_map, refined_peak_location, MapGrid, Point2, ScoreMap};
use crate::nn::{tanh_backward, tanh_inplace, Adam, ConvLstmCache, ConvLstmCell, ConvLstmState, Conv2d, ConvTranspose2d, Params, Tensor3};

const STREAM_STRIDES: [usize; 5] = [1, 2, 1, 2, 1];
const HEAD_STRIDES: [usize; 3] = [2, 2, 1];
/// Total downsampling of a stream (and upsampling of the head).
pub const MAP_FACTOR: usize = 4;

/// How a past location enters the location stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocationEncoding {
    /// Gaussian location map.
    #[default]
    Map,
    /// Two constant planes holding the normalised cell coordinates.
    Coordinates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryNetConfig {
    pub past_len: usize,
    pub future_len: usize,
    pub map_rows: usize,
    pub map_cols: usize,
    /// Channels of each LSTM cell's hidden and cell state.
    pub hidden: usize,
    /// Output channels of every conv layer in the two streams and the head.
    pub stream_channels: usize,
    pub kernel: usize,
    pub use_image: bool,
    pub use_location: bool,
    pub location_encoding: LocationEncoding,
}

impl Default for TrajectoryNetConfig {
    fn default() -> Self {
        Self {
            past_len: 11,
            future_len: 5,
            map_rows: 64,
            map_cols: 64,
            hidden: 16,
            stream_channels: 8,
            kernel: 3,
            use_image: true,
            use_location: true,
            location_encoding: LocationEncoding::Map,
        }
    }
}

impl TrajectoryNetConfig {
    /// Smaller maps and channel counts for single-core training runs.
    pub fn desk() -> Self {
        Self { map_rows: 32, map_cols: 32, hidden: 8, stream_channels: 4, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.past_len == 0 || self.future_len == 0 {
            return Err(Error::InvalidParameter("past_len and future_len must be at least 1".into()));
        }
        if self.map_rows == 0 || self.map_cols == 0 || self.map_rows % MAP_FACTOR != 0 || self.map_cols % MAP_FACTOR != 0 {
            return Err(Error::InvalidParameter(format!(
                "map shape {}x{} must be a positive multiple of {MAP_FACTOR}",
                self.map_rows, self.map_cols
            )));
        }
        if self.kernel % 2 == 0 || self.hidden == 0 || self.stream_channels == 0 {
            return Err(Error::InvalidParameter("kernel must be odd and channel counts positive".into()));
        }
        if !self.use_image && !self.use_location {
            return Err(Error::InvalidParameter("at least one input stream is required".into()));
        }
        Ok(())
    }

    /// Number of predicted maps: the current frame plus `future_len`.
    pub fn outputs(&self) -> usize {
        self.future_len + 1
    }

    /// Frames a training window spans.
    pub fn window_len(&self) -> usize {
        self.past_len + self.outputs()
    }

    pub fn location_channels(&self) -> usize {
        match self.location_encoding {
            LocationEncoding::Map => 1,
            LocationEncoding::Coordinates => 2,
        }
    }

    /// Location-stream input for a compensated point.
    pub fn location_tensor(&self, p: Point2, sigma: f64, grid: MapGrid) -> Result<Tensor3> {
        match self.location_encoding {
            LocationEncoding::Map => Ok(map_tensor(&gaussian_location_map(p, sigma, grid)?)),
            LocationEncoding::Coordinates => {
                if !p.is_finite() {
                    return Err(Error::NonFinite("location".into()));
                }
                let (r, c) = grid.pixel_to_cell(p);
                let n = grid.len();
                let mut t = Tensor3::zeros(2, grid.rows, grid.cols);
                t.data[..n].fill(c / grid.cols as f64 - 0.5);
                t.data[n..].fill(r / grid.rows as f64 - 0.5);
                Ok(t)
            }
        }
    }

    fn encoder_input_channels(&self) -> usize {
        self.stream_channels * (self.use_image as usize + self.use_location as usize)
    }
}

/// Placement of a `rows`×`cols` map over a `width`×`height` frame: one
/// uniform cell pitch that covers the whole frame, centred on it, with each
/// cell at the centre of the pixel block it summarises.
pub fn map_grid(width: usize, height: usize, rows: usize, cols: usize) -> Result<MapGrid> {
    if width == 0 || height == 0 || rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter("empty frame or map".into()));
    }
    let scale = (width as f64 / cols as f64).max(height as f64 / rows as f64);
    let center = Point2::new((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let half = Point2::new((cols as f64 - 1.0) / 2.0, (rows as f64 - 1.0) / 2.0);
    Ok(MapGrid::with_placement(rows, cols, center - half * scale, scale))
}

/// Image-stream input: the frame summarised on `grid` and shifted to
/// zero-centred intensities. Integer pitches average whole pixel blocks;
/// other pitches sample bilinearly at the cell centres.
pub fn frame_tensor(frame: &Frame, grid: &MapGrid) -> Tensor3 {
    let fill = frame.mean();
    let s = grid.scale;
    let block = s.round() as usize;
    let integral = (s - block as f64).abs() < 1e-9 && block >= 1;
    let mut t = Tensor3::zeros(1, grid.rows, grid.cols);
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let p = grid.cell_to_pixel(r, c);
            let v = if integral {
                let x0 = (p.x - (s - 1.0) / 2.0).round() as isize;
                let y0 = (p.y - (s - 1.0) / 2.0).round() as isize;
                let mut acc = 0.0;
                for y in y0..y0 + block as isize {
                    for x in x0..x0 + block as isize {
                        acc += frame.get_or(x, y, fill);
                    }
                }
                acc / (block * block) as f64
            } else {
                frame.sample(p.x, p.y, fill)
            };
            t.data[r * grid.cols + c] = v - 0.5;
        }
    }
    t
}

/// A frame reduced to map resolution (one pixel per cell), for storing
/// training windows compactly.
pub fn frame_on_grid(frame: &Frame, grid: &MapGrid) -> Frame {
    let t = frame_tensor(frame, grid);
    Frame::new(grid.cols, grid.rows, t.data.iter().map(|v| v + 0.5).collect()).expect("grid-sized")
}

pub fn map_tensor(map: &ScoreMap) -> Tensor3 {
    Tensor3 { c: 1, h: map.rows(), w: map.cols(), data: map.values.clone() }
}

/// Expresses past frame-coordinate locations in the compensated frame
/// anchored at the last one: `l_k - (m_k - m_last)`.
pub fn compensate(locations: &[Point2], motion: &[Point2]) -> Result<Vec<Point2>> {
    if locations.len() != motion.len() || locations.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} locations, {} motion entries", locations.len(), motion.len())));
    }
    let anchor = *motion.last().expect("non-empty");
    Ok(locations.iter().zip(motion).map(|(&l, &m)| l - (m - anchor)).collect())
}

/// How camera motion beyond the last measured step is extrapolated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FutureMotion {
    /// Hold the accumulated motion at its last known value.
    #[default]
    Constant,
    /// Keep moving by the last measured step.
    Linear,
}

/// Offsets that carry each of the `n` predicted maps from the compensated
/// frame back to frame coordinates, given the one measured step `step`
/// between the last past frame and the current one.
pub fn future_offsets(step: Point2, n: usize, mode: FutureMotion) -> Vec<Point2> {
    (0..n)
        .map(|j| match mode {
            FutureMotion::Constant => step,
            FutureMotion::Linear => step * (j + 1) as f64,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrajectoryPrediction {
    /// Placed in frame coordinates: the sub-cell refined peak of each map is
    /// the predicted location for that frame.
    pub response_maps: Vec<ScoreMap>,
    pub locations: Vec<Point2>,
}

trait Layer {
    fn fwd(&self, x: &Tensor3) -> Tensor3;
    fn bwd(&self, x: &Tensor3, dy: &Tensor3, grad: &mut Self) -> Tensor3;
}

impl Layer for Conv2d {
    fn fwd(&self, x: &Tensor3) -> Tensor3 {
        self.forward(x)
    }
    fn bwd(&self, x: &Tensor3, dy: &Tensor3, grad: &mut Self) -> Tensor3 {
        self.backward(x, dy, grad)
    }
}

impl Layer for ConvTranspose2d {
    fn fwd(&self, x: &Tensor3) -> Tensor3 {
        self.forward(x)
    }
    fn bwd(&self, x: &Tensor3, dy: &Tensor3, grad: &mut Self) -> Tensor3 {
        self.backward(x, dy, grad)
    }
}

/// Runs a layer stack with tanh after every layer (or every layer but the
/// last). Returns all activations, input first.
fn stack_forward<L: Layer>(layers: &[L], x: Tensor3, tanh_last: bool) -> Vec<Tensor3> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x);
    for (i, layer) in layers.iter().enumerate() {
        let mut y = layer.fwd(acts.last().expect("input"));
        if tanh_last || i + 1 < layers.len() {
            tanh_inplace(&mut y);
        }
        acts.push(y);
    }
    acts
}

fn stack_backward<L: Layer>(layers: &[L], acts: &[Tensor3], dy: Tensor3, tanh_last: bool, grads: &mut [L]) -> Tensor3 {
    let mut d = dy;
    for i in (0..layers.len()).rev() {
        if tanh_last || i + 1 < layers.len() {
            d = tanh_backward(&acts[i + 1], &d);
        }
        d = layers[i].bwd(&acts[i], &d, &mut grads[i]);
    }
    d
}

/// Activations kept from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    location: Vec<Vec<Tensor3>>,
    image: Vec<Vec<Tensor3>>,
    encoder: Vec<ConvLstmCache>,
    decoder: Vec<ConvLstmCache>,
    head: Vec<Vec<Tensor3>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryNet {
    pub config: TrajectoryNetConfig,
    pub location_stream: Vec<Conv2d>,
    pub image_stream: Vec<Conv2d>,
    pub encoder: ConvLstmCell,
    pub decoder: ConvLstmCell,
    pub head: Vec<ConvTranspose2d>,
}

impl TrajectoryNet {
    pub fn new(config: TrajectoryNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, s, hid) = (config.kernel, config.stream_channels, config.hidden);
        let stream = |in_c: usize, rng: &mut ChaCha8Rng| -> Vec<Conv2d> {
            STREAM_STRIDES
                .iter()
                .enumerate()
                .map(|(i, &st)| Conv2d::new(if i == 0 { in_c } else { s }, s, k, st, rng))
                .collect()
        };
        let location_stream = if config.use_location { stream(config.location_channels(), &mut rng) } else { Vec::new() };
        let image_stream = if config.use_image { stream(1, &mut rng) } else { Vec::new() };
        let encoder = ConvLstmCell::new(config.encoder_input_channels(), hid, k, &mut rng);
        let decoder = ConvLstmCell::new(0, hid, k, &mut rng);
        let head = HEAD_STRIDES
            .iter()
            .enumerate()
            .map(|(i, &st)| {
                let in_c = if i == 0 { hid } else { s };
                let out_c = if i + 1 == HEAD_STRIDES.len() { 1 } else { s };
                ConvTranspose2d::new(in_c, out_c, k, st, &mut rng)
            })
            .collect();
        Ok(Self { config, location_stream, image_stream, encoder, decoder, head })
    }

    fn check_inputs(&self, frames: &[Tensor3], maps: &[Tensor3]) -> Result<()> {
        let c = &self.config;
        if frames.len() != c.past_len || maps.len() != c.past_len {
            return Err(Error::ShapeMismatch(format!(
                "expected {} past frames and maps, got {} and {}",
                c.past_len,
                frames.len(),
                maps.len()
            )));
        }
        let want = [1, c.map_rows, c.map_cols];
        if let Some(t) = frames.iter().find(|t| t.shape() != want) {
            return Err(Error::ShapeMismatch(format!("input frame {:?}, expected {want:?}", t.shape())));
        }
        let want = [c.location_channels(), c.map_rows, c.map_cols];
        if let Some(t) = maps.iter().find(|t| t.shape() != want) {
            return Err(Error::ShapeMismatch(format!("location input {:?}, expected {want:?}", t.shape())));
        }
        Ok(())
    }

    /// Raw forward pass on map-resolution tensors; returns one response
    /// tensor per output step and the activations for [`Self::backward`].
    pub fn forward(&self, frames: &[Tensor3], maps: &[Tensor3]) -> Result<(Vec<Tensor3>, ForwardCache)> {
        self.check_inputs(frames, maps)?;
        let c = &self.config;
        let (lh, lw) = (c.map_rows / MAP_FACTOR, c.map_cols / MAP_FACTOR);
        let mut cache = ForwardCache {
            location: Vec::new(),
            image: Vec::new(),
            encoder: Vec::with_capacity(c.past_len),
            decoder: Vec::with_capacity(c.outputs()),
            head: Vec::with_capacity(c.outputs()),
        };
        let mut state = ConvLstmState::zeros(c.hidden, lh, lw);
        for (frame, map) in frames.iter().zip(maps) {
            let mut parts = Vec::with_capacity(2);
            if c.use_location {
                let acts = stack_forward(&self.location_stream, map.clone(), true);
                parts.push(acts.last().expect("output").clone());
                cache.location.push(acts);
            }
            if c.use_image {
                let acts = stack_forward(&self.image_stream, frame.clone(), true);
                parts.push(acts.last().expect("output").clone());
                cache.image.push(acts);
            }
            let x = Tensor3::concat(&parts.iter().collect::<Vec<_>>())?;
            let (next, step) = self.encoder.forward(Some(&x), &state)?;
            cache.encoder.push(step);
            state = next;
        }
        let mut outputs = Vec::with_capacity(c.outputs());
        for _ in 0..c.outputs() {
            let (next, step) = self.decoder.forward(None, &state)?;
            cache.decoder.push(step);
            let acts = stack_forward(&self.head, next.hidden.clone(), false);
            outputs.push(acts.last().expect("output").clone());
            cache.head.push(acts);
            state = next;
        }
        Ok((outputs, cache))
    }

    /// Accumulates parameter gradients for output gradients `d_outputs`.
    pub fn backward(&self, cache: &ForwardCache, d_outputs: &[Tensor3], grad: &mut TrajectoryNet) {
        let c = &self.config;
        let (lh, lw) = (c.map_rows / MAP_FACTOR, c.map_cols / MAP_FACTOR);
        let mut dh = Tensor3::zeros(c.hidden, lh, lw);
        let mut dc = Tensor3::zeros(c.hidden, lh, lw);
        for j in (0..c.outputs()).rev() {
            let d_head = stack_backward(&self.head, &cache.head[j], d_outputs[j].clone(), false, &mut grad.head);
            dh.add_assign(&d_head);
            let (_, dh_prev, dc_prev) = self.decoder.backward(&cache.decoder[j], &dh, &dc, &mut grad.decoder);
            dh = dh_prev;
            dc = dc_prev;
        }
        let s = c.stream_channels;
        for k in (0..c.past_len).rev() {
            let (dx, dh_prev, dc_prev) = self.encoder.backward(&cache.encoder[k], &dh, &dc, &mut grad.encoder);
            dh = dh_prev;
            dc = dc_prev;
            let dx = dx.expect("encoder has an input");
            let mut parts = if c.use_location && c.use_image { dx.split(&[s, s]) } else { vec![dx] }.into_iter();
            if c.use_location {
                let d = parts.next().expect("location part");
                stack_backward(&self.location_stream, &cache.location[k], d, true, &mut grad.location_stream);
            }
            if c.use_image {
                let d = parts.next().expect("image part");
                stack_backward(&self.image_stream, &cache.image[k], d, true, &mut grad.image_stream);
            }
        }
    }

    /// Forecasts response maps for the current frame and `future_len` more.
    ///
    /// `past` holds compensated past locations, encoded on `grid` with
    /// Gaussian width `sigma`; `offsets` (one per output) carry each
    /// prediction back to frame coordinates.
    pub fn predict(
        &self,
        frames: &[Frame],
        past: &[Point2],
        grid: MapGrid,
        sigma: f64,
        offsets: &[Point2],
    ) -> Result<TrajectoryPrediction> {
        let c = &self.config;
        if offsets.len() != c.outputs() {
            return Err(Error::ShapeMismatch(format!("{} offsets for {} outputs", offsets.len(), c.outputs())));
        }
        let unit = MapGrid::new(c.map_rows, c.map_cols);
        let ft: Vec<Tensor3> = frames
            .iter()
            .map(|f| {
                if f.width() == c.map_cols && f.height() == c.map_rows {
                    frame_tensor(f, &unit)
                } else {
                    frame_tensor(f, &grid)
                }
            })
            .collect();
        let mt = past.iter().map(|&p| c.location_tensor(p, sigma, grid)).collect::<Result<Vec<_>>>()?;
        let (outs, _) = self.forward(&ft, &mt)?;
        let mut response_maps = Vec::with_capacity(outs.len());
        let mut locations = Vec::with_capacity(outs.len());
        for (out, &off) in outs.into_iter().zip(offsets) {
            let placed = MapGrid { origin: grid.origin + off, ..grid };
            let map = ScoreMap::from_values(placed, out.data)?;
            locations.push(refined_peak_location(&map)?);
            response_maps.push(map);
        }
        Ok(TrajectoryPrediction { response_maps, locations })
    }
}

impl Params for TrajectoryNet {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
        self.location_stream.collect(&format!("{prefix}.location_stream"), out);
        self.image_stream.collect(&format!("{prefix}.image_stream"), out);
        self.encoder.collect(&format!("{prefix}.encoder"), out);
        self.decoder.collect(&format!("{prefix}.decoder"), out);
        self.head.collect(&format!("{prefix}.head"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.location_stream.collect_mut(out);
        self.image_stream.collect_mut(out);
        self.encoder.collect_mut(out);
        self.decoder.collect_mut(out);
        self.head.collect_mut(out);
    }
}

/// Summed L1 distance between predicted and target maps, with its gradient.
pub fn l1_loss(pred: &[Tensor3], target: &[Tensor3]) -> Result<(f64, Vec<Tensor3>)> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions, {} targets", pred.len(), target.len())));
    }
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        if !p.same_shape(t) {
            return Err(Error::ShapeMismatch(format!("prediction {:?} vs target {:?}", p.shape(), t.shape())));
        }
        let mut g = Tensor3::zeros(p.c, p.h, p.w);
        for ((gv, a), b) in g.data.iter_mut().zip(&p.data).zip(&t.data) {
            let d = a - b;
            loss += d.abs();
            *gv = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
        grads.push(g);
    }
    Ok((loss, grads))
}

/// L1 loss of a prediction against Gaussian maps at the ground-truth points
/// (frame coordinates, on each response map's own grid).
pub fn traj_loss(pred: &TrajectoryPrediction, gt_points: &[Point2], sigma: f64) -> Result<f64> {
    if gt_points.len() != pred.response_maps.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ground-truth points for {} maps",
            gt_points.len(),
            pred.response_maps.len()
        )));
    }
    let mut loss = 0.0;
    for (map, &p) in pred.response_maps.iter().zip(gt_points) {
        let target = gaussian_location_map(p, sigma, map.grid)?;
        loss += map.values.iter().zip(&target.values).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(loss)
}

/// One training window in compensated coordinates.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    /// Past frames already at map resolution (see [`frame_on_grid`]).
    pub frames: Vec<Frame>,
    pub past: Vec<Point2>,
    /// Targets for the current frame and each future frame.
    pub future: Vec<Point2>,
    pub grid: MapGrid,
    pub sigma: f64,
}

impl TrajectorySample {
    /// Mean step length along the past track.
    pub fn mean_displacement(&self) -> f64 {
        if self.past.len() < 2 {
            return 0.0;
        }
        self.past.windows(2).map(|w| w[1].distance(w[0])).sum::<f64>() / (self.past.len() - 1) as f64
    }

    /// Network inputs and targets, with everything translated by `shift` pixels.
    pub fn tensors(&self, config: &TrajectoryNetConfig, shift: Point2) -> Result<(Vec<Tensor3>, Vec<Tensor3>, Vec<Tensor3>)> {
        let g = self.grid;
        let (dx, dy) = ((shift.x / g.scale).round() as isize, (shift.y / g.scale).round() as isize);
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let fill = f.mean();
                let moved = Frame::from_fn(f.width(), f.height(), |x, y| f.get_or(x as isize - dx, y as isize - dy, fill));
                frame_tensor(&moved, &MapGrid::new(g.rows, g.cols))
            })
            .collect();
        let inputs = self.past.iter().map(|&p| config.location_tensor(p + shift, self.sigma, g)).collect::<Result<_>>()?;
        let targets = self
            .future
            .iter()
            .map(|&p| gaussian_location_map(p + shift, self.sigma, g).map(|m| map_tensor(&m)))
            .collect::<Result<_>>()?;
        Ok((frames, inputs, targets))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Random joint translations up to the window's mean past displacement.
    pub augment: bool,
}

impl Default for TrajTrainConfig {
    fn default() -> Self {
        Self { epochs: 20, lr: 2e-4, seed: 0, augment: true }
    }
}

/// Loss and gradient for one sample without augmentation.
pub fn sample_loss(net: &TrajectoryNet, sample: &TrajectorySample, grad: Option<&mut TrajectoryNet>) -> Result<f64> {
    let (frames, maps, targets) = sample.tensors(&net.config, Point2::ZERO)?;
    let (out, cache) = net.forward(&frames, &maps)?;
    let (loss, d) = l1_loss(&out, &targets)?;
    if let Some(g) = grad {
        net.backward(&cache, &d, g);
    }
    Ok(loss)
}

/// Per-sample Adam training. Returns the mean loss of each epoch.
pub fn train_trajectory(net: &mut TrajectoryNet, samples: &[TrajectorySample], cfg: &TrajTrainConfig) -> Result<Vec<f64>> {
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
            let s = &samples[i];
            let a = if cfg.augment { s.mean_displacement() } else { 0.0 };
            let shift = if a > 0.0 { Point2::new(rng.gen_range(-a..=a), rng.gen_range(-a..=a)) } else { Point2::ZERO };
            let (frames, maps, targets) = s.tensors(&net.config, shift)?;
            let (out, cache) = net.forward(&frames, &maps)?;
            let (loss, d) = l1_loss(&out, &targets)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("trajectory loss".into()));
            }
            total += loss;
            grad.zero();
            net.backward(&cache, &d, &mut grad);
            adam.update(net, &grad);
        }
        curve.push(total / samples.len() as f64);
    }
    Ok(curve)
}
