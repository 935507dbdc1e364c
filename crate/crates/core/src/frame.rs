//! Grayscale frames and patches.

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Point2};

/// Single-channel image with intensities nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {width}x{height} frame",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn center(&self) -> Point2 {
        Point2::new((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel value, or `fill` outside the frame.
    #[inline]
    pub fn get_or(&self, x: isize, y: isize, fill: f64) -> f64 {
        if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
            fill
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear sample at a continuous position; taps outside the frame read `fill`.
    pub fn sample(&self, x: f64, y: f64, fill: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.get_or(xi, yi, fill);
        let b = self.get_or(xi + 1, yi, fill);
        let c = self.get_or(xi, yi + 1, fill);
        let d = self.get_or(xi + 1, yi + 1, fill);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    /// Downsamples (or upsamples) to `cols`×`rows` by area averaging over
    /// the source footprint of each target cell.
    pub fn resize(&self, cols: usize, rows: usize) -> Frame {
        let sx = self.width as f64 / cols as f64;
        let sy = self.height as f64 / rows as f64;
        if sx >= 1.0 && sy >= 1.0 && sx.fract() == 0.0 && sy.fract() == 0.0 {
            let (bx, by) = (sx as usize, sy as usize);
            let norm = 1.0 / (bx * by) as f64;
            return Frame::from_fn(cols, rows, |c, r| {
                let mut acc = 0.0;
                for y in r * by..(r + 1) * by {
                    let row = &self.data[y * self.width + c * bx..y * self.width + (c + 1) * bx];
                    acc += row.iter().sum::<f64>();
                }
                acc * norm
            });
        }
        let fill = self.mean();
        Frame::from_fn(cols, rows, |c, r| {
            self.sample((c as f64 + 0.5) * sx - 0.5, (r as f64 + 0.5) * sy - 0.5, fill)
        })
    }

    /// Pixel index range `[x0, x1) × [y0, y1)` whose centres fall in the box,
    /// clipped to the frame.
    pub fn box_pixels(&self, b: &BoundingBox) -> (usize, usize, usize, usize) {
        let clip = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
        let x0 = clip(b.left().ceil(), self.width);
        let x1 = clip(b.right().ceil(), self.width);
        let y0 = clip(b.top().ceil(), self.height);
        let y1 = clip(b.bottom().ceil(), self.height);
        (x0, x1.max(x0), y0, y1.max(y0))
    }
}

/// Square window of a frame, remembering where its top-left pixel sits.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: Frame,
    /// Frame coordinates of pixel `(0, 0)`.
    pub origin: Point2,
}

impl Patch {
    pub fn size(&self) -> usize {
        self.pixels.width()
    }

    /// Frame coordinates of the patch centre.
    pub fn center(&self) -> Point2 {
        self.origin + self.pixels.center()
    }
}

/// Crops a `size`×`size` window centred (to the nearest pixel) on `center`.
/// Pixels that fall outside the frame take the frame mean.
pub fn crop_patch(frame: &Frame, center: Point2, size: usize) -> Result<Patch> {
    if size == 0 {
        return Err(Error::InvalidParameter("patch size must be positive".into()));
    }
    if !center.is_finite() {
        return Err(Error::NonFinite("patch centre".into()));
    }
    let half = (size as f64 - 1.0) / 2.0;
    let x0 = (center.x - half).round() as isize;
    let y0 = (center.y - half).round() as isize;
    let fill = frame.mean();
    let pixels = Frame::from_fn(size, size, |u, v| frame.get_or(x0 + u as isize, y0 + v as isize, fill));
    Ok(Patch { pixels, origin: Point2::new(x0 as f64, y0 as f64) })
}
