//! Points, boxes, similarity transforms and dense score maps.
//!
//! Pixel coordinates follow the image convention: `x` grows to the right,
//! `y` grows downward and integer coordinates sit on pixel centres.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Axis-aligned box in centre convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || !cx.is_finite() || !cy.is_finite() || !w.is_finite() || !h.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "box ({cx}, {cy}, {w}, {h}) needs finite centre and positive size"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from the top-left corner convention used by OTB files.
    pub fn from_top_left(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x + w / 2.0, y + h / 2.0, w, h)
    }

    pub fn centered_at(center: Point2, w: f64, h: f64) -> Self {
        Self { cx: center.x, cy: center.y, w, h }
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    pub fn translated(&self, d: Point2) -> Self {
        Self { cx: self.cx + d.x, cy: self.cy + d.y, ..*self }
    }
}

/// Intersection over union of two boxes, 0 when they do not touch.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.left().max(b.left())).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top().max(b.top())).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Rotation `rotation` (radians), isotropic `scale` and `translation`,
/// acting on coordinates relative to the frame centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub rotation: f64,
    pub scale: f64,
    pub translation: Point2,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform =
        SimilarityTransform { rotation: 0.0, scale: 1.0, translation: Point2::ZERO };

    pub fn new(rotation: f64, scale: f64, translation: Point2) -> Result<Self> {
        if !(scale > 0.0) || !rotation.is_finite() || !scale.is_finite() || !translation.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "similarity transform needs finite values and scale > 0 (got r={rotation}, c={scale})"
            )));
        }
        Ok(Self { rotation, scale, translation })
    }

    pub fn translation(v: Point2) -> Self {
        Self { translation: v, ..Self::IDENTITY }
    }

    /// `R(r)·c·p`, without the translation.
    pub fn rotate_scale(&self, p: Point2) -> Point2 {
        let (s, c) = self.rotation.sin_cos();
        Point2::new(
            self.scale * (c * p.x - s * p.y),
            self.scale * (s * p.x + c * p.y),
        )
    }

    /// `R·c·p + v` for `p` relative to the pivot.
    pub fn apply(&self, p: Point2) -> Point2 {
        self.rotate_scale(p) + self.translation
    }

    /// Applies the transform to an absolute point, pivoting about `center`.
    pub fn apply_about(&self, center: Point2, p: Point2) -> Point2 {
        center + self.apply(p - center)
    }

    pub fn inverse(&self) -> Self {
        let inv = Self { rotation: -self.rotation, scale: 1.0 / self.scale, translation: Point2::ZERO };
        Self { translation: -inv.rotate_scale(self.translation), ..inv }
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &SimilarityTransform) -> Self {
        Self {
            rotation: self.rotation + first.rotation,
            scale: self.scale * first.scale,
            translation: self.apply(first.translation),
        }
    }

    /// The step vector `r·c·v` that enters the background-motion accumulation.
    pub fn motion_vector(&self) -> Point2 {
        self.rotate_scale(self.translation)
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == 0.0 && self.scale == 1.0 && self.translation == Point2::ZERO
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AccumulationMode {
    /// `m_t = r_t c_t v_t + m_{t-1}`: the previous sum is not re-rotated.
    #[default]
    Literal,
    /// Translation part of the full similarity composition,
    /// `m_t = r_t c_t m_{t-1} + v_t`.
    Strict,
}

/// Running background motion over consecutive frame steps.
pub fn accumulate_motion(steps: &[SimilarityTransform]) -> Result<Vec<Point2>> {
    accumulate_motion_with(steps, AccumulationMode::Literal)
}

pub fn accumulate_motion_with(steps: &[SimilarityTransform], mode: AccumulationMode) -> Result<Vec<Point2>> {
    if steps.is_empty() {
        return Err(Error::NoMotionSteps);
    }
    let mut out = Vec::with_capacity(steps.len());
    let mut acc: Option<Point2> = None;
    for step in steps {
        let next = match (mode, acc) {
            (AccumulationMode::Literal, None) => step.motion_vector(),
            (AccumulationMode::Literal, Some(prev)) => step.motion_vector() + prev,
            (AccumulationMode::Strict, None) => step.translation,
            (AccumulationMode::Strict, Some(prev)) => step.rotate_scale(prev) + step.translation,
        };
        out.push(next);
        acc = Some(next);
    }
    Ok(out)
}

/// Placement of a score-map grid in frame pixels:
/// cell `(row, col)` sits at `origin + scale·(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapGrid {
    pub rows: usize,
    pub cols: usize,
    pub origin: Point2,
    pub scale: f64,
}

impl MapGrid {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, origin: Point2::ZERO, scale: 1.0 }
    }

    pub fn with_placement(rows: usize, cols: usize, origin: Point2, scale: f64) -> Self {
        Self { rows, cols, origin, scale }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_to_pixel(&self, row: usize, col: usize) -> Point2 {
        Point2::new(
            self.origin.x + self.scale * col as f64,
            self.origin.y + self.scale * row as f64,
        )
    }

    /// Continuous (row, col) index of a pixel position.
    pub fn pixel_to_cell(&self, p: Point2) -> (f64, f64) {
        ((p.y - self.origin.y) / self.scale, (p.x - self.origin.x) / self.scale)
    }

    /// Nearest cell to `p`, if it lies on the grid.
    pub fn nearest_cell(&self, p: Point2) -> Option<(usize, usize)> {
        let (r, c) = self.pixel_to_cell(p);
        let (r, c) = (r.round(), c.round());
        if r < 0.0 || c < 0.0 || r >= self.rows as f64 || c >= self.cols as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }
}

/// Dense 2-D score map (heatmaps, location maps, response maps).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub grid: MapGrid,
    pub values: Vec<f64>,
}

impl ScoreMap {
    pub fn zeros(grid: MapGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: MapGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.rows,
                grid.cols
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn rows(&self) -> usize {
        self.grid.rows
    }

    pub fn cols(&self) -> usize {
        self.grid.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.grid.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.grid.cols + col] = v;
    }

    /// Row-major first maximum, skipping NaN cells.
    pub fn argmax_cell(&self) -> Result<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        let (i, _) = best.ok_or(Error::EmptyScoreMap)?;
        Ok((i / self.grid.cols, i % self.grid.cols))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Value of the cell nearest to `p`, or `None` off the grid.
    pub fn value_at(&self, p: Point2) -> Option<f64> {
        self.grid.nearest_cell(p).map(|(r, c)| self.get(r, c))
    }
}

/// Pixel coordinates of the map's maximum (ties: lowest row, then column).
pub fn argmax_location(m: &ScoreMap) -> Result<Point2> {
    let (r, c) = m.argmax_cell()?;
    Ok(m.grid.cell_to_pixel(r, c))
}

/// `argmax_location` shifted by a three-point parabolic fit along each axis,
/// so predictions are not quantised to the cell spacing. An axis whose peak
/// sits on the border, touches a NaN or is not strictly concave keeps the
/// cell centre; the shift is at most half a cell.
pub fn refined_peak_location(m: &ScoreMap) -> Result<Point2> {
    let (r, c) = m.argmax_cell()?;
    let fit = |lo: Option<f64>, mid: f64, hi: Option<f64>| -> f64 {
        match (lo, hi) {
            (Some(a), Some(b)) if a.is_finite() && b.is_finite() => {
                let curv = a - 2.0 * mid + b;
                if curv < 0.0 {
                    (0.5 * (a - b) / curv).clamp(-0.5, 0.5)
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    };
    let g = m.grid;
    let mid = m.get(r, c);
    let dr = fit(r.checked_sub(1).map(|r| m.get(r, c)), mid, (r + 1 < g.rows).then(|| m.get(r + 1, c)));
    let dc = fit(c.checked_sub(1).map(|c| m.get(r, c)), mid, (c + 1 < g.cols).then(|| m.get(r, c + 1)));
    Ok(m.grid.cell_to_pixel(r, c) + Point2::new(dc * g.scale, dr * g.scale))
}

/// Unit-amplitude Gaussian bump centred on `peak` (pixels), sampled on `grid`.
pub fn gaussian_location_map(peak: Point2, sigma: f64, grid: MapGrid) -> Result<ScoreMap> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !peak.is_finite() {
        return Err(Error::NonFinite("gaussian peak".into()));
    }
    let denom = 2.0 * sigma * sigma;
    let mut values = Vec::with_capacity(grid.len());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let d = grid.cell_to_pixel(r, c) - peak;
            values.push((-(d.x * d.x + d.y * d.y) / denom).exp());
        }
    }
    Ok(ScoreMap { grid, values })
}

/// Default Gaussian width: a tenth of the grid's shorter side, in pixels.
pub fn default_sigma(grid: &MapGrid) -> f64 {
    grid.rows.min(grid.cols) as f64 * grid.scale / 10.0
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn identity_transform_is_identity() {
        let p = Point2::new(3.0, 4.0);
        assert_eq!(SimilarityTransform::IDENTITY.apply(p), p);
    }

    #[test]
    fn quarter_turn_and_scale_shift() {
        let t = SimilarityTransform::new(FRAC_PI_2, 1.0, Point2::ZERO).unwrap();
        let q = t.apply(Point2::new(1.0, 0.0));
        assert!((q.x - 0.0).abs() < 1e-12 && (q.y - 1.0).abs() < 1e-12);

        let t = SimilarityTransform::new(0.0, 2.0, Point2::new(1.0, 0.0)).unwrap();
        assert_eq!(t.apply(Point2::new(1.0, 1.0)), Point2::new(3.0, 2.0));
    }

    #[test]
    fn apply_about_pivots_on_center() {
        let t = SimilarityTransform::new(0.0, 2.0, Point2::ZERO).unwrap();
        let c = Point2::new(10.0, 10.0);
        assert_eq!(t.apply_about(c, c), c);
        assert_eq!(t.apply_about(c, Point2::new(11.0, 10.0)), Point2::new(12.0, 10.0));
    }

    #[test]
    fn inverse_and_compose_round_trip() {
        let t = SimilarityTransform::new(0.3, 1.2, Point2::new(2.0, -1.0)).unwrap();
        let id = t.compose(&t.inverse());
        let p = Point2::new(5.0, -7.0);
        let q = id.apply(p);
        assert!(q.distance(p) < 1e-12);
    }

    #[test]
    fn accumulation_examples() {
        let t = |r: f64, c: f64, x: f64, y: f64| SimilarityTransform::new(r, c, Point2::new(x, y)).unwrap();
        assert_eq!(accumulate_motion(&[t(0.0, 1.0, 3.0, 4.0)]).unwrap(), vec![Point2::new(3.0, 4.0)]);
        assert_eq!(
            accumulate_motion(&[t(0.0, 1.0, 1.0, 0.0), t(0.0, 1.0, 0.0, 2.0)]).unwrap(),
            vec![Point2::new(1.0, 0.0), Point2::new(1.0, 2.0)]
        );
        let m = accumulate_motion(&[t(0.0, 1.0, 1.0, 0.0), t(FRAC_PI_2, 2.0, 1.0, 0.0)]).unwrap();
        assert!(m[1].distance(Point2::new(1.0, 2.0)) < 1e-12);
        assert!(matches!(accumulate_motion(&[]), Err(Error::NoMotionSteps)));
    }

    #[test]
    fn strict_accumulation_rotates_previous_sum() {
        let t = |r: f64, c: f64, x: f64, y: f64| SimilarityTransform::new(r, c, Point2::new(x, y)).unwrap();
        let steps = [t(0.0, 1.0, 1.0, 0.0), t(FRAC_PI_2, 2.0, 1.0, 0.0)];
        let m = accumulate_motion_with(&steps, AccumulationMode::Strict).unwrap();
        // R(90°)·2·(1,0) + (1,0) = (1,2)
        assert!(m[1].distance(Point2::new(1.0, 2.0)) < 1e-12);
        let steps = [t(0.0, 1.0, 1.0, 0.0), t(FRAC_PI_2, 1.0, 0.0, 3.0)];
        let lit = accumulate_motion_with(&steps, AccumulationMode::Literal).unwrap();
        let strict = accumulate_motion_with(&steps, AccumulationMode::Strict).unwrap();
        assert!(lit[1].distance(Point2::new(-2.0, 0.0)) < 1e-12);
        assert!(strict[1].distance(Point2::new(0.0, 4.0)) < 1e-12);
    }

    #[test]
    fn iou_examples() {
        let a = bx(5.0, 5.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(50.0, 5.0, 2.0, 2.0)), 0.0);
        assert!((iou(&a, &bx(6.0, 5.0, 2.0, 2.0)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_matches_rasterized_count() {
        // Integer-aligned boxes, counted on a 0.5 px lattice.
        let a = bx(4.0, 4.0, 4.0, 2.0);
        let b = bx(5.0, 4.5, 2.0, 3.0);
        let inside = |bb: &BoundingBox, x: f64, y: f64| x > bb.left() && x < bb.right() && y > bb.top() && y < bb.bottom();
        let (mut inter, mut union) = (0usize, 0usize);
        for i in 0..40 {
            for j in 0..40 {
                let (x, y) = (i as f64 * 0.25 + 0.125, j as f64 * 0.25 + 0.125);
                let (ia, ib) = (inside(&a, x, y), inside(&b, x, y));
                inter += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
        }
        assert!((iou(&a, &b) - inter as f64 / union as f64).abs() < 1e-12);
    }

    #[test]
    fn box_validation() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        let b = BoundingBox::from_top_left(10.0, 20.0, 30.0, 40.0).unwrap();
        assert_eq!(b.center(), Point2::new(25.0, 40.0));
    }

    #[test]
    fn gaussian_values() {
        let grid = MapGrid::new(16, 16);
        let m = gaussian_location_map(Point2::new(5.0, 7.0), 2.0, grid).unwrap();
        assert_eq!(m.get(7, 5), 1.0);
        assert!((m.get(7, 7) - (-0.5f64).exp()).abs() < 1e-12);
        assert_eq!(argmax_location(&m).unwrap(), Point2::new(5.0, 7.0));
        assert!(gaussian_location_map(Point2::ZERO, 0.0, grid).is_err());
        assert!(gaussian_location_map(Point2::ZERO, -1.0, grid).is_err());
    }

    #[test]
    fn gaussian_peak_outside_grid_holds_tail() {
        let m = gaussian_location_map(Point2::new(-10.0, 3.0), 2.0, MapGrid::new(8, 8)).unwrap();
        assert_eq!(m.argmax_cell().unwrap(), (3, 0));
        assert!(m.max() < 1e-4);
    }

    #[test]
    fn argmax_tie_break_and_errors() {
        let grid = MapGrid::new(6, 6);
        let m = ScoreMap::from_values(grid, vec![0.5; 36]).unwrap();
        assert_eq!(m.argmax_cell().unwrap(), (0, 0));
        let mut m = ScoreMap::zeros(grid);
        m.set(2, 5, 1.0);
        m.set(4, 1, 1.0);
        assert_eq!(m.argmax_cell().unwrap(), (2, 5));
        let nan = ScoreMap::from_values(grid, vec![f64::NAN; 36]).unwrap();
        assert!(matches!(argmax_location(&nan), Err(Error::EmptyScoreMap)));
    }

    #[test]
    fn refined_peak_recovers_sub_cell_gaussian() {
        let grid = MapGrid::with_placement(32, 32, Point2::new(1.0, 1.0), 3.0);
        for peak in [Point2::new(47.2, 40.9), Point2::new(30.0, 31.0), Point2::new(50.4, 52.6)] {
            let m = gaussian_location_map(peak, 9.6, grid).unwrap();
            let coarse = argmax_location(&m).unwrap();
            let fine = refined_peak_location(&m).unwrap();
            assert!(fine.distance(peak) < 0.1, "{fine:?} vs {peak:?}");
            assert!(fine.distance(peak) <= coarse.distance(peak) + 1e-12);
        }
    }

    #[test]
    fn refined_peak_keeps_border_and_flat_cells() {
        let grid = MapGrid::new(4, 4);
        let mut m = ScoreMap::zeros(grid);
        m.set(0, 2, 1.0);
        m.set(0, 3, 0.5);
        // columns 0, 1, 0.5 around the peak: vertex at +1/6 cell; row 0 is a border
        assert!(refined_peak_location(&m).unwrap().distance(Point2::new(2.0 + 1.0 / 6.0, 0.0)) < 1e-12);
        let flat = ScoreMap::from_values(grid, vec![0.5; 16]).unwrap();
        assert_eq!(refined_peak_location(&flat).unwrap(), Point2::ZERO);
    }

    #[test]
    fn grid_placement_round_trip() {
        let grid = MapGrid::with_placement(10, 12, Point2::new(1.0, 1.0), 3.0);
        for r in 0..10 {
            for c in 0..12 {
                let p = grid.cell_to_pixel(r, c);
                assert_eq!(grid.nearest_cell(p), Some((r, c)));
                let q = grid.cell_to_pixel(r, c) + Point2::new(1.2, -1.4);
                let (rr, cc) = grid.nearest_cell(q).unwrap();
                assert!(grid.cell_to_pixel(rr, cc).distance(q) <= 3.0);
            }
        }
        assert_eq!(grid.nearest_cell(Point2::new(-5.0, 0.0)), None);
    }
}
