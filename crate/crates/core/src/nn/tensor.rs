use crate::error::{Error, Result};
use crate::frame::Frame;

/// Channel-major feature map `[channels][rows][cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![0.0; c * h * w] }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::ShapeMismatch(format!("{} values for a {c}x{h}x{w} tensor", data.len())));
        }
        Ok(Self { c, h, w, data })
    }

    pub fn from_frame(f: &Frame) -> Self {
        Self { c: 1, h: f.height(), w: f.width(), data: f.data().to_vec() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn same_shape(&self, o: &Tensor3) -> bool {
        self.c == o.c && self.h == o.h && self.w == o.w
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.c, self.h, self.w]
    }

    /// Stacks channels of `parts` (all with equal spatial size).
    pub fn concat(parts: &[&Tensor3]) -> Result<Tensor3> {
        let (h, w) = match parts.first() {
            Some(t) => (t.h, t.w),
            None => return Ok(Tensor3::zeros(0, 0, 0)),
        };
        let mut data = Vec::new();
        let mut c = 0;
        for p in parts {
            if p.h != h || p.w != w {
                return Err(Error::ShapeMismatch(format!("concat {}x{} with {h}x{w}", p.h, p.w)));
            }
            data.extend_from_slice(&p.data);
            c += p.c;
        }
        Ok(Tensor3 { c, h, w, data })
    }

    /// Splits channels into consecutive groups of the given sizes.
    pub fn split(&self, sizes: &[usize]) -> Vec<Tensor3> {
        let p = self.plane();
        let mut out = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &s in sizes {
            out.push(Tensor3 { c: s, h: self.h, w: self.w, data: self.data[start * p..(start + s) * p].to_vec() });
            start += s;
        }
        out
    }

    pub fn add_assign(&mut self, o: &Tensor3) {
        debug_assert!(self.same_shape(o));
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
