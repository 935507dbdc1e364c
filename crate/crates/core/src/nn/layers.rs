use rand::Rng;

use super::{Params, Tensor3};

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-a..a)).collect()
}

/// First output index `o` with `o·stride + tap - pad >= 0`, and one past the
/// last with `o·stride + tap - pad < in_len`.
#[inline]
fn valid_range(tap: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = if tap >= pad { 0 } else { (pad - tap).div_ceil(stride) };
    let hi = if in_len + pad > tap { (in_len + pad - tap - 1) / stride + 1 } else { 0 };
    (lo.min(out_len), hi.min(out_len))
}

/// 2-D convolution with square `k`×`k` kernels and `k/2` zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    /// `[out][in][k][k]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let n = out_c * in_c * k * k;
        Self {
            in_c,
            out_c,
            k,
            stride,
            weight: glorot(rng, in_c * k * k, out_c * k * k, n),
            bias: vec![0.0; out_c],
        }
    }

    fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.pad();
        ((h + 2 * p - self.k) / self.stride + 1, (w + 2 * p - self.k) / self.stride + 1)
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        debug_assert_eq!(x.c, self.in_c);
        let (oh, ow) = self.out_size(x.h, x.w);
        let (k, s, p) = (self.k, self.stride, self.pad());
        let mut y = Tensor3::zeros(self.out_c, oh, ow);
        for o in 0..self.out_c {
            let yo = &mut y.data[o * oh * ow..(o + 1) * oh * ow];
            yo.iter_mut().for_each(|v| *v = self.bias[o]);
            for ci in 0..self.in_c {
                let xc = x.channel(ci);
                for a in 0..k {
                    let (oy0, oy1) = valid_range(a, p, s, x.h, oh);
                    for b in 0..k {
                        let wv = self.weight[((o * self.in_c + ci) * k + a) * k + b];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = valid_range(b, p, s, x.w, ow);
                        for oy in oy0..oy1 {
                            let iy = oy * s + a - p;
                            let xrow = &xc[iy * x.w..(iy + 1) * x.w];
                            let yrow = &mut yo[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let off = b as isize - p as isize;
                                for ox in ox0..ox1 {
                                    yrow[ox] += wv * xrow[(ox as isize + off) as usize];
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    yrow[ox] += wv * xrow[ox * s + b - p];
                                }
                            }
                        }
                    }
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Tensor3, dy: &Tensor3, grad: &mut Conv2d) -> Tensor3 {
        let (oh, ow) = (dy.h, dy.w);
        let (k, s, p) = (self.k, self.stride, self.pad());
        let mut dx = Tensor3::zeros(x.c, x.h, x.w);
        for o in 0..self.out_c {
            let dyo = dy.channel(o);
            grad.bias[o] += dyo.iter().sum::<f64>();
            for ci in 0..self.in_c {
                let xc = x.channel(ci);
                let plane = x.h * x.w;
                for a in 0..k {
                    let (oy0, oy1) = valid_range(a, p, s, x.h, oh);
                    for b in 0..k {
                        let widx = ((o * self.in_c + ci) * k + a) * k + b;
                        let wv = self.weight[widx];
                        let (ox0, ox1) = valid_range(b, p, s, x.w, ow);
                        let mut gw = 0.0;
                        let dxc = &mut dx.data[ci * plane..(ci + 1) * plane];
                        for oy in oy0..oy1 {
                            let iy = oy * s + a - p;
                            let dyrow = &dyo[oy * ow..(oy + 1) * ow];
                            for ox in ox0..ox1 {
                                let ix = ox * s + b - p;
                                let g = dyrow[ox];
                                gw += g * xc[iy * x.w + ix];
                                dxc[iy * x.w + ix] += wv * g;
                            }
                        }
                        grad.weight[widx] += gw;
                    }
                }
            }
        }
        dx
    }
}

impl Params for Conv2d {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
        out.push((format!("{prefix}.weight"), vec![self.out_c, self.in_c, self.k, self.k], &self.weight));
        out.push((format!("{prefix}.bias"), vec![self.out_c], &self.bias));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

/// Transposed 2-D convolution (`k`×`k`, padding `k/2`, output padding
/// `stride - 1`), so the output is exactly `stride` times the input size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    /// `[in][out][k][k]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvTranspose2d {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let n = in_c * out_c * k * k;
        Self {
            in_c,
            out_c,
            k,
            stride,
            weight: glorot(rng, in_c * k * k / (stride * stride), out_c * k * k, n),
            bias: vec![0.0; out_c],
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (h * self.stride, w * self.stride)
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        debug_assert_eq!(x.c, self.in_c);
        let (oh, ow) = self.out_size(x.h, x.w);
        let (k, s, p) = (self.k, self.stride, self.k / 2);
        let mut y = Tensor3::zeros(self.out_c, oh, ow);
        for o in 0..self.out_c {
            y.data[o * oh * ow..(o + 1) * oh * ow].iter_mut().for_each(|v| *v = self.bias[o]);
        }
        for ci in 0..self.in_c {
            let xc = x.channel(ci);
            for o in 0..self.out_c {
                let yo = &mut y.data[o * oh * ow..(o + 1) * oh * ow];
                for a in 0..k {
                    // output row = iy·s + a - p must lie in [0, oh)
                    let (iy0, iy1) = valid_range(a, p, s, oh, x.h);
                    for b in 0..k {
                        let wv = self.weight[((ci * self.out_c + o) * k + a) * k + b];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ix0, ix1) = valid_range(b, p, s, ow, x.w);
                        for iy in iy0..iy1 {
                            let oy = iy * s + a - p;
                            let xrow = &xc[iy * x.w..(iy + 1) * x.w];
                            let yrow = &mut yo[oy * ow..(oy + 1) * ow];
                            for ix in ix0..ix1 {
                                yrow[ix * s + b - p] += wv * xrow[ix];
                            }
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&self, x: &Tensor3, dy: &Tensor3, grad: &mut ConvTranspose2d) -> Tensor3 {
        let (oh, ow) = (dy.h, dy.w);
        let (k, s, p) = (self.k, self.stride, self.k / 2);
        let mut dx = Tensor3::zeros(x.c, x.h, x.w);
        for o in 0..self.out_c {
            grad.bias[o] += dy.channel(o).iter().sum::<f64>();
        }
        let plane = x.h * x.w;
        for ci in 0..self.in_c {
            let xc = x.channel(ci);
            for o in 0..self.out_c {
                let dyo = dy.channel(o);
                for a in 0..k {
                    let (iy0, iy1) = valid_range(a, p, s, oh, x.h);
                    for b in 0..k {
                        let widx = ((ci * self.out_c + o) * k + a) * k + b;
                        let wv = self.weight[widx];
                        let (ix0, ix1) = valid_range(b, p, s, ow, x.w);
                        let mut gw = 0.0;
                        let dxc = &mut dx.data[ci * plane..(ci + 1) * plane];
                        for iy in iy0..iy1 {
                            let oy = iy * s + a - p;
                            for ix in ix0..ix1 {
                                let g = dyo[oy * ow + ix * s + b - p];
                                gw += g * xc[iy * x.w + ix];
                                dxc[iy * x.w + ix] += wv * g;
                            }
                        }
                        grad.weight[widx] += gw;
                    }
                }
            }
        }
        dx
    }
}

impl Params for ConvTranspose2d {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
        out.push((format!("{prefix}.weight"), vec![self.in_c, self.out_c, self.k, self.k], &self.weight));
        out.push((format!("{prefix}.bias"), vec![self.out_c], &self.bias));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

/// 1-D convolution over a sequence, kernel `k`, zero padding `k/2`, stride 1.
/// Inputs are `[channels][length]` (a `Tensor3` with `h = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    /// `[out][in][k]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn new(in_c: usize, out_c: usize, k: usize, rng: &mut impl Rng) -> Self {
        Self {
            in_c,
            out_c,
            k,
            weight: glorot(rng, in_c * k, out_c * k, out_c * in_c * k),
            bias: vec![0.0; out_c],
        }
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        let len = x.w;
        let p = self.k / 2;
        let mut y = Tensor3::zeros(self.out_c, 1, len);
        for o in 0..self.out_c {
            for t in 0..len {
                let mut acc = self.bias[o];
                for ci in 0..self.in_c {
                    for a in 0..self.k {
                        let src = t as isize + a as isize - p as isize;
                        if src >= 0 && (src as usize) < len {
                            acc += self.weight[(o * self.in_c + ci) * self.k + a] * x.data[ci * len + src as usize];
                        }
                    }
                }
                y.data[o * len + t] = acc;
            }
        }
        y
    }

    pub fn backward(&self, x: &Tensor3, dy: &Tensor3, grad: &mut Conv1d) -> Tensor3 {
        let len = x.w;
        let p = self.k / 2;
        let mut dx = Tensor3::zeros(x.c, 1, len);
        for o in 0..self.out_c {
            for t in 0..len {
                let g = dy.data[o * len + t];
                grad.bias[o] += g;
                for ci in 0..self.in_c {
                    for a in 0..self.k {
                        let src = t as isize + a as isize - p as isize;
                        if src >= 0 && (src as usize) < len {
                            let widx = (o * self.in_c + ci) * self.k + a;
                            grad.weight[widx] += g * x.data[ci * len + src as usize];
                            dx.data[ci * len + src as usize] += g * self.weight[widx];
                        }
                    }
                }
            }
        }
        dx
    }
}

impl Params for Conv1d {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
        out.push((format!("{prefix}.weight"), vec![self.out_c, self.in_c, self.k], &self.weight));
        out.push((format!("{prefix}.bias"), vec![self.out_c], &self.bias));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

pub fn tanh_inplace(t: &mut Tensor3) {
    t.data.iter_mut().for_each(|v| *v = v.tanh());
}

/// `dy ⊙ (1 - y²)` for `y = tanh(x)`.
pub fn tanh_backward(y: &Tensor3, dy: &Tensor3) -> Tensor3 {
    Tensor3 {
        data: y.data.iter().zip(&dy.data).map(|(y, g)| g * (1.0 - y * y)).collect(),
        ..y.clone()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rand_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor3 {
        Tensor3::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct definition with explicit bounds checks.
    fn conv_reference(layer: &Conv2d, x: &Tensor3) -> Tensor3 {
        let (oh, ow) = layer.out_size(x.h, x.w);
        let p = layer.k as isize / 2;
        let mut y = Tensor3::zeros(layer.out_c, oh, ow);
        for o in 0..layer.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = layer.bias[o];
                    for ci in 0..layer.in_c {
                        for a in 0..layer.k {
                            for b in 0..layer.k {
                                let iy = (oy * layer.stride) as isize + a as isize - p;
                                let ix = (ox * layer.stride) as isize + b as isize - p;
                                if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                    acc += layer.weight[((o * layer.in_c + ci) * layer.k + a) * layer.k + b]
                                        * x.at(ci, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    y.data[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_reference_for_both_strides() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for stride in [1, 2] {
            let mut layer = Conv2d::new(3, 4, 3, stride, &mut rng);
            layer.bias = vec![0.1, -0.2, 0.3, 0.0];
            let x = rand_tensor(&mut rng, 3, 7, 8);
            let y = layer.forward(&x);
            let r = conv_reference(&layer, &x);
            assert_eq!(y.shape(), r.shape());
            for (a, b) in y.data.iter().zip(&r.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> when both share the same taps.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = Conv2d { bias: vec![0.0; 2], ..Conv2d::new(3, 2, 3, 2, &mut rng) };
        let mut tconv = ConvTranspose2d::new(2, 3, 3, 2, &mut rng);
        tconv.bias = vec![0.0; 3];
        for o in 0..2 {
            for ci in 0..3 {
                for t in 0..9 {
                    tconv.weight[(o * 3 + ci) * 9 + t] = conv.weight[(o * 3 + ci) * 9 + t];
                }
            }
        }
        let x = rand_tensor(&mut rng, 3, 8, 8);
        let y = rand_tensor(&mut rng, 2, 4, 4);
        let lhs: f64 = conv.forward(&x).data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = tconv.forward(&y).data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
