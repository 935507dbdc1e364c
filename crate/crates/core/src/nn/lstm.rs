use rand::Rng;

use super::layers::sigmoid;
use super::{Conv2d, Params, Tensor3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmState {
    pub hidden: Tensor3,
    pub cell: Tensor3,
}

impl ConvLstmState {
    pub fn zeros(channels: usize, h: usize, w: usize) -> Self {
        Self { hidden: Tensor3::zeros(channels, h, w), cell: Tensor3::zeros(channels, h, w) }
    }
}

/// Convolutional LSTM cell. One convolution over `[x, h]` produces the
/// input, forget and output gates and the candidate, in that channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmCell {
    pub in_c: usize,
    pub hidden_c: usize,
    pub gates: Conv2d,
}

/// Activations kept for the backward pass of one cell update.
#[derive(Debug, Clone)]
pub struct ConvLstmCache {
    input: Tensor3,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl ConvLstmCell {
    pub fn new(in_c: usize, hidden_c: usize, k: usize, rng: &mut impl Rng) -> Self {
        let mut gates = Conv2d::new(in_c + hidden_c, 4 * hidden_c, k, 1, rng);
        // forget-gate bias starts open
        for b in &mut gates.bias[hidden_c..2 * hidden_c] {
            *b = 1.0;
        }
        Self { in_c, hidden_c, gates }
    }

    pub fn forward(&self, x: Option<&Tensor3>, state: &ConvLstmState) -> Result<(ConvLstmState, ConvLstmCache)> {
        let h = &state.hidden;
        if h.c != self.hidden_c || !h.same_shape(&state.cell) {
            return Err(Error::ShapeMismatch(format!(
                "state {:?}/{:?} for a cell with {} hidden channels",
                h.shape(),
                state.cell.shape(),
                self.hidden_c
            )));
        }
        let input = match x {
            Some(x) => {
                if x.c != self.in_c || x.h != h.h || x.w != h.w {
                    return Err(Error::ShapeMismatch(format!(
                        "cell input {:?}, expected [{}, {}, {}]",
                        x.shape(),
                        self.in_c,
                        h.h,
                        h.w
                    )));
                }
                Tensor3::concat(&[x, h])?
            }
            None if self.in_c == 0 => h.clone(),
            None => return Err(Error::ShapeMismatch("cell expects an input map".into())),
        };
        let pre = self.gates.forward(&input);
        let n = h.len();
        let (mut i, mut f, mut o, mut g) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for k in 0..n {
            i[k] = sigmoid(pre.data[k]);
            f[k] = sigmoid(pre.data[n + k]);
            o[k] = sigmoid(pre.data[2 * n + k]);
            g[k] = pre.data[3 * n + k].tanh();
        }
        let mut cell = Tensor3::zeros(h.c, h.h, h.w);
        let mut hidden = Tensor3::zeros(h.c, h.h, h.w);
        let mut tanh_c = vec![0.0; n];
        for k in 0..n {
            cell.data[k] = f[k] * state.cell.data[k] + i[k] * g[k];
            tanh_c[k] = cell.data[k].tanh();
            hidden.data[k] = o[k] * tanh_c[k];
        }
        let cache = ConvLstmCache { input, i, f, o, g, c_prev: state.cell.data.clone(), tanh_c };
        Ok((ConvLstmState { hidden, cell }, cache))
    }

    /// Back-propagates `(dL/dh', dL/dc')` through one update. Returns
    /// `(dL/dx, dL/dh, dL/dc)`; `dL/dx` is `None` for input-less cells.
    pub fn backward(
        &self,
        cache: &ConvLstmCache,
        dh: &Tensor3,
        dc_next: &Tensor3,
        grad: &mut ConvLstmCell,
    ) -> (Option<Tensor3>, Tensor3, Tensor3) {
        let n = dh.len();
        let mut dpre = Tensor3::zeros(4 * self.hidden_c, dh.h, dh.w);
        let mut dc_prev = Tensor3::zeros(dh.c, dh.h, dh.w);
        for k in 0..n {
            let (i, f, o, g, tc) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
            let d_o = dh.data[k] * tc;
            let dc = dc_next.data[k] + dh.data[k] * o * (1.0 - tc * tc);
            let di = dc * g;
            let dg = dc * i;
            let df = dc * cache.c_prev[k];
            dc_prev.data[k] = dc * f;
            dpre.data[k] = di * i * (1.0 - i);
            dpre.data[n + k] = df * f * (1.0 - f);
            dpre.data[2 * n + k] = d_o * o * (1.0 - o);
            dpre.data[3 * n + k] = dg * (1.0 - g * g);
        }
        let dinput = self.gates.backward(&cache.input, &dpre, &mut grad.gates);
        if self.in_c == 0 {
            (None, dinput, dc_prev)
        } else {
            let mut parts = dinput.split(&[self.in_c, self.hidden_c]).into_iter();
            let dx = parts.next();
            let dh_prev = parts.next().expect("hidden split");
            (dx, dh_prev, dc_prev)
        }
    }
}

impl Params for ConvLstmCell {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
        self.gates.collect(&format!("{prefix}.gates"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.gates.collect_mut(out);
    }
}
