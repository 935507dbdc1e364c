//! Minimal f64 neural-network layers with explicit backward passes.

mod adam;
pub mod gradcheck;
mod layers;
mod lstm;
mod tensor;

pub use adam::Adam;
pub use layers::{sigmoid, tanh_backward, tanh_inplace, Conv1d, Conv2d, ConvTranspose2d};
pub use lstm::{ConvLstmCache, ConvLstmCell, ConvLstmState};
pub use tensor::Tensor3;

/// Uniform access to a network's parameter arrays, in a fixed order.
pub trait Params {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>);
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>);

    fn named_params(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        for (name, _, _) in out.iter_mut() {
            if let Some(stripped) = name.strip_prefix('.') {
                *name = stripped.to_string();
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.collect_mut(&mut out);
        out
    }

    fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, _, v)| v.len()).sum()
    }

    fn zero(&mut self) {
        for p in self.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// A copy with every parameter set to zero, used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut g = self.clone();
        g.zero();
        g
    }

    /// Adds `other`'s parameters (same architecture) into `self`.
    fn add_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let src: Vec<Vec<f64>> = other.named_params().into_iter().map(|(_, _, v)| v.to_vec()).collect();
        for (dst, src) in self.params_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for p in self.params_mut() {
            p.iter_mut().for_each(|v| *v *= s);
        }
    }
}

impl<T: Params> Params for Vec<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
        for (i, layer) in self.iter().enumerate() {
            layer.collect(&format!("{prefix}.{i}"), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        for layer in self.iter_mut() {
            layer.collect_mut(out);
        }
    }
}
