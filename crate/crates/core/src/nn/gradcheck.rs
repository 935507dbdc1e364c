use super::Params;

/// Compares analytic gradients against central finite differences over every
/// parameter entry (or every `stride`-th one) and returns the largest relative
/// error `|a - n| / max(|a|, |n|, floor)`.
pub fn max_relative_error<P, F>(params: &P, analytic: &P, mut loss: F, h: f64, floor: f64, stride: usize) -> f64
where
    P: Params + Clone,
    F: FnMut(&P) -> f64,
{
    let grads: Vec<f64> = analytic.named_params().into_iter().flat_map(|(_, _, v)| v.to_vec()).collect();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    let n_arrays = probe.params_mut().len();
    for a in 0..n_arrays {
        let len = probe.params_mut()[a].len();
        for i in 0..len {
            let idx = flat + i;
            if idx % stride.max(1) != 0 {
                continue;
            }
            let orig = probe.params_mut()[a][i];
            probe.params_mut()[a][i] = orig + h;
            let up = loss(&probe);
            probe.params_mut()[a][i] = orig - h;
            let down = loss(&probe);
            probe.params_mut()[a][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let g = grads[idx];
            let err = (g - numeric).abs() / g.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
        flat += len;
    }
    worst
}
