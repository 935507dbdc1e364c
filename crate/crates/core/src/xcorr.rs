//! Valid-mode cross-correlation of multi-channel feature maps.
//!
//! Products are computed in the frequency domain; window statistics for the
//! normalised score come from summed-area tables. Near-flat windows, where
//! those sums lose precision, are recomputed directly.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::nn::Tensor3;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Windows whose energy falls below this are scored 0.
const FLAT_EPS: f64 = 1e-10;

fn check_shapes(search: &Tensor3, template: &Tensor3) -> Result<(usize, usize)> {
    if search.c != template.c {
        return Err(Error::ShapeMismatch(format!(
            "search has {} channels, template {}",
            search.c, template.c
        )));
    }
    if template.h == 0 || template.w == 0 || template.h > search.h || template.w > search.w {
        return Err(Error::ShapeMismatch(format!(
            "template {}x{} does not fit in search {}x{}",
            template.h, template.w, search.h, search.w
        )));
    }
    Ok((search.h - template.h + 1, search.w - template.w + 1))
}

fn fft2d(buf: &mut [Complex<f64>], rows: usize, cols: usize, inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let row_fft = if inverse { p.plan_fft_inverse(cols) } else { p.plan_fft_forward(cols) };
        let col_fft = if inverse { p.plan_fft_inverse(rows) } else { p.plan_fft_forward(rows) };
        for r in buf.chunks_exact_mut(cols) {
            row_fft.process(r);
        }
        let mut column = vec![Complex::new(0.0, 0.0); rows];
        for c in 0..cols {
            for r in 0..rows {
                column[r] = buf[r * cols + c];
            }
            col_fft.process(&mut column);
            for r in 0..rows {
                buf[r * cols + c] = column[r];
            }
        }
    });
}

/// Raw sliding dot product summed over channels:
/// `out[i][j] = Σ_c Σ_{u,v} search[c][i+u][j+v] · template[c][u][v]`.
/// Output is `(rows, cols, values)` with `rows = H - h + 1`, `cols = W - w + 1`.
pub fn correlate(search: &Tensor3, template: &Tensor3) -> Result<(usize, usize, Vec<f64>)> {
    let (orows, ocols) = check_shapes(search, template)?;
    let (rows, cols) = (search.h, search.w);
    let n = rows * cols;
    let mut acc = vec![Complex::new(0.0, 0.0); n];
    let mut s_buf = vec![Complex::new(0.0, 0.0); n];
    let mut t_buf = vec![Complex::new(0.0, 0.0); n];
    for ch in 0..search.c {
        for (dst, &v) in s_buf.iter_mut().zip(search.channel(ch)) {
            *dst = Complex::new(v, 0.0);
        }
        t_buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
        let t = template.channel(ch);
        for u in 0..template.h {
            for v in 0..template.w {
                t_buf[u * cols + v] = Complex::new(t[u * template.w + v], 0.0);
            }
        }
        fft2d(&mut s_buf, rows, cols, false);
        fft2d(&mut t_buf, rows, cols, false);
        for ((a, s), t) in acc.iter_mut().zip(&s_buf).zip(&t_buf) {
            *a += s * t.conj();
        }
    }
    fft2d(&mut acc, rows, cols, true);
    let scale = 1.0 / n as f64;
    let mut out = Vec::with_capacity(orows * ocols);
    for i in 0..orows {
        for j in 0..ocols {
            out.push(acc[i * cols + j].re * scale);
        }
    }
    Ok((orows, ocols, out))
}

/// Normalised cross-correlation: zero-mean template against unit-energy,
/// zero-mean search windows. Scores lie in `[-1, 1]`; flat windows score 0.
pub fn correlate_normalized(search: &Tensor3, template: &Tensor3) -> Result<(usize, usize, Vec<f64>)> {
    let (orows, ocols) = check_shapes(search, template)?;
    let count = (template.c * template.h * template.w) as f64;
    let t_mean = template.data.iter().sum::<f64>() / count;
    let centered = Tensor3 {
        data: template.data.iter().map(|v| v - t_mean).collect(),
        ..template.clone()
    };
    let t_energy = centered.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    // a shifted search leaves every score unchanged and the sums smaller
    let s_mean = search.data.iter().sum::<f64>() / search.data.len() as f64;
    let shifted = Tensor3 { data: search.data.iter().map(|v| v - s_mean).collect(), ..search.clone() };
    let total_s2: f64 = shifted.data.iter().map(|v| v * v).sum();
    let (_, _, num) = correlate(&shifted, &centered)?;

    // summed-area tables of x and x² over all channels
    let (h, w) = (search.h, search.w);
    let stride = w + 1;
    let mut s1 = vec![0.0; (h + 1) * stride];
    let mut s2 = vec![0.0; (h + 1) * stride];
    for y in 0..h {
        for x in 0..w {
            let mut v1 = 0.0;
            let mut v2 = 0.0;
            for ch in 0..search.c {
                let v = shifted.at(ch, y, x);
                v1 += v;
                v2 += v * v;
            }
            let i = (y + 1) * stride + x + 1;
            s1[i] = v1 + s1[i - 1] + s1[i - stride] - s1[i - stride - 1];
            s2[i] = v2 + s2[i - 1] + s2[i - stride] - s2[i - stride - 1];
        }
    }
    let rect = |s: &[f64], y: usize, x: usize| {
        let (y1, x1) = (y + template.h, x + template.w);
        s[y1 * stride + x1] - s[y * stride + x1] - s[y1 * stride + x] + s[y * stride + x]
    };
    let mut out = Vec::with_capacity(num.len());
    for i in 0..orows {
        for j in 0..ocols {
            let sum = rect(&s1, i, j);
            let sq = rect(&s2, i, j);
            let var = (sq - sum * sum / count).max(0.0);
            if var < ILL_CONDITIONED * total_s2 {
                out.push(window_pearson(search, None, template, None, i, j));
                continue;
            }
            let denom = t_energy * var.sqrt();
            out.push(if denom > FLAT_EPS { (num[i * ocols + j] / denom).clamp(-1.0, 1.0) } else { 0.0 });
        }
    }
    Ok((orows, ocols, out))
}

/// Windows whose valid overlap covers less than this share of the template's
/// valid entries score 0.
pub const MIN_OVERLAP: f64 = 0.5;

/// Masked normalised cross-correlation. Each window is scored as the Pearson
/// correlation over the entries valid (mask 1) in both the template and the
/// search; entries with mask 0 do not contribute. With all-ones masks this
/// equals [`correlate_normalized`].
pub fn correlate_masked(
    search: &Tensor3,
    search_valid: &Tensor3,
    template: &Tensor3,
    template_valid: &Tensor3,
) -> Result<(usize, usize, Vec<f64>)> {
    let (orows, ocols) = check_shapes(search, template)?;
    for (m, x, name) in [(search_valid, search, "search"), (template_valid, template, "template")] {
        if !m.same_shape(x) {
            return Err(Error::ShapeMismatch(format!("{name} mask {:?} for {name} {:?}", m.shape(), x.shape())));
        }
        if m.data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParameter(format!("{name} mask must be 0 or 1")));
        }
    }
    let t_count: f64 = template_valid.data.iter().sum();
    if t_count == 0.0 {
        return Ok((orows, ocols, vec![0.0; orows * ocols]));
    }
    // shifting by the valid means leaves the correlation unchanged and keeps
    // the variance differences below well conditioned
    let masked_mean = |x: &Tensor3, m: &Tensor3| {
        let n: f64 = m.data.iter().sum();
        if n > 0.0 {
            x.data.iter().zip(&m.data).map(|(v, w)| v * w).sum::<f64>() / n
        } else {
            0.0
        }
    };
    let map = |x: &Tensor3, m: &Tensor3, mean: f64, power: i32| Tensor3 {
        data: x.data.iter().zip(&m.data).map(|(v, w)| w * (v - mean).powi(power)).collect(),
        ..x.clone()
    };
    let (ms, mt) = (masked_mean(search, search_valid), masked_mean(template, template_valid));
    let (s1, s2) = (map(search, search_valid, ms, 1), map(search, search_valid, ms, 2));
    let (t1, t2) = (map(template, template_valid, mt, 1), map(template, template_valid, mt, 2));
    let (_, _, n) = correlate(search_valid, template_valid)?;
    let (_, _, st) = correlate(&s1, &t1)?;
    let (_, _, sum_s) = correlate(&s1, template_valid)?;
    let (_, _, sum_s2) = correlate(&s2, template_valid)?;
    let (_, _, sum_t) = correlate(search_valid, &t1)?;
    let (_, _, sum_t2) = correlate(search_valid, &t2)?;
    let total_s2: f64 = s2.data.iter().sum();
    let total_t2: f64 = t2.data.iter().sum();
    let out = (0..n.len())
        .map(|i| {
            let n = n[i].round();
            if n < MIN_OVERLAP * t_count || n < 1.0 {
                return 0.0;
            }
            let var_s = sum_s2[i] - sum_s[i] * sum_s[i] / n;
            let var_t = sum_t2[i] - sum_t[i] * sum_t[i] / n;
            // near-flat windows lose their precision in the frequency domain
            if var_s < ILL_CONDITIONED * total_s2 || var_t < ILL_CONDITIONED * total_t2 {
                return window_pearson(search, Some(search_valid), template, Some(template_valid), i / ocols, i % ocols);
            }
            let denom = (var_s * var_t).sqrt();
            if denom <= FLAT_EPS {
                return 0.0;
            }
            ((st[i] - sum_s[i] * sum_t[i] / n) / denom).clamp(-1.0, 1.0)
        })
        .collect();
    Ok((orows, ocols, out))
}

/// Window variance, relative to the whole input's energy, below which a
/// score is recomputed directly.
const ILL_CONDITIONED: f64 = 1e-7;

/// Direct Pearson correlation of the window at `(i, j)` over the entries
/// valid in both masks (`None` = all valid); the overlap is already known to
/// be large enough.
fn window_pearson(
    search: &Tensor3,
    sm: Option<&Tensor3>,
    template: &Tensor3,
    tm: Option<&Tensor3>,
    i: usize,
    j: usize,
) -> f64 {
    let valid = |m: Option<&Tensor3>, c, y, x| m.is_none_or(|m| m.at(c, y, x) == 1.0);
    let mut pairs = Vec::new();
    for c in 0..template.c {
        for u in 0..template.h {
            for v in 0..template.w {
                if valid(tm, c, u, v) && valid(sm, c, i + u, j + v) {
                    pairs.push((search.at(c, i + u, j + v), template.at(c, u, v)));
                }
            }
        }
    }
    let n = pairs.len() as f64;
    let ms = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mt = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut cov, mut vs, mut vt) = (0.0, 0.0, 0.0);
    for (a, b) in pairs {
        cov += (a - ms) * (b - mt);
        vs += (a - ms) * (a - ms);
        vt += (b - mt) * (b - mt);
    }
    let denom = (vs * vt).sqrt();
    if denom <= FLAT_EPS {
        0.0
    } else {
        (cov / denom).clamp(-1.0, 1.0)
    }
}
