//! Convolution engines behind the filter forward and backward passes.
//!
//! All routines use the same centered, zero-padded "same" convention:
//! `out[n] = sum_i h[i] * x[n + i - (L-1)/2]`, indices outside `x` read as
//! zero. `L` is always odd, so a kernel with a single 1 at the center
//! reproduces the input exactly.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan_forward(size: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(size))
}

pub(crate) fn plan_inverse(size: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(size))
}

/// Direct O(N*L) evaluation.
pub(crate) fn same_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let l = h.len();
    let c = (l - 1) / 2;
    let mut out = vec![0.0; n];
    for (pos, slot) in out.iter_mut().enumerate() {
        // valid i satisfy 0 <= pos + i - c < n
        let i_lo = c.saturating_sub(pos);
        let i_hi = l.min(n + c - pos);
        let mut acc = 0.0;
        for i in i_lo..i_hi {
            acc += h[i] * x[pos + i - c];
        }
        *slot = acc;
    }
    out
}

/// Full linear convolution `out[m] = sum_j a[j] * b[m - j]` via FFT
/// overlap-add over segments of `a`. Output length `a.len() + b.len() - 1`.
fn full_conv_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    let na = a.len();
    let nb = b.len();
    let full_len = na + nb - 1;

    // Small products fit in a single transform.
    let fft_size = if full_len <= 8192 {
        full_len.next_power_of_two()
    } else {
        (4 * nb).max(8192).next_power_of_two()
    };
    let seg_len = fft_size - nb + 1;

    let fft = plan_forward(fft_size);
    let ifft = plan_inverse(fft_size);

    let mut kernel = vec![Complex::new(0.0, 0.0); fft_size];
    for (slot, &v) in kernel.iter_mut().zip(b.iter()) {
        *slot = Complex::new(v, 0.0);
    }
    fft.process(&mut kernel);

    let scale = 1.0 / fft_size as f64;
    let mut out = vec![0.0; full_len];
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut start = 0;
    while start < na {
        let seg = &a[start..na.min(start + seg_len)];
        for slot in buf.iter_mut() {
            *slot = Complex::new(0.0, 0.0);
        }
        for (slot, &v) in buf.iter_mut().zip(seg.iter()) {
            *slot = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (v, k) in buf.iter_mut().zip(kernel.iter()) {
            *v *= *k;
        }
        ifft.process(&mut buf);
        let block_len = (seg.len() + nb - 1).min(full_len - start);
        for (offset, v) in buf.iter().take(block_len).enumerate() {
            out[start + offset] += v.re * scale;
        }
        start += seg_len;
    }
    out
}

/// FFT evaluation of the centered same convolution.
///
/// The centered operator equals full linear convolution with the reversed
/// kernel, sliced at offset `(L-1)/2`.
pub(crate) fn same_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let l = h.len();
    if l == 1 {
        return x.iter().map(|&v| v * h[0]).collect();
    }
    let c = (l - 1) / 2;
    let reversed: Vec<f64> = h.iter().rev().copied().collect();
    let full = full_conv_fft(x, &reversed);
    full[c..c + n].to_vec()
}

/// Crossover rule: direct wins for short kernels or tiny products.
pub(crate) fn same_auto(x: &[f64], h: &[f64]) -> Vec<f64> {
    if h.len() >= 65 && x.len().saturating_mul(h.len()) >= (1 << 16) {
        same_fft(x, h)
    } else {
        same_direct(x, h)
    }
}

/// Kernel-tap adjoint of the same convolution: given the output cotangent
/// `dy`, returns `d[i] = sum_n dy[n] * x[n + i - (L-1)/2]` for `i` in
/// `0..taps`. This is the gradient of the convolution output with respect to
/// each kernel tap.
pub(crate) fn correlate_taps(x: &[f64], dy: &[f64], taps: usize) -> Vec<f64> {
    let n = x.len();
    let nd = dy.len();
    let c = (taps - 1) / 2;
    if taps < 65 || n.saturating_mul(taps) < (1 << 16) {
        let mut out = vec![0.0; taps];
        for (i, slot) in out.iter_mut().enumerate() {
            let lag = i as isize - c as isize;
            let n_lo = 0.max(-lag) as usize;
            let n_hi = nd.min((n as isize - lag).max(0) as usize);
            let mut acc = 0.0;
            for pos in n_lo..n_hi {
                acc += dy[pos] * x[(pos as isize + lag) as usize];
            }
            *slot = acc;
        }
        out
    } else {
        // corr[lag] = full_conv(x, rev(dy))[nd - 1 + lag]
        let reversed: Vec<f64> = dy.iter().rev().copied().collect();
        let full = full_conv_fft(x, &reversed);
        let full_len = full.len() as isize;
        (0..taps)
            .map(|i| {
                let idx = nd as isize - 1 + i as isize - c as isize;
                if idx >= 0 && idx < full_len {
                    full[idx as usize]
                } else {
                    0.0
                }
            })
            .collect()
    }
}
