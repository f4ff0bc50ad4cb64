//! Waveforms and the K-branch polynomial filter forward pass.
//!
//! A filter has `K` branches. Branch `k` raises the input to the `k`-th
//! power elementwise, then convolves with its coefficient row modulated by a
//! Bartlett window. Branch outputs are summed and the result is normalized
//! to unit peak.

use crate::conv;
use crate::error::{Error, Result};

/// Peak threshold below which normalization passes the signal through
/// unscaled instead of dividing by a vanishing peak.
pub const LINF_EPSILON: f64 = 1e-9;

/// A finite discrete-time waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Signal {
    /// Builds a signal, rejecting empty sample lists, non-finite samples and
    /// a zero sample rate.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("signal must contain at least one sample"));
        }
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "sample {pos} is not finite: {}",
                samples[pos]
            )));
        }
        Ok(Signal {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest absolute sample value.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Same sample rate, new samples. Callers guarantee finiteness.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Signal {
        debug_assert!(!samples.is_empty());
        Signal {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Returns a copy rescaled so the peak is exactly `target`. Signals with
    /// peak below [`LINF_EPSILON`] are returned unchanged.
    pub fn rescale_peak(&self, target: f64) -> Signal {
        let peak = self.peak();
        if peak <= LINF_EPSILON {
            return self.clone();
        }
        let scale = target / peak;
        self.with_samples(self.samples.iter().map(|v| v * scale).collect())
    }
}

/// Coefficients of a K-branch filter. Branch count and length are fixed at
/// construction; lengths must be odd so the center tap has zero delay.
#[derive(Debug, Clone, PartialEq)]
pub struct MalacopulaFilter {
    coeffs: Vec<f64>, // row-major, branches x length
    branches: usize,
    length: usize,
}

fn check_shape(branches: usize, length: usize) -> Result<()> {
    if branches == 0 {
        return Err(Error::invalid("filter needs at least one branch"));
    }
    if length == 0 {
        return Err(Error::invalid("filter length must be at least 1"));
    }
    if length % 2 == 0 {
        return Err(Error::invalid(format!(
            "filter length must be odd, got {length}"
        )));
    }
    Ok(())
}

impl MalacopulaFilter {
    /// Builds a filter from row-major coefficients.
    pub fn new(branches: usize, length: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_shape(branches, length)?;
        if coeffs.len() != branches * length {
            return Err(Error::invalid(format!(
                "expected {} coefficients for a {branches}x{length} filter, got {}",
                branches * length,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("filter coefficients must be finite"));
        }
        Ok(MalacopulaFilter {
            coeffs,
            branches,
            length,
        })
    }

    /// Builds a filter from one coefficient row per branch.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let branches = rows.len();
        let length = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != length) {
            return Err(Error::invalid("all branch rows must have equal length"));
        }
        MalacopulaFilter::new(branches, length, rows.concat())
    }

    /// All-zero filter of the given shape.
    pub fn zeros(branches: usize, length: usize) -> Result<Self> {
        check_shape(branches, length)?;
        Ok(MalacopulaFilter {
            coeffs: vec![0.0; branches * length],
            branches,
            length,
        })
    }

    /// Identity configuration: branch 1 is a centered unit impulse, higher
    /// branches are zero. Applying it reproduces any unit-peak input.
    pub fn identity(branches: usize, length: usize) -> Result<Self> {
        let mut f = MalacopulaFilter::zeros(branches, length)?;
        f.coeffs[(length - 1) / 2] = 1.0;
        Ok(f)
    }

    /// Branch count K.
    pub fn branches(&self) -> usize {
        self.branches
    }

    /// Filter length L.
    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major coefficient view.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient row of branch `k` (1-based, matching the branch power).
    pub fn branch_row(&self, k: usize) -> &[f64] {
        &self.coeffs[(k - 1) * self.length..k * self.length]
    }

    /// Mutable coefficient view. The shape can never change.
    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Kernels actually convolved: each row multiplied by the Bartlett
    /// window.
    pub fn windowed_kernels(&self) -> Vec<Vec<f64>> {
        let window = bartlett_window(self.length).expect("length validated at construction");
        (1..=self.branches)
            .map(|k| {
                self.branch_row(k)
                    .iter()
                    .zip(window.iter())
                    .map(|(c, w)| c * w)
                    .collect()
            })
            .collect()
    }
}

/// Triangular window of the given length: zero at the endpoints, one at the
/// center. Length 1 degenerates to `[1]`.
pub fn bartlett_window(len: usize) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::invalid("window length must be at least 1"));
    }
    if len == 1 {
        return Ok(vec![1.0]);
    }
    let denom = (len - 1) as f64;
    Ok((0..len)
        .map(|i| 1.0 - ((2 * i) as f64 - denom).abs() / denom)
        .collect())
}

/// Elementwise k-th power, computed by iterated multiplication so odd powers
/// keep the sign of negative samples.
pub fn polynomial_branch(x: &Signal, k: u32) -> Result<Signal> {
    if k == 0 {
        return Err(Error::invalid("branch power must be at least 1"));
    }
    if k == 1 {
        return Ok(x.clone());
    }
    let mut out = x.samples().to_vec();
    for _ in 1..k {
        for (o, v) in out.iter_mut().zip(x.samples().iter()) {
            *o *= v;
        }
    }
    Ok(x.with_samples(out))
}

fn check_kernel(h: &[f64]) -> Result<()> {
    if h.is_empty() {
        return Err(Error::invalid("kernel must be non-empty"));
    }
    if h.len() % 2 == 0 {
        return Err(Error::invalid(format!(
            "kernel length must be odd, got {}",
            h.len()
        )));
    }
    Ok(())
}

/// Centered same-length convolution with zero padding. A centered unit
/// impulse kernel reproduces the input exactly.
pub fn convolve_same(x: &Signal, h: &[f64]) -> Result<Signal> {
    check_kernel(h)?;
    Ok(x.with_samples(conv::same_auto(x.samples(), h)))
}

/// Direct-evaluation route of [`convolve_same`].
pub fn convolve_same_direct(x: &Signal, h: &[f64]) -> Result<Signal> {
    check_kernel(h)?;
    Ok(x.with_samples(conv::same_direct(x.samples(), h)))
}

/// FFT overlap-add route of [`convolve_same`]. Agrees with the direct route
/// to floating-point accuracy.
pub fn convolve_same_fft(x: &Signal, h: &[f64]) -> Result<Signal> {
    check_kernel(h)?;
    Ok(x.with_samples(conv::same_fft(x.samples(), h)))
}

/// Filter forward pass before normalization: sum over branches of the
/// windowed-kernel convolution of the k-th power of the input.
pub fn hammerstein_forward(x: &Signal, filter: &MalacopulaFilter) -> Result<Signal> {
    let kernels = filter.windowed_kernels();
    let mut acc = vec![0.0; x.len()];
    let mut power = x.samples().to_vec();
    for (k, kernel) in kernels.iter().enumerate() {
        if k > 0 {
            for (p, v) in power.iter_mut().zip(x.samples().iter()) {
                *p *= v;
            }
        }
        let branch_out = conv::same_auto(&power, kernel);
        for (a, b) in acc.iter_mut().zip(branch_out.iter()) {
            *a += b;
        }
    }
    Ok(x.with_samples(acc))
}

/// Peak normalization: divide by the largest absolute value, unless that
/// peak is below [`LINF_EPSILON`], in which case the signal passes through
/// unchanged.
pub fn linf_normalize(y: &Signal) -> Signal {
    let peak = y.peak();
    if peak <= LINF_EPSILON {
        return y.clone();
    }
    y.with_samples(y.samples().iter().map(|v| v / peak).collect())
}

/// The full attack transform: filter forward pass followed by peak
/// normalization.
pub fn malacopula_apply(x: &Signal, filter: &MalacopulaFilter) -> Result<Signal> {
    Ok(linf_normalize(&hammerstein_forward(x, filter)?))
}
