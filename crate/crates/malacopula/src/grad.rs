//! Analytic reverse-mode gradient of the attack objective with respect to
//! the filter coefficients, plus a finite-difference verification harness.
//!
//! The objective for one utterance is
//! `loss = 1 − cos(embed(normalize(hammerstein(x, f))), target)`.
//! The backward pass differentiates every stage, including the peak
//! normalization: the peak index is frozen at its forward-pass location
//! (the loss is differentiable wherever that index is locally constant,
//! and the finite-difference checker skips points where it is not).

use crate::conv;
use crate::embedder::{cosine_similarity, EmbedTrace, Embedder};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::signal::{bartlett_window, MalacopulaFilter, Signal, LINF_EPSILON};

/// Loss gradient with the same shape as the filter it differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    branches: usize,
    length: usize,
    d_coeffs: Vec<f64>,
}

impl Gradient {
    pub(crate) fn from_parts(branches: usize, length: usize, d_coeffs: Vec<f64>) -> Gradient {
        debug_assert_eq!(d_coeffs.len(), branches * length);
        Gradient {
            branches,
            length,
            d_coeffs,
        }
    }

    pub fn branches(&self) -> usize {
        self.branches
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major view, branches x length.
    pub fn d_coeffs(&self) -> &[f64] {
        &self.d_coeffs
    }

    pub fn norm(&self) -> f64 {
        self.d_coeffs.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Intermediates recorded by one forward pass, consumed by [`backward`].
pub struct Tape<'a> {
    embedder: &'a Embedder,
    target: &'a [f64],
    kernels: Vec<Vec<f64>>,
    powers: Vec<Vec<f64>>,
    mc: Vec<f64>,
    peak_index: usize,
    peak_value: f64,
    passthrough: bool,
    trace: EmbedTrace,
    embedding: Vec<f64>,
    loss: f64,
    sample_rate_hz: u32,
}

impl<'a> Tape<'a> {
    pub fn loss(&self) -> f64 {
        self.loss
    }

    /// Index of the sample that set the normalization peak.
    pub fn peak_index(&self) -> usize {
        self.peak_index
    }

    /// True when the pre-normalization peak fell below the normalization
    /// guard and the signal passed through unscaled.
    pub fn is_passthrough(&self) -> bool {
        self.passthrough
    }

    /// Per-branch powered input signals, branch k at index k−1.
    pub fn branch_signals(&self) -> &[Vec<f64>] {
        &self.powers
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    /// Recomputes the loss from the recorded branch signals and kernels.
    /// Agreement with [`Tape::loss`] certifies the tape is intact.
    pub fn replay_loss(&self) -> Result<f64> {
        let n = self.mc.len();
        let mut mc = vec![0.0; n];
        for (power, kernel) in self.powers.iter().zip(self.kernels.iter()) {
            let branch = conv::same_auto(power, kernel);
            for (acc, v) in mc.iter_mut().zip(branch.iter()) {
                *acc += v;
            }
        }
        let peak = mc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > LINF_EPSILON {
            for v in mc.iter_mut() {
                *v /= peak;
            }
        }
        let z = Signal::new(mc, self.sample_rate_hz)?;
        let e = self.embedder.extract(&z)?;
        Ok(1.0 - cosine_similarity(&e, self.target)?)
    }
}

/// Runs the full objective on one utterance and records everything the
/// backward pass needs.
pub fn forward_with_tape<'a>(
    x: &Signal,
    filter: &MalacopulaFilter,
    embedder: &'a Embedder,
    target: &'a [f64],
) -> Result<(f64, Tape<'a>)> {
    if target.len() != embedder.embedding_dim() {
        return Err(Error::invalid(format!(
            "target dimension {} does not match embedder dimension {}",
            target.len(),
            embedder.embedding_dim()
        )));
    }
    let n = x.len();
    let k_branches = filter.branches();

    let mut powers: Vec<Vec<f64>> = Vec::with_capacity(k_branches);
    powers.push(x.samples().to_vec());
    for _ in 1..k_branches {
        let prev = powers.last().expect("at least branch 1 present");
        let next: Vec<f64> = prev.iter().zip(x.samples()).map(|(p, v)| p * v).collect();
        powers.push(next);
    }

    let kernels = filter.windowed_kernels();
    let mut mc = vec![0.0; n];
    for (power, kernel) in powers.iter().zip(kernels.iter()) {
        let branch = conv::same_auto(power, kernel);
        for (acc, v) in mc.iter_mut().zip(branch.iter()) {
            *acc += v;
        }
    }

    let mut peak_index = 0;
    let mut peak_abs = 0.0;
    for (i, v) in mc.iter().enumerate() {
        if v.abs() > peak_abs {
            peak_abs = v.abs();
            peak_index = i;
        }
    }
    let peak_value = mc[peak_index];
    let passthrough = peak_abs <= LINF_EPSILON;

    let z: Vec<f64> = if passthrough {
        mc.clone()
    } else {
        mc.iter().map(|v| v / peak_abs).collect()
    };
    let z = Signal::new(z, x.sample_rate_hz())?;
    let (embedding, trace) = embedder.forward_traced(&z)?;
    let loss = 1.0 - cosine_similarity(&embedding, target)?;

    let tape = Tape {
        embedder,
        target,
        kernels,
        powers,
        mc,
        peak_index,
        peak_value,
        passthrough,
        trace,
        embedding,
        loss,
        sample_rate_hz: x.sample_rate_hz(),
    };
    Ok((loss, tape))
}

/// Chain rule from the recorded loss back to the filter coefficients.
pub fn backward(tape: &Tape) -> Gradient {
    let e = &tape.embedding;
    let t = tape.target;
    let ne = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nt = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cs = 1.0 - tape.loss;

    // loss = 1 - cos(e, t), so d loss/d e = -(t_hat - cos * e_hat) / |e|.
    let d_embedding: Vec<f64> = e
        .iter()
        .zip(t.iter())
        .map(|(ei, ti)| -(ti / (ne * nt) - cs * ei / (ne * ne)))
        .collect();

    let dz = tape.embedder.backward(&tape.trace, &d_embedding);

    let d_mc: Vec<f64> = if tape.passthrough {
        dz
    } else {
        let d = tape.peak_value.abs();
        let s = if tape.peak_value >= 0.0 { 1.0 } else { -1.0 };
        let dot: f64 = dz.iter().zip(tape.mc.iter()).map(|(a, b)| a * b).sum();
        let mut d_mc: Vec<f64> = dz.iter().map(|v| v / d).collect();
        d_mc[tape.peak_index] -= s * dot / (d * d);
        d_mc
    };

    let length = tape.kernels[0].len();
    let window = bartlett_window(length).expect("kernel length validated at construction");
    let mut d_coeffs = Vec::with_capacity(tape.powers.len() * length);
    for power in tape.powers.iter() {
        let taps = conv::correlate_taps(power, &d_mc, length);
        d_coeffs.extend(taps.iter().zip(window.iter()).map(|(t, w)| t * w));
    }

    Gradient {
        branches: tape.powers.len(),
        length,
        d_coeffs,
    }
}

/// Outcome of one finite-difference sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Coordinates compared against central differences.
    pub checked: usize,
    /// Coordinates skipped because the normalization peak moved under the
    /// ±step perturbation, where the loss is not differentiable.
    pub skipped: usize,
    /// Whole input was degenerate: the normalization guard was active.
    pub degenerate: bool,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Coordinates sampled per check when the filter has more than this many.
const CHECK_COORD_BUDGET: usize = 64;

/// Denominator floor for the relative error, below which differences are
/// dominated by round-off rather than by the gradient itself.
const CHECK_REL_FLOOR: f64 = 1e-8;

/// Compares the analytic gradient against central finite differences of the
/// true loss at the given step, coordinate by coordinate. Coordinates where
/// the perturbation moves the normalization peak are skipped and counted;
/// an input whose forward pass hits the normalization guard is reported
/// degenerate without any comparisons.
pub fn check_gradient(
    x: &Signal,
    filter: &MalacopulaFilter,
    embedder: &Embedder,
    target: &[f64],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if step <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let n_coeffs = filter.branches() * filter.len();
    let (_, tape) = forward_with_tape(x, filter, embedder, target)?;
    if tape.is_passthrough() {
        return Ok(GradCheckReport {
            checked: 0,
            skipped: n_coeffs.min(CHECK_COORD_BUDGET),
            degenerate: true,
            max_rel_err: f64::INFINITY,
            passed: false,
        });
    }
    let base_peak = tape.peak_index();
    let grad = backward(&tape);

    let coords: Vec<usize> = if n_coeffs <= CHECK_COORD_BUDGET {
        (0..n_coeffs).collect()
    } else {
        let mut all: Vec<usize> = (0..n_coeffs).collect();
        let mut rng = SplitMix64::new(0x6bfd_90e1);
        rng.shuffle(&mut all);
        all.truncate(CHECK_COORD_BUDGET);
        all
    };

    let mut checked = 0;
    let mut skipped = 0;
    let mut max_rel_err = 0.0f64;
    let mut perturbed = filter.clone();
    for &coord in coords.iter() {
        let orig = perturbed.coeffs()[coord];

        perturbed.coeffs_mut()[coord] = orig + step;
        let (loss_up, tape_up) = forward_with_tape(x, &perturbed, embedder, target)?;
        perturbed.coeffs_mut()[coord] = orig - step;
        let (loss_down, tape_down) = forward_with_tape(x, &perturbed, embedder, target)?;
        perturbed.coeffs_mut()[coord] = orig;

        if tape_up.is_passthrough()
            || tape_down.is_passthrough()
            || tape_up.peak_index() != base_peak
            || tape_down.peak_index() != base_peak
        {
            skipped += 1;
            continue;
        }

        let fd = (loss_up - loss_down) / (2.0 * step);
        let analytic = grad.d_coeffs()[coord];
        let denom = analytic.abs().max(fd.abs()).max(CHECK_REL_FLOOR);
        max_rel_err = max_rel_err.max((analytic - fd).abs() / denom);
        checked += 1;
    }

    Ok(GradCheckReport {
        checked,
        skipped,
        degenerate: false,
        max_rel_err,
        passed: checked > 0 && max_rel_err < tolerance,
    })
}
