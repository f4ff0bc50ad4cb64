//! Log-mel statistics speaker embedder with an analytic backward pass.
//!
//! The forward pass is classical: Hann-windowed frames, one-sided power
//! spectrum, triangular mel filterbank, log compression, mean/std pooling
//! over time, then a fixed seeded affine projection down to the embedding
//! dimension. Every stage is differentiable, and [`Embedder::backward`]
//! propagates an embedding gradient back to the raw samples.

use rustfft::num_complex::Complex;

use crate::conv;
use crate::error::{Error, Result};
use crate::rng::{fnv1a, SplitMix64};
use crate::signal::Signal;

/// Additive guard inside the log of the mel energies.
pub const MEL_LOG_EPSILON: f64 = 1e-8;

/// Additive guard inside the square root of the pooled variance.
pub const POOL_VAR_EPSILON: f64 = 1e-12;

/// Shape and seeding of one embedder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedderConfig {
    pub frame_len: usize,
    pub hop_len: usize,
    pub fft_len: usize,
    pub n_mels: usize,
    pub embedding_dim: usize,
    pub sample_rate_hz: u32,
    pub seed: u64,
}

impl EmbedderConfig {
    /// Embedder the filter is optimized against.
    pub fn optimization_default() -> Self {
        EmbedderConfig {
            frame_len: 400,
            hop_len: 160,
            fft_len: 512,
            n_mels: 24,
            embedding_dim: 32,
            sample_rate_hz: 16_000,
            seed: 101,
        }
    }

    /// Embedder used to pick the best checkpoint, distinct from the
    /// optimization embedder.
    pub fn selection_default() -> Self {
        EmbedderConfig {
            frame_len: 512,
            hop_len: 200,
            fft_len: 512,
            n_mels: 32,
            embedding_dim: 24,
            sample_rate_hz: 16_000,
            seed: 202,
        }
    }

    /// Embedder held out for scoring, seen by neither training nor
    /// selection.
    pub fn evaluation_default() -> Self {
        EmbedderConfig {
            frame_len: 400,
            hop_len: 200,
            fft_len: 512,
            n_mels: 28,
            embedding_dim: 28,
            sample_rate_hz: 16_000,
            seed: 303,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 {
            return Err(Error::invalid("frame length must be at least 2"));
        }
        if self.hop_len == 0 {
            return Err(Error::invalid("hop length must be positive"));
        }
        if self.fft_len < self.frame_len {
            return Err(Error::invalid(format!(
                "fft length {} is shorter than frame length {}",
                self.fft_len, self.frame_len
            )));
        }
        if self.fft_len % 2 != 0 {
            return Err(Error::invalid("fft length must be even"));
        }
        if self.n_mels == 0 || self.n_mels >= self.fft_len / 2 {
            return Err(Error::invalid(format!(
                "mel band count {} must be in 1..{}",
                self.n_mels,
                self.fft_len / 2
            )));
        }
        if self.embedding_dim == 0 || self.embedding_dim > 2 * self.n_mels {
            return Err(Error::invalid(format!(
                "embedding dim {} must be in 1..={}",
                self.embedding_dim,
                2 * self.n_mels
            )));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(())
    }

    /// Stable hash of every field, written into artifact headers so a
    /// mismatched embedder is caught at load time.
    pub fn hash(&self) -> u64 {
        let repr = format!(
            "frame={};hop={};fft={};mels={};dim={};rate={};seed={}",
            self.frame_len,
            self.hop_len,
            self.fft_len,
            self.n_mels,
            self.embedding_dim,
            self.sample_rate_hz,
            self.seed
        );
        fnv1a(repr.as_bytes())
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank rows over the one-sided spectrum: `n_mels` rows of
/// `fft_len / 2 + 1` weights, centers equally spaced on the mel scale from
/// 0 Hz to Nyquist.
fn mel_filterbank(config: &EmbedderConfig) -> Vec<f64> {
    let n_bins = config.fft_len / 2 + 1;
    let nyquist = config.sample_rate_hz as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..config.n_mels + 2)
        .map(|p| {
            let hz = mel_to_hz(mel_max * p as f64 / (config.n_mels + 1) as f64);
            hz * config.fft_len as f64 / config.sample_rate_hz as f64
        })
        .collect();

    let mut bank = vec![0.0; config.n_mels * n_bins];
    for m in 0..config.n_mels {
        let (lo, ctr, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut bank[m * n_bins..(m + 1) * n_bins];
        for (f, w) in row.iter_mut().enumerate() {
            let f = f as f64;
            if f > lo && f <= ctr && ctr > lo {
                *w = (f - lo) / (ctr - lo);
            } else if f > ctr && f < hi && hi > ctr {
                *w = (hi - f) / (hi - ctr);
            }
        }
    }
    bank
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct EmbedTrace {
    n_samples: usize,
    n_frames: usize,
    spectra: Vec<Complex<f64>>, // n_frames x fft_len
    mel_energies: Vec<f64>,     // n_frames x n_mels
    log_mels: Vec<f64>,         // n_frames x n_mels
    mu: Vec<f64>,               // n_mels
    sigma: Vec<f64>,            // n_mels
}

impl EmbedTrace {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }
}

/// A fully constructed embedder: window, filterbank and projection are
/// precomputed from the config and never change.
#[derive(Debug, Clone)]
pub struct Embedder {
    config: EmbedderConfig,
    hann: Vec<f64>,
    mel: Vec<f64>,  // n_mels x n_bins
    proj: Vec<f64>, // embedding_dim x (2 * n_mels)
    bias: Vec<f64>, // embedding_dim
}

impl Embedder {
    pub fn new(config: EmbedderConfig) -> Result<Self> {
        config.validate()?;
        let j = config.frame_len;
        let hann: Vec<f64> = (0..j)
            .map(|i| {
                0.5 - 0.5 * ((2.0 * std::f64::consts::PI * i as f64) / (j - 1) as f64).cos()
            })
            .collect();
        let mel = mel_filterbank(&config);

        let feat_dim = 2 * config.n_mels;
        let scale = 1.0 / (feat_dim as f64).sqrt();
        let mut rng = SplitMix64::new(config.seed);
        let proj: Vec<f64> = (0..config.embedding_dim * feat_dim)
            .map(|_| rng.next_normal() * scale)
            .collect();
        let bias: Vec<f64> = (0..config.embedding_dim)
            .map(|_| rng.next_normal() * scale)
            .collect();

        Ok(Embedder {
            config,
            hann,
            mel,
            proj,
            bias,
        })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    /// Stable digest of the realized projection parameters, used to assert
    /// that an embedder never changes across a training run.
    pub fn projection_fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity((self.proj.len() + self.bias.len()) * 8);
        for v in self.proj.iter().chain(self.bias.iter()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fnv1a(&bytes)
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    fn n_frames(&self, n: usize) -> usize {
        (n - self.config.frame_len) / self.config.hop_len + 1
    }

    fn check_input(&self, x: &Signal) -> Result<()> {
        if x.sample_rate_hz() != self.config.sample_rate_hz {
            return Err(Error::invalid(format!(
                "signal rate {} does not match embedder rate {}",
                x.sample_rate_hz(),
                self.config.sample_rate_hz
            )));
        }
        if x.len() < self.config.frame_len {
            return Err(Error::invalid(format!(
                "signal of {} samples is shorter than one {}-sample frame",
                x.len(),
                self.config.frame_len
            )));
        }
        Ok(())
    }

    /// Computes the embedding of `x`.
    pub fn extract(&self, x: &Signal) -> Result<Vec<f64>> {
        Ok(self.forward_traced(x)?.0)
    }

    /// Computes the embedding and retains the intermediates needed by
    /// [`Embedder::backward`].
    pub fn forward_traced(&self, x: &Signal) -> Result<(Vec<f64>, EmbedTrace)> {
        self.check_input(x)?;
        let cfg = &self.config;
        let n = x.len();
        let t_frames = self.n_frames(n);
        let n_bins = cfg.fft_len / 2 + 1;
        let m_bands = cfg.n_mels;
        let fft = conv::plan_forward(cfg.fft_len);
        let samples = x.samples();

        let mut spectra = vec![Complex::new(0.0, 0.0); t_frames * cfg.fft_len];
        let mut mel_energies = vec![0.0; t_frames * m_bands];
        let mut log_mels = vec![0.0; t_frames * m_bands];
        let mut power = vec![0.0; n_bins];

        for t in 0..t_frames {
            let frame = &mut spectra[t * cfg.fft_len..(t + 1) * cfg.fft_len];
            for j in 0..cfg.frame_len {
                frame[j] = Complex::new(samples[t * cfg.hop_len + j] * self.hann[j], 0.0);
            }
            fft.process(frame);
            for (f, p) in power.iter_mut().enumerate() {
                *p = frame[f].norm_sqr();
            }
            for m in 0..m_bands {
                let row = &self.mel[m * n_bins..(m + 1) * n_bins];
                let energy: f64 = row.iter().zip(power.iter()).map(|(w, p)| w * p).sum();
                mel_energies[t * m_bands + m] = energy;
                log_mels[t * m_bands + m] = (MEL_LOG_EPSILON + energy).ln();
            }
        }

        let tf = t_frames as f64;
        let mut mu = vec![0.0; m_bands];
        for t in 0..t_frames {
            for m in 0..m_bands {
                mu[m] += log_mels[t * m_bands + m];
            }
        }
        for v in mu.iter_mut() {
            *v /= tf;
        }
        let mut sigma = vec![0.0; m_bands];
        for t in 0..t_frames {
            for m in 0..m_bands {
                let d = log_mels[t * m_bands + m] - mu[m];
                sigma[m] += d * d;
            }
        }
        for v in sigma.iter_mut() {
            *v = (*v / tf + POOL_VAR_EPSILON).sqrt();
        }

        let feat_dim = 2 * m_bands;
        let mut embedding = self.bias.clone();
        for (i, e) in embedding.iter_mut().enumerate() {
            let row = &self.proj[i * feat_dim..(i + 1) * feat_dim];
            let dot_mu: f64 = row[..m_bands].iter().zip(mu.iter()).map(|(w, v)| w * v).sum();
            let dot_sg: f64 = row[m_bands..]
                .iter()
                .zip(sigma.iter())
                .map(|(w, v)| w * v)
                .sum();
            *e += dot_mu + dot_sg;
        }

        let trace = EmbedTrace {
            n_samples: n,
            n_frames: t_frames,
            spectra,
            mel_energies,
            log_mels,
            mu,
            sigma,
        };
        Ok((embedding, trace))
    }

    /// Propagates an embedding-space gradient back to the input samples.
    pub fn backward(&self, trace: &EmbedTrace, d_embedding: &[f64]) -> Vec<f64> {
        assert_eq!(d_embedding.len(), self.config.embedding_dim);
        let cfg = &self.config;
        let m_bands = cfg.n_mels;
        let n_bins = cfg.fft_len / 2 + 1;
        let feat_dim = 2 * m_bands;
        let t_frames = trace.n_frames;
        let tf = t_frames as f64;

        let mut d_feat = vec![0.0; feat_dim];
        for (i, de) in d_embedding.iter().enumerate() {
            let row = &self.proj[i * feat_dim..(i + 1) * feat_dim];
            for (df, w) in d_feat.iter_mut().zip(row.iter()) {
                *df += de * w;
            }
        }
        let (d_mu, d_sigma) = d_feat.split_at(m_bands);

        let fft = conv::plan_forward(cfg.fft_len);
        let mut dx = vec![0.0; trace.n_samples];
        let mut g = vec![Complex::new(0.0, 0.0); cfg.fft_len];

        for t in 0..t_frames {
            let spectrum = &trace.spectra[t * cfg.fft_len..(t + 1) * cfg.fft_len];
            g.iter_mut().for_each(|v| *v = Complex::new(0.0, 0.0));
            for m in 0..m_bands {
                let lb = trace.log_mels[t * m_bands + m];
                let d_lb = d_mu[m] / tf + d_sigma[m] * (lb - trace.mu[m]) / (tf * trace.sigma[m]);
                let d_energy = d_lb / (MEL_LOG_EPSILON + trace.mel_energies[t * m_bands + m]);
                let row = &self.mel[m * n_bins..(m + 1) * n_bins];
                for (f, w) in row.iter().enumerate() {
                    if *w != 0.0 {
                        g[f] += spectrum[f].conj() * (d_energy * w);
                    }
                }
            }
            fft.process(&mut g);
            for j in 0..cfg.frame_len {
                dx[t * cfg.hop_len + j] += 2.0 * g[j].re * self.hann[j];
            }
        }
        dx
    }
}

/// Cosine similarity of two equal-length vectors. Zero vectors have no
/// direction and are rejected.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "embedding dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok(dot / (na * nb))
}

/// Elementwise mean of a non-empty set of equal-length embeddings, used to
/// turn several enrolment utterances into one target vector.
pub fn average_enrolment(embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::invalid("need at least one enrolment embedding"))?;
    let dim = first.len();
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::invalid("enrolment embeddings differ in length"));
    }
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e.iter()) {
            *m += v;
        }
    }
    let count = embeddings.len() as f64;
    for m in mean.iter_mut() {
        *m /= count;
    }
    Ok(mean)
}
