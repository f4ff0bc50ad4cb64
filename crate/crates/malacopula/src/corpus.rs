//! Deterministic synthetic speaker corpus and spoofing-attack generator.
//!
//! Speakers are sums of a pitch (with two harmonics) and a handful of
//! formant-like sinusoidal components drawn from disjoint spectral bands,
//! over a low noise floor. Utterances add seeded per-utterance jitter so the
//! same speaker produces similar-but-not-identical embeddings; spoofing
//! attacks perturb the synthesis or the waveform with a tunable severity.
//! Everything is seeded through [`derive_seed`], so corpora are reproducible
//! bit-for-bit regardless of worker count.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::protocol::{read_protocol, write_protocol};
use crate::io::wav::{read_wav, write_wav};
use crate::rng::{derive_seed, SplitMix64};
use crate::signal::Signal;

/// All corpus audio is generated and stored at this rate.
pub const CORPUS_SAMPLE_RATE_HZ: u32 = 16_000;

/// Peak amplitude of generated utterances, leaving headroom below the
/// 16-bit full scale.
pub const UTTERANCE_PEAK: f64 = 0.9;

const MIN_DURATION_S: f64 = 0.5;
const HARMONIC_AMPS: [f64; 3] = [1.0, 0.55, 0.3];
const FORMANT_BANDS: [(f64, f64); 9] = [
    (400.0, 650.0),
    (650.0, 950.0),
    (950.0, 1400.0),
    (1400.0, 2000.0),
    (2000.0, 2800.0),
    (2800.0, 3800.0),
    (3800.0, 5000.0),
    (5000.0, 6200.0),
    (6200.0, 7300.0),
];
// Leaves room for detune attacks to shift components upward without
// crossing Nyquist.
const MAX_COMPONENT_HZ: f64 = 7_600.0;

/// A synthetic speaker: pitch base, formant-like components, and noise floor.
#[derive(Debug, Clone)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub pitch_hz: f64,
    pub component_freqs_hz: Vec<f64>,
    pub component_amps: Vec<f64>,
    pub noise_floor: f64,
    pub seed: u64,
}

impl SpeakerProfile {
    /// Deterministically samples the profile for speaker `index` of a corpus.
    pub fn generate(index: usize, corpus_seed: u64) -> SpeakerProfile {
        let speaker_id = format!("S{:02}", index + 1);
        let seed = derive_seed(corpus_seed, &format!("speaker/{speaker_id}"));
        let mut rng = SplitMix64::new(seed);
        // Pitch spacing is structural so speakers never collide.
        let pitch_hz = 85.0 + 14.0 * index as f64 + rng.uniform(0.0, 8.0);
        Self::sample(speaker_id, pitch_hz, seed, &mut rng)
    }

    fn sample(speaker_id: String, pitch_hz: f64, seed: u64, rng: &mut SplitMix64) -> SpeakerProfile {
        let n_components = 3 + rng.next_below(3) as usize;
        let mut bands: Vec<usize> = (0..FORMANT_BANDS.len()).collect();
        rng.shuffle(&mut bands);
        let mut chosen: Vec<usize> = bands.into_iter().take(n_components).collect();
        chosen.sort_unstable();
        let component_freqs_hz: Vec<f64> = chosen
            .iter()
            .map(|&b| {
                let (lo, hi) = FORMANT_BANDS[b];
                rng.uniform(lo, hi)
            })
            .collect();
        let component_amps: Vec<f64> =
            (0..n_components).map(|_| rng.uniform(0.25, 0.7)).collect();
        let noise_floor = rng.uniform(0.0025, 0.008);
        SpeakerProfile {
            speaker_id,
            pitch_hz,
            component_freqs_hz,
            component_amps,
            noise_floor,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.speaker_id.is_empty() {
            return Err(Error::invalid("speaker_id must be non-empty"));
        }
        let n = self.component_freqs_hz.len();
        if !(3..=5).contains(&n) {
            return Err(Error::invalid(format!(
                "speaker {} has {n} components; expected 3 to 5",
                self.speaker_id
            )));
        }
        if self.component_amps.len() != n {
            return Err(Error::invalid("component amplitude count mismatch"));
        }
        if !(self.pitch_hz.is_finite() && self.pitch_hz > 0.0) {
            return Err(Error::invalid("pitch must be positive and finite"));
        }
        if !(self.noise_floor.is_finite() && self.noise_floor >= 0.0) {
            return Err(Error::invalid("noise floor must be non-negative"));
        }
        for window in self.component_freqs_hz.windows(2) {
            if window[1] <= window[0] {
                return Err(Error::invalid("component frequencies must be strictly increasing"));
            }
        }
        let top = self
            .component_freqs_hz
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(3.0 * self.pitch_hz);
        if top >= MAX_COMPONENT_HZ {
            return Err(Error::invalid(format!(
                "speaker {} has a component at {top:.0} Hz, too close to Nyquist",
                self.speaker_id
            )));
        }
        if self.component_amps.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::invalid("component amplitudes must be positive"));
        }
        Ok(())
    }
}

/// The waveform transformation a spoofing attack applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    /// Scale every component frequency by (1 + severity/100).
    Detune,
    /// Memoryless warp sign(x)·|x|^(1+severity).
    AmplitudeWarp,
    /// Mix with white noise at ratio severity.
    NoiseMix,
    /// Mix with a decoy speaker's utterance at ratio severity.
    ComponentSwap,
}

impl AttackKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::Detune => "detune",
            AttackKind::AmplitudeWarp => "amp_warp",
            AttackKind::NoiseMix => "noise_mix",
            AttackKind::ComponentSwap => "component_swap",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detune" => Ok(AttackKind::Detune),
            "amp_warp" => Ok(AttackKind::AmplitudeWarp),
            "noise_mix" => Ok(AttackKind::NoiseMix),
            "component_swap" => Ok(AttackKind::ComponentSwap),
            other => Err(Error::invalid(format!(
                "unknown attack kind {other:?}; expected detune, amp_warp, noise_mix, or component_swap"
            ))),
        }
    }
}

/// One spoofing algorithm: an id, a transformation kind, and a severity.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub attack_id: String,
    pub kind: AttackKind,
    pub severity: f64,
}

impl AttackSpec {
    pub fn new(attack_id: impl Into<String>, kind: AttackKind, severity: f64) -> AttackSpec {
        AttackSpec { attack_id: attack_id.into(), kind, severity }
    }

    pub fn validate(&self) -> Result<()> {
        if self.attack_id.is_empty() || self.attack_id.contains(char::is_whitespace) {
            return Err(Error::invalid("attack_id must be non-empty and free of whitespace"));
        }
        if !(self.severity.is_finite() && self.severity > 0.0) {
            return Err(Error::invalid(format!(
                "attack {} severity must be > 0",
                self.attack_id
            )));
        }
        if self.kind == AttackKind::Detune && self.severity > 4.0 {
            return Err(Error::invalid(format!(
                "attack {}: detune severity above 4% can push components past Nyquist",
                self.attack_id
            )));
        }
        if matches!(self.kind, AttackKind::NoiseMix | AttackKind::ComponentSwap)
            && self.severity >= 1.0
        {
            return Err(Error::invalid(format!(
                "attack {}: mix ratio must be below 1",
                self.attack_id
            )));
        }
        Ok(())
    }
}

/// The four default attacks: severities are spread so some sit close to the
/// target distribution (strong attacks) and others far from it (weak ones).
pub fn default_attacks() -> Vec<AttackSpec> {
    vec![
        AttackSpec::new("A01", AttackKind::Detune, 2.5),
        AttackSpec::new("A02", AttackKind::AmplitudeWarp, 0.45),
        AttackSpec::new("A03", AttackKind::NoiseMix, 0.3),
        AttackSpec::new("A04", AttackKind::ComponentSwap, 0.5),
    ]
}

fn jittered_components(profile: &SpeakerProfile, rng: &mut SplitMix64) -> Vec<(f64, f64, f64)> {
    let mut components = Vec::with_capacity(3 + profile.component_freqs_hz.len());
    let pitch = profile.pitch_hz * (1.0 + rng.uniform(-0.01, 0.01));
    for (h, amp) in HARMONIC_AMPS.iter().enumerate() {
        let freq = pitch * (h + 1) as f64;
        let amp = amp * (1.0 + rng.uniform(-0.1, 0.1));
        let phase = rng.uniform(0.0, std::f64::consts::TAU);
        components.push((freq, amp, phase));
    }
    for (freq, amp) in profile.component_freqs_hz.iter().zip(&profile.component_amps) {
        let freq = freq * (1.0 + rng.uniform(-0.01, 0.01));
        let amp = amp * (1.0 + rng.uniform(-0.1, 0.1));
        let phase = rng.uniform(0.0, std::f64::consts::TAU);
        components.push((freq, amp, phase));
    }
    components
}

fn synthesize(profile: &SpeakerProfile, duration_s: f64, rng: &mut SplitMix64) -> Vec<f64> {
    let n = (duration_s * CORPUS_SAMPLE_RATE_HZ as f64).round() as usize;
    let components = jittered_components(profile, rng);
    let dt = 1.0 / CORPUS_SAMPLE_RATE_HZ as f64;
    let mut samples = vec![0.0; n];
    for (freq, amp, phase) in components {
        let omega = std::f64::consts::TAU * freq * dt;
        for (t, s) in samples.iter_mut().enumerate() {
            *s += amp * (omega * t as f64 + phase).sin();
        }
    }
    for s in samples.iter_mut() {
        *s += profile.noise_floor * rng.next_normal();
    }
    samples
}

fn normalize_peak(samples: &mut [f64]) {
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let scale = UTTERANCE_PEAK / peak;
        for s in samples.iter_mut() {
            *s *= scale;
        }
    }
}

/// Generates one bona fide utterance for a speaker. Deterministic in
/// (profile, utt_seed); duration must be at least half a second.
pub fn generate_utterance(
    profile: &SpeakerProfile,
    duration_s: f64,
    utt_seed: u64,
) -> Result<Signal> {
    profile.validate()?;
    if !(duration_s.is_finite() && duration_s >= MIN_DURATION_S) {
        return Err(Error::invalid(format!(
            "utterance duration must be at least {MIN_DURATION_S} s"
        )));
    }
    let mut rng = SplitMix64::new(derive_seed(profile.seed, &format!("utterance/{utt_seed}")));
    let mut samples = synthesize(profile, duration_s, &mut rng);
    normalize_peak(&mut samples);
    Signal::new(samples, CORPUS_SAMPLE_RATE_HZ)
}

fn decoy_profile(target: &SpeakerProfile, attack_id: &str) -> SpeakerProfile {
    let seed = derive_seed(target.seed, &format!("decoy/{attack_id}"));
    let mut rng = SplitMix64::new(seed);
    let pitch = rng.uniform(95.0, 245.0);
    SpeakerProfile::sample(format!("{}-decoy", target.speaker_id), pitch, seed, &mut rng)
}

/// Generates a spoofed utterance: synthesizes a target-speaker utterance,
/// then applies the attack transformation at its severity. Severity → 0
/// approaches the bona fide distribution.
pub fn generate_spoof(
    target_profile: &SpeakerProfile,
    attack: &AttackSpec,
    duration_s: f64,
    utt_seed: u64,
) -> Result<Signal> {
    attack.validate()?;
    let mut attack_rng = SplitMix64::new(derive_seed(
        target_profile.seed,
        &format!("attack/{}/{utt_seed}", attack.attack_id),
    ));
    let signal = match attack.kind {
        AttackKind::Detune => {
            let mut detuned = target_profile.clone();
            let scale = 1.0 + attack.severity / 100.0;
            detuned.pitch_hz *= scale;
            for f in detuned.component_freqs_hz.iter_mut() {
                *f *= scale;
            }
            return generate_utterance(&detuned, duration_s, utt_seed);
        }
        AttackKind::AmplitudeWarp => {
            let base = generate_utterance(target_profile, duration_s, utt_seed)?;
            let expo = 1.0 + attack.severity;
            let mut samples: Vec<f64> = base
                .samples()
                .iter()
                .map(|x| x.signum() * x.abs().powf(expo))
                .collect();
            normalize_peak(&mut samples);
            Signal::new(samples, CORPUS_SAMPLE_RATE_HZ)?
        }
        AttackKind::NoiseMix => {
            let base = generate_utterance(target_profile, duration_s, utt_seed)?;
            let mut noise: Vec<f64> = (0..base.len()).map(|_| attack_rng.next_normal()).collect();
            normalize_peak(&mut noise);
            let alpha = attack.severity;
            let mut samples: Vec<f64> = base
                .samples()
                .iter()
                .zip(&noise)
                .map(|(x, n)| (1.0 - alpha) * x + alpha * n)
                .collect();
            normalize_peak(&mut samples);
            Signal::new(samples, CORPUS_SAMPLE_RATE_HZ)?
        }
        AttackKind::ComponentSwap => {
            let base = generate_utterance(target_profile, duration_s, utt_seed)?;
            let decoy = decoy_profile(target_profile, &attack.attack_id);
            let decoy_seed = derive_seed(utt_seed, "decoy-utterance");
            let decoy_utt = generate_utterance(&decoy, duration_s, decoy_seed)?;
            let alpha = attack.severity;
            let mut samples: Vec<f64> = base
                .samples()
                .iter()
                .zip(decoy_utt.samples())
                .map(|(x, d)| (1.0 - alpha) * x + alpha * d)
                .collect();
            normalize_peak(&mut samples);
            Signal::new(samples, CORPUS_SAMPLE_RATE_HZ)?
        }
    };
    Ok(signal)
}

/// Role of an utterance in the trial protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UtteranceRole {
    Enrol,
    Target,
    Spoof,
}

impl UtteranceRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            UtteranceRole::Enrol => "enrol",
            UtteranceRole::Target => "target",
            UtteranceRole::Spoof => "spoof",
        }
    }
}

impl fmt::Display for UtteranceRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UtteranceRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enrol" => Ok(UtteranceRole::Enrol),
            "target" => Ok(UtteranceRole::Target),
            "spoof" => Ok(UtteranceRole::Spoof),
            other => Err(Error::format(format!(
                "unknown protocol role {other:?}; expected enrol, target, or spoof"
            ))),
        }
    }
}

/// One protocol entry: who spoke, which utterance, which attack (spoofs
/// only), and where the audio lives relative to the protocol file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub role: UtteranceRole,
    pub speaker_id: String,
    pub utterance_id: String,
    pub attack_id: Option<String>,
    pub rel_path: String,
}

/// The full trial listing of a corpus.
#[derive(Debug, Clone, Default)]
pub struct TrialProtocol {
    pub entries: Vec<UtteranceRecord>,
}

/// An utterance with its audio loaded.
#[derive(Debug, Clone)]
pub struct CorpusUtterance {
    pub record: UtteranceRecord,
    pub signal: Signal,
}

/// An in-memory corpus: speaker profiles (empty when loaded from disk),
/// utterances with audio, and any generation warnings.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub speakers: Vec<SpeakerProfile>,
    pub utterances: Vec<CorpusUtterance>,
    pub warnings: Vec<String>,
}

impl Corpus {
    pub fn protocol(&self) -> TrialProtocol {
        TrialProtocol {
            entries: self.utterances.iter().map(|u| u.record.clone()).collect(),
        }
    }

    pub fn signal_for(&self, utterance_id: &str) -> Option<&Signal> {
        self.utterances
            .iter()
            .find(|u| u.record.utterance_id == utterance_id)
            .map(|u| &u.signal)
    }
}

/// Shape and seeding of a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_speakers: usize,
    pub n_enrol: usize,
    pub n_target: usize,
    pub n_spoof_per_attack: usize,
    pub attacks: Vec<AttackSpec>,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_speakers: 8,
            n_enrol: 3,
            n_target: 10,
            n_spoof_per_attack: 10,
            attacks: default_attacks(),
            duration_s: 1.0,
            seed: 1234,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers < 1
            || self.n_enrol < 1
            || self.n_target < 1
            || self.n_spoof_per_attack < 1
        {
            return Err(Error::invalid("all corpus counts must be at least 1"));
        }
        if !(self.duration_s.is_finite() && self.duration_s >= MIN_DURATION_S) {
            return Err(Error::invalid(format!(
                "corpus duration must be at least {MIN_DURATION_S} s"
            )));
        }
        if self.attacks.is_empty() {
            return Err(Error::invalid("at least one attack is required"));
        }
        let mut ids = HashSet::new();
        for attack in &self.attacks {
            attack.validate()?;
            if !ids.insert(attack.attack_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate attack_id {}",
                    attack.attack_id
                )));
            }
        }
        Ok(())
    }
}

enum UttPlan<'a> {
    Bona { profile: &'a SpeakerProfile, role: UtteranceRole, index: usize },
    Spoof { profile: &'a SpeakerProfile, attack: &'a AttackSpec, index: usize },
}

/// Generates a corpus in memory. Utterances are produced in parallel but
/// each one is seeded from its identity, so the result is independent of
/// worker count.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let speakers: Vec<SpeakerProfile> = (0..spec.n_speakers)
        .map(|i| SpeakerProfile::generate(i, spec.seed))
        .collect();
    for profile in &speakers {
        profile.validate()?;
    }
    let mut freq_sets = HashSet::new();
    for profile in &speakers {
        let key: Vec<u64> = profile.component_freqs_hz.iter().map(|f| f.to_bits()).collect();
        if !freq_sets.insert(key) {
            return Err(Error::Internal(
                "two speakers drew identical component sets".into(),
            ));
        }
    }

    let mut plans = Vec::new();
    for profile in &speakers {
        for index in 0..spec.n_enrol {
            plans.push(UttPlan::Bona { profile, role: UtteranceRole::Enrol, index });
        }
        for index in 0..spec.n_target {
            plans.push(UttPlan::Bona { profile, role: UtteranceRole::Target, index });
        }
        for attack in &spec.attacks {
            for index in 0..spec.n_spoof_per_attack {
                plans.push(UttPlan::Spoof { profile, attack, index });
            }
        }
    }

    let utterances: Result<Vec<CorpusUtterance>> = plans
        .par_iter()
        .map(|plan| -> Result<CorpusUtterance> {
            match plan {
                UttPlan::Bona { profile, role, index } => {
                    let sid = &profile.speaker_id;
                    let utterance_id = format!("{sid}_{role}_{index:02}");
                    let utt_seed = derive_seed(spec.seed, &format!("utt/{sid}/{role}/{index}"));
                    let signal = generate_utterance(profile, spec.duration_s, utt_seed)?;
                    Ok(CorpusUtterance {
                        record: UtteranceRecord {
                            role: *role,
                            speaker_id: sid.clone(),
                            utterance_id: utterance_id.clone(),
                            attack_id: None,
                            rel_path: format!("wav/{utterance_id}.wav"),
                        },
                        signal,
                    })
                }
                UttPlan::Spoof { profile, attack, index } => {
                    let sid = &profile.speaker_id;
                    let aid = &attack.attack_id;
                    let utterance_id = format!("{sid}_{aid}_spoof_{index:02}");
                    let utt_seed =
                        derive_seed(spec.seed, &format!("utt/{sid}/{aid}/spoof/{index}"));
                    let signal = generate_spoof(profile, attack, spec.duration_s, utt_seed)?;
                    Ok(CorpusUtterance {
                        record: UtteranceRecord {
                            role: UtteranceRole::Spoof,
                            speaker_id: sid.clone(),
                            utterance_id: utterance_id.clone(),
                            attack_id: Some(aid.clone()),
                            rel_path: format!("wav/{utterance_id}.wav"),
                        },
                        signal,
                    })
                }
            }
        })
        .collect();

    let mut warnings = Vec::new();
    if spec.n_speakers == 1 {
        warnings.push("corpus has a single speaker: no cross-speaker trials exist".to_string());
    }
    Ok(Corpus { speakers, utterances: utterances?, warnings })
}

/// Writes a corpus's WAV files and protocol under `out_dir`; returns the
/// protocol path.
pub fn write_corpus(corpus: &Corpus, out_dir: &Path) -> Result<PathBuf> {
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let results: Result<Vec<()>> = corpus
        .utterances
        .par_iter()
        .map(|utt| write_wav(&out_dir.join(&utt.record.rel_path), &utt.signal))
        .collect();
    results?;
    let protocol_path = out_dir.join("protocol.txt");
    write_protocol(&protocol_path, &corpus.protocol())?;
    Ok(protocol_path)
}

/// Generates a corpus and writes it to disk: WAV files plus the trial
/// protocol. Returns the in-memory corpus and the protocol path.
pub fn build_protocol(spec: &CorpusSpec, out_dir: &Path) -> Result<(Corpus, PathBuf)> {
    let corpus = generate_corpus(spec)?;
    let protocol_path = write_corpus(&corpus, out_dir)?;
    Ok((corpus, protocol_path))
}

/// Loads a corpus from a protocol file, reading WAVs relative to the
/// protocol's directory. Speaker profiles are not recoverable from disk, so
/// `speakers` is left empty.
pub fn load_corpus(protocol_path: &Path) -> Result<Corpus> {
    let protocol = read_protocol(protocol_path)?;
    let base = protocol_path.parent().unwrap_or(Path::new("."));
    let utterances: Result<Vec<CorpusUtterance>> = protocol
        .entries
        .par_iter()
        .map(|record| {
            let signal = read_wav(&base.join(&record.rel_path))?;
            Ok(CorpusUtterance { record: record.clone(), signal })
        })
        .collect();
    Ok(Corpus { speakers: Vec::new(), utterances: utterances?, warnings: Vec::new() })
}

/// Corpus health margin: mean same-speaker cosine similarity minus mean
/// cross-speaker cosine similarity over bona fide utterances, under the
/// given embedder. Downstream evaluation is only meaningful when this is
/// comfortably positive.
pub fn corpus_health(corpus: &Corpus, embedder: &crate::embedder::Embedder) -> Result<f64> {
    let bona: Vec<&CorpusUtterance> = corpus
        .utterances
        .iter()
        .filter(|u| u.record.role != UtteranceRole::Spoof)
        .collect();
    let embeddings: Result<Vec<(String, Vec<f64>)>> = bona
        .par_iter()
        .map(|u| Ok((u.record.speaker_id.clone(), embedder.extract(&u.signal)?)))
        .collect();
    let embeddings = embeddings?;
    let mut same = (0usize, 0.0f64);
    let mut cross = (0usize, 0.0f64);
    for i in 0..embeddings.len() {
        for j in (i + 1)..embeddings.len() {
            let cs = crate::embedder::cosine_similarity(&embeddings[i].1, &embeddings[j].1)?;
            if embeddings[i].0 == embeddings[j].0 {
                same = (same.0 + 1, same.1 + cs);
            } else {
                cross = (cross.0 + 1, cross.1 + cs);
            }
        }
    }
    if same.0 == 0 || cross.0 == 0 {
        return Err(Error::invalid(
            "health check needs at least two speakers with two bona fide utterances each",
        ));
    }
    Ok(same.1 / same.0 as f64 - cross.1 / cross.0 as f64)
}
