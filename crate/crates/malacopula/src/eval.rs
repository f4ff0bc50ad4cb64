//! Equal-error-rate evaluation under the held-out embedder.
//!
//! Scores are cosine similarities between an utterance embedding and the
//! speaker's averaged enrolment embedding. Target bona fide trials form the
//! positive class, spoofs the negative class, and the spf-EER is read off
//! the interpolated crossing of the false-acceptance and false-rejection
//! rates. Reports carry both the pooled figure (all attacks merged) and a
//! per-attack breakdown against all target trials.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::corpus::{Corpus, TrialProtocol, UtteranceRole};
use crate::embedder::{average_enrolment, cosine_similarity, Embedder};
use crate::error::{Error, Result};
use crate::signal::{malacopula_apply, MalacopulaFilter, Signal};

/// Class of a scored trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialLabel {
    Target,
    Spoof,
}

impl TrialLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialLabel::Target => "target",
            TrialLabel::Spoof => "spoof",
        }
    }
}

/// One scored trial. Bona fide trials carry no attack id.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub speaker_id: String,
    pub utterance_id: String,
    pub attack_id: Option<String>,
    pub score: f64,
}

impl Trial {
    pub fn label(&self) -> TrialLabel {
        if self.attack_id.is_some() {
            TrialLabel::Spoof
        } else {
            TrialLabel::Target
        }
    }
}

/// EER and trial count for one attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackEval {
    pub eer: f64,
    pub threshold: f64,
    pub n_spoof_trials: usize,
}

/// Pooled and per-attack spf-EER over a scored protocol.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub pooled_eer: f64,
    pub pooled_threshold: f64,
    pub per_attack: BTreeMap<String, AttackEval>,
    pub n_target_trials: usize,
    pub n_spoof_trials: usize,
    pub trials: Vec<Trial>,
}

/// The serializable portion of an [`EvalReport`]: everything except the
/// raw trial list, which lives in score files.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub pooled_eer: f64,
    pub pooled_threshold: f64,
    pub n_target_trials: usize,
    pub n_spoof_trials: usize,
    pub per_attack: BTreeMap<String, AttackEval>,
}

impl EvalReport {
    pub fn summary(&self) -> EvalSummary {
        EvalSummary {
            pooled_eer: self.pooled_eer,
            pooled_threshold: self.pooled_threshold,
            n_target_trials: self.n_target_trials,
            n_spoof_trials: self.n_spoof_trials,
            per_attack: self.per_attack.clone(),
        }
    }
}

/// Computes the interpolated equal error rate and its threshold.
///
/// The false acceptance rate is the fraction of negatives scoring at or
/// above the threshold; the false rejection rate is the fraction of
/// positives scoring below it. Sweeping the threshold over all distinct
/// scores walks FAR−FRR from +1 down to −1; the EER sits at the sign
/// change, linearly interpolated between the bracketing candidates.
pub fn compute_eer(positives: &[f64], negatives: &[f64]) -> Result<(f64, f64)> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::invalid("both score lists must be non-empty"));
    }
    for s in positives.iter().chain(negatives) {
        if !s.is_finite() {
            return Err(Error::invalid("scores must be finite"));
        }
    }
    let mut pos = positives.to_vec();
    let mut neg = negatives.to_vec();
    pos.sort_unstable_by(f64::total_cmp);
    neg.sort_unstable_by(f64::total_cmp);

    let mut candidates: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
    candidates.sort_unstable_by(f64::total_cmp);
    candidates.dedup();
    let lo = candidates[0] - 1.0;
    let hi = candidates[candidates.len() - 1] + 1.0;
    candidates.insert(0, lo);
    candidates.push(hi);

    let far = |threshold: f64| {
        let below = neg.partition_point(|s| *s < threshold);
        (neg.len() - below) as f64 / neg.len() as f64
    };
    let frr = |threshold: f64| {
        let below = pos.partition_point(|s| *s < threshold);
        below as f64 / pos.len() as f64
    };

    let mut prev = (candidates[0], far(candidates[0]), frr(candidates[0]));
    for &c in &candidates[1..] {
        let (fa, fr) = (far(c), frr(c));
        let diff = fa - fr;
        if diff <= 0.0 {
            if diff == 0.0 {
                return Ok((fa, c));
            }
            let (c0, fa0, fr0) = prev;
            let d0 = fa0 - fr0;
            let lambda = d0 / (d0 - diff);
            let eer = fa0 + lambda * (fa - fa0);
            let threshold = c0 + lambda * (c - c0);
            return Ok((eer, threshold));
        }
        prev = (c, fa, fr);
    }
    Err(Error::Internal("FAR-FRR difference never crossed zero".into()))
}

/// Filters keyed by (speaker_id, attack_id); spoofs with no entry are
/// scored unmodified.
pub type FilterMap = HashMap<(String, String), MalacopulaFilter>;

/// Scores every trial in the protocol under the given embedder and
/// assembles pooled and per-attack EERs. Spoof utterances are passed
/// through their (speaker, attack) filter when one is present in `filters`.
pub fn evaluate_protocol(
    protocol: &TrialProtocol,
    corpus: &Corpus,
    embedder: &Embedder,
    filters: Option<&FilterMap>,
) -> Result<EvalReport> {
    let mut by_id: HashMap<&str, &Signal> = HashMap::new();
    for utt in &corpus.utterances {
        by_id.insert(utt.record.utterance_id.as_str(), &utt.signal);
    }
    let resolve = |utterance_id: &str, speaker_id: &str| -> Result<&Signal> {
        by_id.get(utterance_id).copied().ok_or_else(|| {
            Error::invalid(format!(
                "protocol references utterance {utterance_id} (speaker {speaker_id}) \
                 that is missing from the corpus"
            ))
        })
    };

    let mut enrol_signals: BTreeMap<&str, Vec<&Signal>> = BTreeMap::new();
    for entry in &protocol.entries {
        if entry.role == UtteranceRole::Enrol {
            enrol_signals
                .entry(entry.speaker_id.as_str())
                .or_default()
                .push(resolve(&entry.utterance_id, &entry.speaker_id)?);
        }
    }
    let enrolments: Result<HashMap<&str, Vec<f64>>> = enrol_signals
        .par_iter()
        .map(|(speaker, signals)| {
            let embeddings: Result<Vec<Vec<f64>>> =
                signals.iter().map(|s| embedder.extract(s)).collect();
            Ok((*speaker, average_enrolment(&embeddings?)?))
        })
        .collect();
    let enrolments = enrolments?;

    let scored: Result<Vec<Trial>> = protocol
        .entries
        .par_iter()
        .filter(|e| e.role != UtteranceRole::Enrol)
        .map(|entry| -> Result<Trial> {
            let enrolment = enrolments.get(entry.speaker_id.as_str()).ok_or_else(|| {
                Error::invalid(format!(
                    "speaker {} has trials but no enrolment utterances",
                    entry.speaker_id
                ))
            })?;
            let signal = resolve(&entry.utterance_id, &entry.speaker_id)?;
            let filter = entry.attack_id.as_ref().and_then(|attack| {
                filters.and_then(|m| m.get(&(entry.speaker_id.clone(), attack.clone())))
            });
            let embedding = match filter {
                Some(f) => embedder.extract(&malacopula_apply(signal, f)?)?,
                None => embedder.extract(signal)?,
            };
            Ok(Trial {
                speaker_id: entry.speaker_id.clone(),
                utterance_id: entry.utterance_id.clone(),
                attack_id: entry.attack_id.clone(),
                score: cosine_similarity(&embedding, enrolment)?,
            })
        })
        .collect();
    let trials = scored?;

    let positives: Vec<f64> = trials
        .iter()
        .filter(|t| t.label() == TrialLabel::Target)
        .map(|t| t.score)
        .collect();
    let mut per_attack_scores: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for trial in &trials {
        if let Some(attack) = &trial.attack_id {
            per_attack_scores.entry(attack.as_str()).or_default().push(trial.score);
        }
    }
    if positives.is_empty() {
        return Err(Error::invalid("protocol contains no target trials"));
    }
    if per_attack_scores.is_empty() {
        return Err(Error::invalid("protocol contains no spoof trials"));
    }

    let negatives: Vec<f64> = per_attack_scores.values().flatten().copied().collect();
    let (pooled_eer, pooled_threshold) = compute_eer(&positives, &negatives)?;
    let mut per_attack = BTreeMap::new();
    for (attack, scores) in &per_attack_scores {
        let (eer, threshold) = compute_eer(&positives, scores)?;
        per_attack.insert(
            attack.to_string(),
            AttackEval { eer, threshold, n_spoof_trials: scores.len() },
        );
    }

    Ok(EvalReport {
        pooled_eer,
        pooled_threshold,
        per_attack,
        n_target_trials: positives.len(),
        n_spoof_trials: negatives.len(),
        trials,
    })
}
