//! Adversarial filter toolkit for voice anti-spoofing research.
//!
//! Implements a K-branch polynomial filter that is optimized against a
//! speaker embedder so that spoofed utterances move toward a target
//! speaker's enrolment, plus everything needed to measure the effect:
//! deterministic synthetic corpora, gradient-based training, checkpoint
//! selection by signed Wasserstein distance, and equal-error-rate
//! evaluation under an independent embedder.

mod conv;
mod corpus;
mod embedder;
mod error;
mod eval;
mod grad;
pub mod io;
mod pipeline;
mod rng;
mod selection;
mod signal;
mod trainer;

pub use corpus::{
    build_protocol, corpus_health, default_attacks, generate_corpus, generate_spoof,
    generate_utterance, load_corpus, write_corpus, AttackKind, AttackSpec, Corpus, CorpusSpec,
    CorpusUtterance, SpeakerProfile, TrialProtocol, UtteranceRecord, UtteranceRole,
    CORPUS_SAMPLE_RATE_HZ, UTTERANCE_PEAK,
};
pub use embedder::{
    average_enrolment, cosine_similarity, EmbedTrace, Embedder, EmbedderConfig, MEL_LOG_EPSILON,
    POOL_VAR_EPSILON,
};
pub use error::{Error, Result};
pub use eval::{
    compute_eer, evaluate_protocol, AttackEval, EvalReport, EvalSummary, FilterMap, Trial,
    TrialLabel,
};
pub use grad::{backward, check_gradient, forward_with_tape, GradCheckReport, Gradient, Tape};
pub use pipeline::{
    condition_label, generate_stage, report_stage, score_stage, train_stage, worker_pool, CellId,
    CellOutcome, ScoreOutcome, ScoredCondition, TrainSummary, WORKERS_ENV_VAR,
};
pub use rng::{derive_seed, fnv1a, SplitMix64};
pub use selection::{
    score_distribution, select_best, signed_wasserstein, wasserstein_1d, ScoreDistribution,
    ScoreLabel, SelectionDiagnostic,
};
pub use signal::{
    bartlett_window, convolve_same, convolve_same_direct, convolve_same_fft, hammerstein_forward,
    linf_normalize, malacopula_apply, polynomial_branch, MalacopulaFilter, Signal, LINF_EPSILON,
};
pub use trainer::{
    adam_step, init_filter, train_filter, AdamState, FilterCheckpoint, TrainingConfig,
    INIT_NOISE_MAGNITUDE,
};
