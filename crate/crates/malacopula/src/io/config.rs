//! Experiment configuration files.
//!
//! A strict, line-oriented sectioned key-value format: `[section]` headers,
//! `key = value` pairs, `#` comments. Every key has a default, so an empty
//! file is the default experiment; unknown sections, unknown keys, and
//! duplicate keys are rejected rather than silently ignored.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::corpus::{AttackSpec, CorpusSpec};
use crate::embedder::EmbedderConfig;
use crate::error::{Error, Result};
use crate::trainer::TrainingConfig;

/// Everything a pipeline run needs: corpus shape, the three embedder roles,
/// training hyperparameters, the (L, K) grid, paths, workers, and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: CorpusSpec,
    pub f_a: EmbedderConfig,
    pub f_b: EmbedderConfig,
    pub f_test: EmbedderConfig,
    pub training: TrainingConfig,
    pub grid: Vec<(usize, usize)>,
    pub corpus_dir: PathBuf,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let seed = 1234;
        ExperimentConfig {
            corpus: CorpusSpec { seed, ..CorpusSpec::default() },
            f_a: EmbedderConfig::optimization_default(),
            f_b: EmbedderConfig::selection_default(),
            f_test: EmbedderConfig::evaluation_default(),
            training: TrainingConfig::default(),
            grid: vec![(257, 1), (257, 3), (257, 5), (1025, 1), (1025, 3), (1025, 5)],
            corpus_dir: PathBuf::from("runs/corpus"),
            output_dir: PathBuf::from("runs/out"),
            workers: 0,
            seed,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.f_a.validate()?;
        self.f_b.validate()?;
        self.f_test.validate()?;
        self.training.validate()?;
        if self.grid.is_empty() {
            return Err(Error::invalid("grid must contain at least one (L, K) cell"));
        }
        let mut seen = HashSet::new();
        for &(length, branches) in &self.grid {
            if length == 0 || length % 2 == 0 {
                return Err(Error::invalid(format!(
                    "grid filter length {length} must be odd and positive"
                )));
            }
            if branches == 0 {
                return Err(Error::invalid("grid branch count must be positive"));
            }
            if !seen.insert((length, branches)) {
                return Err(Error::invalid(format!(
                    "duplicate grid cell {length}x{branches}"
                )));
            }
        }
        Ok(())
    }

    /// Applies a new global seed, keeping the corpus seed in lockstep.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.corpus.seed = seed;
    }
}

/// Parses a grid list like `257x5` or `257x1,1025x3`.
pub fn parse_grid(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut grid = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (l, k) = part
            .split_once('x')
            .ok_or_else(|| Error::format(format!("grid cell {part:?} is not LxK")))?;
        let length: usize = l
            .trim()
            .parse()
            .map_err(|_| Error::format(format!("bad filter length in grid cell {part:?}")))?;
        let branches: usize = k
            .trim()
            .parse()
            .map_err(|_| Error::format(format!("bad branch count in grid cell {part:?}")))?;
        grid.push((length, branches));
    }
    if grid.is_empty() {
        return Err(Error::format("grid list is empty"));
    }
    Ok(grid)
}

fn format_grid(grid: &[(usize, usize)]) -> String {
    grid.iter()
        .map(|(l, k)| format!("{l}x{k}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_attacks(text: &str) -> Result<Vec<AttackSpec>> {
    let mut attacks = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let fields: Vec<&str> = part.split(':').collect();
        if fields.len() != 3 {
            return Err(Error::format(format!(
                "attack {part:?} is not id:kind:severity"
            )));
        }
        let severity: f64 = fields[2]
            .parse()
            .map_err(|_| Error::format(format!("bad severity in attack {part:?}")))?;
        attacks.push(AttackSpec::new(fields[0], fields[1].parse()?, severity));
    }
    if attacks.is_empty() {
        return Err(Error::format("attack list is empty"));
    }
    Ok(attacks)
}

fn format_attacks(attacks: &[AttackSpec]) -> String {
    attacks
        .iter()
        .map(|a| format!("{}:{}:{}", a.attack_id, a.kind, a.severity))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn write_config(path: &Path, config: &ExperimentConfig) -> Result<()> {
    let mut out = String::new();
    let c = &config.corpus;
    writeln!(out, "[corpus]").expect("string write");
    writeln!(out, "n_speakers = {}", c.n_speakers).expect("string write");
    writeln!(out, "n_enrol = {}", c.n_enrol).expect("string write");
    writeln!(out, "n_target = {}", c.n_target).expect("string write");
    writeln!(out, "n_spoof_per_attack = {}", c.n_spoof_per_attack).expect("string write");
    writeln!(out, "duration_s = {}", c.duration_s).expect("string write");
    writeln!(out, "attacks = {}", format_attacks(&c.attacks)).expect("string write");
    for (name, e) in [
        ("f_a", &config.f_a),
        ("f_b", &config.f_b),
        ("f_test", &config.f_test),
    ] {
        writeln!(out, "\n[embedder.{name}]").expect("string write");
        writeln!(out, "frame_len = {}", e.frame_len).expect("string write");
        writeln!(out, "hop_len = {}", e.hop_len).expect("string write");
        writeln!(out, "fft_len = {}", e.fft_len).expect("string write");
        writeln!(out, "n_mels = {}", e.n_mels).expect("string write");
        writeln!(out, "embedding_dim = {}", e.embedding_dim).expect("string write");
        writeln!(out, "sample_rate_hz = {}", e.sample_rate_hz).expect("string write");
        writeln!(out, "seed = {}", e.seed).expect("string write");
    }
    let t = &config.training;
    writeln!(out, "\n[training]").expect("string write");
    writeln!(out, "epochs = {}", t.epochs).expect("string write");
    writeln!(out, "batch_size = {}", t.batch_size).expect("string write");
    writeln!(out, "learning_rate = {}", t.learning_rate).expect("string write");
    writeln!(out, "adam_beta1 = {}", t.adam_beta1).expect("string write");
    writeln!(out, "adam_beta2 = {}", t.adam_beta2).expect("string write");
    writeln!(out, "adam_eps = {}", t.adam_eps).expect("string write");
    writeln!(out, "checkpoint_each_batch = {}", t.checkpoint_each_batch).expect("string write");
    writeln!(out, "\n[experiment]").expect("string write");
    writeln!(out, "corpus_dir = {}", config.corpus_dir.display()).expect("string write");
    writeln!(out, "output_dir = {}", config.output_dir.display()).expect("string write");
    writeln!(out, "grid = {}", format_grid(&config.grid)).expect("string write");
    writeln!(out, "workers = {}", config.workers).expect("string write");
    writeln!(out, "seed = {}", config.seed).expect("string write");
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = ExperimentConfig::default();
    let mut section = String::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut explicit_corpus_seed = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let bad = |msg: String| Error::format(format!("{}:{}: {msg}", path.display(), idx + 1));
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| bad("unterminated section header".to_string()))?;
            section = match name {
                "corpus" | "embedder.f_a" | "embedder.f_b" | "embedder.f_test" | "training"
                | "experiment" => name.to_string(),
                other => return Err(bad(format!("unknown section [{other}]"))),
            };
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key = value, found {line:?}")))?;
        let key = key.trim();
        let value = value.trim();
        if section.is_empty() {
            return Err(bad(format!("key {key:?} appears before any section")));
        }
        if !seen.insert((section.clone(), key.to_string())) {
            return Err(bad(format!("duplicate key {key:?} in [{section}]")));
        }
        let parse_usize =
            |v: &str| -> Result<usize> { v.parse().map_err(|_| bad(format!("bad integer {v:?}"))) };
        let parse_u32 =
            |v: &str| -> Result<u32> { v.parse().map_err(|_| bad(format!("bad integer {v:?}"))) };
        let parse_u64 =
            |v: &str| -> Result<u64> { v.parse().map_err(|_| bad(format!("bad integer {v:?}"))) };
        let parse_f64 =
            |v: &str| -> Result<f64> { v.parse().map_err(|_| bad(format!("bad number {v:?}"))) };
        let parse_bool =
            |v: &str| -> Result<bool> { v.parse().map_err(|_| bad(format!("bad bool {v:?}"))) };
        match section.as_str() {
            "corpus" => match key {
                "n_speakers" => config.corpus.n_speakers = parse_usize(value)?,
                "n_enrol" => config.corpus.n_enrol = parse_usize(value)?,
                "n_target" => config.corpus.n_target = parse_usize(value)?,
                "n_spoof_per_attack" => config.corpus.n_spoof_per_attack = parse_usize(value)?,
                "duration_s" => config.corpus.duration_s = parse_f64(value)?,
                "attacks" => {
                    config.corpus.attacks =
                        parse_attacks(value).map_err(|e| bad(e.to_string()))?
                }
                "seed" => {
                    config.corpus.seed = parse_u64(value)?;
                    explicit_corpus_seed = true;
                }
                other => return Err(bad(format!("unknown key {other:?} in [corpus]"))),
            },
            "embedder.f_a" | "embedder.f_b" | "embedder.f_test" => {
                let e = match section.as_str() {
                    "embedder.f_a" => &mut config.f_a,
                    "embedder.f_b" => &mut config.f_b,
                    _ => &mut config.f_test,
                };
                match key {
                    "frame_len" => e.frame_len = parse_usize(value)?,
                    "hop_len" => e.hop_len = parse_usize(value)?,
                    "fft_len" => e.fft_len = parse_usize(value)?,
                    "n_mels" => e.n_mels = parse_usize(value)?,
                    "embedding_dim" => e.embedding_dim = parse_usize(value)?,
                    "sample_rate_hz" => e.sample_rate_hz = parse_u32(value)?,
                    "seed" => e.seed = parse_u64(value)?,
                    other => return Err(bad(format!("unknown key {other:?} in [{section}]"))),
                }
            }
            "training" => match key {
                "epochs" => config.training.epochs = parse_usize(value)?,
                "batch_size" => config.training.batch_size = parse_usize(value)?,
                "learning_rate" => config.training.learning_rate = parse_f64(value)?,
                "adam_beta1" => config.training.adam_beta1 = parse_f64(value)?,
                "adam_beta2" => config.training.adam_beta2 = parse_f64(value)?,
                "adam_eps" => config.training.adam_eps = parse_f64(value)?,
                "checkpoint_each_batch" => {
                    config.training.checkpoint_each_batch = parse_bool(value)?
                }
                other => return Err(bad(format!("unknown key {other:?} in [training]"))),
            },
            "experiment" => match key {
                "corpus_dir" => config.corpus_dir = PathBuf::from(value),
                "output_dir" => config.output_dir = PathBuf::from(value),
                "grid" => config.grid = parse_grid(value).map_err(|e| bad(e.to_string()))?,
                "workers" => config.workers = parse_usize(value)?,
                "seed" => config.seed = parse_u64(value)?,
                other => return Err(bad(format!("unknown key {other:?} in [experiment]"))),
            },
            _ => unreachable!("section validated above"),
        }
    }
    if !explicit_corpus_seed {
        config.corpus.seed = config.seed;
    }
    config.validate()?;
    Ok(config)
}
