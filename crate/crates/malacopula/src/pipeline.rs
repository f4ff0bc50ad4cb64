//! Experiment orchestration: corpus generation, per-cell filter training,
//! scoring, and report rendering.
//!
//! A cell is one (speaker, attack, L, K) combination. Cells are dispatched
//! to a bounded worker pool, but every run is bit-reproducible at any
//! worker count: each cell derives its seed from the global seed and its
//! own identity, never from dispatch order, and all reductions preserve a
//! canonical cell ordering.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::corpus::{build_protocol, load_corpus, Corpus, UtteranceRole};
use crate::embedder::{average_enrolment, Embedder};
use crate::error::{Error, Result};
use crate::eval::{evaluate_protocol, EvalSummary, FilterMap};
use crate::io::config::ExperimentConfig;
use crate::io::filter_file::{read_filter_file, write_filter_file, FilterFile};
use crate::io::scores::{read_report, read_scores, write_report, write_scores};
use crate::rng::derive_seed;
use crate::selection::select_best;
use crate::signal::Signal;
use crate::trainer::{train_filter, TrainingConfig};

/// Environment variable supplying the default worker count when the config
/// leaves `workers = 0`.
pub const WORKERS_ENV_VAR: &str = "MALACOPULA_WORKERS";

/// One training job: a speaker-attack pair at one grid point.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellId {
    pub speaker_id: String,
    pub attack_id: String,
    pub filter_len: usize,
    pub branches: usize,
}

impl CellId {
    /// Seed identity: cell seeds hash this string with the global seed.
    pub fn identity(&self) -> String {
        format!(
            "{}/{}/L{}/K{}",
            self.speaker_id, self.attack_id, self.filter_len, self.branches
        )
    }

    pub fn file_stem(&self) -> String {
        format!(
            "{}_{}_L{}_K{}",
            self.speaker_id, self.attack_id, self.filter_len, self.branches
        )
    }
}

/// Result of one trained (or skipped) cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: CellId,
    pub selected_epoch: u64,
    pub signed_wasserstein: f64,
    pub final_mean_loss: f64,
    pub skipped: bool,
}

/// Outcomes and isolated failures of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainSummary {
    pub outcomes: Vec<CellOutcome>,
    pub failures: Vec<(CellId, String)>,
}

/// Builds the worker pool: explicit config count, else the environment
/// variable, else one thread per core.
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    let n = if workers > 0 {
        workers
    } else {
        std::env::var(WORKERS_ENV_VAR)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(0)
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Internal(format!("worker pool: {e}")))
}

/// Generates the corpus and writes it under the config's corpus directory.
/// Returns the corpus, the protocol path, and any generation warnings.
pub fn generate_stage(config: &ExperimentConfig) -> Result<(Corpus, PathBuf)> {
    config.validate()?;
    let pool = worker_pool(config.workers)?;
    let (corpus, protocol_path) =
        pool.install(|| build_protocol(&config.corpus, &config.corpus_dir))?;
    Ok((corpus, protocol_path))
}

fn protocol_path(config: &ExperimentConfig) -> PathBuf {
    config.corpus_dir.join("protocol.txt")
}

fn filters_dir(config: &ExperimentConfig) -> PathBuf {
    config.output_dir.join("filters")
}

fn diagnostics_dir(config: &ExperimentConfig) -> PathBuf {
    config.output_dir.join("diagnostics")
}

struct SpeakerGroups {
    enrol: BTreeMap<String, Vec<Signal>>,
    targets: BTreeMap<String, Vec<Signal>>,
    spoofs: BTreeMap<(String, String), Vec<Signal>>,
}

fn group_corpus(corpus: &Corpus) -> SpeakerGroups {
    let mut groups = SpeakerGroups {
        enrol: BTreeMap::new(),
        targets: BTreeMap::new(),
        spoofs: BTreeMap::new(),
    };
    for utt in &corpus.utterances {
        let speaker = utt.record.speaker_id.clone();
        match utt.record.role {
            UtteranceRole::Enrol => {
                groups.enrol.entry(speaker).or_default().push(utt.signal.clone())
            }
            UtteranceRole::Target => {
                groups.targets.entry(speaker).or_default().push(utt.signal.clone())
            }
            UtteranceRole::Spoof => {
                let attack = utt.record.attack_id.clone().expect("spoof has attack");
                groups.spoofs.entry((speaker, attack)).or_default().push(utt.signal.clone())
            }
        }
    }
    groups
}

fn run_cell(
    cell: &CellId,
    config: &ExperimentConfig,
    groups: &SpeakerGroups,
    f_a: &Embedder,
    f_b: &Embedder,
    skip_existing: bool,
) -> Result<CellOutcome> {
    let filter_path = filters_dir(config).join(format!("{}.mcf", cell.file_stem()));
    if skip_existing && filter_path.exists() {
        let existing = read_filter_file(&filter_path)?;
        return Ok(CellOutcome {
            cell: cell.clone(),
            selected_epoch: existing.selected_epoch,
            signed_wasserstein: f64::NAN,
            final_mean_loss: f64::NAN,
            skipped: true,
        });
    }

    let key = (cell.speaker_id.clone(), cell.attack_id.clone());
    let spoofs = groups.spoofs.get(&key).expect("cell built from spoof groups");
    let enrol = groups.enrol.get(&cell.speaker_id).ok_or_else(|| {
        Error::invalid(format!("speaker {} has no enrolment utterances", cell.speaker_id))
    })?;
    let targets = groups.targets.get(&cell.speaker_id).ok_or_else(|| {
        Error::invalid(format!("speaker {} has no target utterances", cell.speaker_id))
    })?;

    let enrol_a: Result<Vec<Vec<f64>>> = enrol.iter().map(|s| f_a.extract(s)).collect();
    let enrolment_a = average_enrolment(&enrol_a?)?;

    let cfg = TrainingConfig {
        branches: cell.branches,
        filter_len: cell.filter_len,
        seed: derive_seed(config.seed, &cell.identity()),
        ..config.training
    };
    let checkpoints = train_filter(spoofs, &enrolment_a, &cfg, f_a)?;
    let (best, diagnostics) = select_best(&checkpoints, spoofs, targets, enrol, f_b)?;

    let file = FilterFile {
        speaker_id: cell.speaker_id.clone(),
        attack_id: cell.attack_id.clone(),
        selected_epoch: best.epoch as u64,
        f_a_hash: config.f_a.hash(),
        f_b_hash: config.f_b.hash(),
        sample_rate_hz: spoofs[0].sample_rate_hz(),
        filter: best.filter.clone(),
    };
    write_filter_file(&filter_path, &file)?;

    let mut diag_text = String::new();
    use std::fmt::Write as _;
    writeln!(
        diag_text,
        "cell {} {} L {} K {}",
        cell.speaker_id, cell.attack_id, cell.filter_len, cell.branches
    )
    .expect("string write");
    writeln!(diag_text, "selected_epoch {}", best.epoch).expect("string write");
    let best_diag = checkpoints
        .iter()
        .zip(&diagnostics)
        .find(|(ck, _)| **ck == best)
        .map(|(_, d)| *d)
        .expect("selected checkpoint is among the inputs");
    writeln!(diag_text, "selected_signed_wasserstein {}", best_diag.signed_wasserstein)
        .expect("string write");
    for (ck, diag) in checkpoints.iter().zip(&diagnostics) {
        writeln!(
            diag_text,
            "checkpoint epoch {} mean_loss {} signed_wasserstein {} \
             spoof_median {} target_median {}",
            ck.epoch, ck.mean_loss, diag.signed_wasserstein, diag.spoof_median,
            diag.target_median
        )
        .expect("string write");
    }
    let diag_path = diagnostics_dir(config).join(format!("{}.txt", cell.file_stem()));
    std::fs::write(&diag_path, diag_text).map_err(|e| Error::io(&diag_path, e))?;

    Ok(CellOutcome {
        cell: cell.clone(),
        selected_epoch: best.epoch as u64,
        signed_wasserstein: best_diag.signed_wasserstein,
        final_mean_loss: checkpoints.last().expect("at least one checkpoint").mean_loss,
        skipped: false,
    })
}

/// Trains every (speaker, attack, L, K) cell of the grid over the corpus in
/// the config's corpus directory. Cell failures are isolated: surviving
/// cells still produce filter files, and failures come back in the summary.
pub fn train_stage(config: &ExperimentConfig, skip_existing: bool) -> Result<TrainSummary> {
    config.validate()?;
    let corpus = load_corpus(&protocol_path(config))?;
    let groups = group_corpus(&corpus);
    let f_a = Embedder::new(config.f_a)?;
    let f_b = Embedder::new(config.f_b)?;

    std::fs::create_dir_all(filters_dir(config))
        .map_err(|e| Error::io(filters_dir(config), e))?;
    std::fs::create_dir_all(diagnostics_dir(config))
        .map_err(|e| Error::io(diagnostics_dir(config), e))?;

    let mut cells = Vec::new();
    for (speaker, attack) in groups.spoofs.keys() {
        for &(filter_len, branches) in &config.grid {
            cells.push(CellId {
                speaker_id: speaker.clone(),
                attack_id: attack.clone(),
                filter_len,
                branches,
            });
        }
    }
    cells.sort();

    let pool = worker_pool(config.workers)?;
    let results: Vec<(CellId, Result<CellOutcome>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                (cell.clone(), run_cell(cell, config, &groups, &f_a, &f_b, skip_existing))
            })
            .collect()
    });

    let mut summary = TrainSummary::default();
    for (cell, result) in results {
        match result {
            Ok(outcome) => summary.outcomes.push(outcome),
            Err(e) => summary.failures.push((cell, e.to_string())),
        }
    }
    Ok(summary)
}

/// One scored condition: `baseline` or a grid cell label like `L257_K5`.
#[derive(Debug, Clone)]
pub struct ScoredCondition {
    pub condition: String,
    pub summary: EvalSummary,
}

/// Scoring output plus any filter-provenance warnings.
#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    pub conditions: Vec<ScoredCondition>,
    pub warnings: Vec<String>,
}

pub fn condition_label(filter_len: usize, branches: usize) -> String {
    format!("L{filter_len}_K{branches}")
}

/// Scores the baseline condition and, when `filtered` is set, one condition
/// per grid cell using the filter files under the output directory. Score
/// and report files are written per condition.
pub fn score_stage(config: &ExperimentConfig, filtered: bool) -> Result<ScoreOutcome> {
    config.validate()?;
    let corpus = load_corpus(&protocol_path(config))?;
    let protocol = corpus.protocol();
    let f_test = Embedder::new(config.f_test)?;
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::io(&config.output_dir, e))?;

    let pool = worker_pool(config.workers)?;
    let mut outcome = ScoreOutcome { conditions: Vec::new(), warnings: Vec::new() };

    let baseline = pool.install(|| evaluate_protocol(&protocol, &corpus, &f_test, None))?;
    write_scores(&config.output_dir.join("scores_baseline.txt"), &baseline.trials)?;
    write_report(&config.output_dir.join("report_baseline.txt"), &baseline.summary())?;
    outcome
        .conditions
        .push(ScoredCondition { condition: "baseline".to_string(), summary: baseline.summary() });

    if !filtered {
        return Ok(outcome);
    }

    let mut pairs: Vec<(String, String)> = corpus
        .utterances
        .iter()
        .filter_map(|u| {
            u.record
                .attack_id
                .as_ref()
                .map(|a| (u.record.speaker_id.clone(), a.clone()))
        })
        .collect();
    pairs.sort();
    pairs.dedup();

    for &(filter_len, branches) in &config.grid {
        let label = condition_label(filter_len, branches);
        let mut filters = FilterMap::new();
        for (speaker, attack) in &pairs {
            let cell = CellId {
                speaker_id: speaker.clone(),
                attack_id: attack.clone(),
                filter_len,
                branches,
            };
            let path = filters_dir(config).join(format!("{}.mcf", cell.file_stem()));
            if !path.exists() {
                continue;
            }
            let file = read_filter_file(&path)?;
            if file.filter.len() != filter_len || file.filter.branches() != branches {
                return Err(Error::format(format!(
                    "{}: filter shape {}x{} does not match its name",
                    path.display(),
                    file.filter.len(),
                    file.filter.branches()
                )));
            }
            outcome.warnings.extend(file.check_hashes(&config.f_a, &config.f_b));
            filters.insert((speaker.clone(), attack.clone()), file.filter);
        }
        if filters.is_empty() {
            return Err(Error::invalid(format!(
                "no filter files found for condition {label}; train the grid first"
            )));
        }
        let report =
            pool.install(|| evaluate_protocol(&protocol, &corpus, &f_test, Some(&filters)))?;
        write_scores(&config.output_dir.join(format!("scores_{label}.txt")), &report.trials)?;
        write_report(&config.output_dir.join(format!("report_{label}.txt")), &report.summary())?;
        outcome.conditions.push(ScoredCondition { condition: label, summary: report.summary() });
    }
    Ok(outcome)
}

fn parse_condition_label(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix('L')?;
    let (l, k) = rest.split_once("_K")?;
    Some((l.parse().ok()?, k.parse().ok()?))
}

/// Renders the comparison table from the report files in `run_dir`, checks
/// every score file against its report, and writes plot-ready CSV series.
pub fn report_stage(run_dir: &Path) -> Result<String> {
    let baseline_path = run_dir.join("report_baseline.txt");
    let mut conditions: Vec<(String, Option<(usize, usize)>)> = Vec::new();
    let mut missing = Vec::new();
    if baseline_path.exists() {
        conditions.push(("baseline".to_string(), None));
    } else {
        missing.push(baseline_path.display().to_string());
    }
    let mut cells = Vec::new();
    let entries = std::fs::read_dir(run_dir).map_err(|e| Error::io(run_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(run_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(label) = name.strip_prefix("report_").and_then(|n| n.strip_suffix(".txt")) {
            if label == "baseline" {
                continue;
            }
            match parse_condition_label(label) {
                Some(cell) => cells.push((label.to_string(), cell)),
                None => {
                    return Err(Error::format(format!(
                        "unrecognized report file name {name:?}"
                    )))
                }
            }
        }
    }
    cells.sort_by_key(|(_, cell)| *cell);
    conditions.extend(cells.into_iter().map(|(label, cell)| (label, Some(cell))));
    for (label, _) in &conditions {
        let scores_path = run_dir.join(format!("scores_{label}.txt"));
        if !scores_path.exists() {
            missing.push(scores_path.display().to_string());
        }
    }
    if !missing.is_empty() {
        return Err(Error::invalid(format!("missing inputs: {}", missing.join(", "))));
    }

    let mut rows = Vec::new();
    for (label, _) in &conditions {
        let summary = read_report(&run_dir.join(format!("report_{label}.txt")))?;
        let scores_path = run_dir.join(format!("scores_{label}.txt"));
        let trials = read_scores(&scores_path)?;
        let positives: Vec<f64> = trials
            .iter()
            .filter(|t| t.attack_id.is_none())
            .map(|t| t.score)
            .collect();
        let negatives: Vec<f64> = trials
            .iter()
            .filter(|t| t.attack_id.is_some())
            .map(|t| t.score)
            .collect();
        let (eer, _) = crate::eval::compute_eer(&positives, &negatives)?;
        if (eer - summary.pooled_eer).abs() > 1e-12 {
            return Err(Error::format(format!(
                "{}: score file yields pooled EER {eer}, report says {}",
                scores_path.display(),
                summary.pooled_eer
            )));
        }
        rows.push((label.clone(), summary));
    }

    let baseline_eer = rows[0].1.pooled_eer;
    let mut table = String::new();
    use std::fmt::Write as _;
    writeln!(table, "{:<12} {:>12} {:>10}", "condition", "pooled_eer_%", "delta_pp")
        .expect("string write");
    for (label, summary) in &rows {
        let delta = if label == "baseline" {
            "-".to_string()
        } else {
            format!("{:+.2}", (summary.pooled_eer - baseline_eer) * 100.0)
        };
        writeln!(table, "{:<12} {:>12.2} {:>10}", label, summary.pooled_eer * 100.0, delta)
            .expect("string write");
    }
    let attacks: Vec<String> = rows[0].1.per_attack.keys().cloned().collect();
    writeln!(table, "\nper-attack spf-EER %:").expect("string write");
    write!(table, "{:<12}", "condition").expect("string write");
    for attack in &attacks {
        write!(table, " {attack:>8}").expect("string write");
    }
    writeln!(table).expect("string write");
    for (label, summary) in &rows {
        write!(table, "{label:<12}").expect("string write");
        for attack in &attacks {
            match summary.per_attack.get(attack) {
                Some(eval) => write!(table, " {:>8.2}", eval.eer * 100.0).expect("string write"),
                None => write!(table, " {:>8}", "-").expect("string write"),
            }
        }
        writeln!(table).expect("string write");
    }

    let mut pooled_csv = String::from("condition,pooled_eer\n");
    let mut attack_csv = String::from("condition,attack,eer,n_spoof_trials\n");
    for (label, summary) in &rows {
        writeln!(pooled_csv, "{label},{}", summary.pooled_eer).expect("string write");
        for (attack, eval) in &summary.per_attack {
            writeln!(attack_csv, "{label},{attack},{},{}", eval.eer, eval.n_spoof_trials)
                .expect("string write");
        }
    }
    let pooled_path = run_dir.join("plot_pooled.csv");
    std::fs::write(&pooled_path, pooled_csv).map_err(|e| Error::io(&pooled_path, e))?;
    let attack_path = run_dir.join("plot_per_attack.csv");
    std::fs::write(&attack_path, attack_csv).map_err(|e| Error::io(&attack_path, e))?;

    Ok(table)
}
