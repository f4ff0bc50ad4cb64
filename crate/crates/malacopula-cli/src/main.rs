//! Command-line front end for the adversarial filter toolkit.
//!
//! Subcommands mirror the experiment stages: `gen-corpus` synthesizes the
//! speaker corpus, `train` fits one filter per (speaker, attack, L, K)
//! cell, `apply` runs a stored filter over a WAV file, `score-eer`
//! evaluates baseline and filtered conditions, and `report` renders the
//! comparison table with plot-ready CSV series.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 when
//! one or more training cells failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use malacopula::io::config::{parse_grid, read_config, write_config, ExperimentConfig};
use malacopula::io::filter_file::read_filter_file;
use malacopula::io::wav::{read_wav, write_wav};
use malacopula::{
    generate_stage, malacopula_apply, report_stage, score_stage, train_stage, Error,
};

#[derive(Parser)]
#[command(name = "malacopula", version, about = "Adversarial filter toolkit for ASV spoofing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the stages that run off an experiment config.
#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the global seed (the corpus seed follows it)
    #[arg(long)]
    seed: Option<u64>,
    /// Override the filter grid, e.g. "257x5" or "257x1,257x3,1025x5"
    #[arg(long)]
    grid: Option<String>,
    /// Override the worker count (0 = MALACOPULA_WORKERS or all cores)
    #[arg(long)]
    workers: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut config = match &self.config {
            Some(path) => read_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.reseed(seed);
        }
        if let Some(grid) = &self.grid {
            config.grid = parse_grid(grid)?;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the default experiment config to a file
    GenConfig {
        /// Destination path
        #[arg(long)]
        output: PathBuf,
    },
    /// Synthesize the speaker corpus and trial protocol
    GenCorpus {
        #[command(flatten)]
        common: ConfigArgs,
        /// Corpus directory (overrides the config)
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train one filter per (speaker, attack, L, K) cell
    Train {
        #[command(flatten)]
        common: ConfigArgs,
        /// Keep filter files from an earlier interrupted run
        #[arg(long)]
        skip_existing: bool,
    },
    /// Run a stored filter over a WAV file
    Apply {
        /// Filter file written by `train`
        #[arg(long)]
        filter: PathBuf,
        /// Input WAV (16-bit mono PCM)
        #[arg(long)]
        input: PathBuf,
        /// Output WAV path
        #[arg(long)]
        output: PathBuf,
    },
    /// Score trials and compute pooled and per-attack spf-EER
    ScoreEer {
        #[command(flatten)]
        common: ConfigArgs,
        /// Also score each grid cell using its trained filters
        #[arg(long)]
        filtered: bool,
    },
    /// Render the comparison table and plot CSVs from a finished run
    Report {
        /// Run directory (defaults to the config's output directory)
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Experiment config supplying the run directory
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::GenConfig { output } => {
            write_config(&output, &ExperimentConfig::default())?;
            println!("wrote {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::GenCorpus { common, out_dir } => {
            let mut config = common.load()?;
            if let Some(dir) = out_dir {
                config.corpus_dir = dir;
            }
            let (corpus, protocol_path) = generate_stage(&config)?;
            for w in &corpus.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "wrote {} utterances for {} speakers, protocol at {}",
                corpus.utterances.len(),
                corpus.speakers.len(),
                protocol_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { common, skip_existing } => {
            let config = common.load()?;
            let summary = train_stage(&config, skip_existing)?;
            for o in &summary.outcomes {
                if o.skipped {
                    println!("{} skipped (exists)", o.cell.identity());
                } else {
                    println!(
                        "{} selected epoch {} signed_wasserstein {:+.6}",
                        o.cell.identity(),
                        o.selected_epoch,
                        o.signed_wasserstein
                    );
                }
            }
            let skipped = summary.outcomes.iter().filter(|o| o.skipped).count();
            println!(
                "trained {} cells ({} skipped), {} failures",
                summary.outcomes.len() - skipped,
                skipped,
                summary.failures.len()
            );
            if summary.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for (cell, message) in &summary.failures {
                    eprintln!("cell {} failed: {message}", cell.identity());
                }
                Ok(ExitCode::from(3))
            }
        }
        Command::Apply { filter, input, output } => {
            let file = read_filter_file(&filter)?;
            let signal = read_wav(&input)?;
            if signal.sample_rate_hz() != file.sample_rate_hz {
                return Err(Error::invalid(format!(
                    "{} is sampled at {} Hz but the filter was trained at {} Hz",
                    input.display(),
                    signal.sample_rate_hz(),
                    file.sample_rate_hz
                )));
            }
            let filtered = malacopula_apply(&signal, &file.filter)?;
            write_wav(&output, &filtered)?;
            println!("wrote {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::ScoreEer { common, filtered } => {
            let config = common.load()?;
            let outcome = score_stage(&config, filtered)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for c in &outcome.conditions {
                println!(
                    "{}: pooled spf-EER {:.2}% ({} target, {} spoof trials)",
                    c.condition,
                    c.summary.pooled_eer * 100.0,
                    c.summary.n_target_trials,
                    c.summary.n_spoof_trials
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { run_dir, config } => {
            let dir = match (run_dir, config) {
                (Some(dir), _) => dir,
                (None, Some(path)) => read_config(&path)?.output_dir,
                (None, None) => ExperimentConfig::default().output_dir,
            };
            let table = report_stage(&dir)?;
            print!("{table}");
            println!(
                "plot data: {} and {}",
                dir.join("plot_pooled.csv").display(),
                dir.join("plot_per_attack.csv").display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
