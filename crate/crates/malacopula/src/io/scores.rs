//! Score files and evaluation report files.
//!
//! Score file: one line per trial, single-space separated:
//! `speaker_id utterance_id attack_id label score` with label target|spoof
//! and attack_id `-` for bona fide. Report file: line-oriented key-value
//! pairs followed by one `attack` line per attack. Floats are printed with
//! Rust's shortest round-trip formatting, so read∘write is the identity.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{AttackEval, EvalSummary, Trial};

pub fn write_scores(path: &Path, trials: &[Trial]) -> Result<()> {
    let mut out = String::new();
    for t in trials {
        writeln!(
            out,
            "{} {} {} {} {}",
            t.speaker_id,
            t.utterance_id,
            t.attack_id.as_deref().unwrap_or("-"),
            t.label().as_str(),
            t.score
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<Trial>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut trials = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::format(format!("{}:{}: {msg}", path.display(), idx + 1));
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 5 {
            return Err(bad(&format!("expected 5 fields, found {}", fields.len())));
        }
        let attack_id = match fields[2] {
            "-" => None,
            a => Some(a.to_string()),
        };
        let label = fields[3];
        match (label, &attack_id) {
            ("target", None) | ("spoof", Some(_)) => {}
            ("target", Some(_)) => return Err(bad("target trial carries an attack_id")),
            ("spoof", None) => return Err(bad("spoof trial lacks an attack_id")),
            (other, _) => return Err(bad(&format!("unknown label {other:?}"))),
        }
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| bad(&format!("unparseable score {:?}", fields[4])))?;
        trials.push(Trial {
            speaker_id: fields[0].to_string(),
            utterance_id: fields[1].to_string(),
            attack_id,
            score,
        });
    }
    Ok(trials)
}

pub fn write_report(path: &Path, summary: &EvalSummary) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "pooled_eer {}", summary.pooled_eer).expect("string write");
    writeln!(out, "pooled_threshold {}", summary.pooled_threshold).expect("string write");
    writeln!(out, "n_target_trials {}", summary.n_target_trials).expect("string write");
    writeln!(out, "n_spoof_trials {}", summary.n_spoof_trials).expect("string write");
    for (attack, eval) in &summary.per_attack {
        writeln!(
            out,
            "attack {attack} eer {} threshold {} n_spoof_trials {}",
            eval.eer, eval.threshold, eval.n_spoof_trials
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<EvalSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pooled_eer = None;
    let mut pooled_threshold = None;
    let mut n_target_trials = None;
    let mut n_spoof_trials = None;
    let mut per_attack = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::format(format!("{}:{}: {msg}", path.display(), idx + 1));
        let fields: Vec<&str> = line.split(' ').collect();
        let parse_f64 = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| bad(format!("unparseable number {s:?}")))
        };
        let parse_usize = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| bad(format!("unparseable count {s:?}")))
        };
        match fields.as_slice() {
            ["pooled_eer", v] => pooled_eer = Some(parse_f64(v)?),
            ["pooled_threshold", v] => pooled_threshold = Some(parse_f64(v)?),
            ["n_target_trials", v] => n_target_trials = Some(parse_usize(v)?),
            ["n_spoof_trials", v] => n_spoof_trials = Some(parse_usize(v)?),
            ["attack", attack, "eer", e, "threshold", t, "n_spoof_trials", n] => {
                per_attack.insert(
                    attack.to_string(),
                    AttackEval {
                        eer: parse_f64(e)?,
                        threshold: parse_f64(t)?,
                        n_spoof_trials: parse_usize(n)?,
                    },
                );
            }
            _ => return Err(bad(format!("unrecognized report line {line:?}"))),
        }
    }
    let missing = |field: &str| Error::format(format!("{}: missing {field}", path.display()));
    Ok(EvalSummary {
        pooled_eer: pooled_eer.ok_or_else(|| missing("pooled_eer"))?,
        pooled_threshold: pooled_threshold.ok_or_else(|| missing("pooled_threshold"))?,
        n_target_trials: n_target_trials.ok_or_else(|| missing("n_target_trials"))?,
        n_spoof_trials: n_spoof_trials.ok_or_else(|| missing("n_spoof_trials"))?,
        per_attack,
    })
}
