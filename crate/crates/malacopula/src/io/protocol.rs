//! Trial protocol files.
//!
//! One line per utterance, space-separated:
//! `role speaker_id utterance_id attack_id path`, where role is
//! enrol|target|spoof and attack_id is `-` for bona fide entries. Paths are
//! relative to the protocol file's directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{TrialProtocol, UtteranceRecord, UtteranceRole};
use crate::error::{Error, Result};

pub fn write_protocol(path: &Path, protocol: &TrialProtocol) -> Result<()> {
    let mut out = String::new();
    for entry in &protocol.entries {
        let attack = entry.attack_id.as_deref().unwrap_or("-");
        writeln!(
            out,
            "{} {} {} {} {}",
            entry.role, entry.speaker_id, entry.utterance_id, attack, entry.rel_path
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_protocol(path: &Path) -> Result<TrialProtocol> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::format(format!(
                "{}:{}: expected 5 fields, found {}",
                path.display(),
                idx + 1,
                fields.len()
            )));
        }
        let role: UtteranceRole = fields[0]
            .parse()
            .map_err(|e| Error::format(format!("{}:{}: {e}", path.display(), idx + 1)))?;
        let attack_id = match fields[3] {
            "-" => None,
            a => Some(a.to_string()),
        };
        if role == UtteranceRole::Spoof && attack_id.is_none() {
            return Err(Error::format(format!(
                "{}:{}: spoof entry without an attack_id",
                path.display(),
                idx + 1
            )));
        }
        if role != UtteranceRole::Spoof && attack_id.is_some() {
            return Err(Error::format(format!(
                "{}:{}: bona fide entry carries an attack_id",
                path.display(),
                idx + 1
            )));
        }
        entries.push(UtteranceRecord {
            role,
            speaker_id: fields[1].to_string(),
            utterance_id: fields[2].to_string(),
            attack_id,
            rel_path: fields[4].to_string(),
        });
    }
    Ok(TrialProtocol { entries })
}
