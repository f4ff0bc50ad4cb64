//! Binary serialization of selected filters.
//!
//! Layout (all integers little-endian): 4-byte magic `MCF1`-style tag is
//! split into a magic string and a version word so readers can reject both
//! foreign files and future revisions. Coefficients are stored as the raw
//! row-major f64 payload — they are the scientific artifact, so no
//! precision is dropped. Files round-trip bit-exactly.

use std::path::Path;

use crate::embedder::EmbedderConfig;
use crate::error::{Error, Result};
use crate::signal::MalacopulaFilter;

const MAGIC: &[u8; 4] = b"MCFL";
const VERSION: u32 = 1;

/// A trained filter with its provenance header.
#[derive(Debug, Clone)]
pub struct FilterFile {
    pub speaker_id: String,
    pub attack_id: String,
    pub selected_epoch: u64,
    pub f_a_hash: u64,
    pub f_b_hash: u64,
    pub sample_rate_hz: u32,
    pub filter: MalacopulaFilter,
}

impl FilterFile {
    /// Warnings for embedder configs that do not match the ones the filter
    /// was trained and selected under. A mismatch is not fatal — the filter
    /// still applies — but scores will not reproduce the training run.
    pub fn check_hashes(&self, f_a: &EmbedderConfig, f_b: &EmbedderConfig) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.f_a_hash != f_a.hash() {
            warnings.push(format!(
                "filter for {}/{} was trained under a different optimization embedder \
                 (hash {:016x}, current {:016x})",
                self.speaker_id,
                self.attack_id,
                self.f_a_hash,
                f_a.hash()
            ));
        }
        if self.f_b_hash != f_b.hash() {
            warnings.push(format!(
                "filter for {}/{} was selected under a different selection embedder \
                 (hash {:016x}, current {:016x})",
                self.speaker_id,
                self.attack_id,
                self.f_b_hash,
                f_b.hash()
            ));
        }
        warnings
    }
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn write_filter_file(path: &Path, file: &FilterFile) -> Result<()> {
    let filter = &file.filter;
    let mut bytes = Vec::with_capacity(64 + filter.coeffs().len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(filter.branches() as u32).to_le_bytes());
    bytes.extend_from_slice(&(filter.len() as u32).to_le_bytes());
    push_str(&mut bytes, &file.speaker_id);
    push_str(&mut bytes, &file.attack_id);
    bytes.extend_from_slice(&file.selected_epoch.to_le_bytes());
    bytes.extend_from_slice(&file.f_a_hash.to_le_bytes());
    bytes.extend_from_slice(&file.f_b_hash.to_le_bytes());
    bytes.extend_from_slice(&file.sample_rate_hz.to_le_bytes());
    for c in filter.coeffs() {
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::format(format!(
                "{}: truncated filter file",
                self.path.display()
            )));
        }
        let slice = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::format(format!("{}: non-UTF-8 string field", self.path.display())))
    }
}

pub fn read_filter_file(path: &Path) -> Result<FilterFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, at: 0, path };
    if cur.take(4)? != MAGIC {
        return Err(Error::format(format!(
            "{}: not a filter file (bad magic)",
            path.display()
        )));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::format(format!(
            "{}: unsupported filter file version {version}",
            path.display()
        )));
    }
    let branches = cur.u32()? as usize;
    let length = cur.u32()? as usize;
    let speaker_id = cur.string()?;
    let attack_id = cur.string()?;
    let selected_epoch = cur.u64()?;
    let f_a_hash = cur.u64()?;
    let f_b_hash = cur.u64()?;
    let sample_rate_hz = cur.u32()?;
    let n = branches
        .checked_mul(length)
        .ok_or_else(|| Error::format(format!("{}: coefficient count overflows", path.display())))?;
    let mut coeffs = Vec::with_capacity(n);
    for _ in 0..n {
        coeffs.push(f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes")));
    }
    if cur.at != bytes.len() {
        return Err(Error::format(format!(
            "{}: {} trailing bytes after payload",
            path.display(),
            bytes.len() - cur.at
        )));
    }
    let filter = MalacopulaFilter::new(branches, length, coeffs)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    Ok(FilterFile {
        speaker_id,
        attack_id,
        selected_epoch,
        f_a_hash,
        f_b_hash,
        sample_rate_hz,
        filter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn sample_file() -> FilterFile {
        let mut rng = SplitMix64::new(21);
        let coeffs: Vec<f64> = (0..3 * 9).map(|_| rng.uniform(-1.0, 1.0)).collect();
        FilterFile {
            speaker_id: "S03".into(),
            attack_id: "A02".into(),
            selected_epoch: 17,
            f_a_hash: EmbedderConfig::optimization_default().hash(),
            f_b_hash: EmbedderConfig::selection_default().hash(),
            sample_rate_hz: 16_000,
            filter: MalacopulaFilter::new(3, 9, coeffs).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.mcf");
        let p2 = dir.path().join("b.mcf");
        let file = sample_file();
        write_filter_file(&p1, &file).unwrap();
        let back = read_filter_file(&p1).unwrap();
        assert_eq!(back.speaker_id, file.speaker_id);
        assert_eq!(back.attack_id, file.attack_id);
        assert_eq!(back.selected_epoch, file.selected_epoch);
        assert_eq!(back.f_a_hash, file.f_a_hash);
        assert_eq!(back.f_b_hash, file.f_b_hash);
        assert_eq!(back.sample_rate_hz, file.sample_rate_hz);
        let orig_bits: Vec<u64> = file.filter.coeffs().iter().map(|c| c.to_bits()).collect();
        let back_bits: Vec<u64> = back.filter.coeffs().iter().map(|c| c.to_bits()).collect();
        assert_eq!(orig_bits, back_bits);
        write_filter_file(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn hash_mismatch_warns_but_loads() {
        let mut file = sample_file();
        file.f_a_hash ^= 1;
        let warnings =
            file.check_hashes(&EmbedderConfig::optimization_default(), &EmbedderConfig::selection_default());
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("optimization"), "{}", warnings[0]);
        file.f_b_hash ^= 1;
        let warnings =
            file.check_hashes(&EmbedderConfig::optimization_default(), &EmbedderConfig::selection_default());
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.mcf");
        std::fs::write(&p, b"WRONGMAGIC").unwrap();
        assert!(read_filter_file(&p).is_err());

        let file = sample_file();
        write_filter_file(&p, &file).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, &bytes).unwrap();
        let err = read_filter_file(&p).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");

        write_filter_file(&p, &file).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.extend_from_slice(&[0u8; 4]);
        std::fs::write(&p, &bytes).unwrap();
        let err = read_filter_file(&p).unwrap_err().to_string();
        assert!(err.contains("trailing"), "{err}");

        write_filter_file(&p, &file).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[4] = 99; // version
        std::fs::write(&p, &bytes).unwrap();
        let err = read_filter_file(&p).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }
}
