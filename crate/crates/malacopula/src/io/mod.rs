//! File formats: WAV audio, trial protocols, filter files, score lists,
//! evaluation reports, and experiment configuration.

pub mod config;
pub mod filter_file;
pub mod protocol;
pub mod scores;
pub mod wav;
