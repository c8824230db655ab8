//! Text formats: FASTA, Newick, indel histories, run configs, sample logs
//! and reports.

pub mod config;
pub mod fasta;
pub mod history;
pub mod log;
pub mod newick;
pub mod report;

pub use config::RunConfig;
pub use fasta::{parse_fasta, write_aligned_fasta, write_fasta};
pub use history::{parse_history, write_history};
pub use log::{format_record, log_header, read_samples, SampleLog, SampleWriter};
pub use newick::{parse_newick, write_newick};
