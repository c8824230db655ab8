//! Posterior summaries: homology, annealed alignments, split tables and
//! convergence checks.

pub mod anneal;
pub mod convergence;
pub mod homology;
pub mod splits;

pub use anneal::{accuracy_level, annealed_alignment, cell_accuracy, expected_score, Annealed, DEFAULT_GAP_FACTOR};
pub use convergence::{clade_frequency_diagnostic, gelman_rubin, CladeSpread, Psrf, PSRF_THRESHOLD, SPREAD_THRESHOLD};
pub use homology::{pair_homology_posteriors, PairPosteriors};
pub use splits::{
    fragment_size_posterior, split_indel_stats, topology_split_table, FragmentSizes, SplitIndel, TopologyTable,
};

use crate::error::{Error, Result};

/// Fraction of each run discarded before summarizing.
pub const DEFAULT_BURN_IN: f64 = 0.25;

/// The samples left after dropping the leading `fraction`.
pub fn after_burn_in<T>(samples: &[T], fraction: f64) -> Result<&[T]> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::domain(format!("burn-in fraction {fraction} outside [0, 1)")));
    }
    let skip = (samples.len() as f64 * fraction).floor() as usize;
    Ok(&samples[skip..])
}
