use std::collections::BTreeMap;

use super::splits::TopologyTable;
use crate::error::{Error, Result};
use crate::tree::Split;

/// Runs count as converged when every statistic is below this.
pub const PSRF_THRESHOLD: f64 = 1.05;

/// Largest tolerated spread of a clade's frequency across runs.
pub const SPREAD_THRESHOLD: f64 = 0.05;

/// Potential scale reduction of one parameter across chains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Psrf {
    pub r: f64,
    pub within: f64,
    pub between: f64,
    /// Zero within-chain variance; `r` is undefined.
    pub degenerate: bool,
}

impl Psrf {
    pub fn converged(&self) -> bool {
        !self.degenerate && self.r < PSRF_THRESHOLD
    }
}

/// `R = sqrt(((n-1)/n W + B/n) / W)` from equal-length traces.
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<Psrf> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::inconsistent("need ≥2 runs"));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::inconsistent("traces differ in length"));
    }
    if n < 2 {
        return Err(Error::inconsistent("traces need at least two draws"));
    }
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let between = nf / (m - 1) as f64 * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if !(within > 0.0) {
        return Ok(Psrf {
            r: f64::NAN,
            within,
            between,
            degenerate: true,
        });
    }
    Ok(Psrf {
        r: (((nf - 1.0) / nf * within + between / nf) / within).sqrt(),
        within,
        between,
        degenerate: false,
    })
}

/// Largest minus smallest frequency of each clade across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct CladeSpread {
    /// Widest spread first.
    pub spreads: Vec<(Split, f64)>,
    pub max_spread: f64,
    pub converged: bool,
}

/// Spread of every split seen in any run; a split missing from a run has
/// frequency zero there.
pub fn clade_frequency_diagnostic(runs: &[TopologyTable]) -> Result<CladeSpread> {
    if runs.len() < 2 {
        return Err(Error::inconsistent("need ≥2 runs"));
    }
    let mut freq: BTreeMap<&Split, Vec<f64>> = BTreeMap::new();
    for (k, run) in runs.iter().enumerate() {
        for (s, p) in &run.splits {
            freq.entry(s).or_insert_with(|| vec![0.0; runs.len()])[k] = *p;
        }
    }
    let mut spreads: Vec<(Split, f64)> = freq
        .into_iter()
        .map(|(s, ps)| {
            let hi = ps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = ps.iter().copied().fold(f64::INFINITY, f64::min);
            (s.clone(), hi - lo)
        })
        .collect();
    spreads.sort_by(|a, b| b.1.total_cmp(&a.1));
    let max_spread = spreads.first().map_or(0.0, |s| s.1);
    Ok(CladeSpread {
        converged: max_spread < SPREAD_THRESHOLD,
        spreads,
        max_spread,
    })
}
