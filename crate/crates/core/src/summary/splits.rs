use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mcmc::SampleRecord;
use crate::tree::{Split, Topology, Tree};

/// Posterior frequencies of unrooted topologies and of splits.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologyTable {
    pub n_samples: usize,
    /// Most probable first; ties in canonical order.
    pub topologies: Vec<(Topology, f64)>,
    /// Every observed split, trivial ones included.
    pub splits: Vec<(Split, f64)>,
}

impl TopologyTable {
    pub fn topology_probability(&self, t: &Topology) -> f64 {
        self.topologies.iter().find(|(x, _)| x == t).map_or(0.0, |(_, p)| *p)
    }

    pub fn split_probability(&self, s: &Split) -> f64 {
        self.splits.iter().find(|(x, _)| x == s).map_or(0.0, |(_, p)| *p)
    }

    /// Non-trivial splits with probability above one half, which are always
    /// mutually compatible.
    pub fn majority_splits(&self) -> Vec<Split> {
        let mut out: Vec<Split> = self
            .splits
            .iter()
            .filter(|(s, p)| !s.is_trivial() && *p > 0.5)
            .map(|(s, _)| s.clone())
            .collect();
        out.sort();
        out
    }
}

fn sorted_by_probability<K: Ord>(counts: BTreeMap<K, usize>, n: usize) -> Vec<(K, f64)> {
    let mut out: Vec<(K, f64)> = counts.into_iter().map(|(k, c)| (k, c as f64 / n as f64)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

/// Relative frequencies of topologies and splits.
pub fn topology_split_table<'a>(trees: impl IntoIterator<Item = &'a Tree>) -> Result<TopologyTable> {
    let mut topologies = BTreeMap::new();
    let mut splits = BTreeMap::new();
    let mut n = 0usize;
    for tree in trees {
        n += 1;
        *topologies.entry(tree.topology()).or_insert(0usize) += 1;
        for s in tree.splits().into_iter().flatten() {
            *splits.entry(s).or_insert(0usize) += 1;
        }
    }
    if n == 0 {
        return Err(Error::inconsistent("no trees to tabulate"));
    }
    Ok(TopologyTable {
        n_samples: n,
        topologies: sorted_by_probability(topologies, n),
        splits: sorted_by_probability(splits, n),
    })
}

/// Indel activity on one split's edge.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitIndel {
    pub split: Split,
    pub probability: f64,
    /// Mean events on the edge over samples containing the split.
    pub mean_events: f64,
    pub mean_length: f64,
}

/// Per-split posterior probability with mean event count and branch length
/// given the split.
pub fn split_indel_stats(samples: &[SampleRecord]) -> Result<Vec<SplitIndel>> {
    if samples.is_empty() {
        return Err(Error::inconsistent("no samples to summarize"));
    }
    let mut acc: BTreeMap<Split, (usize, usize, f64)> = BTreeMap::new();
    for s in samples {
        for (v, split) in s.tree.splits().into_iter().enumerate() {
            let Some(split) = split else { continue };
            let e = acc.entry(split).or_insert((0, 0, 0.0));
            e.0 += 1;
            e.1 += s.history.edge(v).n_events();
            e.2 += s.tree.branch_length(v);
        }
    }
    let n = samples.len() as f64;
    let mut out: Vec<SplitIndel> = acc
        .into_iter()
        .map(|(split, (k, events, len))| SplitIndel {
            split,
            probability: k as f64 / n,
            mean_events: events as f64 / k as f64,
            mean_length: len / k as f64,
        })
        .collect();
    out.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    Ok(out)
}

/// Posterior of the realized fragment-size distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct FragmentSizes {
    /// `pmf[k]` is the probability of size `k`; index 0 is unused.
    pub pmf: Vec<f64>,
    pub samples_with_events: usize,
    pub n_samples: usize,
}

impl FragmentSizes {
    /// True when no sample had any event.
    pub fn is_empty(&self) -> bool {
        self.samples_with_events == 0
    }
}

/// Average over samples of each sample's own size histogram, insertions and
/// deletions pooled. Event-free samples contribute nothing.
pub fn fragment_size_posterior(samples: &[SampleRecord]) -> FragmentSizes {
    let mut pmf: Vec<f64> = Vec::new();
    let mut with = 0usize;
    for s in samples {
        let sizes: Vec<usize> = s
            .history
            .edges()
            .flat_map(|(_, h)| h.events.iter().map(|e| e.size))
            .collect();
        if sizes.is_empty() {
            continue;
        }
        with += 1;
        let w = 1.0 / sizes.len() as f64;
        for k in sizes {
            if pmf.len() <= k {
                pmf.resize(k + 1, 0.0);
            }
            pmf[k] += w;
        }
    }
    if with > 0 {
        pmf.iter_mut().for_each(|p| *p /= with as f64);
    }
    FragmentSizes {
        pmf,
        samples_with_events: with,
        n_samples: samples.len(),
    }
}
