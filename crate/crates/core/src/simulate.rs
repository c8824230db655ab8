//! Forward simulation of sequences, indel histories and alignments.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Geometric as GeometricDist};

use crate::alignment::{project_alignment, Alignment};
use crate::error::{Error, Result};
use crate::history::{EdgeHistory, EventKind, IndelEvent, TreeHistory};
use crate::hky::{Matrix, RateMatrix};
use crate::indel::IndelModel;
use crate::prior::{sample_prior, Params, PriorConfig};
use crate::proposal::edge_sampler::open_unit;
use crate::sequence::{Nucleotide, Sequence};
use crate::tree::Tree;

/// Everything a simulation produces.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub sequences: Vec<Sequence>,
    pub tree: Tree,
    pub history: TreeHistory,
    pub alignment: Alignment,
    pub params: Params,
    /// Lineage of every leaf residue as tracked during simulation.
    pub lineages: Vec<Vec<u64>>,
}

/// Unconditioned indel process on one edge: exponential waits at rate
/// `η(n)`, type by rate, insertion sizes from `i`, deletion (size, position)
/// in proportion to `d(l)`.
pub fn simulate_edge_history<R: Rng + ?Sized>(model: &IndelModel, n0: usize, span: f64, rng: &mut R) -> EdgeHistory {
    let mut events = Vec::new();
    let mut n = n0;
    let mut t = 0.0;
    loop {
        let next = t - open_unit(rng).ln() / model.eta(n);
        if next >= span {
            break;
        }
        if next <= t {
            continue;
        }
        t = next;
        let e = if rng.random::<f64>() < model.insertion_prob(n) {
            let size = model.sample_insertion_size(rng);
            IndelEvent::insertion(t, rng.random_range(0..=n), size)
        } else {
            let size = model.sample_deletion_size(n, rng);
            IndelEvent::deletion(t, rng.random_range(0..=n - size), size)
        };
        n = e.apply_len(n);
        events.push(e);
    }
    EdgeHistory::new(events, n0, span)
}

/// Draws from the equilibrium length law `q(x) = r (1-r)^x`.
pub fn sample_equilibrium_length<R: Rng + ?Sized>(r: f64, rng: &mut R) -> Result<usize> {
    let g = GeometricDist::new(r).map_err(|e| Error::domain(e.to_string()))?;
    Ok(g.sample(rng) as usize)
}

fn draw_base<R: Rng + ?Sized>(weights: &[f64; 4], rng: &mut R) -> u8 {
    let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (b, &w) in weights.iter().enumerate() {
        if u < w {
            return b as u8;
        }
        u -= w;
    }
    3
}

/// Evolves every residue independently for `dt`.
fn substitute<R: Rng + ?Sized>(seq: &mut [(u64, u8)], rate: &RateMatrix, dt: f64, rng: &mut R) {
    if seq.is_empty() || dt <= 0.0 {
        return;
    }
    let p: Matrix = rate.transition_probabilities(dt).expect("non-negative interval");
    for (_, base) in seq.iter_mut() {
        *base = draw_base(&p[*base as usize], rng);
    }
}

/// Simulates sequences on a fixed tree with fixed parameters.
pub fn simulate_on_tree<R: Rng + ?Sized>(tree: &Tree, params: &Params, root_len: Option<usize>, rng: &mut R) -> Result<Dataset> {
    let model = IndelModel::new(params.indel.clone())?;
    let rate = RateMatrix::new(params.subst);
    let root_len = match root_len {
        Some(n) => n,
        None => sample_equilibrium_length(params.indel.r, rng)?,
    };
    let mut next_id = 0u64;
    let mut mint = || {
        next_id += 1;
        next_id - 1
    };
    let mut node_seq: Vec<Vec<(u64, u8)>> = vec![Vec::new(); tree.n_nodes()];
    node_seq[tree.root()] = (0..root_len).map(|_| (mint(), draw_base(&params.subst.pi, rng))).collect();
    let mut edges = vec![None; tree.n_nodes()];
    for v in tree.preorder() {
        let Some(p) = tree.parent(v) else { continue };
        let span = tree.branch_length(v);
        let h = simulate_edge_history(&model, node_seq[p].len(), span, rng);
        let mut seq = node_seq[p].clone();
        let mut t = 0.0;
        for e in &h.events {
            substitute(&mut seq, &rate, e.time - t, rng);
            t = e.time;
            match e.kind {
                EventKind::Insertion => {
                    let fresh: Vec<_> = (0..e.size).map(|_| (mint(), draw_base(&params.subst.pi, rng))).collect();
                    seq.splice(e.position..e.position, fresh);
                }
                EventKind::Deletion => {
                    seq.drain(e.position..e.position + e.size);
                }
            }
        }
        substitute(&mut seq, &rate, span - t, rng);
        node_seq[v] = seq;
        edges[v] = Some(h);
    }
    let history = TreeHistory::new(tree, root_len, edges)?;
    let alignment = project_alignment(&history, tree);
    let labels = tree.labels();
    let sequences = (0..tree.n_leaves())
        .map(|i| {
            Sequence::new(
                labels[i].clone(),
                node_seq[i].iter().map(|&(_, b)| Nucleotide::from_index(b as usize)).collect(),
            )
        })
        .collect();
    let lineages = (0..tree.n_leaves())
        .map(|i| node_seq[i].iter().map(|&(id, _)| id).collect())
        .collect();
    Ok(Dataset {
        sequences,
        tree: tree.clone(),
        history,
        alignment,
        params: params.clone(),
        lineages,
    })
}

/// Default taxon names `T1..Tn`.
pub fn taxon_labels(n: usize) -> Arc<[String]> {
    (1..=n).map(|i| format!("T{i}")).collect::<Vec<_>>().into()
}

/// Parameters and tree from the prior, then sequences on that tree.
pub fn simulate_dataset<R: Rng + ?Sized>(n_taxa: usize, prior: &PriorConfig, rng: &mut R) -> Result<Dataset> {
    if n_taxa < 3 {
        return Err(Error::inconsistent(format!("need at least 3 taxa, got {n_taxa}")));
    }
    let (tree, params) = sample_prior(rng, prior, taxon_labels(n_taxa))?;
    simulate_on_tree(&tree, &params, None, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indel::IndelParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vanishing_rate_gives_empty_histories() {
        let m = IndelModel::new(IndelParams::geometric(0.1, 0.5, 1e-12).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(simulate_edge_history(&m, 20, 0.1, &mut rng).n_events(), 0);
        }
    }

    #[test]
    fn zero_event_frequency() {
        let m = IndelModel::new(IndelParams::geometric(0.1, 0.5, 0.1).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n0, v, draws) = (5, 0.4, 200_000);
        let hits = (0..draws)
            .filter(|_| simulate_edge_history(&m, n0, v, &mut rng).n_events() == 0)
            .count();
        let p = (-m.eta(n0) * v).exp();
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((hits as f64 / draws as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn leaf_rows_and_tracked_homology_agree_with_the_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prior = PriorConfig {
            r: (2.0, 60.0),
            ..PriorConfig::default()
        };
        for _ in 0..200 {
            let d = simulate_dataset(5, &prior, &mut rng).unwrap();
            let lens: Vec<_> = d.sequences.iter().map(Sequence::len).collect();
            d.alignment.validate(&lens).unwrap();
            for col in d.alignment.columns() {
                let ids: Vec<u64> = col
                    .iter()
                    .enumerate()
                    .filter_map(|(t, c)| c.map(|i| d.lineages[t][i as usize]))
                    .collect();
                assert!(!ids.is_empty());
                assert!(ids.iter().all(|&x| x == ids[0]));
            }
            let residues: usize = lens.iter().sum();
            let distinct: std::collections::BTreeSet<u64> = d.lineages.iter().flatten().copied().collect();
            assert_eq!(distinct.len(), d.alignment.n_columns());
            assert!(residues >= d.alignment.n_columns());
        }
    }

    #[test]
    fn near_one_r_gives_short_or_empty_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let prior = PriorConfig {
            r: (5000.0, 1.0),
            ..PriorConfig::default()
        };
        let d = simulate_dataset(3, &prior, &mut rng).unwrap();
        assert!(d.history.root_len() <= 2);
    }
}
