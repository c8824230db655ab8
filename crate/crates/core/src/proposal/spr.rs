use rand::{Rng, RngCore};

use super::edge_sampler::{edge_history_log_density, open_unit, sample_edge_history};
use super::{Category, Context, Outcome, Proposal};
use crate::error::Result;
use crate::history::TreeHistory;
use crate::mcmc::{ChainState, Dirty};
use crate::tree::{NodeId, Tree};

/// Subtree pruning and regrafting.
///
/// An internal node `x` and one of its three neighbours `s` are drawn; the
/// subtree through `s` is detached together with `x`, the two remaining edges
/// at `x` fuse, and `x` is reinserted at a uniform point of a uniformly drawn
/// edge of what is left. The histories on every edge touching `x` and on the
/// fused edge are redrawn, as is the length of `x`'s sequence.
#[derive(Clone, Copy, Debug, Default)]
pub struct Spr;

/// Truncated discrete Laplace law on `0..`: mass proportional to `ρ^|n-m|`.
pub(crate) fn ln_laplace(n: usize, m: usize, rho: f64) -> f64 {
    let z = (1.0 - rho.powi(m as i32 + 1)) / (1.0 - rho) + rho / (1.0 - rho);
    n.abs_diff(m) as f64 * rho.ln() - z.ln()
}

fn geometric<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> i64 {
    (open_unit(rng).ln() / rho.ln()).floor() as i64
}

pub(crate) fn sample_laplace<R: Rng + ?Sized>(m: usize, rho: f64, rng: &mut R) -> usize {
    loop {
        let n = m as i64 + geometric(rho, rng) - geometric(rho, rng);
        if n >= 0 {
            return n as usize;
        }
    }
}

/// Equal mixture of Laplace laws centred at each of `centres`.
fn ln_mixture(n: usize, centres: [usize; 3], rho: f64) -> f64 {
    let total: f64 = centres.iter().map(|&m| ln_laplace(n, m, rho).exp()).sum();
    (total / 3.0).ln()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Regraft {
    /// The edge formed by fusing `x`'s two remaining edges.
    Fused,
    /// An untouched edge, keyed by its child in the `x`-rooted tree.
    Edge(NodeId),
}

impl Proposal for Spr {
    fn name(&self) -> &str {
        "spr"
    }

    fn category(&self) -> Category {
        Category::Topology
    }

    fn propose(&self, state: &ChainState, ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let tree = state.tree();
        if tree.n_leaves() < 4 {
            return Ok(None);
        }
        let model = state.indel_model();
        let guided = &ctx.tuning.guided;
        let rho = ctx.tuning.spr_length_decay;

        let internal: Vec<_> = tree.internal_nodes().collect();
        let x = internal[rng.random_range(0..internal.len())];
        let tx = tree.rerooted(x)?;
        let hx = state.history().reoriented(tree, &tx);
        let len = hx.node_lengths(&tx);
        let kids = tx.children(x).to_vec();
        let pick = rng.random_range(0..3);
        let s = kids[pick];
        let (a, b) = match pick {
            0 => (kids[1], kids[2]),
            1 => (kids[0], kids[2]),
            _ => (kids[0], kids[1]),
        };
        let mut detached = vec![false; tx.n_nodes()];
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            detached[u] = true;
            stack.extend_from_slice(tx.children(u));
        }
        let mut targets = vec![Regraft::Fused];
        targets.extend(
            tx.edges()
                .filter(|&v| !detached[v] && v != a && v != b)
                .map(Regraft::Edge),
        );
        let target = targets[rng.random_range(0..targets.len())];
        let fused = tx.branch_length(a) + tx.branch_length(b);
        let (c, d, w) = match target {
            Regraft::Fused => (a, b, fused),
            Regraft::Edge(v) => (tx.parent(v).unwrap(), v, tx.branch_length(v)),
        };
        let u = open_unit(rng);
        let (wc, wd) = (u * w, (1.0 - u) * w);
        if !(wc > 0.0 && wd > 0.0) {
            return Ok(None);
        }

        let mut edges = Vec::with_capacity(tx.n_edges());
        for v in tx.edges() {
            if v == a || v == b || target == Regraft::Edge(v) {
                continue;
            }
            edges.push((tx.parent(v).unwrap(), v, tx.branch_length(v)));
        }
        if target != Regraft::Fused {
            edges.push((a, b, fused));
        }
        edges.push((x, c, wc));
        edges.push((x, d, wd));
        let new_tree = Tree::from_edges(tx.labels().clone(), &edges, x)?;

        let new_len = {
            let m = [len[c], len[d], len[s]][rng.random_range(0..3)];
            sample_laplace(m, rho, rng)
        };
        let mut ln_forward = ln_mixture(new_len, [len[c], len[d], len[s]], rho);
        let mut ln_reverse = ln_mixture(len[x], [len[a], len[b], len[s]], rho);
        for v in [a, b, s] {
            ln_reverse += edge_history_log_density(model, guided, hx.edge(v));
        }
        if let Regraft::Edge(v) = target {
            ln_reverse += edge_history_log_density(model, guided, hx.edge(v));
        }

        let node_len = |v: NodeId| if v == x { new_len } else { len[v] };
        let mut per_edge = vec![None; new_tree.n_nodes()];
        for v in new_tree.edges() {
            let p = new_tree.parent(v).unwrap();
            let fresh = p == x || (target != Regraft::Fused && ((p == a && v == b) || (p == b && v == a)));
            per_edge[v] = Some(if fresh {
                let h = sample_edge_history(model, guided, node_len(p), node_len(v), new_tree.branch_length(v), rng);
                ln_forward += edge_history_log_density(model, guided, &h);
                h
            } else if tx.parent(v) == Some(p) {
                hx.edge(v).clone()
            } else {
                hx.edge(p).reversed()
            });
        }
        let history = TreeHistory::new(&new_tree, new_len, per_edge)?;
        Ok(Some(Outcome {
            tree: new_tree,
            history,
            params: state.params().clone(),
            dirty: Dirty {
                indel_params: false,
                subst_params: false,
                ..Dirty::everything()
            },
            ln_forward,
            ln_reverse,
            ln_jacobian: w.ln() - fused.ln(),
        }))
    }
}
