use rand::{Rng, RngCore};

use super::edge_sampler::open_unit;
use super::{Category, Context, Outcome, Proposal};
use crate::alignment::project_alignment;
use crate::error::Result;
use crate::guide::edge_blocks;
use crate::history::{EdgeHistory, EventKind, IndelEvent, TreeHistory};
use crate::mcmc::{ChainState, Dirty, Edges};
use crate::tree::{NodeId, Tree};

/// Moves the root to a uniformly chosen internal node. The score does not
/// depend on the root, so this is a Gibbs step on the orientation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Reroot;

impl Proposal for Reroot {
    fn name(&self) -> &str {
        "reroot"
    }

    fn category(&self) -> Category {
        Category::Node
    }

    fn propose(&self, state: &ChainState, _ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let tree = state.tree();
        let internal: Vec<_> = tree.internal_nodes().collect();
        let root = internal[rng.random_range(0..internal.len())];
        if root == tree.root() {
            return Ok(None);
        }
        let new_tree = tree.rerooted(root)?;
        let history = state.history().reoriented(tree, &new_tree);
        Ok(Some(Outcome {
            tree: new_tree,
            history,
            params: state.params().clone(),
            dirty: Dirty {
                edges: Edges::All,
                lengths: true,
                alignment: true,
                ..Dirty::nothing()
            },
            ln_forward: 0.0,
            ln_reverse: 0.0,
            ln_jacobian: 0.0,
        }))
    }
}

/// Slides a deletion through a non-root internal node. Pushing moves the
/// last deletion on the node's own edge to the start of every child edge,
/// so the node keeps the block; pulling does the reverse. Either way the
/// block reaches no leaf below, and the alignment is unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct DeletionPush;

/// Time of the first event on `h`, or its span.
fn first_time(h: &EdgeHistory) -> f64 {
    h.events.first().map_or(h.span, |e| e.time)
}

/// Time of the last event on `h`, or zero.
fn last_time(h: &EdgeHistory) -> f64 {
    h.events.last().map_or(0.0, |e| e.time)
}

impl Proposal for DeletionPush {
    fn name(&self) -> &str {
        "deletion_push"
    }

    fn category(&self) -> Category {
        Category::Node
    }

    fn propose(&self, state: &ChainState, _ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let tree = state.tree();
        let nodes: Vec<_> = tree.internal_nodes().filter(|&x| x != tree.root()).collect();
        if nodes.is_empty() {
            return Ok(None);
        }
        let x = nodes[rng.random_range(0..nodes.len())];
        let old = state.history();
        let above = old.edge(x);
        let children = tree.children(x);
        let mut history = old.clone();
        let (ln_forward, ln_reverse) = if rng.random::<bool>() {
            let Some(&last) = above.events.last().filter(|e| e.kind == EventKind::Deletion) else {
                return Ok(None);
            };
            let events = above.events[..above.events.len() - 1].to_vec();
            let new_above = EdgeHistory::new(events, above.parent_len, above.span);
            let mut ln_forward = 0.0;
            for &c in children {
                let h = old.edge(c);
                let until = first_time(h);
                let time = open_unit(rng) * until;
                if !(time > 0.0 && time < until) {
                    return Ok(None);
                }
                ln_forward -= until.ln();
                let mut events = vec![IndelEvent::deletion(time, last.position, last.size)];
                events.extend_from_slice(&h.events);
                history.set_edge(c, EdgeHistory::new(events, h.parent_len + last.size, h.span));
            }
            let ln_reverse = -(new_above.span - last_time(&new_above)).ln();
            history.set_edge(x, new_above);
            (ln_forward, ln_reverse)
        } else {
            let firsts: Vec<IndelEvent> = children.iter().filter_map(|&c| old.edge(c).events.first().copied()).collect();
            let Some(&first) = firsts.first() else {
                return Ok(None);
            };
            if firsts.len() != children.len()
                || first.kind != EventKind::Deletion
                || firsts.iter().any(|e| e.kind != first.kind || e.position != first.position || e.size != first.size)
            {
                return Ok(None);
            }
            let mut ln_reverse = 0.0;
            for &c in children {
                let h = old.edge(c);
                let new = EdgeHistory::new(h.events[1..].to_vec(), h.parent_len - first.size, h.span);
                ln_reverse -= first_time(&new).ln();
                history.set_edge(c, new);
            }
            let from = last_time(above);
            let time = from + open_unit(rng) * (above.span - from);
            if !(time > from && time < above.span) {
                return Ok(None);
            }
            let mut events = above.events.clone();
            events.push(IndelEvent::deletion(time, first.position, first.size));
            history.set_edge(x, EdgeHistory::new(events, above.parent_len, above.span));
            (-(above.span - from).ln(), ln_reverse)
        };
        let mut edges = vec![x];
        edges.extend_from_slice(children);
        Ok(Some(Outcome {
            tree: tree.clone(),
            history,
            params: state.params().clone(),
            dirty: Dirty {
                alignment: false,
                ..Dirty::histories(edges)
            },
            ln_forward,
            ln_reverse,
            ln_jacobian: 0.0,
        }))
    }
}

/// Nearest-neighbour interchange across an internal edge that carries no
/// events. Both ends then hold the same sequence, so a subtree below one end
/// can swap places with one below the other while every edge keeps its
/// history. The alignment is unchanged; only the tree is rescored.
#[derive(Clone, Copy, Debug, Default)]
pub struct QuietSwap;

impl Proposal for QuietSwap {
    fn name(&self) -> &str {
        "quiet_swap"
    }

    fn category(&self) -> Category {
        Category::Topology
    }

    fn propose(&self, state: &ChainState, _ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let tree = state.tree();
        let old = state.history();
        let quiet: Vec<_> = tree
            .internal_nodes()
            .filter(|&v| v != tree.root() && old.edge(v).n_events() == 0)
            .collect();
        if quiet.is_empty() {
            return Ok(None);
        }
        let v = quiet[rng.random_range(0..quiet.len())];
        let new_tree = swap_across(tree, v, rng)?;
        let per_edge = (0..tree.n_nodes())
            .map(|x| (x != tree.root()).then(|| old.edge(x).clone()))
            .collect();
        let history = TreeHistory::new(&new_tree, old.root_len(), per_edge)?;
        Ok(Some(Outcome {
            tree: new_tree,
            history,
            params: state.params().clone(),
            dirty: Dirty::everything(),
            ln_forward: 0.0,
            ln_reverse: 0.0,
            ln_jacobian: 0.0,
        }))
    }
}

/// Swaps a uniformly chosen child of `v` with a uniformly chosen sibling of
/// `v`. The reverse swap has the same probability.
fn swap_across(tree: &Tree, v: NodeId, rng: &mut dyn RngCore) -> Result<Tree> {
    let u = tree.parent(v).expect("non-root node");
    let below = tree.children(v);
    let b = below[rng.random_range(0..below.len())];
    let others: Vec<_> = tree.children(u).iter().copied().filter(|&c| c != v).collect();
    let c = others[rng.random_range(0..others.len())];
    let edges: Vec<_> = tree
        .edge_list()
        .into_iter()
        .map(|(p, child, len)| match child {
            x if x == b => (u, x, len),
            x if x == c => (v, x, len),
            _ => (p, child, len),
        })
        .collect();
    Tree::from_edges(tree.labels().clone(), &edges, tree.root())
}

/// Log-density of drawing `history` by rebuilding from `tree`'s alignment of
/// `from`, or `None` when the rebuild cannot produce it.
fn ln_rebuild(tree: &Tree, from: &TreeHistory, from_tree: &Tree, history: &TreeHistory) -> Result<Option<f64>> {
    let aln = project_alignment(from, from_tree);
    let (root_len, blocks) = edge_blocks(tree, &aln)?;
    if root_len != history.root_len() {
        return Ok(None);
    }
    let mut total = 0.0;
    for v in tree.edges() {
        let b = blocks[v].as_ref().expect("edge below a parent");
        let h = history.edge(v);
        if !b.explains(h) {
            return Ok(None);
        }
        total -= b.n_blocks() as f64 * h.span.ln();
    }
    Ok(Some(total))
}

/// Nearest-neighbour interchange that keeps the alignment. The history on
/// the new tree is rebuilt from it, each column arising once above its
/// residues and lost where no residue remains. The move is rejected when the
/// rebuild on the old tree could not give back the current history.
#[derive(Clone, Copy, Debug, Default)]
pub struct RebuildSwap;

impl Proposal for RebuildSwap {
    fn name(&self) -> &str {
        "rebuild_swap"
    }

    fn category(&self) -> Category {
        Category::Topology
    }

    fn propose(&self, state: &ChainState, _ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let tree = state.tree();
        let nodes: Vec<_> = tree.internal_nodes().filter(|&v| v != tree.root()).collect();
        if nodes.is_empty() {
            return Ok(None);
        }
        let v = nodes[rng.random_range(0..nodes.len())];
        let new_tree = swap_across(tree, v, rng)?;
        let aln = project_alignment(state.history(), tree);
        let (root_len, blocks) = edge_blocks(&new_tree, &aln)?;
        let per_edge = blocks
            .iter()
            .enumerate()
            .map(|(x, b)| b.as_ref().map(|b| b.history(new_tree.branch_length(x), rng)))
            .collect();
        let history = TreeHistory::new(&new_tree, root_len, per_edge)?;
        let ln_forward = new_tree
            .edges()
            .map(|x| -(blocks[x].as_ref().expect("edge below a parent").n_blocks() as f64) * new_tree.branch_length(x).ln())
            .sum();
        let Some(ln_reverse) = ln_rebuild(tree, &history, &new_tree, state.history())? else {
            return Ok(None);
        };
        Ok(Some(Outcome {
            tree: new_tree,
            history,
            params: state.params().clone(),
            dirty: Dirty::everything(),
            ln_forward,
            ln_reverse,
            ln_jacobian: 0.0,
        }))
    }
}
