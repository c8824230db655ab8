use rand::{Rng, RngCore};

use super::edge_sampler::{edge_history_log_density, sample_edge_history};
use super::{reflected_int_prob, reflected_int_walk, scale_walk, Category, Context, Outcome, Proposal};
use crate::error::Result;
use crate::mcmc::{ChainState, Dirty, Edges};
use crate::tree::NodeId;

/// New sequence length at one internal node, with fresh lengths and
/// histories on its three edges.
#[derive(Clone, Copy, Debug, Default)]
pub struct NodeUpdate;

/// The three edges at internal node `x`, keyed by child node.
pub(crate) fn incident_edges(tree: &crate::tree::Tree, x: NodeId) -> Vec<NodeId> {
    let mut edges: Vec<NodeId> = tree.children(x).to_vec();
    if tree.parent(x).is_some() {
        edges.push(x);
    }
    edges
}

impl Proposal for NodeUpdate {
    fn name(&self) -> &str {
        "node_update"
    }

    fn category(&self) -> Category {
        Category::Node
    }

    fn propose(&self, state: &ChainState, ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let tree = state.tree();
        let model = state.indel_model();
        let tuning = &ctx.tuning;
        let internal: Vec<_> = tree.internal_nodes().collect();
        let x = internal[rng.random_range(0..internal.len())];
        let old_len = state.history().node_len(tree, x);
        let new_len = reflected_int_walk(old_len, tuning.node_step, rng);
        let mut ln_forward = reflected_int_prob(old_len, new_len, tuning.node_step).ln();
        let mut ln_reverse = reflected_int_prob(new_len, old_len, tuning.node_step).ln();
        let mut ln_jacobian = 0.0;
        let mut new_tree = tree.clone();
        let mut history = state.history().clone();
        let edges = incident_edges(tree, x);
        for &c in &edges {
            let old = state.history().edge(c);
            let (span, ln_ratio) = scale_walk(old.span, tuning.log_window, rng);
            if !(span > 0.0 && span.is_finite()) {
                return Ok(None);
            }
            ln_jacobian += ln_ratio;
            let (from, to) = if c == x {
                (old.parent_len, new_len)
            } else {
                (new_len, old.child_len)
            };
            let fresh = sample_edge_history(model, &tuning.guided, from, to, span, rng);
            ln_forward += edge_history_log_density(model, &tuning.guided, &fresh);
            ln_reverse += edge_history_log_density(model, &tuning.guided, old);
            new_tree.set_branch_length(c, span);
            history.set_edge(c, fresh);
        }
        if tree.parent(x).is_none() {
            history.set_root_len(new_len);
        }
        Ok(Some(Outcome {
            tree: new_tree,
            history,
            params: state.params().clone(),
            dirty: Dirty {
                edges: Edges::Listed(edges),
                lengths: true,
                alignment: true,
                ..Dirty::nothing()
            },
            ln_forward,
            ln_reverse,
            ln_jacobian,
        }))
    }
}
