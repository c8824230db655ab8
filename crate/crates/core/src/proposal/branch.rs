use rand::RngCore;

use super::{random_edge, scale_walk, Category, Context, Outcome, Proposal};
use crate::error::Result;
use crate::mcmc::{ChainState, Dirty, Edges};

/// Multiplicative change of one branch length; event times on the edge move
/// in proportion, so the alignment is untouched.
#[derive(Clone, Copy, Debug, Default)]
pub struct BranchLength;

impl Proposal for BranchLength {
    fn name(&self) -> &str {
        "branch_length"
    }

    fn category(&self) -> Category {
        Category::Branch
    }

    fn propose(&self, state: &ChainState, ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let v = random_edge(state.tree(), rng);
        let old = state.tree().branch_length(v);
        let (new, ln_ratio) = scale_walk(old, ctx.tuning.log_window, rng);
        if !(new > 0.0 && new.is_finite()) {
            return Ok(None);
        }
        let h = state.history().edge(v).rescaled(new);
        if h.validate().is_err() {
            return Ok(None);
        }
        let k = h.n_events();
        let mut tree = state.tree().clone();
        tree.set_branch_length(v, new);
        let mut history = state.history().clone();
        history.set_edge(v, h);
        Ok(Some(Outcome {
            tree,
            history,
            params: state.params().clone(),
            dirty: Dirty {
                edges: Edges::Listed(vec![v]),
                lengths: true,
                ..Dirty::nothing()
            },
            ln_forward: 0.0,
            ln_reverse: 0.0,
            ln_jacobian: (k + 1) as f64 * ln_ratio,
        }))
    }
}
