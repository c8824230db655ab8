use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Dirichlet, Distribution};

use super::{reflected_unit_walk, scale_walk, Category, Context, Outcome, Proposal};
use crate::error::Result;
use crate::hky::SubstParams;
use crate::indel::Geometric;
use crate::mcmc::{ChainState, Dirty};
use crate::prior::ln_dirichlet_density;

/// A parameter block updated on its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Pi,
    Kappa,
    Gamma,
    R,
    Rd,
    Lambda,
}

/// Random walk on one parameter block: Dirichlet around the current base
/// frequencies, multiplicative for κ, γ and λ, reflected on `(0, 1)` for `r`
/// and `r_d`.
#[derive(Clone, Copy, Debug)]
pub struct ParamWalk(pub Block);

fn beta_sd((a, b): (f64, f64)) -> f64 {
    (a * b / ((a + b) * (a + b) * (a + b + 1.0))).sqrt()
}

impl Proposal for ParamWalk {
    fn name(&self) -> &str {
        match self.0 {
            Block::Pi => "pi",
            Block::Kappa => "kappa",
            Block::Gamma => "gamma",
            Block::R => "r",
            Block::Rd => "rd",
            Block::Lambda => "lambda",
        }
    }

    fn category(&self) -> Category {
        Category::Parameters
    }

    fn propose(&self, state: &ChainState, ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let tuning = &ctx.tuning;
        let mut params = state.params().clone();
        let mut dirty = Dirty::nothing();
        let (mut ln_forward, mut ln_reverse, mut ln_jacobian) = (0.0, 0.0, 0.0);
        match self.0 {
            Block::Pi => {
                let c = tuning.pi_concentration;
                let old = params.subst.pi;
                let Ok(forward) = Dirichlet::new(old.map(|p| c * p)) else {
                    return Ok(None);
                };
                let new: [f64; 4] = forward.sample(rng);
                let Ok(subst) = SubstParams::new(params.subst.kappa, new) else {
                    return Ok(None);
                };
                ln_forward = ln_dirichlet_density(&subst.pi, &old.map(|p| c * p));
                ln_reverse = ln_dirichlet_density(&old, &subst.pi.map(|p| c * p));
                params.subst = subst;
                dirty.subst_params = true;
            }
            Block::Kappa => {
                let (k, u) = scale_walk(params.subst.kappa, tuning.log_window, rng);
                params.subst.kappa = k;
                ln_jacobian = u;
                dirty.subst_params = true;
            }
            Block::Gamma => {
                let (g, u) = scale_walk(params.gamma, tuning.log_window, rng);
                params.gamma = g;
                ln_jacobian = u;
            }
            Block::Lambda => {
                let (l, u) = scale_walk(params.indel.lambda, tuning.log_window, rng);
                params.indel.lambda = l;
                ln_jacobian = u;
                dirty.indel_params = true;
            }
            Block::R => {
                let w = tuning.r_window.unwrap_or_else(|| 2.0 * beta_sd(ctx.prior.r));
                params.indel.r = reflected_unit_walk(params.indel.r, w, rng);
                dirty.indel_params = true;
            }
            Block::Rd => {
                let Some(rd) = params.indel.rd() else {
                    return Ok(None);
                };
                let w = tuning.rd_window.unwrap_or_else(|| 2.0 * beta_sd(ctx.prior.rd));
                let Ok(law) = Geometric::new(reflected_unit_walk(rd, w, rng)) else {
                    return Ok(None);
                };
                params.indel.deletion = Arc::new(law);
                dirty.indel_params = true;
            }
        }
        let bad = |x: f64| !(x > 0.0 && x.is_finite());
        if bad(params.gamma) || bad(params.subst.kappa) || bad(params.indel.lambda) {
            return Ok(None);
        }
        if !(params.indel.r > 0.0 && params.indel.r < 1.0) {
            return Ok(None);
        }
        if !ln_forward.is_finite() || !ln_reverse.is_finite() {
            return Ok(None);
        }
        Ok(Some(Outcome {
            tree: state.tree().clone(),
            history: state.history().clone(),
            params,
            dirty,
            ln_forward,
            ln_reverse,
            ln_jacobian,
        }))
    }
}
