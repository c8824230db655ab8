//! Proposal kernels and the registry the sampler draws them from.
//!
//! Every kernel reports the log-densities of the forward draw and of the
//! reverse draw that would undo it, plus the log-Jacobian of any
//! deterministic change of variables.

mod branch;
pub mod edge_sampler;
mod history;
mod node;
mod node_events;
mod params;
mod realign;
mod spr;

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, RngCore};

pub use branch::BranchLength;
pub use edge_sampler::{edge_history_log_density, sample_edge_history, GuidedTuning};
pub use history::{EdgeResample, EventShift, EventSplit, HistorySegment, IndelPair};
pub use node::NodeUpdate;
pub use node_events::{DeletionPush, QuietSwap, RebuildSwap, Reroot};
pub use params::{Block, ParamWalk};
pub use realign::EdgeRealign;
pub use spr::Spr;

use crate::error::{Error, Result};
use crate::mcmc::{ChainState, Dirty};
use crate::prior::{Params, PriorConfig};
use crate::history::TreeHistory;
use crate::sequence::Sequence;
use crate::tree::{NodeId, Tree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Branch,
    EdgeHistory,
    Node,
    Topology,
    Parameters,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Branch,
        Category::EdgeHistory,
        Category::Node,
        Category::Topology,
        Category::Parameters,
    ];

    pub fn default_weight(self) -> f64 {
        match self {
            Category::Branch => 0.2,
            Category::EdgeHistory => 0.3,
            Category::Node => 0.2,
            Category::Topology => 0.15,
            Category::Parameters => 0.15,
        }
    }
}

/// Step sizes and shape constants shared by the kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct Tuning {
    pub guided: GuidedTuning,
    /// Half-width of multiplicative walks on the log scale.
    pub log_window: f64,
    /// Largest integer step of the node-length walk.
    pub node_step: usize,
    /// Decay of the discrete Laplace law for a regrafted node's length.
    pub spr_length_decay: f64,
    /// Concentration of the Dirichlet proposal for base frequencies.
    pub pi_concentration: f64,
    /// Half-widths of the reflected walks on `r` and `r_d`; `None` uses two
    /// prior standard deviations.
    pub r_window: Option<f64>,
    pub rd_window: Option<f64>,
    /// Largest position shift of a single event.
    pub shift_max: usize,
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            guided: GuidedTuning::default(),
            log_window: 0.5,
            node_step: 3,
            spr_length_decay: 0.5,
            pi_concentration: 300.0,
            r_window: None,
            rd_window: None,
            shift_max: 3,
        }
    }
}

/// What a kernel sees besides the chain state.
#[derive(Clone, Debug)]
pub struct Context {
    pub prior: PriorConfig,
    pub tuning: Tuning,
    /// Leaf sequences, when the target includes them.
    pub leaves: Option<Arc<[Sequence]>>,
}

/// A proposed state with its proposal bookkeeping.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub tree: Tree,
    pub history: TreeHistory,
    pub params: Params,
    pub dirty: Dirty,
    pub ln_forward: f64,
    pub ln_reverse: f64,
    pub ln_jacobian: f64,
}

impl Outcome {
    /// `ln Q(reverse) - ln Q(forward) + ln |J|`.
    pub fn ln_hastings(&self) -> f64 {
        self.ln_reverse - self.ln_forward + self.ln_jacobian
    }
}

/// A Metropolis–Hastings kernel.
pub trait Proposal: Debug + Send + Sync {
    fn name(&self) -> &str;

    fn category(&self) -> Category;

    /// Draws a candidate; `Ok(None)` when the kernel has nothing to act on in
    /// this state or drew an outcome outside the support.
    fn propose(&self, state: &ChainState, ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>>;
}

type Factory = fn(&PriorConfig) -> Option<Arc<dyn Proposal>>;

/// Named kernels with scan weights.
#[derive(Clone, Debug)]
pub struct KernelRegistry {
    kernels: Vec<Arc<dyn Proposal>>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

const BUILTIN: &[(&str, Factory)] = &[
    ("branch_length", |_| Some(Arc::new(BranchLength))),
    ("edge_basic", |_| Some(Arc::new(EdgeResample::basic()))),
    ("edge_guided", |_| Some(Arc::new(EdgeResample::guided()))),
    ("edge_segment", |_| Some(Arc::new(HistorySegment))),
    ("event_shift", |_| Some(Arc::new(EventShift))),
    ("indel_pair", |_| Some(Arc::new(IndelPair))),
    ("event_split", |_| Some(Arc::new(EventSplit))),
    ("edge_realign", |_| Some(Arc::new(EdgeRealign))),
    ("node_update", |_| Some(Arc::new(NodeUpdate))),
    ("deletion_push", |_| Some(Arc::new(DeletionPush))),
    ("reroot", |_| Some(Arc::new(Reroot))),
    ("spr", |_| Some(Arc::new(Spr))),
    ("quiet_swap", |_| Some(Arc::new(QuietSwap))),
    ("rebuild_swap", |_| Some(Arc::new(RebuildSwap))),
    ("pi", |_| Some(Arc::new(ParamWalk(Block::Pi)))),
    ("kappa", |_| Some(Arc::new(ParamWalk(Block::Kappa)))),
    ("gamma", |_| Some(Arc::new(ParamWalk(Block::Gamma)))),
    ("r", |_| Some(Arc::new(ParamWalk(Block::R)))),
    ("rd", |cfg| cfg.is_geometric().then(|| Arc::new(ParamWalk(Block::Rd)) as Arc<dyn Proposal>)),
    ("lambda", |_| Some(Arc::new(ParamWalk(Block::Lambda)))),
];

impl KernelRegistry {
    /// Names of all built-in kernels.
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    pub fn empty() -> Self {
        Self {
            kernels: Vec::new(),
            weights: Vec::new(),
            cumulative: Vec::new(),
        }
    }

    /// Every built-in kernel that applies under `prior`, weighted by category.
    pub fn standard(prior: &PriorConfig) -> Self {
        let names: Vec<_> = Self::builtin_names().collect();
        Self::from_names(&names, prior).expect("built-in names resolve")
    }

    /// The named built-ins, each category's weight split evenly among its
    /// members.
    pub fn from_names(names: &[&str], prior: &PriorConfig) -> Result<Self> {
        let mut reg = Self::empty();
        for name in names {
            let (_, make) = BUILTIN
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::inconsistent(format!("unknown kernel {name:?}")))?;
            if let Some(k) = make(prior) {
                reg.kernels.push(k);
            }
        }
        reg.weights = reg
            .kernels
            .iter()
            .map(|k| {
                let members = reg.kernels.iter().filter(|o| o.category() == k.category()).count();
                k.category().default_weight() / members as f64
            })
            .collect();
        reg.rebuild()?;
        Ok(reg)
    }

    /// Adds a kernel under its own name.
    pub fn register(&mut self, kernel: Arc<dyn Proposal>, weight: f64) -> Result<()> {
        if self.kernels.iter().any(|k| k.name() == kernel.name()) {
            return Err(Error::inconsistent(format!("kernel {:?} registered twice", kernel.name())));
        }
        self.kernels.push(kernel);
        self.weights.push(weight);
        self.rebuild()
    }

    pub fn set_weight(&mut self, name: &str, weight: f64) -> Result<()> {
        let i = self
            .kernels
            .iter()
            .position(|k| k.name() == name)
            .ok_or_else(|| Error::inconsistent(format!("no kernel named {name:?}")))?;
        self.weights[i] = weight;
        self.rebuild()
    }

    fn rebuild(&mut self) -> Result<()> {
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::domain("kernel weights must be finite and non-negative"));
        }
        let mut acc = 0.0;
        self.cumulative = self
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if !self.kernels.is_empty() && !(acc > 0.0) {
            return Err(Error::domain("kernel weights sum to zero"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernel(&self, i: usize) -> &Arc<dyn Proposal> {
        &self.kernels[i]
    }

    pub fn names(&self) -> Vec<&str> {
        self.kernels.iter().map(|k| k.name()).collect()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i] / self.cumulative.last().copied().unwrap_or(1.0)
    }

    /// Index of a kernel drawn by weight.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("registry is empty");
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.kernels.len() - 1)
    }
}

/// Multiplicative walk `x e^u`, `u ~ U(-w, w)`; returns the new value and
/// `ln(x'/x)`.
pub(crate) fn scale_walk<R: Rng + ?Sized>(x: f64, window: f64, rng: &mut R) -> (f64, f64) {
    let u = rng.random_range(-window..window);
    (x * u.exp(), u)
}

/// Uniform walk on `(0, 1)` reflected at both ends.
pub(crate) fn reflected_unit_walk<R: Rng + ?Sized>(x: f64, window: f64, rng: &mut R) -> f64 {
    let mut y = x + rng.random_range(-window..window);
    loop {
        if y < 0.0 {
            y = -y;
        } else if y > 1.0 {
            y = 2.0 - y;
        } else {
            return y;
        }
    }
}

/// Probability of `to` under the integer walk `|from + s|`, `s` uniform on
/// `-step..=step`.
pub(crate) fn reflected_int_prob(from: usize, to: usize, step: usize) -> f64 {
    let hits = (-(step as i64)..=step as i64)
        .filter(|s| (from as i64 + s).unsigned_abs() as usize == to)
        .count();
    hits as f64 / (2 * step + 1) as f64
}

pub(crate) fn reflected_int_walk<R: Rng + ?Sized>(from: usize, step: usize, rng: &mut R) -> usize {
    let s = rng.random_range(-(step as i64)..=step as i64);
    (from as i64 + s).unsigned_abs() as usize
}

pub(crate) fn random_edge<R: Rng + ?Sized>(tree: &Tree, rng: &mut R) -> NodeId {
    let edges: Vec<_> = tree.edges().collect();
    edges[rng.random_range(0..edges.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_weights_follow_categories() {
        let reg = KernelRegistry::standard(&PriorConfig::default());
        let mut per_cat = std::collections::BTreeMap::new();
        for i in 0..reg.len() {
            *per_cat.entry(reg.kernel(i).category()).or_insert(0.0) += reg.weight(i);
        }
        for c in Category::ALL {
            assert!((per_cat[&c] - c.default_weight()).abs() < 1e-12);
        }
    }

    #[test]
    fn selection_frequencies_match_weights() {
        let mut reg = KernelRegistry::standard(&PriorConfig::default());
        reg.set_weight("spr", 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = vec![0usize; reg.len()];
        let n = 200_000;
        for _ in 0..n {
            counts[reg.select(&mut rng)] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let p = reg.weight(i);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() <= 4.0 * se + 1e-12, "{}", reg.kernel(i).name());
        }
        assert!(reg.set_weight("nope", 1.0).is_err());
        assert!(KernelRegistry::from_names(&["nope"], &PriorConfig::default()).is_err());
    }

    #[test]
    fn integer_walk_probabilities_are_normalized() {
        for from in 0..8 {
            let total: f64 = (0..20).map(|to| reflected_int_prob(from, to, 3)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        // Reflection at zero breaks symmetry near the boundary.
        assert_eq!(reflected_int_prob(0, 1, 3), 2.0 / 7.0);
        assert_eq!(reflected_int_prob(1, 0, 3), 1.0 / 7.0);
        assert_eq!(reflected_int_prob(5, 7, 3), reflected_int_prob(7, 5, 3));
    }
}
