//! Random-scan Metropolis-within-Gibbs sampler over tree, branch lengths,
//! indel histories and parameters.

use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::alignment::{leaf_lengths, project_alignment, Alignment};
use crate::error::{Error, Result};
use crate::guide::{guide_alignment, history_from_alignment};
use crate::history::{EventKind, TreeHistory};
use crate::hky::RateMatrix;
use crate::indel::IndelModel;
use crate::prior::{log_prior, sample_prior, Params, PriorConfig};
use crate::proposal::{sample_edge_history, Context, KernelRegistry, Outcome, Tuning};
use crate::sequence::Sequence;
use crate::tree::{NodeId, Tree};

/// Density the chain targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Full posterior given the observed sequences.
    Posterior,
    /// Drops the substitution likelihood; only leaf lengths are observed.
    NoSequenceData,
}

/// Observed data and model settings a chain runs against.
#[derive(Clone, Debug)]
pub struct Problem {
    pub leaves: Vec<Sequence>,
    pub prior: PriorConfig,
    pub target: Target,
}

impl Problem {
    pub fn new(leaves: Vec<Sequence>, prior: PriorConfig) -> Result<Self> {
        if leaves.len() < 3 {
            return Err(Error::inconsistent(format!("need at least 3 sequences, got {}", leaves.len())));
        }
        prior.validate()?;
        Ok(Self {
            leaves,
            prior,
            target: Target::Posterior,
        })
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = target;
        self
    }

    pub fn labels(&self) -> Arc<[String]> {
        self.leaves.iter().map(|s| s.name.clone()).collect::<Vec<_>>().into()
    }

    pub fn leaf_lengths(&self) -> Vec<usize> {
        self.leaves.iter().map(Sequence::len).collect()
    }
}

/// Which edges need their indel density recomputed.
#[derive(Clone, Debug, PartialEq)]
pub enum Edges {
    Listed(Vec<NodeId>),
    All,
}

/// The parts of a candidate that differ from the current state.
#[derive(Clone, Debug, PartialEq)]
pub struct Dirty {
    pub edges: Edges,
    pub lengths: bool,
    pub alignment: bool,
    pub indel_params: bool,
    pub subst_params: bool,
}

impl Dirty {
    pub fn nothing() -> Self {
        Self {
            edges: Edges::Listed(Vec::new()),
            lengths: false,
            alignment: false,
            indel_params: false,
            subst_params: false,
        }
    }

    pub fn everything() -> Self {
        Self {
            edges: Edges::All,
            lengths: true,
            alignment: true,
            indel_params: true,
            subst_params: true,
        }
    }

    pub fn histories(edges: Vec<NodeId>) -> Self {
        Self {
            edges: Edges::Listed(edges),
            alignment: true,
            ..Self::nothing()
        }
    }
}

/// A chain's position with cached score components.
#[derive(Clone, Debug)]
pub struct ChainState {
    tree: Tree,
    history: TreeHistory,
    params: Params,
    indel: IndelModel,
    rate: RateMatrix,
    edge_ld: Vec<f64>,
    root_lq: f64,
    alignment: Option<Arc<Alignment>>,
    subst_ll: f64,
    ln_prior: f64,
}

impl ChainState {
    /// Scores a state from scratch.
    pub fn new(problem: &Problem, tree: Tree, history: TreeHistory, params: Params) -> Result<Self> {
        history.validate(&tree)?;
        if tree.labels().len() != problem.leaves.len() {
            return Err(Error::inconsistent("tree and data have different taxa"));
        }
        if leaf_lengths(&history, &tree) != problem.leaf_lengths() {
            return Err(Error::inconsistent("history leaf lengths differ from the sequences"));
        }
        let indel = IndelModel::new(params.indel.clone())?;
        let rate = RateMatrix::new(params.subst);
        let edge_ld = edge_densities(&indel, &tree, &history);
        let root_lq = indel.ln_q(history.root_len());
        let (alignment, subst_ll) = match problem.target {
            Target::Posterior => {
                let a = project_alignment(&history, &tree);
                let ll = rate.log_likelihood(&tree, &a, &problem.leaves)?;
                (Some(Arc::new(a)), ll)
            }
            Target::NoSequenceData => (None, 0.0),
        };
        let ln_prior = log_prior(&tree, &params, &problem.prior);
        Ok(Self {
            tree,
            history,
            params,
            indel,
            rate,
            edge_ld,
            root_lq,
            alignment,
            subst_ll,
            ln_prior,
        })
    }

    /// Random tree and parameters from the prior, every internal node as long
    /// as the longest sequence, histories from the guided kernel.
    /// Draws a starting state: tree and parameters from the prior, histories
    /// according to `start`. Retries a few times if the state scores zero.
    pub fn initialize<R: Rng + ?Sized>(problem: &Problem, tuning: &Tuning, start: Start, rng: &mut R) -> Result<Self> {
        let lengths = problem.leaf_lengths();
        let center = lengths.iter().copied().max().unwrap_or(0);
        let guide = (start == Start::Guide).then(|| guide_alignment(&problem.leaves));
        let mut last_err = None;
        for _ in 0..100 {
            let (tree, params) = sample_prior(rng, &problem.prior, problem.labels())?;
            let indel = match IndelModel::new(params.indel.clone()) {
                Ok(m) => m,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            let history = match &guide {
                Some(aln) => history_from_alignment(&tree, aln, rng)?,
                None => {
                    let node_len = |v: NodeId| if tree.is_leaf(v) { lengths[v] } else { center };
                    let edges = (0..tree.n_nodes())
                        .map(|v| {
                            tree.parent(v).map(|p| {
                                sample_edge_history(&indel, &tuning.guided, node_len(p), node_len(v), tree.branch_length(v), rng)
                            })
                        })
                        .collect();
                    TreeHistory::new(&tree, center, edges)?
                }
            };
            let state = Self::new(problem, tree, history, params)?;
            if state.log_posterior().is_finite() {
                return Ok(state);
            }
        }
        Err(last_err.unwrap_or_else(|| Error::Numerical("no initial state with finite posterior".into())))
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn history(&self) -> &TreeHistory {
        &self.history
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn indel_model(&self) -> &IndelModel {
        &self.indel
    }

    pub fn rate_matrix(&self) -> &RateMatrix {
        &self.rate
    }

    /// The projected alignment; absent when the target ignores sequences.
    pub fn alignment(&self) -> Option<&Alignment> {
        self.alignment.as_deref()
    }

    pub fn subst_log_likelihood(&self) -> f64 {
        self.subst_ll
    }

    pub fn indel_log_density(&self) -> f64 {
        self.root_lq + self.edge_ld.iter().sum::<f64>()
    }

    pub fn log_prior(&self) -> f64 {
        self.ln_prior
    }

    pub fn log_posterior(&self) -> f64 {
        self.subst_ll + self.indel_log_density() + self.ln_prior
    }

    /// Scores a candidate incrementally; `None` when it lies outside the support.
    pub(crate) fn apply(&self, problem: &Problem, out: Outcome) -> Result<Option<Self>> {
        let Outcome {
            tree,
            history,
            params,
            dirty,
            ..
        } = out;
        if cfg!(debug_assertions) {
            history.validate(&tree)?;
        }
        let ln_prior = log_prior(&tree, &params, &problem.prior);
        if ln_prior == f64::NEG_INFINITY {
            return Ok(None);
        }
        let indel = if dirty.indel_params {
            match self.indel.update(params.indel.clone()) {
                Ok(m) => m,
                Err(_) => return Ok(None),
            }
        } else {
            self.indel.clone()
        };
        let rate = if dirty.subst_params {
            RateMatrix::new(params.subst)
        } else {
            self.rate.clone()
        };
        let edge_ld = match (&dirty.edges, dirty.indel_params) {
            (Edges::Listed(list), false) => {
                let mut ld = self.edge_ld.clone();
                for &v in list {
                    ld[v] = indel.edge_log_density_unchecked(history.edge(v));
                }
                ld
            }
            _ => edge_densities(&indel, &tree, &history),
        };
        let root_lq = indel.ln_q(history.root_len());
        let (alignment, subst_ll) = match problem.target {
            Target::NoSequenceData => (None, 0.0),
            Target::Posterior => {
                let alignment = if dirty.alignment {
                    Arc::new(project_alignment(&history, &tree))
                } else {
                    self.alignment.clone().expect("posterior target keeps its alignment")
                };
                let ll = if dirty.alignment || dirty.lengths || dirty.subst_params {
                    rate.log_likelihood(&tree, &alignment, &problem.leaves)?
                } else {
                    self.subst_ll
                };
                (Some(alignment), ll)
            }
        };
        Ok(Some(Self {
            tree,
            history,
            params,
            indel,
            rate,
            edge_ld,
            root_lq,
            alignment,
            subst_ll,
            ln_prior,
        }))
    }

    /// Largest absolute gap between the cached score components and a
    /// recomputation from scratch.
    pub fn audit(&self, problem: &Problem) -> Result<f64> {
        let fresh = Self::new(problem, self.tree.clone(), self.history.clone(), self.params.clone())?;
        let mut worst: f64 = 0.0;
        for (a, b) in self.edge_ld.iter().zip(&fresh.edge_ld) {
            worst = worst.max((a - b).abs());
        }
        worst = worst
            .max((self.root_lq - fresh.root_lq).abs())
            .max((self.subst_ll - fresh.subst_ll).abs())
            .max((self.ln_prior - fresh.ln_prior).abs());
        if self.alignment != fresh.alignment {
            return Err(Error::Numerical("cached alignment differs from the history".into()));
        }
        Ok(worst)
    }
}

fn edge_densities(indel: &IndelModel, tree: &Tree, history: &TreeHistory) -> Vec<f64> {
    (0..tree.n_nodes())
        .map(|v| {
            if tree.parent(v).is_some() {
                indel.edge_log_density_unchecked(history.edge(v))
            } else {
                0.0
            }
        })
        .collect()
}

/// Proposal and acceptance counts per kernel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KernelStats {
    pub names: Vec<String>,
    pub proposed: Vec<u64>,
    pub accepted: Vec<u64>,
}

impl KernelStats {
    pub fn new(registry: &KernelRegistry) -> Self {
        Self {
            names: registry.names().into_iter().map(String::from).collect(),
            proposed: vec![0; registry.len()],
            accepted: vec![0; registry.len()],
        }
    }

    pub fn acceptance_rate(&self, i: usize) -> f64 {
        self.accepted[i] as f64 / self.proposed[i].max(1) as f64
    }
}

/// One emitted sample.
#[derive(Clone, Debug)]
pub struct SampleRecord {
    pub iteration: u64,
    pub log_posterior: f64,
    pub tree: Tree,
    pub history: TreeHistory,
    pub params: Params,
    pub tally: EventTally,
}

/// Event counts and fragment sizes summed over the tree.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EventTally {
    pub insertions: usize,
    pub deletions: usize,
    pub inserted: usize,
    pub deleted: usize,
}

impl EventTally {
    pub fn of(history: &TreeHistory) -> Self {
        let mut t = Self::default();
        for (_, h) in history.edges() {
            for e in &h.events {
                match e.kind {
                    EventKind::Insertion => {
                        t.insertions += 1;
                        t.inserted += e.size;
                    }
                    EventKind::Deletion => {
                        t.deletions += 1;
                        t.deleted += e.size;
                    }
                }
            }
        }
        t
    }

    pub fn mean_insertion_size(&self) -> f64 {
        if self.insertions == 0 {
            0.0
        } else {
            self.inserted as f64 / self.insertions as f64
        }
    }

    pub fn mean_deletion_size(&self) -> f64 {
        if self.deletions == 0 {
            0.0
        } else {
            self.deleted as f64 / self.deletions as f64
        }
    }
}

impl SampleRecord {
    pub fn of(iteration: u64, state: &ChainState) -> Self {
        Self {
            iteration,
            log_posterior: state.log_posterior(),
            tree: state.tree.clone(),
            history: state.history.clone(),
            params: state.params.clone(),
            tally: EventTally::of(&state.history),
        }
    }
}

/// Kernels, tuning and data bundled into a runnable sampler.
#[derive(Clone, Debug)]
pub struct Sampler {
    pub problem: Problem,
    pub context: Context,
    pub registry: KernelRegistry,
    /// Recompute every cached score this often and fail on drift above 1e-8.
    pub audit_every: Option<u64>,
    pub start: Start,
}

/// How a chain's first histories are built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Start {
    /// Explain a center-star alignment of the input on the initial tree.
    #[default]
    Guide,
    /// Alignment-free: every internal node starts as long as the longest
    /// input and each edge history is drawn from the guided kernel.
    Star,
}

impl Sampler {
    pub fn new(problem: Problem, tuning: Tuning) -> Self {
        let registry = KernelRegistry::standard(&problem.prior);
        let context = Context {
            prior: problem.prior.clone(),
            tuning,
            leaves: (problem.target == Target::Posterior).then(|| problem.leaves.clone().into()),
        };
        Self {
            problem,
            context,
            registry,
            audit_every: if cfg!(debug_assertions) { Some(10_000) } else { None },
            start: Start::default(),
        }
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChainState> {
        ChainState::initialize(&self.problem, &self.context.tuning, self.start, rng)
    }

    /// One random-scan update; returns the kernel index and whether it was accepted.
    pub fn step(&self, state: &mut ChainState, stats: &mut KernelStats, rng: &mut dyn RngCore) -> Result<(usize, bool)> {
        let k = self.registry.select(rng);
        stats.proposed[k] += 1;
        let Some(out) = self.registry.kernel(k).propose(state, &self.context, rng)? else {
            return Ok((k, false));
        };
        let hastings = out.ln_hastings();
        let Some(candidate) = state.apply(&self.problem, out)? else {
            return Ok((k, false));
        };
        let ln_alpha = candidate.log_posterior() - state.log_posterior() + hastings;
        let u: f64 = rng.random();
        if !ln_alpha.is_nan() && u.ln() < ln_alpha {
            *state = candidate;
            stats.accepted[k] += 1;
            Ok((k, true))
        } else {
            Ok((k, false))
        }
    }

    /// Runs `iterations` updates, handing every `thin`-th state to `sink`.
    pub fn run<R: RngCore>(
        &self,
        mut state: ChainState,
        iterations: u64,
        thin: u64,
        rng: &mut R,
        mut sink: impl FnMut(&SampleRecord) -> Result<()>,
    ) -> Result<(ChainState, KernelStats)> {
        if thin == 0 {
            return Err(Error::domain("thinning interval must be positive"));
        }
        let mut stats = KernelStats::new(&self.registry);
        for it in 1..=iterations {
            self.step(&mut state, &mut stats, rng)?;
            if let Some(every) = self.audit_every {
                if it % every == 0 {
                    let drift = state.audit(&self.problem)?;
                    if drift > 1e-8 {
                        return Err(Error::Numerical(format!("cache drift {drift:e} at iteration {it}")));
                    }
                }
            }
            if it % thin == 0 {
                sink(&SampleRecord::of(it, &state))?;
            }
        }
        Ok((state, stats))
    }
}
