use std::collections::HashMap;

use rand::{Rng, RngCore};

use super::{random_edge, Category, Context, Outcome, Proposal};
use crate::alignment::{node_residues, LineageId};
use crate::error::Result;
use crate::guide::{Blocks, Step};
use crate::hky::Matrix;
use crate::indel::IndelModel;
use crate::mcmc::{ChainState, Dirty};
use crate::sequence::Sequence;
use crate::tree::{NodeId, Tree};

/// Redraws the pairwise alignment across one edge from a pair HMM whose
/// emissions are the exact column likelihoods, then turns it into one event
/// per gap block. Node lengths stay fixed. Only histories that are already
/// in this block form can be left, so the move is rejected otherwise.
#[derive(Clone, Copy, Debug, Default)]
pub struct EdgeRealign;

/// Gap-open chance per position and block-extension chances for lost and
/// new residues. They only shape the proposal.
struct Shape {
    open: f64,
    extend_lost: f64,
    extend_new: f64,
}

fn mean_size(model: &IndelModel, ln_pmf: impl Fn(&IndelModel, usize) -> f64) -> f64 {
    let (mut mass, mut mean) = (0.0, 0.0);
    for k in 1..10_000 {
        let p = ln_pmf(model, k).exp();
        mass += p;
        mean += k as f64 * p;
        if mass > 1.0 - 1e-9 {
            break;
        }
    }
    mean.max(1.0)
}

impl Shape {
    fn new(model: &IndelModel, span: f64) -> Self {
        let extend = |mean: f64| (1.0 - 1.0 / mean).clamp(0.0, 0.99);
        Self {
            open: (1.0 - (-(model.lambda() + model.mu()) * span).exp()).clamp(1e-4, 0.25),
            extend_lost: extend(mean_size(model, IndelModel::ln_d)),
            extend_new: extend(mean_size(model, IndelModel::ln_i)),
        }
    }

    /// Transition probability between step kinds; `None` is the start.
    fn ln_t(&self, from: Option<Step>, to: Step) -> f64 {
        let g = self.open;
        let p = match (from.unwrap_or(Step::Both), to) {
            (Step::Both, Step::Both) => 1.0 - 2.0 * g,
            (Step::Both, _) => g,
            (Step::Parent, Step::Parent) => self.extend_lost,
            (Step::Parent, Step::Both) => (1.0 - self.extend_lost) * (1.0 - g),
            (Step::Parent, Step::Child) => (1.0 - self.extend_lost) * g,
            (Step::Child, Step::Child) => self.extend_new,
            (Step::Child, Step::Both) => 1.0 - self.extend_new,
            (Step::Child, Step::Parent) => 0.0,
        };
        p.ln()
    }
}

/// Likelihood messages for the residues at both ends of an edge.
struct Messages {
    /// Pair emission, relative to the two residues standing alone.
    pair: Vec<f64>,
    n_child: usize,
}

impl Messages {
    fn unit(n_parent: usize, n_child: usize) -> Self {
        Self {
            pair: vec![1.0; n_parent * n_child],
            n_child,
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.pair[i * self.n_child + j]
    }
}

/// Partial likelihood at `x` of the part of the tree reached without
/// crossing into `from`, for one lineage.
fn partial(tree: &Tree, p: &[Matrix], bases: &HashMap<NodeId, usize>, x: NodeId, from: NodeId) -> [f64; 4] {
    if tree.is_leaf(x) {
        let mut out = [1.0; 4];
        if let Some(&b) = bases.get(&x) {
            out = [0.0; 4];
            out[b] = 1.0;
        }
        return out;
    }
    let mut acc = [1.0; 4];
    let neighbours = tree.children(x).iter().copied().chain(tree.parent(x));
    for y in neighbours.filter(|&y| y != from) {
        let edge = if tree.parent(y) == Some(x) { y } else { x };
        let below = partial(tree, p, bases, y, x);
        for (a, slot) in acc.iter_mut().enumerate() {
            *slot *= (0..4).map(|b| p[edge][a][b] * below[b]).sum::<f64>();
        }
    }
    acc
}

fn messages(state: &ChainState, leaves: &[Sequence], v: NodeId) -> Messages {
    let tree = state.tree();
    let u = tree.parent(v).expect("edge below a parent");
    let rate = state.rate_matrix();
    let pi = *rate.pi();
    let p: Vec<Matrix> = (0..tree.n_nodes())
        .map(|x| if x == tree.root() { [[0.0; 4]; 4] } else { rate.p_unchecked(tree.branch_length(x)) })
        .collect();
    let res = node_residues(tree, state.history());
    let mut bases: HashMap<LineageId, HashMap<NodeId, usize>> = HashMap::new();
    for (leaf, ids) in res.ids.iter().take(tree.n_leaves()).enumerate() {
        for (k, id) in ids.iter().enumerate() {
            bases.entry(*id).or_default().insert(leaf, leaves[leaf].bases[k].index());
        }
    }
    let empty = HashMap::new();
    let column = |id: &LineageId| bases.get(id).unwrap_or(&empty);
    // Outside the child's subtree, seen from the parent.
    let outside: Vec<[f64; 4]> = res.ids[u]
        .iter()
        .map(|id| {
            let m = partial(tree, &p, column(id), u, v);
            std::array::from_fn(|a| pi[a] * m[a])
        })
        .collect();
    // Inside the subtree, pushed up the edge to the parent.
    let inside: Vec<[f64; 4]> = res.ids[v]
        .iter()
        .map(|id| {
            let m = partial(tree, &p, column(id), v, u);
            std::array::from_fn(|a| (0..4).map(|b| p[v][a][b] * m[b]).sum())
        })
        .collect();
    let lost: Vec<f64> = outside.iter().map(|o| o.iter().sum()).collect();
    let new: Vec<f64> = inside.iter().map(|m| (0..4).map(|a| pi[a] * m[a]).sum()).collect();
    let mut pair = Vec::with_capacity(outside.len() * inside.len());
    for (o, l) in outside.iter().zip(&lost) {
        for (m, n) in inside.iter().zip(&new) {
            pair.push((0..4).map(|a| o[a] * m[a]).sum::<f64>() / (l * n));
        }
    }
    Messages {
        pair,
        n_child: inside.len(),
    }
}

/// Forward tables of the pair HMM, rescaled per row.
struct Forward {
    n_child: usize,
    /// `[both, parent, child]` per cell.
    f: Vec<[f64; 3]>,
}

const KINDS: [Step; 3] = [Step::Both, Step::Parent, Step::Child];

impl Forward {
    fn new(msg: &Messages, shape: &Shape, n_parent: usize, n_child: usize) -> Self {
        let w = n_child + 1;
        let t: [[f64; 3]; 3] = std::array::from_fn(|a| std::array::from_fn(|b| shape.ln_t(Some(KINDS[a]), KINDS[b]).exp()));
        let mut f = vec![[0.0; 3]; (n_parent + 1) * w];
        for i in 0..=n_parent {
            for j in 0..=n_child {
                let mut cell = [0.0; 3];
                if i == 0 && j == 0 {
                    cell[0] = 1.0;
                }
                if i > 0 && j > 0 {
                    let prev = f[(i - 1) * w + j - 1];
                    cell[0] = msg.at(i - 1, j - 1) * (0..3).map(|a| prev[a] * t[a][0]).sum::<f64>();
                }
                if i > 0 {
                    let prev = f[(i - 1) * w + j];
                    cell[1] = (0..3).map(|a| prev[a] * t[a][1]).sum();
                }
                if j > 0 {
                    let prev = f[i * w + j - 1];
                    cell[2] = (0..3).map(|a| prev[a] * t[a][2]).sum();
                }
                f[i * w + j] = cell;
            }
            let row = &mut f[i * w..(i + 1) * w];
            let top = row.iter().flatten().fold(0.0f64, |m, &x| m.max(x));
            if top > 0.0 {
                row.iter_mut().flatten().for_each(|x| *x /= top);
            }
        }
        Self { n_child, f }
    }

    fn cell(&self, i: usize, j: usize) -> [f64; 3] {
        self.f[i * (self.n_child + 1) + j]
    }

    /// Draws a path backwards from the last cell.
    fn sample(&self, shape: &Shape, n_parent: usize, rng: &mut dyn RngCore) -> Vec<Step> {
        let pick = |w: [f64; 3], rng: &mut dyn RngCore| -> usize {
            let total: f64 = w.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (k, x) in w.iter().enumerate() {
                if u < *x {
                    return k;
                }
                u -= x;
            }
            w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
        };
        let (mut i, mut j) = (n_parent, self.n_child);
        let mut kind = pick(self.cell(i, j), rng);
        let mut path = Vec::with_capacity(i + j);
        while i > 0 || j > 0 {
            path.push(KINDS[kind]);
            let (pi, pj) = match kind {
                0 => (i - 1, j - 1),
                1 => (i - 1, j),
                _ => (i, j - 1),
            };
            let prev = self.cell(pi, pj);
            let w: [f64; 3] = std::array::from_fn(|a| prev[a] * shape.ln_t(Some(KINDS[a]), KINDS[kind]).exp());
            (i, j) = (pi, pj);
            if i == 0 && j == 0 {
                break;
            }
            kind = pick(w, rng);
        }
        path.reverse();
        path
    }
}

/// Unnormalized log-probability of `path` under the pair HMM.
fn ln_path(path: &[Step], msg: &Messages, shape: &Shape) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut prev = None;
    let mut total = 0.0;
    for &s in path {
        total += shape.ln_t(prev, s);
        match s {
            Step::Both => {
                total += msg.at(i, j).ln();
                i += 1;
                j += 1;
            }
            Step::Parent => i += 1,
            Step::Child => j += 1,
        }
        prev = Some(s);
    }
    total
}

/// The current pairwise alignment across edge `v`, with lost residues
/// listed before new ones inside each gap.
fn current_path(state: &ChainState, v: NodeId) -> Vec<Step> {
    let tree = state.tree();
    let res = node_residues(tree, state.history());
    let parent = &res.ids[tree.parent(v).expect("edge below a parent")];
    let index: HashMap<LineageId, usize> = parent.iter().enumerate().map(|(k, id)| (*id, k)).collect();
    let mut path = Vec::with_capacity(parent.len() + res.ids[v].len());
    let (mut i, mut pending) = (0usize, 0usize);
    for id in &res.ids[v] {
        match index.get(id) {
            Some(&k) => {
                path.extend(std::iter::repeat_n(Step::Parent, k - i));
                path.extend(std::iter::repeat_n(Step::Child, pending));
                path.push(Step::Both);
                i = k + 1;
                pending = 0;
            }
            None => pending += 1,
        }
    }
    path.extend(std::iter::repeat_n(Step::Parent, parent.len() - i));
    path.extend(std::iter::repeat_n(Step::Child, pending));
    path
}

impl Proposal for EdgeRealign {
    fn name(&self) -> &str {
        "edge_realign"
    }

    fn category(&self) -> Category {
        Category::EdgeHistory
    }

    fn propose(&self, state: &ChainState, ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let v = random_edge(state.tree(), rng);
        let old = state.history().edge(v);
        let old_path = current_path(state, v);
        let old_blocks = Blocks::new(old_path.iter().copied());
        if !old_blocks.explains(old) {
            return Ok(None);
        }
        let (n_parent, n_child) = (old.parent_len, old.child_len);
        let msg = match &ctx.leaves {
            Some(leaves) => messages(state, leaves, v),
            None => Messages::unit(n_parent, n_child),
        };
        let shape = Shape::new(state.indel_model(), old.span);
        let fwd = Forward::new(&msg, &shape, n_parent, n_child);
        let path = fwd.sample(&shape, n_parent, rng);
        let blocks = Blocks::new(path.iter().copied());
        let new = blocks.history(old.span, rng);
        let ln_span = old.span.ln();
        let ln_forward = ln_path(&path, &msg, &shape) - blocks.n_blocks() as f64 * ln_span;
        let ln_reverse = ln_path(&old_path, &msg, &shape) - old_blocks.n_blocks() as f64 * ln_span;
        let mut history = state.history().clone();
        history.set_edge(v, new);
        Ok(Some(Outcome {
            tree: state.tree().clone(),
            history,
            params: state.params().clone(),
            dirty: Dirty::histories(vec![v]),
            ln_forward,
            ln_reverse,
            ln_jacobian: 0.0,
        }))
    }
}
