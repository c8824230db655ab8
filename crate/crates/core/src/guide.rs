//! Heuristic starting points: a center-star alignment of the input, and a
//! history that explains any alignment on any tree with as few losses as
//! possible.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::alignment::Alignment;
use crate::error::{Error, Result};
use crate::history::{EdgeHistory, EventKind, IndelEvent, TreeHistory};
use crate::proposal::edge_sampler::open_unit;
use crate::sequence::Sequence;
use crate::tree::Tree;

const MATCH: i32 = 2;
const MISMATCH: i32 = -1;
const GAP_OPEN: i32 = -4;
const GAP_EXTEND: i32 = -1;
const NEG: i32 = i32::MIN / 4;

/// For each residue of `a`, the residue of `b` it pairs with, from a global
/// affine-gap alignment.
fn pair_map(a: &Sequence, b: &Sequence) -> Vec<Option<usize>> {
    let (x, y) = (&a.bases, &b.bases);
    let (n, m) = (x.len(), y.len());
    let w = m + 1;
    let at = |i: usize, j: usize| i * w + j;
    // Scores for paths ending in a pair, a residue of `a` alone, a residue
    // of `b` alone; with the state each came from.
    let mut score = [vec![NEG; (n + 1) * w], vec![NEG; (n + 1) * w], vec![NEG; (n + 1) * w]];
    let mut from = [vec![0u8; (n + 1) * w], vec![0u8; (n + 1) * w], vec![0u8; (n + 1) * w]];
    score[0][0] = 0;
    let best = |score: &[Vec<i32>; 3], k: usize, add: [i32; 3]| -> (i32, u8) {
        (0..3).map(|s| (score[s][k].saturating_add(add[s]), s as u8)).max_by_key(|&(v, s)| (v, std::cmp::Reverse(s))).unwrap()
    };
    for i in 0..=n {
        for j in 0..=m {
            if i > 0 && j > 0 {
                let s = if x[i - 1] == y[j - 1] { MATCH } else { MISMATCH };
                let (v, f) = best(&score, at(i - 1, j - 1), [s, s, s]);
                (score[0][at(i, j)], from[0][at(i, j)]) = (v, f);
            }
            if i > 0 {
                let (v, f) = best(&score, at(i - 1, j), [GAP_OPEN, GAP_EXTEND, GAP_OPEN]);
                (score[1][at(i, j)], from[1][at(i, j)]) = (v, f);
            }
            if j > 0 {
                let (v, f) = best(&score, at(i, j - 1), [GAP_OPEN, GAP_OPEN, GAP_EXTEND]);
                (score[2][at(i, j)], from[2][at(i, j)]) = (v, f);
            }
        }
    }
    let mut out = vec![None; n];
    let (mut i, mut j) = (n, m);
    let mut state = best(&score, at(n, m), [0; 3]).1;
    while i > 0 || j > 0 {
        let next = from[state as usize][at(i, j)];
        match state {
            0 => {
                out[i - 1] = Some(j - 1);
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
        state = next;
    }
    out
}

/// Center-star alignment around the longest sequence. Residues inserted
/// relative to the center at the same place are stacked left-justified.
pub fn guide_alignment(seqs: &[Sequence]) -> Alignment {
    let n = seqs.len();
    let Some(center) = (0..n).max_by_key(|&k| (seqs[k].len(), std::cmp::Reverse(k))) else {
        return Alignment::from_columns(0, std::iter::empty());
    };
    let lc = seqs[center].len();
    // placed[k][i]: residue of `k` on center position `i`; extra[k][i]:
    // residues of `k` sitting before center position `i` (slot `lc` is the end).
    let mut placed = vec![vec![None; lc]; n];
    let mut extra: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); lc + 1]; n];
    for k in 0..n {
        if k == center {
            placed[k] = (0..lc).map(Some).collect();
            continue;
        }
        let map = pair_map(&seqs[center], &seqs[k]);
        let mut partner = vec![None; seqs[k].len()];
        for (i, j) in map.iter().enumerate() {
            if let Some(j) = j {
                partner[*j] = Some(i);
                placed[k][i] = Some(*j);
            }
        }
        let mut slot = 0;
        for (j, p) in partner.iter().enumerate() {
            match p {
                Some(i) => slot = i + 1,
                None => extra[k][slot].push(j),
            }
        }
    }
    let mut columns = Vec::new();
    for i in 0..=lc {
        let width = (0..n).map(|k| extra[k][i].len()).max().unwrap_or(0);
        for w in 0..width {
            columns.push((0..n).map(|k| extra[k][i].get(w).map(|&j| j as u32)).collect());
        }
        if i < lc {
            columns.push((0..n).map(|k| placed[k][i].map(|j| j as u32)).collect::<Vec<_>>());
        }
    }
    Alignment::from_columns(n, columns.into_iter().filter(|c: &Vec<Option<u32>>| c.iter().any(Option::is_some)))
}

/// A history on `tree` whose projection has the homology of `aln`. Each
/// column's lineage appears on the edge above the deepest node holding all
/// its residues and is lost on the topmost edges leading to none of them.
/// Between consecutive shared columns an edge gets at most one deletion and
/// one insertion, in random order at uniform times.
pub fn history_from_alignment<R: Rng + ?Sized>(tree: &Tree, aln: &Alignment, rng: &mut R) -> Result<TreeHistory> {
    let (root_len, blocks) = edge_blocks(tree, aln)?;
    let edges = blocks
        .iter()
        .enumerate()
        .map(|(v, b)| b.as_ref().map(|b| b.history(tree.branch_length(v), rng)))
        .collect();
    TreeHistory::new(tree, root_len, edges)
}

/// Root length and the blocks of every edge for the construction in
/// [`history_from_alignment`]; the root's entry is `None`.
pub(crate) fn edge_blocks(tree: &Tree, aln: &Alignment) -> Result<(usize, Vec<Option<Blocks>>)> {
    let n = tree.n_leaves();
    if aln.n_taxa() != n {
        return Err(Error::inconsistent("alignment and tree have different taxa"));
    }
    let order = tree.postorder();
    let n_cols = aln.n_columns();
    // present[v][c]
    let mut present = vec![vec![false; n_cols]; tree.n_nodes()];
    let mut count = vec![0usize; tree.n_nodes()];
    for c in 0..n_cols {
        let col = aln.column(c);
        let total = col.iter().filter(|x| x.is_some()).count();
        if total == 0 {
            return Err(Error::inconsistent(format!("alignment column {c} is all gaps")));
        }
        let mut top = None;
        for &v in &order {
            count[v] = if tree.is_leaf(v) {
                usize::from(col[v].is_some())
            } else {
                tree.children(v).iter().map(|&u| count[u]).sum()
            };
            if count[v] == total && top.is_none() {
                top = Some(v);
            }
        }
        for &v in &order {
            present[v][c] = count[v] > 0 && (count[v] < total || Some(v) == top);
        }
    }
    let root_len = present[tree.root()].iter().filter(|&&p| p).count();
    let mut blocks = vec![None; tree.n_nodes()];
    for v in tree.edges() {
        let p = tree.parent(v).expect("edge below a parent");
        blocks[v] = Some(column_blocks(&present[p], &present[v]));
    }
    Ok((root_len, blocks))
}

/// Blocks turning the parent's columns into the child's.
fn column_blocks(parent: &[bool], child: &[bool]) -> Blocks {
    let steps = parent.iter().zip(child).filter_map(|(&p, &c)| match (p, c) {
        (true, true) => Some(Step::Both),
        (true, false) => Some(Step::Parent),
        (false, true) => Some(Step::Child),
        (false, false) => None,
    });
    Blocks::new(steps)
}

/// One column of a pairwise alignment between the two ends of an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Step {
    /// The parent residue survives to the child.
    Both,
    /// The parent residue is lost.
    Parent,
    /// The child residue is new.
    Child,
}

/// The blocks of a pairwise alignment. Tokens are numbered in edge order;
/// within each stretch between surviving residues the lost block comes
/// before the new one, so every block stays contiguous whenever it is
/// applied.
#[derive(Clone, Debug)]
pub(crate) struct Blocks {
    parent: Vec<usize>,
    runs: Vec<(EventKind, Range<usize>)>,
}

impl Blocks {
    /// Groups `steps`; within a stretch, child steps are moved after parent
    /// steps.
    pub(crate) fn new(steps: impl IntoIterator<Item = Step>) -> Self {
        let mut next = 0usize;
        let mut parent = Vec::new();
        let mut runs = Vec::new();
        let (mut lost, mut new) = (0usize, 0usize);
        let flush = |lost: &mut usize, new: &mut usize, next: &mut usize, parent: &mut Vec<usize>, runs: &mut Vec<_>| {
            for (kind, len) in [(EventKind::Deletion, std::mem::take(lost)), (EventKind::Insertion, std::mem::take(new))] {
                if len > 0 {
                    if kind == EventKind::Deletion {
                        parent.extend(*next..*next + len);
                    }
                    runs.push((kind, *next..*next + len));
                    *next += len;
                }
            }
        };
        for step in steps {
            match step {
                Step::Both => {
                    flush(&mut lost, &mut new, &mut next, &mut parent, &mut runs);
                    parent.push(next);
                    next += 1;
                }
                Step::Parent => lost += 1,
                Step::Child => new += 1,
            }
        }
        flush(&mut lost, &mut new, &mut next, &mut parent, &mut runs);
        parent.sort_unstable();
        Self { parent, runs }
    }

    pub(crate) fn n_blocks(&self) -> usize {
        self.runs.len()
    }

    /// One event per block, in uniformly random order at uniform times. The
    /// density of the result is `span^-n_blocks`.
    pub(crate) fn history<R: Rng + ?Sized>(&self, span: f64, rng: &mut R) -> EdgeHistory {
        let mut runs = self.runs.clone();
        runs.shuffle(rng);
        let mut times: Vec<f64> = (0..runs.len()).map(|_| open_unit(rng) * span).collect();
        times.sort_by(f64::total_cmp);
        let mut current = self.parent.clone();
        let mut events = Vec::with_capacity(runs.len());
        for ((kind, run), time) in runs.into_iter().zip(times) {
            let at = current.partition_point(|&t| t < run.start);
            let size = run.len();
            match kind {
                EventKind::Deletion => {
                    current.drain(at..at + size);
                    events.push(IndelEvent::deletion(time, at, size));
                }
                EventKind::Insertion => {
                    current.splice(at..at, run);
                    events.push(IndelEvent::insertion(time, at, size));
                }
            }
        }
        EdgeHistory::new(events, self.parent.len(), span)
    }

    /// True when [`Blocks::history`] can produce `h`: one event per block,
    /// each placed exactly as that construction would place it.
    pub(crate) fn explains(&self, h: &EdgeHistory) -> bool {
        if h.n_events() != self.runs.len() || h.parent_len != self.parent.len() {
            return false;
        }
        let mut used = vec![false; self.runs.len()];
        let mut current = self.parent.clone();
        for e in &h.events {
            let found = self.runs.iter().enumerate().position(|(k, (kind, run))| {
                !used[k]
                    && *kind == e.kind
                    && run.len() == e.size
                    && current.partition_point(|&t| t < run.start) == e.position
                    && (e.kind == EventKind::Insertion || current.get(e.position) == Some(&run.start))
            });
            let Some(k) = found else {
                return false;
            };
            used[k] = true;
            let run = self.runs[k].1.clone();
            match e.kind {
                EventKind::Deletion => {
                    current.drain(e.position..e.position + e.size);
                }
                EventKind::Insertion => {
                    current.splice(e.position..e.position, run);
                }
            }
        }
        true
    }
}
