//! Indel events, per-edge histories and whole-tree histories.

use std::fmt;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::tree::{NodeId, Tree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Insertion,
    Deletion,
}

impl EventKind {
    pub fn code(self) -> char {
        match self {
            EventKind::Insertion => 'I',
            EventKind::Deletion => 'D',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'I' | 'i' => Some(EventKind::Insertion),
            'D' | 'd' => Some(EventKind::Deletion),
            _ => None,
        }
    }
}

/// One indel event, described relative to the sequence just before it.
///
/// An insertion at position `p` puts `size` new bases between positions `p`
/// and `p + 1`; a deletion at `p` removes the `size` bases after position `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndelEvent {
    /// Distance from the parent node.
    pub time: f64,
    pub kind: EventKind,
    pub position: usize,
    pub size: usize,
}

impl IndelEvent {
    pub fn insertion(time: f64, position: usize, size: usize) -> Self {
        Self {
            time,
            kind: EventKind::Insertion,
            position,
            size,
        }
    }

    pub fn deletion(time: f64, position: usize, size: usize) -> Self {
        Self {
            time,
            kind: EventKind::Deletion,
            position,
            size,
        }
    }

    /// Sequence length after applying this event to a length-`before` sequence.
    pub fn apply_len(&self, before: usize) -> usize {
        match self.kind {
            EventKind::Insertion => before + self.size,
            EventKind::Deletion => before - self.size,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    NonPositiveSize,
    TimeOutOfRange,
    TimesNotIncreasing,
    InsertionPositionOutOfRange,
    DeletionPositionOutOfRange,
    DeletionTooLong,
    ChildLengthMismatch,
    NegativeSpan,
}

/// First broken constraint of an edge history; `event` is the index of the
/// offending event when the violation is local to one.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct HistoryViolation {
    pub kind: ViolationKind,
    pub event: Option<usize>,
}

impl fmt::Display for HistoryViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.event {
            Some(i) => write!(f, "{:?} at event {i}", self.kind),
            None => write!(f, "{:?}", self.kind),
        }
    }
}

/// Time-ordered indel events on one directed edge.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeHistory {
    pub events: Vec<IndelEvent>,
    pub parent_len: usize,
    pub child_len: usize,
    /// Edge length; every event time lies in `(0, span)`.
    pub span: f64,
}

impl EdgeHistory {
    pub fn empty(len: usize, span: f64) -> Self {
        Self {
            events: Vec::new(),
            parent_len: len,
            child_len: len,
            span,
        }
    }

    pub fn new(events: Vec<IndelEvent>, parent_len: usize, span: f64) -> Self {
        let child_len = events.iter().fold(parent_len, |n, e| e.apply_len(n));
        Self {
            events,
            parent_len,
            child_len,
            span,
        }
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    /// `(event, length before, length after)` for each event in order.
    pub fn steps(&self) -> impl Iterator<Item = (&IndelEvent, usize, usize)> + '_ {
        let mut n = self.parent_len;
        self.events.iter().map(move |e| {
            let before = n;
            n = e.apply_len(n);
            (e, before, n)
        })
    }

    pub fn validate(&self) -> Result<(), HistoryViolation> {
        let fail = |kind, event| Err(HistoryViolation { kind, event });
        if !(self.span >= 0.0) {
            return fail(ViolationKind::NegativeSpan, None);
        }
        let mut n = self.parent_len;
        let mut last_t = 0.0;
        for (i, e) in self.events.iter().enumerate() {
            if e.size == 0 {
                return fail(ViolationKind::NonPositiveSize, Some(i));
            }
            if !(e.time > 0.0 && e.time < self.span) {
                return fail(ViolationKind::TimeOutOfRange, Some(i));
            }
            if i > 0 && !(e.time > last_t) {
                return fail(ViolationKind::TimesNotIncreasing, Some(i));
            }
            match e.kind {
                EventKind::Insertion => {
                    if e.position > n {
                        return fail(ViolationKind::InsertionPositionOutOfRange, Some(i));
                    }
                    n += e.size;
                }
                EventKind::Deletion => {
                    if n == 0 || e.position > n - 1 {
                        return fail(ViolationKind::DeletionPositionOutOfRange, Some(i));
                    }
                    if e.size > n - e.position {
                        return fail(ViolationKind::DeletionTooLong, Some(i));
                    }
                    n -= e.size;
                }
            }
            last_t = e.time;
        }
        if n != self.child_len {
            return fail(ViolationKind::ChildLengthMismatch, None);
        }
        Ok(())
    }

    /// The same history read from the child end: times become `span - t`,
    /// insertions become deletions at the same position and vice versa.
    pub fn reversed(&self) -> Self {
        let events = self
            .events
            .iter()
            .rev()
            .map(|e| IndelEvent {
                time: self.span - e.time,
                kind: match e.kind {
                    EventKind::Insertion => EventKind::Deletion,
                    EventKind::Deletion => EventKind::Insertion,
                },
                position: e.position,
                size: e.size,
            })
            .collect();
        Self {
            events,
            parent_len: self.child_len,
            child_len: self.parent_len,
            span: self.span,
        }
    }

    /// Rescales event times to a new edge length.
    pub fn rescaled(&self, new_span: f64) -> Self {
        let factor = new_span / self.span;
        Self {
            events: self
                .events
                .iter()
                .map(|e| IndelEvent {
                    time: e.time * factor,
                    ..*e
                })
                .collect(),
            span: new_span,
            ..*self
        }
    }
}

/// An indel history on every edge of a tree, oriented by the tree's root.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeHistory {
    root_len: usize,
    /// Indexed by child node id; the root slot is `None`.
    edges: Vec<Option<EdgeHistory>>,
}

impl TreeHistory {
    pub fn new(tree: &Tree, root_len: usize, mut per_edge: Vec<Option<EdgeHistory>>) -> Result<Self> {
        per_edge.resize(tree.n_nodes(), None);
        let h = Self {
            root_len,
            edges: per_edge,
        };
        h.validate(tree)?;
        Ok(h)
    }

    /// No events anywhere; every node has length `len`.
    pub fn uniform(tree: &Tree, len: usize) -> Self {
        let edges = (0..tree.n_nodes())
            .map(|v| (v != tree.root()).then(|| EdgeHistory::empty(len, tree.branch_length(v))))
            .collect();
        Self { root_len: len, edges }
    }

    pub fn root_len(&self) -> usize {
        self.root_len
    }

    pub fn edge(&self, child: NodeId) -> &EdgeHistory {
        self.edges[child].as_ref().expect("edge history for a non-root node")
    }

    pub(crate) fn set_edge(&mut self, child: NodeId, h: EdgeHistory) {
        self.edges[child] = Some(h);
    }

    pub(crate) fn set_root_len(&mut self, len: usize) {
        self.root_len = len;
    }

    pub fn n_events(&self) -> usize {
        self.edges.iter().flatten().map(|h| h.n_events()).sum()
    }

    /// Sequence length at every node.
    pub fn node_lengths(&self, tree: &Tree) -> Vec<usize> {
        let mut out = vec![0; tree.n_nodes()];
        for v in 0..tree.n_nodes() {
            out[v] = if v == tree.root() {
                self.root_len
            } else {
                self.edge(v).child_len
            };
        }
        out
    }

    pub fn node_len(&self, tree: &Tree, v: NodeId) -> usize {
        if v == tree.root() {
            self.root_len
        } else {
            self.edge(v).child_len
        }
    }

    pub fn validate(&self, tree: &Tree) -> Result<()> {
        if self.edges.len() != tree.n_nodes() {
            return Err(Error::inconsistent("history does not cover every edge"));
        }
        if self.edges[tree.root()].is_some() {
            return Err(Error::inconsistent("root carries an edge history"));
        }
        for v in tree.edges() {
            let h = self.edges[v]
                .as_ref()
                .ok_or_else(|| Error::inconsistent(format!("edge {v} has no history")))?;
            h.validate()?;
            let p = tree.parent(v).unwrap();
            if h.parent_len != self.node_len(tree, p) {
                return Err(Error::inconsistent(format!(
                    "edge {v}: parent length {} but node {p} has length {}",
                    h.parent_len,
                    self.node_len(tree, p)
                )));
            }
            if (h.span - tree.branch_length(v)).abs() > 1e-12 * tree.branch_length(v).max(1.0) {
                return Err(Error::inconsistent(format!(
                    "edge {v}: history span {} differs from branch length {}",
                    h.span,
                    tree.branch_length(v)
                )));
            }
        }
        Ok(())
    }

    /// Re-expresses the history for `new_tree`, the same unrooted tree with a
    /// different orientation. Edges whose direction flipped are reversed.
    pub fn reoriented(&self, old_tree: &Tree, new_tree: &Tree) -> Self {
        let mut edges = vec![None; new_tree.n_nodes()];
        for c in old_tree.edges() {
            let p = old_tree.parent(c).unwrap();
            let h = self.edge(c);
            if new_tree.parent(c) == Some(p) {
                edges[c] = Some(h.clone());
            } else {
                debug_assert_eq!(new_tree.parent(p), Some(c));
                edges[p] = Some(h.reversed());
            }
        }
        let root_len = self.node_len(old_tree, new_tree.root());
        Self { root_len, edges }
    }

    /// Renames nodes with an `old -> new` id map (see [`Tree::canonical`]).
    pub fn relabeled(&self, map: &[NodeId]) -> Self {
        let mut edges = vec![None; self.edges.len()];
        for (v, h) in self.edges.iter().enumerate() {
            if let Some(h) = h {
                edges[map[v]] = Some(h.clone());
            }
        }
        Self {
            root_len: self.root_len,
            edges,
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, &EdgeHistory)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter_map(|(v, h)| h.as_ref().map(|h| (v, h)))
    }
}
