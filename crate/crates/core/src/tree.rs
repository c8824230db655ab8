//! Unrooted bifurcating trees with a designated internal node that orients
//! every edge for history bookkeeping.
//!
//! Node ids `0..n` are the leaves (leaf `i` is taxon `i`); ids `n..2n-2` are
//! internal. Every non-root node owns the edge to its parent, so an edge is
//! named by its child node id.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    labels: Arc<[String]>,
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    length: Vec<f64>,
    root: NodeId,
}

impl Tree {
    /// Builds a tree from undirected edges `(u, v, length)` and orients it away
    /// from `root`.
    pub fn from_edges(
        labels: Arc<[String]>,
        edges: &[(NodeId, NodeId, f64)],
        root: NodeId,
    ) -> Result<Self> {
        let n = labels.len();
        if n < 3 {
            return Err(Error::inconsistent(format!("tree needs at least 3 leaves, got {n}")));
        }
        let n_nodes = 2 * n - 2;
        if edges.len() != 2 * n - 3 {
            return Err(Error::inconsistent(format!(
                "a tree on {n} leaves has {} edges, got {}",
                2 * n - 3,
                edges.len()
            )));
        }
        let mut adj: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); n_nodes];
        for &(u, v, len) in edges {
            if u >= n_nodes || v >= n_nodes || u == v {
                return Err(Error::inconsistent(format!("bad edge ({u}, {v})")));
            }
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::domain(format!("edge ({u}, {v}) has non-positive length {len}")));
            }
            adj[u].push((v, len));
            adj[v].push((u, len));
        }
        for (v, a) in adj.iter().enumerate() {
            let want = if v < n { 1 } else { 3 };
            if a.len() != want {
                return Err(Error::inconsistent(format!(
                    "node {v} has degree {}, expected {want}",
                    a.len()
                )));
            }
        }
        if root < n || root >= n_nodes {
            return Err(Error::inconsistent(format!("root {root} is not an internal node")));
        }
        let mut parent = vec![None; n_nodes];
        let mut children = vec![Vec::new(); n_nodes];
        let mut length = vec![0.0; n_nodes];
        let mut seen = vec![false; n_nodes];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, len) in &adj[u] {
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                parent[v] = Some(u);
                length[v] = len;
                children[u].push(v);
                queue.push_back(v);
            }
            children[u].sort_unstable();
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::inconsistent("tree is not connected"));
        }
        Ok(Self {
            labels,
            parent,
            children,
            length,
            root,
        })
    }

    /// Uniform random unrooted topology by stepwise addition; each edge length
    /// is drawn from `branch`.
    pub fn random<R: Rng + ?Sized>(
        labels: Arc<[String]>,
        rng: &mut R,
        mut branch: impl FnMut(&mut R) -> f64,
    ) -> Result<Self> {
        let n = labels.len();
        if n < 3 {
            return Err(Error::inconsistent(format!("tree needs at least 3 leaves, got {n}")));
        }
        // Undirected edges as (u, v); lengths are assigned at the end.
        let mut edges: Vec<(NodeId, NodeId)> = vec![(n, 0), (n, 1), (n, 2)];
        for leaf in 3..n {
            let internal = n + leaf - 2;
            let pick = rng.random_range(0..edges.len());
            let (u, v) = edges[pick];
            edges[pick] = (u, internal);
            edges.push((internal, v));
            edges.push((internal, leaf));
        }
        let weighted: Vec<_> = edges.into_iter().map(|(u, v)| (u, v, branch(rng))).collect();
        Self::from_edges(labels, &weighted, n)
    }

    pub fn labels(&self) -> &Arc<[String]> {
        &self.labels
    }

    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn n_edges(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        v < self.n_leaves()
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    /// Length of the edge above `v`.
    pub fn branch_length(&self, v: NodeId) -> f64 {
        self.length[v]
    }

    pub fn set_branch_length(&mut self, v: NodeId, len: f64) {
        debug_assert!(v != self.root);
        self.length[v] = len;
    }

    /// Edge ids (child node ids) in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n_nodes()).filter(move |&v| v != self.root)
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> {
        self.n_leaves()..self.n_nodes()
    }

    pub fn neighbors(&self, v: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self.parent[v].into_iter().collect();
        out.extend_from_slice(&self.children[v]);
        out
    }

    pub fn total_length(&self) -> f64 {
        self.edges().map(|e| self.length[e]).sum()
    }

    /// Undirected edge list `(parent, child, length)` in child-id order.
    pub fn edge_list(&self) -> Vec<(NodeId, NodeId, f64)> {
        self.edges()
            .map(|c| (self.parent[c].expect("non-root"), c, self.length[c]))
            .collect()
    }

    /// Parents before children; children visited in ascending id order.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.n_nodes());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.children[v].iter().rev());
        }
        out
    }

    pub fn postorder(&self) -> Vec<NodeId> {
        let mut out = self.preorder();
        out.reverse();
        out
    }

    /// Same unrooted tree oriented away from another internal node.
    pub fn rerooted(&self, new_root: NodeId) -> Result<Self> {
        Self::from_edges(self.labels.clone(), &self.edge_list(), new_root)
    }

    /// Leaves below `v` in the current orientation.
    pub fn leaves_below(&self, v: NodeId) -> TaxonSet {
        let mut set = TaxonSet::empty(self.n_leaves());
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if self.is_leaf(u) {
                set.insert(u);
            } else {
                stack.extend_from_slice(&self.children[u]);
            }
        }
        set
    }

    /// The bipartition induced by the edge above `v`, normalized.
    pub fn split(&self, v: NodeId) -> Split {
        Split::new(self.leaves_below(v))
    }

    /// Every edge's split, indexed by edge id (root slot is `None`).
    pub fn splits(&self) -> Vec<Option<Split>> {
        let n = self.n_leaves();
        let mut below: Vec<TaxonSet> = vec![TaxonSet::empty(n); self.n_nodes()];
        for v in self.postorder() {
            if self.is_leaf(v) {
                below[v].insert(v);
            } else {
                for &c in &self.children[v] {
                    let child = below[c].clone();
                    below[v].union_with(&child);
                }
            }
        }
        (0..self.n_nodes())
            .map(|v| (v != self.root).then(|| Split::new(below[v].clone())))
            .collect()
    }

    /// Canonical description of the unrooted topology: its sorted non-trivial splits.
    pub fn topology(&self) -> Topology {
        let mut splits: Vec<Split> = self
            .splits()
            .into_iter()
            .flatten()
            .filter(|s| !s.is_trivial())
            .collect();
        splits.sort();
        Topology(splits)
    }

    /// Relabels internal nodes so that, rooted at the first internal id,
    /// children are ordered by their smallest descendant leaf and internal ids
    /// follow preorder. Returns the relabeled tree and `old -> new` id map.
    pub fn canonical(&self) -> (Self, Vec<NodeId>) {
        let n = self.n_leaves();
        let min_leaf = {
            let mut m = vec![usize::MAX; self.n_nodes()];
            for v in self.postorder() {
                m[v] = if self.is_leaf(v) {
                    v
                } else {
                    self.children[v].iter().map(|&c| m[c]).min().unwrap()
                };
            }
            m
        };
        let mut map = vec![usize::MAX; self.n_nodes()];
        let mut next = n;
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            if self.is_leaf(v) {
                map[v] = v;
            } else {
                map[v] = next;
                next += 1;
                let mut kids = self.children[v].clone();
                kids.sort_by_key(|&c| min_leaf[c]);
                stack.extend(kids.into_iter().rev());
            }
        }
        let edges: Vec<_> = self
            .edge_list()
            .into_iter()
            .map(|(p, c, len)| (map[p], map[c], len))
            .collect();
        let tree = Self::from_edges(self.labels.clone(), &edges, map[self.root])
            .expect("relabeling preserves validity");
        (tree, map)
    }

    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::from_edges(self.labels.clone(), &self.edge_list(), self.root)?;
        if rebuilt != *self {
            return Err(Error::inconsistent("tree orientation is inconsistent"));
        }
        Ok(())
    }
}

/// Number of unrooted bifurcating topologies on `n` labeled leaves, `(2n-5)!!`,
/// as a natural log.
pub fn ln_topology_count(n: usize) -> f64 {
    (3..n).map(|k| ((2 * k - 3) as f64).ln()).sum()
}

/// Fixed-width bitset over taxa.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaxonSet {
    n: usize,
    words: Vec<u64>,
}

impl TaxonSet {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn from_iter(n: usize, items: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(n);
        for i in items {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn union_with(&mut self, other: &TaxonSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn complement(&self) -> Self {
        let mut out = Self::empty(self.n);
        for i in 0..self.n {
            if !self.contains(i) {
                out.insert(i);
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.contains(i))
    }

    pub fn first(&self) -> Option<usize> {
        self.iter().next()
    }
}

/// An unordered bipartition of the taxa, stored as the side without taxon 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Split(TaxonSet);

impl Split {
    pub fn new(side: TaxonSet) -> Self {
        if side.contains(0) {
            Split(side.complement())
        } else {
            Split(side)
        }
    }

    pub fn side(&self) -> &TaxonSet {
        &self.0
    }

    /// A split that isolates a single leaf.
    pub fn is_trivial(&self) -> bool {
        let k = self.0.len();
        k <= 1 || k >= self.0.universe() - 1
    }

    /// `A,B | C,D,E` with names.
    pub fn display(&self, labels: &[String]) -> String {
        let other = self.0.complement();
        let (a, b) = if other.len() <= self.0.len() {
            (&other, &self.0)
        } else {
            (&self.0, &other)
        };
        let names = |s: &TaxonSet| s.iter().map(|i| labels[i].as_str()).collect::<Vec<_>>().join(",");
        format!("{} | {}", names(a), names(b))
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", items.join(","))
    }
}

/// Canonical unrooted topology key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Topology(pub Vec<Split>);
