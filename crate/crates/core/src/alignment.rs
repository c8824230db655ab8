//! Multiple alignments and their construction from an indel history.
//!
//! Every residue carries a lineage id. The root's residues get ids
//! `0..root_len`; each insertion mints fresh ids while the tree is walked in
//! preorder with children in ascending id order. Two leaf residues are
//! homologous exactly when they share an id.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::history::{EventKind, TreeHistory};
use crate::sequence::Sequence;
use crate::tree::{NodeId, Tree};

pub type LineageId = u64;

/// Column-major alignment of `n_taxa` rows. A cell holds the 0-based index of
/// the residue within its (ungapped) sequence, or `None` for a gap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    n_taxa: usize,
    cells: Vec<Option<u32>>,
}

impl Alignment {
    pub fn from_columns(n_taxa: usize, columns: impl IntoIterator<Item = Vec<Option<u32>>>) -> Self {
        let mut cells = Vec::new();
        for col in columns {
            assert_eq!(col.len(), n_taxa);
            cells.extend(col);
        }
        Self { n_taxa, cells }
    }

    /// Builds an alignment from gapped rows (`-` is a gap, anything else a residue).
    pub fn from_rows(rows: &[&str]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.chars().count());
        if rows.iter().any(|r| r.chars().count() != width) {
            return Err(Error::inconsistent("gapped rows differ in length"));
        }
        let chars: Vec<Vec<char>> = rows.iter().map(|r| r.chars().collect()).collect();
        let mut next = vec![0u32; rows.len()];
        let mut cells = Vec::with_capacity(width * rows.len());
        for c in 0..width {
            for (t, row) in chars.iter().enumerate() {
                if row[c] == '-' {
                    cells.push(None);
                } else {
                    cells.push(Some(next[t]));
                    next[t] += 1;
                }
            }
        }
        Ok(Self {
            n_taxa: rows.len(),
            cells,
        })
    }

    pub fn n_taxa(&self) -> usize {
        self.n_taxa
    }

    pub fn n_columns(&self) -> usize {
        if self.n_taxa == 0 {
            0
        } else {
            self.cells.len() / self.n_taxa
        }
    }

    pub fn column(&self, c: usize) -> &[Option<u32>] {
        &self.cells[c * self.n_taxa..(c + 1) * self.n_taxa]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[Option<u32>]> + '_ {
        self.cells.chunks(self.n_taxa.max(1))
    }

    pub fn cell(&self, column: usize, taxon: usize) -> Option<u32> {
        self.cells[column * self.n_taxa + taxon]
    }

    /// Number of residues in each row.
    pub fn row_lengths(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_taxa];
        for col in self.columns() {
            for (t, c) in col.iter().enumerate() {
                if c.is_some() {
                    out[t] += 1;
                }
            }
        }
        out
    }

    /// Column of every residue: `index[taxon][residue]`.
    pub fn residue_columns(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.row_lengths().into_iter().map(Vec::with_capacity).collect();
        for (c, col) in self.columns().enumerate() {
            for (t, cell) in col.iter().enumerate() {
                if cell.is_some() {
                    out[t].push(c);
                }
            }
        }
        out
    }

    /// Gapped text rows using the residues of `seqs`.
    pub fn render(&self, seqs: &[Sequence]) -> Vec<String> {
        (0..self.n_taxa)
            .map(|t| {
                self.columns()
                    .map(|col| match col[t] {
                        Some(i) => seqs[t].bases[i as usize].to_char(),
                        None => '-',
                    })
                    .collect()
            })
            .collect()
    }

    /// Checks the row-order, coverage and no-empty-column invariants against
    /// the expected row lengths.
    pub fn validate(&self, lengths: &[usize]) -> Result<()> {
        if lengths.len() != self.n_taxa {
            return Err(Error::inconsistent("alignment row count differs from taxa count"));
        }
        let mut next = vec![0u32; self.n_taxa];
        for (c, col) in self.columns().enumerate() {
            if col.iter().all(|x| x.is_none()) {
                return Err(Error::inconsistent(format!("column {c} is all gaps")));
            }
            for (t, cell) in col.iter().enumerate() {
                if let Some(i) = *cell {
                    if i != next[t] {
                        return Err(Error::inconsistent(format!(
                            "row {t}: residue {i} out of order in column {c}"
                        )));
                    }
                    next[t] += 1;
                }
            }
        }
        for (t, (&got, &want)) in next.iter().zip(lengths).enumerate() {
            if got as usize != want {
                return Err(Error::inconsistent(format!("row {t} has {got} residues, expected {want}")));
            }
        }
        Ok(())
    }
}

/// Lineage ids of every node's sequence plus the global column order.
#[derive(Clone, Debug)]
pub struct NodeResidues {
    pub ids: Vec<Vec<LineageId>>,
    /// All lineage ids ever minted, in canonical column order.
    pub order: Vec<LineageId>,
}

/// Walks the history from the root, minting ids for inserted residues.
///
/// New residues are placed in the global order immediately before the
/// residue to the right of the insertion point (or at the end), which keeps
/// the order consistent with every node's sequence. Insertions at the same
/// place on sibling edges come out in edge-id order.
pub fn node_residues(tree: &Tree, history: &TreeHistory) -> NodeResidues {
    let mut ids: Vec<Vec<LineageId>> = vec![Vec::new(); tree.n_nodes()];
    let root_len = history.root_len() as LineageId;
    ids[tree.root()] = (0..root_len).collect();
    let mut order: Vec<LineageId> = (0..root_len).collect();
    let mut next = root_len;
    for v in tree.preorder() {
        if v == tree.root() {
            continue;
        }
        let p = tree.parent(v).unwrap();
        let mut seq = ids[p].clone();
        for e in &history.edge(v).events {
            match e.kind {
                EventKind::Insertion => {
                    let fresh: Vec<LineageId> = (next..next + e.size as LineageId).collect();
                    next += e.size as LineageId;
                    let at = match seq.get(e.position) {
                        Some(right) => order.iter().position(|x| x == right).unwrap(),
                        None => order.len(),
                    };
                    order.splice(at..at, fresh.iter().copied());
                    seq.splice(e.position..e.position, fresh);
                }
                EventKind::Deletion => {
                    seq.drain(e.position..e.position + e.size);
                }
            }
        }
        ids[v] = seq;
    }
    NodeResidues { ids, order }
}

/// The alignment of the leaf sequences implied by a tree history.
pub fn project_alignment(history: &TreeHistory, tree: &Tree) -> Alignment {
    let NodeResidues { ids, order } = node_residues(tree, history);
    let n = tree.n_leaves();
    let rank: HashMap<LineageId, usize> = order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut slots: Vec<Option<Vec<Option<u32>>>> = vec![None; order.len()];
    for (taxon, leaf_ids) in ids.iter().take(n).enumerate() {
        for (k, id) in leaf_ids.iter().enumerate() {
            let col = slots[rank[id]].get_or_insert_with(|| vec![None; n]);
            col[taxon] = Some(k as u32);
        }
    }
    Alignment::from_columns(n, slots.into_iter().flatten())
}

/// Sequence lengths the history implies at the leaves.
pub fn leaf_lengths(history: &TreeHistory, tree: &Tree) -> Vec<usize> {
    (0..tree.n_leaves()).map(|v| history.node_len(tree, v as NodeId)).collect()
}
