use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use super::homology::PairPosteriors;
use crate::alignment::Alignment;

/// Default weight on unaligned probabilities in the gain function.
pub const DEFAULT_GAP_FACTOR: f64 = 0.5;

/// Exact search is attempted when `prod(len + 1) * 2^n` stays below this.
const EXACT_SEARCH_LIMIT: usize = 4_000_000;

/// An alignment with the expected accuracy of every cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Annealed {
    pub alignment: Alignment,
    /// `accuracy[column][taxon]`, for residues and gaps alike.
    pub accuracy: Vec<Vec<f64>>,
    /// Objective value, see [`expected_score`].
    pub score: f64,
}

/// Contribution of one column: `2 P(i~j)` for each residue pair it holds plus
/// `g P(i-)` for each residue facing a gap.
fn column_score(post: &PairPosteriors, col: &[Option<u32>], gap_factor: f64) -> f64 {
    let n = col.len();
    let mut s = 0.0;
    for a in 0..n {
        let Some(i) = col[a] else { continue };
        for b in 0..n {
            if b == a {
                continue;
            }
            match col[b] {
                Some(j) if a < b => s += 2.0 * post.matched(a, i as usize, b, j as usize),
                Some(_) => {}
                None => s += gap_factor * post.unaligned(a, i as usize, b),
            }
        }
    }
    s
}

/// Expected-accuracy objective of an alignment: summed over sequence pairs,
/// twice the probability of each aligned residue pair plus `gap_factor` times
/// the unaligned probability of each residue facing a gap.
pub fn expected_score(post: &PairPosteriors, alignment: &Alignment, gap_factor: f64) -> f64 {
    alignment.columns().map(|c| column_score(post, c, gap_factor)).sum()
}

/// Expected accuracy of each cell. A residue scores the mean over the other
/// rows of the probability that its partner (or gap) in that row is right; a
/// gap scores the mean unaligned probability of the residues it faces.
pub fn cell_accuracy(post: &PairPosteriors, alignment: &Alignment) -> Vec<Vec<f64>> {
    let n = alignment.n_taxa();
    alignment
        .columns()
        .map(|col| {
            (0..n)
                .map(|t| match col[t] {
                    Some(i) => {
                        if n == 1 {
                            return 1.0;
                        }
                        let sum: f64 = (0..n)
                            .filter(|&b| b != t)
                            .map(|b| match col[b] {
                                Some(j) => post.matched(t, i as usize, b, j as usize),
                                None => post.unaligned(t, i as usize, b),
                            })
                            .sum();
                        sum / (n - 1) as f64
                    }
                    None => {
                        let facing: Vec<f64> = (0..n)
                            .filter_map(|a| col[a].map(|i| post.unaligned(a, i as usize, t)))
                            .collect();
                        facing.iter().sum::<f64>() / facing.len().max(1) as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Ten-level bin of an accuracy value, `0` for `[0, 0.1)` up to `9`.
pub fn accuracy_level(x: f64) -> u8 {
    ((x * 10.0).floor().clamp(0.0, 9.0)) as u8
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    x: usize,
    y: usize,
    stamp: (u64, u64),
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.x.cmp(&self.x))
            .then_with(|| other.y.cmp(&self.y))
    }
}

/// Greedy column merging over a partial order of columns.
struct Annealer<'a> {
    post: &'a PairPosteriors,
    gap_factor: f64,
    /// First global residue id of each taxon.
    offset: Vec<usize>,
    owner: Vec<(usize, usize)>,
    parent: Vec<usize>,
    members: Vec<Vec<usize>>,
    version: Vec<u64>,
}

impl<'a> Annealer<'a> {
    fn new(post: &'a PairPosteriors, gap_factor: f64) -> Self {
        let mut offset = Vec::new();
        let mut owner = Vec::new();
        for (t, &len) in post.lengths().iter().enumerate() {
            offset.push(owner.len());
            owner.extend((0..len).map(|i| (t, i)));
        }
        let total = owner.len();
        Self {
            post,
            gap_factor,
            offset,
            owner,
            parent: (0..total).collect(),
            members: (0..total).map(|r| vec![r]).collect(),
            version: vec![0; total],
        }
    }

    fn find(&mut self, mut r: usize) -> usize {
        while self.parent[r] != r {
            self.parent[r] = self.parent[self.parent[r]];
            r = self.parent[r];
        }
        r
    }

    fn gain(&self, x: usize, y: usize) -> Option<f64> {
        let mut g = 0.0;
        for &r in &self.members[x] {
            let (a, i) = self.owner[r];
            for &s in &self.members[y] {
                let (b, j) = self.owner[s];
                if a == b {
                    return None;
                }
                g += 2.0 * self.post.matched(a, i, b, j)
                    - self.gap_factor * (self.post.unaligned(a, i, b) + self.post.unaligned(b, j, a));
            }
        }
        Some(g)
    }

    /// Column holding the residue after `r` in its sequence.
    fn successor(&mut self, r: usize) -> Option<usize> {
        let (t, i) = self.owner[r];
        (i + 1 < self.post.lengths()[t]).then(|| self.find(self.offset[t] + i + 1))
    }

    fn reaches(&mut self, from: usize, to: usize) -> bool {
        let mut seen = BTreeSet::from([from]);
        let mut stack = vec![from];
        while let Some(c) = stack.pop() {
            for r in self.members[c].clone() {
                if let Some(next) = self.successor(r) {
                    if next == to {
                        return true;
                    }
                    if seen.insert(next) {
                        stack.push(next);
                    }
                }
            }
        }
        false
    }

    fn candidate(&self, x: usize, y: usize) -> Option<Candidate> {
        let gain = self.gain(x, y)?;
        (gain > 0.0).then_some(Candidate {
            gain,
            x,
            y,
            stamp: (self.version[x], self.version[y]),
        })
    }

    fn run(mut self) -> Alignment {
        let mut heap = BinaryHeap::new();
        let total = self.owner.len();
        for r in 0..total {
            for s in r + 1..total {
                if self.owner[r].0 != self.owner[s].0 {
                    heap.extend(self.candidate(r, s));
                }
            }
        }
        while let Some(c) = heap.pop() {
            let (x, y) = (self.find(c.x), self.find(c.y));
            if x == y {
                continue;
            }
            if (x, y) != (c.x, c.y) || c.stamp != (self.version[x], self.version[y]) {
                heap.extend(self.candidate(x.min(y), x.max(y)));
                continue;
            }
            if self.reaches(x, y) || self.reaches(y, x) {
                continue;
            }
            let moved = std::mem::take(&mut self.members[y]);
            self.members[x].extend(moved);
            self.parent[y] = x;
            self.version[x] += 1;
        }
        self.order()
    }

    /// Topological order of the merged columns, smallest id first among ties.
    fn order(&mut self) -> Alignment {
        let n = self.post.n_taxa();
        let total = self.owner.len();
        let roots: Vec<usize> = (0..total).filter(|&r| self.find(r) == r).collect();
        let mut indegree = vec![0usize; total];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); total];
        for &c in &roots {
            for r in self.members[c].clone() {
                if let Some(next) = self.successor(r) {
                    succ[c].push(next);
                    indegree[next] += 1;
                }
            }
        }
        let mut ready: BTreeSet<usize> = roots.iter().copied().filter(|&c| indegree[c] == 0).collect();
        let mut columns = Vec::with_capacity(roots.len());
        while let Some(c) = ready.pop_first() {
            let mut col = vec![None; n];
            for &r in &self.members[c] {
                let (t, i) = self.owner[r];
                col[t] = Some(i as u32);
            }
            columns.push(col);
            for &next in &succ[c] {
                indegree[next] -= 1;
                if indegree[next] == 0 {
                    ready.insert(next);
                }
            }
        }
        debug_assert_eq!(columns.len(), roots.len(), "merged columns must stay acyclic");
        Alignment::from_columns(n, columns)
    }
}

/// Maximum of the additive column objective over every alignment, by dynamic
/// programming over prefix-length vectors. `None` when too large.
fn exact_alignment(post: &PairPosteriors, gap_factor: f64) -> Option<Alignment> {
    let lens = post.lengths();
    let n = lens.len();
    if n >= usize::BITS as usize - 1 {
        return None;
    }
    let mut states = 1usize;
    for &l in lens {
        states = states.checked_mul(l + 1)?;
    }
    if states.checked_mul(1usize << n)? > EXACT_SEARCH_LIMIT {
        return None;
    }
    let mut stride = vec![1usize; n];
    for t in 1..n {
        stride[t] = stride[t - 1] * (lens[t - 1] + 1);
    }
    let decode = |mut s: usize| -> Vec<usize> {
        (0..n)
            .map(|t| {
                let p = s % (lens[t] + 1);
                s /= lens[t] + 1;
                p
            })
            .collect()
    };
    let mut best = vec![f64::NEG_INFINITY; states];
    let mut back = vec![0usize; states];
    best[0] = 0.0;
    // States are visited in increasing index, which respects every move.
    for s in 0..states {
        if best[s] == f64::NEG_INFINITY {
            continue;
        }
        let pos = decode(s);
        for mask in 1usize..(1 << n) {
            if (0..n).any(|t| mask >> t & 1 == 1 && pos[t] == lens[t]) {
                continue;
            }
            let col: Vec<Option<u32>> = (0..n)
                .map(|t| (mask >> t & 1 == 1).then_some(pos[t] as u32))
                .collect();
            let next = s + (0..n).filter(|&t| mask >> t & 1 == 1).map(|t| stride[t]).sum::<usize>();
            let value = best[s] + column_score(post, &col, gap_factor);
            if value > best[next] {
                best[next] = value;
                back[next] = mask;
            }
        }
    }
    let mut columns = Vec::new();
    let mut s = states - 1;
    while s != 0 {
        let mask = back[s];
        let prev = s - (0..n).filter(|&t| mask >> t & 1 == 1).map(|t| stride[t]).sum::<usize>();
        let pos = decode(prev);
        columns.push((0..n).map(|t| (mask >> t & 1 == 1).then_some(pos[t] as u32)).collect());
        s = prev;
    }
    columns.reverse();
    Some(Alignment::from_columns(n, columns))
}

/// Sequence annealing from the null alignment: merge the column pair of
/// largest positive gain `sum 2P(i~j) - g (P(i-) + P(j-))` whenever the merge
/// keeps every row in order, until no such merge remains. Small instances are
/// also solved exactly and the better alignment is kept.
pub fn annealed_alignment(post: &PairPosteriors, gap_factor: f64) -> Annealed {
    let greedy = Annealer::new(post, gap_factor).run();
    let mut alignment = greedy;
    let mut score = expected_score(post, &alignment, gap_factor);
    if let Some(exact) = exact_alignment(post, gap_factor) {
        let s = expected_score(post, &exact, gap_factor);
        if s > score + 1e-12 * score.abs().max(1.0) {
            alignment = exact;
            score = s;
        }
    }
    let accuracy = cell_accuracy(post, &alignment);
    Annealed {
        alignment,
        accuracy,
        score,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_diagonal_gives_the_ungapped_alignment() {
        let lens = [3, 3, 3];
        let mut entries = Vec::new();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            for i in 0..3 {
                entries.push(((a, i), (b, i), 1.0));
            }
        }
        let post = PairPosteriors::from_matches(&lens, &entries).unwrap();
        let out = annealed_alignment(&post, DEFAULT_GAP_FACTOR);
        assert_eq!(out.alignment, Alignment::from_rows(&["AAA", "AAA", "AAA"]).unwrap());
        assert!(out.accuracy.iter().flatten().all(|&x| x == 1.0));
    }

    #[test]
    fn zero_probabilities_give_the_null_alignment() {
        let post = PairPosteriors::null(&[2, 3, 1]);
        let out = annealed_alignment(&post, DEFAULT_GAP_FACTOR);
        assert_eq!(out.alignment.n_columns(), 6);
        out.alignment.validate(&[2, 3, 1]).unwrap();
        assert!(out.alignment.columns().all(|c| c.iter().flatten().count() == 1));
    }

    #[test]
    fn greedy_respects_row_order_on_large_inputs() {
        // Crossing preferences: a0~b1 and a1~b0 cannot both hold.
        let post = PairPosteriors::from_matches(
            &[40, 40],
            &(0..40)
                .map(|i| ((0, i), (1, 39 - i), 0.9))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let out = Annealer::new(&post, DEFAULT_GAP_FACTOR).run();
        out.validate(&[40, 40]).unwrap();
        let matched = out.columns().filter(|c| c.iter().all(Option::is_some)).count();
        assert_eq!(matched, 1);
    }

    #[test]
    fn levels_cover_ten_bins() {
        assert_eq!(accuracy_level(0.0), 0);
        assert_eq!(accuracy_level(0.55), 5);
        assert_eq!(accuracy_level(1.0), 9);
    }
}
