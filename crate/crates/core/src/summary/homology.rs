use crate::alignment::{project_alignment, Alignment};
use crate::error::{Error, Result};
use crate::mcmc::SampleRecord;

/// Posterior probabilities that two residues share a column, and that a
/// residue is unaligned to every residue of another sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PairPosteriors {
    lengths: Vec<usize>,
    /// Row-major `len_a x len_b` table for each pair `a < b`.
    matched: Vec<Vec<f64>>,
    /// `unaligned[a][b][i]`: residue `i` of `a` has no partner in `b`.
    unaligned: Vec<Vec<Vec<f64>>>,
}

fn pair_slot(n: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < n);
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

impl PairPosteriors {
    /// All match probabilities zero; every residue certainly unaligned.
    pub fn null(lengths: &[usize]) -> Self {
        let n = lengths.len();
        let mut matched = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                matched.push(vec![0.0; lengths[a] * lengths[b]]);
            }
        }
        let unaligned = (0..n)
            .map(|a| (0..n).map(|_| vec![1.0; lengths[a]]).collect())
            .collect();
        Self {
            lengths: lengths.to_vec(),
            matched,
            unaligned,
        }
    }

    /// Frequencies over sampled alignments.
    pub fn from_alignments<'a>(lengths: &[usize], alignments: impl IntoIterator<Item = &'a Alignment>) -> Result<Self> {
        let n = lengths.len();
        let mut out = Self::null(lengths);
        out.unaligned.iter_mut().flatten().flatten().for_each(|x| *x = 0.0);
        let mut count = 0usize;
        for aln in alignments {
            aln.validate(lengths)?;
            count += 1;
            for col in aln.columns() {
                for a in 0..n {
                    let Some(i) = col[a] else { continue };
                    for b in 0..n {
                        if b == a {
                            continue;
                        }
                        match col[b] {
                            Some(j) if a < b => {
                                out.matched[pair_slot(n, a, b)][i as usize * lengths[b] + j as usize] += 1.0;
                            }
                            Some(_) => {}
                            None => out.unaligned[a][b][i as usize] += 1.0,
                        }
                    }
                }
            }
        }
        if count == 0 {
            return Err(Error::inconsistent("no alignment samples to summarize"));
        }
        let scale = 1.0 / count as f64;
        out.matched.iter_mut().flatten().for_each(|x| *x *= scale);
        out.unaligned.iter_mut().flatten().flatten().for_each(|x| *x *= scale);
        Ok(out)
    }

    /// Builds posteriors from explicit match probabilities
    /// `((a, i), (b, j), p)`; unaligned mass is the remainder.
    pub fn from_matches(lengths: &[usize], entries: &[((usize, usize), (usize, usize), f64)]) -> Result<Self> {
        let n = lengths.len();
        let mut out = Self::null(lengths);
        for &((a, i), (b, j), p) in entries {
            if a == b || a >= n || b >= n || i >= lengths[a] || j >= lengths[b] {
                return Err(Error::inconsistent(format!("bad residue pair ({a},{i})~({b},{j})")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("match probability {p} outside [0, 1]")));
            }
            let ((a, i), (b, j)) = if a < b { ((a, i), (b, j)) } else { ((b, j), (a, i)) };
            out.matched[pair_slot(n, a, b)][i * lengths[b] + j] = p;
        }
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                for i in 0..lengths[a] {
                    let total: f64 = (0..lengths[b]).map(|j| out.matched(a, i, b, j)).sum();
                    if total > 1.0 + 1e-12 {
                        return Err(Error::domain(format!(
                            "residue {i} of sequence {a} has match mass {total} against sequence {b}"
                        )));
                    }
                    out.unaligned[a][b][i] = (1.0 - total).max(0.0);
                }
            }
        }
        Ok(out)
    }

    pub fn n_taxa(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    /// `P(residue i of a ~ residue j of b)`.
    pub fn matched(&self, a: usize, i: usize, b: usize, j: usize) -> f64 {
        let n = self.n_taxa();
        if a < b {
            self.matched[pair_slot(n, a, b)][i * self.lengths[b] + j]
        } else {
            self.matched[pair_slot(n, b, a)][j * self.lengths[a] + i]
        }
    }

    /// `P(residue i of a is unaligned to sequence b)`.
    pub fn unaligned(&self, a: usize, i: usize, b: usize) -> f64 {
        self.unaligned[a][b][i]
    }
}

/// Pair posteriors over the alignments implied by sampled histories.
pub fn pair_homology_posteriors(samples: &[SampleRecord]) -> Result<PairPosteriors> {
    let first = samples
        .first()
        .ok_or_else(|| Error::inconsistent("no samples to summarize"))?;
    let alignments: Vec<Alignment> = samples.iter().map(|s| project_alignment(&s.history, &s.tree)).collect();
    let lengths = crate::alignment::leaf_lengths(&first.history, &first.tree);
    PairPosteriors::from_alignments(&lengths, &alignments)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_certain_homology() {
        let aln = Alignment::from_rows(&["AC-", "ACG", "-CG"]).unwrap();
        let p = PairPosteriors::from_alignments(&[2, 3, 2], [&aln, &aln]).unwrap();
        assert_eq!(p.matched(0, 0, 1, 0), 1.0);
        assert_eq!(p.matched(1, 1, 0, 1), 1.0);
        assert_eq!(p.unaligned(1, 2, 0), 1.0);
        assert_eq!(p.unaligned(0, 0, 2), 1.0);
    }

    #[test]
    fn two_samples_split_evenly() {
        let x = Alignment::from_rows(&["A-", "A-", "-A"]).unwrap();
        let y = Alignment::from_rows(&["A-", "-A", "-A"]).unwrap();
        let p = PairPosteriors::from_alignments(&[1, 1, 1], [&x, &y]).unwrap();
        assert_eq!(p.matched(0, 0, 1, 0), 0.5);
        assert_eq!(p.unaligned(0, 0, 1), 0.5);
        assert_eq!(p.matched(1, 0, 2, 0), 0.5);
    }

    #[test]
    fn empty_sample_set_is_an_error() {
        assert!(PairPosteriors::from_alignments(&[1, 1], std::iter::empty()).is_err());
        assert!(pair_homology_posteriors(&[]).is_err());
    }

    #[test]
    fn hand_built_rows_are_completed() {
        let p = PairPosteriors::from_matches(&[2, 2], &[((0, 0), (1, 0), 0.7), ((1, 1), (0, 0), 0.2)]).unwrap();
        assert!((p.unaligned(0, 0, 1) - 0.1).abs() < 1e-15);
        assert_eq!(p.unaligned(1, 1, 0), 0.8);
        assert!(PairPosteriors::from_matches(&[2, 2], &[((0, 0), (1, 0), 0.7), ((0, 0), (1, 1), 0.7)]).is_err());
    }
}
