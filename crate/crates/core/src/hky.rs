//! HKY85 substitution model and Felsenstein pruning with gaps as missing data.

use std::collections::BTreeMap;

use nalgebra::{Matrix4, SymmetricEigen};

use crate::alignment::Alignment;
use crate::error::{Error, Result};
use crate::sequence::{Nucleotide, Sequence};
use crate::tree::Tree;

pub type Matrix = [[f64; 4]; 4];

/// Transition/transversion ratio and base frequencies (A, C, G, T).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubstParams {
    pub kappa: f64,
    pub pi: [f64; 4],
}

impl SubstParams {
    pub fn new(kappa: f64, pi: [f64; 4]) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::domain(format!("κ = {kappa} must be positive")));
        }
        if pi.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::domain(format!("base frequencies {pi:?} must be positive")));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("base frequencies sum to {total}")));
        }
        Ok(Self {
            kappa,
            pi: pi.map(|p| p / total),
        })
    }

    pub fn jukes_cantor() -> Self {
        Self {
            kappa: 1.0,
            pi: [0.25; 4],
        }
    }
}

fn is_transition(a: usize, b: usize) -> bool {
    Nucleotide::from_index(a).is_purine() == Nucleotide::from_index(b).is_purine()
}

/// Unit-rate HKY generator with its symmetrized eigensystem.
#[derive(Clone, Debug)]
pub struct RateMatrix {
    params: SubstParams,
    q: Matrix,
    eigenvalues: [f64; 4],
    eigenvectors: Matrix4<f64>,
    sqrt_pi: [f64; 4],
}

impl RateMatrix {
    pub fn new(params: SubstParams) -> Self {
        let SubstParams { kappa, pi } = params;
        let mut q = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    q[a][b] = if is_transition(a, b) { kappa * pi[b] } else { pi[b] };
                }
            }
            q[a][a] = -q[a].iter().sum::<f64>();
        }
        let rate: f64 = (0..4).map(|a| -pi[a] * q[a][a]).sum();
        for row in q.iter_mut() {
            for x in row.iter_mut() {
                *x /= rate;
            }
        }
        let sqrt_pi = pi.map(f64::sqrt);
        let sym = Matrix4::from_fn(|i, j| sqrt_pi[i] * q[i][j] / sqrt_pi[j]);
        // Exact symmetry keeps the eigen solver on its symmetric path.
        let sym = (sym + sym.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut eigenvalues = [0.0; 4];
        for (k, v) in eig.eigenvalues.iter().enumerate() {
            eigenvalues[k] = *v;
        }
        Self {
            params,
            q,
            eigenvalues,
            eigenvectors: eig.eigenvectors,
            sqrt_pi,
        }
    }

    pub fn params(&self) -> &SubstParams {
        &self.params
    }

    pub fn generator(&self) -> &Matrix {
        &self.q
    }

    pub fn pi(&self) -> &[f64; 4] {
        &self.params.pi
    }

    pub fn transition_probabilities(&self, t: f64) -> Result<Matrix> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("branch length {t} is negative")));
        }
        Ok(self.p_unchecked(t))
    }

    pub(crate) fn p_unchecked(&self, t: f64) -> Matrix {
        let decay = self.eigenvalues.map(|l| (l * t).exp());
        let v = &self.eigenvectors;
        let mut p = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let s: f64 = (0..4).map(|k| v[(i, k)] * v[(j, k)] * decay[k]).sum();
                p[i][j] = (s * self.sqrt_pi[j] / self.sqrt_pi[i]).max(0.0);
            }
            let total: f64 = p[i].iter().sum();
            for x in p[i].iter_mut() {
                *x /= total;
            }
        }
        p
    }

    /// Log-likelihood of `alignment` on `tree`; rows are the tree's leaves in
    /// order and `leaves[i]` supplies the bases of row `i`.
    pub fn log_likelihood(&self, tree: &Tree, alignment: &Alignment, leaves: &[Sequence]) -> Result<f64> {
        let n = tree.n_leaves();
        if alignment.n_taxa() != n || leaves.len() != n {
            return Err(Error::inconsistent(format!(
                "tree has {n} leaves, alignment {} rows, {} sequences",
                alignment.n_taxa(),
                leaves.len()
            )));
        }
        let mut patterns: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        let mut pattern = vec![GAP; n];
        for col in alignment.columns() {
            for (t, cell) in col.iter().enumerate() {
                pattern[t] = match cell {
                    None => GAP,
                    Some(i) => leaves[t]
                        .bases
                        .get(*i as usize)
                        .ok_or_else(|| {
                            Error::inconsistent(format!("row {t} refers to residue {i} beyond its sequence"))
                        })?
                        .index() as u8,
                };
            }
            *patterns.entry(pattern.clone()).or_default() += 1;
        }
        let pruner = Pruner::new(self, tree);
        Ok(patterns
            .iter()
            .map(|(p, &count)| count as f64 * pruner.column(p))
            .sum())
    }
}

const GAP: u8 = u8::MAX;

/// Per-tree transition matrices and traversal order, reusable across columns.
struct Pruner<'a> {
    model: &'a RateMatrix,
    tree: &'a Tree,
    post: Vec<usize>,
    p: Vec<Matrix>,
}

impl<'a> Pruner<'a> {
    fn new(model: &'a RateMatrix, tree: &'a Tree) -> Self {
        let p = (0..tree.n_nodes())
            .map(|v| {
                if v == tree.root() {
                    [[0.0; 4]; 4]
                } else {
                    model.p_unchecked(tree.branch_length(v))
                }
            })
            .collect();
        Self {
            model,
            tree,
            post: tree.postorder(),
            p,
        }
    }

    fn column(&self, states: &[u8]) -> f64 {
        let non_gap: Vec<_> = states.iter().filter(|&&s| s != GAP).collect();
        if non_gap.len() == 1 {
            return self.model.pi()[*non_gap[0] as usize].ln();
        }
        let mut partial = vec![[1.0f64; 4]; self.tree.n_nodes()];
        for &v in &self.post {
            if self.tree.is_leaf(v) {
                let s = states[v];
                if s != GAP {
                    partial[v] = [0.0; 4];
                    partial[v][s as usize] = 1.0;
                }
                continue;
            }
            let mut acc = [1.0; 4];
            for &c in self.tree.children(v) {
                let pc = &self.p[c];
                let lc = &partial[c];
                for (a, slot) in acc.iter_mut().enumerate() {
                    *slot *= (0..4).map(|b| pc[a][b] * lc[b]).sum::<f64>();
                }
            }
            partial[v] = acc;
        }
        let root = &partial[self.tree.root()];
        (0..4).map(|a| self.model.pi()[a] * root[a]).sum::<f64>().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::tests::labels;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hky(kappa: f64, pi: [f64; 4]) -> RateMatrix {
        RateMatrix::new(SubstParams::new(kappa, pi).unwrap())
    }

    #[test]
    fn generator_is_normalized_and_reversible() {
        let m = hky(3.7, [0.19, 0.31, 0.33, 0.17]);
        let q = m.generator();
        let pi = m.pi();
        let rate: f64 = (0..4).map(|a| -pi[a] * q[a][a]).sum();
        assert!((rate - 1.0).abs() < 1e-14);
        for a in 0..4 {
            assert!(q[a].iter().sum::<f64>().abs() < 1e-14);
            let col: f64 = (0..4).map(|b| pi[b] * q[b][a]).sum();
            assert!(col.abs() < 1e-14);
            for b in 0..4 {
                assert!((pi[a] * q[a][b] - pi[b] * q[b][a]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_at_zero_and_stationary_at_infinity() {
        let m = hky(2.0, [0.1, 0.2, 0.3, 0.4]);
        let p0 = m.transition_probabilities(0.0).unwrap();
        let pinf = m.transition_probabilities(200.0).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert!((p0[a][b] - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
                assert!((pinf[a][b] - m.pi()[b]).abs() < 1e-12);
            }
        }
        assert!(m.transition_probabilities(-0.1).is_err());
    }

    #[test]
    fn jukes_cantor_closed_form() {
        let m = RateMatrix::new(SubstParams::jukes_cantor());
        let p = m.transition_probabilities(0.5).unwrap();
        let diag = 0.25 + 0.75 * (-2.0f64 / 3.0).exp();
        for a in 0..4 {
            assert!((p[a][a] - diag).abs() < 1e-13);
            assert!((p[a][a] - 0.635056).abs() < 1e-5);
        }
    }

    #[test]
    fn matches_hky_closed_form() {
        let kappa = 2.5;
        let pi = [0.15, 0.35, 0.3, 0.2];
        let m = hky(kappa, pi);
        let t = 0.37;
        let p = m.transition_probabilities(t).unwrap();
        // Closed-form HKY85 with the unit-rate scaling recomputed from scratch.
        let pr = pi[0] + pi[2];
        let py = pi[1] + pi[3];
        let beta = 1.0 / (2.0 * pr * py + 2.0 * kappa * (pi[0] * pi[2] + pi[1] * pi[3]));
        let group = |j: usize| if j == 0 || j == 2 { pr } else { py };
        for i in 0..4 {
            for j in 0..4 {
                let pj = pi[j];
                let pg = group(j);
                let aj = 1.0 + pg * (kappa - 1.0);
                let e1 = (-beta * t).exp();
                let e2 = (-beta * aj * t).exp();
                let want = if i == j {
                    pj + pj * (1.0 / pg - 1.0) * e1 + ((pg - pj) / pg) * e2
                } else if is_transition(i, j) {
                    pj + pj * (1.0 / pg - 1.0) * e1 - (pj / pg) * e2
                } else {
                    pj * (1.0 - e1)
                };
                assert!((p[i][j] - want).abs() < 1e-12, "({i},{j}) {} vs {want}", p[i][j]);
            }
        }
    }

    #[test]
    fn rows_sum_to_one_and_detailed_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let raw: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
            let s: f64 = raw.iter().sum();
            let m = hky(rng.random_range(0.1..20.0), raw.map(|x| x / s));
            let p = m.transition_probabilities(rng.random_range(0.0..5.0)).unwrap();
            for a in 0..4 {
                assert!((p[a].iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for b in 0..4 {
                    assert!((m.pi()[a] * p[a][b] - m.pi()[b] * p[b][a]).abs() < 1e-12);
                }
            }
        }
    }

    fn three_taxon(t: [f64; 3]) -> Tree {
        Tree::from_edges(labels(3), &[(3, 0, t[0]), (3, 1, t[1]), (3, 2, t[2])], 3).unwrap()
    }

    fn seqs(rows: &[&str]) -> Vec<Sequence> {
        rows.iter()
            .enumerate()
            .map(|(i, r)| Sequence::from_str(format!("t{i}"), &r.replace('-', "")).unwrap())
            .collect()
    }

    #[test]
    fn pair_with_a_gapped_third_taxon() {
        let m = RateMatrix::new(SubstParams::jukes_cantor());
        let tree = three_taxon([0.2, 0.3, 1.0]);
        let rows = ["A", "A", "-"];
        let a = Alignment::from_rows(&rows).unwrap();
        let ll = m.log_likelihood(&tree, &a, &seqs(&rows)).unwrap();
        let diag = 0.25 + 0.75 * (-2.0f64 / 3.0).exp();
        assert!((ll - (0.25 * diag).ln()).abs() < 1e-13);
        assert!((ll - (0.25f64 * 0.635056).ln()).abs() < 2e-5);
    }

    #[test]
    fn lone_residue_contributes_its_frequency() {
        let m = hky(2.0, [0.1, 0.2, 0.3, 0.4]);
        let tree = three_taxon([0.2, 0.3, 1.0]);
        let rows = ["-", "G", "-"];
        let a = Alignment::from_rows(&rows).unwrap();
        let ll = m.log_likelihood(&tree, &a, &seqs(&rows)).unwrap();
        assert!((ll - 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_taxa_are_rejected() {
        let m = RateMatrix::new(SubstParams::jukes_cantor());
        let tree = three_taxon([0.2, 0.3, 1.0]);
        let rows = ["A", "A"];
        let a = Alignment::from_rows(&rows).unwrap();
        assert!(m.log_likelihood(&tree, &a, &seqs(&rows)).is_err());
    }

    #[test]
    fn identical_pair_loses_information_with_distance() {
        let m = hky(2.0, [0.1, 0.2, 0.3, 0.4]);
        let rows = ["ACGT", "ACGT", "----"];
        let a = Alignment::from_rows(&rows).unwrap();
        let s = seqs(&rows);
        let mut prev = f64::INFINITY;
        for k in 1..=100 {
            let t = k as f64 * 0.1;
            let ll = m.log_likelihood(&three_taxon([t / 2.0, t / 2.0, 1.0]), &a, &s).unwrap();
            assert!(ll < prev);
            prev = ll;
        }
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(SubstParams::new(0.0, [0.25; 4]).is_err());
        assert!(SubstParams::new(1.0, [0.5, 0.5, 0.0, 0.0]).is_err());
        assert!(SubstParams::new(1.0, [0.3; 4]).is_err());
    }
}
