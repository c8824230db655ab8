mod common;

use histalign::alignment::Alignment;
use histalign::hky::{Matrix, RateMatrix, SubstParams};
use histalign::sequence::{Nucleotide, Sequence};
use histalign::simulate::taxon_labels;
use histalign::tree::Tree;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> impl Strategy<Value = SubstParams> {
    (0.05f64..20.0, prop::array::uniform4(0.05f64..1.0)).prop_map(|(kappa, w)| {
        let s: f64 = w.iter().sum();
        SubstParams::new(kappa, w.map(|x| x / s)).unwrap()
    })
}

/// Random tree, gapped alignment and matching leaf sequences.
fn instance(n: usize, columns: usize, seed: u64) -> (Tree, Alignment, Vec<Sequence>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = Tree::random(taxon_labels(n), &mut rng, |r| r.random_range(0.01..1.5)).unwrap();
    let mut next = vec![0u32; n];
    let mut cols = Vec::new();
    for _ in 0..columns {
        let mut col: Vec<Option<u32>> = (0..n).map(|_| rng.random_bool(0.7).then_some(0)).collect();
        if col.iter().all(Option::is_none) {
            col[rng.random_range(0..n)] = Some(0);
        }
        for (t, cell) in col.iter_mut().enumerate() {
            if cell.is_some() {
                *cell = Some(next[t]);
                next[t] += 1;
            }
        }
        cols.push(col);
    }
    let leaves = (0..n)
        .map(|t| {
            let bases = (0..next[t]).map(|_| Nucleotide::from_index(rng.random_range(0..4))).collect();
            Sequence::new(tree.labels()[t].clone(), bases)
        })
        .collect();
    (tree, Alignment::from_columns(n, cols), leaves)
}

fn product(a: &Matrix, b: &Matrix) -> Matrix {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pruning_matches_enumeration(p in params(), n in 3usize..=5, seed in any::<u64>()) {
        let rate = RateMatrix::new(p);
        let (tree, aln, leaves) = instance(n, 5, seed);
        let fast = rate.log_likelihood(&tree, &aln, &leaves).unwrap();
        let slow = common::brute_force_log_likelihood(&rate, &tree, &aln, &leaves);
        prop_assert!((fast - slow).abs() < 1e-9 * slow.abs().max(1.0), "{fast} vs {slow}");
    }

    #[test]
    fn likelihood_ignores_the_root_position(p in params(), n in 4usize..=6, seed in any::<u64>()) {
        let rate = RateMatrix::new(p);
        let (tree, aln, leaves) = instance(n, 12, seed);
        let base = rate.log_likelihood(&tree, &aln, &leaves).unwrap();
        for x in tree.internal_nodes() {
            let moved = tree.rerooted(x).unwrap();
            let l = rate.log_likelihood(&moved, &aln, &leaves).unwrap();
            prop_assert!((l - base).abs() < 1e-9 * base.abs(), "{l} vs {base}");
        }
    }

    #[test]
    fn likelihood_ignores_column_order(p in params(), seed in any::<u64>()) {
        let rate = RateMatrix::new(p);
        let (tree, aln, leaves) = instance(5, 15, seed);
        // Reverse the columns and each sequence, so residue indices still ascend.
        let flipped: Vec<Sequence> = leaves
            .iter()
            .map(|s| Sequence::new(s.name.clone(), s.bases.iter().rev().copied().collect()))
            .collect();
        let cols: Vec<Vec<Option<u32>>> = (0..aln.n_columns())
            .rev()
            .map(|c| aln.column(c))
            .map(|c| c.iter().zip(&leaves).map(|(x, s)| x.map(|i| s.bases.len() as u32 - 1 - i)).collect())
            .collect();
        let reversed = Alignment::from_columns(5, cols);
        let a = rate.log_likelihood(&tree, &aln, &leaves).unwrap();
        let b = rate.log_likelihood(&tree, &reversed, &flipped).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn transition_matrices_are_stochastic_and_compose(p in params(), s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let rate = RateMatrix::new(p);
        let ps = rate.transition_probabilities(s).unwrap();
        let pt = rate.transition_probabilities(t).unwrap();
        let pst = rate.transition_probabilities(s + t).unwrap();
        let composed = product(&ps, &pt);
        for i in 0..4 {
            prop_assert!((pst[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..4 {
                prop_assert!((0.0..=1.0).contains(&pst[i][j]));
                prop_assert!((composed[i][j] - pst[i][j]).abs() < 1e-10);
                prop_assert!((p.pi[i] * pst[i][j] - p.pi[j] * pst[j][i]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn negative_branch_lengths_are_rejected() {
    let rate = RateMatrix::new(SubstParams::jukes_cantor());
    assert!(rate.transition_probabilities(-1e-9).is_err());
    assert!(rate.transition_probabilities(f64::NAN).is_err());
}
