//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use histalign::alignment::Alignment;
use histalign::history::{EdgeHistory, EventKind};
use histalign::hky::RateMatrix;
use histalign::indel::IndelModel;
use histalign::sequence::Sequence;
use histalign::tree::Tree;
use nalgebra::DMatrix;

/// `P(n_v | n_0, v)` for the sequence-length process, by exponentiating its
/// generator truncated at `cap` residues.
pub fn length_transition(model: &IndelModel, n0: usize, nv: usize, v: f64, cap: usize) -> f64 {
    let size = cap + 1;
    let mut g = DMatrix::<f64>::zeros(size, size);
    for n in 0..size {
        let mut out = 0.0;
        for l in 1..size {
            let up = (n + 1) as f64 * model.lambda() * model.i(l);
            out += up;
            if n + l < size {
                g[(n, n + l)] += up * v;
            }
            if l <= n {
                let down = (n - l + 1) as f64 * model.mu() * model.d(l);
                g[(n, n - l)] += down * v;
                out += down;
            }
        }
        g[(n, n)] = -out * v;
    }
    g.exp()[(n0, nv)]
}

/// The single-edge proposal density written out term by term: model-matched
/// provisional steps, then the two routes to the last event.
pub fn basic_proposal_log_density(model: &IndelModel, h: &EdgeHistory) -> f64 {
    let v = h.span;
    let steps: Vec<_> = h.steps().collect();
    if steps.is_empty() {
        return if h.parent_len == h.child_len {
            -model.eta(h.parent_len) * v
        } else {
            f64::NEG_INFINITY
        };
    }
    // Log scale throughout; long histories underflow otherwise.
    let ln_step = |kind: EventKind, l: usize, n: usize, dt: f64| -> f64 {
        let wait = -model.eta(n) * dt;
        match kind {
            EventKind::Insertion => wait + model.lambda().ln() + model.i(l).ln(),
            EventKind::Deletion => {
                let q_del = (n - l + 1) as f64 * model.d(l) / model.f(n);
                wait + (model.f(n) * model.mu() * q_del / (n - l + 1) as f64).ln()
            }
        }
    };
    let mut ln_q = 0.0;
    let mut t = 0.0;
    let k = steps.len();
    for &(e, before, _) in &steps[..k - 1] {
        ln_q += ln_step(e.kind, e.size, before, e.time - t);
        t = e.time;
    }
    let (e, before, after) = steps[k - 1];
    let generative = ln_step(e.kind, e.size, before, e.time - t) - model.eta(after) * (v - e.time);
    let slots = match e.kind {
        EventKind::Insertion => before + 1,
        EventKind::Deletion => before - e.size + 1,
    };
    let repair = -model.eta(before) * (v - t) - ((v - t) * slots as f64).ln();
    let top = generative.max(repair);
    ln_q + top + ((generative - top).exp() + (repair - top).exp()).ln()
}

/// Column likelihood by summing over every assignment of states to internal
/// nodes.
pub fn brute_force_log_likelihood(rate: &RateMatrix, tree: &Tree, alignment: &Alignment, leaves: &[Sequence]) -> f64 {
    let internal: Vec<_> = tree.internal_nodes().collect();
    let mut total = 0.0;
    for c in 0..alignment.n_columns() {
        let col = alignment.column(c);
        let mut lik = 0.0;
        let combos = 4usize.pow(internal.len() as u32);
        for code in 0..combos {
            let mut state = vec![None; tree.n_nodes()];
            let mut rest = code;
            for &x in &internal {
                state[x] = Some(rest % 4);
                rest /= 4;
            }
            // Leaves: observed base, or summed out when gapped.
            let mut leaf_options: Vec<Vec<usize>> = Vec::new();
            for t in 0..tree.n_leaves() {
                leaf_options.push(match col[t] {
                    Some(i) => vec![leaves[t].bases[i as usize].index()],
                    None => (0..4).collect(),
                });
            }
            let leaf_combos: usize = leaf_options.iter().map(Vec::len).product();
            for lc in 0..leaf_combos {
                let mut rest = lc;
                for t in 0..tree.n_leaves() {
                    let opts = &leaf_options[t];
                    state[t] = Some(opts[rest % opts.len()]);
                    rest /= opts.len();
                }
                let root = tree.root();
                let mut p = rate.pi()[state[root].unwrap()];
                for v in tree.edges() {
                    let m = rate.transition_probabilities(tree.branch_length(v)).unwrap();
                    p *= m[state[tree.parent(v).unwrap()].unwrap()][state[v].unwrap()];
                }
                lik += p;
            }
        }
        total += lik.ln();
    }
    total
}

/// Mean and batch-means standard error of an autocorrelated series.
pub fn batch_mean(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len() / batches * batches;
    let size = n / batches;
    let mean = xs[..n].iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = xs[..n].chunks(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
