mod common;

use std::sync::Arc;

use histalign::io::{format_record, RunConfig};
use histalign::mcmc::{ChainState, Dirty, KernelStats, Problem, Sampler, Target};
use histalign::proposal::{Category, Context, KernelRegistry, Outcome, Proposal, Tuning};
use histalign::sequence::Sequence;
use histalign::simulate::{simulate_dataset, Dataset};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bounded summaries of a state; an exact kernel leaves their prior
/// expectations unchanged.
fn features(s: &ChainState) -> Vec<f64> {
    let tree = s.tree();
    let h = s.history();
    let n_edges = tree.edges().count() as f64;
    let quiet = tree.edges().filter(|&v| h.edge(v).n_events() == 0).count() as f64;
    let p = s.params();
    let first_split = tree.splits().into_iter().flatten().any(|x| {
        let side = x.side();
        side.len() == 2 && side.contains(0) == side.contains(1)
    });
    vec![
        quiet / n_edges,
        (h.n_events() as f64).min(20.0),
        (h.root_len() as f64).min(300.0),
        p.indel.r,
        p.indel.rd().unwrap_or(0.0),
        p.indel.lambda.min(1.0),
        p.subst.kappa.ln().atan(),
        p.gamma.ln().atan(),
        tree.total_length().atan(),
        p.subst.pi[0],
        f64::from(u8::from(first_split)),
    ]
}

#[test]
fn every_kernel_preserves_the_posterior() {
    let prior = RunConfig::default().prior;
    let registry = KernelRegistry::standard(&prior);
    let names = registry.names();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let datasets: Vec<Dataset> = (0..250).map(|_| simulate_dataset(4, &prior, &mut rng).unwrap()).collect();
    for name in names {
        let mut diffs: Vec<Vec<f64>> = Vec::new();
        let mut accepted = 0u64;
        for d in &datasets {
            let mut cfg = RunConfig::default();
            cfg.kernels = Some(vec![name.to_string()]);
            cfg.audit_every = Some(1);
            let sampler = cfg.sampler(d.sequences.clone()).unwrap();
            let start = ChainState::new(&sampler.problem, d.tree.clone(), d.history.clone(), d.params.clone()).unwrap();
            let before = features(&start);
            let (end, stats) = sampler.run(start, 40, 40, &mut rng, |_| Ok(())).unwrap();
            accepted += stats.accepted[0];
            diffs.push(features(&end).iter().zip(&before).map(|(a, b)| a - b).collect());
        }
        assert!(accepted > 0, "{name} never accepted");
        for k in 0..diffs[0].len() {
            let xs: Vec<f64> = diffs.iter().map(|d| d[k]).collect();
            let (mean, se) = common::mean_se(&xs);
            if se == 0.0 {
                assert_eq!(mean, 0.0, "{name} feature {k}");
            } else {
                assert!(mean.abs() < 4.5 * se, "{name} feature {k}: mean shift {mean} se {se}");
            }
        }
    }
}

fn equal_length_leaves(n: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<Sequence> {
    (0..n)
        .map(|t| {
            let bases = (0..len)
                .map(|_| histalign::sequence::Nucleotide::from_index((rng.next_u32() % 4) as usize))
                .collect();
            Sequence::new(format!("T{}", t + 1), bases)
        })
        .collect()
}

#[test]
fn without_data_the_chain_samples_the_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let cfg = RunConfig {
        target: Target::NoSequenceData,
        ..RunConfig::default()
    };
    // Equal lengths make the taxa exchangeable, so topologies are uniform.
    let sampler = cfg.sampler(equal_length_leaves(4, 20, &mut rng)).unwrap();
    let state = sampler.initial_state(&mut rng).unwrap();
    let (mut ln_kappa, mut pi_a, mut topo) = (Vec::new(), Vec::new(), Vec::new());
    let mut first = None;
    sampler
        .run(state, 400_000, 20, &mut rng, |s| {
            ln_kappa.push(s.params.subst.kappa.ln());
            pi_a.push(s.params.subst.pi[0]);
            let t = s.tree.topology();
            let same = first.get_or_insert_with(|| t.clone()) == &t;
            topo.push(f64::from(u8::from(same)));
            Ok(())
        })
        .unwrap();
    let prior = &cfg.prior;
    let (m, se) = common::batch_mean(&ln_kappa, 50);
    assert!((m + prior.alpha_kappa.ln()).abs() < 3.5 * se, "ln kappa {m} se {se}");
    let (m, se) = common::batch_mean(&pi_a, 50);
    let want = prior.alpha_pi[0] / prior.alpha_pi.iter().sum::<f64>();
    assert!((m - want).abs() < 3.5 * se, "pi_A {m} vs {want} se {se}");
    let (m, se) = common::batch_mean(&topo, 50);
    assert!((m - 1.0 / 3.0).abs() < 3.5 * se, "topology {m} se {se}");
}

#[test]
fn replay_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let d = simulate_dataset(5, &RunConfig::default().prior, &mut rng).unwrap();
    let cfg = RunConfig::default();
    let run = |seed: u64| {
        let sampler = cfg.sampler(d.sequences.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = sampler.initial_state(&mut rng).unwrap();
        let mut lines = Vec::new();
        sampler
            .run(state, 5_000, 25, &mut rng, |s| {
                lines.push(format_record(s));
                Ok(())
            })
            .unwrap();
        lines
    };
    let a = run(4);
    assert_eq!(a.len(), 200);
    assert_eq!(a, run(4));
    assert_ne!(a, run(5));
}

#[test]
fn caches_agree_with_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let cfg = RunConfig::default();
    for _ in 0..4 {
        let d = simulate_dataset(5, &cfg.prior, &mut rng).unwrap();
        let mut sampler = cfg.sampler(d.sequences.clone()).unwrap();
        sampler.audit_every = Some(1);
        let state = sampler.initial_state(&mut rng).unwrap();
        let (end, _) = sampler.run(state, 3_000, 3_000, &mut rng, |_| Ok(())).unwrap();
        assert!(end.audit(&sampler.problem).unwrap() < 1e-8);
    }
}

#[test]
fn acceptance_rates_are_strictly_between_zero_and_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let cfg = RunConfig::default();
    let (mut proposed, mut accepted) = (Vec::new(), Vec::new());
    let mut names = Vec::new();
    let mut datasets = 0;
    while datasets < 4 {
        // Short sequences with a few indels: weak enough signal that topology
        // and node moves are sometimes accepted, with events for the rest.
        let d = simulate_dataset(4, &cfg.prior, &mut rng).unwrap();
        if !((2..=6).contains(&d.history.n_events()) && d.history.root_len() <= 40) {
            continue;
        }
        datasets += 1;
        let sampler = cfg.sampler(d.sequences.clone()).unwrap();
        let state = sampler.initial_state(&mut rng).unwrap();
        let (_, stats) = sampler.run(state, 200_000, 1000, &mut rng, |_| Ok(())).unwrap();
        proposed.resize(stats.names.len(), 0);
        accepted.resize(stats.names.len(), 0);
        for i in 0..stats.names.len() {
            proposed[i] += stats.proposed[i];
            accepted[i] += stats.accepted[i];
        }
        names = stats.names;
    }
    for (i, name) in names.iter().enumerate() {
        assert!(accepted[i] > 0 && accepted[i] < proposed[i], "{name}: {} of {}", accepted[i], proposed[i]);
    }
}

/// Proposes the current state unchanged.
#[derive(Debug)]
struct Stay;

impl Proposal for Stay {
    fn name(&self) -> &str {
        "stay"
    }

    fn category(&self) -> Category {
        Category::Parameters
    }

    fn propose(&self, state: &ChainState, _ctx: &Context, _rng: &mut dyn RngCore) -> histalign::Result<Option<Outcome>> {
        Ok(Some(Outcome {
            tree: state.tree().clone(),
            history: state.history().clone(),
            params: state.params().clone(),
            dirty: Dirty::nothing(),
            ln_forward: 0.0,
            ln_reverse: 0.0,
            ln_jacobian: 0.0,
        }))
    }
}

#[test]
fn an_unchanged_proposal_is_always_accepted() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let cfg = RunConfig::default();
    let d = simulate_dataset(4, &cfg.prior, &mut rng).unwrap();
    let problem = Problem::new(d.sequences.clone(), cfg.prior.clone()).unwrap();
    let mut sampler = Sampler::new(problem, Tuning::default());
    let mut registry = KernelRegistry::empty();
    registry.register(Arc::new(Stay), 1.0).unwrap();
    sampler.registry = registry;
    let mut state = sampler.initial_state(&mut rng).unwrap();
    let mut stats = KernelStats::new(&sampler.registry);
    for _ in 0..100 {
        assert_eq!(sampler.step(&mut state, &mut stats, &mut rng).unwrap(), (0, true));
    }
}

#[test]
fn registry_rejects_unknown_and_duplicate_kernels() {
    let prior = RunConfig::default().prior;
    assert!(KernelRegistry::from_names(&["no_such_kernel"], &prior).is_err());
    let mut reg = KernelRegistry::from_names(&["spr"], &prior).unwrap();
    assert!(reg.register(Arc::new(histalign::proposal::Spr), 1.0).is_err());
    assert!(reg.set_weight("spr", -1.0).is_err());
}
