//! Prior-recovery runs. Datasets are simulated from the prior and analysed
//! with the full sampler; averaged over datasets, posterior means must agree
//! with prior means.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::RunConfig;
use crate::mcmc::SampleRecord;
use crate::prior::PriorConfig;
use crate::simulate::simulate_dataset;
use crate::summary::after_burn_in;
use crate::tree::Topology;

/// Size and seeding of a recovery study.
#[derive(Clone, Debug)]
pub struct RecoveryPlan {
    pub n_taxa: usize,
    pub datasets: usize,
    pub iterations: u64,
    pub thin: u64,
    pub seed: u64,
    /// Worker threads; datasets are independent and individually seeded.
    pub threads: usize,
}

impl RecoveryPlan {
    pub fn new(n_taxa: usize, datasets: usize, iterations: u64, seed: u64) -> Self {
        Self {
            n_taxa,
            datasets,
            iterations,
            thin: (iterations / 1000).max(1),
            seed,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// Dataset-averaged posterior mean of one quantity against its target.
#[derive(Clone, Debug, PartialEq)]
pub struct Statistic {
    pub name: String,
    pub target: f64,
    pub mean: f64,
    pub se: f64,
}

impl Statistic {
    fn from_values(name: impl Into<String>, target: f64, xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            name: name.into(),
            target,
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// Distance from the target in standard errors.
    pub fn z(&self) -> f64 {
        (self.mean - self.target) / self.se
    }

    pub fn within(&self, k: f64) -> bool {
        (self.mean - self.target).abs() <= k * self.se
    }
}

#[derive(Clone, Debug)]
pub struct RecoveryReport {
    pub datasets: usize,
    pub statistics: Vec<Statistic>,
    /// Posterior topology frequencies, averaged over datasets, against the
    /// uniform prior. Unvisited topologies are absent.
    pub topologies: Vec<(Topology, Statistic)>,
}

/// Quantities recovered, with prior means. `ln κ` stands in for κ, whose
/// prior mean is infinite.
fn prior_targets(prior: &PriorConfig) -> Vec<(&'static str, f64, fn(&SampleRecord) -> Option<f64>)> {
    let beta_mean = |(a, b): (f64, f64)| a / (a + b);
    let mut out: Vec<(&'static str, f64, fn(&SampleRecord) -> Option<f64>)> = vec![
        ("r", beta_mean(prior.r), |s| Some(s.params.indel.r)),
        ("lambda", 1.0 / prior.alpha_lambda, |s| Some(s.params.indel.lambda)),
        ("ln_kappa", -prior.alpha_kappa.ln(), |s| Some(s.params.subst.kappa.ln())),
        ("ln_gamma", -prior.alpha_gamma.ln(), |s| Some(s.params.gamma.ln())),
    ];
    if prior.is_geometric() {
        out.insert(1, ("rd", beta_mean(prior.rd), |s| s.params.indel.rd()));
    }
    let total: f64 = prior.alpha_pi.iter().sum();
    let pi = |k: usize| prior.alpha_pi[k] / total;
    out.push(("pi_A", pi(0), |s| Some(s.params.subst.pi[0])));
    out.push(("pi_C", pi(1), |s| Some(s.params.subst.pi[1])));
    out.push(("pi_G", pi(2), |s| Some(s.params.subst.pi[2])));
    out.push(("pi_T", pi(3), |s| Some(s.params.subst.pi[3])));
    out
}

struct DatasetResult {
    means: Vec<f64>,
    topologies: BTreeMap<Topology, f64>,
}

fn analyse(cfg: &RunConfig, plan: &RecoveryPlan, index: usize) -> Result<DatasetResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(index as u64);
    let data = simulate_dataset(plan.n_taxa, &cfg.prior, &mut rng)?;
    let sampler = cfg.sampler(data.sequences.clone())?;
    let state = sampler.initial_state(&mut rng)?;
    let mut samples = Vec::new();
    sampler.run(state, plan.iterations, plan.thin, &mut rng, |s| {
        samples.push(s.clone());
        Ok(())
    })?;
    let kept = after_burn_in(&samples, cfg.burn_in)?;
    if kept.is_empty() {
        return Err(Error::inconsistent("no samples left after burn-in"));
    }
    let n = kept.len() as f64;
    let means = prior_targets(&cfg.prior)
        .iter()
        .map(|(_, _, get)| kept.iter().filter_map(get).sum::<f64>() / n)
        .collect();
    let mut topologies = BTreeMap::new();
    for s in kept {
        *topologies.entry(s.tree.topology()).or_insert(0.0) += 1.0 / n;
    }
    Ok(DatasetResult {
        means,
        topologies,
    })
}

/// Runs the study on `plan.threads` workers.
pub fn prior_recovery(cfg: &RunConfig, plan: &RecoveryPlan) -> Result<RecoveryReport> {
    if plan.datasets < 2 {
        return Err(Error::inconsistent("need at least 2 datasets"));
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<DatasetResult>>>> = Mutex::new((0..plan.datasets).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..plan.threads.clamp(1, plan.datasets) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= plan.datasets {
                    break;
                }
                let r = analyse(cfg, plan, i);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let results: Vec<DatasetResult> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every dataset is analysed"))
        .collect::<Result<_>>()?;
    let targets = prior_targets(&cfg.prior);
    let statistics: Vec<Statistic> = targets
        .iter()
        .enumerate()
        .map(|(k, (name, target, _))| {
            let xs: Vec<f64> = results.iter().map(|r| r.means[k]).collect();
            Statistic::from_values(*name, *target, &xs)
        })
        .collect();
    let mut keys: Vec<Topology> = results.iter().flat_map(|r| r.topologies.keys().cloned()).collect();
    keys.sort();
    keys.dedup();
    let uniform = (-crate::tree::ln_topology_count(plan.n_taxa)).exp();
    let topologies = keys
        .into_iter()
        .map(|t| {
            let xs: Vec<f64> = results.iter().map(|r| r.topologies.get(&t).copied().unwrap_or(0.0)).collect();
            let stat = Statistic::from_values("topology", uniform, &xs);
            (t, stat)
        })
        .collect();
    Ok(RecoveryReport {
        datasets: plan.datasets,
        statistics,
        topologies,
    })
}
