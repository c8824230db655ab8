use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use histalign::io::report::{
    alignment_ansi, alignment_html, diagnostics_table, fragment_table, parameter_table, split_table, topology_table,
    TRACED,
};
use histalign::io::{
    parse_fasta, read_samples, write_aligned_fasta, write_fasta, write_history, write_newick, RunConfig, SampleLog,
    SampleWriter,
};
use histalign::mcmc::SampleRecord;
use histalign::simulate::simulate_dataset;
use histalign::summary::{
    after_burn_in, annealed_alignment, clade_frequency_diagnostic, fragment_size_posterior, gelman_rubin,
    pair_homology_posteriors, split_indel_stats, topology_split_table,
};
use histalign::validation::{prior_recovery, RecoveryPlan};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "histalign", version, about = "Joint sampling of alignments and trees over indel histories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run chains on a FASTA file.
    Sample(SampleArgs),
    /// Simulate a dataset from the prior.
    Simulate(SimulateArgs),
    /// Summaries and reports from one or more sample logs.
    Summarize(SummarizeArgs),
    /// Prior-recovery check on simulated datasets.
    ValidatePrior(ValidateArgs),
    /// Convergence statistics across runs.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    fasta: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    taxa: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Sample logs; give the flag once per run.
    #[arg(long, required = true)]
    samples: Vec<PathBuf>,
    #[arg(long)]
    burn_in: Option<f64>,
    /// Input sequences; defaults to `sequences.fasta` beside the first log.
    #[arg(long)]
    fasta: Option<PathBuf>,
    #[arg(long)]
    gap_factor: Option<f64>,
    #[arg(long)]
    report_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 100)]
    datasets: usize,
    #[arg(long, default_value_t = 50_000)]
    iters: u64,
    #[arg(long, default_value_t = 4)]
    taxa: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, required = true)]
    samples: Vec<PathBuf>,
    #[arg(long)]
    burn_in: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", p.display()))
        }
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn sample(args: SampleArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(c) = args.chains {
        cfg.chains = c;
    }
    if let Some(n) = args.iters {
        cfg.iterations = n;
    }
    if let Some(t) = args.thin {
        cfg.thin = t;
    }
    if cfg.chains == 0 || cfg.thin == 0 {
        bail!("chains and thin must be positive");
    }
    let text = fs::read_to_string(&args.fasta).with_context(|| format!("reading {}", args.fasta.display()))?;
    let seqs = parse_fasta(&text).with_context(|| format!("in {}", args.fasta.display()))?;
    let sampler = cfg.sampler(seqs.clone())?;
    fs::create_dir_all(&args.out_dir)?;
    write(&args.out_dir, "config.txt", &cfg.to_text())?;
    write(&args.out_dir, "sequences.fasta", &write_fasta(&seqs))?;
    let labels: Vec<String> = seqs.iter().map(|s| s.name.clone()).collect();
    let hash = cfg.hash();
    let results: Vec<Result<String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.chains)
            .map(|k| {
                let (sampler, cfg, labels, hash, dir) = (&sampler, &cfg, &labels, &hash, &args.out_dir);
                scope.spawn(move || -> Result<String> {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(k as u64);
                    let path = dir.join(format!("chain{}.tsv", k + 1));
                    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    let mut out = SampleWriter::new(std::io::BufWriter::new(file), hash, labels)?;
                    let state = sampler.initial_state(&mut rng)?;
                    let (_, stats) = sampler.run(state, cfg.iterations, cfg.thin, &mut rng, |s| out.write(s))?;
                    let mut summary = format!("chain {}: {}\n", k + 1, path.display());
                    for i in 0..stats.names.len() {
                        summary.push_str(&format!(
                            "  {:<14} proposed {:>9}  accepted {:.4}\n",
                            stats.names[i],
                            stats.proposed[i],
                            stats.acceptance_rate(i)
                        ));
                    }
                    Ok(summary)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    for r in results {
        print!("{}", r?);
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = simulate_dataset(args.taxa, &cfg.prior, &mut rng)?;
    fs::create_dir_all(&args.out_dir)?;
    let names: Vec<String> = d.sequences.iter().map(|s| s.name.clone()).collect();
    write(&args.out_dir, "sequences.fasta", &write_fasta(&d.sequences))?;
    write(&args.out_dir, "alignment.fasta", &write_aligned_fasta(&names, &d.alignment.render(&d.sequences)))?;
    write(&args.out_dir, "tree.nwk", &format!("{}\n", write_newick(&d.tree)))?;
    write(&args.out_dir, "history.txt", &format!("{}\n", write_history(&d.history, &d.tree)))?;
    let p = &d.params;
    let params = format!(
        "gamma\t{}\nkappa\t{}\npi\t{}\t{}\t{}\t{}\nr\t{}\ndeletion\t{}\nlambda\t{}\n",
        p.gamma,
        p.subst.kappa,
        p.subst.pi[0],
        p.subst.pi[1],
        p.subst.pi[2],
        p.subst.pi[3],
        p.indel.r,
        p.indel.deletion.spec(),
        p.indel.lambda
    );
    write(&args.out_dir, "params.tsv", &params)?;
    println!(
        "{} taxa, {} alignment columns, {} indel events -> {}",
        args.taxa,
        d.alignment.n_columns(),
        d.history.n_events(),
        args.out_dir.display()
    );
    Ok(())
}

fn read_logs(paths: &[PathBuf]) -> Result<Vec<SampleLog>> {
    let logs: Vec<SampleLog> = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            read_samples(&text).with_context(|| format!("in {}", p.display()))
        })
        .collect::<Result<_>>()?;
    if let Some(first) = logs.first() {
        if let Some(other) = logs.iter().find(|l| l.config_hash != first.config_hash) {
            bail!("runs use different configs ({} vs {})", first.config_hash, other.config_hash);
        }
        if logs.iter().any(|l| l.labels != first.labels) {
            bail!("runs have different taxa");
        }
    }
    Ok(logs)
}

fn kept(logs: &[SampleLog], burn_in: f64) -> Result<Vec<&[SampleRecord]>> {
    logs.iter()
        .map(|l| {
            let k = after_burn_in(&l.records, burn_in)?;
            if k.is_empty() {
                bail!("no samples left after burn-in");
            }
            Ok(k)
        })
        .collect()
}

fn summarize(args: SummarizeArgs) -> Result<()> {
    let logs = read_logs(&args.samples)?;
    let defaults = RunConfig::default();
    let runs = kept(&logs, args.burn_in.unwrap_or(defaults.burn_in))?;
    let pooled: Vec<SampleRecord> = runs.iter().flat_map(|r| r.iter().cloned()).collect();
    let labels: Vec<String> = logs[0].labels.to_vec();
    let fasta = args
        .fasta
        .clone()
        .unwrap_or_else(|| args.samples[0].parent().unwrap_or(Path::new(".")).join("sequences.fasta"));
    let text = fs::read_to_string(&fasta).with_context(|| format!("reading {} (use --fasta)", fasta.display()))?;
    let seqs = parse_fasta(&text)?;
    if seqs.iter().map(|s| &s.name).ne(labels.iter()) {
        bail!("{} does not match the taxa of the sample log", fasta.display());
    }
    fs::create_dir_all(&args.report_dir)?;
    let dir = &args.report_dir;
    write(dir, "parameters.tsv", &parameter_table(&pooled))?;
    let table = topology_split_table(pooled.iter().map(|s| &s.tree))?;
    write(dir, "topologies.tsv", &topology_table(&table, &labels))?;
    write(dir, "splits.tsv", &split_table(&split_indel_stats(&pooled)?, &labels))?;
    write(dir, "fragments.tsv", &fragment_table(&fragment_size_posterior(&pooled)))?;
    let post = pair_homology_posteriors(&pooled)?;
    let annealed = annealed_alignment(&post, args.gap_factor.unwrap_or(defaults.gap_factor));
    write(dir, "alignment.fasta", &write_aligned_fasta(&labels, &annealed.alignment.render(&seqs)))?;
    write(dir, "alignment.html", &alignment_html(&annealed, &seqs))?;
    write(dir, "alignment.ansi", &alignment_ansi(&annealed, &seqs))?;
    if runs.len() >= 2 {
        write(dir, "diagnostics.tsv", &diagnostics(&runs, &labels)?)?;
    }
    println!(
        "{} samples from {} run(s); reports in {}",
        pooled.len(),
        runs.len(),
        dir.display()
    );
    Ok(())
}

fn diagnostics(runs: &[&[SampleRecord]], labels: &[String]) -> Result<String> {
    let n = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    let mut psrf = Vec::new();
    for (name, get) in TRACED {
        let traces: Vec<Vec<f64>> = runs.iter().map(|r| r[r.len() - n..].iter().map(get).collect()).collect();
        if traces.iter().flatten().any(|x| !x.is_finite()) {
            continue;
        }
        let refs: Vec<&[f64]> = traces.iter().map(Vec::as_slice).collect();
        psrf.push((name.to_string(), gelman_rubin(&refs)?));
    }
    let tables = runs
        .iter()
        .map(|r| topology_split_table(r.iter().map(|s| &s.tree)))
        .collect::<Result<Vec<_>, _>>()?;
    let clades = clade_frequency_diagnostic(&tables)?;
    Ok(diagnostics_table(&psrf, &clades, labels))
}

fn diagnose(args: DiagnoseArgs) -> Result<bool> {
    if args.samples.len() < 2 {
        bail!("need ≥2 runs");
    }
    let logs = read_logs(&args.samples)?;
    let runs = kept(&logs, args.burn_in.unwrap_or(RunConfig::default().burn_in))?;
    let labels: Vec<String> = logs[0].labels.to_vec();
    let table = diagnostics(&runs, &labels)?;
    print!("{table}");
    let converged = !table.lines().skip(1).any(|l| !l.ends_with("\tok"));
    println!("{}", if converged { "converged" } else { "not converged" });
    Ok(converged)
}

fn validate(args: ValidateArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let plan = RecoveryPlan::new(args.taxa, args.datasets, args.iters, cfg.seed);
    let report = prior_recovery(&cfg, &plan)?;
    println!("statistic\ttarget\tmean\tse\tz\twithin_3se");
    for s in &report.statistics {
        println!("{}\t{}\t{}\t{}\t{:.3}\t{}", s.name, s.target, s.mean, s.se, s.z(), s.within(3.0));
    }
    let labels: Vec<String> = histalign::simulate::taxon_labels(args.taxa).to_vec();
    println!("topology\ttarget\tmean\tse\tz\twithin_3se");
    for (t, s) in &report.topologies {
        let splits: Vec<String> = t.0.iter().map(|x| x.display(&labels)).collect();
        println!("{}\t{}\t{}\t{}\t{:.3}\t{}", splits.join("; "), s.target, s.mean, s.se, s.z(), s.within(3.0));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => sample(a).map(|_| true),
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Summarize(a) => summarize(a).map(|_| true),
        Command::ValidatePrior(a) => validate(a).map(|_| true),
        Command::Diagnose(a) => diagnose(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
