use std::fmt::Write;

use crate::mcmc::SampleRecord;
use crate::sequence::Sequence;
use crate::summary::{accuracy_level, Annealed, CladeSpread, FragmentSizes, Psrf, SplitIndel, TopologyTable};

/// Continuous parameters traced in reports, with their extractors.
pub const TRACED: [(&str, fn(&SampleRecord) -> f64); 11] = [
    ("log_posterior", |s| s.log_posterior),
    ("gamma", |s| s.params.gamma),
    ("kappa", |s| s.params.subst.kappa),
    ("pi_A", |s| s.params.subst.pi[0]),
    ("pi_C", |s| s.params.subst.pi[1]),
    ("pi_G", |s| s.params.subst.pi[2]),
    ("pi_T", |s| s.params.subst.pi[3]),
    ("r", |s| s.params.indel.r),
    ("rd", |s| s.params.indel.rd().unwrap_or(f64::NAN)),
    ("lambda", |s| s.params.indel.lambda),
    ("tree_length", |s| s.tree.total_length()),
];

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean, s.d. and central 95% interval of every traced parameter.
pub fn parameter_table(samples: &[SampleRecord]) -> String {
    let mut s = String::from("parameter\tmean\tsd\tq2.5\tq97.5\n");
    for (name, get) in TRACED {
        let mut xs: Vec<f64> = samples.iter().map(get).filter(|x| x.is_finite()).collect();
        if xs.is_empty() {
            continue;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        xs.sort_by(f64::total_cmp);
        writeln!(s, "{name}\t{mean}\t{sd}\t{}\t{}", quantile(&xs, 0.025), quantile(&xs, 0.975)).unwrap();
    }
    s
}

pub fn topology_table(table: &TopologyTable, labels: &[String]) -> String {
    let mut s = String::from("probability\tsplits\n");
    for (topo, p) in &table.topologies {
        let splits: Vec<String> = topo.0.iter().map(|x| x.display(labels)).collect();
        writeln!(s, "{p}\t{}", splits.join("; ")).unwrap();
    }
    s
}

pub fn split_table(stats: &[SplitIndel], labels: &[String]) -> String {
    let mut s = String::from("split\tprobability\tmean_events\tmean_length\n");
    for x in stats {
        writeln!(
            s,
            "{}\t{}\t{}\t{}",
            x.split.display(labels),
            x.probability,
            x.mean_events,
            x.mean_length
        )
        .unwrap();
    }
    s
}

pub fn fragment_table(f: &FragmentSizes) -> String {
    let mut s = String::from("size\tprobability\n");
    if f.is_empty() {
        s.push_str("# no events in any sample\n");
    }
    for (k, p) in f.pmf.iter().enumerate().skip(1) {
        if *p > 0.0 {
            writeln!(s, "{k}\t{p}").unwrap();
        }
    }
    s
}

pub fn diagnostics_table(psrf: &[(String, Psrf)], clades: &CladeSpread, labels: &[String]) -> String {
    let mut s = String::from("statistic\tvalue\tstatus\n");
    for (name, r) in psrf {
        let status = if r.degenerate {
            "degenerate"
        } else if r.converged() {
            "ok"
        } else {
            "high"
        };
        writeln!(s, "R[{name}]\t{}\t{status}", r.r).unwrap();
    }
    for (split, spread) in &clades.spreads {
        let status = if *spread < crate::summary::SPREAD_THRESHOLD { "ok" } else { "high" };
        writeln!(s, "spread[{}]\t{spread}\t{status}", split.display(labels)).unwrap();
    }
    s
}

/// Ten-step ramp from red (low accuracy) to blue (high).
const RAMP: [&str; 10] = [
    "#d73027", "#f46d43", "#fdae61", "#fee090", "#ffffbf", "#e0f3f8", "#abd9e9", "#74add1", "#4575b4", "#313695",
];
const ANSI: [u8; 10] = [160, 202, 214, 222, 229, 195, 153, 111, 68, 18];

fn cells<'a>(a: &'a Annealed, seqs: &'a [Sequence]) -> impl Iterator<Item = (usize, Vec<(char, u8)>)> + 'a {
    (0..a.alignment.n_taxa()).map(move |t| {
        let row = a
            .alignment
            .columns()
            .zip(&a.accuracy)
            .map(|(col, acc)| {
                let c = col[t].map_or('-', |i| seqs[t].bases[i as usize].to_char());
                (c, accuracy_level(acc[t]))
            })
            .collect();
        (t, row)
    })
}

/// Alignment colored by per-cell expected accuracy.
pub fn alignment_html(a: &Annealed, seqs: &[Sequence]) -> String {
    let mut s = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><style>pre{font-family:monospace}span{padding:0}</style></head><body><pre>\n",
    );
    let width = seqs.iter().map(|x| x.name.len()).max().unwrap_or(0);
    for (t, row) in cells(a, seqs) {
        write!(s, "{:width$} ", seqs[t].name).unwrap();
        for (c, level) in row {
            write!(s, "<span style=\"background:{}\">{c}</span>", RAMP[level as usize]).unwrap();
        }
        s.push('\n');
    }
    s.push_str("</pre></body></html>\n");
    s
}

/// Same coloring with 256-color terminal escapes.
pub fn alignment_ansi(a: &Annealed, seqs: &[Sequence]) -> String {
    let mut s = String::new();
    let width = seqs.iter().map(|x| x.name.len()).max().unwrap_or(0);
    for (t, row) in cells(a, seqs) {
        write!(s, "{:width$} ", seqs[t].name).unwrap();
        for (c, level) in row {
            write!(s, "\x1b[48;5;{}m{c}", ANSI[level as usize]).unwrap();
        }
        s.push_str("\x1b[0m\n");
    }
    s
}
