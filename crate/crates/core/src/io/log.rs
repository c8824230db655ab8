use std::io::Write;
use std::sync::Arc;

use super::history::{parse_history, write_history};
use super::newick::{parse_newick, write_newick};
use crate::error::{ParseError, Result};
use crate::hky::SubstParams;
use crate::indel::{IndelParams, SizeRegistry};
use crate::mcmc::{EventTally, SampleRecord};
use crate::prior::Params;

/// Column names of the sample log, in order.
pub const COLUMNS: [&str; 18] = [
    "iteration",
    "log_posterior",
    "gamma",
    "kappa",
    "pi_A",
    "pi_C",
    "pi_G",
    "pi_T",
    "r",
    "rd",
    "lambda",
    "deletion",
    "insertions",
    "deletions",
    "mean_insertion_size",
    "mean_deletion_size",
    "tree",
    "history",
];

/// Header lines: format tag, config hash, taxon names, then column names.
pub fn log_header(config_hash: &str, labels: &[String]) -> String {
    format!(
        "# histalign samples v1\n# config_hash\t{config_hash}\n# taxa\t{}\n{}\n",
        labels.join("\t"),
        COLUMNS.join("\t")
    )
}

/// One tab-separated line. The tree is written in canonical orientation and
/// the history relabeled to match.
pub fn format_record(rec: &SampleRecord) -> String {
    let (tree, map) = rec.tree.canonical();
    let history = rec.history.relabeled(&map);
    let p = &rec.params;
    let t = &rec.tally;
    let fields = [
        rec.iteration.to_string(),
        rec.log_posterior.to_string(),
        p.gamma.to_string(),
        p.subst.kappa.to_string(),
        p.subst.pi[0].to_string(),
        p.subst.pi[1].to_string(),
        p.subst.pi[2].to_string(),
        p.subst.pi[3].to_string(),
        p.indel.r.to_string(),
        p.indel.rd().map_or_else(|| "NA".into(), |x| x.to_string()),
        p.indel.lambda.to_string(),
        p.indel.deletion.spec(),
        t.insertions.to_string(),
        t.deletions.to_string(),
        t.mean_insertion_size().to_string(),
        t.mean_deletion_size().to_string(),
        write_newick(&tree),
        write_history(&history, &tree),
    ];
    fields.join("\t")
}

/// Appends records to a log, flushing each line.
pub struct SampleWriter<W: Write> {
    out: W,
}

impl<W: Write> SampleWriter<W> {
    pub fn new(mut out: W, config_hash: &str, labels: &[String]) -> Result<Self> {
        out.write_all(log_header(config_hash, labels).as_bytes())?;
        Ok(Self { out })
    }

    pub fn write(&mut self, rec: &SampleRecord) -> Result<()> {
        writeln!(self.out, "{}", format_record(rec))?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// A parsed sample log.
#[derive(Clone, Debug)]
pub struct SampleLog {
    pub config_hash: String,
    pub labels: Arc<[String]>,
    pub records: Vec<SampleRecord>,
}

fn parse_record(line: &str, line_no: usize, labels: &Arc<[String]>) -> Result<SampleRecord, ParseError> {
    let err = |msg: String| ParseError::new("sample log", msg).at(line_no, 1);
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != COLUMNS.len() {
        return Err(err(format!("{} fields, expected {}", f.len(), COLUMNS.len())));
    }
    let num = |i: usize| -> Result<f64, ParseError> {
        f[i].parse().map_err(|_| err(format!("{}: cannot parse {:?}", COLUMNS[i], f[i])))
    };
    let iteration = f[0].parse().map_err(|_| err(format!("bad iteration {:?}", f[0])))?;
    let located = |mut e: ParseError| {
        e.line = Some(line_no);
        e
    };
    let tree = parse_newick(f[16], Some(labels)).map_err(located)?;
    let history = parse_history(f[17], &tree).map_err(located)?;
    let (kappa, pi) = (num(3)?, [num(4)?, num(5)?, num(6)?, num(7)?]);
    SubstParams::new(kappa, pi).map_err(|e| err(e.to_string()))?;
    // Stored values are already normalized; keep them bit for bit.
    let subst = SubstParams { kappa, pi };
    let deletion = SizeRegistry::default().parse(f[11]).map_err(|e| err(e.to_string()))?;
    let params = Params {
        gamma: num(2)?,
        subst,
        indel: IndelParams {
            r: num(8)?,
            lambda: num(10)?,
            deletion,
        },
    };
    Ok(SampleRecord {
        iteration,
        log_posterior: num(1)?,
        tally: EventTally::of(&history),
        tree,
        history,
        params,
    })
}

/// Reads a log written by [`SampleWriter`].
pub fn read_samples(text: &str) -> Result<SampleLog, ParseError> {
    let err = |line: usize, msg: String| ParseError::new("sample log", msg).at(line, 1);
    let mut config_hash = None;
    let mut labels: Option<Arc<[String]>> = None;
    let mut records = Vec::new();
    let mut saw_columns = false;
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        if let Some(meta) = line.strip_prefix("# ") {
            let mut parts = meta.split('\t');
            match parts.next() {
                Some("config_hash") => config_hash = parts.next().map(str::to_string),
                Some("taxa") => labels = Some(parts.map(str::to_string).collect::<Vec<_>>().into()),
                _ => {}
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !saw_columns {
            if line != COLUMNS.join("\t") {
                return Err(err(line_no, "unexpected column header".into()));
            }
            saw_columns = true;
            continue;
        }
        let labels = labels.as_ref().ok_or_else(|| err(line_no, "taxa line missing".into()))?;
        records.push(parse_record(line, line_no, labels)?);
    }
    Ok(SampleLog {
        config_hash: config_hash.ok_or_else(|| err(1, "config hash missing".into()))?,
        labels: labels.ok_or_else(|| err(1, "taxa line missing".into()))?,
        records,
    })
}
