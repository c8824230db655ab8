use std::collections::HashSet;
use std::fmt::Write;

use crate::error::ParseError;
use crate::sequence::{Nucleotide, Sequence};

/// Reads FASTA text. The taxon name is the first whitespace-delimited token of
/// the header; residues are case-insensitive `ACGT` and whitespace is ignored.
pub fn parse_fasta(text: &str) -> Result<Vec<Sequence>, ParseError> {
    let err = |msg: String| ParseError::new("FASTA", msg);
    let mut out: Vec<Sequence> = Vec::new();
    let mut seen = HashSet::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if let Some(header) = line.strip_prefix('>') {
            let name = header
                .split_whitespace()
                .next()
                .ok_or_else(|| err("header without a name".into()).at(line_no, 2))?;
            if !seen.insert(name.to_string()) {
                return Err(err(format!("duplicate taxon name {name:?}")).at(line_no, 2));
            }
            out.push(Sequence::new(name, Vec::new()));
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let Some(seq) = out.last_mut() else {
            return Err(err("residues before the first header".into()).at(line_no, 1));
        };
        for (col, c) in line.chars().enumerate() {
            if c.is_whitespace() {
                continue;
            }
            let base = Nucleotide::from_char(c)
                .ok_or_else(|| err(format!("illegal residue {c:?}")).at(line_no, col + 1))?;
            seq.bases.push(base);
        }
    }
    if out.is_empty() {
        return Err(err("no sequences".into()));
    }
    Ok(out)
}

/// Writes sequences with 60 residues per line.
pub fn write_fasta(seqs: &[Sequence]) -> String {
    let mut s = String::new();
    for seq in seqs {
        writeln!(s, ">{}", seq.name).unwrap();
        let bases = seq.to_string_bases();
        for chunk in bases.as_bytes().chunks(60) {
            writeln!(s, "{}", std::str::from_utf8(chunk).unwrap()).unwrap();
        }
    }
    s
}

/// Writes gapped rows of an alignment as FASTA.
pub fn write_aligned_fasta(names: &[String], rows: &[String]) -> String {
    let mut s = String::new();
    for (name, row) in names.iter().zip(rows) {
        writeln!(s, ">{name}\n{row}").unwrap();
    }
    s
}
