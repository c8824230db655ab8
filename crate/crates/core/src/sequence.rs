//! Nucleotide sequences over the plain `ACGT` alphabet.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Nucleotide {
    A = 0,
    C = 1,
    G = 2,
    T = 3,
}

impl Nucleotide {
    pub const ALL: [Nucleotide; 4] = [Nucleotide::A, Nucleotide::C, Nucleotide::G, Nucleotide::T];

    /// Case-insensitive; anything outside `ACGT` is rejected.
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Nucleotide::A),
            'C' => Some(Nucleotide::C),
            'G' => Some(Nucleotide::G),
            'T' => Some(Nucleotide::T),
            _ => None,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn to_char(self) -> char {
        match self {
            Nucleotide::A => 'A',
            Nucleotide::C => 'C',
            Nucleotide::G => 'G',
            Nucleotide::T => 'T',
        }
    }

    pub fn is_purine(self) -> bool {
        matches!(self, Nucleotide::A | Nucleotide::G)
    }
}

impl fmt::Display for Nucleotide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

/// A named, ungapped DNA sequence. A sequence of length `n` has `n + 1`
/// positions `0..=n`; base `i` (1-based) sits between positions `i - 1` and `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence {
    pub name: String,
    pub bases: Vec<Nucleotide>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, bases: Vec<Nucleotide>) -> Self {
        Self {
            name: name.into(),
            bases,
        }
    }

    pub fn from_str(name: impl Into<String>, text: &str) -> Result<Self> {
        let name = name.into();
        let bases = text
            .chars()
            .enumerate()
            .map(|(i, c)| {
                Nucleotide::from_char(c).ok_or_else(|| {
                    Error::domain(format!("sequence {name}: illegal residue {c:?} at offset {i}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { name, bases })
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn to_string_bases(&self) -> String {
        self.bases.iter().map(|b| b.to_char()).collect()
    }
}
