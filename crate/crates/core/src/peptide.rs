//! Residue alphabet and canonical peptide sequences.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};

/// The 20 canonical amino acids in alphabetical one-letter order.
pub const RESIDUES: [char; 20] = [
    'A', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'K', 'L', 'M', 'N', 'P', 'Q', 'R', 'S', 'T', 'V', 'W',
    'Y',
];
pub const PAD_SYMBOL: char = '-';
/// Alphabet size including the pad token.
pub const ALPHABET_SIZE: usize = 21;
/// Pad is always the last alphabet index.
pub const PAD: u8 = 20;

pub struct Alphabet;

impl Alphabet {
    pub fn size() -> usize {
        ALPHABET_SIZE
    }

    pub fn symbol(index: u8) -> char {
        if index == PAD {
            PAD_SYMBOL
        } else {
            RESIDUES[index as usize]
        }
    }

    pub fn index_of(symbol: char) -> Option<u8> {
        if symbol == PAD_SYMBOL {
            return Some(PAD);
        }
        RESIDUES
            .iter()
            .position(|&c| c == symbol.to_ascii_uppercase())
            .map(|i| i as u8)
    }
}

/// A peptide in canonical form: residue indices only, nothing after the first pad.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Peptide(Vec<u8>);

impl Peptide {
    pub fn empty() -> Self {
        Peptide(Vec::new())
    }

    /// Builds a peptide from full-length per-position indices, truncating at the first pad.
    pub fn from_positions(positions: &[u8]) -> Self {
        let end = positions
            .iter()
            .position(|&a| a == PAD)
            .unwrap_or(positions.len());
        Peptide(positions[..end].to_vec())
    }

    pub fn residues(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Residue at `position`, or pad past the end.
    pub fn at(&self, position: usize) -> u8 {
        self.0.get(position).copied().unwrap_or(PAD)
    }

    /// Pads the peptide out to `length` positions.
    pub fn padded(&self, length: usize) -> Vec<u8> {
        (0..length).map(|l| self.at(l)).collect()
    }

    pub fn check_length(&self, max_len: usize) -> Result<()> {
        if self.len() > max_len {
            return Err(GeoError::PeptideTooLong {
                len: self.len(),
                max: max_len,
            });
        }
        Ok(())
    }
}

impl FromStr for Peptide {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        let mut positions = Vec::with_capacity(s.len());
        for c in s.trim().chars() {
            positions.push(Alphabet::index_of(c).ok_or(GeoError::InvalidSymbol(c))?);
        }
        Ok(Peptide::from_positions(&positions))
    }
}

impl TryFrom<String> for Peptide {
    type Error = GeoError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Peptide> for String {
    fn from(p: Peptide) -> String {
        p.to_string()
    }
}

impl fmt::Display for Peptide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &a in &self.0 {
            write!(f, "{}", Alphabet::symbol(a))?;
        }
        Ok(())
    }
}

impl fmt::Debug for Peptide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Peptide({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_is_unique_with_pad_last() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..ALPHABET_SIZE as u8 {
            assert!(seen.insert(Alphabet::symbol(i)));
            assert_eq!(Alphabet::index_of(Alphabet::symbol(i)), Some(i));
        }
        assert_eq!(Alphabet::symbol(PAD), PAD_SYMBOL);
        assert_eq!(PAD as usize, ALPHABET_SIZE - 1);
    }

    #[test]
    fn parsing_truncates_at_first_pad() {
        let p: Peptide = "GT-PK".parse().unwrap();
        assert_eq!(p.to_string(), "GT");
        assert_eq!(p.padded(4), vec![5, 16, PAD, PAD]);
        assert!("-AAA".parse::<Peptide>().unwrap().is_empty());
        assert!("GXZ".parse::<Peptide>().is_err());
    }
}
