//! Count fingerprints over contiguous k-mers (k = 1..=3) and the MinMax
//! Tanimoto similarity.

use std::collections::BTreeMap;

use crate::peptide::{Peptide, ALPHABET_SIZE};

pub const MAX_K: usize = 3;

/// Sparse k-mer counts keyed by a collision-free k-mer id.
pub type Fingerprint = BTreeMap<u32, u32>;

fn kmer_id(kmer: &[u8]) -> u32 {
    // Base-(A+1) digits with symbols shifted by one so different k never collide.
    kmer.iter().fold(0u32, |acc, &s| acc * (ALPHABET_SIZE as u32 + 1) + s as u32 + 1)
}

pub fn fingerprint(p: &Peptide) -> Fingerprint {
    let r = p.residues();
    let mut fp = Fingerprint::new();
    for k in 1..=MAX_K.min(r.len()) {
        for w in r.windows(k) {
            *fp.entry(kmer_id(w)).or_insert(0) += 1;
        }
    }
    fp
}

/// `Σ min(a_f, b_f) / Σ max(a_f, b_f)`; two empty fingerprints have similarity 1.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let mut num = 0u64;
    let mut den = 0u64;
    let mut ia = a.iter().peekable();
    let mut ib = b.iter().peekable();
    loop {
        match (ia.peek(), ib.peek()) {
            (Some((ka, &va)), Some((kb, &vb))) => {
                if ka == kb {
                    num += va.min(vb) as u64;
                    den += va.max(vb) as u64;
                    ia.next();
                    ib.next();
                } else if ka < kb {
                    den += va as u64;
                    ia.next();
                } else {
                    den += vb as u64;
                    ib.next();
                }
            }
            (Some((_, &va)), None) => {
                den += va as u64;
                ia.next();
            }
            (None, Some((_, &vb))) => {
                den += vb as u64;
                ib.next();
            }
            (None, None) => break,
        }
    }
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peptide::Alphabet;

    fn fp(s: &str) -> Fingerprint {
        fingerprint(&s.parse().unwrap())
    }

    fn id(s: &str) -> u32 {
        let v: Vec<u8> = s.chars().map(|c| Alphabet::index_of(c).unwrap()).collect();
        kmer_id(&v)
    }

    #[test]
    fn counts_overlapping_kmers() {
        let want: Fingerprint = [("G", 1), ("T", 1), ("P", 1), ("GT", 1), ("TP", 1), ("GTP", 1)]
            .iter()
            .map(|(k, c)| (id(k), *c))
            .collect();
        assert_eq!(fp("GTP"), want);
        let want: Fingerprint = [("A", 3), ("AA", 2), ("AAA", 1)].iter().map(|(k, c)| (id(k), *c)).collect();
        assert_eq!(fp("AAA"), want);
        assert!(fp("").is_empty());
    }

    #[test]
    fn tanimoto_cases() {
        assert_eq!(tanimoto(&fp("GTP"), &fp("GTP")), 1.0);
        assert_eq!(tanimoto(&fp("AA"), &fp("CC")), 0.0);
        assert_eq!(tanimoto(&fp(""), &fp("")), 1.0);
        assert_eq!(tanimoto(&fp(""), &fp("A")), 0.0);
        let a = Fingerprint::from([(7, 2)]);
        let b = Fingerprint::from([(7, 1)]);
        assert_eq!(tanimoto(&a, &b), 0.5);
    }
}
