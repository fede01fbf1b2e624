use crate::peptide::Peptide;

/// Unit-cost edit distance between residue strings.
pub fn levenshtein(p: &Peptide, q: &Peptide) -> usize {
    let (a, b) = (p.residues(), q.residues());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Whether `levenshtein(p, q) <= k`, abandoning the table once every entry of
/// a row exceeds `k`.
pub fn within(p: &Peptide, q: &Peptide, k: usize) -> bool {
    let (a, b) = (p.residues(), q.residues());
    if a.len().abs_diff(b.len()) > k {
        return false;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min > k {
            return false;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] <= k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lev(a: &str, b: &str) -> usize {
        levenshtein(&a.parse().unwrap(), &b.parse().unwrap())
    }

    #[test]
    fn small_cases() {
        assert_eq!(lev("GTP", "GTP"), 0);
        assert_eq!(lev("GTP", "GKP"), 1);
        assert_eq!(lev("", "GKP"), 3);
        assert_eq!(lev("KITTEN", "SITTING"), 3);
        assert_eq!(lev("AC", "CA"), 2);
    }

    #[test]
    fn within_agrees_with_distance() {
        let words = ["", "A", "GTP", "GKP", "KITTEN", "SITTING", "AC", "CA", "GTPGTP", "PTG"];
        for a in words {
            for b in words {
                let (p, q) = (a.parse().unwrap(), b.parse().unwrap());
                for k in 0..5 {
                    assert_eq!(within(&p, &q, k), levenshtein(&p, &q) <= k, "{a} {b} {k}");
                }
            }
        }
    }
}
