//! Tangent-space mutation enumeration.
//!
//! Each retained ambient singular vector of a chart is read as an `L × A`
//! grid of residue sensitivities. Entries above a threshold become admissible
//! substitutions, and the candidate set is the Cartesian product of the
//! per-position residue sets. Positions are 0-indexed.

use std::collections::{BTreeSet, HashSet};

use nalgebra::DVector;
use rand::Rng;

use crate::decoder::{DecoderModel, DEFAULT_EPS_FD};
use crate::error::{GeoError, Result};
use crate::kappa::{build_chart, ChartConfig, KappaChart};
use crate::peptide::{Peptide, ALPHABET_SIZE, PAD};
use crate::rng;

pub const DEFAULT_THETA_MUT: f64 = 0.1;
pub const DEFAULT_KAPPA_MUT: f64 = 1e-6;
pub const DEFAULT_CAP: usize = 4096;

/// Admissible `(position, residue index)` substitutions.
pub type MutationPool = BTreeSet<(usize, u8)>;

/// Per-position admissible residues; each set holds the current residue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionSets {
    pub sets: Vec<BTreeSet<u8>>,
}

impl PositionSets {
    /// `∏ |S_ℓ|`, saturating.
    pub fn product_size(&self) -> u128 {
        self.sets.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128))
    }

    fn digest(&self) -> u64 {
        let mut bytes = Vec::new();
        for s in &self.sets {
            bytes.extend(s.iter().copied());
            bytes.push(u8::MAX);
        }
        rng::fnv1a(&bytes)
    }
}

pub fn mutation_pool(chart: &KappaChart, peptide: &Peptide, theta_mut: f64) -> Result<MutationPool> {
    if !(theta_mut > 0.0) {
        return Err(GeoError::invalid("theta_mut must be > 0"));
    }
    let ambient = chart.u.nrows();
    let length = ambient / ALPHABET_SIZE;
    let mut pool = MutationPool::new();
    for j in 0..chart.k {
        let col = chart.u.column(j);
        for l in 0..length {
            // Beyond the first pad a substitution would leave a non-canonical sequence.
            if l > peptide.len() {
                continue;
            }
            for a in 0..ALPHABET_SIZE {
                if col[l * ALPHABET_SIZE + a].abs() >= theta_mut {
                    pool.insert((l, a as u8));
                }
            }
        }
    }
    Ok(pool)
}

pub fn position_sets(pool: &MutationPool, peptide: &Peptide, length: usize) -> PositionSets {
    let mut sets: Vec<BTreeSet<u8>> = (0..length).map(|l| BTreeSet::from([peptide.at(l)])).collect();
    for &(l, a) in pool {
        if l < length {
            sets[l].insert(a);
        }
    }
    PositionSets { sets }
}

fn positions_at(sets: &[Vec<u8>], mut index: u128) -> Vec<u8> {
    let mut positions = vec![PAD; sets.len()];
    for (l, s) in sets.iter().enumerate().rev() {
        let n = s.len() as u128;
        positions[l] = s[(index % n) as usize];
        index /= n;
    }
    positions
}

fn enumerate_with_identity(lists: &[Vec<u8>], identity: &[u8], total: u128, digest: u64, cap: usize) -> BTreeSet<Peptide> {
    if total <= cap as u128 {
        return (0..total).map(|i| Peptide::from_positions(&positions_at(lists, i))).collect();
    }
    let mut emitted: HashSet<Vec<u8>> = HashSet::from([identity.to_vec()]);
    'singles: for (l, s) in lists.iter().enumerate() {
        for &a in s.iter().filter(|&&a| a != identity[l]) {
            if emitted.len() >= cap {
                break 'singles;
            }
            let mut p = identity.to_vec();
            p[l] = a;
            emitted.insert(p);
        }
    }
    let mut r = rng::seeded(digest);
    while emitted.len() < cap {
        emitted.insert(positions_at(lists, r.random_range(0..total)));
    }
    emitted.iter().map(|p| Peptide::from_positions(p)).collect()
}

/// Cartesian product of the position sets around `peptide`.
///
/// When `∏|S_ℓ|` exceeds `cap`, the identity and all single substitutions are
/// emitted first, and the rest is filled by uniform sampling without
/// replacement from the product, seeded by the sets themselves.
pub fn enumerate_candidates(sets: &PositionSets, peptide: &Peptide, cap: usize) -> Result<BTreeSet<Peptide>> {
    if cap == 0 {
        return Err(GeoError::invalid("cap must be >= 1"));
    }
    let lists: Vec<Vec<u8>> = sets.sets.iter().map(|s| s.iter().copied().collect()).collect();
    let identity = peptide.padded(lists.len());
    let mut out = enumerate_with_identity(&lists, &identity, sets.product_size(), sets.digest(), cap);
    out.insert(peptide.clone());
    Ok(out)
}

/// Full pipeline at latent `z`: chart, pool, position sets, product.
///
/// A degenerate chart yields only the decoded peptide.
pub fn mutang(model: &DecoderModel, z: &DVector<f64>, kappa: f64, theta_mut: f64, cap: usize) -> Result<BTreeSet<Peptide>> {
    mutang_with_fd(model, z, kappa, theta_mut, cap, DEFAULT_EPS_FD)
}

pub fn mutang_with_fd(
    model: &DecoderModel,
    z: &DVector<f64>,
    kappa: f64,
    theta_mut: f64,
    cap: usize,
    eps_fd: f64,
) -> Result<BTreeSet<Peptide>> {
    let peptide = model.argmax_peptide(z)?;
    let cfg = ChartConfig {
        kappa,
        eps_fd,
        ..ChartConfig::default()
    };
    let chart = match build_chart(model, z, &cfg) {
        Ok(c) => c,
        Err(GeoError::DegenerateChart { .. }) => return Ok(BTreeSet::from([peptide])),
        Err(e) => return Err(e),
    };
    if theta_mut.is_infinite() && theta_mut > 0.0 {
        return Ok(BTreeSet::from([peptide]));
    }
    let pool = mutation_pool(&chart, &peptide, theta_mut)?;
    let sets = position_sets(&pool, &peptide, model.length);
    enumerate_candidates(&sets, &peptide, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn pep(s: &str) -> Peptide {
        s.parse().unwrap()
    }

    fn idx(c: char) -> u8 {
        crate::peptide::Alphabet::index_of(c).unwrap()
    }

    fn chart_from_u(u: DMatrix<f64>) -> KappaChart {
        let k = u.ncols();
        KappaChart {
            center: DVector::zeros(k),
            k,
            v: DMatrix::identity(k, k),
            u,
            sigma: DVector::from_element(k, 1.0),
            radius: 1.0,
            kappa: 1e-6,
            alpha: 0.99,
        }
    }

    fn gtp_chart() -> KappaChart {
        // Direction 1 moves T (position 1) toward K, direction 2 moves P (position 2) toward C.
        let mut u = DMatrix::zeros(3 * ALPHABET_SIZE, 2);
        u[(ALPHABET_SIZE + idx('T') as usize, 0)] = -0.7;
        u[(ALPHABET_SIZE + idx('K') as usize, 0)] = 0.7;
        u[(2 * ALPHABET_SIZE + idx('P') as usize, 1)] = -0.7;
        u[(2 * ALPHABET_SIZE + idx('C') as usize, 1)] = 0.7;
        chart_from_u(u)
    }

    #[test]
    fn gtp_pool_and_product() {
        let p = pep("GTP");
        let pool = mutation_pool(&gtp_chart(), &p, 0.1).unwrap();
        assert!(pool.contains(&(1, idx('K'))));
        assert!(pool.contains(&(2, idx('C'))));
        let sets = position_sets(&pool, &p, 3);
        assert_eq!(sets.product_size(), 4);
        let c = enumerate_candidates(&sets, &p, 4096).unwrap();
        let want: BTreeSet<Peptide> = ["GTP", "GKP", "GTC", "GKC"].iter().map(|s| pep(s)).collect();
        assert_eq!(c, want);
    }

    #[test]
    fn threshold_above_all_entries_gives_empty_pool() {
        assert!(mutation_pool(&gtp_chart(), &pep("GTP"), 0.71).unwrap().is_empty());
    }

    #[test]
    fn threshold_is_inclusive() {
        let pool = mutation_pool(&gtp_chart(), &pep("GTP"), 0.7).unwrap();
        assert_eq!(pool.len(), 4);
    }

    #[test]
    fn empty_pool_gives_identity_sets() {
        let p = pep("GTP");
        let sets = position_sets(&MutationPool::new(), &p, 3);
        let singles: Vec<BTreeSet<u8>> = "GTP".chars().map(|c| BTreeSet::from([idx(c)])).collect();
        assert_eq!(sets.sets, singles);
        assert_eq!(enumerate_candidates(&sets, &p, 10).unwrap(), BTreeSet::from([p]));
    }

    #[test]
    fn duplicate_entries_collapse() {
        let mut u = DMatrix::zeros(3 * ALPHABET_SIZE, 2);
        u[(ALPHABET_SIZE + idx('K') as usize, 0)] = 0.9;
        u[(ALPHABET_SIZE + idx('K') as usize, 1)] = 0.9;
        let pool = mutation_pool(&chart_from_u(u), &pep("GTP"), 0.1).unwrap();
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn positions_past_first_pad_are_dropped() {
        let mut u = DMatrix::zeros(4 * ALPHABET_SIZE, 1);
        u[(2 * ALPHABET_SIZE + idx('A') as usize, 0)] = 0.5;
        u[(3 * ALPHABET_SIZE + idx('A') as usize, 0)] = 0.5;
        let pool = mutation_pool(&chart_from_u(u), &pep("G"), 0.1).unwrap();
        assert!(pool.is_empty());
        let pool = mutation_pool(&chart_from_u(DMatrix::from_fn(4 * ALPHABET_SIZE, 1, |r, _| if r == ALPHABET_SIZE { 0.5 } else { 0.0 })), &pep("G"), 0.1).unwrap();
        assert_eq!(pool, MutationPool::from([(1, 0)]));
    }

    #[test]
    fn capped_enumeration_keeps_singles_and_is_deterministic() {
        let p = pep("AAAAAA");
        let sets = PositionSets {
            sets: (0..6).map(|_| (0u8..5).collect()).collect(),
        };
        let cap = 40;
        let a = enumerate_candidates(&sets, &p, cap).unwrap();
        let b = enumerate_candidates(&sets, &p, cap).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), cap);
        assert!(a.contains(&p));
        for l in 0..6 {
            for r in 1u8..5 {
                let mut q = p.padded(6);
                q[l] = r;
                assert!(a.contains(&Peptide::from_positions(&q)));
            }
        }
    }

    #[test]
    fn infinite_threshold_returns_decoded_peptide() {
        let m = DecoderModel::random_toy_mlp(3, 3, 6, 3, 1.0);
        let z = DVector::from_vec(vec![0.2, -0.1, 0.4]);
        let p = m.argmax_peptide(&z).unwrap();
        assert_eq!(mutang(&m, &z, 1e-6, f64::INFINITY, 4096).unwrap(), BTreeSet::from([p]));
    }

    #[test]
    fn degenerate_chart_returns_decoded_peptide() {
        let m = DecoderModel::constant(3, 2);
        let z = DVector::zeros(3);
        let out = mutang(&m, &z, 1e-6, 0.1, 4096).unwrap();
        assert_eq!(out, BTreeSet::from([m.argmax_peptide(&z).unwrap()]));
    }
}
