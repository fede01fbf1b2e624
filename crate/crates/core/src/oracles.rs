//! Synthetic potentials over decoder logits and black-box sequence oracles,
//! with exhaustive and greedy reference optimizers.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::peptide::{Peptide, ALPHABET_SIZE, PAD};
use crate::rng::{self, StreamRng};
use crate::surrogate::gp::EvalRecord;
use crate::surrogate::levenshtein;

/// Exhaustive searches refuse spaces larger than this.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000;

fn row_softmax(logits: &DVector<f64>, length: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(length, ALPHABET_SIZE);
    for l in 0..length {
        let row = &logits.as_slice()[l * ALPHABET_SIZE..(l + 1) * ALPHABET_SIZE];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|x| (x - m).exp()).sum();
        for (a, x) in row.iter().enumerate() {
            p[(l, a)] = (x - m).exp() / s;
        }
    }
    p
}

/// Differentiable potential over flattened `L × A` logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticPotential {
    /// `Φ = Σ w_{ℓa} softmax_row(X)_{ℓa}`.
    LinearResidueScore { length: usize, weights: Vec<Vec<f64>> },
    /// `Φ = base − gain Σ_s Π_j softmax_row(X)_{s+j, motif_j}` over all motif offsets.
    SmoothMotif {
        length: usize,
        motif: Peptide,
        base: f64,
        gain: f64,
    },
}

impl SyntheticPotential {
    /// Random linear scores `w = offset + scale·N(0,1)`; pad entries get `pad_weight`.
    pub fn random_linear(seed: u64, length: usize, offset: f64, scale: f64, pad_weight: f64) -> Self {
        let mut r = rng::seeded(seed);
        let weights = (0..length)
            .map(|_| {
                (0..ALPHABET_SIZE)
                    .map(|a| {
                        let g: f64 = r.sample(StandardNormal);
                        if a == PAD as usize {
                            pad_weight
                        } else {
                            offset + scale * g
                        }
                    })
                    .collect()
            })
            .collect();
        SyntheticPotential::LinearResidueScore { length, weights }
    }

    /// Seeded instance of a named kind. Both kinds sit around `length` on
    /// typical peptides, so a threshold of 5 marks roughly the best tenth.
    pub fn synthetic(kind: &str, seed: u64, length: usize) -> Result<Self> {
        match kind {
            "linear-residue-score" => Ok(Self::random_linear(seed, length, 1.0, 1.0, 1.0)),
            "smooth-motif" => {
                let mut r = rng::seeded(seed);
                let motif: Vec<u8> = (0..length.min(3)).map(|_| r.random_range(0..PAD)).collect();
                Ok(SyntheticPotential::SmoothMotif {
                    length,
                    motif: Peptide::from_positions(&motif),
                    base: length as f64,
                    gain: length as f64,
                })
            }
            other => Err(GeoError::invalid(format!("unknown potential kind `{other}`"))),
        }
    }

    pub fn length(&self) -> usize {
        match self {
            SyntheticPotential::LinearResidueScore { length, .. } | SyntheticPotential::SmoothMotif { length, .. } => *length,
        }
    }

    fn check(&self, logits: &DVector<f64>) -> Result<()> {
        let want = self.length() * ALPHABET_SIZE;
        if logits.len() != want {
            return Err(GeoError::DimensionMismatch {
                expected: want,
                actual: logits.len(),
            });
        }
        Ok(())
    }

    /// Value and gradient with respect to the row probabilities.
    fn on_probs(&self, p: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        match self {
            SyntheticPotential::LinearResidueScore { weights, .. } => {
                let w = DMatrix::from_fn(p.nrows(), ALPHABET_SIZE, |l, a| weights[l][a]);
                (w.component_mul(p).sum(), w)
            }
            SyntheticPotential::SmoothMotif { motif, base, gain, .. } => {
                let m = motif.residues();
                let length = p.nrows();
                let mut value = *base;
                let mut grad = DMatrix::zeros(length, ALPHABET_SIZE);
                if m.is_empty() || m.len() > length {
                    return (value, grad);
                }
                for s in 0..=length - m.len() {
                    let factors: Vec<f64> = m.iter().enumerate().map(|(j, &a)| p[(s + j, a as usize)]).collect();
                    value -= gain * factors.iter().product::<f64>();
                    for j in 0..m.len() {
                        let others: f64 = factors.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, f)| f).product();
                        grad[(s + j, m[j] as usize)] -= gain * others;
                    }
                }
                (value, grad)
            }
        }
    }

    pub fn eval(&self, logits: &DVector<f64>) -> Result<f64> {
        self.check(logits)?;
        let v = self.on_probs(&row_softmax(logits, self.length())).0;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(GeoError::NonFinite("potential"))
        }
    }

    pub fn grad(&self, logits: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.eval_grad(logits)?.1)
    }

    pub fn eval_grad(&self, logits: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check(logits)?;
        let p = row_softmax(logits, self.length());
        let (v, g) = self.on_probs(&p);
        if !v.is_finite() {
            return Err(GeoError::NonFinite("potential"));
        }
        let mut out = DVector::zeros(logits.len());
        for l in 0..p.nrows() {
            let dot: f64 = (0..ALPHABET_SIZE).map(|a| g[(l, a)] * p[(l, a)]).sum();
            for a in 0..ALPHABET_SIZE {
                out[l * ALPHABET_SIZE + a] = p[(l, a)] * (g[(l, a)] - dot);
            }
        }
        Ok((v, out))
    }

    /// Potential of a discrete peptide, evaluated on its exact one-hot rows.
    pub fn eval_peptide(&self, peptide: &Peptide) -> f64 {
        let length = self.length();
        let mut p = DMatrix::zeros(length, ALPHABET_SIZE);
        for (l, a) in peptide.padded(length).into_iter().enumerate() {
            p[(l, a as usize)] = 1.0;
        }
        self.on_probs(&p).0
    }
}

/// Black-box objective over peptides, to be minimized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SequenceOracle {
    HiddenTargetEdit { target: Peptide },
    /// `Σ_{ℓ < len} w_{ℓ, p_ℓ}`.
    WeightedResidue { weights: Vec<Vec<f64>> },
    /// Separable residue weights plus pairwise motif terms: each pair earns
    /// `−bonus` when both residues are present and `+penalty` when exactly one is.
    MotifBonus { weights: Vec<Vec<f64>>, pairs: Vec<MotifPair> },
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotifPair {
    pub first: (usize, u8),
    pub second: (usize, u8),
    pub bonus: f64,
    pub penalty: f64,
}

fn residue_weight(weights: &[Vec<f64>], p: &Peptide) -> f64 {
    p.residues()
        .iter()
        .enumerate()
        .map(|(l, &a)| weights.get(l).map_or(0.0, |row| row[a as usize]))
        .sum()
}

impl SequenceOracle {
    pub fn eval(&self, p: &Peptide) -> f64 {
        match self {
            SequenceOracle::HiddenTargetEdit { target } => levenshtein(p, target) as f64,
            SequenceOracle::WeightedResidue { weights } => residue_weight(weights, p),
            SequenceOracle::MotifBonus { weights, pairs } => {
                let mut v = residue_weight(weights, p);
                for pair in pairs {
                    let a = p.at(pair.first.0) == pair.first.1;
                    let b = p.at(pair.second.0) == pair.second.1;
                    if a && b {
                        v -= pair.bonus;
                    } else if a || b {
                        v += pair.penalty;
                    }
                }
                v
            }
            SequenceOracle::Constant { value } => *value,
        }
    }

    /// Seeded instance of a named kind for peptides of maximum length `length`.
    pub fn synthetic(kind: &str, seed: u64, length: usize) -> Result<Self> {
        let mut r = rng::seeded(seed);
        let weights = |r: &mut StreamRng| -> Vec<Vec<f64>> {
            (0..length)
                .map(|_| (0..ALPHABET_SIZE).map(|_| r.sample::<f64, _>(StandardNormal)).collect())
                .collect()
        };
        Ok(match kind {
            "hidden-target-edit" => {
                let target: Vec<u8> = (0..length).map(|_| r.random_range(0..PAD)).collect();
                SequenceOracle::HiddenTargetEdit {
                    target: Peptide::from_positions(&target),
                }
            }
            "weighted-residue" => SequenceOracle::WeightedResidue { weights: weights(&mut r) },
            "motif-bonus" => {
                // A residue preference shared by all positions plus small positional
                // noise; the negative offset makes every added residue slightly favourable.
                let shared: Vec<f64> = (0..ALPHABET_SIZE).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                let w: Vec<Vec<f64>> = (0..length)
                    .map(|_| {
                        (0..ALPHABET_SIZE)
                            .map(|a| shared[a] - 0.3 + 0.1 * r.sample::<f64, _>(StandardNormal))
                            .collect()
                    })
                    .collect();
                let mut pairs = Vec::new();
                for l in (0..length.saturating_sub(1)).step_by(2) {
                    pairs.push(MotifPair {
                        first: (l, r.random_range(0..PAD)),
                        second: (l + 1, r.random_range(0..PAD)),
                        bonus: 6.0,
                        penalty: 3.0,
                    });
                }
                SequenceOracle::MotifBonus { weights: w, pairs }
            }
            "constant" => SequenceOracle::Constant { value: 0.0 },
            other => return Err(GeoError::invalid(format!("unknown oracle kind `{other}`"))),
        })
    }
}

/// Parsed `synthetic:<kind>:<seed>` reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticRef {
    pub kind: String,
    pub seed: u64,
}

impl FromStr for SyntheticRef {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["synthetic", kind, seed] if !kind.is_empty() => Ok(SyntheticRef {
                kind: kind.to_string(),
                seed: seed
                    .parse()
                    .map_err(|_| GeoError::invalid(format!("bad seed in `{s}`")))?,
            }),
            _ => Err(GeoError::invalid(format!("expected synthetic:<kind>:<seed>, got `{s}`"))),
        }
    }
}

/// Exhaustive minimum over all peptides of length `0..=max_len` drawn from
/// `alphabet`; ties keep the first in (length, lexicographic index) order.
pub fn brute_force_min(oracle: impl Fn(&Peptide) -> f64, alphabet: &[u8], max_len: usize) -> Result<(Peptide, f64)> {
    if alphabet.is_empty() || alphabet.iter().any(|&a| a >= PAD) {
        return Err(GeoError::invalid("alphabet must be a nonempty set of residues"));
    }
    let n = alphabet.len() as u128;
    let size = (0..=max_len as u32).fold(0u128, |acc, k| acc.saturating_add(n.saturating_pow(k)));
    if size > BRUTE_FORCE_CAP {
        return Err(GeoError::SearchSpaceTooLarge(size));
    }
    let mut best = (Peptide::empty(), oracle(&Peptide::empty()));
    for len in 1..=max_len {
        let count = n.pow(len as u32);
        for mut idx in 0..count {
            let mut pos = vec![0u8; len];
            for slot in pos.iter_mut().rev() {
                *slot = alphabet[(idx % n) as usize];
                idx /= n;
            }
            let p = Peptide::from_positions(&pos);
            let v = oracle(&p);
            if v < best.1 {
                best = (p, v);
            }
        }
    }
    Ok(best)
}

/// Greedy random-substitution baseline: each of `budget` calls evaluates one
/// uniformly random single substitution (position uniform over the current
/// sequence, residue uniform over the other members of `alphabet`) and keeps it
/// only on strict improvement. The seed evaluation is not counted.
pub fn random_mutation_baseline<R: Rng + ?Sized>(
    oracle: impl Fn(&Peptide) -> f64,
    p_seed: &Peptide,
    budget: usize,
    alphabet: &[u8],
    rng: &mut R,
) -> (EvalRecord, Vec<EvalRecord>) {
    let mut best = EvalRecord::new(p_seed.clone(), oracle(p_seed));
    let mut history = vec![best.clone()];
    if p_seed.is_empty() || alphabet.len() < 2 {
        return (best, history);
    }
    for _ in 0..budget {
        let mut pos = best.peptide.residues().to_vec();
        let l = rng.random_range(0..pos.len());
        let choices: Vec<u8> = alphabet.iter().copied().filter(|&a| a != pos[l]).collect();
        pos[l] = choices[rng.random_range(0..choices.len())];
        let cand = Peptide::from_positions(&pos);
        let v = oracle(&cand);
        history.push(EvalRecord::new(cand.clone(), v));
        if v < best.value {
            best = EvalRecord::new(cand, v);
        }
    }
    (best, history)
}

pub fn residue_alphabet() -> Vec<u8> {
    (0..PAD).collect()
}
