//! Bayesian optimization over locally enumerated candidates with a
//! Levenshtein trust region and diversity filtering.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::acquisition::log_ei;
use super::gp::{EvalRecord, GpModel, DEFAULT_NOISE};
use super::levenshtein::within;
use crate::decoder::DecoderModel;
use crate::enumerate::{local_enumeration, EnumParams};
use crate::error::{GeoError, Result};
use crate::peptide::Peptide;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeboParams {
    pub budget: usize,
    pub d_trust: usize,
    pub k_robot: usize,
    pub d_robot: usize,
    pub kernel_variance: f64,
    pub noise: f64,
    #[serde(flatten)]
    pub enumeration: EnumParams,
}

impl Default for LeboParams {
    fn default() -> Self {
        LeboParams {
            budget: 200,
            d_trust: 2,
            k_robot: 3,
            d_robot: 2,
            kernel_variance: 1.0,
            noise: DEFAULT_NOISE,
            enumeration: EnumParams::default(),
        }
    }
}

impl LeboParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_robot == 0 {
            return Err(GeoError::invalid("k_robot must be >= 1"));
        }
        if self.budget < self.k_robot {
            return Err(GeoError::invalid(format!(
                "budget {} is smaller than k_robot {}",
                self.budget, self.k_robot
            )));
        }
        if !(self.kernel_variance > 0.0) || !(self.noise > 0.0) {
            return Err(GeoError::invalid("kernel_variance and noise must be > 0"));
        }
        self.enumeration.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub peptide: Peptide,
    pub oracle_value: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeboOutcome {
    pub best: EvalRecord,
    /// Every oracle evaluation in order; iteration 0 is the seed.
    pub history: Vec<HistoryRow>,
    /// Number of selections made after relaxing the diversity filter.
    pub relaxations: usize,
}

impl LeboOutcome {
    pub fn oracle_calls(&self) -> usize {
        self.history.len()
    }
}

/// Runs the optimization loop for `⌊budget / k_robot⌋` iterations after
/// evaluating the seed. Iteration `i` enumerates with `rng::stream_seed(run_seed, i)`.
pub fn lebo(
    model: &DecoderModel,
    oracle: impl Fn(&Peptide) -> f64,
    p_seed: &Peptide,
    params: &LeboParams,
    run_seed: u64,
) -> Result<LeboOutcome> {
    params.validate()?;
    let seed_value = oracle(p_seed);
    let mut evaluated: Vec<EvalRecord> = vec![EvalRecord::new(p_seed.clone(), seed_value)];
    let mut seen: HashSet<Peptide> = HashSet::from([p_seed.clone()]);
    let mut history = vec![HistoryRow {
        iteration: 0,
        peptide: p_seed.clone(),
        oracle_value: seed_value,
        best_so_far: seed_value,
    }];
    let mut best = evaluated[0].clone();
    let mut current = p_seed.clone();
    let mut running = seed_value;
    let mut pool: BTreeSet<Peptide> = BTreeSet::new();
    // Unevaluated pool members within `d_trust` of the incumbent, kept in step
    // with the pool and rebuilt whenever the incumbent changes.
    let mut trust: BTreeSet<Peptide> = BTreeSet::new();
    let mut relaxations = 0;

    for it in 0..params.budget / params.k_robot {
        let iteration = it + 1;
        for q in local_enumeration(model, &current, &params.enumeration, rng::stream_seed(run_seed, it as u64))? {
            if !seen.contains(&q) && within(&q, &best.peptide, params.d_trust) {
                trust.insert(q.clone());
            }
            pool.insert(q);
        }
        let gp = GpModel::fit(&evaluated, params.kernel_variance, params.noise)?;
        let in_trust: Vec<&Peptide> = trust.iter().collect();
        let scores: Vec<f64> = in_trust.iter().map(|p| log_ei(&gp, p, best.value)).collect();
        let mut open: Vec<bool> = vec![true; in_trust.len()];
        let mut taken: Vec<bool> = vec![false; in_trust.len()];
        let mut round: Vec<EvalRecord> = Vec::new();
        for _ in 0..params.k_robot {
            let pick = |mask: &dyn Fn(usize) -> bool| -> Option<usize> {
                // Candidates are in lexicographic order, so the strict comparison keeps the smallest on ties.
                let mut arg: Option<usize> = None;
                for i in (0..in_trust.len()).filter(|&i| mask(i)) {
                    if arg.is_none_or(|a| scores[i] > scores[a]) {
                        arg = Some(i);
                    }
                }
                arg
            };
            let chosen = match pick(&|i| open[i] && !taken[i]) {
                Some(i) => i,
                None => match pick(&|i| !taken[i]) {
                    Some(i) => {
                        relaxations += 1;
                        i
                    }
                    None => break,
                },
            };
            taken[chosen] = true;
            let p = in_trust[chosen].clone();
            let v = oracle(&p);
            running = running.min(v);
            history.push(HistoryRow {
                iteration,
                peptide: p.clone(),
                oracle_value: v,
                best_so_far: running,
            });
            for (i, q) in in_trust.iter().enumerate() {
                if open[i] && within(q, &p, params.d_robot) {
                    open[i] = false;
                }
            }
            seen.insert(p.clone());
            round.push(EvalRecord::new(p, v));
        }
        for r in &round {
            trust.remove(&r.peptide);
        }
        if let Some(r) = round.iter().min_by(|a, b| a.value.total_cmp(&b.value)) {
            current = r.peptide.clone();
            if r.value < best.value {
                best = r.clone();
                trust = pool
                    .iter()
                    .filter(|q| !seen.contains(*q) && within(q, &best.peptide, params.d_trust))
                    .cloned()
                    .collect();
            }
        }
        evaluated.extend(round);
    }
    Ok(LeboOutcome {
        best,
        history,
        relaxations,
    })
}
