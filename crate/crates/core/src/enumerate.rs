//! Local enumeration around a seed peptide: short adaptive walks with a chart
//! re-estimated at every step, collecting decoded peptides and their
//! tangent-space mutations.

use std::collections::BTreeSet;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderModel, DEFAULT_EPS_FD};
use crate::error::{GeoError, Result};
use crate::kappa::build_chart;
use crate::mutang::{mutang_with_fd, DEFAULT_CAP, DEFAULT_KAPPA_MUT, DEFAULT_THETA_MUT};
use crate::peptide::Peptide;
use crate::rng::{self, StreamRng};
use crate::walk::{ChartWalker, WalkParams, WalkScheme};

/// Which parts of the procedure are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnumVariant {
    Full,
    /// Naive Gaussian latent steps instead of the chart walk.
    EuclideanWalk,
    MutationDisabled,
    WalkDisabled,
}

impl EnumVariant {
    pub const ALL: [EnumVariant; 4] = [
        EnumVariant::Full,
        EnumVariant::EuclideanWalk,
        EnumVariant::MutationDisabled,
        EnumVariant::WalkDisabled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnumVariant::Full => "full",
            EnumVariant::EuclideanWalk => "euclidean-walk",
            EnumVariant::MutationDisabled => "mutation-disabled",
            EnumVariant::WalkDisabled => "walk-disabled",
        }
    }

    fn walks(self) -> bool {
        self != EnumVariant::WalkDisabled
    }

    fn mutates(self) -> bool {
        self != EnumVariant::MutationDisabled
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumParams {
    #[serde(rename = "kappa_sorbes")]
    pub kappa_walk: f64,
    #[serde(rename = "kappa_mutang")]
    pub kappa_mut: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T_walk")]
    pub t_walk: f64,
    pub eps: f64,
    pub theta_mut: f64,
    pub cap: usize,
    pub alpha: f64,
    pub delta_max: f64,
    pub rho: f64,
    pub radius: f64,
    pub eps_fd: f64,
    pub variant: EnumVariant,
}

impl Default for EnumParams {
    fn default() -> Self {
        EnumParams {
            kappa_walk: 0.01,
            kappa_mut: DEFAULT_KAPPA_MUT,
            m: 10,
            t_walk: 0.1,
            eps: 0.1,
            theta_mut: DEFAULT_THETA_MUT,
            cap: DEFAULT_CAP,
            alpha: 0.99,
            delta_max: 0.5,
            rho: 0.05,
            radius: 1.0,
            eps_fd: DEFAULT_EPS_FD,
            variant: EnumVariant::Full,
        }
    }
}

impl EnumParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kappa_mut", self.kappa_mut),
            ("eps", self.eps),
            ("theta_mut", self.theta_mut),
            ("delta_max", self.delta_max),
            ("rho", self.rho),
            ("radius", self.radius),
            ("eps_fd", self.eps_fd),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(GeoError::invalid(format!("{name} must be > 0")));
            }
        }
        if !(self.kappa_walk >= 0.0) || !(self.t_walk >= 0.0) {
            return Err(GeoError::invalid("kappa_walk and T_walk must be >= 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(GeoError::invalid("alpha must lie in (0, 1)"));
        }
        if self.cap == 0 {
            return Err(GeoError::invalid("cap must be >= 1"));
        }
        Ok(())
    }

    fn walk_params(&self) -> WalkParams {
        WalkParams {
            kappa: self.kappa_walk,
            eps: self.eps,
            t_max: self.t_walk,
            alpha: self.alpha,
            delta_max: self.delta_max,
            rho: self.rho,
            step_max: 1,
            radius: self.radius,
            eps_fd: self.eps_fd,
            scheme: WalkScheme::SecondOrder,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumOutcome {
    pub candidates: BTreeSet<Peptide>,
    /// Walk steps taken by each trajectory.
    pub steps: Vec<usize>,
}

struct Trajectory {
    candidates: BTreeSet<Peptide>,
    steps: usize,
}

fn mutations(model: &DecoderModel, z: &DVector<f64>, p: &EnumParams) -> Result<BTreeSet<Peptide>> {
    mutang_with_fd(model, z, p.kappa_mut, p.theta_mut, p.cap, p.eps_fd)
}

fn trajectory(model: &DecoderModel, z0: &DVector<f64>, p: &EnumParams, rng: &mut StreamRng) -> Result<Trajectory> {
    let mut out = BTreeSet::new();
    if p.variant.mutates() {
        out.extend(mutations(model, z0, p)?);
    }
    let mut steps = 0;
    if !p.variant.walks() {
        return Ok(Trajectory { candidates: out, steps });
    }
    let mut z = z0.clone();
    let mut t = 0.0;
    // A step is taken only while a nominal step still fits in the budget.
    let budget = p.t_walk * (1.0 + 1e-12);
    while t + p.eps * p.eps <= budget {
        let dt = match p.variant {
            EnumVariant::EuclideanWalk => {
                z += DVector::from_fn(z.len(), |_, _| p.eps * rng.sample::<f64, _>(StandardNormal));
                p.eps * p.eps
            }
            _ => {
                let wp = p.walk_params();
                let chart = match build_chart(model, &z, &wp.chart_config()) {
                    Ok(c) => c,
                    Err(GeoError::DegenerateChart { .. }) => break,
                    Err(e) => return Err(e),
                };
                let trace = ChartWalker::new(model, &chart, wp).run_adaptive(rng)?;
                z = trace.last().clone();
                trace.sigma
            }
        };
        if !(dt > 0.0) {
            break;
        }
        t += dt;
        steps += 1;
        out.insert(model.argmax_peptide(&z)?);
        if p.variant.mutates() {
            out.extend(mutations(model, &z, p)?);
        }
    }
    Ok(Trajectory { candidates: out, steps })
}

/// Runs `M` trajectories from the encoding of `p_seed`; trajectory `i` uses
/// the stream `rng::stream(run_seed, i)`.
pub fn local_enumeration_detailed(model: &DecoderModel, p_seed: &Peptide, params: &EnumParams, run_seed: u64) -> Result<EnumOutcome> {
    params.validate()?;
    p_seed.check_length(model.length)?;
    let mut candidates = BTreeSet::from([p_seed.clone()]);
    if params.m == 0 {
        return Ok(EnumOutcome { candidates, steps: vec![] });
    }
    let z0 = model.encode(p_seed)?;
    let runs: Vec<Trajectory> = (0..params.m)
        .into_par_iter()
        .map(|i| trajectory(model, &z0, params, &mut rng::stream(run_seed, i as u64)))
        .collect::<Result<_>>()?;
    let mut steps = Vec::with_capacity(runs.len());
    for r in runs {
        candidates.extend(r.candidates);
        steps.push(r.steps);
    }
    Ok(EnumOutcome { candidates, steps })
}

pub fn local_enumeration(model: &DecoderModel, p_seed: &Peptide, params: &EnumParams, run_seed: u64) -> Result<BTreeSet<Peptide>> {
    Ok(local_enumeration_detailed(model, p_seed, params, run_seed)?.candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::OutputMode;
    use crate::mutang::mutang;

    fn model() -> DecoderModel {
        DecoderModel::random_flat_linear(8, 4, 3, 0.6, OutputMode::Probability)
    }

    fn pep(s: &str) -> Peptide {
        s.parse().unwrap()
    }

    #[test]
    fn zero_trajectories_return_seed() {
        let p = EnumParams { m: 0, ..Default::default() };
        assert_eq!(local_enumeration(&model(), &pep("GT"), &p, 1).unwrap(), BTreeSet::from([pep("GT")]));
    }

    #[test]
    fn short_budget_is_seed_plus_one_mutang_call() {
        let m = model();
        let seed = pep("KLV");
        let p = EnumParams { m: 1, t_walk: 0.005, ..Default::default() };
        let out = local_enumeration_detailed(&m, &seed, &p, 3).unwrap();
        assert_eq!(out.steps, vec![0]);
        let z = m.encode(&seed).unwrap();
        let mut want = mutang(&m, &z, p.kappa_mut, p.theta_mut, p.cap).unwrap();
        want.insert(seed);
        assert_eq!(out.candidates, want);
    }

    #[test]
    fn deterministic_and_growing_in_m() {
        let m = model();
        let seed = pep("KLV");
        let p = EnumParams { m: 3, ..Default::default() };
        let a = local_enumeration(&m, &seed, &p, 11).unwrap();
        let b = local_enumeration(&m, &seed, &p, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.contains(&seed));
        let bigger = local_enumeration(&m, &seed, &EnumParams { m: 4, ..p }, 11).unwrap();
        assert!(bigger.is_superset(&a));
    }

    #[test]
    fn flat_decoder_takes_ten_steps_at_defaults() {
        // Well-conditioned logit-mode linear decoder: steps never shrink.
        let m = DecoderModel::random_flat_linear(2, 3, 2, 1.0, OutputMode::Logit);
        let p = EnumParams { m: 2, radius: 100.0, delta_max: 10.0, ..Default::default() };
        let out = local_enumeration_detailed(&m, &pep("AC"), &p, 5).unwrap();
        assert_eq!(out.steps, vec![10, 10]);
    }

    #[test]
    fn variants_run() {
        let m = model();
        for v in EnumVariant::ALL {
            let p = EnumParams { m: 2, variant: v, ..Default::default() };
            let out = local_enumeration_detailed(&m, &pep("KLV"), &p, 2).unwrap();
            assert!(out.candidates.contains(&pep("KLV")));
            if v == EnumVariant::WalkDisabled {
                assert_eq!(out.steps, vec![0, 0]);
            } else {
                assert!(out.steps.iter().all(|&s| s > 0));
            }
        }
    }
}
