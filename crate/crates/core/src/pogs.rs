//! Potential-augmented geodesic search between two latent prototypes.
//!
//! A path is a list of waypoints `z_0..z_N` with pinned endpoints. Its energy
//! is the sum of squared ambient chords in log space, plus `λ` times the
//! potential summed over all waypoints, plus `µ` times the squared latent
//! chords. Interior waypoints are optimized with Adam and decoupled weight
//! decay under a plateau learning-rate schedule.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::decoder::DecoderModel;
use crate::error::{GeoError, Result};
use crate::oracles::SyntheticPotential;
use crate::peptide::Peptide;

pub const FD_POTENTIAL_STEP: f64 = 1e-3;

/// A scalar potential over log-space decoder outputs.
pub trait Potential: Sync {
    fn value(&self, x: &DVector<f64>) -> Result<f64>;

    /// Central differences with step [`FD_POTENTIAL_STEP`] unless overridden.
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(x.len());
        let mut probe = x.clone();
        for i in 0..x.len() {
            probe[i] = x[i] + FD_POTENTIAL_STEP;
            let up = self.value(&probe)?;
            probe[i] = x[i] - FD_POTENTIAL_STEP;
            let down = self.value(&probe)?;
            probe[i] = x[i];
            g[i] = (up - down) / (2.0 * FD_POTENTIAL_STEP);
        }
        Ok(g)
    }

    fn value_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        Ok((self.value(x)?, self.gradient(x)?))
    }

    /// Potential of a discrete peptide.
    fn on_peptide(&self, p: &Peptide) -> f64;
}

impl Potential for SyntheticPotential {
    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.eval(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.grad(x)
    }

    fn value_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.eval_grad(x)
    }

    fn on_peptide(&self, p: &Peptide) -> f64 {
        self.eval_peptide(p)
    }
}

/// The zero potential, for pure geodesic runs.
pub struct NoPotential;

impl Potential for NoPotential {
    fn value(&self, _: &DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(x.len()))
    }

    fn on_peptide(&self, _: &Peptide) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPath {
    pub waypoints: Vec<DVector<f64>>,
    pub lambda: f64,
    pub mu: f64,
}

impl GeodesicPath {
    /// Number of segments `N`.
    pub fn segments(&self) -> usize {
        self.waypoints.len() - 1
    }
}

/// Straight-line path with `N = max(1, ⌊density·‖z_b − z_a‖⌋)` segments.
pub fn init_path(z_a: &DVector<f64>, z_b: &DVector<f64>, density: f64, lambda: f64, mu: f64) -> Result<GeodesicPath> {
    if z_a.len() != z_b.len() {
        return Err(GeoError::DimensionMismatch {
            expected: z_a.len(),
            actual: z_b.len(),
        });
    }
    if !(density > 0.0) || !(lambda >= 0.0) || !(mu >= 0.0) {
        return Err(GeoError::invalid("density must be > 0 and lambda, mu >= 0"));
    }
    let dist = (z_b - z_a).norm();
    let n = ((density * dist) * (1.0 + 1e-12)).floor().max(1.0) as usize;
    let waypoints = (0..=n)
        .map(|k| {
            if k == n {
                z_b.clone()
            } else {
                z_a + (z_b - z_a) * (k as f64 / n as f64)
            }
        })
        .collect();
    Ok(GeodesicPath { waypoints, lambda, mu })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub total: f64,
    pub kinetic: f64,
    pub potential_term: f64,
    pub latent_reg: f64,
}

fn ambient(model: &DecoderModel, path: &GeodesicPath) -> Result<Vec<DVector<f64>>> {
    path.waypoints.iter().map(|z| model.log_space(z)).collect()
}

fn energy_from(path: &GeodesicPath, xs: &[DVector<f64>], potential: &dyn Potential) -> Result<EnergyTerms> {
    let values = xs.iter().map(|x| potential.value(x)).collect::<Result<Vec<_>>>()?;
    terms_from(path, xs, &values)
}

fn terms_from(path: &GeodesicPath, xs: &[DVector<f64>], potentials: &[f64]) -> Result<EnergyTerms> {
    let kinetic: f64 = xs.windows(2).map(|w| (&w[1] - &w[0]).norm_squared()).sum();
    let latent_reg: f64 = path.waypoints.windows(2).map(|w| (&w[1] - &w[0]).norm_squared()).sum();
    let potential_term: f64 = potentials.iter().sum();
    let total = kinetic + path.lambda * potential_term + path.mu * latent_reg;
    if total.is_finite() {
        Ok(EnergyTerms {
            total,
            kinetic,
            potential_term,
            latent_reg,
        })
    } else {
        Err(GeoError::NonFinite("path energy"))
    }
}

pub fn path_energy(model: &DecoderModel, path: &GeodesicPath, potential: &dyn Potential) -> Result<EnergyTerms> {
    energy_from(path, &ambient(model, path)?, potential)
}

/// Energy and its gradient with respect to every waypoint (endpoint entries are zero).
pub fn path_energy_grad(model: &DecoderModel, path: &GeodesicPath, potential: &dyn Potential) -> Result<(EnergyTerms, Vec<DVector<f64>>)> {
    let lins = path.waypoints.iter().map(|z| model.linearize(z)).collect::<Result<Vec<_>>>()?;
    let xs: Vec<DVector<f64>> = lins.iter().map(|l| l.x.clone()).collect();
    let n = path.segments();
    let zs = &path.waypoints;
    let mut values = Vec::with_capacity(n + 1);
    let mut pot_grads = Vec::with_capacity(n + 1);
    for (k, x) in xs.iter().enumerate() {
        if path.lambda != 0.0 && k > 0 && k < n {
            let (v, g) = potential.value_gradient(x)?;
            values.push(v);
            pot_grads.push(Some(g));
        } else {
            values.push(potential.value(x)?);
            pot_grads.push(None);
        }
    }
    let terms = terms_from(path, &xs, &values)?;
    let mut grads = vec![DVector::zeros(zs[0].len()); n + 1];
    for k in 1..n {
        let mut gx = (&xs[k] - &xs[k - 1]) * 2.0 - (&xs[k + 1] - &xs[k]) * 2.0;
        if let Some(g) = &pot_grads[k] {
            gx += g * path.lambda;
        }
        let mut gz = model.linearized_vjp(&lins[k], &gx);
        if path.mu != 0.0 {
            gz += ((&zs[k] - &zs[k - 1]) * 2.0 - (&zs[k + 1] - &zs[k]) * 2.0) * path.mu;
        }
        grads[k] = gz;
    }
    Ok((terms, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub lr_factor: f64,
    pub max_steps: usize,
    /// Relative improvement below which a step counts as a plateau step.
    pub threshold: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 1e-3,
            weight_decay: 1e-5,
            patience: 50,
            lr_factor: 0.8,
            max_steps: 2000,
            threshold: 1e-6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) || !(self.threshold >= 0.0) {
            return Err(GeoError::invalid("invalid optimizer configuration"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    /// Lowest-energy iterate seen.
    pub path: GeodesicPath,
    /// Total energy before each step, followed by the final energy.
    pub trace: Vec<f64>,
    pub aborted: bool,
}

pub fn optimize_path(model: &DecoderModel, path: &GeodesicPath, potential: &dyn Potential, cfg: &OptimizerConfig) -> Result<Optimized> {
    cfg.validate()?;
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let n = path.segments();
    let d = path.waypoints[0].len();
    let mut cur = path.clone();
    let mut m = vec![DVector::<f64>::zeros(d); n + 1];
    let mut v = vec![DVector::<f64>::zeros(d); n + 1];
    let mut lr = cfg.lr;
    let (first, grads) = path_energy_grad(model, &cur, potential)?;
    let mut best = cur.clone();
    let mut best_energy = first.total;
    let mut plateau_ref = first.total;
    let mut bad = 0usize;
    let mut trace = vec![first.total];
    let mut grads = grads;
    let mut aborted = false;
    for t in 1..=cfg.max_steps {
        if n < 2 {
            break;
        }
        let bc1 = 1.0 - f64::powi(b1, t as i32);
        let bc2 = 1.0 - f64::powi(b2, t as i32);
        for k in 1..n {
            let g = &grads[k];
            m[k] = &m[k] * b1 + g * (1.0 - b1);
            v[k] = &v[k] * b2 + g.component_mul(g) * (1.0 - b2);
            let z = &mut cur.waypoints[k];
            *z *= 1.0 - lr * cfg.weight_decay;
            for i in 0..d {
                z[i] -= lr * (m[k][i] / bc1) / ((v[k][i] / bc2).sqrt() + eps);
            }
        }
        let (terms, g) = match path_energy_grad(model, &cur, potential) {
            Ok(r) => r,
            Err(e) if e.is_numeric() => {
                aborted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        grads = g;
        trace.push(terms.total);
        if terms.total < best_energy {
            best_energy = terms.total;
            best = cur.clone();
        }
        if terms.total < plateau_ref - cfg.threshold * plateau_ref.abs() {
            plateau_ref = terms.total;
            bad = 0;
        } else {
            bad += 1;
            if bad > cfg.patience {
                lr *= cfg.lr_factor;
                bad = 0;
            }
        }
    }
    Ok(Optimized { path: best, trace, aborted })
}

/// Argmax peptides of the waypoints with consecutive duplicates collapsed.
pub fn decode_path(model: &DecoderModel, path: &GeodesicPath) -> Result<Vec<Peptide>> {
    let mut out: Vec<Peptide> = Vec::new();
    for z in &path.waypoints {
        let p = model.argmax_peptide(z)?;
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Indices of seeds (value ≤ `theta`) and wells (seeds that are strict local
/// minima strictly inside the retained window `[⌈f·N'⌉, ⌊(1−f)·N'⌋]`).
pub fn find_seeds_wells(values: &[f64], theta: f64, exclusion_frac: f64) -> (Vec<usize>, Vec<usize>) {
    let n = values.len();
    if n < 5 {
        return (vec![], vec![]);
    }
    let lo = (exclusion_frac * n as f64).ceil() as usize;
    let hi = ((1.0 - exclusion_frac) * n as f64).floor() as usize;
    let hi = hi.min(n - 1);
    if lo > hi {
        return (vec![], vec![]);
    }
    let seeds: Vec<usize> = (lo..=hi).filter(|&k| values[k] <= theta).collect();
    let wells = seeds
        .iter()
        .copied()
        .filter(|&k| k > lo && k < hi && values[k] < values[k - 1] && values[k] < values[k + 1])
        .collect();
    (seeds, wells)
}

pub const DEFAULT_THETA_POT: f64 = 5.0;
pub const DEFAULT_EXCLUSION: f64 = 0.2;
pub const DEFAULT_DENSITY: f64 = 90.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub latent_length: f64,
    pub ambient_length: f64,
    pub peptide_path: Vec<Peptide>,
    pub peptide_path_length: usize,
    pub potential_sum: f64,
    pub seeds: Vec<Peptide>,
    pub wells: Vec<Peptide>,
    pub energy: EnergyTerms,
}

pub fn path_metrics(
    model: &DecoderModel,
    path: &GeodesicPath,
    potential: &dyn Potential,
    theta_pot: f64,
    exclusion_frac: f64,
) -> Result<PathReport> {
    let xs = ambient(model, path)?;
    let energy = energy_from(path, &xs, potential)?;
    let latent_length = path.waypoints.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum();
    let ambient_length = xs.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum();
    let peptide_path = decode_path(model, path)?;
    let values: Vec<f64> = peptide_path.iter().map(|p| potential.on_peptide(p)).collect();
    let (seeds, wells) = find_seeds_wells(&values, theta_pot, exclusion_frac);
    Ok(PathReport {
        latent_length,
        ambient_length,
        peptide_path_length: peptide_path.len(),
        seeds: seeds.iter().map(|&k| peptide_path[k].clone()).collect(),
        wells: wells.iter().map(|&k| peptide_path[k].clone()).collect(),
        peptide_path,
        potential_sum: energy.potential_term,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::OutputMode;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    #[test]
    fn init_path_counts_segments() {
        let p = init_path(&v(&[0.0, 0.0]), &v(&[0.1, 0.0]), 90.0, 0.0, 0.0).unwrap();
        assert_eq!(p.segments(), 9);
        for (k, z) in p.waypoints.iter().enumerate() {
            assert!((z[0] - 0.1 * k as f64 / 9.0).abs() < 1e-15);
        }
        let p = init_path(&v(&[0.0]), &v(&[0.001]), 90.0, 0.0, 0.0).unwrap();
        assert_eq!(p.segments(), 1);
    }

    #[test]
    fn constant_decoder_has_zero_energy() {
        let m = DecoderModel::constant(2, 3);
        let p = init_path(&v(&[0.0, 0.0]), &v(&[1.0, 1.0]), 10.0, 0.0, 0.0).unwrap();
        assert_eq!(path_energy(&m, &p, &NoPotential).unwrap().total, 0.0);
    }

    #[test]
    fn straight_path_on_linear_logits_has_equal_chords() {
        let m = DecoderModel::random_flat_linear(4, 3, 2, 0.7, OutputMode::Logit);
        let (a, b) = (v(&[0.1, -0.2, 0.3]), v(&[0.5, 0.4, -0.1]));
        let p = init_path(&a, &b, 20.0, 0.0, 0.0).unwrap();
        let dx = m.log_space(&b).unwrap() - m.log_space(&a).unwrap();
        let e = path_energy(&m, &p, &NoPotential).unwrap();
        assert!((e.kinetic - dx.norm_squared() / p.segments() as f64).abs() < 1e-9);
        let r = path_metrics(&m, &p, &NoPotential, 5.0, 0.2).unwrap();
        assert!((r.ambient_length - dx.norm()).abs() < 1e-9);
        let two = init_path(&a, &b, 0.1, 0.0, 0.0).unwrap();
        assert!((path_energy(&m, &two, &NoPotential).unwrap().total - dx.norm_squared()).abs() < 1e-9);
    }

    #[test]
    fn straight_path_is_stationary_on_linear_logits() {
        let m = DecoderModel::random_flat_linear(4, 3, 2, 0.7, OutputMode::Logit);
        let p = init_path(&v(&[0.1, -0.2, 0.3]), &v(&[0.5, 0.4, -0.1]), 20.0, 0.0, 0.0).unwrap();
        let e0 = path_energy(&m, &p, &NoPotential).unwrap().total;
        let cfg = OptimizerConfig { max_steps: 100, weight_decay: 0.0, ..Default::default() };
        let out = optimize_path(&m, &p, &NoPotential, &cfg).unwrap();
        let e1 = path_energy(&m, &out.path, &NoPotential).unwrap().total;
        assert!(e0 - e1 <= 1e-9);
    }

    #[test]
    fn optimization_pins_endpoints_and_never_increases_energy() {
        let m = DecoderModel::random_toy_mlp(2, 3, 8, 3, 1.0);
        let pot = SyntheticPotential::random_linear(1, 3, 0.0, 1.0, 0.0);
        let p = init_path(&v(&[-0.8, 0.2, 0.5]), &v(&[0.7, -0.4, 0.1]), 15.0, 0.01, 0.1).unwrap();
        let e0 = path_energy(&m, &p, &pot).unwrap().total;
        let cfg = OptimizerConfig { max_steps: 200, lr: 1e-2, ..Default::default() };
        let out = optimize_path(&m, &p, &pot, &cfg).unwrap();
        assert_eq!(out.path.waypoints[0], p.waypoints[0]);
        assert_eq!(out.path.waypoints.last(), p.waypoints.last());
        assert!(path_energy(&m, &out.path, &pot).unwrap().total <= e0);
    }

    #[test]
    fn fd_fallback_matches_analytic_gradient() {
        struct Wrapped(SyntheticPotential);
        impl Potential for Wrapped {
            fn value(&self, x: &DVector<f64>) -> Result<f64> {
                self.0.eval(x)
            }
            fn on_peptide(&self, p: &Peptide) -> f64 {
                self.0.eval_peptide(p)
            }
        }
        let pot = SyntheticPotential::random_linear(2, 2, 0.0, 1.0, 0.0);
        let x = DVector::from_fn(42, |i, _| (i as f64 * 0.37).cos());
        let fd = Wrapped(pot.clone()).gradient(&x).unwrap();
        assert!((fd - pot.grad(&x).unwrap()).amax() < 1e-6);
    }

    #[test]
    fn decode_path_dedups_consecutive_only() {
        let m = DecoderModel::constant(2, 2);
        let p = init_path(&v(&[0.0, 0.0]), &v(&[1.0, 0.0]), 10.0, 0.0, 0.0).unwrap();
        assert_eq!(decode_path(&m, &p).unwrap().len(), 1);
    }

    #[test]
    fn seeds_and_wells() {
        let (s, w) = find_seeds_wells(&[9.0, 9.0, 3.0, 9.0, 9.0], 5.0, 0.0);
        assert_eq!((s, w), (vec![2], vec![2]));
        let (_, w) = find_seeds_wells(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 10.0, 0.2);
        assert!(w.is_empty());
        assert_eq!(find_seeds_wells(&[0.0; 4], 5.0, 0.2), (vec![], vec![]));
        // Window boundaries never count as wells.
        let (s, w) = find_seeds_wells(&[9.0, 1.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0], 5.0, 0.1);
        assert_eq!((s, w), (vec![1], vec![]));
    }
}
