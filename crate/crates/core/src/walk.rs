//! Second-order Riemannian random walks inside a κ-stable chart.
//!
//! The walk lives in the intrinsic coordinates of a chart fixed at the start
//! point. Each step draws a direction that is uniform on the pullback unit
//! sphere at the current point, scales it by `√k`, and subtracts a geodesic
//! curvature correction estimated from a second central difference of the
//! decoder projected through the pseudoinverse of the restricted Jacobian.
//! Leaving the contracted domain absorbs the walk.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::decoder::{DecoderModel, DEFAULT_EPS_FD};
use crate::error::{GeoError, Result};
use crate::kappa::{build_chart, ChartConfig, KappaChart, LocalFrame};
use crate::rng::{self, StreamRng};

/// Coefficient of the curvature term: the second-order Taylor expansion of the
/// exponential map, `exp_z(εv) = z + εv − ½ε²Γ[v,v] + O(ε³)`.
pub const CURVATURE_COEFF: f64 = 0.5;
const BISECTION_ITERS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkScheme {
    SecondOrder,
    /// Ablation: Christoffel correction dropped.
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkParams {
    pub kappa: f64,
    pub eps: f64,
    /// Diffusion-time budget.
    pub t_max: f64,
    pub alpha: f64,
    pub delta_max: f64,
    /// Probe radius of the second difference.
    pub rho: f64,
    pub step_max: usize,
    pub radius: f64,
    pub eps_fd: f64,
    pub scheme: WalkScheme,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            kappa: 0.01,
            eps: 0.1,
            t_max: 0.1,
            alpha: 0.99,
            delta_max: 0.5,
            rho: 0.05,
            step_max: 10_000,
            radius: 1.0,
            eps_fd: DEFAULT_EPS_FD,
            scheme: WalkScheme::SecondOrder,
        }
    }
}

impl WalkParams {
    pub fn chart_config(&self) -> ChartConfig {
        ChartConfig {
            kappa: self.kappa,
            radius: self.radius,
            alpha: self.alpha,
            eps_fd: self.eps_fd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chart_config().validate()?;
        for (name, v) in [("eps", self.eps), ("delta_max", self.delta_max), ("rho", self.rho)] {
            if !(v > 0.0) {
                return Err(GeoError::invalid(format!("{name} must be > 0")));
            }
        }
        if !(self.t_max >= 0.0) {
            return Err(GeoError::invalid("T must be >= 0"));
        }
        Ok(())
    }

    /// `⌊T/ε²⌋`, robust to rounding in the quotient.
    pub fn fixed_step_count(&self) -> usize {
        ((self.t_max / (self.eps * self.eps)) * (1.0 + 1e-12)).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkTrace {
    pub points: Vec<DVector<f64>>,
    /// Accumulated diffusion time at each point.
    pub times: Vec<f64>,
    /// Accumulated diffusion time.
    pub sigma: f64,
    pub stopped: bool,
    pub steps: usize,
}

impl WalkTrace {
    pub fn start(z: &DVector<f64>) -> Self {
        WalkTrace {
            points: vec![z.clone()],
            times: vec![0.0],
            sigma: 0.0,
            stopped: false,
            steps: 0,
        }
    }

    pub fn last(&self) -> &DVector<f64> {
        self.points.last().expect("trace is never empty")
    }
}

/// Christoffel contraction `Γ[v,v]` at intrinsic point `x`, in intrinsic coordinates.
///
/// Uses the ambient acceleration of `t ↦ decode_flat(center + V(x + t v))`
/// from a central second difference with probe radius `rho`, projected by the
/// pseudoinverse of the restricted Jacobian held in `frame`.
pub fn christoffel_with_frame(
    model: &DecoderModel,
    chart: &KappaChart,
    frame: &LocalFrame,
    x: &DVector<f64>,
    v: &DVector<f64>,
    rho: f64,
) -> Result<DVector<f64>> {
    if !(rho > 0.0) {
        return Err(GeoError::invalid("probe radius must be > 0"));
    }
    let f = |xx: &DVector<f64>| model.decode_flat(&chart.to_latent(xx));
    let step = v * rho;
    let acc = (f(&(x + &step))? - f(x)? * 2.0 + f(&(x - &step))?) / (rho * rho);
    let c = frame.pinv_apply(&acc);
    if c.iter().all(|a| a.is_finite()) {
        Ok(c)
    } else {
        Err(GeoError::NonFinite("Christoffel estimate"))
    }
}

/// As [`christoffel_with_frame`], estimating the frame at `x` first.
pub fn christoffel_extrinsic(
    model: &DecoderModel,
    chart: &KappaChart,
    x: &DVector<f64>,
    v: &DVector<f64>,
    rho: f64,
    eps_fd: f64,
) -> Result<DVector<f64>> {
    let frame = chart.frame_at(model, x, eps_fd)?;
    christoffel_with_frame(model, chart, &frame, x, v, rho)
}

/// Drives one walk inside a fixed chart.
pub struct ChartWalker<'a> {
    pub model: &'a DecoderModel,
    pub chart: &'a KappaChart,
    pub params: WalkParams,
}

/// A proposed move: scaled direction `v` and curvature `c`, so that
/// `Δ(ε) = ε v − CURVATURE_COEFF ε² c`.
struct Proposal {
    v: DVector<f64>,
    c: DVector<f64>,
}

impl Proposal {
    fn delta(&self, eps: f64) -> DVector<f64> {
        &self.v * eps - &self.c * (CURVATURE_COEFF * eps * eps)
    }
}

impl<'a> ChartWalker<'a> {
    pub fn new(model: &'a DecoderModel, chart: &'a KappaChart, params: WalkParams) -> Self {
        ChartWalker { model, chart, params }
    }

    fn propose<R: Rng + ?Sized>(&self, x: &DVector<f64>, rng: &mut R) -> Result<Proposal> {
        let frame = self.chart.frame_at(self.model, x, self.params.eps_fd)?;
        let dim = frame.sigma.len() as f64;
        let v = frame.sample_unit(rng) * dim.sqrt();
        let c = match self.params.scheme {
            WalkScheme::SecondOrder => christoffel_with_frame(self.model, self.chart, &frame, x, &v, self.params.rho)?,
            WalkScheme::FirstOrder => DVector::zeros(v.len()),
        };
        Ok(Proposal { v, c })
    }

    /// Fixed-step walk for `⌊T/ε²⌋` iterations.
    pub fn run_fixed<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WalkTrace> {
        let p = &self.params;
        let mut trace = WalkTrace::start(&self.chart.center);
        let mut x = DVector::zeros(self.chart.k);
        for _ in 0..p.fixed_step_count() {
            if trace.stopped {
                let last = trace.last().clone();
                trace.points.push(last);
                trace.times.push(trace.sigma);
            } else {
                let prop = self.propose(&x, rng)?;
                x += prop.delta(p.eps);
                let z = self.chart.to_latent(&x);
                trace.sigma += p.eps * p.eps;
                trace.stopped = !self.chart.contains(&z, p.alpha);
                trace.points.push(z);
                trace.times.push(trace.sigma);
            }
            trace.steps += 1;
        }
        Ok(trace)
    }

    /// Adaptive walk: every step's latent displacement is capped at `delta_max`
    /// by shrinking `ε` through bisection; stops at diffusion time `T` or after
    /// `step_max` steps.
    pub fn run_adaptive<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WalkTrace> {
        let p = &self.params;
        let mut trace = WalkTrace::start(&self.chart.center);
        let mut x = DVector::zeros(self.chart.k);
        while trace.sigma < p.t_max && trace.steps < p.step_max {
            if trace.stopped {
                break;
            }
            let prop = self.propose(&x, rng)?;
            let mut eps = p.eps;
            if prop.delta(eps).norm() > p.delta_max {
                let (mut lo, mut hi) = (0.0, eps);
                for _ in 0..BISECTION_ITERS {
                    let mid = 0.5 * (lo + hi);
                    if prop.delta(mid).norm() <= p.delta_max {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                eps = lo;
            }
            x += prop.delta(eps);
            let z = self.chart.to_latent(&x);
            trace.sigma += eps * eps;
            trace.stopped = !self.chart.contains(&z, p.alpha);
            trace.points.push(z);
            trace.times.push(trace.sigma);
            trace.steps += 1;
        }
        Ok(trace)
    }
}

/// Fixed-step second-order walk from `z` with the chart frozen at `z`.
pub fn sorbes<R: Rng + ?Sized>(model: &DecoderModel, z: &DVector<f64>, params: &WalkParams, rng: &mut R) -> Result<WalkTrace> {
    params.validate()?;
    let chart = build_chart(model, z, &params.chart_config())?;
    ChartWalker::new(model, &chart, *params).run_fixed(rng)
}

/// Adaptive-step variant with a displacement cap and a step limit.
pub fn sorbes_se<R: Rng + ?Sized>(model: &DecoderModel, z: &DVector<f64>, params: &WalkParams, rng: &mut R) -> Result<WalkTrace> {
    params.validate()?;
    let chart = build_chart(model, z, &params.chart_config())?;
    ChartWalker::new(model, &chart, *params).run_adaptive(rng)
}

/// Runs `n_paths` independent fixed-step walks in parallel sharing one chart.
/// Path `i` draws from `rng::stream(run_seed, i)`.
pub fn sorbes_paths(
    model: &DecoderModel,
    z: &DVector<f64>,
    params: &WalkParams,
    n_paths: usize,
    run_seed: u64,
) -> Result<Vec<WalkTrace>> {
    params.validate()?;
    let chart = build_chart(model, z, &params.chart_config())?;
    let walker = ChartWalker::new(model, &chart, *params);
    (0..n_paths)
        .into_par_iter()
        .map(|i| walker.run_fixed(&mut rng::stream(run_seed, i as u64)))
        .collect()
}

/// Naive latent random walk `z ← z + ε g`, `g ~ N(0, I_d)`, for `⌊T/ε²⌋` steps.
pub fn euclidean_walk<R: Rng + ?Sized>(z: &DVector<f64>, eps: f64, t_max: f64, rng: &mut R) -> WalkTrace {
    let params = WalkParams {
        eps,
        t_max,
        ..Default::default()
    };
    let mut trace = WalkTrace::start(z);
    let mut cur = z.clone();
    for _ in 0..params.fixed_step_count() {
        cur += DVector::from_fn(z.len(), |_, _| eps * rng.sample::<f64, _>(StandardNormal));
        trace.points.push(cur.clone());
        trace.sigma += eps * eps;
        trace.times.push(trace.sigma);
        trace.steps += 1;
    }
    trace
}

/// Geodesic distances from the start after Brownian motion for time `t` on a
/// round 2-sphere of the given radius, sampled by a fine geodesic random walk
/// with exact exponential map and Gaussian tangent increments of variance
/// `fine_eps²` per coordinate.
///
/// With `stop_radius`, a path is frozen once its latitude/longitude chart
/// coordinates (those of [`DecoderModel::sphere`]) leave the ball of that
/// radius around the start, matching an absorbed walk.
pub fn brownian_reference(radius: f64, t: f64, n_paths: usize, fine_eps: f64, stop_radius: Option<f64>, run_seed: u64) -> Vec<f64> {
    let steps = (t / (fine_eps * fine_eps)).floor() as usize;
    let rest = (t - steps as f64 * fine_eps * fine_eps).max(0.0);
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut r: StreamRng = rng::stream(run_seed, i as u64);
            let start = [1.0, 0.0, 0.0];
            let mut p = start;
            let mut walk = |scale: f64, p: &mut [f64; 3]| {
                // Orthonormal tangent basis at p.
                let helper = if p[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
                let e1 = normalize(cross(*p, helper));
                let e2 = cross(*p, e1);
                let g1: f64 = r.sample::<f64, _>(StandardNormal) * scale;
                let g2: f64 = r.sample::<f64, _>(StandardNormal) * scale;
                let len = (g1 * g1 + g2 * g2).sqrt();
                if len == 0.0 {
                    return;
                }
                let theta = len / radius;
                let dir = [
                    (g1 * e1[0] + g2 * e2[0]) / len,
                    (g1 * e1[1] + g2 * e2[1]) / len,
                    (g1 * e1[2] + g2 * e2[2]) / len,
                ];
                let (s, c) = theta.sin_cos();
                *p = normalize([c * p[0] + s * dir[0], c * p[1] + s * dir[1], c * p[2] + s * dir[2]]);
            };
            let outside = |p: &[f64; 3]| match stop_radius {
                Some(s) => {
                    let lat = p[2].clamp(-1.0, 1.0).asin();
                    let lon = p[1].atan2(p[0]);
                    (lat * lat + lon * lon).sqrt() >= s
                }
                None => false,
            };
            let mut stopped = false;
            for _ in 0..steps {
                walk(fine_eps, &mut p);
                if outside(&p) {
                    stopped = true;
                    break;
                }
            }
            if rest > 0.0 && !stopped {
                walk(rest.sqrt(), &mut p);
            }
            let cosang = (p[0] * start[0] + p[1] * start[1] + p[2] * start[2]).clamp(-1.0, 1.0);
            radius * cosang.acos()
        })
        .collect()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::OutputMode;
    use crate::kappa::pullback_sq_norm;
    use nalgebra::DMatrix;

    fn flat_logit(d: usize, seed: u64) -> DecoderModel {
        DecoderModel::random_flat_linear(seed, d, 1, 0.5, OutputMode::Logit)
    }

    #[test]
    fn short_budget_takes_no_steps() {
        let m = flat_logit(3, 1);
        let z = DVector::zeros(3);
        let p = WalkParams {
            t_max: 0.005,
            eps: 0.1,
            ..Default::default()
        };
        let t = sorbes(&m, &z, &p, &mut rng::seeded(1)).unwrap();
        assert_eq!(t.points, vec![z]);
        assert_eq!(t.sigma, 0.0);
        assert_eq!(t.steps, 0);
    }

    #[test]
    fn step_count_floors_the_budget() {
        let p = WalkParams {
            t_max: 0.09,
            eps: 0.1,
            ..Default::default()
        };
        assert_eq!(p.fixed_step_count(), 9);
        let m = flat_logit(2, 2);
        let t = sorbes(&m, &DVector::zeros(2), &WalkParams { radius: 100.0, ..p }, &mut rng::seeded(2)).unwrap();
        assert_eq!(t.points.len(), 10);
        assert!(!t.stopped);
        assert!((t.sigma - 9.0 * 0.01).abs() < 1e-15);
    }

    #[test]
    fn tiny_chart_absorbs_after_first_step() {
        let m = flat_logit(3, 3);
        let p = WalkParams {
            radius: 1e-6,
            t_max: 0.1,
            eps: 0.1,
            ..Default::default()
        };
        let t = sorbes(&m, &DVector::zeros(3), &p, &mut rng::seeded(3)).unwrap();
        assert!(t.stopped);
        assert_eq!(t.points.len(), 11);
        assert!(t.points[2..].iter().all(|q| q == &t.points[1]));
        assert!((t.sigma - 0.01).abs() < 1e-15);
    }

    #[test]
    fn sigma_counts_non_absorbed_steps() {
        let m = DecoderModel::random_toy_mlp(5, 3, 6, 2, 1.0);
        let p = WalkParams {
            radius: 0.15,
            t_max: 0.2,
            eps: 0.05,
            kappa: 1e-4,
            ..Default::default()
        };
        for seed in 0..20 {
            let t = sorbes(&m, &DVector::zeros(3), &p, &mut rng::seeded(seed)).unwrap();
            let moved = t.points.windows(2).filter(|w| w[0] != w[1]).count();
            assert!((t.sigma - moved as f64 * p.eps * p.eps).abs() < 1e-12);
            if t.stopped {
                assert!(t.points[moved..].iter().all(|q| q == t.last()));
            }
        }
    }

    #[test]
    fn affine_decoder_has_no_curvature() {
        let m = flat_logit(3, 4);
        let chart = build_chart(&m, &DVector::from_element(3, 0.3), &ChartConfig::default()).unwrap();
        let x = DVector::from_vec(vec![0.1, -0.2, 0.05]);
        let v = DVector::from_vec(vec![1.0, 0.5, -0.3]);
        let c = christoffel_extrinsic(&m, &chart, &x, &v, 0.05, 0.05).unwrap();
        assert!(c.amax() < 1e-8, "{c}");
    }

    #[test]
    fn adaptive_walk_matches_fixed_walk_when_inactive() {
        let m = flat_logit(3, 6);
        let p = WalkParams {
            t_max: 0.1,
            eps: 0.1,
            radius: 50.0,
            delta_max: 1e6,
            ..Default::default()
        };
        let a = sorbes(&m, &DVector::zeros(3), &p, &mut rng::seeded(9)).unwrap();
        let b = sorbes_se(&m, &DVector::zeros(3), &p, &mut rng::seeded(9)).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert!((pa - pb).norm() < 1e-12);
        }
    }

    #[test]
    fn adaptive_walk_caps_displacement() {
        // Ill-conditioned affine decoder: steps along the weak direction are huge.
        let mut w = DMatrix::zeros(21, 2);
        w[(0, 0)] = 1.0;
        w[(1, 1)] = 0.11;
        let m = DecoderModel::flat_linear(w, DVector::zeros(21), 1, OutputMode::Logit).unwrap();
        let p = WalkParams {
            t_max: 1.0,
            eps: 0.1,
            radius: 1e3,
            delta_max: 0.5,
            ..Default::default()
        };
        let t = sorbes_se(&m, &DVector::zeros(2), &p, &mut rng::seeded(4)).unwrap();
        assert!(t.steps > 0);
        for w in t.points.windows(2) {
            assert!((&w[1] - &w[0]).norm() <= 0.5 + 1e-12);
        }
        let single = sorbes_se(&m, &DVector::zeros(2), &WalkParams { step_max: 1, ..p }, &mut rng::seeded(4)).unwrap();
        assert_eq!(single.steps, 1);
        assert_eq!(single.points.len(), 2);
    }

    #[test]
    fn sampled_directions_have_unit_pullback_norm() {
        let m = DecoderModel::random_toy_mlp(11, 4, 8, 2, 1.0);
        let chart = build_chart(&m, &DVector::zeros(4), &ChartConfig::with_kappa(1e-4)).unwrap();
        let frame = chart.center_frame();
        let mut r = rng::seeded(5);
        for _ in 0..1000 {
            let x = frame.sample_unit(&mut r);
            assert!((pullback_sq_norm(&chart, &(&chart.v * x)) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn euclidean_walk_counts_steps() {
        let z = DVector::zeros(2);
        let t = euclidean_walk(&z, 0.1, 0.005, &mut rng::seeded(1));
        assert_eq!(t.steps, 0);
        let a = euclidean_walk(&z, 0.1, 0.1, &mut rng::seeded(1));
        let b = euclidean_walk(&z, 0.1, 0.1, &mut rng::seeded(1));
        assert_eq!(a, b);
        assert_eq!(a.steps, 10);
    }

    #[test]
    fn brownian_reference_concentrates_for_small_time() {
        let d = brownian_reference(1.0, 1e-4, 2000, 0.002, None, 1);
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        assert!(mean < 0.02);
    }
}
