//! κ-stable local charts built from the thin SVD of the decoder Jacobian.
//!
//! At a latent point `z` the chart keeps the right-singular directions whose
//! squared singular values exceed `κ`. Intrinsic coordinates `x ∈ R^k` map to
//! latent points `z + V x`, and the pullback metric at the centre is `Σ²`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::decoder::{jacobian_fd, DecoderModel, DEFAULT_EPS_FD};
use crate::error::{GeoError, Result};

/// Off-chart tolerance for membership tests.
pub const OFF_CHART_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartConfig {
    pub kappa: f64,
    /// Radius of the chart domain in intrinsic coordinates.
    pub radius: f64,
    pub alpha: f64,
    pub eps_fd: f64,
}

impl Default for ChartConfig {
    fn default() -> Self {
        ChartConfig {
            kappa: 0.01,
            radius: 1.0,
            alpha: 0.99,
            eps_fd: DEFAULT_EPS_FD,
        }
    }
}

impl ChartConfig {
    pub fn with_kappa(kappa: f64) -> Self {
        ChartConfig {
            kappa,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) {
            return Err(GeoError::invalid("kappa must be >= 0"));
        }
        if !(self.radius > 0.0) {
            return Err(GeoError::invalid("chart radius must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(GeoError::invalid("alpha must lie in (0, 1)"));
        }
        if !(self.eps_fd > 0.0) {
            return Err(GeoError::invalid("eps_fd must be > 0"));
        }
        Ok(())
    }
}

/// Thin SVD with singular values sorted descending and each right-singular
/// vector's first non-negligible entry made positive.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn thin_svd(j: &DMatrix<f64>) -> Result<ThinSvd> {
    if !j.iter().all(|x| x.is_finite()) {
        return Err(GeoError::NonFinite("Jacobian"));
    }
    let svd = j.clone().svd(true, true);
    let u = svd.u.ok_or(GeoError::SvdFailure)?;
    let vt = svd.v_t.ok_or(GeoError::SvdFailure)?;
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    // Stable sort keeps ties in backend order, which is deterministic.
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let r = order.len();
    let mut uu = DMatrix::zeros(u.nrows(), r);
    let mut vv = DMatrix::zeros(vt.ncols(), r);
    let mut ss = DVector::zeros(r);
    for (c, &i) in order.iter().enumerate() {
        let mut ucol = u.column(i).into_owned();
        let mut vcol = vt.row(i).transpose();
        let lead = vcol.iter().find(|x| x.abs() > 1e-12).copied().unwrap_or(1.0);
        if lead < 0.0 {
            ucol = -ucol;
            vcol = -vcol;
        }
        uu.set_column(c, &ucol);
        vv.set_column(c, &vcol);
        ss[c] = s[i];
    }
    Ok(ThinSvd { u: uu, sigma: ss, v: vv })
}

#[derive(Debug, Clone)]
pub struct KappaChart {
    pub center: DVector<f64>,
    pub k: usize,
    /// `d × k` orthonormal latent basis.
    pub v: DMatrix<f64>,
    /// `(L·A) × k` orthonormal ambient basis.
    pub u: DMatrix<f64>,
    /// Retained singular values, descending, all with `σ² > κ`.
    pub sigma: DVector<f64>,
    pub radius: f64,
    pub kappa: f64,
    pub alpha: f64,
}

impl KappaChart {
    /// Builds a chart from an already computed Jacobian at `center`.
    pub fn from_jacobian(center: DVector<f64>, jacobian: &DMatrix<f64>, cfg: &ChartConfig) -> Result<Self> {
        cfg.validate()?;
        let svd = thin_svd(jacobian)?;
        let k = count_stable(&svd.sigma, cfg.kappa);
        if k == 0 {
            return Err(GeoError::DegenerateChart {
                threshold: cfg.kappa.sqrt(),
            });
        }
        Ok(KappaChart {
            center,
            k,
            v: svd.v.columns(0, k).into_owned(),
            u: svd.u.columns(0, k).into_owned(),
            sigma: svd.sigma.rows(0, k).into_owned(),
            radius: cfg.radius,
            kappa: cfg.kappa,
            alpha: cfg.alpha,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.center.len()
    }

    /// Latent point of intrinsic coordinates `x`.
    pub fn to_latent(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.v * x
    }

    /// Intrinsic coordinates of the projection of `z` onto the chart plane.
    pub fn to_intrinsic(&self, z: &DVector<f64>) -> DVector<f64> {
        self.v.tr_mul(&(z - &self.center))
    }

    pub fn restricted_metric(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.sigma.map(|s| s * s))
    }

    /// Membership in the contracted open domain `W(alpha)`.
    pub fn contains(&self, z: &DVector<f64>, alpha: f64) -> bool {
        let disp = z - &self.center;
        let x = self.v.tr_mul(&disp);
        let off = &disp - &self.v * &x;
        off.norm() < OFF_CHART_TOL && x.norm() < alpha * self.radius
    }

    /// The chart's own frame at its centre.
    pub fn center_frame(&self) -> LocalFrame {
        LocalFrame {
            u: self.u.clone(),
            sigma: self.sigma.clone(),
            w: DMatrix::identity(self.k, self.k),
        }
    }

    /// Frame of the restricted map `x ↦ decode_flat(center + V x)` at `x`.
    ///
    /// The restricted Jacobian is estimated by forward differences along the
    /// chart directions (`k + 1` decoder calls). At `x = 0` the chart's own
    /// factors are returned unchanged.
    pub fn frame_at(&self, model: &DecoderModel, x: &DVector<f64>, eps_fd: f64) -> Result<LocalFrame> {
        if x.iter().all(|&c| c == 0.0) {
            return Ok(self.center_frame());
        }
        let z = self.to_latent(x);
        let base = model.decode_flat(&z)?;
        let mut jr = DMatrix::zeros(base.len(), self.k);
        for j in 0..self.k {
            let zp = &z + self.v.column(j) * eps_fd;
            jr.set_column(j, &((model.decode_flat(&zp)? - &base) / eps_fd));
        }
        LocalFrame::from_restricted_jacobian(&jr)
    }
}

fn count_stable(sigma: &DVector<f64>, kappa: f64) -> usize {
    sigma.iter().take_while(|&&s| s * s > kappa).count()
}

/// SVD factors `U' Σ' Wᵀ` of a restricted Jacobian in intrinsic coordinates.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    /// `k × r` orthonormal basis of intrinsic directions.
    pub w: DMatrix<f64>,
}

impl LocalFrame {
    pub fn from_restricted_jacobian(jr: &DMatrix<f64>) -> Result<Self> {
        let svd = thin_svd(jr)?;
        let smax = svd.sigma.iter().cloned().fold(0.0, f64::max);
        let r = svd.sigma.iter().take_while(|&&s| s > 1e-12 * smax.max(f64::MIN_POSITIVE)).count();
        if r == 0 {
            return Err(GeoError::DegenerateChart { threshold: 0.0 });
        }
        Ok(LocalFrame {
            u: svd.u.columns(0, r).into_owned(),
            sigma: svd.sigma.rows(0, r).into_owned(),
            w: svd.v.columns(0, r).into_owned(),
        })
    }

    /// Intrinsic vector of unit pullback norm, uniform on the metric sphere.
    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u = uniform_on_sphere(self.sigma.len(), rng);
        &self.w * u.component_div(&self.sigma)
    }

    /// Applies the Moore–Penrose pseudoinverse `W Σ'⁻¹ U'ᵀ` to an ambient vector.
    pub fn pinv_apply(&self, a: &DVector<f64>) -> DVector<f64> {
        &self.w * self.u.tr_mul(a).component_div(&self.sigma)
    }
}

pub fn uniform_on_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = g.norm();
        if n > 1e-300 {
            return g / n;
        }
    }
}

pub fn build_chart(model: &DecoderModel, z: &DVector<f64>, cfg: &ChartConfig) -> Result<KappaChart> {
    cfg.validate()?;
    let j = jacobian_fd(model, z, cfg.eps_fd)?;
    KappaChart::from_jacobian(z.clone(), &j, cfg)
}

/// κ-stable dimension at `z`; zero when the chart is degenerate or the
/// Jacobian cannot be formed.
pub fn stable_dimension(model: &DecoderModel, z: &DVector<f64>, kappa: f64, eps_fd: f64) -> usize {
    jacobian_fd(model, z, eps_fd)
        .and_then(|j| thin_svd(&j))
        .map(|svd| count_stable(&svd.sigma, kappa))
        .unwrap_or(0)
}

/// Latent direction with unit pullback norm at the chart centre: `V Σ⁻¹ u`.
pub fn sample_unit_tangent<R: Rng + ?Sized>(chart: &KappaChart, rng: &mut R) -> DVector<f64> {
    let u = uniform_on_sphere(chart.k, rng);
    &chart.v * u.component_div(&chart.sigma)
}

/// Pullback norm of a latent vector at the chart centre, `vᵀ V Σ² Vᵀ v`.
pub fn pullback_sq_norm(chart: &KappaChart, v: &DVector<f64>) -> f64 {
    let c = chart.v.tr_mul(v).component_mul(&chart.sigma);
    c.norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::OutputMode;
    use crate::peptide::ALPHABET_SIZE;
    use crate::rng;

    /// Affine logit decoder `W z` with prescribed singular values.
    pub(crate) fn linear_with_singular_values(sv: &[f64], length: usize, seed: u64) -> DecoderModel {
        let d = sv.len();
        let n = length * ALPHABET_SIZE;
        let mut r = rng::seeded(seed);
        let q_left = DMatrix::from_fn(n, d, |_, _| r.sample::<f64, _>(StandardNormal)).qr().q();
        let q_right = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal)).qr().q();
        let w = q_left * DMatrix::from_diagonal(&DVector::from_row_slice(sv)) * q_right.transpose();
        DecoderModel::flat_linear(w, DVector::zeros(n), length, OutputMode::Logit).unwrap()
    }

    #[test]
    fn stable_dimension_counts_squares_above_kappa() {
        let m = linear_with_singular_values(&[2.0, 1.0, 0.5, 1e-9], 1, 1);
        let z = DVector::zeros(4);
        let cfg = ChartConfig::with_kappa(0.01);
        let chart = build_chart(&m, &z, &cfg).unwrap();
        assert_eq!(chart.k, 3);
        assert_eq!(stable_dimension(&m, &z, 0.01, 0.05), 3);
        for (s, want) in chart.sigma.iter().zip([2.0, 1.0, 0.5]) {
            assert!((s - want).abs() < 1e-10);
        }
        let full = linear_with_singular_values(&[2.0, 1.0, 0.5], 1, 2);
        assert_eq!(build_chart(&full, &DVector::zeros(3), &ChartConfig::with_kappa(0.0)).unwrap().k, 3);
    }

    #[test]
    fn degenerate_chart_on_constant_decoder() {
        let m = DecoderModel::constant(3, 2);
        let z = DVector::zeros(3);
        assert!(matches!(
            build_chart(&m, &z, &ChartConfig::default()),
            Err(GeoError::DegenerateChart { .. })
        ));
        assert_eq!(stable_dimension(&m, &z, 0.01, 0.05), 0);
    }

    #[test]
    fn stable_dimension_is_monotone_in_kappa() {
        let m = DecoderModel::random_toy_mlp(9, 6, 10, 3, 1.5);
        let z = DVector::from_fn(6, |i, _| 0.2 * i as f64);
        let ks: Vec<usize> = [0.0, 1e-8, 1e-4, 1e-2, 1e-1, 1.0]
            .iter()
            .map(|&k| stable_dimension(&m, &z, k, 0.05))
            .collect();
        assert!(ks.windows(2).all(|w| w[0] >= w[1]), "{ks:?}");
    }

    #[test]
    fn restricted_metric_is_sigma_squared() {
        let m = linear_with_singular_values(&[2.0, 1.0], 1, 3);
        let chart = build_chart(&m, &DVector::zeros(2), &ChartConfig::default()).unwrap();
        let g = chart.restricted_metric();
        assert!((g[(0, 0)] - 4.0).abs() < 1e-10);
        assert!((g[(1, 1)] - 1.0).abs() < 1e-10);
        assert_eq!(g[(0, 1)], 0.0);
    }

    #[test]
    fn factors_are_orthonormal_with_sign_convention() {
        let m = DecoderModel::random_toy_mlp(4, 5, 8, 2, 1.0);
        let chart = build_chart(&m, &DVector::from_element(5, 0.1), &ChartConfig::with_kappa(1e-6)).unwrap();
        let eye = DMatrix::<f64>::identity(chart.k, chart.k);
        assert!((chart.v.tr_mul(&chart.v) - &eye).amax() < 1e-8);
        assert!((chart.u.tr_mul(&chart.u) - &eye).amax() < 1e-8);
        for c in chart.v.column_iter() {
            let lead = c.iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(*lead > 0.0);
        }
        assert!(chart.sigma.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn membership_is_an_open_ball_in_the_chart_plane() {
        let m = linear_with_singular_values(&[2.0, 1.0, 1e-6], 1, 5);
        let chart = build_chart(&m, &DVector::zeros(3), &ChartConfig::default()).unwrap();
        assert_eq!(chart.k, 2);
        assert!(chart.contains(&chart.center, 0.5));
        let x = DVector::from_vec(vec![0.6, 0.8]) * (0.5 * chart.radius);
        let boundary = chart.to_latent(&x);
        assert!(!chart.contains(&boundary, 0.5));
        assert!(chart.contains(&chart.to_latent(&(x * 0.999)), 0.5));
        // Displace along the discarded direction.
        let svd = thin_svd(&m.jacobian(&DVector::zeros(3)).unwrap()).unwrap();
        let off = &chart.center + svd.v.column(2) * 0.1;
        assert!(!chart.contains(&off, 0.99));
    }

    #[test]
    fn unit_tangent_samples_have_unit_pullback_norm() {
        let m = DecoderModel::random_toy_mlp(8, 6, 12, 3, 1.0);
        let chart = build_chart(&m, &DVector::from_element(6, -0.2), &ChartConfig::with_kappa(1e-4)).unwrap();
        let mut r = rng::seeded(1);
        for _ in 0..1000 {
            let v = sample_unit_tangent(&chart, &mut r);
            assert!((pullback_sq_norm(&chart, &v) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn one_dimensional_chart_samples_are_signed_basis_vector() {
        let m = linear_with_singular_values(&[3.0, 1e-6], 1, 6);
        let chart = build_chart(&m, &DVector::zeros(2), &ChartConfig::default()).unwrap();
        assert_eq!(chart.k, 1);
        let e = chart.v.column(0) / chart.sigma[0];
        let mut r = rng::seeded(2);
        for _ in 0..20 {
            let v = sample_unit_tangent(&chart, &mut r);
            assert!((&v - &e).norm() < 1e-12 || (&v + &e).norm() < 1e-12);
        }
    }

    #[test]
    fn isotropic_chart_sampling_has_vanishing_mean() {
        let m = linear_with_singular_values(&[1.0, 1.0, 1.0], 1, 7);
        let chart = build_chart(&m, &DVector::zeros(3), &ChartConfig::default()).unwrap();
        let mut r = rng::seeded(3);
        let n = 100_000;
        let mut mean = DVector::zeros(3);
        for _ in 0..n {
            mean += sample_unit_tangent(&chart, &mut r);
        }
        mean /= n as f64;
        // Each coordinate has variance 1/3; 5 standard errors of the norm.
        assert!(mean.norm() < 0.02, "{}", mean.norm());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let m = linear_with_singular_values(&[1.0], 1, 8);
        let z = DVector::zeros(1);
        for cfg in [
            ChartConfig { kappa: -1.0, ..Default::default() },
            ChartConfig { radius: 0.0, ..Default::default() },
            ChartConfig { alpha: 1.0, ..Default::default() },
        ] {
            assert!(matches!(build_chart(&m, &z, &cfg), Err(GeoError::InvalidParameter(_))));
        }
    }
}
