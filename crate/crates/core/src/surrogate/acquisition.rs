//! Log expected improvement for minimization.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;

use super::gp::GpModel;
use crate::peptide::Peptide;

/// Returned when improvement is impossible (zero variance and no mean gain).
pub const LOG_EI_FLOOR: f64 = -1e300;

fn ln_phi(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

fn big_phi(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// `ln(z Φ(z) + φ(z))`, accurate far into the lower tail.
fn ln_h(z: f64) -> f64 {
    if z > -1.0 {
        (z * big_phi(z) + ln_phi(z).exp()).ln()
    } else if z > -30.0 {
        // h(z) = φ(z) (1 + z Φ(z)/φ(z)); the Mills ratio comes from erfc in log space.
        let mills = (big_phi(z).ln() - ln_phi(z)).exp();
        ln_phi(z) + (1.0 + z * mills).ln()
    } else {
        let w = 1.0 / (z * z);
        ln_phi(z) + (w * (1.0 - 3.0 * w + 15.0 * w * w - 105.0 * w * w * w)).ln()
    }
}

/// `ln EI` for a Gaussian belief `N(mu, sigma²)` against incumbent `best`,
/// with improvement `best − x`.
pub fn log_ei_gaussian(mu: f64, sigma: f64, best: f64) -> f64 {
    if !(sigma > 0.0) {
        return if mu < best { (best - mu).ln() } else { LOG_EI_FLOOR };
    }
    let z = (best - mu) / sigma;
    sigma.ln() + ln_h(z)
}

/// Log-EI of `p` under the fitted model, computed in standardized units.
pub fn log_ei(model: &GpModel, p: &Peptide, best_value: f64) -> f64 {
    let (m, v) = model.posterior_standardized(p);
    log_ei_gaussian(m, v.sqrt(), model.standardize(best_value))
}
