//! Winsorized method-of-moments overdispersion correction, the comparison
//! baseline for the empirical null.

use crate::{Error, Result};

/// Default Winsorization level for baseline comparisons.
pub const DEFAULT_WINSOR_Q: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomFit {
    pub phi_mom: f64,
    pub q_percent: f64,
    pub sigma2_alpha_hat: f64,
}

/// Clamps values to the `[q, 100 - q]` percentile range, keeping order.
///
/// Thresholds are nearest-rank order statistics: the k-th smallest and the
/// k-th largest value with `k = ceil(n * q / 100)`. Unlike interpolated
/// percentiles, this makes the operation idempotent.
pub fn winsorize(z: &[f64], q_percent: f64) -> Result<Vec<f64>> {
    if !(0.0..50.0).contains(&q_percent) {
        return Err(Error::input(format!(
            "Winsorization level must lie in [0, 50), got {q_percent}"
        )));
    }
    let n = z.len();
    // guard against n * q / 100 landing a hair above an integer
    let k = ((n as f64 * q_percent / 100.0) - 1e-9).ceil().max(0.0) as usize;
    if k == 0 {
        return Ok(z.to_vec());
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let lo = sorted[k - 1];
    let hi = sorted[n - k];
    Ok(z.iter().map(|&v| v.clamp(lo, hi)).collect())
}

/// Moment estimator `max(0, (sum z^2 - F) / sum n_eff)`.
///
/// Matches `E[Z^2] = 1 + phi * n_eff` summed over centers.
pub fn mom_phi(z_winsorized: &[f64], sizes: &[f64]) -> Result<MomFit> {
    if z_winsorized.len() != sizes.len() || z_winsorized.len() < 2 {
        return Err(Error::input(format!(
            "method of moments needs matching inputs of length >= 2, got {} and {}",
            z_winsorized.len(),
            sizes.len()
        )));
    }
    if let Some(bad) = sizes.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::input(format!("effective sizes must be positive, got {bad}")));
    }
    let sum_sq: f64 = z_winsorized.iter().map(|z| z * z).sum();
    let total_size: f64 = sizes.iter().sum();
    let phi_mom = ((sum_sq - z_winsorized.len() as f64) / total_size).max(0.0);
    Ok(MomFit {
        phi_mom,
        q_percent: 0.0,
        sigma2_alpha_hat: phi_mom,
    })
}

/// Winsorizes the raw fixed-effects scores once, then applies [`mom_phi`].
pub fn fit_method_of_moments(z: &[f64], sizes: &[f64], q_percent: f64, a_psi: f64) -> Result<MomFit> {
    let winsorized = winsorize(z, q_percent)?;
    let fit = mom_phi(&winsorized, sizes)?;
    Ok(MomFit {
        phi_mom: fit.phi_mom,
        q_percent,
        sigma2_alpha_hat: fit.phi_mom * a_psi,
    })
}

pub fn z_method_of_moments(z_fe: f64, size: f64, phi_mom: f64) -> f64 {
    z_fe / (1.0 + phi_mom * size).sqrt()
}
