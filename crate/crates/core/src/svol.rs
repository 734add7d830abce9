//! Regime-switching stochastic volatility: returns whose local variance is
//! h(X) and the averaged filter that uses only h̄.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{
    run_filter, AveragedMatrixFilter, JointEstimate, LikelihoodKernel, PathIntegralEnsemble,
    Posterior,
};
use crate::model::AveragedModel;
use crate::rng::RngStream;
use crate::simulator::ObservationSeries;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvolParams {
    /// Drift r per unit time.
    pub drift: f64,
    /// Leverage correlation ρ ∈ (−1, 0].
    pub rho: f64,
}

impl Default for SvolParams {
    fn default() -> Self {
        Self {
            drift: 0.0,
            rho: 0.0,
        }
    }
}

impl SvolParams {
    pub fn validate(&self, epsilon: f64) -> Result<()> {
        if !self.drift.is_finite() {
            return Err(Error::invalid("drift", "must be finite"));
        }
        if !(self.rho > -1.0 && self.rho <= 0.0) {
            return Err(Error::invalid("rho", "must lie in (-1, 0]"));
        }
        if epsilon * self.rho * self.rho >= 1.0 {
            return Err(Error::invalid("rho", "epsilon * rho^2 must be below 1"));
        }
        Ok(())
    }

    pub fn kernel(&self, delta_t: f64) -> LikelihoodKernel {
        LikelihoodKernel::Svol {
            drift: self.drift,
            delta_t,
        }
    }
}

fn check_positive(avg: &AveragedModel) -> Result<()> {
    match avg.h_bar.iter().position(|&h| !(h > 0.0)) {
        Some(i) => Err(Error::NonPositiveVolatility {
            step: i,
            value: avg.h_bar[i],
        }),
        None => Ok(()),
    }
}

/// Joint (kernel × endpoint) matrix for one return under the volatility kernel.
pub fn svol_psi<R: Rng + ?Sized>(
    avg: &AveragedModel,
    y_prev: f64,
    y_next: f64,
    delta_t: f64,
    drift: f64,
    path_samples: usize,
    rng: &mut R,
) -> Result<JointEstimate> {
    check_positive(avg)?;
    let paths = PathIntegralEnsemble::simulate(avg, delta_t, path_samples, rng)?;
    Ok(paths.joint(&LikelihoodKernel::Svol { drift, delta_t }, y_next - y_prev))
}

/// Averaged regime posterior for a log-price series. ρ is validated but
/// does not enter the recursion.
pub fn svol_averaged_filter(
    obs: &ObservationSeries,
    avg: &AveragedModel,
    rho0: &[f64],
    svol: &SvolParams,
    path_samples: usize,
    stream: RngStream,
) -> Result<Posterior> {
    check_positive(avg)?;
    if !(svol.rho > -1.0 && svol.rho <= 0.0) {
        return Err(Error::invalid("rho", "must lie in (-1, 0]"));
    }
    let mut filter =
        AveragedMatrixFilter::new(avg, rho0, svol.kernel(obs.obs_dt), path_samples, stream)?;
    run_filter(&mut filter, obs)
}
