//! Regime filters: bootstrap particle filter, averaged particle filter,
//! averaged matrix recursion, Rao-Blackwellized filter and a grid oracle.

mod chain;
mod ensemble;
pub mod oracle;
pub mod particle;
pub mod posterior;
pub mod psi;
pub mod rb;
pub mod weights;

pub use chain::BlockSampler;
pub use ensemble::ParticleConfig;
pub use oracle::{grid_oracle_filter, GridConfig, GridOracle};
pub use particle::{AveragedParticleFilter, ParticleFilter};
pub use posterior::{map_estimate, total_variation, Posterior};
pub use psi::{
    averaged_matrix_filter_step, estimate_psi, AveragedMatrixFilter, JointEstimate,
    LikelihoodKernel, PathIntegralEnsemble, PsiMatrix,
};
pub use rb::{rb_build_matrices, RbFilter, RbMatrices, RbSufficientStats};
pub use weights::{effective_sample_size, ResamplingScheme, WeightSpace};

use crate::error::Result;
use crate::simulator::ObservationSeries;

/// A recursive filter over the regime index.
pub trait RegimeFilter {
    fn n_regimes(&self) -> usize;

    /// Current posterior π_k.
    fn posterior(&self) -> Vec<f64>;

    /// Assimilates the increment `y_next - y_prev` observed at step `k + 1`.
    fn update(&mut self, k: usize, y_prev: f64, y_next: f64) -> Result<Vec<f64>>;

    fn ess(&self) -> Option<f64> {
        None
    }

    /// Filtered mean of X(t_k), when tracked.
    fn x_mean(&self) -> Option<f64> {
        None
    }
}

/// Runs `filter` over the whole series and collects π_0..π_N.
pub fn run_filter<F: RegimeFilter + ?Sized>(
    filter: &mut F,
    obs: &ObservationSeries,
) -> Result<Posterior> {
    let mut post = Posterior::new(obs.obs_dt);
    let mut ess = filter.ess().map(|e| vec![e]);
    let mut x_mean = filter.x_mean().map(|x| vec![x]);
    post.probs.push(filter.posterior());
    for (k, w) in obs.y.windows(2).enumerate() {
        post.probs.push(filter.update(k, w[0], w[1])?);
        if let (Some(trace), Some(e)) = (ess.as_mut(), filter.ess()) {
            trace.push(e);
        }
        if let (Some(trace), Some(x)) = (x_mean.as_mut(), filter.x_mean()) {
            trace.push(x);
        }
    }
    post.ess = ess;
    post.x_mean = x_mean;
    Ok(post)
}
