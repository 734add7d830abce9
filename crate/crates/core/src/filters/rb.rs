//! Rao-Blackwellized filter for linear observation functions.
//!
//! Within one observation interval, stack the m fine-grid OU values newest
//! first, `X⃗_{k+1} = (X̃_{(k+1)m}, …, X̃_{km+1})`. Conditional on the regime
//! path they satisfy
//!
//! ```text
//! X⃗_{k+1} = A X⃗_k + B Θ⃗_{k+1} + R W⃗_k
//! ΔY_k    = H X⃗_{k+1} + N(0, Δt)
//! ```
//!
//! so each particle samples only Θ⃗ and carries a Kalman mean. The covariance
//! does not depend on the regimes or the data and is shared by all particles.

use rand::Rng;

use super::chain::BlockSampler;
use super::ensemble::{gather, gather_rows, Ensemble, ParticleConfig};
use super::RegimeFilter;
use crate::error::{Error, Result};
use crate::linalg::{chain_transition_matrix, Matrix};
use crate::model::{IntensityMatrix, ModelParams};
use crate::simulator::categorical;

#[derive(Clone, Debug, PartialEq)]
pub struct RbMatrices {
    pub a: Matrix,
    pub b: Matrix,
    pub r: Matrix,
    /// 1×m observation row `Δt̃·h·(1, …, 1)`.
    pub h: Matrix,
}

fn unit_upper(m: usize, a: f64) -> Matrix {
    Matrix::from_fn(m, m, |r, c| if c >= r { a.powi((c - r) as i32) } else { 0.0 })
}

pub fn rb_matrices_for(m: usize, a: f64, fine_dt: f64, slope: f64) -> RbMatrices {
    let u = unit_upper(m, a);
    RbMatrices {
        a: Matrix::from_fn(m, m, |r, c| if c == 0 { a.powi((m - r) as i32) } else { 0.0 }),
        b: &u * (1.0 - a),
        r: &u * ((1.0 - a * a) / 2.0).sqrt(),
        h: Matrix::from_element(1, m, fine_dt * slope),
    }
}

pub fn rb_build_matrices(params: &ModelParams) -> Result<RbMatrices> {
    let slope = params.h.linear_slope().ok_or(Error::NonlinearObservation)?;
    Ok(rb_matrices_for(
        params.substeps,
        params.ar_coefficient(),
        params.fine_dt(),
        slope,
    ))
}

/// Shared Kalman quantities of the latest step.
#[derive(Clone, Debug, PartialEq)]
pub struct RbSufficientStats {
    pub sigma: Matrix,
    pub sigma_pred: Matrix,
    pub innovation_var: f64,
    /// m×1 gain.
    pub gain: Matrix,
}

/// Covariance recursion; exposed so its algebra can be checked in isolation.
///
/// `Σ_pred = AΣAᵀ + RRᵀ`, `S = HΣ_predHᵀ + Δt`, `K = Σ_predHᵀ/S`,
/// `Σ' = (I − KH)Σ_pred`.
pub fn rb_covariance_step(mats: &RbMatrices, sigma: &Matrix, obs_var: f64) -> Result<RbSufficientStats> {
    let sigma_pred = &mats.a * sigma * mats.a.transpose() + &mats.r * mats.r.transpose();
    finish_covariance_step(mats, sigma_pred, obs_var)
}

fn finish_covariance_step(mats: &RbMatrices, sigma_pred: Matrix, obs_var: f64) -> Result<RbSufficientStats> {
    let ph = &sigma_pred * mats.h.transpose();
    let s = (&mats.h * &ph)[(0, 0)] + obs_var;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Numerical(format!("innovation variance {s}")));
    }
    let gain = ph / s;
    let m = sigma_pred.nrows();
    let mut sigma = (Matrix::identity(m, m) - &gain * &mats.h) * &sigma_pred;
    sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(RbSufficientStats {
        sigma,
        sigma_pred,
        innovation_var: s,
        gain,
    })
}

pub struct RbFilter {
    ens: Ensemble,
    regimes: Vec<usize>,
    /// Row-major R×m Kalman means, row entry 0 is the newest substep.
    means: Vec<f64>,
    pred: Vec<f64>,
    regime_scratch: Vec<usize>,
    row_scratch: Vec<f64>,
    sampler: BlockSampler,
    mats: RbMatrices,
    /// `a^{m-r}` column of A and the constant `RRᵀ`.
    decay: Matrix,
    noise_cov: Matrix,
    stats: RbSufficientStats,
    levels: Vec<f64>,
    a: f64,
    delta_t: f64,
    pi: Vec<f64>,
    x_mean: f64,
}

impl RbFilter {
    pub fn new(params: &ModelParams, config: &ParticleConfig) -> Result<Self> {
        params.validate()?;
        let mats = rb_build_matrices(params)?;
        let q = match &params.q {
            IntensityMatrix::Constant(q) => q,
            _ => return Err(Error::StateDependentIntensity),
        };
        let m = params.substeps;
        let mut ens = Ensemble::new(config)?;
        let regimes: Vec<usize> = ens
            .rngs
            .slots
            .iter_mut()
            .map(|rng| categorical(&params.rho0, rng.random()))
            .collect();
        let mut means = vec![0.0; regimes.len() * m];
        let x0_mean = params.x0.mean();
        means.chunks_exact_mut(m).for_each(|row| row[0] = x0_mean);
        let mut sigma = Matrix::zeros(m, m);
        sigma[(0, 0)] = params.x0.variance();
        let noise_cov = &mats.r * mats.r.transpose();
        let decay = mats.a.columns(0, 1).into_owned();
        let mut filter = Self {
            ens,
            regimes,
            pred: vec![0.0; m],
            means,
            regime_scratch: Vec::new(),
            row_scratch: Vec::new(),
            sampler: BlockSampler::new(&chain_transition_matrix(q, params.fine_dt()), m),
            decay,
            noise_cov,
            stats: RbSufficientStats {
                sigma_pred: sigma.clone(),
                sigma,
                innovation_var: f64::NAN,
                gain: Matrix::zeros(m, 1),
            },
            mats,
            levels: params.space.values().to_vec(),
            a: params.ar_coefficient(),
            delta_t: params.delta_t,
            pi: Vec::new(),
            x_mean: x0_mean,
        };
        filter.pi = filter.ens.marginal(filter.regimes.iter().copied(), filter.levels.len());
        Ok(filter)
    }

    pub fn matrices(&self) -> &RbMatrices {
        &self.mats
    }

    pub fn stats(&self) -> &RbSufficientStats {
        &self.stats
    }

    pub fn weights(&self) -> &[f64] {
        &self.ens.weights
    }

    pub fn regimes(&self) -> &[usize] {
        &self.regimes
    }

    /// Kalman mean vector of particle `n` (newest substep first).
    pub fn mean_of(&self, n: usize) -> &[f64] {
        let m = self.pred.len();
        &self.means[n * m..(n + 1) * m]
    }
}

impl RegimeFilter for RbFilter {
    fn n_regimes(&self) -> usize {
        self.levels.len()
    }

    fn posterior(&self) -> Vec<f64> {
        self.pi.clone()
    }

    fn update(&mut self, k: usize, y_prev: f64, y_next: f64) -> Result<Vec<f64>> {
        let m = self.pred.len();
        // A has rank one, so AΣAᵀ only needs Σ[0][0].
        let sigma_pred =
            &self.decay * self.decay.transpose() * self.stats.sigma[(0, 0)] + &self.noise_cov;
        self.stats = finish_covariance_step(&self.mats, sigma_pred, self.delta_t)?;
        let dy = y_next - y_prev;
        let c = self.mats.h[(0, 0)];
        let two_s = 2.0 * self.stats.innovation_var;
        let gain: Vec<f64> = self.stats.gain.iter().copied().collect();
        let (sampler, levels, a) = (&self.sampler, &self.levels, self.a);
        let mut rows: Vec<(&mut usize, &mut [f64])> = self
            .regimes
            .iter_mut()
            .zip(self.means.chunks_exact_mut(m))
            .collect();
        self.ens.propagate(&mut rows, |_, (regime, row), rng| {
            // walk the block oldest to newest; row index m-1-t holds time t
            let mut x = row[0];
            let mut t = 0;
            let mut sum = 0.0;
            **regime = sampler.sample(**regime, rng, |s, n| {
                let target = levels[s];
                for _ in 0..n {
                    x = a * x + (1.0 - a) * target;
                    row[m - 1 - t] = x;
                    sum += x;
                    t += 1;
                }
            });
            let e = dy - c * sum;
            for (v, g) in row.iter_mut().zip(&gain) {
                *v += g * e;
            }
            -e * e / two_s
        });
        drop(rows);
        self.ens.reweight(k + 1)?;
        self.pi = self.ens.marginal(self.regimes.iter().copied(), self.levels.len());
        self.x_mean = self
            .ens
            .weights
            .iter()
            .zip(self.means.chunks_exact(m))
            .map(|(w, row)| w * row[0])
            .sum();
        if let Some(anc) = self.ens.maybe_resample()? {
            gather(&mut self.regimes, anc, &mut self.regime_scratch);
            gather_rows(&mut self.means, m, anc, &mut self.row_scratch);
        }
        Ok(self.pi.clone())
    }

    fn ess(&self) -> Option<f64> {
        Some(self.ens.ess())
    }

    fn x_mean(&self) -> Option<f64> {
        Some(self.x_mean)
    }
}
