//! Bootstrap particle filters on the fine grid.

use rand::Rng;
use rand_distr::StandardNormal;

use super::chain::BlockSampler;
use super::ensemble::{gather, Ensemble, ParticleConfig};
use super::RegimeFilter;
use crate::error::{Error, Result};
use crate::linalg::chain_transition_matrix;
use crate::model::{AveragedModel, ModelParams, ObservationFunction};
use crate::simulator::{categorical, ou_step, TransitionKernel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub regime: usize,
    pub x: f64,
}

/// Full-state filter: particles carry (Θ̃, X̃) and are propagated with the
/// simulator's transition, weighted by the Gaussian increment likelihood.
pub struct ParticleFilter {
    ens: Ensemble,
    particles: Vec<Particle>,
    scratch: Vec<Particle>,
    kernel: TransitionKernel,
    levels: Vec<f64>,
    h: ObservationFunction,
    a: f64,
    fine_dt: f64,
    delta_t: f64,
    substeps: usize,
    pi: Vec<f64>,
    x_mean: f64,
}

impl ParticleFilter {
    pub fn new(params: &ModelParams, config: &ParticleConfig) -> Result<Self> {
        params.validate()?;
        let mut ens = Ensemble::new(config)?;
        let particles: Vec<Particle> = ens
            .rngs
            .slots
            .iter_mut()
            .map(|rng| {
                let regime = categorical(&params.rho0, rng.random());
                Particle {
                    regime,
                    x: params.x0.sample(rng),
                }
            })
            .collect();
        let mut filter = Self {
            ens,
            particles,
            scratch: Vec::new(),
            kernel: TransitionKernel::new(&params.q, params.fine_dt()),
            levels: params.space.values().to_vec(),
            h: params.h.clone(),
            a: params.ar_coefficient(),
            fine_dt: params.fine_dt(),
            delta_t: params.delta_t,
            substeps: params.substeps,
            pi: Vec::new(),
            x_mean: 0.0,
        };
        filter.summarise();
        Ok(filter)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.ens.weights
    }

    fn summarise(&mut self) {
        self.pi = self
            .ens
            .marginal(self.particles.iter().map(|p| p.regime), self.levels.len());
        self.x_mean = self
            .ens
            .weights
            .iter()
            .zip(&self.particles)
            .map(|(w, p)| w * p.x)
            .sum();
    }
}

impl RegimeFilter for ParticleFilter {
    fn n_regimes(&self) -> usize {
        self.levels.len()
    }

    fn posterior(&self) -> Vec<f64> {
        self.pi.clone()
    }

    fn update(&mut self, k: usize, y_prev: f64, y_next: f64) -> Result<Vec<f64>> {
        let dy = y_next - y_prev;
        let (kernel, levels, h) = (&self.kernel, &self.levels, &self.h);
        let (a, fine_dt, two_var, m) = (self.a, self.fine_dt, 2.0 * self.delta_t, self.substeps);
        self.ens.propagate(&mut self.particles, |_, p, rng| {
            let mut sum = 0.0;
            for _ in 0..m {
                let u: f64 = rng.random();
                let w: f64 = rng.sample(StandardNormal);
                p.regime = kernel.step(p.regime, p.x, u);
                p.x = ou_step(p.x, levels[p.regime], a, w);
                sum += h.eval(p.x);
            }
            let e = dy - fine_dt * sum;
            -e * e / two_var
        });
        self.ens.reweight(k + 1)?;
        self.summarise();
        if let Some(anc) = self.ens.maybe_resample()? {
            gather(&mut self.particles, anc, &mut self.scratch);
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

/// Regime-only filter driven by the averaged coefficients: particles move
/// under `exp(Δt̃ Q̄)` and are weighted with `Σ h̄(Θ̃_ℓ)` in place of `Σ h(X̃_ℓ)`.
pub struct AveragedParticleFilter {
    ens: Ensemble,
    regimes: Vec<usize>,
    scratch: Vec<usize>,
    sampler: BlockSampler,
    h_bar: Vec<f64>,
    fine_dt: f64,
    delta_t: f64,
    pi: Vec<f64>,
}

impl AveragedParticleFilter {
    pub fn new(params: &ModelParams, avg: &AveragedModel, config: &ParticleConfig) -> Result<Self> {
        params.validate()?;
        Self::from_parts(avg, &params.rho0, params.delta_t, params.substeps, config)
    }

    pub fn from_parts(
        avg: &AveragedModel,
        rho0: &[f64],
        delta_t: f64,
        substeps: usize,
        config: &ParticleConfig,
    ) -> Result<Self> {
        if rho0.len() != avg.n_regimes() {
            return Err(Error::LengthMismatch {
                expected: avg.n_regimes(),
                found: rho0.len(),
            });
        }
        if substeps == 0 {
            return Err(Error::invalid("substeps", "must be positive"));
        }
        let fine_dt = delta_t / substeps as f64;
        let mut ens = Ensemble::new(config)?;
        let regimes = ens
            .rngs
            .slots
            .iter_mut()
            .map(|rng| categorical(rho0, rng.random()))
            .collect();
        let mut filter = Self {
            ens,
            regimes,
            scratch: Vec::new(),
            sampler: BlockSampler::new(&chain_transition_matrix(&avg.q_bar, fine_dt), substeps),
            h_bar: avg.h_bar.clone(),
            fine_dt,
            delta_t,
            pi: Vec::new(),
        };
        filter.pi = filter
            .ens
            .marginal(filter.regimes.iter().copied(), filter.h_bar.len());
        Ok(filter)
    }

    pub fn regimes(&self) -> &[usize] {
        &self.regimes
    }

    pub fn weights(&self) -> &[f64] {
        &self.ens.weights
    }
}

impl RegimeFilter for AveragedParticleFilter {
    fn n_regimes(&self) -> usize {
        self.h_bar.len()
    }

    fn posterior(&self) -> Vec<f64> {
        self.pi.clone()
    }

    fn update(&mut self, k: usize, y_prev: f64, y_next: f64) -> Result<Vec<f64>> {
        let dy = y_next - y_prev;
        let (sampler, h_bar) = (&self.sampler, &self.h_bar);
        let (fine_dt, two_var) = (self.fine_dt, 2.0 * self.delta_t);
        self.ens.propagate(&mut self.regimes, |_, r, rng| {
            let mut sum = 0.0;
            *r = sampler.sample(*r, rng, |s, n| sum += h_bar[s] * n as f64);
            let e = dy - fine_dt * sum;
            -e * e / two_var
        });
        self.ens.reweight(k + 1)?;
        self.pi = self.ens.marginal(self.regimes.iter().copied(), self.h_bar.len());
        if let Some(anc) = self.ens.maybe_resample()? {
            gather(&mut self.regimes, anc, &mut self.scratch);
        }
        Ok(self.pi.clone())
    }

    fn ess(&self) -> Option<f64> {
        Some(self.ens.ess())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::run_filter;
    use crate::filters::weights::WeightSpace;
    use crate::linalg::Matrix;
    use crate::model::{InitialLaw, IntensityMatrix, StateSpace};
    use crate::rng::RngStream;
    use crate::simulator::simulate_truth_and_observations;

    fn small(eps: f64) -> ModelParams {
        let mut p = ModelParams::reference_two_state(eps, 20, 3);
        p.delta_t = 0.05;
        p.substeps = 2;
        p
    }

    #[test]
    fn flat_likelihood_keeps_weights_uniform() {
        let mut p = small(0.02);
        p.h = ObservationFunction::Constant { value: 0.0 };
        let mut pf = ParticleFilter::new(&p, &ParticleConfig::new(50, 1)).unwrap();
        pf.update(0, 0.0, 0.3).unwrap();
        assert!(pf.weights().iter().all(|&w| (w - 0.02).abs() < 1e-15));
    }

    #[test]
    fn single_regime_is_certain() {
        let mut p = small(0.02);
        p.space = StateSpace::new(vec![1.0]).unwrap();
        p.q = IntensityMatrix::constant(Matrix::zeros(1, 1)).unwrap();
        p.rho0 = vec![1.0];
        let (_, obs) = simulate_truth_and_observations(&p, RngStream::new(1, 0)).unwrap();
        let post = run_filter(&mut ParticleFilter::new(&p, &ParticleConfig::new(20, 2)).unwrap(), &obs).unwrap();
        assert!(post.probs.iter().all(|pi| (pi[0] - 1.0).abs() < 1e-12));
        let avg = AveragedModel::from_params(&p, 16).unwrap();
        let mut apf = AveragedParticleFilter::new(&p, &avg, &ParticleConfig::new(20, 2)).unwrap();
        let post = run_filter(&mut apf, &obs).unwrap();
        assert!(post.probs.iter().all(|pi| (pi[0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn frozen_averaged_chain_keeps_point_mass() {
        let avg = AveragedModel::new(Matrix::zeros(2, 2), vec![-1.0, 1.0]).unwrap();
        let mut f = AveragedParticleFilter::from_parts(&avg, &[0.0, 1.0], 0.01, 5, &ParticleConfig::new(30, 0)).unwrap();
        for k in 0..50 {
            let pi = f.update(k, 0.0, -0.05).unwrap();
            assert_eq!(pi[0], 0.0);
            assert!((pi[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_normalised_every_step() {
        let p = small(0.02);
        let (_, obs) = simulate_truth_and_observations(&p, RngStream::new(8, 0)).unwrap();
        let mut pf = ParticleFilter::new(&p, &ParticleConfig::new(300, 4)).unwrap();
        for k in 0..p.n_obs {
            let pi = pf.update(k, obs.y[k], obs.y[k + 1]).unwrap();
            assert!((pf.weights().iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn log_and_linear_weights_agree() {
        let mut p = small(0.02);
        p.x0 = InitialLaw::Gaussian {
            mean: 0.0,
            variance: 0.5,
        };
        let (_, obs) = simulate_truth_and_observations(&p, RngStream::new(2, 0)).unwrap();
        let mut cfg = ParticleConfig::new(500, 6);
        let a = run_filter(&mut ParticleFilter::new(&p, &cfg).unwrap(), &obs).unwrap();
        cfg.weight_space = WeightSpace::Linear;
        let b = run_filter(&mut ParticleFilter::new(&p, &cfg).unwrap(), &obs).unwrap();
        for (x, y) in a.probs.iter().zip(&b.probs) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
