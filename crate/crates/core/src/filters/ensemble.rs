use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::weights::{
    effective_sample_size, needs_resampling, normalize_linear_weights, normalize_log_weights,
    resample_indices, ResamplingScheme, WeightSpace, DEFAULT_RESAMPLE_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::rng::{SlotRngs, StreamRng};

/// Ensembles at least this large propagate particles on the rayon pool.
const PARALLEL_MIN_PARTICLES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleConfig {
    pub particles: usize,
    /// η: SIR runs when ESS ≤ ηR.
    pub resample_threshold: f64,
    pub scheme: ResamplingScheme,
    pub weight_space: WeightSpace,
    pub seed: u64,
}

impl ParticleConfig {
    pub fn new(particles: usize, seed: u64) -> Self {
        Self {
            particles,
            resample_threshold: DEFAULT_RESAMPLE_THRESHOLD,
            scheme: ResamplingScheme::Multinomial,
            weight_space: WeightSpace::Log,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::invalid("particles", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.resample_threshold) {
            return Err(Error::invalid("resample_threshold", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Normalised weights, per-slot generators and the resampling machinery
/// shared by every particle filter.
#[derive(Clone, Debug)]
pub(crate) struct Ensemble {
    pub log_weights: Vec<f64>,
    pub weights: Vec<f64>,
    pub increments: Vec<f64>,
    pub rngs: SlotRngs,
    ancestors: Vec<usize>,
    config: ParticleConfig,
}

impl Ensemble {
    pub fn new(config: &ParticleConfig) -> Result<Self> {
        config.validate()?;
        let r = config.particles;
        Ok(Self {
            log_weights: vec![-(r as f64).ln(); r],
            weights: vec![1.0 / r as f64; r],
            increments: vec![0.0; r],
            rngs: SlotRngs::new(config.seed, r),
            ancestors: Vec::with_capacity(r),
            config: config.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// Runs `f` on every (particle, slot generator) pair and stores the
    /// returned log-likelihood increments.
    pub fn propagate<P, F>(&mut self, particles: &mut [P], f: F)
    where
        P: Send,
        F: Fn(usize, &mut P, &mut StreamRng) -> f64 + Sync,
    {
        let rngs = &mut self.rngs.slots;
        if self.weights.len() >= PARALLEL_MIN_PARTICLES {
            particles
                .par_iter_mut()
                .zip(rngs.par_iter_mut())
                .zip(self.increments.par_iter_mut())
                .enumerate()
                .for_each(|(n, ((p, rng), inc))| *inc = f(n, p, rng));
        } else {
            for (n, ((p, rng), inc)) in particles
                .iter_mut()
                .zip(rngs.iter_mut())
                .zip(self.increments.iter_mut())
                .enumerate()
            {
                *inc = f(n, p, rng);
            }
        }
    }

    /// Folds the stored increments into the weights and normalises.
    pub fn reweight(&mut self, step: usize) -> Result<()> {
        match self.config.weight_space {
            WeightSpace::Log => {
                for (lw, inc) in self.log_weights.iter_mut().zip(&self.increments) {
                    *lw += inc;
                }
                normalize_log_weights(&mut self.log_weights, &mut self.weights, step)
            }
            WeightSpace::Linear => {
                for (w, inc) in self.weights.iter_mut().zip(&self.increments) {
                    *w *= inc.exp();
                }
                normalize_linear_weights(&mut self.weights, step)
            }
        }
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(&self.weights)
    }

    /// Draws ancestor indices when the ESS trigger fires and resets the
    /// weights to 1/R. Returns the ancestors of a resample event.
    pub fn maybe_resample(&mut self) -> Result<Option<&[usize]>> {
        if !needs_resampling(&self.weights, self.config.resample_threshold) {
            return Ok(None);
        }
        resample_indices(
            &self.weights,
            self.config.scheme,
            &mut self.rngs.shared,
            &mut self.ancestors,
        )?;
        let r = self.len() as f64;
        self.weights.iter_mut().for_each(|w| *w = 1.0 / r);
        self.log_weights.iter_mut().for_each(|w| *w = -r.ln());
        Ok(Some(&self.ancestors))
    }

    /// Σ_n ω_n 1{regime(n) = i}.
    pub fn marginal(&self, regimes: impl Iterator<Item = usize>, n_regimes: usize) -> Vec<f64> {
        let mut pi = vec![0.0; n_regimes];
        for (w, r) in self.weights.iter().zip(regimes) {
            pi[r] += w;
        }
        pi
    }
}

/// Reorders `items` so that slot n holds the old `items[ancestors[n]]`.
pub(crate) fn gather<T: Copy>(items: &mut [T], ancestors: &[usize], scratch: &mut Vec<T>) {
    scratch.clear();
    scratch.extend(ancestors.iter().map(|&a| items[a]));
    items.copy_from_slice(scratch);
}

/// As [`gather`] for fixed-width rows of a flat buffer.
pub(crate) fn gather_rows(items: &mut [f64], width: usize, ancestors: &[usize], scratch: &mut Vec<f64>) {
    scratch.clear();
    for &a in ancestors {
        scratch.extend_from_slice(&items[a * width..(a + 1) * width]);
    }
    items.copy_from_slice(scratch);
}
