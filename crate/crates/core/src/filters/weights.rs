//! Importance weights, effective sample size and SIR resampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default fraction η of "important" particles below which SIR is triggered.
pub const DEFAULT_RESAMPLE_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResamplingScheme {
    /// i.i.d. draws from the weighted empirical law (bootstrap SIR).
    #[default]
    Multinomial,
    Systematic,
}

/// Whether per-step likelihood factors are accumulated as logs (with
/// max-subtraction) or multiplied directly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightSpace {
    #[default]
    Log,
    Linear,
}

/// `1 / Σ ω²` for normalised weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// SIR trigger: `ESS ≤ η R`.
pub fn needs_resampling(weights: &[f64], threshold: f64) -> bool {
    effective_sample_size(weights) <= threshold * weights.len() as f64
}

/// Normalises log-weights into `weights` via max-subtraction and rewrites
/// `log_weights` as the logs of the normalised values.
pub fn normalize_log_weights(log_weights: &mut [f64], weights: &mut [f64], step: usize) -> Result<()> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Divergence { step });
    }
    let mut total = 0.0;
    for (w, &lw) in weights.iter_mut().zip(log_weights.iter()) {
        *w = (lw - max).exp();
        total += *w;
    }
    let log_total = total.ln();
    for (w, lw) in weights.iter_mut().zip(log_weights.iter_mut()) {
        *w /= total;
        *lw -= max + log_total;
    }
    Ok(())
}

/// Normalises linear weights in place.
pub fn normalize_linear_weights(weights: &mut [f64], step: usize) -> Result<()> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Divergence { step });
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

/// Draws `weights.len()` ancestor indices.
pub fn resample_indices<R: Rng + ?Sized>(
    weights: &[f64],
    scheme: ResamplingScheme,
    rng: &mut R,
    out: &mut Vec<usize>,
) -> Result<()> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::ZeroWeights);
    }
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &w in weights {
        acc += w / total;
        cdf.push(acc);
    }
    let last = weights.iter().rposition(|&w| w > 0.0).expect("positive mass");
    let pick = |u: f64| cdf.partition_point(|&c| c <= u).min(last);
    out.clear();
    match scheme {
        ResamplingScheme::Multinomial => {
            out.extend((0..n).map(|_| pick(rng.random::<f64>())));
        }
        ResamplingScheme::Systematic => {
            let offset: f64 = rng.random();
            out.extend((0..n).map(|i| pick((i as f64 + offset) / n as f64)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn ess_examples() {
        assert!((effective_sample_size(&[0.01; 100]) - 100.0).abs() < 1e-9);
        let mut one = vec![0.0; 10];
        one[3] = 1.0;
        assert_eq!(effective_sample_size(&one), 1.0);
        let mut half = vec![0.0; 10];
        half[0] = 0.5;
        half[1] = 0.5;
        assert_eq!(effective_sample_size(&half), 2.0);
    }

    #[test]
    fn uniform_weights_never_trigger() {
        let w = vec![0.25; 4];
        for eta in [0.0, 0.5, 0.99] {
            assert!(!needs_resampling(&w, eta));
        }
    }

    #[test]
    fn degenerate_weight_resamples_to_one_particle() {
        let mut rng = RngStream::new(1, 0).rng();
        let w = [0.0, 0.0, 1.0, 0.0];
        let mut out = Vec::new();
        for scheme in [ResamplingScheme::Multinomial, ResamplingScheme::Systematic] {
            resample_indices(&w, scheme, &mut rng, &mut out).unwrap();
            assert_eq!(out, vec![2; 4]);
        }
    }

    #[test]
    fn zero_weights_are_an_error() {
        let mut rng = RngStream::new(1, 0).rng();
        let mut out = Vec::new();
        assert!(matches!(
            resample_indices(&[0.0; 3], ResamplingScheme::Multinomial, &mut rng, &mut out),
            Err(Error::ZeroWeights)
        ));
    }

    #[test]
    fn log_normalisation_survives_underflow() {
        let mut lw = vec![-2000.0, -2001.0, f64::NEG_INFINITY];
        let mut w = vec![0.0; 3];
        normalize_log_weights(&mut lw, &mut w, 0).unwrap();
        let e = (-1f64).exp();
        assert!((w[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let mut dead = vec![f64::NEG_INFINITY; 2];
        assert!(matches!(
            normalize_log_weights(&mut dead, &mut w[..2], 7),
            Err(Error::Divergence { step: 7 })
        ));
    }

    #[test]
    fn multinomial_frequencies() {
        let w = [0.7, 0.2, 0.1];
        let mut rng = RngStream::new(99, 0).rng();
        let mut out = Vec::new();
        let mut counts = [0usize; 3];
        let rounds = 100_000 / 3 + 1;
        for _ in 0..rounds {
            resample_indices(&w, ResamplingScheme::Multinomial, &mut rng, &mut out).unwrap();
            for &i in &out {
                counts[i] += 1;
            }
        }
        let n = (rounds * 3) as f64;
        for (c, p) in counts.iter().zip(w) {
            let sigma = (n * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n * p).abs() < 4.0 * sigma, "{counts:?}");
        }
    }
}
