use std::path::Path;

use crate::error::{Error, Result};
use crate::simulator::{fmt_time, write_file};

/// Regime posterior π_k for k = 0..=N.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub probs: Vec<Vec<f64>>,
    pub obs_dt: f64,
    /// Effective sample size after each update (particle filters only).
    pub ess: Option<Vec<f64>>,
    /// Filtered mean of X(t_k), when the filter tracks it.
    pub x_mean: Option<Vec<f64>>,
}

/// Argmax of a probability vector; ties go to the lowest index.
pub fn map_estimate(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Total-variation distance `½ Σ |p_i − q_i|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

impl Posterior {
    pub fn new(obs_dt: f64) -> Self {
        Self {
            probs: Vec::new(),
            obs_dt,
            ess: None,
            x_mean: None,
        }
    }

    pub fn n_regimes(&self) -> usize {
        self.probs.first().map_or(0, Vec::len)
    }

    pub fn map_estimates(&self) -> Vec<usize> {
        self.probs.iter().map(|p| map_estimate(p)).collect()
    }

    /// Per-step TV distance to another posterior over the same times.
    pub fn tv_trace(&self, other: &Posterior) -> Result<Vec<f64>> {
        if self.probs.len() != other.probs.len() {
            return Err(Error::LengthMismatch {
                expected: self.probs.len(),
                found: other.probs.len(),
            });
        }
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| total_variation(a, b))
            .collect())
    }

    /// CSV with header `k,t,pi_1,...,pi_M,map`; the MAP index is 1-based.
    pub fn to_csv(&self) -> String {
        let m = self.n_regimes();
        let mut out = String::from("k,t");
        for i in 1..=m {
            out.push_str(&format!(",pi_{i}"));
        }
        out.push_str(",map\n");
        for (k, p) in self.probs.iter().enumerate() {
            out.push_str(&format!("{k},{}", fmt_time(k as f64 * self.obs_dt)));
            for v in p {
                out.push_str(&format!(",{v:.12e}"));
            }
            out.push_str(&format!(",{}\n", map_estimate(p) + 1));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv().as_bytes())
    }

    /// CSV with header `k,t,ess`; empty when the filter has no ESS trace.
    pub fn write_ess_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("k,t,ess\n");
        if let Some(ess) = &self.ess {
            for (k, e) in ess.iter().enumerate() {
                out.push_str(&format!("{k},{},{e:.6}\n", fmt_time(k as f64 * self.obs_dt)));
            }
        }
        write_file(path, out.as_bytes())
    }
}
