//! Exact fine-grid sampling of (Θ, X) and Riemann-sum observations.
//!
//! On the fine grid t̃_ℓ = ℓ Δt̃ the chain moves first and the OU value then
//! relaxes toward the *new* regime level:
//!
//! ```text
//! Θ̃_{ℓ+1} ~ p(Θ̃_ℓ, ·),   p = exp(Δt̃ Q)
//! X̃_{ℓ+1} = a X̃_ℓ + (1 - a) s(Θ̃_{ℓ+1}) + sqrt((1 - a²)/2) W_ℓ,   a = exp(-Δt̃/ε)
//! ```
//!
//! which is the exact Gaussian OU transition over one substep with the regime
//! frozen. Observations accumulate `Δt̃ Σ h(X̃_ℓ)` over each block of m substeps
//! plus an independent N(0, Δt) increment.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{chain_transition_matrix, Matrix};
use crate::model::{IntensityMatrix, ModelParams};
use crate::rng::{purpose, RngStream};
use crate::svol::SvolParams;

/// One exact OU substep: `a·x + (1-a)·θ + sqrt((1-a²)/2)·noise`.
#[inline]
pub fn ou_step(x: f64, theta_value: f64, a: f64, noise: f64) -> f64 {
    a * x + (1.0 - a) * theta_value + ((1.0 - a * a) / 2.0).sqrt() * noise
}

/// Inverse-CDF draw of the next regime from row `current` of `p`.
#[inline]
pub fn chain_step(current: usize, p: &Matrix, u: f64) -> usize {
    let m = p.ncols();
    let mut acc = 0.0;
    for j in 0..m {
        acc += p[(current, j)];
        if u < acc {
            return j;
        }
    }
    // u landed in the round-off gap above the last partial sum
    (0..m).rev().find(|&j| p[(current, j)] > 0.0).unwrap_or(current)
}

/// Inverse-CDF draw from a probability vector.
#[inline]
pub fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Switches that zero individual noise sources, for deterministic checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseHooks {
    pub ou_noise: bool,
    pub observation_noise: bool,
    pub jumps: bool,
}

impl Default for NoiseHooks {
    fn default() -> Self {
        Self {
            ou_noise: true,
            observation_noise: true,
            jumps: true,
        }
    }
}

/// Per-substep regime transition matrix, constant or recomputed from Q(x).
#[derive(Clone, Debug)]
pub enum TransitionKernel {
    Constant(Matrix),
    StateDependent { q: IntensityMatrix, fine_dt: f64 },
}

impl TransitionKernel {
    pub fn new(q: &IntensityMatrix, fine_dt: f64) -> Self {
        match q {
            IntensityMatrix::Constant(q) => {
                TransitionKernel::Constant(chain_transition_matrix(q, fine_dt))
            }
            other => TransitionKernel::StateDependent {
                q: other.clone(),
                fine_dt,
            },
        }
    }

    #[inline]
    pub fn step(&self, current: usize, x: f64, u: f64) -> usize {
        match self {
            TransitionKernel::Constant(p) => chain_step(current, p, u),
            TransitionKernel::StateDependent { q, fine_dt } => {
                chain_step(current, &chain_transition_matrix(&q.at(x), *fine_dt), u)
            }
        }
    }
}

/// Fine-grid sample path of (Θ̃, X̃) on t̃_ℓ, ℓ = 0..mN.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenPath {
    /// Regime indices (0-based).
    pub theta: Vec<usize>,
    pub x: Vec<f64>,
    /// `ou_noise[ℓ]` is the standard normal that produced `x[ℓ + 1]`.
    pub ou_noise: Vec<f64>,
    pub fine_dt: f64,
    pub substeps: usize,
}

impl HiddenPath {
    pub fn n_obs(&self) -> usize {
        (self.theta.len() - 1) / self.substeps
    }

    /// Θ(t_k) for k = 0..=N.
    pub fn regimes_at_observations(&self) -> Vec<usize> {
        self.theta.iter().step_by(self.substeps).copied().collect()
    }

    /// CSV with header `l,t,theta,x`; regimes are written 1-based.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.theta.len() * 32);
        out.push_str("l,t,theta,x\n");
        for (l, (&th, &x)) in self.theta.iter().zip(&self.x).enumerate() {
            out.push_str(&format!("{l},{},{},{x:e}\n", fmt_time(l as f64 * self.fine_dt), th + 1));
        }
        write_file(path, out.as_bytes())
    }
}

/// Observations Y_0..Y_N at spacing Δt.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSeries {
    pub y: Vec<f64>,
    pub obs_dt: f64,
}

impl ObservationSeries {
    pub fn n_obs(&self) -> usize {
        self.y.len().saturating_sub(1)
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.y.windows(2).map(|w| w[1] - w[0])
    }

    /// CSV with header `k,t,y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.y.len() * 32);
        out.push_str("k,t,y\n");
        for (k, &y) in self.y.iter().enumerate() {
            out.push_str(&format!("{k},{},{y:e}\n", fmt_time(k as f64 * self.obs_dt)));
        }
        write_file(path, out.as_bytes())
    }
}

pub(crate) fn fmt_time(t: f64) -> String {
    // 12 significant digits keeps grid times free of binary noise
    let s = format!("{t:.12e}");
    s.parse::<f64>().map(|v| v.to_string()).unwrap_or(s)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// One observation interval of the fine path: entries ℓ = km+1 ..= (k+1)m.
#[derive(Clone, Debug, Default)]
pub struct PathBlock {
    pub theta: Vec<usize>,
    pub x: Vec<f64>,
    pub ou_noise: Vec<f64>,
}

/// Streams a fine-grid path one observation interval at a time.
pub struct PathSimulator<'a> {
    params: &'a ModelParams,
    kernel: TransitionKernel,
    a: f64,
    rng: ChaCha8Rng,
    hooks: NoiseHooks,
    theta: usize,
    x: f64,
}

impl<'a> PathSimulator<'a> {
    pub fn new(params: &'a ModelParams, stream: RngStream, hooks: NoiseHooks) -> Result<Self> {
        params.validate()?;
        let mut rng = stream.child(&[purpose::PATH]).rng();
        let theta = categorical(&params.rho0, rng.random());
        let x = params.x0.sample(&mut rng);
        Ok(Self {
            params,
            kernel: TransitionKernel::new(&params.q, params.fine_dt()),
            a: params.ar_coefficient(),
            rng,
            hooks,
            theta,
            x,
        })
    }

    pub fn state(&self) -> (usize, f64) {
        (self.theta, self.x)
    }

    pub fn next_block(&mut self, block: &mut PathBlock) {
        let m = self.params.substeps;
        block.theta.clear();
        block.x.clear();
        block.ou_noise.clear();
        for _ in 0..m {
            let u: f64 = self.rng.random();
            let w: f64 = self.rng.sample(StandardNormal);
            if self.hooks.jumps {
                self.theta = self.kernel.step(self.theta, self.x, u);
            }
            let w = if self.hooks.ou_noise { w } else { 0.0 };
            self.x = ou_step(self.x, self.params.space.level(self.theta), self.a, w);
            block.theta.push(self.theta);
            block.x.push(self.x);
            block.ou_noise.push(w);
        }
    }
}

pub fn simulate_path(params: &ModelParams, stream: RngStream) -> Result<HiddenPath> {
    simulate_path_with(params, stream, NoiseHooks::default())
}

pub fn simulate_path_with(
    params: &ModelParams,
    stream: RngStream,
    hooks: NoiseHooks,
) -> Result<HiddenPath> {
    let mut sim = PathSimulator::new(params, stream, hooks)?;
    let len = params.n_obs * params.substeps + 1;
    let (th0, x0) = sim.state();
    let mut path = HiddenPath {
        theta: Vec::with_capacity(len),
        x: Vec::with_capacity(len),
        ou_noise: Vec::with_capacity(len - 1),
        fine_dt: params.fine_dt(),
        substeps: params.substeps,
    };
    path.theta.push(th0);
    path.x.push(x0);
    let mut block = PathBlock::default();
    for _ in 0..params.n_obs {
        sim.next_block(&mut block);
        path.theta.extend_from_slice(&block.theta);
        path.x.extend_from_slice(&block.x);
        path.ou_noise.extend_from_slice(&block.ou_noise);
    }
    Ok(path)
}

fn check_path(path: &HiddenPath, params: &ModelParams) -> Result<()> {
    let expected = params.n_obs * params.substeps + 1;
    if path.theta.len() != expected || path.x.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: path.theta.len(),
        });
    }
    if path.substeps != params.substeps {
        return Err(Error::invalid("substeps", "path was generated with another m"));
    }
    Ok(())
}

struct ObservationNoise {
    rng: ChaCha8Rng,
    enabled: bool,
}

impl ObservationNoise {
    fn new(stream: RngStream, enabled: bool) -> Self {
        Self {
            rng: stream.child(&[purpose::OBSERVATIONS]).rng(),
            enabled,
        }
    }

    fn draw(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        if self.enabled {
            z
        } else {
            0.0
        }
    }
}

fn observation_increment(params: &ModelParams, xs: &[f64], z: f64) -> f64 {
    let drift: f64 = xs.iter().map(|&x| params.h.eval(x)).sum();
    params.fine_dt() * drift + params.delta_t.sqrt() * z
}

/// `Y_{k+1} = Y_k + Δt̃ Σ_{ℓ=mk+1}^{m(k+1)} h(X̃_ℓ) + ΔZ_k`, `ΔZ_k ~ N(0, Δt)`.
pub fn generate_observations(
    path: &HiddenPath,
    params: &ModelParams,
    stream: RngStream,
) -> Result<ObservationSeries> {
    generate_observations_with(path, params, stream, NoiseHooks::default())
}

pub fn generate_observations_with(
    path: &HiddenPath,
    params: &ModelParams,
    stream: RngStream,
    hooks: NoiseHooks,
) -> Result<ObservationSeries> {
    check_path(path, params)?;
    let mut noise = ObservationNoise::new(stream, hooks.observation_noise);
    let m = params.substeps;
    let mut y = Vec::with_capacity(params.n_obs + 1);
    let mut current = params.v0;
    y.push(current);
    for block in path.x[1..].chunks_exact(m) {
        current += observation_increment(params, block, noise.draw());
        y.push(current);
    }
    Ok(ObservationSeries {
        y,
        obs_dt: params.delta_t,
    })
}

/// Streams the path and returns only Θ(t_k) and the observations. Draws are
/// identical to [`simulate_path`] followed by [`generate_observations`].
pub fn simulate_truth_and_observations(
    params: &ModelParams,
    stream: RngStream,
) -> Result<(Vec<usize>, ObservationSeries)> {
    let mut sim = PathSimulator::new(params, stream, NoiseHooks::default())?;
    let mut noise = ObservationNoise::new(stream, true);
    let mut truth = Vec::with_capacity(params.n_obs + 1);
    let mut y = Vec::with_capacity(params.n_obs + 1);
    truth.push(sim.state().0);
    let mut current = params.v0;
    y.push(current);
    let mut block = PathBlock::default();
    for _ in 0..params.n_obs {
        sim.next_block(&mut block);
        current += observation_increment(params, &block.x, noise.draw());
        y.push(current);
        truth.push(*block.theta.last().expect("m >= 1"));
    }
    Ok((
        truth,
        ObservationSeries {
            y,
            obs_dt: params.delta_t,
        },
    ))
}

/// Log-return series of the volatility model:
///
/// `ΔY_k = rΔt − ½ I_k + √ε ρ S_k + sqrt((1 − ερ²) I_k) Z_k`
///
/// with `I_k = Δt̃ Σ h(X̃_ℓ)` and `S_k = Σ sqrt(h(X̃_ℓ)) √Δt̃ W_{ℓ-1}`, the `W` being
/// the same draws that drove the OU path.
pub fn simulate_svol_returns(
    path: &HiddenPath,
    params: &ModelParams,
    svol: &SvolParams,
    stream: RngStream,
) -> Result<ObservationSeries> {
    simulate_svol_returns_with(path, params, svol, stream, NoiseHooks::default())
}

pub fn simulate_svol_returns_with(
    path: &HiddenPath,
    params: &ModelParams,
    svol: &SvolParams,
    stream: RngStream,
    hooks: NoiseHooks,
) -> Result<ObservationSeries> {
    check_path(path, params)?;
    svol.validate(params.epsilon)?;
    let mut noise = ObservationNoise::new(stream, hooks.observation_noise);
    let m = params.substeps;
    let fine_dt = params.fine_dt();
    let sqrt_fine = fine_dt.sqrt();
    let lev = params.epsilon.sqrt() * svol.rho;
    let idio = 1.0 - params.epsilon * svol.rho * svol.rho;
    let mut y = Vec::with_capacity(params.n_obs + 1);
    let mut current = params.v0;
    y.push(current);
    for k in 0..params.n_obs {
        let mut integral = 0.0;
        let mut stoch = 0.0;
        for l in k * m + 1..=(k + 1) * m {
            let hv = params.h.eval(path.x[l]);
            if hv <= 0.0 || !hv.is_finite() {
                return Err(Error::NonPositiveVolatility { step: l, value: hv });
            }
            integral += hv;
            stoch += hv.sqrt() * sqrt_fine * path.ou_noise[l - 1];
        }
        integral *= fine_dt;
        let z = noise.draw();
        current += svol.drift * params.delta_t - 0.5 * integral
            + lev * stoch
            + (idio * integral).sqrt() * z;
        y.push(current);
    }
    Ok(ObservationSeries {
        y,
        obs_dt: params.delta_t,
    })
}
