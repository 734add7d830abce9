//! Path-averaged likelihoods of the limiting regime chain and the matrix
//! recursion built on them.
//!
//! For the limit chain Θ̄ with generator Q̄ and `I = ∫_{t_k}^{t_{k+1}} h̄(Θ̄(τ)) dτ`,
//!
//! ```text
//! J_ij = E[ kernel(Δy, I) 1{Θ̄(t_{k+1}) = i} | Θ̄(t_k) = j ]
//! π̄_{k+1} ∝ J π̄_k
//! ```
//!
//! J is estimated by simulating exact continuous-time paths (exponential
//! holding times), so no conditional division is needed.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::RegimeFilter;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::AveragedModel;
use crate::rng::{purpose, RngStream};

pub const MIN_PATH_SAMPLES: usize = 1000;

/// Observation kernel as a function of the increment and the path integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LikelihoodKernel {
    /// `exp(−(Δy − I)² / (2Δt))`.
    Gaussian { delta_t: f64 },
    /// `exp(−(Δy − rΔt + I/2)² / (2I)) / sqrt(I Δt)`.
    Svol { drift: f64, delta_t: f64 },
}

impl LikelihoodKernel {
    pub fn delta_t(&self) -> f64 {
        match *self {
            LikelihoodKernel::Gaussian { delta_t } | LikelihoodKernel::Svol { delta_t, .. } => delta_t,
        }
    }

    pub fn log_eval(&self, dy: f64, integral: f64) -> f64 {
        match *self {
            LikelihoodKernel::Gaussian { delta_t } => {
                let e = dy - integral;
                -e * e / (2.0 * delta_t)
            }
            LikelihoodKernel::Svol { drift, delta_t } => {
                if integral <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let e = dy - drift * delta_t + 0.5 * integral;
                -e * e / (2.0 * integral) - 0.5 * (integral * delta_t).ln()
            }
        }
    }

    pub fn eval(&self, dy: f64, integral: f64) -> f64 {
        self.log_eval(dy, integral).exp()
    }
}

#[derive(Clone, Debug)]
struct StartSamples {
    total: usize,
    /// Paths with no jump all share the integral h̄_j Δt.
    stayed: usize,
    moved: Vec<(usize, f64)>,
}

/// Exact CTMC sample paths over one interval Δt from every start state,
/// reduced to (end state, ∫h̄) pairs.
#[derive(Clone, Debug)]
pub struct PathIntegralEnsemble {
    h_bar: Vec<f64>,
    delta_t: f64,
    starts: Vec<StartSamples>,
}

/// Simulates one path of Θ̄ from `start` and returns (end, ∫h̄ dτ).
pub fn sample_path_integral<R: Rng + ?Sized>(
    avg: &AveragedModel,
    start: usize,
    delta_t: f64,
    rng: &mut R,
) -> (usize, f64) {
    let m = avg.n_regimes();
    let mut state = start;
    let mut t = 0.0;
    let mut integral = 0.0;
    loop {
        let rate = -avg.q_bar[(state, state)];
        let hold = if rate > 0.0 {
            Exp::new(rate).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        };
        if t + hold >= delta_t {
            integral += avg.h_bar[state] * (delta_t - t);
            return (state, integral);
        }
        integral += avg.h_bar[state] * hold;
        t += hold;
        let u: f64 = rng.random::<f64>() * rate;
        let mut acc = 0.0;
        let mut next = state;
        for j in (0..m).filter(|&j| j != state) {
            acc += avg.q_bar[(state, j)];
            next = j;
            if u < acc {
                break;
            }
        }
        state = next;
    }
}

impl PathIntegralEnsemble {
    pub fn simulate<R: Rng + ?Sized>(
        avg: &AveragedModel,
        delta_t: f64,
        samples_per_start: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if samples_per_start < MIN_PATH_SAMPLES {
            return Err(Error::invalid(
                "path_samples",
                format!("need at least {MIN_PATH_SAMPLES}, got {samples_per_start}"),
            ));
        }
        if !(delta_t > 0.0) {
            return Err(Error::invalid("delta_t", "must be positive"));
        }
        let starts = (0..avg.n_regimes())
            .map(|j| {
                let mut s = StartSamples {
                    total: samples_per_start,
                    stayed: 0,
                    moved: Vec::new(),
                };
                for _ in 0..samples_per_start {
                    let (end, integral) = sample_path_integral(avg, j, delta_t, rng);
                    if end == j && integral == avg.h_bar[j] * delta_t {
                        s.stayed += 1;
                    } else {
                        s.moved.push((end, integral));
                    }
                }
                s
            })
            .collect();
        Ok(Self {
            h_bar: avg.h_bar.clone(),
            delta_t,
            starts,
        })
    }

    pub fn n_regimes(&self) -> usize {
        self.h_bar.len()
    }

    pub fn samples_per_start(&self) -> usize {
        self.starts.first().map_or(0, |s| s.total)
    }

    /// Fraction of paths from `j` ending in `i`.
    pub fn endpoint_frequencies(&self) -> Matrix {
        let m = self.n_regimes();
        let mut f = Matrix::zeros(m, m);
        for (j, s) in self.starts.iter().enumerate() {
            f[(j, j)] += s.stayed as f64;
            for &(i, _) in &s.moved {
                f[(i, j)] += 1.0;
            }
            let total = s.total as f64;
            f.column_mut(j).iter_mut().for_each(|v| *v /= total);
        }
        f
    }

    /// Joint matrix for increment `dy`, scaled by `exp(-log_scale)` so that
    /// its largest contribution does not underflow.
    pub fn joint(&self, kernel: &LikelihoodKernel, dy: f64) -> JointEstimate {
        let m = self.n_regimes();
        let dt = self.delta_t;
        let stay_log: Vec<f64> = (0..m).map(|j| kernel.log_eval(dy, self.h_bar[j] * dt)).collect();
        let mut log_scale = f64::NEG_INFINITY;
        for (j, s) in self.starts.iter().enumerate() {
            if s.stayed > 0 {
                log_scale = log_scale.max(stay_log[j]);
            }
            for &(_, integral) in &s.moved {
                log_scale = log_scale.max(kernel.log_eval(dy, integral));
            }
        }
        if !log_scale.is_finite() {
            log_scale = 0.0;
        }
        let mut sum = Matrix::zeros(m, m);
        let mut sum_sq = Matrix::zeros(m, m);
        let mut counts = Matrix::zeros(m, m);
        for (j, s) in self.starts.iter().enumerate() {
            if s.stayed > 0 {
                let v = (stay_log[j] - log_scale).exp();
                sum[(j, j)] += v * s.stayed as f64;
                sum_sq[(j, j)] += v * v * s.stayed as f64;
                counts[(j, j)] += s.stayed as f64;
            }
            for &(i, integral) in &s.moved {
                let v = (kernel.log_eval(dy, integral) - log_scale).exp();
                sum[(i, j)] += v;
                sum_sq[(i, j)] += v * v;
                counts[(i, j)] += 1.0;
            }
        }
        let mut joint = Matrix::zeros(m, m);
        let mut stderr = Matrix::zeros(m, m);
        for j in 0..m {
            let n = self.starts[j].total as f64;
            for i in 0..m {
                let mean = sum[(i, j)] / n;
                let var = (sum_sq[(i, j)] / n - mean * mean).max(0.0);
                joint[(i, j)] = mean;
                stderr[(i, j)] = (var / (n - 1.0)).sqrt();
            }
        }
        JointEstimate {
            joint,
            stderr,
            counts,
            log_scale,
        }
    }
}

/// `J_ij` (end i, start j) with Monte-Carlo standard errors. The true
/// values are `exp(log_scale)` times the stored ones.
#[derive(Clone, Debug, PartialEq)]
pub struct JointEstimate {
    pub joint: Matrix,
    pub stderr: Matrix,
    /// Number of paths from j that ended in i.
    pub counts: Matrix,
    pub log_scale: f64,
}

impl JointEstimate {
    pub fn unscaled(&self) -> Matrix {
        &self.joint * self.log_scale.exp()
    }

    pub fn unscaled_stderr(&self) -> Matrix {
        &self.stderr * self.log_scale.exp()
    }

    /// ψ_ij = J_ij / P̂(end i | start j); absent where no path ended in i.
    pub fn psi(&self) -> PsiMatrix {
        let m = self.joint.nrows();
        let mut values = vec![None; m * m];
        let scale = self.log_scale.exp();
        for j in 0..m {
            let total: f64 = self.counts.column(j).sum();
            for i in 0..m {
                let c = self.counts[(i, j)];
                if c > 0.0 {
                    values[i * m + j] = Some(self.joint[(i, j)] * scale * total / c);
                }
            }
        }
        PsiMatrix { n: m, values }
    }
}

/// ψ_ij(y_{k+1} | y_k): mean kernel over paths from j that end in i.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiMatrix {
    n: usize,
    values: Vec<Option<f64>>,
}

impl PsiMatrix {
    pub fn n_regimes(&self) -> usize {
        self.n
    }

    pub fn get(&self, end: usize, start: usize) -> Option<f64> {
        self.values[end * self.n + start]
    }
}

/// Fresh path ensemble plus Gaussian-kernel ψ for one observation pair.
pub fn estimate_psi<R: Rng + ?Sized>(
    avg: &AveragedModel,
    y_prev: f64,
    y_next: f64,
    delta_t: f64,
    path_samples: usize,
    rng: &mut R,
) -> Result<(PsiMatrix, JointEstimate)> {
    let paths = PathIntegralEnsemble::simulate(avg, delta_t, path_samples, rng)?;
    let joint = paths.joint(&LikelihoodKernel::Gaussian { delta_t }, y_next - y_prev);
    Ok((joint.psi(), joint))
}

/// `π̄_{k+1} ∝ J π̄_k`.
pub fn averaged_matrix_filter_step(pi: &[f64], joint: &Matrix) -> Result<Vec<f64>> {
    averaged_matrix_filter_step_at(pi, joint, 0)
}

fn averaged_matrix_filter_step_at(pi: &[f64], joint: &Matrix, step: usize) -> Result<Vec<f64>> {
    let m = joint.nrows();
    if pi.len() != m || joint.ncols() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: pi.len(),
        });
    }
    let mut next: Vec<f64> = (0..m)
        .map(|i| (0..m).map(|j| joint[(i, j)] * pi[j]).sum())
        .collect();
    let total: f64 = next.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Divergence { step });
    }
    next.iter_mut().for_each(|p| *p /= total);
    Ok(next)
}

/// Averaged filter in matrix-recursion form. One path ensemble is simulated
/// up front and re-weighted for every observation.
pub struct AveragedMatrixFilter {
    paths: PathIntegralEnsemble,
    kernel: LikelihoodKernel,
    pi: Vec<f64>,
}

impl AveragedMatrixFilter {
    pub fn new(
        avg: &AveragedModel,
        rho0: &[f64],
        kernel: LikelihoodKernel,
        path_samples: usize,
        stream: RngStream,
    ) -> Result<Self> {
        if rho0.len() != avg.n_regimes() {
            return Err(Error::LengthMismatch {
                expected: avg.n_regimes(),
                found: rho0.len(),
            });
        }
        let mut rng = stream.child(&[purpose::PSI]).rng();
        let paths = PathIntegralEnsemble::simulate(avg, kernel.delta_t(), path_samples, &mut rng)?;
        Ok(Self {
            paths,
            kernel,
            pi: rho0.to_vec(),
        })
    }

    pub fn paths(&self) -> &PathIntegralEnsemble {
        &self.paths
    }
}

impl RegimeFilter for AveragedMatrixFilter {
    fn n_regimes(&self) -> usize {
        self.pi.len()
    }

    fn posterior(&self) -> Vec<f64> {
        self.pi.clone()
    }

    fn update(&mut self, k: usize, y_prev: f64, y_next: f64) -> Result<Vec<f64>> {
        let joint = self.paths.joint(&self.kernel, y_next - y_prev);
        self.pi = averaged_matrix_filter_step_at(&self.pi, &joint.joint, k + 1)?;
        Ok(self.pi.clone())
    }
}
