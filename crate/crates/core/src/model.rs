//! Model definition: regime levels, intensity matrix, observation function,
//! the OU invariant measures and the averaged coefficients Q̄ and h̄.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quadrature::GaussHermite;

/// Default number of Gauss-Hermite nodes used for averaging.
pub const DEFAULT_QUAD_ORDER: usize = 64;

const ROW_SUM_TOL: f64 = 1e-12;

/// Ordered, distinct regime levels `s_1 < … < s_M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    values: Vec<f64>,
}

impl StateSpace {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("states", "need at least one regime level"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("states", "levels must be finite"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("states", "levels must be strictly increasing"));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn level(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn checked_level(&self, index: usize) -> Result<f64> {
        self.values.get(index).copied().ok_or(Error::IndexOutOfRange {
            index,
            len: self.values.len(),
        })
    }
}

type MatrixFn = dyn Fn(f64) -> Matrix + Send + Sync;

/// Transition intensity matrix of the regime chain, possibly a function of x.
#[derive(Clone)]
pub enum IntensityMatrix {
    Constant(Matrix),
    /// `Q(x)` evaluated pointwise. `rate_bounds` are the (α, β) bounds on `-Q_ii(x)`.
    StateDependent {
        size: usize,
        rate_bounds: (f64, f64),
        eval: Arc<MatrixFn>,
    },
}

impl fmt::Debug for IntensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntensityMatrix::Constant(q) => f.debug_tuple("Constant").field(q).finish(),
            IntensityMatrix::StateDependent {
                size, rate_bounds, ..
            } => f
                .debug_struct("StateDependent")
                .field("size", size)
                .field("rate_bounds", rate_bounds)
                .finish_non_exhaustive(),
        }
    }
}

fn check_generator(q: &Matrix) -> Result<()> {
    if !q.is_square() {
        return Err(Error::invalid("intensity", "matrix must be square"));
    }
    for (i, row) in q.row_iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid("intensity", "entries must be finite"));
            }
            if i != j && v < 0.0 {
                return Err(Error::invalid(
                    "intensity",
                    format!("off-diagonal entry ({}, {}) is negative", i + 1, j + 1),
                ));
            }
        }
        let sum: f64 = row.iter().sum();
        let scale = row.iter().map(|v| v.abs()).fold(1.0, f64::max);
        if sum.abs() > ROW_SUM_TOL * scale {
            return Err(Error::invalid(
                "intensity",
                format!("row {} sums to {sum:e}, not 0", i + 1),
            ));
        }
    }
    Ok(())
}

impl IntensityMatrix {
    pub fn constant(q: Matrix) -> Result<Self> {
        check_generator(&q)?;
        Ok(IntensityMatrix::Constant(q))
    }

    pub fn two_state(up: f64, down: f64) -> Result<Self> {
        Self::constant(Matrix::from_row_slice(2, 2, &[-up, up, down, -down]))
    }

    pub fn state_dependent<F>(size: usize, rate_bounds: (f64, f64), eval: F) -> Result<Self>
    where
        F: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        let (lo, hi) = rate_bounds;
        if !(0.0..=hi).contains(&lo) || !hi.is_finite() {
            return Err(Error::invalid("intensity", "need 0 <= alpha <= beta < inf"));
        }
        Ok(IntensityMatrix::StateDependent {
            size,
            rate_bounds,
            eval: Arc::new(eval),
        })
    }

    pub fn size(&self) -> usize {
        match self {
            IntensityMatrix::Constant(q) => q.nrows(),
            IntensityMatrix::StateDependent { size, .. } => *size,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, IntensityMatrix::Constant(_))
    }

    pub fn at(&self, x: f64) -> Cow<'_, Matrix> {
        match self {
            IntensityMatrix::Constant(q) => Cow::Borrowed(q),
            IntensityMatrix::StateDependent { eval, .. } => Cow::Owned(eval(x)),
        }
    }

    /// Bounds `(α, β)` with `α ≤ -Q_ii ≤ β`.
    pub fn rate_bounds(&self) -> (f64, f64) {
        match self {
            IntensityMatrix::Constant(q) => {
                let rates = q.diagonal().map(|d| -d);
                (rates.min(), rates.max())
            }
            IntensityMatrix::StateDependent { rate_bounds, .. } => *rate_bounds,
        }
    }
}

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Drift function `h` of the observation process.
#[derive(Clone)]
pub enum ObservationFunction {
    /// `h(x) = slope · x`
    Linear { slope: f64 },
    /// `h(x) = amplitude · tanh(x)`
    Tanh { amplitude: f64 },
    /// `h(x) = low + (high - low) / (1 + exp(-rate · x))`; bounded, and positive when `low > 0`.
    Logistic { low: f64, high: f64, rate: f64 },
    Constant { value: f64 },
    /// Arbitrary continuous function with optional known bounds `(inf h, sup h)`.
    Custom {
        eval: Arc<ScalarFn>,
        bounds: Option<(f64, f64)>,
    },
}

impl fmt::Debug for ObservationFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Custom { bounds, .. } => f
                .debug_struct("Custom")
                .field("bounds", bounds)
                .finish_non_exhaustive(),
            other => f.write_str(&other.describe()),
        }
    }
}

impl ObservationFunction {
    pub fn custom<F>(eval: F, bounds: Option<(f64, f64)>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::Custom {
            eval: Arc::new(eval),
            bounds,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Linear { slope } => slope * x,
            Self::Tanh { amplitude } => amplitude * x.tanh(),
            Self::Logistic { low, high, rate } => low + (high - low) / (1.0 + (-rate * x).exp()),
            Self::Constant { value } => *value,
            Self::Custom { eval, .. } => eval(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Self::Linear { slope } => *slope,
            Self::Tanh { amplitude } => amplitude / x.cosh().powi(2),
            Self::Logistic { low, high, rate } => {
                let e = (-rate * x).exp();
                (high - low) * rate * e / (1.0 + e).powi(2)
            }
            Self::Constant { .. } => 0.0,
            Self::Custom { eval, .. } => {
                let step = 1e-5 * x.abs().max(1.0);
                (eval(x + step) - eval(x - step)) / (2.0 * step)
            }
        }
    }

    /// `Some(slope)` when `h(x) = slope · x`.
    pub fn linear_slope(&self) -> Option<f64> {
        match self {
            Self::Linear { slope } => Some(*slope),
            _ => None,
        }
    }

    /// `(inf h, sup h)` when known to be finite.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            Self::Linear { slope } if *slope == 0.0 => Some((0.0, 0.0)),
            Self::Linear { .. } => None,
            Self::Tanh { amplitude } => Some((-amplitude.abs(), amplitude.abs())),
            Self::Logistic { low, high, .. } => Some((low.min(*high), low.max(*high))),
            Self::Constant { value } => Some((*value, *value)),
            Self::Custom { bounds, .. } => *bounds,
        }
    }

    /// Config-grammar form, e.g. `linear(10)`.
    pub fn describe(&self) -> String {
        match self {
            Self::Linear { slope } => format!("linear({slope})"),
            Self::Tanh { amplitude } => format!("tanh({amplitude})"),
            Self::Logistic { low, high, rate } => format!("logistic({low}, {high}, {rate})"),
            Self::Constant { value } => format!("constant({value})"),
            Self::Custom { .. } => "custom".to_string(),
        }
    }
}

/// Law of the initial OU value X(0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialLaw {
    Uniform { low: f64, high: f64 },
    PointMass(f64),
    Gaussian { mean: f64, variance: f64 },
}

impl InitialLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            InitialLaw::PointMass(x) => x,
            InitialLaw::Gaussian { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            InitialLaw::Uniform { low, high } => 0.5 * (low + high),
            InitialLaw::PointMass(x) => x,
            InitialLaw::Gaussian { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            InitialLaw::Uniform { low, high } => (high - low).powi(2) / 12.0,
            InitialLaw::PointMass(_) => 0.0,
            InitialLaw::Gaussian { variance, .. } => variance,
        }
    }

    /// P(X(0) ≤ x).
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            InitialLaw::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            InitialLaw::PointMass(p) => {
                if x >= p {
                    1.0
                } else {
                    0.0
                }
            }
            InitialLaw::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    return if x >= mean { 1.0 } else { 0.0 };
                }
                normal_cdf((x - mean) / variance.sqrt())
            }
        }
    }

    /// An interval holding essentially all of the mass.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            InitialLaw::Uniform { low, high } => (low, high),
            InitialLaw::PointMass(x) => (x, x),
            InitialLaw::Gaussian { mean, variance } => {
                let w = 8.0 * variance.sqrt();
                (mean - w, mean + w)
            }
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            InitialLaw::Uniform { low, high } => format!("uniform({low}, {high})"),
            InitialLaw::PointMass(x) => format!("point({x})"),
            InitialLaw::Gaussian { mean, variance } => format!("gaussian({mean}, {variance})"),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            InitialLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            InitialLaw::PointMass(x) => x.is_finite(),
            InitialLaw::Gaussian { mean, variance } => mean.is_finite() && variance >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("x0", format!("invalid law {}", self.describe())))
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// A time-scale ordering check that did not hold. These are warnings only:
/// the Δt sweep violates the ordering on purpose.
#[derive(Clone, Debug, PartialEq)]
pub enum TimescaleWarning {
    /// ε > Δt/2: observations are not slow relative to mean reversion.
    MeanReversionTooSlow { epsilon: f64, delta_t: f64 },
    /// Δt > 1/(2β): regimes may switch between observations.
    SwitchingTooFast { delta_t: f64, max_rate: f64 },
}

impl fmt::Display for TimescaleWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MeanReversionTooSlow { epsilon, delta_t } => write!(
                f,
                "epsilon = {epsilon} is not small against delta_t = {delta_t} (want epsilon <= delta_t/2)"
            ),
            Self::SwitchingTooFast { delta_t, max_rate } => write!(
                f,
                "delta_t = {delta_t} is not small against the fastest holding time 1/{max_rate} (want delta_t <= 1/(2*beta))"
            ),
        }
    }
}

/// Full specification of the hidden pair (Θ, X) and the observations Y.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub space: StateSpace,
    pub q: IntensityMatrix,
    /// Mean-reversion time ε.
    pub epsilon: f64,
    pub h: ObservationFunction,
    /// Observation interval Δt.
    pub delta_t: f64,
    /// Substeps per observation interval; Δt̃ = Δt / m.
    pub substeps: usize,
    pub n_obs: usize,
    /// Law of Θ(0).
    pub rho0: Vec<f64>,
    pub x0: InitialLaw,
    /// Initial observation value Y_0.
    pub v0: f64,
    pub seed: u64,
}

impl ModelParams {
    /// Two-state reference configuration used in the numerical studies:
    /// levels ±10/3, α = 10, β = 5, h(x) = 10x, Δt = 0.01, m = 5,
    /// X(0) ~ U[-1, 1], uniform ρ0.
    pub fn reference_two_state(epsilon: f64, n_obs: usize, seed: u64) -> Self {
        Self {
            space: StateSpace::new(vec![-10.0 / 3.0, 10.0 / 3.0]).expect("valid levels"),
            q: IntensityMatrix::two_state(10.0, 5.0).expect("valid generator"),
            epsilon,
            h: ObservationFunction::Linear { slope: 10.0 },
            delta_t: 0.01,
            substeps: 5,
            n_obs,
            rho0: vec![0.5, 0.5],
            x0: InitialLaw::Uniform {
                low: -1.0,
                high: 1.0,
            },
            v0: 0.0,
            seed,
        }
    }

    pub fn n_regimes(&self) -> usize {
        self.space.len()
    }

    /// Δt̃ = Δt / m.
    pub fn fine_dt(&self) -> f64 {
        self.delta_t / self.substeps as f64
    }

    /// OU autoregressive coefficient a = exp(-Δt̃/ε).
    pub fn ar_coefficient(&self) -> f64 {
        (-self.fine_dt() / self.epsilon).exp()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.space.len();
        if self.q.size() != m {
            return Err(Error::invalid(
                "intensity",
                format!("matrix is {0}x{0} but there are {m} regimes", self.q.size()),
            ));
        }
        if let IntensityMatrix::Constant(q) = &self.q {
            check_generator(q)?;
        }
        positive("epsilon", self.epsilon)?;
        positive("delta_t", self.delta_t)?;
        if self.substeps == 0 {
            return Err(Error::invalid("substeps", "must be at least 1"));
        }
        if self.n_obs == 0 {
            return Err(Error::invalid("n_obs", "must be at least 1"));
        }
        if self.rho0.len() != m {
            return Err(Error::invalid(
                "rho0",
                format!("has {} entries, expected {m}", self.rho0.len()),
            ));
        }
        if self.rho0.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("rho0", "entries must be nonnegative"));
        }
        let total: f64 = self.rho0.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid("rho0", format!("sums to {total}, not 1")));
        }
        if !self.v0.is_finite() {
            return Err(Error::invalid("v0", "must be finite"));
        }
        self.x0.validate()
    }

    pub fn timescale_warnings(&self) -> Vec<TimescaleWarning> {
        let mut out = Vec::new();
        if self.epsilon > self.delta_t / 2.0 {
            out.push(TimescaleWarning::MeanReversionTooSlow {
                epsilon: self.epsilon,
                delta_t: self.delta_t,
            });
        }
        let (_, max_rate) = self.q.rate_bounds();
        if max_rate > 0.0 && self.delta_t > 1.0 / (2.0 * max_rate) {
            out.push(TimescaleWarning::SwitchingTooFast {
                delta_t: self.delta_t,
                max_rate,
            });
        }
        out
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive, got {v}")))
    }
}

/// Density of the invariant law of X given the frozen regime `s_i`:
/// `μ_i(x) = π^{-1/2} exp(-(x - s_i)²)`, i.e. N(s_i, 1/2).
pub fn invariant_density(space: &StateSpace, regime: usize, x: f64) -> Result<f64> {
    let s = space.checked_level(regime)?;
    Ok((-(x - s).powi(2)).exp() / PI.sqrt())
}

/// Q̄_ij = ∫ Q_ij(x) μ_i(x) dx.
pub fn average_intensity(
    q: &IntensityMatrix,
    space: &StateSpace,
    quad_order: usize,
) -> Result<Matrix> {
    if quad_order < 8 {
        return Err(Error::invalid("quad_order", "must be at least 8"));
    }
    let m = space.len();
    match q {
        IntensityMatrix::Constant(q) => Ok(q.clone()),
        IntensityMatrix::StateDependent { eval, .. } => {
            let gh = GaussHermite::new(quad_order);
            let norm = PI.sqrt().recip();
            let mut out = Matrix::zeros(m, m);
            for i in 0..m {
                let s = space.level(i);
                for (&node, &w) in gh.nodes.iter().zip(&gh.weights) {
                    let x = s + node;
                    let qx = eval(x);
                    for j in 0..m {
                        let v = qx[(i, j)];
                        if !v.is_finite() {
                            return Err(Error::Quadrature { node: x });
                        }
                        out[(i, j)] += w * norm * v;
                    }
                }
            }
            Ok(out)
        }
    }
}

/// h̄_i = ∫ h(x) μ_i(x) dx.
pub fn average_observation(
    h: &ObservationFunction,
    space: &StateSpace,
    quad_order: usize,
) -> Result<Vec<f64>> {
    average_function(|x| h.eval(x), space, quad_order)
}

fn average_function<F: Fn(f64) -> f64>(
    f: F,
    space: &StateSpace,
    quad_order: usize,
) -> Result<Vec<f64>> {
    if quad_order < 8 {
        return Err(Error::invalid("quad_order", "must be at least 8"));
    }
    let gh = GaussHermite::new(quad_order);
    space
        .values()
        .iter()
        .map(|&s| {
            let mut acc = 0.0;
            for (&node, &w) in gh.nodes.iter().zip(&gh.weights) {
                let v = f(s + node);
                if !v.is_finite() {
                    return Err(Error::Quadrature { node: s + node });
                }
                acc += w * v;
            }
            Ok(acc / PI.sqrt())
        })
        .collect()
}

/// Coefficients of the limiting regime-only model.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragedModel {
    pub q_bar: Matrix,
    pub h_bar: Vec<f64>,
    /// Averages of h'·√h, the leverage coefficient of the volatility model.
    /// Present only when h is strictly positive.
    pub leverage_bar: Option<Vec<f64>>,
}

impl AveragedModel {
    pub fn new(q_bar: Matrix, h_bar: Vec<f64>) -> Result<Self> {
        if q_bar.nrows() != h_bar.len() {
            return Err(Error::LengthMismatch {
                expected: q_bar.nrows(),
                found: h_bar.len(),
            });
        }
        check_generator(&q_bar)?;
        Ok(Self {
            q_bar,
            h_bar,
            leverage_bar: None,
        })
    }

    pub fn from_params(params: &ModelParams, quad_order: usize) -> Result<Self> {
        let q_bar = average_intensity(&params.q, &params.space, quad_order)?;
        let h_bar = average_observation(&params.h, &params.space, quad_order)?;
        let leverage_bar = match params.h.bounds() {
            Some((lo, _)) if lo > 0.0 => Some(average_function(
                |x| params.h.derivative(x) * params.h.eval(x).sqrt(),
                &params.space,
                quad_order,
            )?),
            _ => None,
        };
        Ok(Self {
            q_bar,
            h_bar,
            leverage_bar,
        })
    }

    pub fn n_regimes(&self) -> usize {
        self.h_bar.len()
    }
}
