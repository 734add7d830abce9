//! 0-1 error sweeps over ε and over the observation interval.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{
    run_filter, AveragedMatrixFilter, AveragedParticleFilter, LikelihoodKernel, ParticleConfig,
    ParticleFilter, Posterior, RbFilter, RegimeFilter, ResamplingScheme,
};
use crate::model::{AveragedModel, IntensityMatrix, ModelParams, DEFAULT_QUAD_ORDER};
use crate::rng::{derive_seed, purpose, RngStream};
use crate::simulator::{simulate_truth_and_observations, write_file};

pub const CSV_HEADER: &str = "sweep_value,filter,error,stderr,runtime_s,seed_count";

/// Fraction of positions where the two sequences differ.
pub fn zero_one_error(truth: &[usize], estimates: &[usize]) -> Result<f64> {
    if truth.len() != estimates.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            found: estimates.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let misses = truth.iter().zip(estimates).filter(|(a, b)| a != b).count();
    Ok(misses as f64 / truth.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    Epsilon,
    /// Substeps m at fixed Δt̃, so Δt = m Δt̃.
    Substeps,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::Epsilon => "epsilon",
            SweepVariable::Substeps => "dt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentFilter {
    /// RB filter for linear h and constant Q, otherwise the particle filter.
    Optimal,
    Averaged,
    AveragedMatrix,
}

impl ExperimentFilter {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentFilter::Optimal => "optimal",
            ExperimentFilter::Averaged => "averaged",
            ExperimentFilter::AveragedMatrix => "averaged-matrix",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "optimal" => Some(ExperimentFilter::Optimal),
            "averaged" => Some(ExperimentFilter::Averaged),
            "averaged-matrix" => Some(ExperimentFilter::AveragedMatrix),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParticleSchedule {
    Fixed(usize),
    /// R = round(factor · log2 m), at least 1.
    Log2Substeps(f64),
}

impl ParticleSchedule {
    pub fn particles(&self, substeps: usize) -> usize {
        match *self {
            ParticleSchedule::Fixed(r) => r,
            ParticleSchedule::Log2Substeps(f) => ((f * (substeps as f64).log2()).round() as usize).max(1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub name: String,
    pub base: ModelParams,
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    pub filters: Vec<ExperimentFilter>,
    pub particles: ParticleSchedule,
    pub seeds: Vec<u64>,
    /// Fixed Δt̃ for the substep sweep.
    pub fine_dt: f64,
    pub path_samples: usize,
    pub resample_threshold: f64,
    pub scheme: ResamplingScheme,
    /// Record wall-clock runtimes; off by default so reruns are byte-identical.
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, base: ModelParams, sweep: SweepVariable, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            base,
            sweep,
            values,
            filters: vec![ExperimentFilter::Optimal, ExperimentFilter::Averaged],
            particles: ParticleSchedule::Fixed(100),
            seeds: (0..10).collect(),
            fine_dt: 1e-4,
            path_samples: 10_000,
            resample_threshold: crate::filters::weights::DEFAULT_RESAMPLE_THRESHOLD,
            scheme: ResamplingScheme::Multinomial,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("values", "sweep list is empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "seed list is empty"));
        }
        for &v in &self.values {
            match self.sweep {
                SweepVariable::Epsilon if !(v > 0.0 && v.is_finite()) => {
                    return Err(Error::invalid("values", format!("epsilon {v} must be positive")));
                }
                SweepVariable::Substeps if !(v >= 1.0 && v.fract() == 0.0) => {
                    return Err(Error::invalid("values", format!("substep count {v} must be a positive integer")));
                }
                _ => {}
            }
        }
        if self.sweep == SweepVariable::Substeps && !(self.fine_dt > 0.0) {
            return Err(Error::invalid("fine_dt", "must be positive"));
        }
        for &v in &self.values {
            let p = self.params_for(v);
            if self.particles.particles(p.substeps) == 0 {
                return Err(Error::invalid("particles", "must be positive"));
            }
            p.validate()?;
        }
        Ok(())
    }

    /// Model parameters at one sweep value.
    pub fn params_for(&self, value: f64) -> ModelParams {
        let mut p = self.base.clone();
        match self.sweep {
            SweepVariable::Epsilon => p.epsilon = value,
            SweepVariable::Substeps => {
                p.substeps = value as usize;
                p.delta_t = self.fine_dt * value;
            }
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sweep_value: f64,
    pub filter: String,
    pub error: f64,
    pub stderr: f64,
    pub runtime_s: f64,
    pub seed_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub experiment: String,
    pub sweep_variable: String,
    pub rows: Vec<ReportRow>,
    /// Per-seed errors aligned with `rows`.
    pub seed_errors: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
    pub build: String,
    /// Free-form configuration echo.
    pub config: serde_json::Value,
}

/// Mean and standard error over independent replicates.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl ErrorReport {
    pub fn row(&self, sweep_value: f64, filter: &str) -> Option<(&ReportRow, &[f64])> {
        self.rows
            .iter()
            .zip(&self.seed_errors)
            .find(|(r, _)| r.sweep_value == sweep_value && r.filter == filter)
            .map(|(r, e)| (r, e.as_slice()))
    }

    /// Paired difference `error(a) − error(b)` at one sweep value with its
    /// seed-level standard error.
    pub fn gap(&self, sweep_value: f64, a: &str, b: &str) -> Option<(f64, f64)> {
        let (_, ea) = self.row(sweep_value, a)?;
        let (_, eb) = self.row(sweep_value, b)?;
        let diffs: Vec<f64> = ea.iter().zip(eb).map(|(x, y)| x - y).collect();
        Some(mean_and_stderr(&diffs))
    }

    /// Sweep value with the smallest error for `filter`.
    pub fn argmin(&self, filter: &str) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.filter == filter)
            .min_by(|a, b| a.error.total_cmp(&b.error))
            .map(|r| r.sweep_value)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.sweep_value, r.filter, r.error, r.stderr, r.runtime_s, r.seed_count
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Base path of the report files: `{dir}/{experiment}_{sweepvar}`.
    pub fn file_stem(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_{}", self.experiment, self.sweep_variable))
    }
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let bad = |line: usize, msg: &str| Error::Parse {
        path: PathBuf::from("<report>"),
        message: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(i + 2, "expected 6 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
            Ok(ReportRow {
                sweep_value: num(f[0])?,
                filter: f[1].to_string(),
                error: num(f[2])?,
                stderr: num(f[3])?,
                runtime_s: num(f[4])?,
                seed_count: f[5].parse().map_err(|_| bad(i + 2, "bad seed count"))?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Writes `{experiment}_{sweepvar}.csv` or `.json` into `dir`.
pub fn write_report(report: &ErrorReport, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    let stem = report.file_stem(dir);
    let (path, body) = match format {
        ReportFormat::Csv => (stem.with_extension("csv"), report.to_csv()),
        ReportFormat::Json => (stem.with_extension("json"), report.to_json()? + "\n"),
    };
    write_file(&path, body.as_bytes())?;
    Ok(path)
}

/// Builds the filter used for `choice` on one simulated trajectory.
pub fn build_filter(
    choice: ExperimentFilter,
    params: &ModelParams,
    avg: &AveragedModel,
    config: &ParticleConfig,
    path_samples: usize,
) -> Result<Box<dyn RegimeFilter + Send>> {
    Ok(match choice {
        ExperimentFilter::Optimal => {
            let rb_ok = params.h.linear_slope().is_some() && matches!(params.q, IntensityMatrix::Constant(_));
            if rb_ok {
                Box::new(RbFilter::new(params, config)?)
            } else {
                Box::new(ParticleFilter::new(params, config)?)
            }
        }
        ExperimentFilter::Averaged => Box::new(AveragedParticleFilter::new(params, avg, config)?),
        ExperimentFilter::AveragedMatrix => Box::new(AveragedMatrixFilter::new(
            avg,
            &params.rho0,
            LikelihoodKernel::Gaussian {
                delta_t: params.delta_t,
            },
            path_samples,
            RngStream::new(config.seed, 0),
        )?),
    })
}

struct CellResult {
    errors: Vec<f64>,
    runtimes: Vec<f64>,
}

fn run_cell(cfg: &ExperimentConfig, value_index: usize, seed: u64) -> Result<CellResult> {
    let value = cfg.values[value_index];
    let mut params = cfg.params_for(value);
    let cell_seed = derive_seed(seed, &[value_index as u64, value.to_bits()]);
    params.seed = cell_seed;
    let (truth, obs) = simulate_truth_and_observations(&params, RngStream::new(cell_seed, 0))?;
    let avg = AveragedModel::from_params(&params, DEFAULT_QUAD_ORDER)?;
    let mut errors = Vec::with_capacity(cfg.filters.len());
    let mut runtimes = Vec::with_capacity(cfg.filters.len());
    for (fi, &choice) in cfg.filters.iter().enumerate() {
        let mut pc = ParticleConfig::new(
            cfg.particles.particles(params.substeps),
            derive_seed(cell_seed, &[purpose::FILTER, fi as u64]),
        );
        pc.resample_threshold = cfg.resample_threshold;
        pc.scheme = cfg.scheme;
        let start = Instant::now();
        let mut filter = build_filter(choice, &params, &avg, &pc, cfg.path_samples)?;
        let post: Posterior = run_filter(filter.as_mut(), &obs).map_err(|e| match e {
            Error::Divergence { step } => Error::Numerical(format!(
                "{} filter diverged at step {step} ({} = {value}, seed {seed})",
                choice.name(),
                cfg.sweep.name()
            )),
            other => other,
        })?;
        runtimes.push(start.elapsed().as_secs_f64());
        let map = post.map_estimates();
        errors.push(zero_one_error(&truth[1..], &map[1..])?);
    }
    Ok(CellResult { errors, runtimes })
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    cfg.validate()?;
    let cells: Vec<(usize, u64)> = (0..cfg.values.len())
        .flat_map(|v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|&(v, s)| run_cell(cfg, v, s))
        .collect::<Result<_>>()?;
    let n_seeds = cfg.seeds.len();
    let mut rows = Vec::new();
    let mut seed_errors = Vec::new();
    for (v, &value) in cfg.values.iter().enumerate() {
        let block = &results[v * n_seeds..(v + 1) * n_seeds];
        for (fi, choice) in cfg.filters.iter().enumerate() {
            let errs: Vec<f64> = block.iter().map(|c| c.errors[fi]).collect();
            let (error, stderr) = mean_and_stderr(&errs);
            let runtime_s = if cfg.record_timing {
                block.iter().map(|c| c.runtimes[fi]).sum::<f64>() / n_seeds as f64
            } else {
                0.0
            };
            rows.push(ReportRow {
                sweep_value: value,
                filter: choice.name().to_string(),
                error,
                stderr,
                runtime_s,
                seed_count: n_seeds,
            });
            seed_errors.push(errs);
        }
    }
    Ok(ErrorReport {
        experiment: cfg.name.clone(),
        sweep_variable: cfg.sweep.name().to_string(),
        rows,
        seed_errors,
        seeds: cfg.seeds.clone(),
        build: concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION")).to_string(),
        config: config_echo(cfg),
    })
}

fn config_echo(cfg: &ExperimentConfig) -> serde_json::Value {
    let p = &cfg.base;
    serde_json::json!({
        "sweep": cfg.sweep,
        "values": cfg.values,
        "filters": cfg.filters,
        "particles": cfg.particles,
        "fine_dt": cfg.fine_dt,
        "path_samples": cfg.path_samples,
        "resample_threshold": cfg.resample_threshold,
        "scheme": cfg.scheme,
        "model": {
            "levels": p.space.values(),
            "epsilon": p.epsilon,
            "h": p.h.describe(),
            "delta_t": p.delta_t,
            "substeps": p.substeps,
            "n_obs": p.n_obs,
            "rho0": p.rho0,
            "x0": p.x0.describe(),
        },
    })
}

/// 0-1 errors of the configured filters for every ε in the sweep.
pub fn run_epsilon_sweep(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    if cfg.sweep != SweepVariable::Epsilon {
        return Err(Error::invalid("sweep", "expected an epsilon sweep"));
    }
    run_sweep(cfg)
}

/// 0-1 errors for every substep count m at fixed Δt̃ (Δt = m Δt̃).
pub fn run_delta_t_sweep(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    if cfg.sweep != SweepVariable::Substeps {
        return Err(Error::invalid("sweep", "expected a substep sweep"));
    }
    run_sweep(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_one_examples() {
        assert_eq!(zero_one_error(&[0, 1, 1], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(zero_one_error(&[0, 1, 0], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(zero_one_error(&[0, 1, 0, 1], &[0, 1, 1, 0]).unwrap(), 0.5);
        assert!(zero_one_error(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn particle_schedule() {
        assert_eq!(ParticleSchedule::Log2Substeps(20.0).particles(2), 20);
        assert_eq!(ParticleSchedule::Log2Substeps(20.0).particles(256), 160);
        assert_eq!(ParticleSchedule::Fixed(7).particles(64), 7);
    }

    #[test]
    fn stuck_chain_is_easy() {
        let mut base = ModelParams::reference_two_state(0.01, 200, 0);
        base.q = IntensityMatrix::two_state(10.0, 0.0).unwrap();
        base.rho0 = vec![0.0, 1.0];
        let mut cfg = ExperimentConfig::new("stuck", base, SweepVariable::Epsilon, vec![0.01]);
        cfg.seeds = vec![1, 2];
        let report = run_epsilon_sweep(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        for r in &report.rows {
            assert_eq!(r.error, 0.0);
        }
    }

    #[test]
    fn single_value_gives_one_row() {
        let mut cfg = ExperimentConfig::new(
            "one",
            ModelParams::reference_two_state(0.01, 50, 0),
            SweepVariable::Substeps,
            vec![4.0],
        );
        cfg.filters = vec![ExperimentFilter::Averaged];
        cfg.particles = ParticleSchedule::Log2Substeps(20.0);
        cfg.seeds = vec![3];
        let report = run_delta_t_sweep(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.argmin("averaged"), Some(4.0));
    }

    #[test]
    fn csv_shapes() {
        let mut report = ErrorReport {
            experiment: "x".into(),
            sweep_variable: "epsilon".into(),
            rows: vec![],
            seed_errors: vec![],
            seeds: vec![],
            build: String::new(),
            config: serde_json::Value::Null,
        };
        assert_eq!(report.to_csv(), format!("{CSV_HEADER}\n"));
        report.rows.push(ReportRow {
            sweep_value: 0.005,
            filter: "averaged".into(),
            error: 0.123456789012345,
            stderr: 1e-3 / 3.0,
            runtime_s: 0.0,
            seed_count: 10,
        });
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(parse_report_csv(&csv).unwrap(), report.rows);
    }
}
