use std::fmt;
use std::path::{Path, PathBuf};

use avgfilter::experiments::{
    run_delta_t_sweep, run_epsilon_sweep, write_report, zero_one_error, ErrorReport,
    ExperimentConfig, ReportFormat, SweepVariable,
};
use avgfilter::filters::{grid_oracle_filter, LikelihoodKernel};
use avgfilter::model::AveragedModel;
use avgfilter::rng::{derive_seed, purpose};
use avgfilter::simulator::{generate_observations, simulate_path, simulate_svol_returns};
use avgfilter::{
    run_filter, AveragedMatrixFilter, AveragedParticleFilter, Error,
    ParticleConfig, ParticleFilter, Posterior, RbFilter, RngStream,
};

use crate::config::{ConfigError, RunConfig};
use crate::io::{read_observations, read_truth};
use crate::{FilterKind, SweepKind};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "AVGFILTER_OUT_DIR";

#[derive(Debug)]
pub enum Failure {
    /// Bad config, bad input schema or an oracle over budget. Exit code 2.
    Config(String),
    Usage(String),
    /// Exit code 1.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) | Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::OracleBudget { .. }
            | Error::NonlinearObservation
            | Error::StateDependentIntensity
            | Error::Quadrature { .. }
            | Error::Parse { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::load(path)?;
    for w in cfg.model.timescale_warnings() {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = flag
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_manifest(cfg: &RunConfig, dir: &Path) -> Result<(), Failure> {
    let path = dir.join("manifest.cfg");
    std::fs::write(&path, cfg.manifest(dir))
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn averaged_model(cfg: &RunConfig) -> Result<AveragedModel, Failure> {
    AveragedModel::from_params(&cfg.model, cfg.quad_order).map_err(|e| Failure::Config(e.to_string()))
}

pub fn simulate(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.model.seed = s;
    }
    let dir = output_dir(&cfg, out)?;
    let params = &cfg.model;
    let stream = RngStream::new(params.seed, 0);
    let path = simulate_path(params, stream)?;
    let obs = match &cfg.svol {
        Some(sv) => simulate_svol_returns(&path, params, sv, stream)?,
        None => generate_observations(&path, params, stream)?,
    };
    if cfg.output.write_path {
        path.write_csv(&dir.join("path.csv"))?;
    }
    obs.write_csv(&dir.join("observations.csv"))?;
    write_manifest(&cfg, &dir)?;
    println!(
        "simulated {} observations ({} fine steps, fine_dt = {}) into {}",
        obs.n_obs(),
        path.theta.len() - 1,
        params.fine_dt(),
        dir.display()
    );
    Ok(())
}

fn run_kind(cfg: &RunConfig, kind: FilterKind, obs: &avgfilter::ObservationSeries) -> Result<Posterior, Failure> {
    let params = &cfg.model;
    let f = &cfg.filter;
    let mut pc = ParticleConfig::new(f.particles, derive_seed(params.seed, &[purpose::FILTER]));
    pc.resample_threshold = f.resample_threshold;
    pc.scheme = f.scheme;
    pc.weight_space = f.weight_space;
    if cfg.svol.is_some() && kind != FilterKind::AveragedMatrix {
        return Err(Failure::Config(format!(
            "the {} filter is not available for the [svol] observation model; use averaged-matrix",
            kind.name()
        )));
    }
    let post = match kind {
        FilterKind::Optimal => run_filter(&mut ParticleFilter::new(params, &pc)?, obs),
        FilterKind::Rb => run_filter(&mut RbFilter::new(params, &pc)?, obs),
        FilterKind::Averaged => {
            let avg = averaged_model(cfg)?;
            run_filter(&mut AveragedParticleFilter::new(params, &avg, &pc)?, obs)
        }
        FilterKind::AveragedMatrix => {
            let avg = averaged_model(cfg)?;
            let kernel = match &cfg.svol {
                Some(sv) => sv.kernel(obs.obs_dt),
                None => LikelihoodKernel::Gaussian {
                    delta_t: obs.obs_dt,
                },
            };
            let stream = RngStream::new(pc.seed, 0);
            run_filter(
                &mut AveragedMatrixFilter::new(&avg, &params.rho0, kernel, f.path_samples, stream)?,
                obs,
            )
        }
        FilterKind::Oracle => grid_oracle_filter(obs, params, &f.grid),
    };
    post.map_err(|e| match e {
        Error::Divergence { step } => Failure::Runtime(format!(
            "{} filter diverged at observation step {step}: total likelihood mass is zero",
            kind.name()
        )),
        other => other.into(),
    })
}

pub fn filter(
    config: &Path,
    observations: &Path,
    kind: FilterKind,
    truth: Option<&Path>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.model.seed = s;
    }
    let obs = read_observations(observations, cfg.model.delta_t)?;
    cfg.model.n_obs = obs.n_obs();
    let truth = truth
        .map(|t| read_truth(t, cfg.model.substeps, obs.n_obs()))
        .transpose()?;
    let dir = output_dir(&cfg, out)?;
    let post = run_kind(&cfg, kind, &obs)?;
    post.write_csv(&dir.join(format!("posterior_{}.csv", kind.name())))?;
    if cfg.output.ess && post.ess.is_some() {
        post.write_ess_csv(&dir.join(format!("ess_{}.csv", kind.name())))?;
    }
    write_manifest(&cfg, &dir)?;

    let last = post.probs.last().expect("at least one posterior");
    let shown: Vec<String> = last.iter().map(|p| format!("{p:.6}")).collect();
    println!("filter: {}", kind.name());
    println!("steps: {}", obs.n_obs());
    println!("final posterior: [{}]", shown.join(", "));
    if let Some(truth) = truth {
        let map = post.map_estimates();
        let err = zero_one_error(&truth[1..], &map[1..])?;
        println!("zero-one error: {err:.6}");
    }
    Ok(())
}

pub fn experiment(
    config: &Path,
    sweep: SweepKind,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    let Some(exp) = cfg.experiment.clone() else {
        return Err(cfg.missing("experiment", "missing [experiment] section").into());
    };
    let (variable, values) = match sweep {
        SweepKind::Epsilon => match &exp.epsilon_values {
            Some(v) => (SweepVariable::Epsilon, v.clone()),
            None => return Err(cfg.missing("experiment", "missing `epsilon_values` in [experiment]").into()),
        },
        SweepKind::Dt => match &exp.m_values {
            Some(v) => (SweepVariable::Substeps, v.iter().map(|&m| m as f64).collect()),
            None => return Err(cfg.missing("experiment", "missing `m_values` in [experiment]").into()),
        },
    };
    if let Some(s) = seed {
        let n = exp.seeds.len() as u64;
        if let Some(e) = cfg.experiment.as_mut() {
            e.seeds = (s..s + n).collect();
        }
    }
    let exp = cfg.experiment.clone().expect("checked above");
    let mut ec = ExperimentConfig::new(exp.name.clone(), cfg.model.clone(), variable, values);
    ec.filters = exp.filters.clone();
    ec.particles = exp.particles;
    ec.seeds = exp.seeds.clone();
    ec.fine_dt = exp.fine_dt;
    ec.path_samples = cfg.filter.path_samples;
    ec.resample_threshold = cfg.filter.resample_threshold;
    ec.scheme = cfg.filter.scheme;
    ec.record_timing = exp.record_timing;
    ec.validate().map_err(|e| cfg.core_error(e))?;

    let dir = output_dir(&cfg, out)?;
    let report = match variable {
        SweepVariable::Epsilon => run_epsilon_sweep(&ec)?,
        SweepVariable::Substeps => run_delta_t_sweep(&ec)?,
    };
    let csv = write_report(&report, ReportFormat::Csv, &dir)?;
    write_report(&report, ReportFormat::Json, &dir)?;
    write_manifest(&cfg, &dir)?;
    print_report(&report, &ec);
    println!("wrote {}", csv.display());
    Ok(())
}

fn print_report(report: &ErrorReport, ec: &ExperimentConfig) {
    println!("{:>12}  {:<16} {:>10} {:>10}", report.sweep_variable, "filter", "error", "stderr");
    for r in &report.rows {
        println!("{:>12}  {:<16} {:>10.5} {:>10.5}", r.sweep_value, r.filter, r.error, r.stderr);
    }
    let names: Vec<&str> = ec.filters.iter().map(|f| f.name()).collect();
    match ec.sweep {
        SweepVariable::Epsilon if names.contains(&"optimal") && names.contains(&"averaged") => {
            for &v in &ec.values {
                if let Some((g, s)) = report.gap(v, "averaged", "optimal") {
                    println!("gap at epsilon = {v}: {g:.5} +/- {s:.5}");
                }
            }
        }
        SweepVariable::Substeps => {
            for name in names {
                if let Some(m) = report.argmin(name) {
                    println!("{name}: argmin m = {m} (delta_t = {})", m * ec.fine_dt);
                }
            }
        }
        _ => {}
    }
}

pub fn validate(config: &Path) -> Result<(), Failure> {
    let cfg = load(config)?;
    averaged_model(&cfg)?;
    let p = &cfg.model;
    println!(
        "ok: {} regimes, epsilon = {}, delta_t = {}, substeps = {}, fine_dt = {}, n_obs = {}",
        p.n_regimes(),
        p.epsilon,
        p.delta_t,
        p.substeps,
        p.fine_dt(),
        p.n_obs
    );
    Ok(())
}
