//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! [model]
//! levels = -10/3, 10/3          # numbers accept p/q fractions
//! q = -10, 10; 5, -5            # rows separated by ';'
//! epsilon = 0.01
//! h = linear(10)                # linear(c) | tanh(a) | logistic(lo, hi, rate) | constant(c)
//! delta_t = 0.01
//! substeps = 5
//! n_obs = 10000
//! ```
//!
//! Sections: `[model]`, `[filter]`, `[svol]`, `[experiment]`, `[output]`.
//! Unknown sections and keys are rejected with their line and column.

use std::fmt;
use std::path::{Path, PathBuf};

use avgfilter::experiments::{ExperimentFilter, ParticleSchedule};
use avgfilter::filters::weights::DEFAULT_RESAMPLE_THRESHOLD;
use avgfilter::model::DEFAULT_QUAD_ORDER;
use avgfilter::{
    Error, GridConfig, InitialLaw, IntensityMatrix, Matrix, ModelParams, ObservationFunction,
    StateSpace, SvolParams,
};
use avgfilter::filters::{ResamplingScheme, WeightSpace};

const SCHEMA: &[(&str, &[&str])] = &[
    (
        "model",
        &[
            "levels", "q", "epsilon", "h", "delta_t", "substeps", "fine_dt", "n_obs", "rho0",
            "x0", "v0", "seed", "quad_order",
        ],
    ),
    (
        "filter",
        &[
            "particles",
            "resample_threshold",
            "resampling",
            "weights",
            "path_samples",
            "grid_x_cells",
            "grid_v_nodes",
            "grid_x_min",
            "grid_x_max",
            "grid_budget",
        ],
    ),
    ("svol", &["drift", "rho"]),
    (
        "experiment",
        &[
            "name",
            "epsilon_values",
            "m_values",
            "fine_dt",
            "filters",
            "particles",
            "particles_per_log2m",
            "seeds",
            "record_timing",
        ],
    ),
    ("output", &["dir", "write_path", "ess"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}: {}", self.path, self.message)
        } else {
            write!(f, "{}:{}:{}: {}", self.path, self.line, self.col, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
    col: usize,
    value_col: usize,
}

#[derive(Debug, Clone)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

/// Parsed but untyped configuration.
#[derive(Debug, Clone)]
pub struct RawConfig {
    path: String,
    sections: Vec<Section>,
}

impl RawConfig {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let err = |line, col, message: String| ConfigError {
            path: path.to_string(),
            line,
            col,
            message,
        };
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            let trimmed = content.trim();
            if trimmed.is_empty() {
                continue;
            }
            let indent = content.len() - content.trim_start().len();
            if let Some(rest) = trimmed.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(err(line_no, indent + 1, "unterminated section header".into()));
                };
                let name = name.trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(err(line_no, indent + 2, format!("unknown section [{name}]")));
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(err(line_no, indent + 2, format!("duplicate section [{name}]")));
                }
                sections.push(Section {
                    name: name.to_string(),
                    line: line_no,
                    entries: Vec::new(),
                });
                continue;
            }
            let Some(eq) = content.find('=') else {
                return Err(err(line_no, indent + 1, "expected `key = value`".into()));
            };
            let key = content[..eq].trim();
            let value = content[eq + 1..].trim();
            let value_col = eq + 2 + (content[eq + 1..].len() - content[eq + 1..].trim_start().len());
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(line_no, indent + 1, format!("invalid key `{key}`")));
            }
            let Some(section) = sections.last_mut() else {
                return Err(err(line_no, indent + 1, format!("key `{key}` appears before any [section]")));
            };
            let allowed = SCHEMA
                .iter()
                .find(|(s, _)| *s == section.name)
                .map(|(_, k)| *k)
                .unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(err(
                    line_no,
                    indent + 1,
                    format!("unknown key `{key}` in [{}]", section.name),
                ));
            }
            if section.entries.iter().any(|e| e.key == key) {
                return Err(err(line_no, indent + 1, format!("duplicate key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(line_no, value_col, format!("`{key}` has no value")));
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line: line_no,
                col: indent + 1,
                value_col,
            });
        }
        Ok(Self {
            path: path.to_string(),
            sections,
        })
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.iter().any(|s| s.name == name)
    }

    fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.section(section)?.entries.iter().find(|e| e.key == key)
    }

    fn error_at(&self, entry: &Entry, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line: entry.line,
            col: entry.value_col,
            message: format!("{}: {}", entry.key, message.into()),
        }
    }

    fn error(&self, section: &str, message: impl Into<String>) -> ConfigError {
        let line = self.section(section).map_or(0, |s| s.line);
        ConfigError {
            path: self.path.clone(),
            line,
            col: if line == 0 { 0 } else { 1 },
            message: message.into(),
        }
    }

    /// Location of `key` when present, else of its section.
    fn locate(&self, section: &str, key: &str, message: String) -> ConfigError {
        match self.get(section, key) {
            Some(e) => ConfigError {
                path: self.path.clone(),
                line: e.line,
                col: e.col,
                message,
            },
            None => self.error(section, message),
        }
    }

    fn typed<T>(
        &self,
        section: &str,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(Some).map_err(|m| self.error_at(e, m)),
        }
    }

    fn required<T>(
        &self,
        section: &str,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, ConfigError> {
        self.typed(section, key, parse)?
            .ok_or_else(|| self.error(section, format!("missing required key `{key}` in [{section}]")))
    }
}

pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| format!("invalid number `{s}`"))?;
            let q: f64 = q.trim().parse().map_err(|_| format!("invalid number `{s}`"))?;
            if q == 0.0 {
                return Err(format!("zero denominator in `{s}`"));
            }
            p / q
        }
        None => s.parse().map_err(|_| format!("invalid number `{s}`"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_count(s: &str) -> Result<usize, String> {
    let v = parse_number(s)?;
    if v < 0.0 || v.fract() != 0.0 || v > 9.0e15 {
        return Err(format!("expected a nonnegative integer, got `{}`", s.trim()));
    }
    Ok(v as usize)
}

fn parse_u64(s: &str) -> Result<u64, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("expected an unsigned integer, got `{}`", s.trim()))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_number).collect()
}

fn parse_matrix(s: &str) -> Result<Matrix, String> {
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_list).collect::<Result<_, _>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(format!("expected a square matrix, got {n} rows of unequal or wrong length"));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, got `{other}`")),
    }
}

fn parse_string(s: &str) -> Result<String, String> {
    let s = s.trim();
    let s = s
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .unwrap_or(s);
    if s.is_empty() {
        Err("empty string".into())
    } else {
        Ok(s.to_string())
    }
}

fn parse_call(s: &str) -> Result<(String, Vec<f64>), String> {
    let s = s.trim();
    let (name, rest) = s
        .split_once('(')
        .ok_or_else(|| format!("expected `name(args)`, got `{s}`"))?;
    let args = rest
        .strip_suffix(')')
        .ok_or_else(|| format!("missing `)` in `{s}`"))?;
    let args = if args.trim().is_empty() {
        Vec::new()
    } else {
        parse_list(args)?
    };
    Ok((name.trim().to_string(), args))
}

fn parse_h(s: &str) -> Result<ObservationFunction, String> {
    let (name, a) = parse_call(s)?;
    let arity = |n: usize| {
        if a.len() == n {
            Ok(())
        } else {
            Err(format!("{name} takes {n} argument(s), got {}", a.len()))
        }
    };
    match name.as_str() {
        "linear" => arity(1).map(|_| ObservationFunction::Linear { slope: a[0] }),
        "tanh" => arity(1).map(|_| ObservationFunction::Tanh { amplitude: a[0] }),
        "logistic" => arity(3).map(|_| ObservationFunction::Logistic {
            low: a[0],
            high: a[1],
            rate: a[2],
        }),
        "constant" => arity(1).map(|_| ObservationFunction::Constant { value: a[0] }),
        other => Err(format!(
            "unknown function `{other}` (expected linear, tanh, logistic or constant)"
        )),
    }
}

fn parse_x0(s: &str) -> Result<InitialLaw, String> {
    let (name, a) = parse_call(s)?;
    match (name.as_str(), a.len()) {
        ("uniform", 2) => Ok(InitialLaw::Uniform { low: a[0], high: a[1] }),
        ("point", 1) => Ok(InitialLaw::PointMass(a[0])),
        ("gaussian", 2) => Ok(InitialLaw::Gaussian {
            mean: a[0],
            variance: a[1],
        }),
        _ => Err(format!(
            "expected uniform(lo, hi), point(x) or gaussian(mean, variance), got `{}`",
            s.trim()
        )),
    }
}

fn parse_scheme(s: &str) -> Result<ResamplingScheme, String> {
    match s.trim() {
        "multinomial" => Ok(ResamplingScheme::Multinomial),
        "systematic" => Ok(ResamplingScheme::Systematic),
        other => Err(format!("expected multinomial or systematic, got `{other}`")),
    }
}

fn parse_weight_space(s: &str) -> Result<WeightSpace, String> {
    match s.trim() {
        "log" => Ok(WeightSpace::Log),
        "linear" => Ok(WeightSpace::Linear),
        other => Err(format!("expected log or linear, got `{other}`")),
    }
}

fn parse_filters(s: &str) -> Result<Vec<ExperimentFilter>, String> {
    s.split(',')
        .map(|f| {
            ExperimentFilter::parse(f.trim()).ok_or_else(|| {
                format!("unknown filter `{}` (expected optimal, averaged or averaged-matrix)", f.trim())
            })
        })
        .collect()
}

/// `a..b` (half-open) or a comma-separated list.
fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a = parse_u64(a)?;
        let b = parse_u64(b)?;
        if b <= a {
            return Err(format!("empty seed range `{}`", s.trim()));
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(parse_u64).collect()
}

fn resampling_name(s: ResamplingScheme) -> &'static str {
    match s {
        ResamplingScheme::Multinomial => "multinomial",
        ResamplingScheme::Systematic => "systematic",
    }
}

fn weight_space_name(w: WeightSpace) -> &'static str {
    match w {
        WeightSpace::Log => "log",
        WeightSpace::Linear => "linear",
    }
}

#[derive(Debug, Clone)]
pub struct FilterSettings {
    pub particles: usize,
    pub resample_threshold: f64,
    pub scheme: ResamplingScheme,
    pub weight_space: WeightSpace,
    pub path_samples: usize,
    pub grid: GridConfig,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            particles: 1000,
            resample_threshold: DEFAULT_RESAMPLE_THRESHOLD,
            scheme: ResamplingScheme::Multinomial,
            weight_space: WeightSpace::Log,
            path_samples: 10_000,
            grid: GridConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSettings {
    pub name: String,
    pub epsilon_values: Option<Vec<f64>>,
    pub m_values: Option<Vec<usize>>,
    pub fine_dt: f64,
    pub filters: Vec<ExperimentFilter>,
    pub particles: ParticleSchedule,
    pub seeds: Vec<u64>,
    pub record_timing: bool,
}

#[derive(Debug, Clone)]
pub struct OutputSettings {
    pub dir: Option<PathBuf>,
    pub write_path: bool,
    pub ess: bool,
}

/// Fully typed configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub model: ModelParams,
    pub quad_order: usize,
    pub filter: FilterSettings,
    pub svol: Option<SvolParams>,
    pub experiment: Option<ExperimentSettings>,
    pub output: OutputSettings,
}

/// Config key holding the parameter a core validation error names.
fn key_for(name: &str) -> (&'static str, &str) {
    match name {
        "intensity" => ("model", "q"),
        "drift" | "rho" => ("svol", name),
        "particles" | "resample_threshold" | "path_samples" => ("filter", name),
        _ => ("model", name),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: shown.clone(),
            line: 0,
            col: 0,
            message: format!("cannot read config: {e}"),
        })?;
        Self::from_str(&text, &shown)
    }

    pub fn from_str(text: &str, path: &str) -> Result<Self, ConfigError> {
        let raw = RawConfig::parse(text, path)?;
        if !raw.has_section("model") {
            return Err(raw.error("model", "missing required section [model]"));
        }
        let levels_entry = raw.get("model", "levels");
        let levels = raw.required("model", "levels", parse_list)?;
        let space = StateSpace::new(levels).map_err(|e| match levels_entry {
            Some(en) => raw.error_at(en, e.to_string()),
            None => raw.error("model", e.to_string()),
        })?;
        let q_entry = raw.get("model", "q");
        let q = raw.required("model", "q", parse_matrix)?;
        let q = IntensityMatrix::constant(q).map_err(|e| match q_entry {
            Some(en) => raw.error_at(en, e.to_string()),
            None => raw.error("model", e.to_string()),
        })?;
        let m = space.len();
        let model = ModelParams {
            q,
            epsilon: raw.required("model", "epsilon", parse_number)?,
            h: raw.required("model", "h", parse_h)?,
            delta_t: raw.required("model", "delta_t", parse_number)?,
            substeps: raw.required("model", "substeps", parse_count)?,
            n_obs: raw.required("model", "n_obs", parse_count)?,
            rho0: raw
                .typed("model", "rho0", parse_list)?
                .unwrap_or_else(|| vec![1.0 / m as f64; m]),
            x0: raw
                .typed("model", "x0", parse_x0)?
                .unwrap_or(InitialLaw::Uniform { low: -1.0, high: 1.0 }),
            v0: raw.typed("model", "v0", parse_number)?.unwrap_or(0.0),
            seed: raw.typed("model", "seed", parse_u64)?.unwrap_or(0),
            space,
        };
        model.validate().map_err(|e| map_core_error(&raw, e))?;
        if let Some(fine_dt) = raw.typed("model", "fine_dt", parse_number)? {
            let resolved = model.fine_dt();
            if (fine_dt - resolved).abs() > 1e-9 * resolved {
                let e = raw.get("model", "fine_dt").expect("key present");
                return Err(raw.error_at(
                    e,
                    format!("{fine_dt} disagrees with delta_t / substeps = {resolved}"),
                ));
            }
        }
        let quad_order = raw
            .typed("model", "quad_order", parse_count)?
            .unwrap_or(DEFAULT_QUAD_ORDER);
        if !(2..=256).contains(&quad_order) {
            let e = raw.get("model", "quad_order").expect("key present");
            return Err(raw.error_at(e, "must lie in 2..=256"));
        }

        let filter = Self::filter_settings(&raw)?;

        let svol = if raw.has_section("svol") {
            let s = SvolParams {
                drift: raw.typed("svol", "drift", parse_number)?.unwrap_or(0.0),
                rho: raw.typed("svol", "rho", parse_number)?.unwrap_or(0.0),
            };
            s.validate(model.epsilon).map_err(|e| map_core_error(&raw, e))?;
            Some(s)
        } else {
            None
        };

        let experiment = if raw.has_section("experiment") {
            Some(Self::experiment_settings(&raw)?)
        } else {
            None
        };

        let output = OutputSettings {
            dir: raw.typed("output", "dir", parse_string)?.map(PathBuf::from),
            write_path: raw.typed("output", "write_path", parse_bool)?.unwrap_or(true),
            ess: raw.typed("output", "ess", parse_bool)?.unwrap_or(false),
        };

        Ok(Self {
            raw,
            model,
            quad_order,
            filter,
            svol,
            experiment,
            output,
        })
    }

    fn filter_settings(raw: &RawConfig) -> Result<FilterSettings, ConfigError> {
        let d = FilterSettings::default();
        let particles = raw.typed("filter", "particles", parse_count)?.unwrap_or(d.particles);
        if particles == 0 {
            return Err(raw.locate("filter", "particles", "particles: must be positive".into()));
        }
        let resample_threshold = raw
            .typed("filter", "resample_threshold", parse_number)?
            .unwrap_or(d.resample_threshold);
        if !(0.0..=1.0).contains(&resample_threshold) {
            return Err(raw.locate(
                "filter",
                "resample_threshold",
                "resample_threshold: must lie in [0, 1]".into(),
            ));
        }
        let path_samples = raw
            .typed("filter", "path_samples", parse_count)?
            .unwrap_or(d.path_samples);
        if path_samples == 0 {
            return Err(raw.locate("filter", "path_samples", "path_samples: must be positive".into()));
        }
        let x_min = raw.typed("filter", "grid_x_min", parse_number)?;
        let x_max = raw.typed("filter", "grid_x_max", parse_number)?;
        let x_range = match (x_min, x_max) {
            (None, None) => None,
            (Some(a), Some(b)) if a < b => Some((a, b)),
            (Some(_), Some(_)) => {
                return Err(raw.locate("filter", "grid_x_max", "grid_x_max: must exceed grid_x_min".into()))
            }
            _ => {
                return Err(raw.error(
                    "filter",
                    "grid_x_min and grid_x_max must be given together",
                ))
            }
        };
        let grid = GridConfig {
            x_cells: raw
                .typed("filter", "grid_x_cells", parse_count)?
                .unwrap_or(d.grid.x_cells),
            v_nodes: raw
                .typed("filter", "grid_v_nodes", parse_count)?
                .unwrap_or(d.grid.v_nodes),
            x_range,
            budget: raw
                .typed("filter", "grid_budget", parse_count)?
                .map_or(d.grid.budget, |b| b as u64),
        };
        if grid.x_cells < 2 || grid.v_nodes < 2 {
            return Err(raw.error("filter", "grid_x_cells and grid_v_nodes must be at least 2"));
        }
        Ok(FilterSettings {
            particles,
            resample_threshold,
            scheme: raw.typed("filter", "resampling", parse_scheme)?.unwrap_or(d.scheme),
            weight_space: raw
                .typed("filter", "weights", parse_weight_space)?
                .unwrap_or(d.weight_space),
            path_samples,
            grid,
        })
    }

    fn experiment_settings(raw: &RawConfig) -> Result<ExperimentSettings, ConfigError> {
        let sec = "experiment";
        let epsilon_values = raw.typed(sec, "epsilon_values", parse_list)?;
        if let Some(v) = &epsilon_values {
            if v.iter().any(|&e| e <= 0.0) {
                return Err(raw.locate(sec, "epsilon_values", "epsilon_values: must be positive".into()));
            }
        }
        let m_values = raw.typed(sec, "m_values", |s| {
            s.split(',')
                .map(|v| match parse_count(v)? {
                    0 => Err("substep counts must be at least 1".to_string()),
                    m => Ok(m),
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        let fixed = raw.typed(sec, "particles", parse_count)?;
        let per_log2 = raw.typed(sec, "particles_per_log2m", parse_number)?;
        let particles = match (fixed, per_log2) {
            (Some(_), Some(_)) => {
                return Err(raw.locate(
                    sec,
                    "particles_per_log2m",
                    "particles and particles_per_log2m are mutually exclusive".into(),
                ))
            }
            (Some(0), None) => return Err(raw.locate(sec, "particles", "particles: must be positive".into())),
            (Some(r), None) => ParticleSchedule::Fixed(r),
            (None, Some(f)) if f > 0.0 => ParticleSchedule::Log2Substeps(f),
            (None, Some(_)) => {
                return Err(raw.locate(sec, "particles_per_log2m", "particles_per_log2m: must be positive".into()))
            }
            (None, None) => ParticleSchedule::Fixed(100),
        };
        let fine_dt = raw.typed(sec, "fine_dt", parse_number)?.unwrap_or(1e-4);
        if fine_dt <= 0.0 {
            return Err(raw.locate(sec, "fine_dt", "fine_dt: must be positive".into()));
        }
        Ok(ExperimentSettings {
            name: raw
                .typed(sec, "name", parse_string)?
                .unwrap_or_else(|| "experiment".into()),
            epsilon_values,
            m_values,
            fine_dt,
            filters: raw
                .typed(sec, "filters", parse_filters)?
                .unwrap_or_else(|| vec![ExperimentFilter::Optimal, ExperimentFilter::Averaged]),
            particles,
            seeds: raw.typed(sec, "seeds", parse_seeds)?.unwrap_or_else(|| (0..10).collect()),
            record_timing: raw.typed(sec, "record_timing", parse_bool)?.unwrap_or(false),
        })
    }

    /// Config error for a missing sweep list.
    pub fn missing(&self, section: &str, message: impl Into<String>) -> ConfigError {
        self.raw.error(section, message)
    }

    /// Maps a core validation error raised at run time onto the config.
    pub fn core_error(&self, e: Error) -> ConfigError {
        map_core_error(&self.raw, e)
    }

    /// Effective configuration in the same grammar; loading it reproduces
    /// this run.
    pub fn manifest(&self, out_dir: &Path) -> String {
        let p = &self.model;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let q = p.q.at(0.0);
        let q_rows = (0..q.nrows())
            .map(|i| (0..q.ncols()).map(|j| q[(i, j)].to_string()).collect::<Vec<_>>().join(", "))
            .collect::<Vec<_>>()
            .join("; ");
        let mut s = String::new();
        s.push_str("[model]\n");
        s.push_str(&format!("levels = {}\n", list(p.space.values())));
        s.push_str(&format!("q = {q_rows}\n"));
        s.push_str(&format!("epsilon = {}\n", p.epsilon));
        s.push_str(&format!("h = {}\n", p.h.describe()));
        s.push_str(&format!("delta_t = {}\n", p.delta_t));
        s.push_str(&format!("substeps = {}\n", p.substeps));
        s.push_str(&format!("fine_dt = {}\n", p.fine_dt()));
        s.push_str(&format!("n_obs = {}\n", p.n_obs));
        s.push_str(&format!("rho0 = {}\n", list(&p.rho0)));
        s.push_str(&format!("x0 = {}\n", p.x0.describe()));
        s.push_str(&format!("v0 = {}\n", p.v0));
        s.push_str(&format!("seed = {}\n", p.seed));
        s.push_str(&format!("quad_order = {}\n", self.quad_order));

        let f = &self.filter;
        s.push_str("\n[filter]\n");
        s.push_str(&format!("particles = {}\n", f.particles));
        s.push_str(&format!("resample_threshold = {}\n", f.resample_threshold));
        s.push_str(&format!("resampling = {}\n", resampling_name(f.scheme)));
        s.push_str(&format!("weights = {}\n", weight_space_name(f.weight_space)));
        s.push_str(&format!("path_samples = {}\n", f.path_samples));
        s.push_str(&format!("grid_x_cells = {}\n", f.grid.x_cells));
        s.push_str(&format!("grid_v_nodes = {}\n", f.grid.v_nodes));
        if let Some((a, b)) = f.grid.x_range {
            s.push_str(&format!("grid_x_min = {a}\ngrid_x_max = {b}\n"));
        }
        s.push_str(&format!("grid_budget = {}\n", f.grid.budget));

        if let Some(sv) = &self.svol {
            s.push_str("\n[svol]\n");
            s.push_str(&format!("drift = {}\nrho = {}\n", sv.drift, sv.rho));
        }

        if let Some(e) = &self.experiment {
            s.push_str("\n[experiment]\n");
            s.push_str(&format!("name = {}\n", e.name));
            if let Some(v) = &e.epsilon_values {
                s.push_str(&format!("epsilon_values = {}\n", list(v)));
            }
            if let Some(v) = &e.m_values {
                let ms: Vec<String> = v.iter().map(|m| m.to_string()).collect();
                s.push_str(&format!("m_values = {}\n", ms.join(", ")));
            }
            s.push_str(&format!("fine_dt = {}\n", e.fine_dt));
            let names: Vec<&str> = e.filters.iter().map(|f| f.name()).collect();
            s.push_str(&format!("filters = {}\n", names.join(", ")));
            match e.particles {
                ParticleSchedule::Fixed(r) => s.push_str(&format!("particles = {r}\n")),
                ParticleSchedule::Log2Substeps(f) => {
                    s.push_str(&format!("particles_per_log2m = {f}\n"))
                }
            }
            let seeds: Vec<String> = e.seeds.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!("seeds = {}\n", seeds.join(", ")));
            s.push_str(&format!("record_timing = {}\n", e.record_timing));
        }

        s.push_str("\n[output]\n");
        s.push_str(&format!("dir = \"{}\"\n", out_dir.display()));
        s.push_str(&format!("write_path = {}\n", self.output.write_path));
        s.push_str(&format!("ess = {}\n", self.output.ess));
        s
    }
}

fn map_core_error(raw: &RawConfig, e: Error) -> ConfigError {
    match e {
        Error::InvalidParameter { name, reason } => {
            let (section, key) = key_for(name);
            raw.locate(section, key, format!("{key}: {reason}"))
        }
        other => ConfigError {
            path: raw.path.clone(),
            line: 0,
            col: 0,
            message: other.to_string(),
        },
    }
}
