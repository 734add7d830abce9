//! Observation and truth CSV readers.

use std::path::Path;

use avgfilter::ObservationSeries;

use crate::commands::Failure;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn schema(path: &Path, line: usize, message: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{}:{line}: {message}", path.display()))
}

fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, cols: &[&str], i: usize) -> Result<T, Failure> {
    cols.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| schema(path, line, format!("bad or missing column {}", i + 1)))
}

/// Reads simulator output (`k,t,y`) or a `timestamp,log_price` series.
/// Spacing must equal `delta_t`.
pub fn read_observations(path: &Path, delta_t: f64) -> Result<ObservationSeries, Failure> {
    let text = read(path)?;
    let header: Vec<&str> = text
        .lines()
        .next()
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .collect();
    let (t_col, y_col, indexed) = match header.as_slice() {
        ["k", "t", "y"] => (1, 2, true),
        ["timestamp", "log_price"] => (0, 1, false),
        _ => {
            return Err(schema(
                path,
                1,
                format!(
                    "unrecognised header `{}` (expected `k,t,y` or `timestamp,log_price`)",
                    header.join(",")
                ),
            ))
        }
    };
    let width = header.len();
    let mut times = Vec::new();
    let mut y = Vec::new();
    for (line, cols) in rows(&text) {
        if cols.len() != width {
            return Err(schema(path, line, format!("expected {width} columns, found {}", cols.len())));
        }
        if indexed {
            let k: usize = field(path, line, &cols, 0)?;
            if k != y.len() {
                return Err(schema(path, line, format!("expected k = {}, found {k}", y.len())));
            }
        }
        let t: f64 = field(path, line, &cols, t_col)?;
        let v: f64 = field(path, line, &cols, y_col)?;
        if !(t.is_finite() && v.is_finite()) {
            return Err(schema(path, line, "non-finite value"));
        }
        times.push((line, t));
        y.push(v);
    }
    if y.len() < 2 {
        return Err(schema(path, 1, "need at least two observations"));
    }
    let t0 = times[0].1;
    for (k, &(line, t)) in times.iter().enumerate() {
        let expected = t0 + k as f64 * delta_t;
        if (t - expected).abs() > 1e-6 * delta_t + 1e-12 * expected.abs() {
            return Err(schema(
                path,
                line,
                format!("time {t} breaks the uniform spacing delta_t = {delta_t} (expected {expected})"),
            ));
        }
    }
    Ok(ObservationSeries { y, obs_dt: delta_t })
}

/// Regimes at observation times from a fine-grid path CSV (`l,t,theta,x`),
/// 0-based.
pub fn read_truth(path: &Path, substeps: usize, n_obs: usize) -> Result<Vec<usize>, Failure> {
    let text = read(path)?;
    if text.lines().next().map(str::trim) != Some("l,t,theta,x") {
        return Err(schema(path, 1, "expected header `l,t,theta,x`"));
    }
    let mut truth = Vec::with_capacity(n_obs + 1);
    for (line, cols) in rows(&text) {
        let l: usize = field(path, line, &cols, 0)?;
        if l.is_multiple_of(substeps) {
            let th: usize = field(path, line, &cols, 2)?;
            if th == 0 {
                return Err(schema(path, line, "regimes are 1-based"));
            }
            truth.push(th - 1);
        }
    }
    if truth.len() != n_obs + 1 {
        return Err(schema(
            path,
            1,
            format!("truth covers {} observation times, expected {}", truth.len(), n_obs + 1),
        ));
    }
    Ok(truth)
}
