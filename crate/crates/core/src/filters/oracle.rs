//! Brute-force forward recursion on a discretised (regime, x, v) lattice.
//!
//! X lives on uniform cells whose OU transition probabilities are exact
//! normal-CDF differences (edge cells absorb the tails). The running sum
//! `v = Δt̃ Σ h(X̃_ℓ)` within the current block lives on a uniform grid that
//! contains 0 exactly; each substep shifts it by `Δt̃ h(x)` with linear
//! splitting between neighbouring nodes. At the end of a block the table is
//! weighted by `exp(−(Δy − v)²/(2Δt))` and v is marginalised out.

use serde::{Deserialize, Serialize};

use super::posterior::Posterior;
use crate::error::{Error, Result};
use crate::linalg::{chain_transition_matrix, Matrix};
use crate::model::{normal_cdf, InitialLaw, IntensityMatrix, ModelParams};
use crate::simulator::ObservationSeries;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub x_cells: usize,
    pub v_nodes: usize,
    /// Defaults to the regime levels padded by 5 and widened to the support
    /// of the initial law.
    pub x_range: Option<(f64, f64)>,
    /// Upper bound on `M · x_cells · m · N`.
    pub budget: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x_cells: 200,
            v_nodes: 256,
            x_range: None,
            budget: 1_000_000,
        }
    }
}

pub struct GridOracle {
    n_regimes: usize,
    substeps: usize,
    fine_dt: f64,
    delta_t: f64,
    centers: Vec<f64>,
    /// Per regime, `kt[j][(from, to)]`: OU transition into regime j's level.
    kt: Vec<Matrix>,
    /// Regime transition matrix per x cell (a single one when Q is constant).
    p: Vec<Matrix>,
    /// Per-cell shift of v in node units.
    shift: Vec<f64>,
    v_nodes: Vec<f64>,
    v_zero: usize,
    /// Filtered law over (regime, cell) at the last observation time.
    table: Vec<Vec<f64>>,
}

fn discretise_law(law: &InitialLaw, edges: &[f64]) -> Vec<f64> {
    let n = edges.len() - 1;
    let mut w = vec![0.0; n];
    match *law {
        InitialLaw::PointMass(x) => {
            let i = edges[1..n].partition_point(|&e| e <= x);
            w[i] = 1.0;
        }
        _ => {
            for (i, wi) in w.iter_mut().enumerate() {
                let lo = if i == 0 { 0.0 } else { law.cdf(edges[i]) };
                let hi = if i == n - 1 { 1.0 } else { law.cdf(edges[i + 1]) };
                *wi = (hi - lo).max(0.0);
            }
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

impl GridOracle {
    pub fn new(params: &ModelParams, config: &GridConfig) -> Result<Self> {
        params.validate()?;
        let m_reg = params.n_regimes();
        let required = (m_reg as u64)
            .saturating_mul(config.x_cells as u64)
            .saturating_mul(params.substeps as u64)
            .saturating_mul(params.n_obs as u64);
        if required > config.budget {
            return Err(Error::OracleBudget {
                required,
                budget: config.budget,
            });
        }
        if config.x_cells < 2 || config.v_nodes < 2 {
            return Err(Error::invalid("grid", "need at least 2 x cells and 2 v nodes"));
        }
        let (lo, hi) = config.x_range.unwrap_or_else(|| {
            let levels = params.space.values();
            let (s0, s1) = params.x0.support();
            (
                (levels[0] - 5.0).min(s0.max(levels[0] - 10.0)),
                (levels[m_reg - 1] + 5.0).max(s1.min(levels[m_reg - 1] + 10.0)),
            )
        });
        if !(hi > lo) {
            return Err(Error::invalid("x_range", "upper bound must exceed lower bound"));
        }
        let nx = config.x_cells;
        let dx = (hi - lo) / nx as f64;
        let edges: Vec<f64> = (0..=nx).map(|i| lo + i as f64 * dx).collect();
        let centers: Vec<f64> = (0..nx).map(|i| lo + (i as f64 + 0.5) * dx).collect();
        let a = params.ar_coefficient();
        let sd = ((1.0 - a * a) / 2.0).sqrt();
        let kt = (0..m_reg)
            .map(|j| {
                let level = params.space.level(j);
                let mut k = Matrix::zeros(nx, nx);
                for (from, &c) in centers.iter().enumerate() {
                    let mean = a * c + (1.0 - a) * level;
                    let mut prev = 0.0;
                    for to in 0..nx {
                        let cdf = if to == nx - 1 {
                            1.0
                        } else if sd > 0.0 {
                            normal_cdf((edges[to + 1] - mean) / sd)
                        } else if mean < edges[to + 1] {
                            1.0
                        } else {
                            0.0
                        };
                        k[(from, to)] = (cdf - prev).max(0.0);
                        prev = cdf;
                    }
                    let row_sum: f64 = k.row(from).sum();
                    k.row_mut(from).iter_mut().for_each(|v| *v /= row_sum);
                }
                k
            })
            .collect();
        let fine_dt = params.fine_dt();
        let p = match &params.q {
            IntensityMatrix::Constant(q) => vec![chain_transition_matrix(q, fine_dt)],
            q => centers
                .iter()
                .map(|&x| chain_transition_matrix(&q.at(x), fine_dt))
                .collect(),
        };
        let incr: Vec<f64> = centers.iter().map(|&x| fine_dt * params.h.eval(x)).collect();
        if incr.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("observation function not finite on the x grid".into()));
        }
        let ms = params.substeps as f64;
        let vlo = ms * incr.iter().copied().fold(0.0, f64::min);
        let vhi = ms * incr.iter().copied().fold(0.0, f64::max);
        let (v_nodes, v_zero, width) = if vhi > vlo {
            let width = (vhi - vlo) / (config.v_nodes - 1) as f64;
            let zero = (-vlo / width).round() as usize;
            let nodes = (0..config.v_nodes)
                .map(|q| (q as f64 - zero as f64) * width)
                .collect();
            (nodes, zero, width)
        } else {
            (vec![0.0], 0, 1.0)
        };
        let shift = incr.iter().map(|v| v / width).collect();
        let x0 = discretise_law(&params.x0, &edges);
        let table = params
            .rho0
            .iter()
            .map(|&r| x0.iter().map(|&w| r * w).collect())
            .collect();
        Ok(Self {
            n_regimes: m_reg,
            substeps: params.substeps,
            fine_dt,
            delta_t: params.delta_t,
            centers,
            kt,
            p,
            shift,
            v_nodes,
            v_zero,
            table,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn fine_dt(&self) -> f64 {
        self.fine_dt
    }

    /// Joint law over (regime, cell) at the last observation time.
    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn regime_marginal(&self) -> Vec<f64> {
        self.table.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn x_mean(&self) -> f64 {
        self.table
            .iter()
            .flat_map(|row| row.iter().zip(&self.centers).map(|(w, c)| w * c))
            .sum()
    }

    /// Forward step over one block for the increment `dy`.
    pub fn update(&mut self, step: usize, dy: f64) -> Result<Vec<f64>> {
        let nx = self.centers.len();
        let nv = self.v_nodes.len();
        // f[j] is nv × nx: column = x cell, row = v node
        let mut f: Vec<Matrix> = self
            .table
            .iter()
            .map(|row| {
                let mut t = Matrix::zeros(nv, nx);
                for (x, &w) in row.iter().enumerate() {
                    t[(self.v_zero, x)] = w;
                }
                t
            })
            .collect();
        let mut mixed: Vec<Matrix> = vec![Matrix::zeros(nv, nx); self.n_regimes];
        let mut column = vec![0.0; nv];
        for _ in 0..self.substeps {
            for (j, out) in mixed.iter_mut().enumerate() {
                out.fill(0.0);
                for (i, src) in f.iter().enumerate() {
                    if self.p.len() == 1 {
                        let pij = self.p[0][(i, j)];
                        if pij > 0.0 {
                            *out += src * pij;
                        }
                    } else {
                        for x in 0..nx {
                            let pij = self.p[x][(i, j)];
                            if pij > 0.0 {
                                let mut dst = out.column_mut(x);
                                dst.axpy(pij, &src.column(x), 1.0);
                            }
                        }
                    }
                }
            }
            for (j, g) in f.iter_mut().enumerate() {
                mixed[j].mul_to(&self.kt[j], g);
                if nv > 1 {
                    for x in 0..nx {
                        let s = self.shift[x];
                        let whole = s.floor();
                        let frac = s - whole;
                        let whole = whole as isize;
                        let mut col = g.column_mut(x);
                        column.iter_mut().for_each(|v| *v = 0.0);
                        for q in 0..nv {
                            let w = col[q];
                            if w == 0.0 {
                                continue;
                            }
                            let lo = (q as isize + whole).clamp(0, nv as isize - 1) as usize;
                            let hi = (q as isize + whole + 1).clamp(0, nv as isize - 1) as usize;
                            column[lo] += (1.0 - frac) * w;
                            column[hi] += frac * w;
                        }
                        col.iter_mut().zip(&column).for_each(|(c, v)| *c = *v);
                    }
                }
            }
        }
        let log_lik: Vec<f64> = self
            .v_nodes
            .iter()
            .map(|v| -(dy - v) * (dy - v) / (2.0 * self.delta_t))
            .collect();
        let max = log_lik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lik: Vec<f64> = log_lik.iter().map(|l| (l - max).exp()).collect();
        let mut total = 0.0;
        for (row, g) in self.table.iter_mut().zip(&f) {
            for (x, cell) in row.iter_mut().enumerate() {
                *cell = g.column(x).iter().zip(&lik).map(|(w, l)| w * l).sum();
                total += *cell;
            }
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Divergence { step });
        }
        for row in self.table.iter_mut() {
            row.iter_mut().for_each(|c| *c /= total);
        }
        Ok(self.regime_marginal())
    }
}

/// Runs the oracle over a whole series.
pub fn grid_oracle_filter(
    obs: &ObservationSeries,
    params: &ModelParams,
    config: &GridConfig,
) -> Result<Posterior> {
    let mut check = params.clone();
    check.n_obs = obs.n_obs();
    let mut oracle = GridOracle::new(&check, config)?;
    let mut post = Posterior::new(obs.obs_dt);
    let mut means = vec![oracle.x_mean()];
    post.probs.push(oracle.regime_marginal());
    for (k, w) in obs.y.windows(2).enumerate() {
        post.probs.push(oracle.update(k + 1, w[1] - w[0])?);
        means.push(oracle.x_mean());
    }
    post.x_mean = Some(means);
    Ok(post)
}
