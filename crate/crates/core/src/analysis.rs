//! Diagnostics extracted from equilibria (vaccination jump times, epidemic
//! peaks, structural invariant checks) and grid sweeps over policy parameters.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{MfgError, Result};
use crate::model::{GroupParams, HealthState, TimeGrid, ValueFunction};
use crate::solver::{fixed_point_solve, EquilibriumSolution, SolverSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupJump {
    /// Time at which `u(S)` first reaches the threshold from above; 0 when the
    /// group never vaccinates.
    pub jump_time: f64,
    /// Sign changes of `kappa * u(S) - c_nu` along the grid.
    pub crossing_count: usize,
    /// `c_nu / kappa`.
    pub threshold: f64,
    /// Whether `u_0(S)` starts above the threshold.
    pub initial_above: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    pub groups: Vec<GroupJump>,
}

impl JumpReport {
    pub fn max_crossings(&self) -> usize {
        self.groups
            .iter()
            .map(|g| g.crossing_count)
            .max()
            .unwrap_or(0)
    }
}

/// Locates the vaccination switch on one susceptible value path.
///
/// The jump time is the first grid time at which `kappa * u(S) - c_nu`
/// becomes non-positive, linearly interpolated against the previous point.
pub fn detect_jump(u_s: &[f64], params: &GroupParams, grid: &TimeGrid) -> GroupJump {
    let gap: Vec<f64> = u_s.iter().map(|u| params.kappa * u - params.c_nu).collect();
    let crossing_count = gap
        .windows(2)
        .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
        .count();
    let initial_above = gap.first().is_some_and(|g| *g > 0.0);
    let jump_time = if !initial_above {
        0.0
    } else {
        // gap[0] > 0, so any non-positive point has a predecessor
        match gap.iter().position(|g| *g <= 0.0) {
            None => grid.horizon(),
            Some(n) => {
                let (a, b) = (gap[n - 1], gap[n]);
                let t0 = grid.time(n - 1);
                t0 + (grid.time(n) - t0) * a / (a - b)
            }
        }
    };
    GroupJump {
        jump_time,
        crossing_count,
        threshold: params.vaccination_threshold(),
        initial_above,
    }
}

pub fn detect_jumps(u: &ValueFunction, groups: &[GroupParams], grid: &TimeGrid) -> JumpReport {
    JumpReport {
        groups: groups
            .iter()
            .enumerate()
            .map(|(g, params)| detect_jump(&u.series(g, HealthState::S), params, grid))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub peak_time: f64,
    pub peak_proportion: f64,
    pub min_alpha_s: f64,
    pub cumulative_recovered: f64,
}

/// Per-group metrics plus the same metrics for the mass-weighted population.
/// For the composite, `min_alpha_s` is the minimum over time of the
/// mass-weighted socialization of susceptibles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicMetrics {
    pub groups: Vec<GroupMetrics>,
    pub composite: GroupMetrics,
}

/// Earliest index of the maximum.
fn argmax_earliest(xs: &[f64]) -> (usize, f64) {
    xs.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
}

fn metrics_of(
    infected: &[f64],
    alpha_s: &[f64],
    recovered_final: f64,
    grid: &TimeGrid,
) -> GroupMetrics {
    let (n, peak) = argmax_earliest(infected);
    GroupMetrics {
        peak_time: grid.time(n),
        peak_proportion: peak,
        min_alpha_s: alpha_s.iter().copied().fold(f64::INFINITY, f64::min),
        cumulative_recovered: recovered_final,
    }
}

pub fn epidemic_metrics(solution: &EquilibriumSolution, masses: &[f64]) -> EpidemicMetrics {
    let grid = solution.grid();
    let n_points = grid.n_points();
    let last = grid.n_steps();
    let k = masses.len();
    let groups = (0..k)
        .map(|g| {
            let infected: Vec<f64> = (0..n_points)
                .map(|n| solution.p.get(n, g, HealthState::I))
                .collect();
            let alpha: Vec<f64> = (0..n_points)
                .map(|n| solution.controls.alpha(n, g, HealthState::S))
                .collect();
            metrics_of(
                &infected,
                &alpha,
                solution.p.get(last, g, HealthState::R),
                grid,
            )
        })
        .collect();
    let composite_infected = solution.p.composite_infected(masses);
    let composite_alpha: Vec<f64> = (0..n_points)
        .map(|n| {
            (0..k)
                .map(|g| masses[g] * solution.controls.alpha(n, g, HealthState::S))
                .sum()
        })
        .collect();
    let recovered: f64 = (0..k)
        .map(|g| masses[g] * solution.p.get(last, g, HealthState::R))
        .sum();
    EpidemicMetrics {
        groups,
        composite: metrics_of(&composite_infected, &composite_alpha, recovered, grid),
    }
}

/// Structural properties every equilibrium should have.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub converged: bool,
    pub max_simplex_error: f64,
    /// `None` when the configuration is not regular and positivity is not implied.
    pub aggregate_positive: Option<bool>,
    /// `u_t(S) < u_t(I)` for all `t < T - dt`; `None` if not regular.
    pub value_ordering: Option<bool>,
    pub at_most_one_jump: bool,
    pub values_nonnegative: bool,
}

impl InvariantReport {
    pub fn all_ok(&self) -> bool {
        self.converged
            && self.max_simplex_error <= 1e-9
            && self.aggregate_positive.unwrap_or(true)
            && self.value_ordering.unwrap_or(true)
            && self.at_most_one_jump
            && self.values_nonnegative
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.converged {
            out.push("fixed point did not converge".to_string());
        }
        if self.max_simplex_error > 1e-9 {
            out.push(format!(
                "simplex error {:.3e} exceeds 1e-9",
                self.max_simplex_error
            ));
        }
        if self.aggregate_positive == Some(false) {
            out.push("aggregate Z not strictly positive".to_string());
        }
        if self.value_ordering == Some(false) {
            out.push("u(S) < u(I) violated before T - dt".to_string());
        }
        if !self.at_most_one_jump {
            out.push("vaccination switches more than once".to_string());
        }
        if !self.values_nonnegative {
            out.push("negative value function".to_string());
        }
        out
    }
}

/// Whether `u_t(S) < u_t(I)` holds for every group and every `t < T - dt`.
pub fn value_ordering_holds(solution: &EquilibriumSolution) -> bool {
    let steps = solution.grid().n_steps();
    (0..solution.config.n_groups()).all(|g| {
        (0..steps - 1)
            .all(|n| solution.u.get(n, g, HealthState::S) < solution.u.get(n, g, HealthState::I))
    })
}

pub fn check_invariants(solution: &EquilibriumSolution) -> InvariantReport {
    let regular = solution.config.is_regular();
    InvariantReport {
        converged: solution.converged,
        max_simplex_error: solution.p.max_simplex_error(),
        aggregate_positive: regular.then(|| solution.z.0.iter().all(|v| *v > 0.0)),
        value_ordering: regular.then(|| value_ordering_holds(solution)),
        at_most_one_jump: solution.jumps.max_crossings() <= 1,
        values_nonnegative: solution.u.0.iter().all(|v| *v >= 0.0),
    }
}

/// A configuration field a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Constant guideline for susceptibles, all groups.
    LambdaS,
    /// Constant guideline for infected, all groups.
    LambdaI,
    /// Constant guideline for recovered, all groups.
    LambdaR,
    /// Awareness coefficient `c_pS = c_pI`, all groups; switches awareness on.
    AwarenessCost,
    /// Uniform vaccination cost `c_nu`, all groups.
    VaccinationCost,
}

impl SweepParam {
    pub fn column_name(self) -> &'static str {
        match self {
            SweepParam::LambdaS => "lambda_S",
            SweepParam::LambdaI => "lambda_I",
            SweepParam::LambdaR => "lambda_R",
            SweepParam::AwarenessCost => "c_p",
            SweepParam::VaccinationCost => "c_nu",
        }
    }

    pub fn apply(self, config: &mut ModelConfig, value: f64) {
        match self {
            SweepParam::LambdaS => config.set_guideline(HealthState::S, value),
            SweepParam::LambdaI => config.set_guideline(HealthState::I, value),
            SweepParam::LambdaR => config.set_guideline(HealthState::R, value),
            SweepParam::AwarenessCost => config.set_awareness(value),
            SweepParam::VaccinationCost => config.set_vaccination_cost(value),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column_name())
    }
}

impl FromStr for SweepParam {
    type Err = MfgError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lambda_s" => Ok(SweepParam::LambdaS),
            "lambda_i" => Ok(SweepParam::LambdaI),
            "lambda_r" => Ok(SweepParam::LambdaR),
            "cp" | "c_p" => Ok(SweepParam::AwarenessCost),
            "cnu" | "c_nu" => Ok(SweepParam::VaccinationCost),
            _ => Err(MfgError::Config(format!(
                "unknown sweep parameter {s:?} (expected lambda_S, lambda_I, lambda_R, cp, cnu)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// `n` evenly spaced values from `lo` to `hi` inclusive.
    pub fn linspace(param: SweepParam, lo: f64, hi: f64, n: usize) -> Self {
        let values = match n {
            0 => Vec::new(),
            1 => vec![lo],
            // rounded to 12 decimals so grid values print as typed (0.6, not
            // 0.6000000000000001); the endpoints are exact
            _ => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                        (x * 1e12).round() / 1e12
                    }
                })
                .collect(),
        };
        Self { param, values }
    }
}

impl FromStr for SweepAxis {
    type Err = MfgError;

    /// `name=v1,v2,...` or `name=lo:hi:n`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, spec) = s.split_once('=').ok_or_else(|| {
            MfgError::Config(format!(
                "axis {s:?} must look like name=v1,v2 or name=lo:hi:n"
            ))
        })?;
        let param: SweepParam = name.trim().parse()?;
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| MfgError::Config(format!("bad number {t:?} in axis {s:?}")))
        };
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() == 3 {
            let n = parts[2]
                .trim()
                .parse::<usize>()
                .map_err(|_| MfgError::Config(format!("bad count in axis {s:?}")))?;
            return Ok(SweepAxis::linspace(
                param,
                num(parts[0])?,
                num(parts[1])?,
                n,
            ));
        }
        let values = spec.split(',').map(num).collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(MfgError::Config(format!("axis {s:?} has no values")));
        }
        Ok(SweepAxis { param, values })
    }
}

/// Summary of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    /// Axis values, in axis order.
    pub coords: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the solve failed outright; the summaries are then absent.
    pub error: Option<String>,
    pub jumps: Option<JumpReport>,
    pub metrics: Option<EpidemicMetrics>,
}

impl SweepCell {
    pub fn ok(&self) -> bool {
        self.converged && self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<SweepAxis>,
    /// Row-major over the axes (first axis varies slowest).
    pub cells: Vec<SweepCell>,
    /// SHA-256 of the base configuration.
    pub config_hash: String,
}

impl SweepResult {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values.len()).collect()
    }

    /// Cell at multi-index `idx`.
    pub fn cell(&self, idx: &[usize]) -> Option<&SweepCell> {
        let shape = self.shape();
        if idx.len() != shape.len() || idx.iter().zip(&shape).any(|(i, n)| i >= n) {
            return None;
        }
        let flat = idx.iter().zip(&shape).fold(0, |acc, (i, n)| acc * n + i);
        self.cells.get(flat)
    }
}

fn grid_points(axes: &[SweepAxis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect()
    })
}

/// Solves every grid point independently (in parallel). Failed solves are
/// recorded in their cell; the sweep itself only fails on a bad base config.
pub fn sweep(
    base: &ModelConfig,
    axes: &[SweepAxis],
    settings: &SolverSettings,
) -> Result<SweepResult> {
    let config_hash = base.content_hash()?;
    let masses = base.masses();
    let cells = grid_points(axes)
        .into_par_iter()
        .map(|coords| {
            let mut cfg = base.clone();
            for (axis, v) in axes.iter().zip(&coords) {
                axis.param.apply(&mut cfg, *v);
            }
            // awareness may have been switched on by an axis
            let mut cell_settings = settings.clone();
            cell_settings.awareness_enabled |= cfg.solver.awareness_enabled;
            match fixed_point_solve(&cfg, &cell_settings) {
                Ok(sol) => SweepCell {
                    converged: sol.converged,
                    iterations: sol.iterations,
                    error: None,
                    metrics: Some(epidemic_metrics(&sol, &masses)),
                    jumps: Some(sol.jumps),
                    coords,
                },
                Err(e) => SweepCell {
                    coords,
                    converged: false,
                    iterations: 0,
                    error: Some(e.to_string()),
                    jumps: None,
                    metrics: None,
                },
            }
        })
        .collect();
    Ok(SweepResult {
        axes: axes.to_vec(),
        cells,
        config_hash,
    })
}
