//! Domain types and the pointwise mathematics of the epidemic game: running
//! cost, equilibrium controls, transition rates and the interaction aggregate,
//! all evaluated at a single time step.

use std::fmt;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};

/// Health state of an individual agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HealthState {
    S,
    I,
    R,
}

impl HealthState {
    pub const ALL: [HealthState; 3] = [HealthState::S, HealthState::I, HealthState::R];

    pub fn index(self) -> usize {
        match self {
            HealthState::S => 0,
            HealthState::I => 1,
            HealthState::R => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            HealthState::S => "S",
            HealthState::I => "I",
            HealthState::R => "R",
        }
    }
}

impl fmt::Display for HealthState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-group model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    /// Transmission level.
    pub beta: f64,
    /// Recovery rate.
    pub gamma: f64,
    /// Vaccination efficacy.
    pub kappa: f64,
    /// Weight of the quadratic guideline-deviation cost for susceptibles.
    pub c_lambda: f64,
    /// Linear vaccination cost.
    pub c_nu: f64,
    /// Infection cost per unit time.
    pub c_inf: f64,
    /// Awareness cost coefficient in state S.
    pub c_aware_s: f64,
    /// Awareness cost coefficient in state I.
    pub c_aware_i: f64,
    /// Proportion of the whole population in this group.
    pub mass: f64,
}

impl GroupParams {
    pub fn validate(&self, group: usize) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("kappa", self.kappa),
            ("c_lambda", self.c_lambda),
            ("c_nu", self.c_nu),
            ("c_I", self.c_inf),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(MfgError::Validation(format!(
                    "group {group}: {name} must be finite and > 0, got {v}"
                )));
            }
        }
        for (name, v) in [("c_pS", self.c_aware_s), ("c_pI", self.c_aware_i)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MfgError::Validation(format!(
                    "group {group}: {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.mass > 0.0 && self.mass <= 1.0) {
            return Err(MfgError::Validation(format!(
                "group {group}: mass must lie in (0, 1], got {}",
                self.mass
            )));
        }
        Ok(())
    }

    /// Value of u(S) at which vaccination stops being worthwhile.
    pub fn vaccination_threshold(&self) -> f64 {
        self.c_nu / self.kappa
    }
}

/// Uniform time grid `0, dt, ..., n_steps * dt = horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(MfgError::Validation(format!(
                "horizon must be > 0, got {horizon}"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(MfgError::Validation(format!("dt must be > 0, got {dt}")));
        }
        let n_steps = (horizon / dt).round() as usize;
        if n_steps < 2 {
            return Err(MfgError::Validation(format!(
                "time grid needs at least 2 steps, horizon/dt = {}",
                horizon / dt
            )));
        }
        if (n_steps as f64 * dt - horizon).abs() > 1e-9 {
            return Err(MfgError::Validation(format!(
                "horizon {horizon} is not an integer multiple of dt {dt}"
            )));
        }
        Ok(Self {
            horizon,
            dt,
            n_steps,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points, `n_steps + 1`.
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.horizon
        } else {
            n as f64 * self.dt
        }
    }

    /// Index of the step interval `[t_n, t_{n+1})` containing `t`.
    pub fn step_index(&self, t: f64) -> usize {
        let n = (t / self.dt).floor();
        if n <= 0.0 {
            0
        } else {
            (n as usize).min(self.n_steps - 1)
        }
    }
}

/// Social-distancing guidelines, one time series per (group, state).
#[derive(Debug, Clone, PartialEq)]
pub struct Guidelines {
    levels: Vec<[Vec<f64>; 3]>,
}

impl Guidelines {
    /// Builds guidelines from explicit series. Every series must cover the
    /// whole grid and every value must lie in (0, 1].
    pub fn from_series(levels: Vec<[Vec<f64>; 3]>, grid: &TimeGrid) -> Result<Self> {
        let g = Self { levels };
        g.validate(grid)?;
        Ok(g)
    }

    /// Time-constant guidelines `[lambda_S, lambda_I, lambda_R]` per group.
    pub fn constant(per_group: &[[f64; 3]], grid: &TimeGrid) -> Result<Self> {
        let levels = per_group
            .iter()
            .map(|l| {
                [
                    vec![l[0]; grid.n_points()],
                    vec![l[1]; grid.n_points()],
                    vec![l[2]; grid.n_points()],
                ]
            })
            .collect();
        Self::from_series(levels, grid)
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        for (k, states) in self.levels.iter().enumerate() {
            for (e, series) in states.iter().enumerate() {
                let state = HealthState::ALL[e];
                if series.len() != grid.n_points() {
                    return Err(MfgError::Validation(format!(
                        "guideline for group {k} state {state} has {} values, grid has {} points",
                        series.len(),
                        grid.n_points()
                    )));
                }
                for (n, &v) in series.iter().enumerate() {
                    if v.is_nan() || v <= 0.0 {
                        return Err(MfgError::Validation(format!(
                            "guideline lambda_{state} for group {k} is {v} at step {n}: \
                             full lockdown excluded (lambda must be > 0)"
                        )));
                    }
                    if v > 1.0 {
                        return Err(MfgError::Validation(format!(
                            "guideline lambda_{state} for group {k} is {v} at step {n}, must be <= 1"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_groups(&self) -> usize {
        self.levels.len()
    }

    #[inline]
    pub fn level(&self, group: usize, state: HealthState, n: usize) -> f64 {
        self.levels[group][state.index()][n]
    }

    pub fn series(&self, group: usize, state: HealthState) -> &[f64] {
        &self.levels[group][state.index()]
    }

    /// Replaces the guideline of `state` by the constant `value` in every group.
    pub fn set_constant(&mut self, state: HealthState, value: f64) {
        for states in &mut self.levels {
            states[state.index()].iter_mut().for_each(|v| *v = value);
        }
    }

    /// Guideline values of `state` at step `n` for every group.
    pub fn levels_at(&self, state: HealthState, n: usize) -> Vec<f64> {
        self.levels.iter().map(|s| s[state.index()][n]).collect()
    }
}

/// Between-group connection strengths `w(k, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactMatrix {
    w: Array2<f64>,
}

impl ContactMatrix {
    pub fn new(w: Array2<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(MfgError::Config(format!(
                "contact matrix must be square, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        if let Some(v) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MfgError::Validation(format!(
                "contact matrix entries must lie in [0, 1], found {v}"
            )));
        }
        Ok(Self { w })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(MfgError::Config(format!("contact matrix must be {k}x{k}")));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let w =
            Array2::from_shape_vec((k, k), flat).map_err(|e| MfgError::Internal(e.to_string()))?;
        Self::new(w)
    }

    pub fn identity(k: usize) -> Self {
        Self { w: Array2::eye(k) }
    }

    pub fn n_groups(&self) -> usize {
        self.w.nrows()
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.w[[k, l]]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.w.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.w
    }
}

/// Population densities indexed `(step, group, state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution(pub Array3<f64>);

impl StateDistribution {
    /// Constant-in-time flow equal to the initial distributions.
    pub fn constant(initial: &[[f64; 3]], grid: &TimeGrid) -> Self {
        let k = initial.len();
        let p = Array3::from_shape_fn((grid.n_points(), k, 3), |(_, g, e)| initial[g][e]);
        Self(p)
    }

    #[inline]
    pub fn get(&self, n: usize, group: usize, state: HealthState) -> f64 {
        self.0[[n, group, state.index()]]
    }

    /// `P_t(I) = sum_l m^l p_t^l(I)` at every grid point.
    pub fn composite_infected(&self, masses: &[f64]) -> Vec<f64> {
        (0..self.0.shape()[0])
            .map(|n| {
                masses
                    .iter()
                    .enumerate()
                    .map(|(l, m)| m * self.0[[n, l, HealthState::I.index()]])
                    .sum()
            })
            .collect()
    }

    /// Largest `|sum_e p_t^k(e) - 1|` over the grid.
    pub fn max_simplex_error(&self) -> f64 {
        let (n_points, k, _) = self.0.dim();
        let mut worst = 0.0f64;
        for n in 0..n_points {
            for g in 0..k {
                let s: f64 = (0..3).map(|e| self.0[[n, g, e]]).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }
}

/// Value functions indexed `(step, group, state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(pub Array3<f64>);

impl ValueFunction {
    pub fn zeros(n_groups: usize, grid: &TimeGrid) -> Self {
        Self(Array3::zeros((grid.n_points(), n_groups, 3)))
    }

    #[inline]
    pub fn get(&self, n: usize, group: usize, state: HealthState) -> f64 {
        self.0[[n, group, state.index()]]
    }

    pub fn series(&self, group: usize, state: HealthState) -> Vec<f64> {
        self.0.slice(ndarray::s![.., group, state.index()]).to_vec()
    }
}

/// Socialization levels `(step, group, state)` and vaccination rates `(step, group)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProfile {
    pub alpha: Array3<f64>,
    pub nu: Array2<f64>,
}

impl ControlProfile {
    #[inline]
    pub fn alpha(&self, n: usize, group: usize, state: HealthState) -> f64 {
        self.alpha[[n, group, state.index()]]
    }

    #[inline]
    pub fn nu(&self, n: usize, group: usize) -> f64 {
        self.nu[[n, group]]
    }
}

/// Interaction aggregate `Z_t^k`, indexed `(step, group)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate(pub Array2<f64>);

impl Aggregate {
    pub fn zeros(n_groups: usize, grid: &TimeGrid) -> Self {
        Self(Array2::zeros((grid.n_points(), n_groups)))
    }

    #[inline]
    pub fn get(&self, n: usize, group: usize) -> f64 {
        self.0[[n, group]]
    }

    pub fn series(&self, group: usize) -> Vec<f64> {
        self.0.column(group).to_vec()
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(MfgError::Domain(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

/// Running cost rate of an agent in `state`, with awareness signal
/// `composite_infected` and guideline `guideline` for that state.
pub fn running_cost(
    state: HealthState,
    alpha: f64,
    nu: f64,
    composite_infected: f64,
    params: &GroupParams,
    guideline: f64,
) -> Result<f64> {
    check_unit("alpha", alpha)?;
    check_unit("nu", nu)?;
    check_unit("composite infected proportion", composite_infected)?;
    let dev = guideline - alpha;
    Ok(match state {
        HealthState::S => {
            params.c_lambda * dev * dev + params.c_nu * nu + params.c_aware_s * composite_infected
        }
        HealthState::I => dev * dev + params.c_inf + params.c_aware_i * composite_infected,
        HealthState::R => dev * dev,
    })
}

/// Equilibrium socialization of a susceptible agent, projected onto [0, 1].
#[inline]
pub fn best_response_alpha_s(
    u_s: f64,
    u_i: f64,
    z: f64,
    params: &GroupParams,
    lambda_s: f64,
) -> f64 {
    let unclamped = lambda_s + params.beta * z * (u_s - u_i) / (2.0 * params.c_lambda);
    unclamped.clamp(0.0, 1.0)
}

/// Bang-bang vaccination rate: 1 iff `kappa * u_S > c_nu` strictly.
#[inline]
pub fn best_response_nu(u_s: f64, params: &GroupParams) -> f64 {
    if params.kappa * u_s > params.c_nu {
        1.0
    } else {
        0.0
    }
}

/// `Z^k = sum_l w(k,l) lambda^{l,I} p^l(I) m^l` for every group `k`.
pub fn compute_aggregate(
    infected: &[f64],
    lambda_infected: &[f64],
    contact: &ContactMatrix,
    masses: &[f64],
) -> Result<Vec<f64>> {
    let k = contact.n_groups();
    if infected.len() != k || lambda_infected.len() != k || masses.len() != k {
        return Err(MfgError::Config(format!(
            "aggregate inputs must have {k} groups, got p_I {}, lambda_I {}, masses {}",
            infected.len(),
            lambda_infected.len(),
            masses.len()
        )));
    }
    if let Some(p) = infected.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(MfgError::Domain(format!(
            "infected proportion {p} outside [0, 1]"
        )));
    }
    Ok((0..k)
        .map(|g| {
            (0..k)
                .map(|l| contact.get(g, l) * lambda_infected[l] * infected[l] * masses[l])
                .sum()
        })
        .collect())
}

/// Off-diagonal entries of the agent's transition-rate matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRates {
    pub s_to_i: f64,
    pub s_to_r: f64,
    pub i_to_r: f64,
}

impl TransitionRates {
    /// Full generator; each row sums to zero.
    pub fn generator(&self) -> [[f64; 3]; 3] {
        [
            [-(self.s_to_i + self.s_to_r), self.s_to_i, self.s_to_r],
            [0.0, -self.i_to_r, self.i_to_r],
            [0.0, 0.0, 0.0],
        ]
    }

    /// Total exit rate from `state`.
    pub fn exit_rate(&self, state: HealthState) -> f64 {
        match state {
            HealthState::S => self.s_to_i + self.s_to_r,
            HealthState::I => self.i_to_r,
            HealthState::R => 0.0,
        }
    }
}

#[inline]
pub fn transition_rates(alpha: f64, nu: f64, z: f64, params: &GroupParams) -> TransitionRates {
    TransitionRates {
        s_to_i: params.beta * alpha * z,
        s_to_r: params.kappa * nu,
        i_to_r: params.gamma,
    }
}
