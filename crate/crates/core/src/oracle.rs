//! Independent checks on computed equilibria.
//!
//! [`closed_form_u_i`] is the exact infected value function of the baseline
//! model. The Monte-Carlo part simulates one agent as a continuous-time Markov
//! chain inside the frozen equilibrium environment (`Z`, and `P(I)` when
//! awareness is on) and estimates her expected cost under the equilibrium
//! strategy and under unilateral deviations. Paths are drawn by
//! uniformization: candidate events arrive at a constant rate `q_bar` that
//! bounds every exit rate, and each candidate is accepted with probability
//! `rate / q_bar`. Both arms of a comparison reuse the same random stream per
//! path, so a deviation that leaves the rates untouched gives a gap of
//! exactly zero.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::model::{running_cost, transition_rates, GroupParams, HealthState, TimeGrid};
use crate::solver::EquilibriumSolution;

/// `u_t(I) = (c_I / gamma) (1 - exp(-gamma (T - t)))`.
pub fn closed_form_u_i(params: &GroupParams, horizon: f64, t: f64) -> Result<f64> {
    if !(0.0..=horizon).contains(&t) {
        return Err(MfgError::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    Ok(params.c_inf / params.gamma * (1.0 - (-params.gamma * (horizon - t)).exp()))
}

/// A unilateral change to the equilibrium strategy of a susceptible agent.
/// Infected and recovered agents keep following their guidelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "magnitude", rename_all = "snake_case")]
pub enum DeviationSpec {
    /// The equilibrium strategy itself.
    Identity,
    /// Multiply the socialization level in S by a factor.
    ScaleAlphaS(f64),
    /// Move the vaccination stop time by this many time units.
    ShiftJumpTime(f64),
    ForceNoVaccination,
    /// Socialize at a fixed level while susceptible.
    ConstantAlpha(f64),
}

impl DeviationSpec {
    /// The deviations used for routine Nash checks.
    pub fn standard_set() -> Vec<DeviationSpec> {
        vec![
            DeviationSpec::ScaleAlphaS(0.9),
            DeviationSpec::ScaleAlphaS(1.1),
            DeviationSpec::ShiftJumpTime(5.0),
            DeviationSpec::ShiftJumpTime(-5.0),
            DeviationSpec::ForceNoVaccination,
        ]
    }
}

impl fmt::Display for DeviationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviationSpec::Identity => write!(f, "identity"),
            DeviationSpec::ScaleAlphaS(x) => write!(f, "scale_alpha_S:{x}"),
            DeviationSpec::ShiftJumpTime(x) => write!(f, "shift_jump_time:{x}"),
            DeviationSpec::ForceNoVaccination => write!(f, "no_vaccination"),
            DeviationSpec::ConstantAlpha(x) => write!(f, "constant_alpha:{x}"),
        }
    }
}

impl FromStr for DeviationSpec {
    type Err = MfgError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let value = || -> Result<f64> {
            arg.ok_or_else(|| {
                MfgError::Deviation(format!("{s:?} needs a magnitude, e.g. {kind}:0.9"))
            })?
            .trim()
            .parse()
            .map_err(|_| MfgError::Deviation(format!("bad magnitude in {s:?}")))
        };
        match kind.trim() {
            "identity" => Ok(DeviationSpec::Identity),
            "scale_alpha_S" | "scale_alpha_s" => Ok(DeviationSpec::ScaleAlphaS(value()?)),
            "shift_jump_time" => Ok(DeviationSpec::ShiftJumpTime(value()?)),
            "no_vaccination" | "force_no_vaccination" => Ok(DeviationSpec::ForceNoVaccination),
            "constant_alpha" => Ok(DeviationSpec::ConstantAlpha(value()?)),
            other => Err(MfgError::Deviation(format!("unknown deviation {other:?}"))),
        }
    }
}

/// Mean and standard error of the simulated cost of one strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub group: usize,
    pub deviation: DeviationSpec,
    pub equilibrium: ArmEstimate,
    pub deviated: ArmEstimate,
    /// `deviated.mean - equilibrium.mean`.
    pub gap: f64,
    /// `sqrt(se_eq^2 + se_dev^2)`.
    pub combined_std_error: f64,
    /// Standard error of the per-path paired differences.
    pub paired_std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl DeviationReport {
    /// No statistically significant profitable deviation at `n_se` standard errors.
    pub fn passes(&self, n_se: f64) -> bool {
        self.gap >= -n_se * self.combined_std_error
    }
}

/// Deterministic per-grid-step strategy of a susceptible agent.
#[derive(Debug, Clone)]
struct SusceptiblePolicy {
    alpha: Vec<f64>,
    nu: Vec<f64>,
}

/// Frozen environment and cost tables for one (group, strategy).
struct AgentModel<'a> {
    grid: &'a TimeGrid,
    params: &'a GroupParams,
    initial: [f64; 3],
    z: Vec<f64>,
    policy: SusceptiblePolicy,
    /// Running cost rate on `[t_n, t_{n+1})`, per state.
    rate: [Vec<f64>; 3],
    /// `cumulative[e][n] = sum_{m < n} rate[e][m] * dt`.
    cumulative: [Vec<f64>; 3],
    max_exit_rate: f64,
}

impl<'a> AgentModel<'a> {
    fn new(
        solution: &'a EquilibriumSolution,
        group: usize,
        deviation: &DeviationSpec,
    ) -> Result<Self> {
        let cfg = &solution.config;
        if group >= cfg.n_groups() {
            return Err(MfgError::Config(format!("group {group} out of range")));
        }
        let grid = &cfg.grid;
        let params = &cfg.groups[group];
        let policy = build_policy(solution, group, deviation)?;
        let steps = grid.n_steps();
        let awareness = cfg.solver.awareness_enabled;
        let z = solution.z.series(group);
        let mut rate: [Vec<f64>; 3] = Default::default();
        let mut max_exit_rate = params.gamma;
        for (n, &z_n) in z.iter().enumerate().take(steps) {
            let composite = if awareness {
                solution.composite_infected[n]
            } else {
                0.0
            };
            let guide = |e| cfg.guidelines.level(group, e, n);
            let (a, nu) = (policy.alpha[n], policy.nu[n]);
            rate[0].push(running_cost(
                HealthState::S,
                a,
                nu,
                composite,
                params,
                guide(HealthState::S),
            )?);
            let li = guide(HealthState::I);
            rate[1].push(running_cost(
                HealthState::I,
                li,
                0.0,
                composite,
                params,
                li,
            )?);
            let lr = guide(HealthState::R);
            rate[2].push(running_cost(
                HealthState::R,
                lr,
                0.0,
                composite,
                params,
                lr,
            )?);
            let r = transition_rates(a, nu, z_n, params);
            max_exit_rate = max_exit_rate.max(r.exit_rate(HealthState::S));
        }
        let dt = grid.dt();
        let cumulative = rate.clone().map(|r| {
            let mut acc = Vec::with_capacity(steps + 1);
            acc.push(0.0);
            for v in r {
                acc.push(acc.last().unwrap() + v * dt);
            }
            acc
        });
        Ok(Self {
            grid,
            params,
            initial: cfg.initial[group],
            z,
            policy,
            rate,
            cumulative,
            max_exit_rate,
        })
    }

    /// Accumulated running cost in `state` from 0 to `t`.
    fn cost_to(&self, state: HealthState, t: f64) -> f64 {
        let n = self.grid.step_index(t);
        let e = state.index();
        self.cumulative[e][n] + self.rate[e][n] * (t - self.grid.time(n))
    }

    /// Simulates one path; records the state at each sorted checkpoint.
    fn simulate(
        &self,
        rng: &mut ChaCha8Rng,
        q_bar: f64,
        checkpoints: &[f64],
        states: &mut Vec<HealthState>,
    ) -> f64 {
        let horizon = self.grid.horizon();
        let u0: f64 = rng.random();
        let mut state = if u0 < self.initial[0] {
            HealthState::S
        } else if u0 < self.initial[0] + self.initial[1] {
            HealthState::I
        } else {
            HealthState::R
        };
        let clock = (q_bar > 0.0).then(|| Exp::new(q_bar).expect("positive rate"));
        let mut t = 0.0;
        let mut cost = 0.0;
        let mut next_checkpoint = 0;
        states.clear();
        loop {
            let t_next = match &clock {
                Some(exp) => t + exp.sample(rng),
                None => f64::INFINITY,
            };
            let end = t_next.min(horizon);
            while next_checkpoint < checkpoints.len()
                && (checkpoints[next_checkpoint] < end
                    || (end == horizon && checkpoints[next_checkpoint] <= horizon))
            {
                states.push(state);
                next_checkpoint += 1;
            }
            cost += self.cost_to(state, end) - self.cost_to(state, t);
            if t_next >= horizon {
                break;
            }
            t = t_next;
            let n = self.grid.step_index(t);
            let pick: f64 = rng.random::<f64>() * q_bar;
            state = match state {
                HealthState::S => {
                    let r = transition_rates(
                        self.policy.alpha[n],
                        self.policy.nu[n],
                        self.z[n],
                        self.params,
                    );
                    if pick < r.s_to_i {
                        HealthState::I
                    } else if pick < r.s_to_i + r.s_to_r {
                        HealthState::R
                    } else {
                        HealthState::S
                    }
                }
                HealthState::I if pick < self.params.gamma => HealthState::R,
                other => other,
            };
        }
        cost
    }
}

fn build_policy(
    solution: &EquilibriumSolution,
    group: usize,
    deviation: &DeviationSpec,
) -> Result<SusceptiblePolicy> {
    let grid = solution.grid();
    let steps = grid.n_points();
    let mut alpha: Vec<f64> = (0..steps)
        .map(|n| solution.controls.alpha(n, group, HealthState::S))
        .collect();
    let mut nu: Vec<f64> = (0..steps).map(|n| solution.controls.nu(n, group)).collect();
    match *deviation {
        DeviationSpec::Identity => {}
        DeviationSpec::ScaleAlphaS(f) => {
            if !(f.is_finite() && f >= 0.0) {
                return Err(MfgError::Deviation(format!(
                    "scale factor {f} must be >= 0"
                )));
            }
            alpha.iter_mut().for_each(|a| *a *= f);
        }
        DeviationSpec::ShiftJumpTime(delta) => {
            let jump = &solution.jumps.groups[group];
            let stop = (jump.jump_time + delta).clamp(0.0, grid.horizon());
            for (n, v) in nu.iter_mut().enumerate() {
                *v = if grid.time(n) < stop { 1.0 } else { 0.0 };
            }
        }
        DeviationSpec::ForceNoVaccination => nu.iter_mut().for_each(|v| *v = 0.0),
        DeviationSpec::ConstantAlpha(a) => alpha.iter_mut().for_each(|x| *x = a),
    }
    if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(MfgError::Deviation(format!(
            "{deviation} gives socialization level {a} outside [0, 1]"
        )));
    }
    Ok(SusceptiblePolicy { alpha, nu })
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn estimate(costs: &[f64]) -> ArmEstimate {
    let (mean, std_error) = mean_and_se(costs);
    ArmEstimate {
        mean,
        std_error,
        n_paths: costs.len(),
    }
}

/// Expected cost of a group-`group` agent following `strategy` in the frozen
/// equilibrium environment, over `n_paths` simulated paths.
pub fn simulate_agent_cost(
    solution: &EquilibriumSolution,
    group: usize,
    strategy: &DeviationSpec,
    n_paths: usize,
    seed: u64,
) -> Result<ArmEstimate> {
    if n_paths == 0 {
        return Err(MfgError::Config("n_paths must be >= 1".into()));
    }
    let model = AgentModel::new(solution, group, strategy)?;
    let costs: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map_init(Vec::new, |states, i| {
            model.simulate(&mut path_rng(seed, i), model.max_exit_rate, &[], states)
        })
        .collect();
    Ok(estimate(&costs))
}

/// Paired comparison of the equilibrium strategy against each deviation.
pub fn nash_gap_test(
    solution: &EquilibriumSolution,
    group: usize,
    deviations: &[DeviationSpec],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<DeviationReport>> {
    if n_paths == 0 {
        return Err(MfgError::Config("n_paths must be >= 1".into()));
    }
    let base = AgentModel::new(solution, group, &DeviationSpec::Identity)?;
    deviations
        .iter()
        .map(|dev| {
            let alt = AgentModel::new(solution, group, dev)?;
            let q_bar = base.max_exit_rate.max(alt.max_exit_rate);
            let pairs: Vec<(f64, f64)> = (0..n_paths)
                .into_par_iter()
                .map_init(Vec::new, |states, i| {
                    let eq = base.simulate(&mut path_rng(seed, i), q_bar, &[], states);
                    let dv = alt.simulate(&mut path_rng(seed, i), q_bar, &[], states);
                    (eq, dv)
                })
                .collect();
            let eq: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let dv: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let diff: Vec<f64> = pairs.iter().map(|p| p.1 - p.0).collect();
            let equilibrium = estimate(&eq);
            let deviated = estimate(&dv);
            let (gap, paired_std_error) = mean_and_se(&diff);
            Ok(DeviationReport {
                group,
                deviation: *dev,
                equilibrium,
                deviated,
                gap,
                combined_std_error: equilibrium.std_error.hypot(deviated.std_error),
                paired_std_error,
                n_paths,
                seed,
            })
        })
        .collect()
}

/// Empirical state frequency of simulated equilibrium agents against the
/// forward-equation density at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyCheck {
    pub group: usize,
    pub time: f64,
    pub state: HealthState,
    pub empirical: f64,
    pub density: f64,
    /// Binomial standard error `sqrt(p (1 - p) / n)` at the density value.
    pub std_error: f64,
    pub within: bool,
}

/// Compares simulated occupancies with `p_t(e)` at `T/4, T/2, 3T/4, T`.
/// A check passes when the difference is at most `n_se` standard errors.
pub fn occupancy_check(
    solution: &EquilibriumSolution,
    group: usize,
    n_paths: usize,
    seed: u64,
    n_se: f64,
) -> Result<Vec<OccupancyCheck>> {
    if n_paths == 0 {
        return Err(MfgError::Config("n_paths must be >= 1".into()));
    }
    let model = AgentModel::new(solution, group, &DeviationSpec::Identity)?;
    let grid = solution.grid();
    let steps = grid.n_steps();
    let indices = [steps / 4, steps / 2, 3 * steps / 4, steps];
    let checkpoints: Vec<f64> = indices.iter().map(|&n| grid.time(n)).collect();
    let counts = (0..n_paths)
        .into_par_iter()
        .map_init(Vec::new, |states, i| {
            model.simulate(
                &mut path_rng(seed, i),
                model.max_exit_rate,
                &checkpoints,
                states,
            );
            let mut c = [[0usize; 3]; 4];
            for (j, s) in states.iter().enumerate() {
                c[j][s.index()] += 1;
            }
            c
        })
        .reduce(
            || [[0usize; 3]; 4],
            |mut a, b| {
                for j in 0..4 {
                    for e in 0..3 {
                        a[j][e] += b[j][e];
                    }
                }
                a
            },
        );
    let n = n_paths as f64;
    let mut out = Vec::new();
    for (j, &idx) in indices.iter().enumerate() {
        for state in HealthState::ALL {
            let empirical = counts[j][state.index()] as f64 / n;
            let density = solution.p.get(idx, group, state);
            let std_error = (density * (1.0 - density) / n).max(0.0).sqrt();
            let diff = (empirical - density).abs();
            let within = if std_error > 0.0 {
                diff <= n_se * std_error
            } else {
                diff <= 1e-12
            };
            out.push(OccupancyCheck {
                group,
                time: checkpoints[j],
                state,
                empirical,
                density,
                std_error,
                within,
            });
        }
    }
    Ok(out)
}
