//! Explicit Euler integration of the forward (density) and backward (value)
//! equations, and the damped fixed-point loop that couples them.
//!
//! One iteration, starting from the previous iterate `(p, u)`:
//!
//! 1. `Z` from `p`,
//! 2. best-response controls from `(u, Z)`,
//! 3. new densities forward in time under those controls,
//! 4. new values backward in time under the same controls and the new densities,
//! 5. relaxation `x <- d * x_new + (1 - d) * x` on both `p` and `u`.
//!
//! The loop stops once the largest per-group residual of both `p` and `u`
//! drops to `epsilon`. Controls and `Z` are then recomputed once more from the
//! final iterate.

use ndarray::{s, Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::analysis::{detect_jumps, JumpReport};
use crate::config::ModelConfig;
use crate::error::{MfgError, Result};
use crate::model::{
    best_response_alpha_s, best_response_nu, compute_aggregate, transition_rates, Aggregate,
    ContactMatrix, ControlProfile, GroupParams, Guidelines, HealthState, StateDistribution,
    TimeGrid, ValueFunction,
};

/// Largest negative drift tolerated (and clipped) in a density update.
const DENSITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Relaxation weight in (0, 1]; 1 is the plain fixed-point iteration.
    pub damping: f64,
    /// Adds the population-awareness cost terms to the backward equations.
    pub awareness_enabled: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_iterations: 500,
            damping: 1.0,
            awareness_enabled: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(MfgError::Validation(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(MfgError::Validation(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if self.max_iterations == 0 {
            return Err(MfgError::Validation("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Residuals of one fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub density: f64,
    pub value: f64,
}

impl Residual {
    pub fn max(&self) -> f64 {
        self.density.max(self.value)
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    /// The configuration that was solved, with the settings actually used.
    pub config: ModelConfig,
    pub p: StateDistribution,
    pub u: ValueFunction,
    pub controls: ControlProfile,
    pub z: Aggregate,
    /// Composite infected proportion `P_t(I)` of the final densities.
    pub composite_infected: Vec<f64>,
    pub iterations: usize,
    pub residual_history: Vec<Residual>,
    pub converged: bool,
    pub jumps: JumpReport,
}

impl EquilibriumSolution {
    pub fn settings(&self) -> &SolverSettings {
        &self.config.solver
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.config.grid
    }

    pub fn final_residual(&self) -> Option<Residual> {
        self.residual_history.last().copied()
    }
}

fn check_shapes(k: usize, grid: &TimeGrid, controls: &ControlProfile, z: &Aggregate) -> Result<()> {
    let n = grid.n_points();
    if controls.alpha.dim() != (n, k, 3) || controls.nu.dim() != (n, k) || z.0.dim() != (n, k) {
        return Err(MfgError::Config(format!(
            "trajectory shapes do not match {k} groups on {n} grid points"
        )));
    }
    Ok(())
}

/// Integrates the forward equations from `initial` with explicit Euler.
pub fn solve_forward(
    controls: &ControlProfile,
    z: &Aggregate,
    groups: &[GroupParams],
    initial: &[[f64; 3]],
    grid: &TimeGrid,
) -> Result<StateDistribution> {
    let k = groups.len();
    check_shapes(k, grid, controls, z)?;
    if initial.len() != k {
        return Err(MfgError::Config(format!(
            "{} initial distributions for {k} groups",
            initial.len()
        )));
    }
    for (g, pi) in initial.iter().enumerate() {
        let sum: f64 = pi.iter().sum();
        if pi.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(MfgError::Validation(format!(
                "initial distribution of group {g} is not on the simplex: {pi:?}"
            )));
        }
    }

    let dt = grid.dt();
    let mut p = Array3::zeros((grid.n_points(), k, 3));
    for (g, pi) in initial.iter().enumerate() {
        for e in 0..3 {
            p[[0, g, e]] = pi[e];
        }
    }
    for n in 0..grid.n_steps() {
        for (g, params) in groups.iter().enumerate() {
            let (ps, pi, pr) = (p[[n, g, 0]], p[[n, g, 1]], p[[n, g, 2]]);
            let rates = transition_rates(
                controls.alpha(n, g, HealthState::S),
                controls.nu(n, g),
                z.get(n, g),
                params,
            );
            let infection = rates.s_to_i * ps;
            let vaccination = rates.s_to_r * ps;
            let recovery = rates.i_to_r * pi;
            let next = [
                ps - dt * (infection + vaccination),
                pi + dt * (infection - recovery),
                pr + dt * (recovery + vaccination),
            ];
            for (e, v) in next.into_iter().enumerate() {
                if !v.is_finite() {
                    return Err(MfgError::NumericalInstability {
                        context: "forward pass",
                        step: n + 1,
                    });
                }
                p[[n + 1, g, e]] = if v < 0.0 {
                    if v < -DENSITY_SLACK {
                        return Err(MfgError::StepSize {
                            group: g,
                            state: HealthState::ALL[e].name(),
                            step: n + 1,
                            value: v,
                            dt,
                        });
                    }
                    0.0
                } else {
                    v
                };
            }
        }
    }
    Ok(StateDistribution(p))
}

/// Shared backward sweep. `controls(j, g, u_s, u_i)` gives `(alpha_S, nu)` at
/// grid point `j` for group `g` given the already-known values there.
fn backward_sweep<F>(
    groups: &[GroupParams],
    guide: &Guidelines,
    z: &Aggregate,
    composite_infected: &[f64],
    awareness_scale: f64,
    grid: &TimeGrid,
    controls: F,
) -> Result<ValueFunction>
where
    F: Fn(usize, usize, f64, f64) -> (f64, f64),
{
    let k = groups.len();
    let dt = grid.dt();
    let mut u = ValueFunction::zeros(k, grid);
    for n in (0..grid.n_steps()).rev() {
        let j = n + 1;
        let awareness = awareness_scale * composite_infected[j];
        for (g, params) in groups.iter().enumerate() {
            let u_s = u.0[[j, g, 0]];
            let u_i = u.0[[j, g, 1]];
            let (alpha, nu) = controls(j, g, u_s, u_i);
            let z_j = z.get(j, g);
            let dev = guide.level(g, HealthState::S, j) - alpha;
            let du_s = params.beta * alpha * z_j * (u_s - u_i) + params.kappa * nu * u_s
                - params.c_lambda * dev * dev
                - params.c_nu * nu
                - params.c_aware_s * awareness;
            let du_i = params.gamma * u_i - params.c_inf - params.c_aware_i * awareness;
            let next_s = u_s - dt * du_s;
            let next_i = u_i - dt * du_i;
            if !(next_s.is_finite() && next_i.is_finite()) {
                return Err(MfgError::NumericalInstability {
                    context: "backward pass",
                    step: n,
                });
            }
            if next_s < -DENSITY_SLACK || next_i < -DENSITY_SLACK {
                return Err(MfgError::NumericalInstability {
                    context: "backward pass (negative value, reduce dt)",
                    step: n,
                });
            }
            u.0[[n, g, 0]] = next_s.max(0.0);
            u.0[[n, g, 1]] = next_i.max(0.0);
        }
    }
    Ok(u)
}

/// Integrates the backward equations from `u_T = 0` with fixed controls.
///
/// With `awareness` on, the awareness costs use `P_t(I)` of `p`; otherwise `p`
/// is not read and `u(I)` depends only on the group parameters.
pub fn solve_backward(
    controls: &ControlProfile,
    z: &Aggregate,
    p: &StateDistribution,
    groups: &[GroupParams],
    guide: &Guidelines,
    grid: &TimeGrid,
    awareness: bool,
) -> Result<ValueFunction> {
    let k = groups.len();
    check_shapes(k, grid, controls, z)?;
    if guide.n_groups() != k {
        return Err(MfgError::Config(format!(
            "guidelines cover {} groups, expected {k}",
            guide.n_groups()
        )));
    }
    let composite = if awareness {
        if p.0.dim() != (grid.n_points(), k, 3) {
            return Err(MfgError::Config(
                "density shape does not match the grid".into(),
            ));
        }
        let masses: Vec<f64> = groups.iter().map(|g| g.mass).collect();
        p.composite_infected(&masses)
    } else {
        vec![0.0; grid.n_points()]
    };
    backward_sweep(groups, guide, z, &composite, 1.0, grid, |j, g, _, _| {
        (controls.alpha(j, g, HealthState::S), controls.nu(j, g))
    })
}

/// Backward pass of the agent's own optimization problem in a frozen
/// environment `(Z, P(I))`: controls are re-optimized at every step. The
/// awareness costs are multiplied by `awareness_scale`.
pub fn solve_backward_best_response(
    z: &Aggregate,
    composite_infected: &[f64],
    groups: &[GroupParams],
    guide: &Guidelines,
    grid: &TimeGrid,
    awareness_scale: f64,
) -> Result<ValueFunction> {
    let k = groups.len();
    if z.0.dim() != (grid.n_points(), k) || composite_infected.len() != grid.n_points() {
        return Err(MfgError::Config(
            "environment shape does not match the grid".into(),
        ));
    }
    backward_sweep(
        groups,
        guide,
        z,
        composite_infected,
        awareness_scale,
        grid,
        |j, g, u_s, u_i| {
            let params = &groups[g];
            let alpha = best_response_alpha_s(
                u_s,
                u_i,
                z.get(j, g),
                params,
                guide.level(g, HealthState::S, j),
            );
            (alpha, best_response_nu(u_s, params))
        },
    )
}

/// `sup_t ||prev_t - next_t||_2` for arrays indexed `(step, component)`.
pub fn residual_norm(prev: ArrayView2<f64>, next: ArrayView2<f64>) -> Result<f64> {
    if prev.dim() != next.dim() {
        return Err(MfgError::Internal(format!(
            "residual of mismatched shapes {:?} and {:?}",
            prev.dim(),
            next.dim()
        )));
    }
    Ok(prev
        .rows()
        .into_iter()
        .zip(next.rows())
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max))
}

fn max_group_residual(prev: &Array3<f64>, next: &Array3<f64>) -> Result<f64> {
    let k = prev.dim().1;
    let mut worst = 0.0f64;
    for g in 0..k {
        worst = worst.max(residual_norm(
            prev.slice(s![.., g, ..]),
            next.slice(s![.., g, ..]),
        )?);
    }
    Ok(worst)
}

/// `Z` at every grid point, using `alpha(I) = lambda^I`.
pub fn aggregate_flow(
    p: &StateDistribution,
    guide: &Guidelines,
    contact: &ContactMatrix,
    masses: &[f64],
    grid: &TimeGrid,
) -> Result<Aggregate> {
    let k = masses.len();
    let mut z = Array2::zeros((grid.n_points(), k));
    for n in 0..grid.n_points() {
        let infected: Vec<f64> = (0..k).map(|g| p.get(n, g, HealthState::I)).collect();
        let lambda_i = guide.levels_at(HealthState::I, n);
        let zn = compute_aggregate(&infected, &lambda_i, contact, masses)?;
        for g in 0..k {
            z[[n, g]] = zn[g];
        }
    }
    Ok(Aggregate(z))
}

/// Equilibrium controls at every grid point from `(u, Z)`. Infected and
/// recovered agents follow their guidelines exactly.
pub fn best_response_controls(
    u: &ValueFunction,
    z: &Aggregate,
    groups: &[GroupParams],
    guide: &Guidelines,
    grid: &TimeGrid,
) -> ControlProfile {
    let k = groups.len();
    let n_points = grid.n_points();
    let mut alpha = Array3::zeros((n_points, k, 3));
    let mut nu = Array2::zeros((n_points, k));
    for n in 0..n_points {
        for (g, params) in groups.iter().enumerate() {
            let u_s = u.get(n, g, HealthState::S);
            let u_i = u.get(n, g, HealthState::I);
            alpha[[n, g, 0]] = best_response_alpha_s(
                u_s,
                u_i,
                z.get(n, g),
                params,
                guide.level(g, HealthState::S, n),
            );
            alpha[[n, g, 1]] = guide.level(g, HealthState::I, n);
            alpha[[n, g, 2]] = guide.level(g, HealthState::R, n);
            nu[[n, g]] = best_response_nu(u_s, params);
        }
    }
    ControlProfile { alpha, nu }
}

/// Runs the damped fixed-point iteration to an equilibrium.
///
/// Non-convergence is not an error: the solution comes back with
/// `converged == false` and the full residual history.
pub fn fixed_point_solve(
    config: &ModelConfig,
    settings: &SolverSettings,
) -> Result<EquilibriumSolution> {
    let mut config = config.clone();
    config.solver = settings.clone();
    for w in config.validate()? {
        log::warn!("{w}");
    }
    let grid = config.grid;
    let groups = &config.groups;
    let guide = &config.guidelines;
    let masses = config.masses();
    let d = settings.damping;

    let mut p = StateDistribution::constant(&config.initial, &grid);
    let mut u = ValueFunction::zeros(groups.len(), &grid);
    let mut history = Vec::new();
    let mut converged = false;

    for iteration in 1..=settings.max_iterations {
        let z = aggregate_flow(&p, guide, &config.contact, &masses, &grid)?;
        let controls = best_response_controls(&u, &z, groups, guide, &grid);
        let p_new = solve_forward(&controls, &z, groups, &config.initial, &grid)?;
        let u_new = solve_backward(
            &controls,
            &z,
            &p_new,
            groups,
            guide,
            &grid,
            settings.awareness_enabled,
        )?;

        let p_next = if d == 1.0 {
            p_new.0
        } else {
            &p_new.0 * d + &p.0 * (1.0 - d)
        };
        let u_next = if d == 1.0 {
            u_new.0
        } else {
            &u_new.0 * d + &u.0 * (1.0 - d)
        };
        let residual = Residual {
            density: max_group_residual(&p.0, &p_next)?,
            value: max_group_residual(&u.0, &u_next)?,
        };
        if !residual.max().is_finite() {
            return Err(MfgError::NumericalInstability {
                context: "fixed-point residual",
                step: iteration,
            });
        }
        p = StateDistribution(p_next);
        u = ValueFunction(u_next);
        history.push(residual);
        log::debug!(
            "iteration {iteration}: density residual {:.3e}, value residual {:.3e}",
            residual.density,
            residual.value
        );
        if residual.max() <= settings.epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "fixed point did not converge in {} iterations (last residual {:?})",
            settings.max_iterations,
            history.last()
        );
    }

    let z = aggregate_flow(&p, guide, &config.contact, &masses, &grid)?;
    let controls = best_response_controls(&u, &z, groups, guide, &grid);
    if config.is_regular() {
        if let Some(((n, g), v)) = z.0.indexed_iter().find(|(_, v)| v.is_nan() || **v <= 0.0) {
            return Err(MfgError::Invariant(format!(
                "aggregate Z is {v} for group {g} at step {n} although every group \
                 is connected to an initially infected group"
            )));
        }
    }
    let composite_infected = p.composite_infected(&masses);
    let jumps = detect_jumps(&u, groups, &grid);
    Ok(EquilibriumSolution {
        iterations: history.len(),
        config,
        p,
        u,
        controls,
        z,
        composite_infected,
        residual_history: history,
        converged,
        jumps,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    use super::*;

    fn table1() -> ModelConfig {
        ModelConfig::preset("table1").unwrap()
    }

    fn constant_controls(grid: &TimeGrid, k: usize, alpha: f64, nu: f64) -> ControlProfile {
        ControlProfile {
            alpha: Array3::from_elem((grid.n_points(), k, 3), alpha),
            nu: Array2::from_elem((grid.n_points(), k), nu),
        }
    }

    #[test]
    fn forward_is_stationary_without_infection_or_vaccination() {
        let c = table1();
        let controls = constant_controls(&c.grid, 1, 0.9, 0.0);
        let z = Aggregate::zeros(1, &c.grid);
        let pi0 = [[0.7, 0.0, 0.3]];
        let p = solve_forward(&controls, &z, &c.groups, &pi0, &c.grid).unwrap();
        assert!(p
            .0
            .outer_iter()
            .all(|row| row[[0, 0]] == 0.7 && row[[0, 1]] == 0.0 && row[[0, 2]] == 0.3));
    }

    #[test]
    fn forward_single_euler_step() {
        let c = table1();
        let grid = TimeGrid::new(0.032, 0.016).unwrap();
        let controls = constant_controls(&grid, 1, 0.9, 1.0);
        let z = Aggregate(Array2::from_elem((grid.n_points(), 1), 0.009));
        let p = solve_forward(&controls, &z, &c.groups, &c.initial, &grid).unwrap();
        // 0.99 * (1 - 0.016 * (0.4 * 0.9 * 0.009 + 0.005 * 1))
        assert_abs_diff_eq!(p.get(1, 0, HealthState::S), 0.9898694784, epsilon = 1e-12);
        assert!((p.get(1, 0, HealthState::S) - 0.98990).abs() < 5e-5);
        assert!(p.max_simplex_error() < 1e-15);
    }

    #[test]
    fn forward_rejects_too_coarse_steps() {
        let mut c = table1();
        c.groups[0].gamma = 100.0;
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let controls = constant_controls(&grid, 1, 0.9, 0.0);
        let z = Aggregate::zeros(1, &grid);
        let err = solve_forward(&controls, &z, &c.groups, &c.initial, &grid).unwrap_err();
        assert!(matches!(err, MfgError::StepSize { .. }), "{err}");
        assert!(err.to_string().contains("reduce the time step"));
    }

    #[test]
    fn forward_rejects_bad_shapes_and_initial() {
        let c = table1();
        let controls = constant_controls(&c.grid, 2, 0.9, 0.0);
        let z = Aggregate::zeros(1, &c.grid);
        assert!(matches!(
            solve_forward(&controls, &z, &c.groups, &c.initial, &c.grid),
            Err(MfgError::Config(_))
        ));
        let controls = constant_controls(&c.grid, 1, 0.9, 0.0);
        assert!(solve_forward(&controls, &z, &c.groups, &[[0.5, 0.6, 0.0]], &c.grid).is_err());
    }

    fn closed_form(c_inf: f64, gamma: f64, horizon: f64, t: f64) -> f64 {
        c_inf / gamma * (1.0 - (-gamma * (horizon - t)).exp())
    }

    #[test]
    fn backward_matches_infected_closed_form() {
        let c = table1();
        let grid = c.grid;
        let controls = constant_controls(&grid, 1, 0.9, 0.0);
        let z = Aggregate::zeros(1, &grid);
        let p = StateDistribution::constant(&c.initial, &grid);
        let u = solve_backward(&controls, &z, &p, &c.groups, &c.guidelines, &grid, false).unwrap();
        let g = &c.groups[0];
        let bound = 2.0 * g.c_inf * g.gamma * grid.horizon() * grid.dt();
        let mut worst = 0.0f64;
        for n in 0..grid.n_points() {
            let exact = closed_form(g.c_inf, g.gamma, grid.horizon(), grid.time(n));
            worst = worst.max((u.get(n, 0, HealthState::I) - exact).abs());
            assert_eq!(u.get(n, 0, HealthState::R), 0.0);
        }
        assert!(worst <= bound, "{worst} > {bound}");
        assert!(worst < 0.01);
        assert_abs_diff_eq!(u.get(0, 0, HealthState::I), 6.99992, epsilon = 2e-3);
        for e in 0..3 {
            assert_eq!(u.0[[grid.n_steps(), 0, e]], 0.0);
        }
    }

    #[test]
    fn awareness_with_no_infection_changes_nothing() {
        let mut c = table1();
        c.set_awareness(0.5);
        let grid = c.grid;
        let controls = constant_controls(&grid, 1, 0.9, 1.0);
        let z = Aggregate(Array2::from_elem((grid.n_points(), 1), 0.01));
        let p = StateDistribution::constant(&[[1.0, 0.0, 0.0]], &grid);
        let on = solve_backward(&controls, &z, &p, &c.groups, &c.guidelines, &grid, true).unwrap();
        let off =
            solve_backward(&controls, &z, &p, &c.groups, &c.guidelines, &grid, false).unwrap();
        assert_eq!(on, off);

        // and a nonzero infected proportion raises both values
        let p = StateDistribution::constant(&[[0.9, 0.1, 0.0]], &grid);
        let on = solve_backward(&controls, &z, &p, &c.groups, &c.guidelines, &grid, true).unwrap();
        assert!(on.get(0, 0, HealthState::I) > off.get(0, 0, HealthState::I));
        assert!(on.get(0, 0, HealthState::S) > off.get(0, 0, HealthState::S));
    }

    #[test]
    fn residual_norm_examples() {
        let a = Array2::<f64>::zeros((10, 3));
        let b = Array2::<f64>::ones((10, 3));
        assert_eq!(residual_norm(a.view(), a.view()).unwrap(), 0.0);
        assert_abs_diff_eq!(
            residual_norm(a.view(), b.view()).unwrap(),
            3f64.sqrt(),
            epsilon = 1e-15
        );
        let mut c = a.clone();
        c[[7, 1]] = 0.25;
        assert_eq!(residual_norm(a.view(), c.view()).unwrap(), 0.25);
        let d = Array2::<f64>::zeros((10, 2));
        assert!(matches!(
            residual_norm(a.view(), d.view()),
            Err(MfgError::Internal(_))
        ));
    }

    #[test]
    fn no_infection_fixed_point() {
        let mut c = table1();
        c.initial = vec![[1.0, 0.0, 0.0]];
        let sol = fixed_point_solve(&c, &c.solver).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 2, "{} iterations", sol.iterations);
        let grid = c.grid;
        for n in 0..grid.n_points() {
            assert_eq!(sol.u.get(n, 0, HealthState::S), 0.0);
            assert_eq!(sol.u.get(n, 0, HealthState::R), 0.0);
            assert_eq!(sol.controls.nu(n, 0), 0.0);
            assert_eq!(sol.controls.alpha(n, 0, HealthState::S), 0.9);
            assert_eq!(sol.p.get(n, 0, HealthState::S), 1.0);
            assert_eq!(sol.z.get(n, 0), 0.0);
        }
        // u(I) still carries the cost of being infected
        assert!(sol.u.get(0, 0, HealthState::I) > 6.9);
        assert_eq!(sol.jumps.groups[0].crossing_count, 0);
    }

    #[test]
    fn table1_equilibrium_has_one_jump() {
        let c = table1();
        let sol = fixed_point_solve(&c, &c.solver).unwrap();
        assert!(sol.converged);
        assert!(sol.final_residual().unwrap().max() <= c.solver.epsilon);
        let j = &sol.jumps.groups[0];
        assert_eq!(j.crossing_count, 1);
        assert!(j.initial_above);
        assert!(j.jump_time > 0.0 && j.jump_time < 80.0);
        // vaccinate before the jump, not after
        let grid = c.grid;
        for n in 0..grid.n_points() {
            let expected = if grid.time(n) < j.jump_time { 1.0 } else { 0.0 };
            assert_eq!(sol.controls.nu(n, 0), expected, "t = {}", grid.time(n));
            assert_eq!(sol.controls.alpha(n, 0, HealthState::I), 0.9);
            assert_eq!(sol.controls.alpha(n, 0, HealthState::R), 0.9);
        }
        assert!(sol.p.max_simplex_error() <= 1e-9);
    }

    #[test]
    fn damping_reaches_the_same_equilibrium() {
        let c = table1();
        let tight = SolverSettings {
            epsilon: 1e-6,
            ..c.solver.clone()
        };
        let plain = fixed_point_solve(&c, &tight).unwrap();
        let damped = fixed_point_solve(
            &c,
            &SolverSettings {
                damping: 0.5,
                ..tight
            },
        )
        .unwrap();
        assert!(plain.converged && damped.converged);
        assert!(damped.iterations > plain.iterations);
        let diff = max_group_residual(&plain.p.0, &damped.p.0).unwrap();
        assert!(diff < 1e-4, "{diff}");
        assert!((plain.jumps.groups[0].jump_time - damped.jumps.groups[0].jump_time).abs() < 0.05);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let c = table1();
        let settings = SolverSettings {
            max_iterations: 2,
            epsilon: 1e-12,
            ..c.solver.clone()
        };
        let sol = fixed_point_solve(&c, &settings).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
        assert_eq!(sol.residual_history.len(), 2);
        assert!(sol.residual_history.iter().all(|r| r.max().is_finite()));
    }

    #[test]
    fn best_response_backward_is_monotone_in_awareness() {
        let mut c = table1();
        c.set_awareness(0.5);
        let sol = fixed_point_solve(&c, &c.solver).unwrap();
        let solve = |theta| {
            solve_backward_best_response(
                &sol.z,
                &sol.composite_infected,
                &c.groups,
                &c.guidelines,
                &c.grid,
                theta,
            )
            .unwrap()
        };
        let lo = solve(0.2);
        let hi = solve(0.7);
        for n in 0..c.grid.n_points() {
            assert!(hi.get(n, 0, HealthState::S) >= lo.get(n, 0, HealthState::S) - 1e-10);
        }
    }
}
