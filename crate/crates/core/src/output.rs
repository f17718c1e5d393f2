//! Serialization of solutions, sweeps and verification results.
//!
//! Column names here are part of the public interface; they are listed in
//! the README and must not change casually.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_invariants, epidemic_metrics, EpidemicMetrics, InvariantReport, SweepResult,
};
use crate::error::Result;
use crate::model::HealthState;
use crate::oracle::{DeviationReport, OccupancyCheck};
use crate::solver::{EquilibriumSolution, Residual, SolverSettings};

pub const TRAJECTORY_COLUMNS: [&str; 11] = [
    "t", "group", "p_S", "p_I", "p_R", "u_S", "u_I", "u_R", "alpha_S", "nu", "Z",
];

pub const SWEEP_METRIC_COLUMNS: [&str; 9] = [
    "group",
    "converged",
    "iterations",
    "jump_time",
    "crossing_count",
    "peak_time",
    "peak_proportion",
    "min_alpha_S",
    "cumulative_recovered",
];

pub const DEVIATION_COLUMNS: [&str; 11] = [
    "group",
    "deviation",
    "equilibrium_cost",
    "equilibrium_se",
    "deviated_cost",
    "deviated_se",
    "gap",
    "combined_se",
    "paired_se",
    "n_paths",
    "seed",
];

/// Grid indices kept when writing every `every`-th point; the final point is
/// always included.
pub fn downsample_indices(n_points: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut idx: Vec<usize> = (0..n_points).step_by(every).collect();
    if idx.last() != Some(&(n_points - 1)) {
        idx.push(n_points - 1);
    }
    idx
}

fn trajectory_row(solution: &EquilibriumSolution, n: usize, k: usize) -> Vec<String> {
    let p = |e| solution.p.get(n, k, e);
    let u = |e| solution.u.get(n, k, e);
    vec![
        solution.grid().time(n).to_string(),
        solution.config.names[k].clone(),
        p(HealthState::S).to_string(),
        p(HealthState::I).to_string(),
        p(HealthState::R).to_string(),
        u(HealthState::S).to_string(),
        u(HealthState::I).to_string(),
        u(HealthState::R).to_string(),
        solution.controls.alpha(n, k, HealthState::S).to_string(),
        solution.controls.nu(n, k).to_string(),
        solution.z.get(n, k).to_string(),
    ]
}

/// Long-format trajectories: one row per (time point, group).
pub fn write_trajectories<W: Write>(
    solution: &EquilibriumSolution,
    every: usize,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_COLUMNS)?;
    for n in downsample_indices(solution.grid().n_points(), every) {
        for k in 0..solution.config.n_groups() {
            w.write_record(trajectory_row(solution, n, k))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Trajectories of several labelled runs: a leading `scenario` column, the
/// usual trajectory columns, and the composite infected proportion.
pub fn write_scenario_trajectories<W: Write>(
    runs: &[(String, &EquilibriumSolution)],
    every: usize,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = std::iter::once("scenario")
        .chain(TRAJECTORY_COLUMNS)
        .chain(["composite_I"])
        .collect();
    w.write_record(&header)?;
    for (label, sol) in runs {
        for n in downsample_indices(sol.grid().n_points(), every) {
            for k in 0..sol.config.n_groups() {
                let mut row = vec![label.clone()];
                row.extend(trajectory_row(sol, n, k));
                row.push(sol.composite_infected[n].to_string());
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectories_file(
    solution: &EquilibriumSolution,
    every: usize,
    path: &Path,
) -> Result<()> {
    write_trajectories(solution, every, BufWriter::new(File::create(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub jump_time: f64,
    pub crossing_count: usize,
    pub vaccination_threshold: f64,
    pub vaccinates_initially: bool,
}

/// Everything a `solve` run reports besides the trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub config_hash: String,
    pub horizon: f64,
    pub dt: f64,
    pub settings: SolverSettings,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: Option<Residual>,
    pub residual_history: Vec<Residual>,
    pub groups: Vec<GroupSummary>,
    pub metrics: EpidemicMetrics,
    pub invariants: InvariantReport,
    pub warnings: Vec<String>,
}

impl SolveSummary {
    pub fn new(solution: &EquilibriumSolution, warnings: Vec<String>) -> Result<Self> {
        let cfg = &solution.config;
        let groups = cfg
            .names
            .iter()
            .zip(&solution.jumps.groups)
            .map(|(name, j)| GroupSummary {
                name: name.clone(),
                jump_time: j.jump_time,
                crossing_count: j.crossing_count,
                vaccination_threshold: j.threshold,
                vaccinates_initially: j.initial_above,
            })
            .collect();
        Ok(Self {
            config_hash: cfg.content_hash()?,
            horizon: cfg.grid.horizon(),
            dt: cfg.grid.dt(),
            settings: cfg.solver.clone(),
            converged: solution.converged,
            iterations: solution.iterations,
            final_residual: solution.final_residual(),
            residual_history: solution.residual_history.clone(),
            groups,
            metrics: epidemic_metrics(solution, &cfg.masses()),
            invariants: check_invariants(solution),
            warnings,
        })
    }

    /// Converged and every invariant check passed.
    pub fn ok(&self) -> bool {
        self.converged && self.invariants.all_ok()
    }
}

/// Written next to the outputs whenever a run exits unsuccessfully.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub command: String,
    pub reasons: Vec<String>,
    pub iterations: Option<usize>,
    pub residual_history: Vec<Residual>,
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// One row per (cell, group); axis columns first, in axis order.
/// Failed cells keep their axis values with `converged = false` and empty
/// metric fields.
pub fn write_sweep<W: Write>(result: &SweepResult, names: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = result
        .axes
        .iter()
        .map(|a| a.param.column_name())
        .chain(SWEEP_METRIC_COLUMNS)
        .collect();
    w.write_record(&header)?;
    for cell in &result.cells {
        for (k, name) in names.iter().enumerate() {
            let mut row: Vec<String> = cell.coords.iter().map(f64::to_string).collect();
            row.push(name.clone());
            row.push(cell.converged.to_string());
            row.push(cell.iterations.to_string());
            match (&cell.jumps, &cell.metrics) {
                (Some(j), Some(m)) => {
                    let (j, m) = (&j.groups[k], &m.groups[k]);
                    row.extend([
                        j.jump_time.to_string(),
                        j.crossing_count.to_string(),
                        m.peak_time.to_string(),
                        m.peak_proportion.to_string(),
                        m.min_alpha_s.to_string(),
                        m.cumulative_recovered.to_string(),
                    ]);
                }
                _ => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_file(result: &SweepResult, names: &[String], path: &Path) -> Result<()> {
    write_sweep(result, names, BufWriter::new(File::create(path)?))
}

pub fn write_deviations<W: Write>(
    reports: &[DeviationReport],
    names: &[String],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DEVIATION_COLUMNS)?;
    for r in reports {
        w.write_record([
            names[r.group].clone(),
            r.deviation.to_string(),
            r.equilibrium.mean.to_string(),
            r.equilibrium.std_error.to_string(),
            r.deviated.mean.to_string(),
            r.deviated.std_error.to_string(),
            r.gap.to_string(),
            r.combined_std_error.to_string(),
            r.paired_std_error.to_string(),
            r.n_paths.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Output of `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config_hash: String,
    pub n_paths: usize,
    pub seed: u64,
    /// Threshold used for gaps: `gap >= -n_se * combined_se`.
    pub gap_n_se: f64,
    pub occupancy_n_se: f64,
    pub deviations: Vec<DeviationReport>,
    pub occupancy: Vec<OccupancyCheck>,
    pub all_gaps_ok: bool,
    pub all_occupancy_ok: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{sweep, SweepAxis, SweepParam};
    use crate::config::ModelConfig;
    use crate::solver::fixed_point_solve;

    #[test]
    fn downsampling_keeps_endpoints() {
        assert_eq!(downsample_indices(5, 1), vec![0, 1, 2, 3, 4]);
        assert_eq!(downsample_indices(5, 3), vec![0, 3, 4]);
        assert_eq!(downsample_indices(5, 2), vec![0, 2, 4]);
        assert_eq!(downsample_indices(5, 0), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn trajectory_csv_shape() {
        let c = ModelConfig::preset("table1").unwrap();
        let sol = fixed_point_solve(&c, &c.solver).unwrap();
        let mut buf = Vec::new();
        write_trajectories(&sol, 100, &mut buf).unwrap();
        let mut r = csv::Reader::from_reader(buf.as_slice());
        let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, TRAJECTORY_COLUMNS);
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 51);
        assert_eq!(&rows[0][0], "0");
        assert_eq!(&rows[50][0], "80");
        let summary = SolveSummary::new(&sol, vec![]).unwrap();
        assert!(summary.ok());
        assert_eq!(summary.groups[0].crossing_count, 1);
        let json = serde_json::to_string(&summary).unwrap();
        let back: SolveSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back.iterations, summary.iterations);
    }

    #[test]
    fn sweep_csv_is_long_format() {
        let mut c = ModelConfig::preset("table1").unwrap();
        c.grid = crate::model::TimeGrid::new(20.0, 0.02).unwrap();
        c.guidelines = crate::model::Guidelines::constant(&[[0.9; 3]], &c.grid).unwrap();
        let axes = [
            SweepAxis {
                param: SweepParam::LambdaS,
                values: vec![0.5, 0.9],
            },
            SweepAxis {
                param: SweepParam::LambdaI,
                values: vec![0.5, 0.7, 0.9],
            },
        ];
        let res = sweep(&c, &axes, &c.solver).unwrap();
        let mut buf = Vec::new();
        write_sweep(&res, &c.names, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "lambda_S,lambda_I,group,converged,iterations,jump_time,crossing_count,peak_time,peak_proportion,min_alpha_S,cumulative_recovered"
        );
        assert_eq!(lines.count(), 6);
    }
}
