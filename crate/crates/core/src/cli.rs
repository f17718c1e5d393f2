//! Command-line front end: `solve`, `sweep`, `verify`, `emit-plots`.
//!
//! Every command writes into `--out-dir`. A run that does not converge or
//! fails an invariant check still writes what it can, plus
//! `diagnostics.json`, and reports failure so the binary exits nonzero.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::analysis::{epidemic_metrics, sweep, SweepAxis, SweepParam, SweepResult};
use crate::config::ModelConfig;
use crate::error::{MfgError, Result};
use crate::model::HealthState;
use crate::oracle::{nash_gap_test, occupancy_check, DeviationSpec};
use crate::output::{
    write_deviations, write_json, write_scenario_trajectories, write_sweep_file,
    write_trajectories_file, Diagnostics, SolveSummary, VerifyReport,
};
use crate::solver::{fixed_point_solve, EquilibriumSolution};

#[derive(Debug, Parser)]
#[command(
    name = "vaxmfg",
    version,
    about = "Mean-field equilibria of an SIR game with socialization and vaccination"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the equilibrium and write trajectories and a summary.
    Solve(SolveArgs),
    /// Solve over a grid of parameter values.
    Sweep(SweepArgs),
    /// Monte-Carlo check that no unilateral deviation pays off.
    Verify(VerifyArgs),
    /// Write the data series behind the standard experiment figures.
    EmitPlots(EmitPlotsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Fixed-point tolerance.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Relaxation weight on the new iterate, in (0, 1].
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

impl SolverArgs {
    fn apply(&self, cfg: &mut ModelConfig) {
        if let Some(e) = self.epsilon {
            cfg.solver.epsilon = e;
        }
        if let Some(d) = self.damping {
            cfg.solver.damping = d;
        }
        if let Some(m) = self.max_iterations {
            cfg.solver.max_iterations = m;
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// TOML model file; overrides --preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in parameter set: table1 (one population) or table2 (three).
    #[arg(long, default_value = "table1")]
    pub preset: String,
    /// Awareness cost c_pS = c_pI for all groups; enables awareness.
    #[arg(long)]
    pub cp: Option<f64>,
    /// Constant guideline for susceptibles.
    #[arg(long = "lambda-S")]
    pub lambda_s: Option<f64>,
    /// Constant guideline for infected.
    #[arg(long = "lambda-I")]
    pub lambda_i: Option<f64>,
    /// Constant guideline for recovered.
    #[arg(long = "lambda-R")]
    pub lambda_r: Option<f64>,
    /// Uniform vaccination cost.
    #[arg(long)]
    pub cnu: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "vaxmfg-out")]
    pub out_dir: PathBuf,
}

impl ModelArgs {
    /// Loads the base model, applies the overrides and validates.
    pub fn resolve(&self) -> Result<(ModelConfig, Vec<String>)> {
        let mut cfg = match &self.config {
            Some(p) => ModelConfig::load(p)?,
            None => ModelConfig::preset(&self.preset)?,
        };
        if let Some(cp) = self.cp {
            cfg.set_awareness(cp);
        }
        for (state, v) in [
            (HealthState::S, self.lambda_s),
            (HealthState::I, self.lambda_i),
            (HealthState::R, self.lambda_r),
        ] {
            if let Some(v) = v {
                cfg.set_guideline(state, v);
            }
        }
        if let Some(c) = self.cnu {
            cfg.set_vaccination_cost(c);
        }
        self.solver.apply(&mut cfg);
        let warnings = cfg.validate()?;
        for w in &warnings {
            warn!("{w}");
        }
        Ok((cfg, warnings))
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Keep every n-th time point in the trajectory file.
    #[arg(long, default_value_t = 1)]
    pub downsample: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Axis as `name=v1,v2,...` or `name=lo:hi:n`; repeatable. Names:
    /// lambda_S, lambda_I, lambda_R, cp, cnu. Default: the lambda_S x
    /// lambda_I grid on [0.3, 0.9] at --grid-res points per side.
    #[arg(long = "axis")]
    pub axes: Vec<SweepAxis>,
    #[arg(long, default_value_t = 7)]
    pub grid_res: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub n_paths: usize,
    /// Deviation to test, e.g. `scale_alpha_S:0.9`, `shift_jump_time:-5`,
    /// `no_vaccination`, `constant_alpha:0.5`; repeatable. Default: the
    /// standard set.
    #[arg(long = "deviation")]
    pub deviations: Vec<DeviationSpec>,
}

#[derive(Debug, Args)]
pub struct EmitPlotsArgs {
    #[arg(long, default_value = "vaxmfg-out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Points per side of the guideline grid.
    #[arg(long, default_value_t = 7)]
    pub grid_res: usize,
    #[arg(long, default_value_t = 10)]
    pub downsample: usize,
    /// Uniform vaccination cost of the low-cost scenario.
    #[arg(long, default_value_t = 0.005)]
    pub low_cnu: f64,
}

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub success: bool,
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl Outcome {
    fn record(&mut self, path: PathBuf) {
        info!("wrote {}", path.display());
        self.files.push(path);
    }

    fn finish(
        mut self,
        command: &str,
        out_dir: &Path,
        solution: Option<&EquilibriumSolution>,
    ) -> Result<Self> {
        self.success = self.failures.is_empty();
        if !self.success {
            let diag = Diagnostics {
                command: command.to_string(),
                reasons: self.failures.clone(),
                iterations: solution.map(|s| s.iterations),
                residual_history: solution
                    .map(|s| s.residual_history.clone())
                    .unwrap_or_default(),
            };
            let path = out_dir.join("diagnostics.json");
            write_json(&diag, &path)?;
            self.record(path);
        }
        Ok(self)
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Verify(a) => run_verify(a),
        Command::EmitPlots(a) => run_emit_plots(a),
    }
}

/// Solves, writing `diagnostics.json` if the solver itself errors out.
fn solve_or_diagnose(
    cfg: &ModelConfig,
    command: &str,
    out_dir: &Path,
) -> Result<EquilibriumSolution> {
    fixed_point_solve(cfg, &cfg.solver).inspect_err(|e| {
        let diag = Diagnostics {
            command: command.to_string(),
            reasons: vec![e.to_string()],
            iterations: None,
            residual_history: Vec::new(),
        };
        if let Err(io) = write_json(&diag, &out_dir.join("diagnostics.json")) {
            warn!("could not write diagnostics: {io}");
        }
    })
}

fn solution_failures(summary: &SolveSummary, label: &str) -> Vec<String> {
    let mut out = Vec::new();
    if !summary.converged {
        let last = summary.final_residual.map_or(f64::NAN, |r| r.max());
        out.push(format!(
            "{label}: no convergence after {} iterations (last residual {last:.3e}); \
             try --damping 0.5",
            summary.iterations
        ));
    }
    // convergence was reported above
    let inv = crate::analysis::InvariantReport {
        converged: true,
        ..summary.invariants.clone()
    };
    out.extend(inv.failures().into_iter().map(|f| format!("{label}: {f}")));
    out
}

fn run_solve(args: &SolveArgs) -> Result<Outcome> {
    let (cfg, warnings) = args.model.resolve()?;
    let dir = &args.model.out_dir;
    fs::create_dir_all(dir)?;
    let mut out = Outcome::default();

    let resolved = dir.join("config.toml");
    cfg.save(&resolved)?;
    out.record(resolved);

    let sol = solve_or_diagnose(&cfg, "solve", dir)?;
    info!(
        "{} iterations, converged = {}",
        sol.iterations, sol.converged
    );
    let summary = SolveSummary::new(&sol, warnings)?;

    let traj = dir.join("trajectories.csv");
    write_trajectories_file(&sol, args.downsample, &traj)?;
    out.record(traj);
    let sum = dir.join("summary.json");
    write_json(&summary, &sum)?;
    out.record(sum);

    out.failures = solution_failures(&summary, "solve");
    out.finish("solve", dir, Some(&sol))
}

fn default_axes(n: usize) -> Vec<SweepAxis> {
    vec![
        SweepAxis::linspace(SweepParam::LambdaS, 0.3, 0.9, n),
        SweepAxis::linspace(SweepParam::LambdaI, 0.3, 0.9, n),
    ]
}

fn sweep_failures(result: &SweepResult) -> Vec<String> {
    result
        .cells
        .iter()
        .filter_map(|c| {
            let at = format!("cell {:?}", c.coords);
            if let Some(e) = &c.error {
                Some(format!("{at}: {e}"))
            } else if !c.converged {
                Some(format!(
                    "{at}: no convergence after {} iterations",
                    c.iterations
                ))
            } else {
                match &c.jumps {
                    Some(j) if j.max_crossings() > 1 => {
                        Some(format!("{at}: {} vaccination switches", j.max_crossings()))
                    }
                    _ => None,
                }
            }
        })
        .collect()
}

fn run_sweep(args: &SweepArgs) -> Result<Outcome> {
    let (cfg, _) = args.model.resolve()?;
    let dir = &args.model.out_dir;
    fs::create_dir_all(dir)?;
    let axes = if args.axes.is_empty() {
        default_axes(args.grid_res)
    } else {
        args.axes.clone()
    };
    let result = sweep(&cfg, &axes, &cfg.solver)?;
    let mut out = Outcome::default();
    let path = dir.join("sweep.csv");
    write_sweep_file(&result, &cfg.names, &path)?;
    out.record(path);
    out.failures = sweep_failures(&result);
    out.finish("sweep", dir, None)
}

fn run_verify(args: &VerifyArgs) -> Result<Outcome> {
    const GAP_N_SE: f64 = 2.0;
    const OCCUPANCY_N_SE: f64 = 3.0;
    let (cfg, warnings) = args.model.resolve()?;
    let dir = &args.model.out_dir;
    fs::create_dir_all(dir)?;
    let sol = solve_or_diagnose(&cfg, "verify", dir)?;
    let summary = SolveSummary::new(&sol, warnings)?;
    let mut out = Outcome {
        failures: solution_failures(&summary, "equilibrium"),
        ..Outcome::default()
    };

    let deviations = if args.deviations.is_empty() {
        DeviationSpec::standard_set()
    } else {
        args.deviations.clone()
    };
    let mut reports = Vec::new();
    let mut occupancy = Vec::new();
    for k in 0..cfg.n_groups() {
        reports.extend(nash_gap_test(
            &sol,
            k,
            &deviations,
            args.n_paths,
            args.seed,
        )?);
        occupancy.extend(occupancy_check(
            &sol,
            k,
            args.n_paths,
            args.seed,
            OCCUPANCY_N_SE,
        )?);
    }
    for r in reports.iter().filter(|r| !r.passes(GAP_N_SE)) {
        out.failures.push(format!(
            "group {}: deviation {} lowers cost by {:.3e} (combined SE {:.3e})",
            cfg.names[r.group], r.deviation, -r.gap, r.combined_std_error
        ));
    }
    for c in occupancy.iter().filter(|c| !c.within) {
        out.failures.push(format!(
            "group {}: occupancy of {} at t = {} is {} vs density {} (SE {:.3e})",
            cfg.names[c.group], c.state, c.time, c.empirical, c.density, c.std_error
        ));
    }
    let report = VerifyReport {
        config_hash: cfg.content_hash()?,
        n_paths: args.n_paths,
        seed: args.seed,
        gap_n_se: GAP_N_SE,
        occupancy_n_se: OCCUPANCY_N_SE,
        all_gaps_ok: reports.iter().all(|r| r.passes(GAP_N_SE)),
        all_occupancy_ok: occupancy.iter().all(|c| c.within),
        deviations: reports,
        occupancy,
    };
    let json = dir.join("verify.json");
    write_json(&report, &json)?;
    out.record(json);
    let csv_path = dir.join("deviations.csv");
    write_deviations(&report.deviations, &cfg.names, fs::File::create(&csv_path)?)?;
    out.record(csv_path);
    out.finish("verify", dir, Some(&sol))
}

fn write_scenarios(
    path: &Path,
    runs: &[(String, &EquilibriumSolution)],
    every: usize,
) -> Result<()> {
    write_scenario_trajectories(
        runs,
        every,
        std::io::BufWriter::new(fs::File::create(path)?),
    )
}

/// Per-(scenario, group) scalars: jump and epidemic metrics.
fn write_scenario_metrics(path: &Path, runs: &[(String, &EquilibriumSolution)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "group",
        "iterations",
        "converged",
        "jump_time",
        "crossing_count",
        "vaccination_threshold",
        "peak_time",
        "peak_proportion",
        "min_alpha_S",
        "cumulative_recovered",
    ])?;
    for (label, sol) in runs {
        let m = epidemic_metrics(sol, &sol.config.masses());
        let names = sol
            .config
            .names
            .iter()
            .cloned()
            .chain(["composite".to_string()]);
        let metrics = m.groups.iter().chain([&m.composite]);
        for (k, (name, gm)) in names.zip(metrics).enumerate() {
            let jump = sol.jumps.groups.get(k);
            let opt = |v: Option<String>| v.unwrap_or_default();
            w.write_record([
                label.clone(),
                name,
                sol.iterations.to_string(),
                sol.converged.to_string(),
                opt(jump.map(|j| j.jump_time.to_string())),
                opt(jump.map(|j| j.crossing_count.to_string())),
                opt(jump.map(|j| j.threshold.to_string())),
                gm.peak_time.to_string(),
                gm.peak_proportion.to_string(),
                gm.min_alpha_s.to_string(),
                gm.cumulative_recovered.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run_emit_plots(args: &EmitPlotsArgs) -> Result<Outcome> {
    let dir = &args.out_dir;
    fs::create_dir_all(dir)?;
    let mut out = Outcome::default();
    let base = |name: &str| -> Result<ModelConfig> {
        let mut c = ModelConfig::preset(name)?;
        args.solver.apply(&mut c);
        c.validate()?;
        Ok(c)
    };
    let solve_checked = |label: String,
                         cfg: ModelConfig,
                         out: &mut Outcome|
     -> Result<(String, EquilibriumSolution)> {
        let sol = fixed_point_solve(&cfg, &cfg.solver)?;
        out.failures
            .extend(solution_failures(&SolveSummary::new(&sol, vec![])?, &label));
        Ok((label, sol))
    };

    // awareness comparison on the single-population model
    let mut aware = Vec::new();
    for cp in [0.0, 0.1, 0.5] {
        let mut c = base("table1")?;
        if cp > 0.0 {
            c.set_awareness(cp);
        }
        aware.push(solve_checked(format!("c_p={cp}"), c, &mut out)?);
    }
    let refs: Vec<(String, &EquilibriumSolution)> =
        aware.iter().map(|(l, s)| (l.clone(), s)).collect();
    let p = dir.join("fig1_3_awareness_trajectories.csv");
    write_scenarios(&p, &refs, args.downsample)?;
    out.record(p);
    let p = dir.join("fig1_3_awareness_metrics.csv");
    write_scenario_metrics(&p, &refs)?;
    out.record(p);

    // guideline grid
    let t1 = base("table1")?;
    let grid = sweep(&t1, &default_axes(args.grid_res), &t1.solver)?;
    out.failures.extend(sweep_failures(&grid));
    let p = dir.join("fig4_guideline_grid.csv");
    write_sweep_file(&grid, &t1.names, &p)?;
    out.record(p);

    // multi-population: lowered infected guideline, then vaccination cost
    let t2 = base("table2")?;
    let mut relaxed = t2.clone();
    relaxed.set_guideline(HealthState::I, 0.6);
    let mut cheap = t2.clone();
    cheap.set_vaccination_cost(args.low_cnu);
    let runs = [
        solve_checked("baseline".into(), t2, &mut out)?,
        solve_checked("lambda_I=0.6".into(), relaxed, &mut out)?,
        solve_checked(format!("c_nu={}", args.low_cnu), cheap, &mut out)?,
    ];
    for (stem, pick) in [
        ("fig5_infected_guideline", [0, 1]),
        ("fig6_vaccination_cost", [0, 2]),
    ] {
        let refs: Vec<(String, &EquilibriumSolution)> = pick
            .iter()
            .map(|&i| (runs[i].0.clone(), &runs[i].1))
            .collect();
        let p = dir.join(format!("{stem}_trajectories.csv"));
        write_scenarios(&p, &refs, args.downsample)?;
        out.record(p);
        let p = dir.join(format!("{stem}_metrics.csv"));
        write_scenario_metrics(&p, &refs)?;
        out.record(p);
    }
    out.finish("emit-plots", dir, None)
}

/// Parses and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            for f in &outcome.failures {
                eprintln!("FAILED: {f}");
            }
            if outcome.success {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                MfgError::StepSize { .. }
                | MfgError::NumericalInstability { .. }
                | MfgError::Invariant(_) => 1,
                _ => 2,
            }
        }
    }
}
