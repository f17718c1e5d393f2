//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use vaxmfg::analysis::{epidemic_metrics, sweep, SweepAxis, SweepParam};
use vaxmfg::model::HealthState;
use vaxmfg::oracle::{closed_form_u_i, nash_gap_test, occupancy_check, DeviationSpec};
use vaxmfg::solver::solve_backward_best_response;
use vaxmfg::{fixed_point_solve, EquilibriumSolution, ModelConfig};

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!(
            "{} {id:>2} {name}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
}

fn timed_solve(cfg: &ModelConfig) -> (EquilibriumSolution, Duration) {
    let start = Instant::now();
    let sol = fixed_point_solve(cfg, &cfg.solver).expect("solve");
    (sol, start.elapsed())
}

fn table1_with_cp(cp: f64) -> ModelConfig {
    let mut c = ModelConfig::preset("table1").unwrap();
    if cp > 0.0 {
        c.set_awareness(cp);
    }
    c
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0 };

    let cps = [0.0, 0.1, 0.5];
    let aware: Vec<(EquilibriumSolution, Duration)> = cps
        .iter()
        .map(|&cp| timed_solve(&table1_with_cp(cp)))
        .collect();
    let (t1, t1_time) = &aware[0];
    let (t2, t2_time) = timed_solve(&ModelConfig::preset("table2").unwrap());
    let mut relaxed_cfg = ModelConfig::preset("table2").unwrap();
    relaxed_cfg.set_guideline(HealthState::I, 0.6);
    let (relaxed, _) = timed_solve(&relaxed_cfg);

    // 1
    let g = &t1.config.groups[0];
    let horizon = t1.grid().horizon();
    let err = (0..t1.grid().n_points())
        .map(|n| {
            let exact = closed_form_u_i(g, horizon, t1.grid().time(n)).unwrap();
            (t1.u.get(n, 0, HealthState::I) - exact).abs()
        })
        .fold(0.0, f64::max);
    r.line(
        1,
        "closed-form u(I)",
        err <= 0.01,
        format!("max abs error {err:.3e} (tol 0.01)"),
    );

    // 2
    let all: Vec<(&str, &EquilibriumSolution)> = vec![
        ("table1 c_p=0", &aware[0].0),
        ("table1 c_p=0.1", &aware[1].0),
        ("table1 c_p=0.5", &aware[2].0),
        ("table2", &t2),
        ("table2 lambda_I=0.6", &relaxed),
    ];
    let worst = all
        .iter()
        .filter(|(_, s)| s.converged)
        .map(|(_, s)| s.p.max_simplex_error())
        .fold(0.0, f64::max);
    let n_conv = all.iter().filter(|(_, s)| s.converged).count();
    r.line(
        2,
        "simplex conservation",
        worst <= 1e-9 && n_conv == all.len(),
        format!(
            "max |sum p - 1| = {worst:.3e} over {n_conv}/{} converged solutions",
            all.len()
        ),
    );

    // 3
    let crossings: Vec<usize> = aware
        .iter()
        .map(|(s, _)| s.jumps.groups[0].crossing_count)
        .collect();
    let slowest = aware.iter().map(|(_, d)| *d).max().unwrap();
    r.line(
        3,
        "at most one vaccination switch",
        crossings.iter().all(|&c| c <= 1) && slowest < Duration::from_secs(60),
        format!("crossing counts {crossings:?} for c_p = {cps:?}; slowest solve {slowest:.2?}"),
    );

    // 4
    let jumps: Vec<f64> = aware
        .iter()
        .map(|(s, _)| s.jumps.groups[0].jump_time)
        .collect();
    let ordered = jumps.windows(2).all(|w| w[0] <= w[1]);
    let mut frozen_cfg = table1_with_cp(1.0);
    frozen_cfg.solver.awareness_enabled = true;
    let frozen: Vec<_> = cps
        .iter()
        .map(|&theta| {
            solve_backward_best_response(
                &t1.z,
                &t1.composite_infected,
                &frozen_cfg.groups,
                &frozen_cfg.guidelines,
                &frozen_cfg.grid,
                theta,
            )
            .unwrap()
        })
        .collect();
    let min_gap = frozen
        .windows(2)
        .flat_map(|w| {
            (0..t1.grid().n_points())
                .map(move |n| w[1].get(n, 0, HealthState::S) - w[0].get(n, 0, HealthState::S))
        })
        .fold(f64::INFINITY, f64::min);
    r.line(
        4,
        "awareness monotonicity",
        ordered && min_gap >= -1e-10,
        format!(
            "jump times {:.3} <= {:.3} <= {:.3}: {ordered}; min frozen u(S) increase {min_gap:.3e} (tol -1e-10)",
            jumps[0], jumps[1], jumps[2]
        ),
    );

    // 5
    let structural: Vec<String> = [("table1", t1), ("table2", &t2)]
        .iter()
        .map(|(name, s)| {
            let z_min = s.z.0.iter().cloned().fold(f64::INFINITY, f64::min);
            let inv = vaxmfg::analysis::check_invariants(s);
            format!(
                "{name}: min Z {z_min:.3e}, u(S)<u(I) {}",
                inv.value_ordering == Some(true)
            )
        })
        .collect();
    let ok5 = [t1, &t2].iter().all(|s| {
        let inv = vaxmfg::analysis::check_invariants(s);
        s.converged
            && s.z.0.iter().all(|z| *z > 0.0)
            && inv.aggregate_positive == Some(true)
            && inv.value_ordering == Some(true)
    });
    r.line(5, "Z > 0 and u(S) < u(I)", ok5, structural.join("; "));

    // 6
    let ok6 = t1.converged && t2.converged && t1.iterations <= 200 && t2.iterations <= 200;
    let wall = *t1_time + t2_time;
    r.line(
        6,
        "convergence",
        ok6 && wall < Duration::from_secs(300),
        format!(
            "table1 {} iterations, table2 {} iterations (eps 0.1), wall {wall:.2?}",
            t1.iterations, t2.iterations
        ),
    );

    // 7
    let start = Instant::now();
    let devs = [
        DeviationSpec::ScaleAlphaS(0.9),
        DeviationSpec::ScaleAlphaS(1.1),
        DeviationSpec::ShiftJumpTime(5.0),
        DeviationSpec::ShiftJumpTime(-5.0),
        DeviationSpec::ForceNoVaccination,
    ];
    let reports = nash_gap_test(t1, 0, &devs, 10_000, 42).unwrap();
    let occ = occupancy_check(t1, 0, 10_000, 42, 3.0).unwrap();
    let elapsed = start.elapsed();
    let gaps_ok = reports.iter().all(|d| d.passes(2.0));
    let occ_ok = occ.iter().all(|c| c.within);
    let worst_gap = reports
        .iter()
        .map(|d| d.gap / d.combined_std_error)
        .fold(f64::INFINITY, f64::min);
    let worst_occ = occ
        .iter()
        .map(|c| (c.empirical - c.density).abs() / c.std_error)
        .fold(0.0, f64::max);
    r.line(
        7,
        "Monte-Carlo Nash check",
        gaps_ok && occ_ok && elapsed < Duration::from_secs(120),
        format!(
            "min gap/SE {worst_gap:.2} (need >= -2) over {} deviations; max occupancy |z| {worst_occ:.2} (need <= 3) at {} checks; {elapsed:.2?}",
            reports.len(),
            occ.len()
        ),
    );

    // 8
    let m2 = epidemic_metrics(&t2, &t2.config.masses());
    let peaks: Vec<f64> = m2.groups.iter().map(|g| g.peak_proportion).collect();
    r.line(
        8,
        "peak infection low >= middle >= high",
        peaks[0] >= peaks[1] && peaks[1] >= peaks[2],
        format!("peaks {:.4} / {:.4} / {:.4}", peaks[0], peaks[1], peaks[2]),
    );

    // 9
    let mr = epidemic_metrics(&relaxed, &relaxed.config.masses());
    let no_vax = relaxed.controls.nu.iter().all(|v| *v == 0.0);
    r.line(
        9,
        "lambda_I = 0.6 policy",
        mr.composite.peak_proportion < m2.composite.peak_proportion && no_vax,
        format!(
            "composite peak {:.4} -> {:.4}; nu identically 0: {no_vax}",
            m2.composite.peak_proportion, mr.composite.peak_proportion
        ),
    );

    // 10
    let base = ModelConfig::preset("table1").unwrap();
    let axes = [
        SweepAxis::linspace(SweepParam::LambdaS, 0.3, 0.9, 7),
        SweepAxis::linspace(SweepParam::LambdaI, 0.3, 0.9, 7),
    ];
    let grid = sweep(&base, &axes, &base.solver).unwrap();
    let all_ok = grid.cells.iter().all(|c| c.ok());
    let jump_at = |i: usize, j: usize| {
        grid.cell(&[i, j]).unwrap().jumps.as_ref().unwrap().groups[0].jump_time
    };
    let min_alpha_at = |i: usize, j: usize| {
        grid.cell(&[i, j]).unwrap().metrics.as_ref().unwrap().groups[0].min_alpha_s
    };
    let diag: Vec<f64> = (0..7).map(|i| jump_at(i, i)).collect();
    let diag_drops: Vec<String> = diag
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] < w[0])
        .map(|(i, w)| {
            format!(
                "{:.1}->{:.1}: {:.3} > {:.3}",
                axes[0].values[i],
                axes[0].values[i + 1],
                w[0],
                w[1]
            )
        })
        .collect();
    let rows_decreasing =
        (0..7).all(|i| (0..6).all(|j| min_alpha_at(i, j + 1) < min_alpha_at(i, j)));
    let diag_text = diag
        .iter()
        .map(|t| format!("{t:.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    r.line(
        10,
        "guideline sweep monotonicity",
        all_ok && diag_drops.is_empty() && rows_decreasing,
        format!(
            "diagonal jump times [{diag_text}]{}; min alpha_S decreasing in lambda_I for every lambda_S: {rows_decreasing}",
            if diag_drops.is_empty() { String::new() } else { format!(" (decreases at {})", diag_drops.join(", ")) }
        ),
    );

    println!("{} of 10 criteria passed", 10 - r.failed);
    if r.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
