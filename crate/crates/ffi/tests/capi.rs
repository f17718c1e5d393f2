use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use vaxmfg_ffi::*;

fn last_error() -> String {
    let p = vax_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn preset(name: &str) -> *mut VaxConfig {
    let name = CString::new(name).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { vax_config_from_preset(name.as_ptr(), &mut cfg) },
        VaxStatus::Ok
    );
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn solve_table1_through_c_abi() {
    let cfg = preset("table1");
    let mut sol = ptr::null_mut();
    unsafe {
        assert_eq!(vax_solve(cfg, &mut sol), VaxStatus::Ok);
        let (mut n, mut k, mut it, mut conv) = (0usize, 0usize, 0usize, false);
        assert_eq!(
            vax_solution_info(sol, &mut n, &mut k, &mut it, &mut conv),
            VaxStatus::Ok
        );
        assert_eq!((n, k), (5001, 1));
        assert!(conv && it >= 1);

        let (mut t1, mut crossings) = (0.0, 0usize);
        assert_eq!(
            vax_solution_jump(sol, 0, &mut t1, &mut crossings),
            VaxStatus::Ok
        );
        assert_eq!(crossings, 1);
        assert!(t1 > 60.0 && t1 < 70.0, "{t1}");

        let mut u_i = vec![0.0; n];
        let mut written = 0;
        assert_eq!(
            vax_solution_copy_series(sol, 0, VaxSeries::ValueI, u_i.as_mut_ptr(), n, &mut written),
            VaxStatus::Ok
        );
        assert_eq!(written, n);
        let mut exact = 0.0;
        assert_eq!(
            vax_closed_form_value_infected(1.0, 1.0 / 7.0, 80.0, 0.0, &mut exact),
            VaxStatus::Ok
        );
        assert!((u_i[0] - exact).abs() < 0.01);

        let mut short = vec![0.0; 10];
        assert_eq!(
            vax_solution_copy_series(
                sol,
                0,
                VaxSeries::Time,
                short.as_mut_ptr(),
                10,
                &mut written
            ),
            VaxStatus::BufferTooSmall
        );
        assert_eq!(written, n);
        assert_eq!(
            vax_solution_copy_series(
                sol,
                1,
                VaxSeries::Time,
                short.as_mut_ptr(),
                10,
                &mut written
            ),
            VaxStatus::OutOfRange
        );

        vax_solution_free(sol);
        vax_config_free(cfg);
    }
}

#[test]
fn setters_validate_and_leave_config_intact() {
    let cfg = preset("table2");
    unsafe {
        let mut k = 0;
        assert_eq!(vax_config_n_groups(cfg, &mut k), VaxStatus::Ok);
        assert_eq!(k, 3);
        assert_eq!(
            vax_config_set_guideline(cfg, VaxState::Susceptible, 0.0),
            VaxStatus::Validation
        );
        assert!(last_error().contains("full lockdown excluded"));
        assert_eq!(
            vax_config_set_guideline(cfg, VaxState::Infected, 0.6),
            VaxStatus::Ok
        );
        assert_eq!(vax_config_set_awareness(cfg, 0.1), VaxStatus::Ok);
        assert_eq!(
            vax_config_set_solver(cfg, 0.0, 10, 1.0),
            VaxStatus::Validation
        );

        let mut sol = ptr::null_mut();
        assert_eq!(vax_solve(cfg, &mut sol), VaxStatus::Ok);
        let mut nu = vec![1.0; 5001];
        let mut w = 0;
        for g in 0..3 {
            assert_eq!(
                vax_solution_copy_series(sol, g, VaxSeries::Nu, nu.as_mut_ptr(), nu.len(), &mut w),
                VaxStatus::Ok
            );
            assert!(nu.iter().all(|v| *v == 0.0));
        }
        vax_solution_free(sol);
        vax_config_free(cfg);
    }
}

#[test]
fn non_convergence_still_returns_a_solution() {
    let cfg = preset("table1");
    unsafe {
        assert_eq!(vax_config_set_solver(cfg, 1e-12, 2, 1.0), VaxStatus::Ok);
        let mut sol = ptr::null_mut();
        assert_eq!(vax_solve(cfg, &mut sol), VaxStatus::NotConverged);
        assert!(!sol.is_null());
        let mut conv = true;
        assert_eq!(
            vax_solution_info(
                sol,
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
                &mut conv
            ),
            VaxStatus::Ok
        );
        assert!(!conv);
        vax_solution_free(sol);
        vax_config_free(cfg);
    }
}

#[test]
fn bad_inputs_map_to_status_codes() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(
            vax_config_from_preset(ptr::null(), &mut cfg),
            VaxStatus::NullPointer
        );
        let bogus = CString::new("table9").unwrap();
        assert_eq!(
            vax_config_from_preset(bogus.as_ptr(), &mut cfg),
            VaxStatus::Config
        );
        assert!(cfg.is_null());
        assert!(last_error().contains("table9"));

        let bad_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(
            vax_config_from_toml(bad_utf8.as_ptr().cast(), &mut cfg),
            VaxStatus::InvalidUtf8
        );
        let toml = CString::new("horizon = [").unwrap();
        assert_eq!(
            vax_config_from_toml(toml.as_ptr(), &mut cfg),
            VaxStatus::Config
        );
        let missing = CString::new("/nonexistent/model.toml").unwrap();
        assert_eq!(
            vax_config_from_file(missing.as_ptr(), &mut cfg),
            VaxStatus::Config
        );

        let mut sol = ptr::null_mut();
        assert_eq!(vax_solve(ptr::null(), &mut sol), VaxStatus::NullPointer);
        let mut x = 0.0;
        assert_eq!(
            vax_closed_form_value_infected(1.0, 1.0 / 7.0, 80.0, 81.0, &mut x),
            VaxStatus::Validation
        );
        assert_eq!(
            vax_closed_form_value_infected(1.0, 0.0, 80.0, 1.0, &mut x),
            VaxStatus::Validation
        );

        vax_config_free(ptr::null_mut());
        vax_solution_free(ptr::null_mut());
    }
}

#[test]
fn toml_round_trip_through_c_abi() {
    let text = vaxmfg::ModelConfig::preset("table2")
        .unwrap()
        .to_toml_string()
        .unwrap();
    let text = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(vax_config_from_toml(text.as_ptr(), &mut cfg), VaxStatus::Ok);
        let mut k = 0;
        vax_config_n_groups(cfg, &mut k);
        assert_eq!(k, 3);
        vax_config_free(cfg);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(vax_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// The generated header must be valid C. Skipped when no C compiler exists.
#[test]
fn header_compiles_as_c() {
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile_dir();
    let src = dir.join("use_header.c");
    std::fs::write(
        &src,
        r#"#include "vaxmfg.h"
int main(void) {
    VaxConfig *cfg = NULL;
    VaxSolution *sol = NULL;
    double buf[4];
    size_t written = 0;
    if (vax_config_from_preset("table1", &cfg) != VAX_STATUS_OK) return 1;
    if (vax_solve(cfg, &sol) != VAX_STATUS_OK) return 2;
    vax_solution_copy_series(sol, 0, VAX_SERIES_NU, buf, 4, &written);
    vax_solution_free(sol);
    vax_config_free(cfg);
    return 0;
}
"#,
    )
    .unwrap();
    let status = Command::new("cc")
        .args([
            "-std=c99",
            "-Wall",
            "-Werror",
            "-fsyntax-only",
            "-I",
            include,
        ])
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(_) => eprintln!("no C compiler found; skipping header check"),
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("capi");
    std::fs::create_dir_all(&d).unwrap();
    d
}
