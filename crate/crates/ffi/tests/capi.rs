use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use acrl_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        acrl_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn new_env(name: &str, seed: u64) -> *mut AcrlEnv {
    let name = CString::new(name).unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { acrl_env_new(name.as_ptr(), seed, &mut env) }, AcrlStatus::Ok);
    assert!(!env.is_null());
    env
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(acrl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn env_lifecycle_and_feasibility() {
    let env = new_env("BallReach", 3);
    let (mut sd, mut ad) = (0usize, 0usize);
    unsafe {
        assert_eq!(acrl_env_dims(env, &mut sd, &mut ad), AcrlStatus::Ok);
        assert_eq!((sd, ad), (4, 2));
        let mut s = vec![0.0; sd];
        assert_eq!(acrl_env_reset(env, s.as_mut_ptr(), sd), AcrlStatus::Ok);

        let far = [0.9, 0.9];
        let mut ok = true;
        assert_eq!(acrl_env_is_feasible(env, far.as_ptr(), 2, &mut ok), AcrlStatus::Ok);
        assert!(!ok);
        let (mut r, mut done) = (0.0, false);
        let status = acrl_env_step(env, far.as_ptr(), 2, s.as_mut_ptr(), sd, &mut r, &mut done);
        assert_eq!(status, AcrlStatus::InfeasibleAction);
        assert!(last_error().contains("infeasible"));

        let mut fixed = [0.0; 2];
        assert_eq!(acrl_env_project(env, far.as_ptr(), fixed.as_mut_ptr(), 2), AcrlStatus::Ok);
        assert_eq!(acrl_env_is_feasible(env, fixed.as_ptr(), 2, &mut ok), AcrlStatus::Ok);
        assert!(ok);
        let mut qp = 0u64;
        assert_eq!(acrl_env_qp_count(env, &mut qp), AcrlStatus::Ok);
        assert_eq!(qp, 1);
        assert_eq!(acrl_env_step(env, fixed.as_ptr(), 2, s.as_mut_ptr(), sd, &mut r, &mut done), AcrlStatus::Ok);
        assert!(r <= 0.0);
        assert_eq!(last_error(), "");
        acrl_env_free(env);
    }
}

#[test]
fn bad_arguments_are_reported_not_crashed() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(acrl_env_new(ptr::null(), 0, &mut env), AcrlStatus::NullPointer);
        let name = CString::new("Hopper").unwrap();
        assert_eq!(acrl_env_new(name.as_ptr(), 0, &mut env), AcrlStatus::InvalidArgument);
        assert!(last_error().contains("Hopper"));
        let (mut a, mut b) = (0usize, 0usize);
        assert_eq!(acrl_env_dims(ptr::null_mut(), &mut a, &mut b), AcrlStatus::NullPointer);
        acrl_env_free(ptr::null_mut());
        acrl_agent_free(ptr::null_mut());

        let env = new_env("BSS3z", 0);
        let mut short = [0.0; 2];
        assert_eq!(acrl_env_state(env, short.as_mut_ptr(), 2), AcrlStatus::DimensionMismatch);
        let mut s = [0.0; 1];
        let wrong = [1.0; 2];
        let (mut r, mut d) = (0.0, false);
        let st = acrl_env_step(env, wrong.as_ptr(), 2, s.as_mut_ptr(), 1, &mut r, &mut d);
        assert_eq!(st, AcrlStatus::DimensionMismatch);
        acrl_env_free(env);

        let env = new_env("GridTab", 0);
        let a = [0.0];
        let mut out = [0.0];
        let st = acrl_env_project(env, a.as_ptr(), out.as_mut_ptr(), 1);
        assert!(st == AcrlStatus::Ok || st == AcrlStatus::NotProjectable);
        acrl_env_free(env);
    }
}

#[test]
fn trained_agent_emits_feasible_actions() {
    let name = CString::new("BallReach").unwrap();
    let mut agent = ptr::null_mut();
    unsafe {
        assert_eq!(acrl_agent_train(name.as_ptr(), 0, 1, 1500, &mut agent), AcrlStatus::Ok);
        assert_eq!(acrl_agent_train(name.as_ptr(), 7, 1, 10, &mut ptr::null_mut()), AcrlStatus::InvalidArgument);
        let env = new_env("BallReach", 11);
        let mut s = [0.0; 4];
        for _ in 0..20 {
            let mut a = [0.0; 2];
            assert_eq!(acrl_agent_act(agent, env, 0.9, a.as_mut_ptr(), 2), AcrlStatus::Ok);
            let mut ok = false;
            acrl_env_is_feasible(env, a.as_ptr(), 2, &mut ok);
            assert!(ok);
            let (mut r, mut d) = (0.0, false);
            assert_eq!(acrl_env_step(env, a.as_ptr(), 2, s.as_mut_ptr(), 4, &mut r, &mut d), AcrlStatus::Ok);
        }
        let mut a = [0.0; 2];
        assert_eq!(acrl_agent_act(agent, env, 1.5, a.as_mut_ptr(), 2), AcrlStatus::InvalidArgument);
        let other = new_env("BSS3z", 0);
        let mut a3 = [0.0; 3];
        assert_eq!(acrl_agent_act(agent, other, 0.9, a3.as_mut_ptr(), 3), AcrlStatus::InvalidArgument);
        acrl_env_free(other);
        acrl_env_free(env);
        acrl_agent_free(agent);
    }
}

#[test]
fn tabular_verification_through_the_abi() {
    let mut passed = 0usize;
    assert_eq!(unsafe { acrl_verify_tabular(4, 5, &mut passed) }, AcrlStatus::Ok);
    assert_eq!(passed, 5);
    assert_eq!(unsafe { acrl_verify_tabular(4, 5, ptr::null_mut()) }, AcrlStatus::NullPointer);
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/acrl.h");
    let text = std::fs::read_to_string(&header).expect("generated header");
    for sym in [
        "acrl_last_error",
        "acrl_version",
        "acrl_env_new",
        "acrl_env_free",
        "acrl_env_dims",
        "acrl_env_reset",
        "acrl_env_state",
        "acrl_env_is_feasible",
        "acrl_env_step",
        "acrl_env_project",
        "acrl_env_qp_count",
        "acrl_agent_train",
        "acrl_agent_free",
        "acrl_agent_act",
        "acrl_verify_tabular",
        "typedef struct AcrlEnv AcrlEnv",
        "ACRL_STATUS_INFEASIBLE_ACTION = 4",
    ] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
