use std::ffi::{c_char, CStr, CString};
use std::ptr;

use smalljump_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        sj_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn model(name: &str, params: &[(&str, f64)]) -> Result<*mut SjModel, SjStatus> {
    let name = CString::new(name).unwrap();
    let keys: Vec<CString> = params.iter().map(|(k, _)| CString::new(*k).unwrap()).collect();
    let key_ptrs: Vec<*const c_char> = keys.iter().map(|k| k.as_ptr()).collect();
    let values: Vec<f64> = params.iter().map(|(_, v)| *v).collect();
    let mut out = ptr::null_mut();
    let st = unsafe { sj_model_new(name.as_ptr(), key_ptrs.as_ptr(), values.as_ptr(), params.len(), &mut out) };
    if st == SjStatus::Ok {
        Ok(out)
    } else {
        Err(st)
    }
}

#[test]
fn metrics_round_trip() {
    let m = model("alpha_stable_like", &[("alpha", 1.0)]).unwrap();
    let mut out = SjMetrics::default();
    assert_eq!(unsafe { sj_metrics(m, 0.1, &mut out) }, SjStatus::Ok);
    assert!((out.sigma - 0.2f64.sqrt()).abs() < 1e-10);
    assert!(out.infinite_activity);
    unsafe { sj_model_free(m) };
}

#[test]
fn errors_map_to_codes_and_messages() {
    assert_eq!(model("nosuch", &[]).unwrap_err(), SjStatus::UnknownModel);
    assert!(last_error().contains("nosuch"));
    assert_eq!(model("cgmy", &[("Y", 2.5)]).unwrap_err(), SjStatus::InvalidArgument);

    let mut out = SjMetrics::default();
    assert_eq!(unsafe { sj_metrics(ptr::null(), 0.1, &mut out) }, SjStatus::NullPointer);

    // No jumps means ρ(ε) = 0.
    let m = model("brownian", &[("b", 1.0)]).unwrap();
    let code = CString::new("B1").unwrap();
    let mut v = 0.0;
    let st = unsafe { sj_bound(m, code.as_ptr(), 0.1, 1.0, 1.0, &mut v) };
    assert_eq!(st, SjStatus::Inapplicable, "{}", last_error());
    let bad = CString::new("Z9").unwrap();
    assert_ne!(unsafe { sj_bound(m, bad.as_ptr(), 0.1, 1.0, 1.0, &mut v) }, SjStatus::Ok);
    unsafe { sj_model_free(m) };
}

#[test]
fn bound_and_budget_agree() {
    let m = model("alpha_stable_like", &[("alpha", 1.0)]).unwrap();
    let code = CString::new("T1").unwrap();
    let mut eps = 0.0;
    let st = unsafe { sj_epsilon_for_budget(m, code.as_ptr(), 0.05, 1.0, 1.0, 1e-6, 1.0, &mut eps) };
    assert_eq!(st, SjStatus::Ok, "{}", last_error());
    let mut v = 0.0;
    assert_eq!(unsafe { sj_bound(m, code.as_ptr(), eps, 1.0, 1.0, &mut v) }, SjStatus::Ok);
    assert!((0.05 * 0.99..=0.05 * (1.0 + 1e-3)).contains(&v), "{v}");

    let st = unsafe { sj_epsilon_for_budget(m, code.as_ptr(), 1e-12, 1.0, 1.0, 0.01, 1.0, &mut eps) };
    assert_eq!(st, SjStatus::BudgetUnreachable);
    unsafe { sj_model_free(m) };
}

#[test]
fn simulation_and_accessors() {
    let m = model("cgmy", &[("C", 1.0), ("G", 5.0), ("M", 5.0), ("Y", 1.2)]).unwrap();
    let run = |workers| {
        let mut b = ptr::null_mut();
        let st = unsafe { sj_simulate(m, 1.0, 32, 0.05, SjScheme::Gaussian, 0.0, 300, 11, workers, &mut b) };
        assert_eq!(st, SjStatus::Ok, "{}", last_error());
        let n = unsafe { sj_batch_len(b) };
        let mut term = vec![0.0; n];
        let mut sup = vec![0.0; n];
        assert_eq!(unsafe { sj_batch_terminal(b, term.as_mut_ptr(), n) }, SjStatus::Ok);
        assert_eq!(unsafe { sj_batch_supremum(b, sup.as_mut_ptr(), n) }, SjStatus::Ok);
        assert_eq!(unsafe { sj_batch_terminal(b, term.as_mut_ptr(), n - 1) }, SjStatus::BufferTooSmall);
        unsafe { sj_batch_free(b) };
        (term, sup)
    };
    let (t1, s1) = run(1);
    let (t2, s2) = run(2);
    assert_eq!(t1.len(), 300);
    assert_eq!((t1, s1.clone()), (t2, s2));
    assert!(s1.iter().all(|s| *s >= 0.0));

    let mut b = ptr::null_mut();
    let st = unsafe { sj_simulate(m, 1.0, 4, 0.05, SjScheme::Refined, 0.1, 10, 1, 1, &mut b) };
    assert_eq!(st, SjStatus::InvalidArgument, "{}", last_error());
    assert_eq!(unsafe { sj_batch_len(ptr::null()) }, 0);
    unsafe { sj_model_free(m) };
}

#[test]
fn error_buffer_truncates() {
    let _ = model("nosuch", &[]);
    let full = unsafe { sj_last_error_message(ptr::null_mut(), 0) };
    let mut buf = [0 as c_char; 4];
    let n = unsafe { sj_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().len(), 3);
}

#[test]
fn header_declares_the_interface() {
    let header = include_str!("../include/smalljump.h");
    for name in [
        "sj_model_new",
        "sj_model_free",
        "sj_metrics",
        "sj_bound",
        "sj_epsilon_for_budget",
        "sj_simulate",
        "sj_batch_terminal",
        "sj_batch_supremum",
        "sj_batch_free",
        "sj_last_error_message",
        "SJ_STATUS_OK",
        "typedef struct SjModel SjModel",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
