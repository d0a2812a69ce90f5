use std::ffi::{c_char, CStr, CString};
use std::ptr;

use d2dspread_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe {
        d2d_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

const INTRA0: D2dStrand = D2dStrand {
    kind: D2dStrandKind::Intra,
    m: 0,
    n: 0,
};

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(d2d_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn single_layer_moments_match_poisson() {
    let (d, r) = ([25.0], [0.2]);
    let (mut mean, mut m2) = (0.0, 0.0);
    let st = unsafe { d2d_degree_moments(d.as_ptr(), r.as_ptr(), 1, INTRA0, &mut mean, &mut m2) };
    assert_eq!(st, D2dStatus::Ok);
    let mu = 25.0 * std::f64::consts::PI * 0.04;
    assert!((mean - mu).abs() < 1e-9);
    assert!((m2 - (mu + mu * mu)).abs() < 1e-8);

    let mut thr = 0.0;
    let st = unsafe { d2d_epidemic_threshold(d.as_ptr(), r.as_ptr(), 1, INTRA0, &mut thr) };
    assert_eq!(st, D2dStatus::Ok);
    assert!((thr - 1.0 / (1.0 + mu)).abs() < 1e-9);
}

#[test]
fn equilibrium_is_zero_below_threshold_and_positive_above() {
    let (d, r) = ([25.0], [0.2]);
    let (mut theta, mut avg) = (1.0, 1.0);
    let st = unsafe {
        d2d_solve_equilibrium(d.as_ptr(), r.as_ptr(), 1, INTRA0, 0.1, &mut theta, &mut avg)
    };
    assert_eq!(st, D2dStatus::Ok);
    assert_eq!(theta, 0.0);
    let st = unsafe {
        d2d_solve_equilibrium(d.as_ptr(), r.as_ptr(), 1, INTRA0, 1.0, &mut theta, &mut avg)
    };
    assert_eq!(st, D2dStatus::Ok);
    assert!(theta > 0.0 && theta < 1.0 && avg > 0.0 && avg < 1.0);
}

#[test]
fn bad_arguments_report_status_and_message() {
    let (d, r) = ([25.0], [0.2]);
    let mut x = 0.0;
    let bad = D2dStrand {
        kind: D2dStrandKind::Intra,
        m: 3,
        n: 0,
    };
    let st = unsafe { d2d_epidemic_threshold(d.as_ptr(), r.as_ptr(), 1, bad, &mut x) };
    assert_eq!(st, D2dStatus::InvalidParameter);
    assert!(!last_error().is_empty());

    let st = unsafe { d2d_epidemic_threshold(ptr::null(), r.as_ptr(), 1, INTRA0, &mut x) };
    assert_eq!(st, D2dStatus::NullPointer);

    let neg = [-1.0];
    let st = unsafe { d2d_epidemic_threshold(neg.as_ptr(), r.as_ptr(), 1, INTRA0, &mut x) };
    assert_eq!(st, D2dStatus::InvalidParameter);
}

#[test]
fn last_error_truncates_and_reports_full_length() {
    let mut x = 0.0;
    let st = unsafe { d2d_epidemic_threshold(ptr::null(), ptr::null(), 1, INTRA0, &mut x) };
    assert_eq!(st, D2dStatus::NullPointer);
    let full = unsafe { d2d_last_error_message(ptr::null_mut(), 0) };
    let mut buf = [0 as c_char; 4];
    let n = unsafe { d2d_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().len(), 3);
}

#[test]
fn preset_optimizes_and_exposes_design() {
    let name = CString::new("intelligence").unwrap();
    let mut mission = ptr::null_mut();
    assert_eq!(
        unsafe { d2d_mission_preset(name.as_ptr(), &mut mission) },
        D2dStatus::Ok
    );
    assert_eq!(unsafe { d2d_mission_layer_count(mission) }, 2);
    assert_eq!(
        unsafe { d2d_mission_set_delta(mission, 0.3) },
        D2dStatus::Ok
    );

    let mut res = ptr::null_mut();
    assert_eq!(unsafe { d2d_optimize(mission, &mut res) }, D2dStatus::Ok);
    let mut cost = 0.0;
    assert_eq!(
        unsafe { d2d_optimization_cost(res, &mut cost) },
        D2dStatus::Ok
    );
    assert!(cost > 0.0 && cost.is_finite());
    assert!(unsafe { d2d_optimization_iterations(res) } >= 1);

    let (mut d, mut r) = ([0.0; 1], [0.0; 1]);
    let st = unsafe { d2d_optimization_design(res, d.as_mut_ptr(), r.as_mut_ptr(), 1) };
    assert_eq!(st, D2dStatus::BufferTooSmall);
    let (mut d, mut r) = ([0.0; 2], [0.0; 2]);
    let st = unsafe { d2d_optimization_design(res, d.as_mut_ptr(), r.as_mut_ptr(), 2) };
    assert_eq!(st, D2dStatus::Ok);
    assert!(d.iter().chain(&r).all(|v| *v > 0.0));

    unsafe {
        d2d_optimization_free(res);
        d2d_mission_free(mission);
    }
}

#[test]
fn full_threat_is_infeasible() {
    let name = CString::new("encounter").unwrap();
    let mut mission = ptr::null_mut();
    assert_eq!(
        unsafe { d2d_mission_preset(name.as_ptr(), &mut mission) },
        D2dStatus::Ok
    );
    assert_eq!(
        unsafe { d2d_mission_set_delta(mission, 1.0) },
        D2dStatus::Ok
    );
    let mut res = ptr::null_mut();
    assert_eq!(
        unsafe { d2d_optimize(mission, &mut res) },
        D2dStatus::Infeasible
    );
    assert!(res.is_null());
    unsafe { d2d_mission_free(mission) };
}

#[test]
fn unknown_preset_and_bad_json_fail_cleanly() {
    let mut mission = ptr::null_mut();
    let name = CString::new("nope").unwrap();
    assert_ne!(
        unsafe { d2d_mission_preset(name.as_ptr(), &mut mission) },
        D2dStatus::Ok
    );
    assert!(mission.is_null());

    let json = CString::new("{\"name\": \"x\", \"bogus\": 1}").unwrap();
    assert_eq!(
        unsafe { d2d_mission_from_json(json.as_ptr(), &mut mission) },
        D2dStatus::Schema
    );
    assert!(mission.is_null());

    let path = CString::new("/nonexistent/mission.json").unwrap();
    assert_eq!(
        unsafe { d2d_mission_load(path.as_ptr(), &mut mission) },
        D2dStatus::Io
    );
}

#[test]
fn header_declares_every_entry_point() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/d2dspread.h"))
            .unwrap();
    for f in [
        "d2d_version",
        "d2d_last_error_message",
        "d2d_degree_moments",
        "d2d_epidemic_threshold",
        "d2d_solve_equilibrium",
        "d2d_mission_preset",
        "d2d_mission_load",
        "d2d_mission_from_json",
        "d2d_mission_set_delta",
        "d2d_mission_layer_count",
        "d2d_mission_free",
        "d2d_optimize",
        "d2d_optimization_cost",
        "d2d_optimization_iterations",
        "d2d_optimization_design",
        "d2d_optimization_free",
        "D2D_STATUS_INFEASIBLE",
        "typedef struct D2dMission D2dMission",
    ] {
        assert!(header.contains(f), "header lacks {f}");
    }
}
