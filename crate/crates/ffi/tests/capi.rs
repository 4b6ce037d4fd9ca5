use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use mecache_ffi::*;

const SMALL: &str = r#"{"num_wds": 2, "num_tasks": 4, "caching_slots": 2, "slots": 5, "noise_power": 1e-15}"#;

fn last_error() -> String {
    let p = mec_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_scenario(seed: u64) -> *mut MecScenario {
    let cfg = CString::new(SMALL).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { mec_scenario_generate(cfg.as_ptr(), seed, &mut s) }, MecStatus::Ok);
    assert!(mec_last_error().is_null());
    s
}

#[test]
fn generate_solve_and_inspect() {
    let s = small_scenario(3);
    unsafe {
        assert_eq!(mec_scenario_num_tasks(s), 4);
        let mut r = ptr::null_mut();
        assert_eq!(mec_solve(s, MecScheme::Bnb, 1e-9, 16, &mut r), MecStatus::Ok);
        let obj = mec_report_objective(r);
        assert!(obj.is_finite() && obj >= 0.0);
        assert!(mec_report_kkt_residual(r) <= 1e-6);
        assert!(mec_report_node_count(r) >= 1);

        let mut b = MecBreakdown::default();
        assert_eq!(mec_report_breakdown(r, &mut b), MecStatus::Ok);
        let weighted = 0.1 * (b.mec_caching + b.mec_execution) + 0.9 * (b.offload_caching + b.local_total + b.offload_total);
        assert!((weighted - obj).abs() <= 1e-12 * obj.max(1e-30));

        let mut bits = [9u8; 4];
        assert_eq!(mec_report_placement(r, bits.as_mut_ptr(), 4), MecStatus::Ok);
        assert!(bits.iter().all(|&v| v <= 1));
        assert_eq!(mec_report_placement(r, bits.as_mut_ptr(), 3), MecStatus::Dimension);
        assert!(last_error().contains("3 bytes"));

        let mut none = ptr::null_mut();
        assert_eq!(mec_solve(s, MecScheme::NoCaching, 1e-9, 16, &mut none), MecStatus::Ok);
        assert!(mec_report_objective(r) <= mec_report_objective(none) + 1e-9);

        mec_report_free(none);
        mec_report_free(r);
        mec_scenario_free(s);
    }
}

#[test]
fn json_round_trip() {
    let s = small_scenario(5);
    unsafe {
        let mut text = ptr::null_mut();
        assert_eq!(mec_scenario_to_json(s, &mut text), MecStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(mec_scenario_from_json(text, &mut back), MecStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(mec_scenario_to_json(back, &mut again), MecStatus::Ok);
        assert_eq!(CStr::from_ptr(text), CStr::from_ptr(again));
        mec_string_free(text);
        mec_string_free(again);
        mec_scenario_free(back);
        mec_scenario_free(s);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(mec_scenario_from_json(ptr::null(), &mut s), MecStatus::NullPointer);
        assert!(last_error().contains("json"));

        let bad = CString::new(r#"{"schema": "scenario/v0"}"#).unwrap();
        assert_eq!(mec_scenario_from_json(bad.as_ptr(), &mut s), MecStatus::SchemaVersion);
        assert!(s.is_null());

        let junk = CString::new("{not json").unwrap();
        assert_eq!(mec_scenario_generate(junk.as_ptr(), 1, &mut s), MecStatus::Parse);

        let big = CString::new(r#"{"num_tasks": 40}"#).unwrap();
        assert_eq!(mec_scenario_generate(big.as_ptr(), 1, &mut s), MecStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(mec_solve(s, MecScheme::Bnb, 1e-9, 16, &mut r), MecStatus::Refused);
        assert!(r.is_null());
        assert_eq!(mec_solve(ptr::null(), MecScheme::Bnb, 1e-9, 16, &mut r), MecStatus::NullPointer);
        assert_eq!(mec_solve(s, MecScheme::Bnb, -1.0, 0, &mut r), MecStatus::InvalidArgument);
        mec_scenario_free(s);

        assert!(mec_report_objective(ptr::null()).is_nan());
        mec_report_free(ptr::null_mut());
        mec_scenario_free(ptr::null_mut());
        mec_string_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(mec_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|deps| deps.parent()).unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "mecache.h"

int main(void) {
    MecScenario *s = NULL;
    MecReport *r = NULL;
    if (mec_scenario_generate("{\"num_wds\":2,\"num_tasks\":3,\"slots\":4,\"caching_slots\":2}", 11, &s) != MEC_STATUS_OK) return 1;
    if (mec_solve(s, MEC_SCHEME_RELAXATION, 1e-9, 16, &r) != MEC_STATUS_OK) return 2;
    unsigned char bits[3];
    if (mec_report_placement(r, bits, 3) != MEC_STATUS_OK) return 3;
    if (mec_solve(NULL, MEC_SCHEME_BNB, 1e-9, 16, &r) != MEC_STATUS_NULL_POINTER) return 4;
    if (mec_last_error() == NULL) return 5;
    printf("%.6e\n", mec_report_objective(r));
    mec_report_free(r);
    mec_scenario_free(s);
    return 0;
}
"#,
    )
    .unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libmecache_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let exe = dir.path().join("main");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler runs");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    let value: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(value.is_finite() && value >= 0.0);
}
