use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use renorm_perc_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rp_last_error()) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { rp_string_free(p) };
    s
}

fn env_from(gamma: &[u64], l: u64, n: u64) -> *mut RpEnvironment {
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { rp_environment_from_gamma(0.0, l, n, 0, gamma.as_ptr(), gamma.len(), &mut env) }, RpStatus::Ok);
    env
}

#[test]
fn environment_round_trip() {
    let mut env = ptr::null_mut();
    assert_eq!(rp_environment_sample(0.01, 12, 5000, 4, &mut env), RpStatus::Ok);
    let mut n = 0usize;
    assert_eq!(rp_environment_bad_count(env, &mut n), RpStatus::Ok);
    assert!(n > 10);
    let mut buf = vec![0u64; n + 3];
    let mut written = 0usize;
    assert_eq!(unsafe { rp_environment_gamma(env, buf.as_mut_ptr(), buf.len(), &mut written) }, RpStatus::Ok);
    assert_eq!(written, n);
    let mut bad = false;
    assert_eq!(rp_environment_is_bad(env, buf[0], &mut bad), RpStatus::Ok);
    assert!(bad);
    let mut json = ptr::null_mut();
    assert_eq!(rp_environment_to_json(env, &mut json), RpStatus::Ok);
    let s = take_string(json);
    assert!(s.contains("\"gamma\"") && s.contains(&buf[0].to_string()));
    unsafe { rp_environment_free(env) };
}

#[test]
fn hierarchy_and_layers() {
    let env = env_from(&[3000, 3001, 3002], 12, 4000);
    let mut h = ptr::null_mut();
    assert_eq!(rp_hierarchy_build(env, 2, &mut h), RpStatus::Ok);
    let (mut count, mut v) = (0usize, 9usize);
    assert_eq!(rp_hierarchy_cluster_count(h, &mut count), RpStatus::Ok);
    assert!(count >= 4);
    assert_eq!(rp_hierarchy_verify(h, &mut v), RpStatus::Ok);
    assert_eq!(v, 0);
    let (mut chi, mut resolved) = (9u32, false);
    assert_eq!(rp_chi(env, h, &mut chi, &mut resolved), RpStatus::Ok);
    assert_eq!(chi, 0);
    let mut layers = ptr::null_mut();
    assert_eq!(rp_layers_build(env, h, &mut layers), RpStatus::Ok);
    assert_eq!(rp_layers_verify(layers, h, &mut v), RpStatus::Ok);
    assert_eq!(v, 0);
    assert_eq!(rp_layers_count(layers, 1, true, &mut count), RpStatus::Ok);
    assert!(count > 10);
    assert_eq!(rp_layers_count(layers, 7, false, &mut count), RpStatus::OutOfRange);
    let mut json = ptr::null_mut();
    assert_eq!(rp_layers_to_json(layers, false, &mut json), RpStatus::Ok);
    assert!(take_string(json).contains("\"per_scale\""));
    unsafe {
        rp_layers_free(layers);
        rp_hierarchy_free(h);
        rp_environment_free(env);
    }
}

#[test]
fn errors_map_to_codes() {
    let mut env = ptr::null_mut();
    assert_eq!(rp_environment_sample(2.0, 12, 10, 0, &mut env), RpStatus::Config);
    assert!(last_error().contains("delta"));
    assert!(env.is_null());
    assert_eq!(rp_environment_sample(0.1, 12, 10, 0, ptr::null_mut()), RpStatus::NullPointer);
    let mut n = 0usize;
    assert_eq!(rp_environment_bad_count(ptr::null(), &mut n), RpStatus::NullPointer);
    let mut f = 0.0;
    assert_eq!(rp_cramer_f(1.0, &mut f), RpStatus::Domain);
    assert_eq!(rp_cramer_f(0.5, &mut f), RpStatus::Ok);
    assert!(last_error().is_empty());
    // χ > 0: layers refuse to build
    let env = env_from(&[5, 6], 12, 4000);
    let mut h = ptr::null_mut();
    assert_eq!(rp_hierarchy_build(env, 2, &mut h), RpStatus::Ok);
    let mut layers = ptr::null_mut();
    assert_eq!(rp_layers_build(env, h, &mut layers), RpStatus::Precondition);
    unsafe {
        rp_hierarchy_free(h);
        rp_environment_free(env);
        rp_environment_free(ptr::null_mut());
        rp_string_free(ptr::null_mut());
    }
}

#[test]
fn numerics() {
    let mut n = 0u32;
    assert_eq!(rp_choose_n(0.9, &mut n), RpStatus::Ok);
    assert_eq!(n, 28);
    assert_eq!(rp_choose_n(0.5, &mut n), RpStatus::Domain);
    let mut f = 0.0;
    rp_cramer_f(0.5, &mut f);
    assert!((f - (0.75 * 3f64.ln() - 2f64.ln())).abs() < 1e-15);
    let mut json = ptr::null_mut();
    assert_eq!(rp_check_claims_json(0.99, 0.01, 3.0, 0.7, 1.0 / 6.0, 10_000, 10, &mut json), RpStatus::Ok);
    assert!(take_string(json).contains("\"N\":17"));
    let mut e = RpEstimate::default();
    assert_eq!(rp_estimate_theta(1.0, 50, 5, 0, &mut e), RpStatus::Ok);
    assert_eq!(e.value, 1.0);
    let mut s = RpSurvey::default();
    assert_eq!(rp_survival(0.0, 12, 1.0, 0.0, 100, 4, 1, &mut s), RpStatus::Ok);
    assert_eq!((s.survivors, s.reps), (4, 4));
    let v = unsafe { CStr::from_ptr(rp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/renorm_perc.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let names: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(names.len() >= 20);
    for n in names {
        assert!(h.contains(&format!("{n}(")), "{n} missing from header");
    }
    assert!(h.contains("RP_STATUS_NULL_POINTER = 9"));
}

/// Compiles and runs the C smoke program against the static library when a
/// C compiler is on PATH.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    // target/<profile>/deps/abi-… → target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("librenorm_perc_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = std::env::temp_dir().join(format!("rp-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bin = dir.join("smoke");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new(cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
