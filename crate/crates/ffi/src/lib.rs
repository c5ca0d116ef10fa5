//! C ABI over `renorm_perc`.
//!
//! Objects are opaque handles created by the `rp_*_sample`/`rp_*_build`
//! calls and released with the matching `rp_*_free`. Every fallible call
//! returns an `RpStatus`; on failure `rp_last_error` describes the cause
//! for the calling thread. Strings handed out by the library are released
//! with `rp_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use renorm_perc::bounds::{check_claims, choose_n, cramer_f, BoundParams, DEFAULT_L_GRID};
use renorm_perc::clusters::{build_hierarchy, verify_genealogy, verify_hierarchy, ClusterHierarchy};
use renorm_perc::environment::{chi, sample_environment, ChiValue, Environment, EnvironmentConfig};
use renorm_perc::layers::{build_layers, build_reversed_layers, verify_layers, LayerStack};
use renorm_perc::percolation::{estimate_theta, survival_coupled};
use renorm_perc::Error;

/// Status codes. 1 to 8 mirror the library error kinds.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    Config = 1,
    Consistency = 2,
    Domain = 3,
    Precondition = 4,
    UnsupportedScale = 5,
    OutOfRange = 6,
    Parity = 7,
    Io = 8,
    NullPointer = 9,
    Panic = 10,
}

impl RpStatus {
    fn of(e: &Error) -> Self {
        match e.code() {
            1 => RpStatus::Config,
            2 => RpStatus::Consistency,
            3 => RpStatus::Domain,
            4 => RpStatus::Precondition,
            5 => RpStatus::UnsupportedScale,
            6 => RpStatus::OutOfRange,
            7 => RpStatus::Parity,
            _ => RpStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RpStatus::Ok
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            RpStatus::of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            RpStatus::NullPointer
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            set_error(format!("panic: {}", msg.unwrap_or_default()));
            RpStatus::Panic
        }
    }
}

fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    // SAFETY: the caller passes either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or(Fail::Null(what))
}

fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    // SAFETY: the caller passes either null or a live handle from this library.
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s).map(CString::into_raw).map_err(|e| Fail::Lib(Error::Consistency(e.to_string())))
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn rp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn rp_version() -> *const c_char {
    static V: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

pub struct RpEnvironment(Environment);

pub struct RpHierarchy(ClusterHierarchy);

pub struct RpLayers {
    forward: LayerStack,
    reversed: LayerStack,
}

/// Samples bad lines 0..window_len.
#[no_mangle]
pub extern "C" fn rp_environment_sample(delta: f64, l: u64, window_len: u64, seed: u64, env_out: *mut *mut RpEnvironment) -> RpStatus {
    guard(|| {
        let slot = out(env_out, "env_out")?;
        let env = sample_environment(&EnvironmentConfig::new(delta, l, window_len, seed))?;
        *slot = Box::into_raw(Box::new(RpEnvironment(env)));
        Ok(())
    })
}

/// Environment with the given sorted bad lines.
///
/// # Safety
/// `gamma` must point to `len` readable values (or be null with len 0).
#[no_mangle]
pub unsafe extern "C" fn rp_environment_from_gamma(
    delta: f64,
    l: u64,
    window_len: u64,
    seed: u64,
    gamma: *const u64,
    len: usize,
    env_out: *mut *mut RpEnvironment,
) -> RpStatus {
    guard(|| {
        let slot = out(env_out, "env_out")?;
        let g = if len == 0 {
            Vec::new()
        } else if gamma.is_null() {
            return Err(Fail::Null("gamma"));
        } else {
            std::slice::from_raw_parts(gamma, len).to_vec()
        };
        let env = Environment::from_gamma(EnvironmentConfig::new(delta, l, window_len, seed), g)?;
        *slot = Box::into_raw(Box::new(RpEnvironment(env)));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn rp_environment_free(env: *mut RpEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of bad lines in the window.
#[no_mangle]
pub extern "C" fn rp_environment_bad_count(env: *const RpEnvironment, count_out: *mut usize) -> RpStatus {
    guard(|| {
        *out(count_out, "count_out")? = get(env, "env")?.0.gamma.len();
        Ok(())
    })
}

/// Copies up to `cap` bad lines into `buf`; `written_out` gets the count copied.
///
/// # Safety
/// `buf` must point to `cap` writable values (or be null with cap 0).
#[no_mangle]
pub unsafe extern "C" fn rp_environment_gamma(env: *const RpEnvironment, buf: *mut u64, cap: usize, written_out: *mut usize) -> RpStatus {
    guard(|| {
        let g = &get(env, "env")?.0.gamma;
        let n = g.len().min(cap);
        if n > 0 {
            if buf.is_null() {
                return Err(Fail::Null("buf"));
            }
            ptr::copy_nonoverlapping(g.as_ptr(), buf, n);
        }
        *out(written_out, "written_out")? = n;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn rp_environment_is_bad(env: *const RpEnvironment, row: u64, bad_out: *mut bool) -> RpStatus {
    guard(|| {
        *out(bad_out, "bad_out")? = get(env, "env")?.0.is_bad(row);
        Ok(())
    })
}

/// JSON export; free the result with `rp_string_free`.
#[no_mangle]
pub extern "C" fn rp_environment_to_json(env: *const RpEnvironment, json_out: *mut *mut c_char) -> RpStatus {
    guard(|| {
        let slot = out(json_out, "json_out")?;
        *slot = into_c_string(get(env, "env")?.0.to_json()?)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn rp_hierarchy_build(env: *const RpEnvironment, k_max: u32, h_out: *mut *mut RpHierarchy) -> RpStatus {
    guard(|| {
        let slot = out(h_out, "h_out")?;
        let h = build_hierarchy(&get(env, "env")?.0, k_max)?;
        *slot = Box::into_raw(Box::new(RpHierarchy(h)));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn rp_hierarchy_free(h: *mut RpHierarchy) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Clusters across all levels, singletons included.
#[no_mangle]
pub extern "C" fn rp_hierarchy_cluster_count(h: *const RpHierarchy, count_out: *mut usize) -> RpStatus {
    guard(|| {
        *out(count_out, "count_out")? = get(h, "h")?.0.all_clusters().count();
        Ok(())
    })
}

/// Violations of the hierarchy and genealogy rules; 0 means valid.
#[no_mangle]
pub extern "C" fn rp_hierarchy_verify(h: *const RpHierarchy, violations_out: *mut usize) -> RpStatus {
    guard(|| {
        let h = &get(h, "h")?.0;
        *out(violations_out, "violations_out")? = verify_hierarchy(h).violations.len() + verify_genealogy(h).violations.len();
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn rp_hierarchy_to_json(h: *const RpHierarchy, json_out: *mut *mut c_char) -> RpStatus {
    guard(|| {
        let slot = out(json_out, "json_out")?;
        *slot = into_c_string(get(h, "h")?.0.to_json()?)?;
        Ok(())
    })
}

/// χ of the environment. `resolved_out` is false when clusters at the
/// window edge could still raise it; `chi_out` is then a lower bound.
#[no_mangle]
pub extern "C" fn rp_chi(env: *const RpEnvironment, h: *const RpHierarchy, chi_out: *mut u32, resolved_out: *mut bool) -> RpStatus {
    guard(|| {
        let v = chi(&get(env, "env")?.0, &get(h, "h")?.0)?;
        let (x, r) = match v {
            ChiValue::Value { value } => (value, true),
            ChiValue::Unresolved { at_least } => (at_least, false),
        };
        *out(chi_out, "chi_out")? = x;
        *out(resolved_out, "resolved_out")? = r;
        Ok(())
    })
}

/// Forward and reversed layer stacks. Needs χ = 0.
#[no_mangle]
pub extern "C" fn rp_layers_build(env: *const RpEnvironment, h: *const RpHierarchy, layers_out: *mut *mut RpLayers) -> RpStatus {
    guard(|| {
        let slot = out(layers_out, "layers_out")?;
        let (env, h) = (&get(env, "env")?.0, &get(h, "h")?.0);
        let forward = build_layers(env, h)?;
        let reversed = build_reversed_layers(env, h, &forward)?;
        *slot = Box::into_raw(Box::new(RpLayers { forward, reversed }));
        Ok(())
    })
}

/// # Safety
/// `layers` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn rp_layers_free(layers: *mut RpLayers) {
    if !layers.is_null() {
        drop(Box::from_raw(layers));
    }
}

/// Number of k-layers in the forward (`reversed` false) or reversed stack.
#[no_mangle]
pub extern "C" fn rp_layers_count(layers: *const RpLayers, k: u32, reversed: bool, count_out: *mut usize) -> RpStatus {
    guard(|| {
        let l = get(layers, "layers")?;
        let st = if reversed { &l.reversed } else { &l.forward };
        *out(count_out, "count_out")? = st.scale(k)?.layers.len();
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn rp_layers_verify(layers: *const RpLayers, h: *const RpHierarchy, violations_out: *mut usize) -> RpStatus {
    guard(|| {
        let l = get(layers, "layers")?;
        *out(violations_out, "violations_out")? = verify_layers(&l.forward, &l.reversed, &get(h, "h")?.0).violations.len();
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn rp_layers_to_json(layers: *const RpLayers, reversed: bool, json_out: *mut *mut c_char) -> RpStatus {
    guard(|| {
        let slot = out(json_out, "json_out")?;
        let l = get(layers, "layers")?;
        *slot = into_c_string(if reversed { l.reversed.to_json()? } else { l.forward.to_json()? })?;
        Ok(())
    })
}

/// A frequency with its 95% Wilson interval.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct RpEstimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct RpSurvey {
    pub survivors: u64,
    pub reps: u64,
    pub frequency: RpEstimate,
}

/// Survival to `depth` from the origin with `reps` coupled replicas.
#[no_mangle]
pub extern "C" fn rp_survival(delta: f64, l: u64, p_good: f64, p_bad: f64, depth: u64, reps: u64, seed: u64, survey_out: *mut RpSurvey) -> RpStatus {
    guard(|| {
        let slot = out(survey_out, "survey_out")?;
        let s = survival_coupled(&[delta], l, p_good, p_bad, depth, reps, seed)?;
        let r = &s.rows[0];
        *slot = RpSurvey {
            survivors: r.survivors,
            reps: r.reps,
            frequency: RpEstimate { value: r.frequency, ci_low: r.ci_low, ci_high: r.ci_high, n: r.reps },
        };
        Ok(())
    })
}

/// Homogeneous survival frequency at parameter p.
#[no_mangle]
pub extern "C" fn rp_estimate_theta(p: f64, depth: u64, reps: u64, seed: u64, est_out: *mut RpEstimate) -> RpStatus {
    guard(|| {
        let slot = out(est_out, "est_out")?;
        let e = estimate_theta(p, depth, reps, seed)?;
        *slot = RpEstimate { value: e.value, ci_low: e.ci_low, ci_high: e.ci_high, n: e.n };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn rp_cramer_f(p: f64, value_out: *mut f64) -> RpStatus {
    guard(|| {
        *out(value_out, "value_out")? = cramer_f(p)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn rp_choose_n(p_good: f64, n_out: *mut u32) -> RpStatus {
    guard(|| {
        *out(n_out, "n_out")? = choose_n(p_good)?;
        Ok(())
    })
}

/// Claim report as JSON, with the minimal L searched over 10^4..10^7.
#[no_mangle]
pub extern "C" fn rp_check_claims_json(
    p_good: f64,
    p_bad: f64,
    kappa: f64,
    rho: f64,
    c: f64,
    l: u64,
    m_max: u32,
    json_out: *mut *mut c_char,
) -> RpStatus {
    guard(|| {
        let slot = out(json_out, "json_out")?;
        let params = BoundParams::new(p_good, p_bad, kappa, rho, c, l)?;
        let r = check_claims(&params, m_max, &DEFAULT_L_GRID)?;
        *slot = into_c_string(r.to_json()?)?;
        Ok(())
    })
}
