//! C ABI for the railgnss toolkit.
//!
//! Handles are opaque and owned by the caller once created; release them with
//! the matching `*_free`. Every fallible call returns an [`RgStatus`]; the text
//! of the last failure on the calling thread is available through
//! [`rg_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use railgnss::atmosphere::{klobuchar_delay, TropoModel};
use railgnss::classify::ModelDocument;
use railgnss::context::{EnvironmentClass, FeatureVector};
use railgnss::errormodel::{sample_errors, ErrorModelSet, ScheduleEntry, ScheduleEpoch};
use railgnss::geodesy::AzEl;
use railgnss::ingest::{Band, IonoParams, SatelliteId};
use railgnss::{Error, GnssTime};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InputError = 3,
    NumericalError = 4,
    NotFound = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Loaded environment classifier.
pub struct RgClassifier {
    model: ModelDocument,
}

/// Loaded per-environment error model map.
pub struct RgErrorModelSet {
    set: ErrorModelSet,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: RgStatus, msg: impl Into<String>) -> RgStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> RgStatus {
    let status = match e {
        Error::Numerical(_) | Error::OutOfDomain(_) => RgStatus::NumericalError,
        Error::Config(_) => RgStatus::InvalidArgument,
        _ => RgStatus::InputError,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> RgStatus) -> RgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(RgStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, RgStatus> {
    if p.is_null() {
        return Err(fail(RgStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RgStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copies `s` NUL-terminated into `buf`. Returns the length needed
/// including the terminator.
unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize) -> usize {
    let need = s.len() + 1;
    if !buf.is_null() && len > 0 {
        let n = s.len().min(len - 1);
        std::ptr::copy_nonoverlapping(s.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
    }
    need
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes the last error message of this thread into `buf` (truncated to
/// `len`). Returns the full length including the terminator, 0 if none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn rg_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if e.is_empty() {
            0
        } else {
            copy_out(&e, buf, len)
        }
    })
}

/// Klobuchar ionospheric delay in meters on a carrier of `frequency_hz`.
///
/// # Safety
/// `alpha` and `beta` must point to 4 doubles each; `out_m` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_klobuchar_delay(
    alpha: *const f64,
    beta: *const f64,
    lat_rad: f64,
    lon_rad: f64,
    azimuth_rad: f64,
    elevation_rad: f64,
    gps_sow: f64,
    frequency_hz: f64,
    out_m: *mut f64,
) -> RgStatus {
    guard(|| {
        if alpha.is_null() || beta.is_null() || out_m.is_null() {
            return fail(RgStatus::NullPointer, "null argument");
        }
        let mut iono = IonoParams { alpha: [0.0; 4], beta: [0.0; 4] };
        iono.alpha.copy_from_slice(std::slice::from_raw_parts(alpha, 4));
        iono.beta.copy_from_slice(std::slice::from_raw_parts(beta, 4));
        let azel = AzEl::new(azimuth_rad, elevation_rad);
        match klobuchar_delay(Some(&iono), lat_rad, lon_rad, azel, gps_sow, frequency_hz) {
            Ok(v) => {
                *out_m = v;
                RgStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Saastamoinen slant tropospheric delay in meters.
///
/// # Safety
/// `out_m` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_tropo_delay(elevation_rad: f64, height_m: f64, relative_humidity: f64, out_m: *mut f64) -> RgStatus {
    guard(|| {
        if out_m.is_null() {
            return fail(RgStatus::NullPointer, "out_m is null");
        }
        if !(0.0..=1.0).contains(&relative_humidity) {
            return fail(RgStatus::InvalidArgument, "relative humidity outside [0, 1]");
        }
        let model = TropoModel { relative_humidity };
        match model.slant_delay(AzEl::new(0.0, elevation_rad), height_m) {
            Ok(v) => {
                *out_m = v;
                RgStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Loads a `model.json` written by the `train` subcommand.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_classifier_load(path: *const c_char, out: *mut *mut RgClassifier) -> RgStatus {
    guard(|| {
        if out.is_null() {
            return fail(RgStatus::NullPointer, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ModelDocument::load(Path::new(path)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(RgClassifier { model }));
                RgStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `clf` must be null or a handle from [`rg_classifier_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rg_classifier_free(clf: *mut RgClassifier) {
    if !clf.is_null() {
        drop(Box::from_raw(clf));
    }
}

/// Number of input features expected by [`rg_classifier_predict`].
///
/// # Safety
/// `clf` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_classifier_feature_count(clf: *const RgClassifier) -> usize {
    clf.as_ref().map_or(0, |c| c.model.schema.len())
}

/// Number of output classes.
///
/// # Safety
/// `clf` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_classifier_class_count(clf: *const RgClassifier) -> usize {
    clf.as_ref().map_or(0, |c| c.model.classes.len())
}

/// Name of feature `index`, copied into `buf`. `out_len` receives the
/// length needed including the terminator.
///
/// # Safety
/// `clf` must be a live handle, `buf` null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn rg_classifier_feature_name(
    clf: *const RgClassifier,
    index: usize,
    buf: *mut c_char,
    len: usize,
    out_len: *mut usize,
) -> RgStatus {
    guard(|| {
        let Some(c) = clf.as_ref() else { return fail(RgStatus::NullPointer, "classifier is null") };
        let Some(name) = c.model.schema.names.get(index) else {
            return fail(RgStatus::InvalidArgument, format!("feature index {index} out of range"));
        };
        name_out(name, buf, len, out_len)
    })
}

/// Label of class `index`, copied into `buf`.
///
/// # Safety
/// As for [`rg_classifier_feature_name`].
#[no_mangle]
pub unsafe extern "C" fn rg_classifier_class_name(
    clf: *const RgClassifier,
    index: usize,
    buf: *mut c_char,
    len: usize,
    out_len: *mut usize,
) -> RgStatus {
    guard(|| {
        let Some(c) = clf.as_ref() else { return fail(RgStatus::NullPointer, "classifier is null") };
        let Some(class) = c.model.classes.get(index) else {
            return fail(RgStatus::InvalidArgument, format!("class index {index} out of range"));
        };
        name_out(class.name(), buf, len, out_len)
    })
}

unsafe fn name_out(s: &str, buf: *mut c_char, len: usize, out_len: *mut usize) -> RgStatus {
    let need = copy_out(s, buf, len);
    if !out_len.is_null() {
        *out_len = need;
    }
    if need > len {
        return fail(RgStatus::BufferTooSmall, format!("need {need} bytes"));
    }
    RgStatus::Ok
}

/// Classifies one feature row. `present[i] == 0` marks a masked feature.
/// Writes the winning class index and, when `probabilities` is not null,
/// `n_probabilities` class probabilities.
///
/// # Safety
/// `values` and `present` must hold `n_features` entries; `probabilities`
/// must be null or hold `n_probabilities` entries.
#[no_mangle]
pub unsafe extern "C" fn rg_classifier_predict(
    clf: *const RgClassifier,
    values: *const f64,
    present: *const u8,
    n_features: usize,
    out_class: *mut usize,
    probabilities: *mut f64,
    n_probabilities: usize,
) -> RgStatus {
    guard(|| {
        let Some(c) = clf.as_ref() else { return fail(RgStatus::NullPointer, "classifier is null") };
        if values.is_null() || present.is_null() || out_class.is_null() {
            return fail(RgStatus::NullPointer, "null argument");
        }
        let values = std::slice::from_raw_parts(values, n_features);
        let present: Vec<bool> = std::slice::from_raw_parts(present, n_features).iter().map(|p| *p != 0).collect();
        let fv = FeatureVector {
            time: GnssTime::new(0, 0.0),
            values: values.iter().zip(&present).map(|(v, p)| if *p { *v } else { f64::NAN }).collect(),
            present,
        };
        let pred = match c.model.predict(&fv) {
            Ok(p) => p,
            Err(e) => return from_error(e),
        };
        *out_class = c.model.classes.iter().position(|k| *k == pred.class).expect("predicted class listed");
        if !probabilities.is_null() {
            if n_probabilities < pred.probabilities.len() {
                return fail(RgStatus::BufferTooSmall, format!("need {} probabilities", pred.probabilities.len()));
            }
            std::slice::from_raw_parts_mut(probabilities, pred.probabilities.len()).copy_from_slice(&pred.probabilities);
        }
        RgStatus::Ok
    })
}

/// Loads an `error_models.json` written by the `fit-errors` subcommand.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_error_models_load(path: *const c_char, out: *mut *mut RgErrorModelSet) -> RgStatus {
    guard(|| {
        if out.is_null() {
            return fail(RgStatus::NullPointer, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ErrorModelSet::load(Path::new(path)) {
            Ok(set) => {
                *out = Box::into_raw(Box::new(RgErrorModelSet { set }));
                RgStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `set` must be null or a handle from [`rg_error_models_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rg_error_models_free(set: *mut RgErrorModelSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

struct SignalArgs {
    class: Option<EnvironmentClass>,
    satellite: SatelliteId,
    band: Band,
}

/// `class` may be null for unlabeled; `satellite` like `G05`; `band` like `L1`.
unsafe fn signal_args(class: *const c_char, satellite: *const c_char, band: *const c_char) -> Result<SignalArgs, RgStatus> {
    let class = if class.is_null() {
        None
    } else {
        Some(str_arg(class, "class")?.parse().map_err(from_error)?)
    };
    let satellite: SatelliteId = str_arg(satellite, "satellite")?.parse().map_err(from_error)?;
    let band: Band = str_arg(band, "band")?.parse().map_err(from_error)?;
    if band.constellation() != satellite.constellation {
        return Err(fail(RgStatus::InvalidArgument, format!("band {band} does not belong to {satellite}")));
    }
    Ok(SignalArgs { class, satellite, band })
}

/// Gaussian model used for a signal in an environment, falling back to the
/// pooled model when the group was not fitted.
///
/// # Safety
/// String arguments must be NUL-terminated (`class` may be null);
/// `out_mean_m` and `out_var_m2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_error_models_lookup(
    set: *const RgErrorModelSet,
    class: *const c_char,
    satellite: *const c_char,
    band: *const c_char,
    out_mean_m: *mut f64,
    out_var_m2: *mut f64,
) -> RgStatus {
    guard(|| {
        let Some(s) = set.as_ref() else { return fail(RgStatus::NullPointer, "model set is null") };
        if out_mean_m.is_null() || out_var_m2.is_null() {
            return fail(RgStatus::NullPointer, "null output");
        }
        let a = match signal_args(class, satellite, band) {
            Ok(a) => a,
            Err(st) => return st,
        };
        match s.set.resolve(a.class, a.satellite.constellation, a.band) {
            Ok(m) => {
                *out_mean_m = m.mean_m;
                *out_var_m2 = m.var_m2;
                RgStatus::Ok
            }
            Err(e) => {
                from_error(e);
                RgStatus::NotFound
            }
        }
    })
}

/// Error for one signal at one instant, identical to the value the
/// `simulate` subcommand writes for the same seed.
///
/// # Safety
/// As for [`rg_error_models_lookup`]; `out_error_m` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_error_models_sample(
    set: *const RgErrorModelSet,
    class: *const c_char,
    satellite: *const c_char,
    band: *const c_char,
    gps_week: i32,
    gps_sow: f64,
    seed: u64,
    out_error_m: *mut f64,
) -> RgStatus {
    guard(|| {
        let Some(s) = set.as_ref() else { return fail(RgStatus::NullPointer, "model set is null") };
        if out_error_m.is_null() {
            return fail(RgStatus::NullPointer, "out_error_m is null");
        }
        let a = match signal_args(class, satellite, band) {
            Ok(a) => a,
            Err(st) => return st,
        };
        let schedule = [ScheduleEpoch {
            time: GnssTime::new(gps_week, gps_sow),
            class: a.class,
            signals: vec![ScheduleEntry { satellite: a.satellite, band: a.band }],
        }];
        match sample_errors(&s.set, &schedule, seed, &[]) {
            Ok(v) => {
                *out_error_m = v[0].error_m.expect("signal present");
                RgStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
