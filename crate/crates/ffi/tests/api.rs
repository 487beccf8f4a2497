use std::ffi::{c_char, CString};
use std::ptr;

use railgnss::atmosphere::{klobuchar_delay, TropoModel};
use railgnss::classify::{gbt_train, GbtParams};
use railgnss::context::{EnvironmentClass, FeatureSchema, FeatureVector, LabeledSample, FEATURE_SCHEMA_VERSION};
use railgnss::errormodel::{fit_error_models, sample_errors, FitConfig, ScheduleEntry, ScheduleEpoch};
use railgnss::geodesy::AzEl;
use railgnss::ingest::{Band, Constellation, IonoParams, SatelliteId};
use railgnss::residuals::ResidualSample;
use railgnss::GnssTime;
use railgnss_ffi::*;

const ALPHA: [f64; 4] = [1.1176e-8, 7.4506e-9, -5.9605e-8, -5.9605e-8];
const BETA: [f64; 4] = [9.0112e4, 0.0, -1.9661e5, -6.5536e4];

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { rg_last_error_message(buf.as_mut_ptr().cast(), buf.len()) };
    assert!(n > 0);
    String::from_utf8(buf[..n - 1].to_vec()).unwrap()
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { std::ffi::CStr::from_ptr(rg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn atmosphere_matches_library() {
    let azel = AzEl::new(1.2, 0.4);
    let expected = klobuchar_delay(
        Some(&IonoParams { alpha: ALPHA, beta: BETA }),
        0.8,
        0.1,
        azel,
        50_000.0,
        Band::L1.frequency_hz(),
    )
    .unwrap();
    let mut out = 0.0;
    let st = unsafe { rg_klobuchar_delay(ALPHA.as_ptr(), BETA.as_ptr(), 0.8, 0.1, 1.2, 0.4, 50_000.0, Band::L1.frequency_hz(), &mut out) };
    assert_eq!(st, RgStatus::Ok);
    assert_eq!(out, expected);

    let st = unsafe { rg_tropo_delay(0.4, 120.0, 0.5, &mut out) };
    assert_eq!(st, RgStatus::Ok);
    assert_eq!(out, TropoModel { relative_humidity: 0.5 }.slant_delay(azel, 120.0).unwrap());
}

#[test]
fn errors_are_reported() {
    let mut out = 0.0;
    assert_eq!(unsafe { rg_tropo_delay(0.01, 0.0, 0.5, &mut out) }, RgStatus::NumericalError);
    assert!(last_error().contains("elevation"));
    assert_eq!(unsafe { rg_tropo_delay(0.5, 0.0, 1.5, &mut out) }, RgStatus::InvalidArgument);
    assert_eq!(unsafe { rg_tropo_delay(0.5, 0.0, 0.5, ptr::null_mut()) }, RgStatus::NullPointer);
    let mut clf: *mut RgClassifier = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(unsafe { rg_classifier_load(missing.as_ptr(), &mut clf) }, RgStatus::InputError);
    assert!(clf.is_null());
    assert!(last_error().contains("nonexistent"));
    // truncation keeps the terminator and reports the full length
    let mut small = [0 as c_char; 4];
    let n = unsafe { rg_last_error_message(small.as_mut_ptr(), small.len()) };
    assert!(n > 4);
    assert_eq!(small[3], 0);
}

fn sample(x: f64, class: EnvironmentClass) -> LabeledSample {
    LabeledSample {
        features: FeatureVector { time: GnssTime::new(2200, 0.0), values: vec![x, 1.0], present: vec![true, true] },
        class,
    }
}

#[test]
fn classifier_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let schema = FeatureSchema { version: FEATURE_SCHEMA_VERSION, names: vec!["a".into(), "b".into()] };
    let samples: Vec<_> = (0..40)
        .map(|k| {
            let x = k as f64;
            sample(x, if k < 20 { EnvironmentClass::Trees } else { EnvironmentClass::Station })
        })
        .collect();
    let (doc, _) = gbt_train(&samples, &schema, &GbtParams { n_rounds: 20, ..Default::default() }, 0).unwrap();
    let path = dir.path().join("model.json");
    doc.save(&path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut clf: *mut RgClassifier = ptr::null_mut();
    assert_eq!(unsafe { rg_classifier_load(c_path.as_ptr(), &mut clf) }, RgStatus::Ok);
    unsafe {
        assert_eq!(rg_classifier_feature_count(clf), 2);
        assert_eq!(rg_classifier_class_count(clf), 2);
        let mut buf = [0 as c_char; 32];
        let mut need = 0;
        assert_eq!(rg_classifier_class_name(clf, 0, buf.as_mut_ptr(), buf.len(), &mut need), RgStatus::Ok);
        assert_eq!(std::ffi::CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "Trees");
        assert_eq!(rg_classifier_feature_name(clf, 1, buf.as_mut_ptr(), 1, &mut need), RgStatus::BufferTooSmall);
        assert_eq!(need, 2);
        assert_eq!(rg_classifier_class_name(clf, 9, buf.as_mut_ptr(), buf.len(), &mut need), RgStatus::InvalidArgument);

        for (x, want) in [(3.0, 0usize), (35.0, 1)] {
            let values = [x, 1.0];
            let present = [1u8, 1];
            let mut class = 99;
            let mut probs = [0.0; 2];
            let st = rg_classifier_predict(clf, values.as_ptr(), present.as_ptr(), 2, &mut class, probs.as_mut_ptr(), 2);
            assert_eq!(st, RgStatus::Ok);
            assert_eq!(class, want);
            let p = doc.predict(&sample(x, EnvironmentClass::Trees).features).unwrap();
            assert_eq!(probs.to_vec(), p.probabilities);
        }
        let mut class = 0;
        let st = rg_classifier_predict(clf, [1.0].as_ptr(), [1u8].as_ptr(), 1, &mut class, ptr::null_mut(), 0);
        assert_eq!(st, RgStatus::InputError);
        rg_classifier_free(clf);
        rg_classifier_free(ptr::null_mut());
    }
}

#[test]
fn error_models_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sat = SatelliteId::new(Constellation::Gps, 7);
    let residuals: Vec<ResidualSample> = (0..200)
        .map(|k| ResidualSample {
            time: GnssTime::new(2200, k as f64),
            satellite: sat,
            band: Band::L1,
            epsilon_m: ((k * 37 % 101) as f64 - 50.0) / 10.0,
            elevation: 0.5,
            azimuth: 1.0,
            cn0_dbhz: Some(40.0),
            class: Some(EnvironmentClass::Trees),
        })
        .collect();
    let set = fit_error_models(&residuals, &FitConfig::default(), 3).unwrap();
    let path = dir.path().join("error_models.json");
    set.save(&path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut h: *mut RgErrorModelSet = ptr::null_mut();
    assert_eq!(unsafe { rg_error_models_load(c_path.as_ptr(), &mut h) }, RgStatus::Ok);
    let trees = CString::new("Trees").unwrap();
    let g07 = CString::new("G07").unwrap();
    let l1 = CString::new("L1").unwrap();
    let e1 = CString::new("E1").unwrap();
    let (mut mean, mut var) = (0.0, 0.0);
    unsafe {
        assert_eq!(rg_error_models_lookup(h, trees.as_ptr(), g07.as_ptr(), l1.as_ptr(), &mut mean, &mut var), RgStatus::Ok);
        let m = set.models["Trees/GPS/L1"];
        assert_eq!((mean, var), (m.mean_m, m.var_m2));
        // unlabeled resolves to the pooled fallback
        assert_eq!(rg_error_models_lookup(h, ptr::null(), g07.as_ptr(), l1.as_ptr(), &mut mean, &mut var), RgStatus::Ok);
        assert_eq!(rg_error_models_lookup(h, trees.as_ptr(), g07.as_ptr(), e1.as_ptr(), &mut mean, &mut var), RgStatus::InvalidArgument);

        let mut err = 0.0;
        assert_eq!(rg_error_models_sample(h, trees.as_ptr(), g07.as_ptr(), l1.as_ptr(), 2200, 12.0, 5, &mut err), RgStatus::Ok);
        let schedule = [ScheduleEpoch {
            time: GnssTime::new(2200, 12.0),
            class: Some(EnvironmentClass::Trees),
            signals: vec![ScheduleEntry { satellite: sat, band: Band::L1 }],
        }];
        assert_eq!(Some(err), sample_errors(&set, &schedule, 5, &[]).unwrap()[0].error_m);
        rg_error_models_free(h);
    }
}
