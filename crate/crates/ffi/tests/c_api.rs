use std::ffi::{CStr, CString};
use std::ptr;

use aeromap::fixtures::benchmark_dataset;
use aeromap::preprocess::write_dataset_csv;
use aeromap_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; aeromap_last_error_length().max(1)];
    unsafe { aeromap_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn dataset_file(dir: &std::path::Path) -> CString {
    let path = dir.join("data.csv");
    write_dataset_csv(&path, &benchmark_dataset(1, 5)).unwrap();
    c(path.to_str().unwrap())
}

#[test]
fn registry_is_exposed() {
    assert_eq!(aeromap_model_count(), 10);
    let names: Vec<String> = (0..aeromap_model_count())
        .map(|i| unsafe { CStr::from_ptr(aeromap_model_name_at(i)) }.to_str().unwrap().to_owned())
        .collect();
    assert_eq!(names, aeromap::models::MODEL_NAMES);
    assert!(aeromap_model_name_at(10).is_null());
}

#[test]
fn fit_predict_save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dataset_file(dir.path());
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(aeromap_dataset_read_csv(path.as_ptr(), &mut ds), AeromapStatus::Ok);
        let n = aeromap_dataset_len(ds);
        assert_eq!(n, 160);
        let mut actual = vec![0.0; n];
        assert_eq!(aeromap_dataset_values(ds, actual.as_mut_ptr(), n), AeromapStatus::Ok);

        let mut model = ptr::null_mut();
        assert_eq!(aeromap_model_fit(ds, c("lr").as_ptr(), 1, &mut model), AeromapStatus::Ok);
        assert_eq!(CStr::from_ptr(aeromap_model_name(model)).to_str().unwrap(), "lr");
        let mut pred = vec![0.0; n];
        assert_eq!(aeromap_model_predict(model, ds, pred.as_mut_ptr(), n), AeromapStatus::Ok);

        let mut m = AeromapMetrics::default();
        assert_eq!(aeromap_metrics(pred.as_ptr(), actual.as_ptr(), n, &mut m), AeromapStatus::Ok);
        assert_eq!(m.n, n);
        assert!(m.rmse < 0.2 && m.corr > 0.8, "{m:?}");

        let file = c(dir.path().join("lr.json").to_str().unwrap());
        assert_eq!(aeromap_model_save(model, file.as_ptr()), AeromapStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(aeromap_model_load(file.as_ptr(), &mut loaded), AeromapStatus::Ok);
        let mut again = vec![0.0; n];
        assert_eq!(aeromap_model_predict(loaded, ds, again.as_mut_ptr(), n), AeromapStatus::Ok);
        assert_eq!(pred, again);

        aeromap_model_free(loaded);
        aeromap_model_free(model);
        aeromap_dataset_free(ds);
    }
}

#[test]
fn errors_map_to_codes_with_messages() {
    let dir = tempfile::tempdir().unwrap();
    let path = dataset_file(dir.path());
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(aeromap_dataset_read_csv(c("/no/such/file.csv").as_ptr(), &mut ds), AeromapStatus::Io);
        assert!(ds.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(aeromap_dataset_read_csv(path.as_ptr(), &mut ds), AeromapStatus::Ok);
        let mut model = ptr::null_mut();
        assert_eq!(aeromap_model_fit(ds, c("kriging").as_ptr(), 0, &mut model), AeromapStatus::UnknownModel);
        assert!(last_error().contains("kriging"));
        assert_eq!(aeromap_model_fit(ds, ptr::null(), 0, &mut model), AeromapStatus::NullArgument);

        assert_eq!(aeromap_model_fit(ds, c("idw").as_ptr(), 0, &mut model), AeromapStatus::Ok);
        let mut small = vec![0.0; 3];
        assert_eq!(aeromap_model_predict(model, ds, small.as_mut_ptr(), 3), AeromapStatus::BufferTooSmall);

        let mut m = AeromapMetrics::default();
        assert_eq!(aeromap_metrics(small.as_ptr(), small.as_ptr(), 0, &mut m), AeromapStatus::Contract);

        aeromap_model_free(model);
        aeromap_dataset_free(ds);
        aeromap_dataset_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/aeromap.h")).unwrap();
    for sym in ["aeromap_model_fit", "aeromap_model_predict", "aeromap_dataset_free", "AEROMAP_STATUS_UNKNOWN_MODEL", "typedef struct AeromapModel"] {
        assert!(h.contains(sym), "{sym} missing from header");
    }
}
