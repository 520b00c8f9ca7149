use std::ffi::{CStr, CString};
use std::f64::consts::PI;
use std::ptr;

use koppelman_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(kop_last_error()) }.to_string_lossy().into_owned()
}

fn catalog(name: &str) -> *mut KopVariety {
    let c = CString::new(name).unwrap();
    let mut v = ptr::null_mut();
    assert_eq!(unsafe { kop_variety_from_catalog(c.as_ptr(), &mut v) }, KopStatus::Ok);
    assert!(!v.is_null());
    v
}

fn cx(re: f64, im: f64) -> KopComplex {
    KopComplex { re, im }
}

#[test]
fn catalog_handles_report_dimensions() {
    for (name, dims) in [("hyperplane", (3, 2, 1)), ("a1", (3, 2, 1)), ("ci22", (4, 2, 2))] {
        let v = catalog(name);
        let (mut big_n, mut n, mut nu) = (0, 0, 0);
        assert_eq!(unsafe { kop_variety_dims(v, &mut big_n, &mut n, &mut nu) }, KopStatus::Ok);
        assert_eq!((big_n, n, nu), dims);
        unsafe { kop_variety_free(v) };
    }
}

#[test]
fn catalog_errors_map_to_codes() {
    let mut v = ptr::null_mut();
    let name = CString::new("fermat9").unwrap();
    assert_eq!(unsafe { kop_variety_from_catalog(name.as_ptr(), &mut v) }, KopStatus::UnsupportedDegree);
    assert!(v.is_null());
    assert!(last_error().contains("fermat9"));
    let name = CString::new("quartic").unwrap();
    assert_eq!(unsafe { kop_variety_from_catalog(name.as_ptr(), &mut v) }, KopStatus::UnknownVariety);
    assert_eq!(unsafe { kop_variety_from_catalog(ptr::null(), &mut v) }, KopStatus::NullPointer);
    let ok = catalog("a1");
    assert_eq!(last_error(), "");
    unsafe { kop_variety_free(ok) };
}

#[test]
fn json_varieties_round_trip() {
    let text = CString::new(
        r#"{"ambient_dim": 3, "polys": [[{"exp": [2,0,0], "re": 1.0}, {"exp": [0,2,0], "re": 1.0}, {"exp": [0,0,2], "re": 1.0}]]}"#,
    )
    .unwrap();
    let mut v = ptr::null_mut();
    assert_eq!(unsafe { kop_variety_from_json(text.as_ptr(), &mut v) }, KopStatus::Ok);
    let zeta = [cx(1.0, 0.0), cx(0.0, 1.0), cx(0.5, 0.5)];
    let mut out = [cx(0.0, 0.0)];
    assert_eq!(unsafe { kop_variety_eval_tuple(v, zeta.as_ptr(), 3, out.as_mut_ptr(), 1) }, KopStatus::Ok);
    // 1 - 1 + (0.5 + 0.5i)^2 = 0.5i
    assert!((out[0].re).abs() < 1e-15 && (out[0].im - 0.5).abs() < 1e-15);
    unsafe { kop_variety_free(v) };

    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { kop_variety_from_json(bad.as_ptr(), &mut v) }, KopStatus::Parse);
    let singular = CString::new(r#"{"ambient_dim": 3, "polys": [[{"exp": [2,0,0], "re": 1.0}, {"exp": [0,2,0], "re": 1.0}]]}"#).unwrap();
    assert_eq!(unsafe { kop_variety_from_json(singular.as_ptr(), &mut v) }, KopStatus::InvalidVariety);
}

#[test]
fn evaluation_checks_lengths_and_nulls() {
    let v = catalog("a1");
    let zeta = [cx(1.0, 0.0), cx(2.0, 0.0), cx(3.0, 0.0)];
    let mut out = [cx(0.0, 0.0)];
    assert_eq!(unsafe { kop_variety_eval_tuple(v, zeta.as_ptr(), 3, out.as_mut_ptr(), 1) }, KopStatus::Ok);
    assert_eq!((out[0].re, out[0].im), (14.0, 0.0));
    assert_eq!(unsafe { kop_variety_eval_tuple(v, zeta.as_ptr(), 2, out.as_mut_ptr(), 1) }, KopStatus::InvalidArgument);
    assert_eq!(unsafe { kop_variety_eval_tuple(v, zeta.as_ptr(), 3, out.as_mut_ptr(), 0) }, KopStatus::InvalidArgument);
    assert_eq!(unsafe { kop_variety_eval_tuple(v, ptr::null(), 3, out.as_mut_ptr(), 1) }, KopStatus::NullPointer);
    assert_eq!(unsafe { kop_variety_eval_tuple(ptr::null(), zeta.as_ptr(), 3, out.as_mut_ptr(), 1) }, KopStatus::NullPointer);
    let mut m = 0.0;
    assert_eq!(unsafe { kop_variety_minors_norm(v, zeta.as_ptr(), 3, &mut m) }, KopStatus::Ok);
    assert!((m - 2.0 * 14f64.sqrt()).abs() < 1e-12);
    unsafe { kop_variety_free(v) };
    unsafe { kop_variety_free(ptr::null_mut()) };
}

#[test]
fn thresholds_for_a1_and_fermat4() {
    let mut t = KopThresholds { p_min: 0.0, p_min_w: 0.0, canonical: false, main1_applicable: false, main4_applicable: false };
    let v = catalog("a1");
    assert_eq!(unsafe { kop_variety_thresholds(v, &mut t) }, KopStatus::Ok);
    assert!((t.p_min - 4.0 / 3.0).abs() < 1e-15 && (t.p_min_w - 2.0).abs() < 1e-15 && t.canonical);
    unsafe { kop_variety_free(v) };
    let v = catalog("fermat4");
    assert_eq!(unsafe { kop_variety_thresholds(v, &mut t) }, KopStatus::Ok);
    assert!((t.p_min - 4.0).abs() < 1e-15 && !t.canonical && t.main1_applicable && !t.main4_applicable);
    assert_eq!(unsafe { kop_variety_thresholds(v, ptr::null_mut()) }, KopStatus::NullPointer);
    unsafe { kop_variety_free(v) };
}

#[test]
fn cone_density_at_the_vertex() {
    // v(r, 0) = deg pi^n / n! on a cone
    for (name, want) in [("hyperplane", PI * PI / 2.0), ("a1", PI * PI)] {
        let v = catalog(name);
        let z = [cx(0.0, 0.0); 3];
        let (mut val, mut err) = (0.0, 0.0);
        assert_eq!(unsafe { kop_estimate_v(v, 0.3, z.as_ptr(), 3, 20_000, 4, &mut val, &mut err) }, KopStatus::Ok);
        assert!((val - want).abs() <= 4.0 * err + 1e-9, "{name}: {val} +- {err}");
        assert_eq!(unsafe { kop_estimate_v(v, -1.0, z.as_ptr(), 3, 1000, 4, &mut val, &mut err) }, KopStatus::Numerical);
        assert_eq!(unsafe { kop_estimate_v(v, 0.3, z.as_ptr(), 3, 0, 4, &mut val, &mut err) }, KopStatus::InvalidArgument);
        unsafe { kop_variety_free(v) };
    }
}

#[test]
fn experiments_return_json_reports() {
    let v = catalog("hyperplane");
    let name = CString::new("cutoff_decay").unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { kop_run_experiment(v, name.as_ptr(), 4000, 3, 1.0, &mut json) }, KopStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { kop_string_free(json) };
    let rep: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(rep["name"], "cutoff_decay");
    assert_eq!(rep["variety"], "hyperplane");
    assert!(!rep["rows"].as_array().unwrap().is_empty());

    let name = CString::new("nope").unwrap();
    assert_eq!(unsafe { kop_run_experiment(v, name.as_ptr(), 4000, 3, 1.0, &mut json) }, KopStatus::UnknownExperiment);
    assert!(json.is_null());
    assert!(last_error().contains("nope"));
    let name = CString::new("v_bounds").unwrap();
    assert_eq!(unsafe { kop_run_experiment(v, name.as_ptr(), 10, 3, 1.0, &mut json) }, KopStatus::InvalidArgument);
    assert_eq!(unsafe { kop_run_experiment(v, name.as_ptr(), 4000, 3, 1.0, ptr::null_mut()) }, KopStatus::NullPointer);
    unsafe { kop_string_free(ptr::null_mut()) };
    unsafe { kop_variety_free(v) };
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile_dir();
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/koppelman.h");
    let src = dir.join("probe.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint probe(void) {{\n  KopVariety *v = 0;\n  KopStatus s = kop_variety_from_catalog(\"a1\", &v);\n  kop_variety_free(v);\n  return s == KOP_STATUS_OK ? 0 : (int)s;\n}}\n"
        ),
    )
    .unwrap();
    let status = std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"]).arg(&src).status();
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(e) => eprintln!("no C compiler available, header not checked: {e}"),
    }
    let _ = std::fs::remove_dir_all(&dir);
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("kop-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
