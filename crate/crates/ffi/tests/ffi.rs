use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use qlpower_ffi::*;

fn last_error() -> String {
    let p = qlp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_functions_match_library() {
    let mut ncp = 0.0;
    assert_eq!(unsafe { qlp_ncp_for_power(4, 0.05, 0.8, &mut ncp) }, QlpStatus::Ok);
    assert_eq!(ncp, qlpower::distributions::ncp_for_power(4, 0.05, 0.8).unwrap());
    let mut n = 0u64;
    assert_eq!(unsafe { qlp_sample_size(0.022, 4, 0.05, 0.8, &mut n) }, QlpStatus::Ok);
    assert_eq!(n, 543);
    let mut p = 0.0;
    assert_eq!(unsafe { qlp_power(0.022, 543, 4, 0.05, &mut p) }, QlpStatus::Ok);
    assert!(p >= 0.8);
    let mut f2 = 0.0;
    assert_eq!(unsafe { qlp_f2_from_r2(0.02, &mut f2) }, QlpStatus::Ok);
    assert_eq!(f2, 0.02 / 0.98);
    assert_eq!(unsafe { qlp_f2_from_phi(0.2, 2.0, &mut f2) }, QlpStatus::Ok);
    assert!((f2 - 0.02).abs() < 1e-15);
}

#[test]
fn errors_set_status_and_message() {
    let mut n = 0u64;
    assert_eq!(
        unsafe { qlp_sample_size(0.0, 4, 0.05, 0.8, &mut n) },
        QlpStatus::DomainError
    );
    assert!(last_error().contains("f2"));
    assert_eq!(
        unsafe { qlp_sample_size(1e-12, 2, 0.05, 0.8, &mut n) },
        QlpStatus::TooSmallEffect
    );
    assert_eq!(
        unsafe { qlp_sample_size(0.1, 4, 0.05, 0.8, ptr::null_mut()) },
        QlpStatus::NullPointer
    );
    assert!(last_error().contains("null"));
}

#[test]
fn model_handle_and_effect_sizes() {
    let lambda = [1.0, 0.15];
    let beta = [0.0, 0.0];
    let mut model = ptr::null_mut();
    let st = unsafe {
        qlp_model_new(
            QlpLink::Log,
            QlpVariance::Mean,
            1.0,
            lambda.as_ptr(),
            2,
            beta.as_ptr(),
            2,
            &mut model,
        )
    };
    assert_eq!(st, QlpStatus::Ok);
    let mut es = QlpEffectSizes::default();
    assert_eq!(
        unsafe { qlp_effect_sizes(model, 0.3, 3, 20_000, 1, &mut es) },
        QlpStatus::Ok
    );
    assert_eq!(es.f2, 0.0);
    assert_eq!(es.phi, 0.0);
    assert!(es.w_one > 0.0);
    assert_eq!(
        unsafe { qlp_effect_sizes(model, 2.0, 3, 100, 1, &mut es) },
        QlpStatus::DomainError
    );
    unsafe { qlp_model_free(model) };
    unsafe { qlp_model_free(ptr::null_mut()) };

    let bad = [0.1];
    let st = unsafe {
        qlp_model_new(
            QlpLink::Log,
            QlpVariance::Mean,
            -1.0,
            lambda.as_ptr(),
            2,
            bad.as_ptr(),
            1,
            &mut model,
        )
    };
    assert_ne!(st, QlpStatus::Ok);
}

#[test]
fn dataset_fit_and_wald() {
    // y = 1 + 2 z + 0.5 x + deterministic noise
    let n = 40;
    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut x = Vec::new();
    for i in 0..n {
        let zi = i as f64 / n as f64;
        let xi = (i % 2) as f64;
        let e = ((i * 7919) % 13) as f64 / 13.0 - 0.5;
        y.push(1.0 + 2.0 * zi + 0.5 * xi + e);
        z.extend([1.0, zi]);
        x.push(xi);
    }
    let mut data = ptr::null_mut();
    let st = unsafe {
        qlp_dataset_new(
            y.as_ptr(),
            n,
            z.as_ptr(),
            2,
            x.as_ptr(),
            1,
            QlpOutcomeKind::Real,
            &mut data,
        )
    };
    assert_eq!(st, QlpStatus::Ok);
    let mut fit = ptr::null_mut();
    assert_eq!(
        unsafe { qlp_fit(data, QlpLink::Identity, QlpVariance::Unit, &mut fit) },
        QlpStatus::Ok
    );

    let mut needed = 0usize;
    let mut small = [0.0; 2];
    assert_eq!(
        unsafe { qlp_fit_coefficients(fit, small.as_mut_ptr(), 2, &mut needed) },
        QlpStatus::BufferTooSmall
    );
    assert_eq!(needed, 3);
    let mut coef = [0.0; 3];
    assert_eq!(
        unsafe { qlp_fit_coefficients(fit, coef.as_mut_ptr(), 3, &mut needed) },
        QlpStatus::Ok
    );
    assert!((coef[2] - 0.5).abs() < 0.3, "{coef:?}");

    let mut s2 = 0.0;
    assert_eq!(unsafe { qlp_fit_sigma2(fit, &mut s2) }, QlpStatus::Ok);
    assert!(s2 > 0.0);
    let mut rep = QlpTestReport::default();
    assert_eq!(unsafe { qlp_fit_wald(fit, 0.05, &mut rep) }, QlpStatus::Ok);
    assert_eq!(rep.df, 1);
    assert_eq!(rep.reject, rep.statistic > rep.critical_value);
    unsafe {
        qlp_fit_free(fit);
        qlp_dataset_free(data);
    }

    // first column of z must be the intercept
    let mut z2 = z.clone();
    z2[0] = 3.0;
    let st = unsafe {
        qlp_dataset_new(
            y.as_ptr(),
            n,
            z2.as_ptr(),
            2,
            x.as_ptr(),
            1,
            QlpOutcomeKind::Real,
            &mut data,
        )
    };
    assert_eq!(st, QlpStatus::InvalidInput);
}

#[test]
fn pilot_json_round_trip() {
    let cs = qlpower::planner::synthetic_case_study(400, 3).unwrap();
    let csv = CString::new(cs.csv).unwrap();
    let mapping = CString::new(serde_json::to_string(&cs.mapping).unwrap()).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { qlp_pilot_json(csv.as_ptr(), mapping.as_ptr(), 0.05, 0.8, &mut out) };
    assert_eq!(st, QlpStatus::Ok);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { qlp_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["report"]["delta_curve"].as_array().unwrap().len(), 21);

    let bad = CString::new("{").unwrap();
    let st = unsafe { qlp_pilot_json(csv.as_ptr(), bad.as_ptr(), 0.05, 0.8, &mut out) };
    assert_eq!(st, QlpStatus::InvalidInput);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(qlp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

const HEADER: &str = include_str!("../include/qlpower.h");

#[test]
fn header_declares_every_export() {
    for name in [
        "qlp_last_error_message",
        "qlp_version",
        "qlp_ncp_for_power",
        "qlp_power",
        "qlp_sample_size",
        "qlp_f2_from_phi",
        "qlp_f2_from_r2",
        "qlp_model_new",
        "qlp_model_free",
        "qlp_effect_sizes",
        "qlp_dataset_new",
        "qlp_dataset_free",
        "qlp_fit",
        "qlp_fit_free",
        "qlp_fit_coefficients",
        "qlp_fit_sigma2",
        "qlp_fit_wald",
        "qlp_pilot_json",
        "qlp_string_free",
    ] {
        assert!(HEADER.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(HEADER.contains("typedef struct QlpModel QlpModel;"));
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"qlpower.h\"\nint main(void) { QlpModel *m = 0; qlp_model_free(m); return QLP_STATUS_OK; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = match Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("no C compiler available ({e}); header syntax not checked");
            return;
        }
    };
    assert!(status.success());
}
