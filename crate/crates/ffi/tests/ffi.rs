use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use cateq::dataset::synthetic::{generate_split, SyntheticConfig};
use cateq::dataset::Split;
use cateq::features::{FeatureSpec, MultiSensorWindow, RepresentationKind};
use cateq::learn::{Classifier, LogRegParams};
use cateq_ffi::*;

fn flat(w: &MultiSensorWindow) -> (Vec<f64>, Vec<f64>) {
    (w.blocks.acc.to_flat(), w.blocks.gyro.to_flat())
}

fn last_error() -> String {
    let p = cateq_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn trained_model(dir: &Path) -> (PathBuf, Classifier, Vec<MultiSensorWindow>) {
    let cfg = SyntheticConfig {
        n_train: 90,
        n_test: 12,
        ..Default::default()
    };
    let train = generate_split(&cfg, Split::Train);
    let spec = FeatureSpec::new(RepresentationKind::GroupPoset, 24, 128).unwrap();
    let (clf, _) = Classifier::fit_windows(
        spec,
        true,
        &train.windows,
        &train.labels,
        LogRegParams::default(),
    )
    .unwrap();
    let path = dir.join("model.json");
    clf.save(&path).unwrap();
    (path, clf, generate_split(&cfg, Split::Test).windows)
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(cateq_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn feature_dims() {
    let kinds = [
        (CateqKind::BaselineRaw, 768),
        (CateqKind::GroupOnly, 144),
        (CateqKind::PosetOnly, 48),
        (CateqKind::GroupPoset, 74),
    ];
    for (kind, expected) in kinds {
        let mut d = 0usize;
        assert_eq!(
            unsafe { cateq_feature_dim(kind, 24, 128, &mut d) },
            CateqStatus::Ok
        );
        assert_eq!(d, expected);
    }
    let mut d = 0usize;
    assert_eq!(
        unsafe { cateq_feature_dim(CateqKind::GroupPoset, 65, 128, &mut d) },
        CateqStatus::InvalidArgument
    );
    assert!(last_error().contains("k = 65"));
    assert_eq!(
        unsafe { cateq_feature_dim(CateqKind::GroupPoset, 24, 128, ptr::null_mut()) },
        CateqStatus::NullPointer
    );
}

#[test]
fn extract_matches_the_library() {
    let w = &generate_split(
        &SyntheticConfig {
            n_train: 3,
            n_test: 1,
            ..Default::default()
        },
        Split::Train,
    )
    .windows[2];
    let (acc, gyro) = flat(w);
    let spec = FeatureSpec::new(RepresentationKind::GroupPoset, 24, 128).unwrap();
    let mut out = vec![0.0; 74];
    let s = unsafe {
        cateq_extract(
            CateqKind::GroupPoset,
            24,
            acc.as_ptr(),
            gyro.as_ptr(),
            128,
            out.as_mut_ptr(),
            74,
        )
    };
    assert_eq!(s, CateqStatus::Ok);
    assert_eq!(out, spec.extract(w).unwrap());

    let s = unsafe {
        cateq_extract(
            CateqKind::GroupPoset,
            24,
            acc.as_ptr(),
            gyro.as_ptr(),
            128,
            out.as_mut_ptr(),
            70,
        )
    };
    assert_eq!(s, CateqStatus::DimensionMismatch);
    let s = unsafe {
        cateq_extract(
            CateqKind::GroupPoset,
            24,
            ptr::null(),
            gyro.as_ptr(),
            128,
            out.as_mut_ptr(),
            74,
        )
    };
    assert_eq!(s, CateqStatus::NullPointer);
    let mut bad = acc.clone();
    bad[5] = f64::NAN;
    let s = unsafe {
        cateq_extract(
            CateqKind::GroupPoset,
            24,
            bad.as_ptr(),
            gyro.as_ptr(),
            128,
            out.as_mut_ptr(),
            74,
        )
    };
    assert_eq!(s, CateqStatus::Numeric);
}

#[test]
fn rfft_of_a_cosine() {
    // cos(2 pi 2 n / 8) has |X_2| = 8 / 2 and nothing else in bins 1..=4
    let x: Vec<f64> = (0..8)
        .map(|n| (std::f64::consts::TAU * 2.0 * n as f64 / 8.0).cos())
        .collect();
    let mut out = [0.0; 4];
    assert_eq!(
        unsafe { cateq_rfft_magnitude(x.as_ptr(), 8, 4, out.as_mut_ptr()) },
        CateqStatus::Ok
    );
    for (bin, v) in out.iter().enumerate() {
        let expected = if bin + 1 == 2 { 4.0 } else { 0.0 };
        assert!((v - expected).abs() <= 1e-12, "bin {} = {v}", bin + 1);
    }
    assert_eq!(
        unsafe { cateq_rfft_magnitude(x.as_ptr(), 8, 5, out.as_mut_ptr()) },
        CateqStatus::InvalidArgument
    );
}

#[test]
fn model_round_trip_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let (path, clf, test) = trained_model(dir.path());
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut model: *mut CateqModel = ptr::null_mut();
    assert_eq!(
        unsafe { cateq_model_load(cpath.as_ptr(), &mut model) },
        CateqStatus::Ok
    );
    assert!(!model.is_null());

    let (mut t, mut d, mut c) = (0usize, 0usize, 0usize);
    assert_eq!(
        unsafe { cateq_model_info(model, &mut t, &mut d, &mut c) },
        CateqStatus::Ok
    );
    assert_eq!((t, d, c), (128, 74, 6));
    let mut classes = [0u8; 6];
    assert_eq!(
        unsafe { cateq_model_classes(model, classes.as_mut_ptr(), 6) },
        CateqStatus::Ok
    );
    assert_eq!(classes, [1, 2, 3, 4, 5, 6]);

    let expected = clf.predict_windows(&test).unwrap();
    for (w, want) in test.iter().zip(expected) {
        let (acc, gyro) = flat(w);
        let mut label = 0u8;
        let s = unsafe { cateq_model_predict(model, acc.as_ptr(), gyro.as_ptr(), 128, &mut label) };
        assert_eq!(s, CateqStatus::Ok);
        assert_eq!(label, want);
        let mut p = [0.0; 6];
        let s = unsafe {
            cateq_model_predict_proba(model, acc.as_ptr(), gyro.as_ptr(), 128, p.as_mut_ptr(), 6)
        };
        assert_eq!(s, CateqStatus::Ok);
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    let (acc, gyro) = flat(&test[0]);
    let mut label = 0u8;
    let s = unsafe { cateq_model_predict(model, acc.as_ptr(), gyro.as_ptr(), 64, &mut label) };
    assert_eq!(s, CateqStatus::DimensionMismatch);
    unsafe { cateq_model_free(model) };
    unsafe { cateq_model_free(ptr::null_mut()) };
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut model: *mut CateqModel = ptr::null_mut();
    let missing = CString::new(dir.path().join("none.json").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { cateq_model_load(missing.as_ptr(), &mut model) },
        CateqStatus::Io
    );
    assert!(model.is_null());
    let garbage = dir.path().join("bad.json");
    std::fs::write(&garbage, "{\"format\": 1}").unwrap();
    let garbage = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { cateq_model_load(garbage.as_ptr(), &mut model) },
        CateqStatus::Format
    );
    assert_eq!(
        unsafe { cateq_model_load(ptr::null(), &mut model) },
        CateqStatus::NullPointer
    );
    let mut label = 0u8;
    assert_eq!(
        unsafe { cateq_model_predict(ptr::null(), ptr::null(), ptr::null(), 128, &mut label) },
        CateqStatus::NullPointer
    );
}

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_compiles_as_c_and_cpp() {
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(header_dir().join("cateq.h"))
            .status()
            .unwrap_or_else(|e| panic!("running {compiler}: {e}"));
        assert!(status.success(), "{compiler} rejected the header");
    }
}

/// Directory holding the built static library (`target/<profile>`).
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = artifact_dir().join("libcateq_ffi.a");
    assert!(
        lib.is_file(),
        "static library not built at {}",
        lib.display()
    );
    let dir = tempfile::tempdir().unwrap();
    let (model_path, clf, test) = trained_model(dir.path());
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "cateq.h"

int main(int argc, char **argv) {
    size_t dim = 0;
    if (cateq_feature_dim(CATEQ_KIND_GROUP_POSET, 24, 128, &dim) != CATEQ_STATUS_OK || dim != 74) return 10;
    CateqModel *model = NULL;
    if (cateq_model_load(argv[1], &model) != CATEQ_STATUS_OK) {
        fprintf(stderr, "%s\n", cateq_last_error_message());
        return 11;
    }
    double acc[384], gyro[384];
    FILE *f = fopen(argv[2], "rb");
    if (!f || fread(acc, sizeof acc, 1, f) != 1 || fread(gyro, sizeof gyro, 1, f) != 1) return 12;
    fclose(f);
    uint8_t label = 0;
    if (cateq_model_predict(model, acc, gyro, 128, &label) != CATEQ_STATUS_OK) return 13;
    printf("%u\n", label);
    if (cateq_model_predict(model, acc, gyro, 0, &label) != CATEQ_STATUS_INVALID_ARGUMENT) return 14;
    if (cateq_last_error_message() == NULL) return 15;
    cateq_model_free(model);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header_dir())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "linking against {} failed", lib.display());

    let (acc, gyro) = flat(&test[0]);
    let bytes: Vec<u8> = acc
        .iter()
        .chain(&gyro)
        .flat_map(|v| v.to_ne_bytes())
        .collect();
    let input = dir.path().join("window.bin");
    std::fs::write(&input, bytes).unwrap();
    let out = Command::new(&exe)
        .arg(&model_path)
        .arg(&input)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    let label: u8 = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert_eq!(label, clf.predict_windows(&test[..1]).unwrap()[0]);
}
