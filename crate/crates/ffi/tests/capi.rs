use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use gesture_core::dataset::{gen_synthetic, SyntheticGestureSpec};
use gesture_core::models::{build_classifier, save_checkpoint, FeatureStore, extract_gesture_features};
use gesture_ffi::*;

fn last_error() -> String {
    let p = gesture_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn sample(fingers: usize, seed: u64) -> gesture_core::imaging::ImageU8 {
    gen_synthetic(&SyntheticGestureSpec::new(fingers), seed).unwrap().image
}

#[test]
fn yolo_and_iou() {
    let line = CString::new("2 0.5 0.5 0.2 0.4").unwrap();
    let mut out = GestureYolo::default();
    assert_eq!(unsafe { gesture_yolo_parse_line(line.as_ptr(), &mut out) }, GestureStatus::Ok);
    assert_eq!(out.class_id, 2);
    assert_eq!(out.bbox, GestureBox { cx: 0.5, cy: 0.5, w: 0.2, h: 0.4 });
    assert!(gesture_last_error().is_null());

    let bad = CString::new("0 0.5 0.5 0.2").unwrap();
    assert_eq!(unsafe { gesture_yolo_parse_line(bad.as_ptr(), &mut out) }, GestureStatus::Parse);
    assert!(last_error().contains("line 1"));
    assert_eq!(unsafe { gesture_yolo_parse_line(ptr::null(), &mut out) }, GestureStatus::NullArgument);

    let a = GestureBox { cx: 0.25, cy: 0.5, w: 0.5, h: 1.0 };
    let b = GestureBox { cx: 0.5, cy: 0.5, w: 0.5, h: 1.0 };
    assert!((unsafe { gesture_iou(&a, &b) } - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(unsafe { gesture_iou(&a, &a) }, 1.0);
    assert_eq!(unsafe { gesture_iou(&a, ptr::null()) }, 0.0);
}

#[test]
fn find_hand_on_raw_pixels() {
    let img = sample(2, 3);
    let mut out = GesturePixelBox::default();
    let status = unsafe {
        gesture_find_hand(img.data().as_ptr(), img.width() as u32, img.height() as u32, 3, &mut out)
    };
    assert_eq!(status, GestureStatus::Ok);
    assert!(out.x_min < out.x_max && out.y_min < out.y_max);

    let black = vec![0u8; 16 * 16 * 3];
    assert_eq!(unsafe { gesture_find_hand(black.as_ptr(), 16, 16, 3, &mut out) }, GestureStatus::NoHandRegion);
    assert_eq!(unsafe { gesture_find_hand(black.as_ptr(), 16, 16, 2, &mut out) }, GestureStatus::Contract);
    assert!(last_error().contains("channels"));
}

#[test]
fn checkpoint_predictor_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<String> = ["zero", "one", "two"].map(String::from).to_vec();
    let net = build_classifier(3, 32, 1).unwrap().with_labels(labels);
    let path = dir.path().join("net.ckpt");
    save_checkpoint(&net, 5, &path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut GesturePredictor = ptr::null_mut();
    assert_eq!(unsafe { gesture_predictor_load_checkpoint(c_path.as_ptr(), &mut handle) }, GestureStatus::Ok);
    assert!(!handle.is_null());
    unsafe {
        assert_eq!(gesture_predictor_label_count(handle), 3);
        assert_eq!(CStr::from_ptr(gesture_predictor_label(handle, 2)).to_str().unwrap(), "two");
        assert!(gesture_predictor_label(handle, 3).is_null());
    }

    let img = sample(1, 9);
    let mut pred = GesturePrediction::default();
    let status = unsafe {
        gesture_predictor_infer(handle, img.data().as_ptr(), img.width() as u32, img.height() as u32, 3, &mut pred)
    };
    assert_eq!(status, GestureStatus::Ok);
    assert!((0..3).contains(&pred.label_index));
    assert!(pred.confidence > 0.0 && pred.confidence <= 1.0);
    assert_eq!(pred.has_bbox, 1);

    let black = vec![0u8; 32 * 32 * 3];
    let status = unsafe { gesture_predictor_infer(handle, black.as_ptr(), 32, 32, 3, &mut pred) };
    assert_eq!(status, GestureStatus::Ok);
    assert_eq!((pred.label_index, pred.has_bbox), (-1, 0));
    unsafe { gesture_predictor_free(handle) };
    unsafe { gesture_predictor_free(ptr::null_mut()) };
}

#[test]
fn load_errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a model").unwrap();
    let mut handle: *mut GesturePredictor = ptr::null_mut();
    let c = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gesture_predictor_load_checkpoint(c.as_ptr(), &mut handle) }, GestureStatus::NotACheckpoint);
    let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gesture_predictor_load_checkpoint(missing.as_ptr(), &mut handle) }, GestureStatus::Io);
    assert!(last_error().contains("nope.ckpt"));
    assert!(handle.is_null());
    assert_eq!(
        unsafe { gesture_predictor_load_checkpoint(c.as_ptr(), ptr::null_mut()) },
        GestureStatus::NullArgument
    );
    let bad_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { gesture_predictor_load_store(bad_utf8.as_ptr().cast(), &mut handle) },
        GestureStatus::InvalidUtf8
    );
}

#[test]
fn feature_store_predictor() {
    let dir = tempfile::tempdir().unwrap();
    let entries = (0..3)
        .map(|k| {
            let vs = (0..4).map(|i| extract_gesture_features(&sample(k, 100 * k as u64 + i)).unwrap()).collect();
            (format!("g{k}"), vs)
        })
        .collect();
    FeatureStore::build(entries).unwrap().save(dir.path()).unwrap();
    let c = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut handle: *mut GesturePredictor = ptr::null_mut();
    assert_eq!(unsafe { gesture_predictor_load_store(c.as_ptr(), &mut handle) }, GestureStatus::Ok);
    let img = sample(2, 200);
    let mut pred = GesturePrediction::default();
    let status = unsafe {
        gesture_predictor_infer(handle, img.data().as_ptr(), img.width() as u32, img.height() as u32, 3, &mut pred)
    };
    assert_eq!(status, GestureStatus::Ok);
    assert_eq!(unsafe { gesture_predictor_label_count(handle) }, 3);
    assert!((0..3).contains(&pred.label_index));
    unsafe { gesture_predictor_free(handle) };
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let lib = target_dir().join("libgesture_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "gesture.h"
int main(void) {
    GestureBox a = {0.25, 0.5, 0.5, 1.0}, b = {0.5, 0.5, 0.5, 1.0};
    GestureYolo y;
    if (gesture_yolo_parse_line("1 0.5 0.5 0.1 0.1", &y) != GESTURE_STATUS_OK || y.class_id != 1) return 1;
    if (gesture_yolo_parse_line("1 0.5", &y) != GESTURE_STATUS_PARSE || gesture_last_error() == NULL) return 2;
    GesturePredictor *p = NULL;
    if (gesture_predictor_load_checkpoint("/nonexistent.ckpt", &p) != GESTURE_STATUS_IO) return 3;
    gesture_predictor_free(p);
    printf("%.6f\n", gesture_iou(&a, &b));
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "0.333333");
}
