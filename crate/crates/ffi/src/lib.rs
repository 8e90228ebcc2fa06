//! C ABI over `gesture-core`.
//!
//! Every fallible entry point returns a [`GestureStatus`]. On failure the
//! message is available from [`gesture_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gesture_core::dataset::{parse_yolo_line, YoloAnnotation};
use gesture_core::harness::{infer, Predictor};
use gesture_core::imaging::{find_hand, ImageU8, SkinRange};
use gesture_core::models::{iou, load_checkpoint, FeatureStore, NetKind, NormBox};
use gesture_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GestureStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Contract = 5,
    NotACheckpoint = 6,
    CheckpointVersion = 7,
    CheckpointTruncated = 8,
    ArchitectureMismatch = 9,
    NoHandRegion = 10,
    Image = 11,
    Panic = 12,
}

impl From<&Error> for GestureStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Contract(_) | Error::Ingest { .. } => GestureStatus::Contract,
            Error::NoHandRegion => GestureStatus::NoHandRegion,
            Error::Parse { .. } | Error::Xml { .. } => GestureStatus::Parse,
            Error::Io { .. } => GestureStatus::Io,
            Error::Image { .. } => GestureStatus::Image,
            Error::NotACheckpoint => GestureStatus::NotACheckpoint,
            Error::CheckpointVersion { .. } => GestureStatus::CheckpointVersion,
            Error::CheckpointTruncated => GestureStatus::CheckpointTruncated,
            Error::ArchitectureMismatch { .. } => GestureStatus::ArchitectureMismatch,
        }
    }
}

/// Normalised box: centre, width and height in `[0, 1]`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GestureBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Inclusive pixel rectangle.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GesturePixelBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GestureYolo {
    pub class_id: u32,
    pub bbox: GestureBox,
}

/// `label_index` is -1 when nothing was recognised; `has_bbox` is 0 or 1.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GesturePrediction {
    pub label_index: i32,
    pub confidence: f64,
    pub has_bbox: u8,
    pub bbox: GesturePixelBox,
}

/// A loaded model: classifier or detector checkpoint, or a feature store.
pub struct GesturePredictor {
    inner: Predictor,
    labels: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: GestureStatus, msg: impl Into<String>) -> GestureStatus {
    set_error(msg.into());
    status
}

fn from_core(e: Error) -> GestureStatus {
    fail(GestureStatus::from(&e), e.to_string())
}

fn guard(body: impl FnOnce() -> GestureStatus) -> GestureStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|_| fail(GestureStatus::Panic, "internal panic"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, GestureStatus> {
    str_arg(p).map(PathBuf::from)
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, GestureStatus> {
    if p.is_null() {
        return Err(fail(GestureStatus::NullArgument, "string argument is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(GestureStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn image_arg(pixels: *const u8, width: u32, height: u32, channels: u32) -> Result<ImageU8, GestureStatus> {
    if pixels.is_null() {
        return Err(fail(GestureStatus::NullArgument, "pixels is null"));
    }
    let len = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels as usize))
        .ok_or_else(|| fail(GestureStatus::Contract, "image size overflows"))?;
    let data = std::slice::from_raw_parts(pixels, len).to_vec();
    ImageU8::new(width as usize, height as usize, channels as usize, data).map_err(from_core)
}

fn pixel_box(b: gesture_core::imaging::PixelBox) -> GesturePixelBox {
    GesturePixelBox {
        x_min: b.x_min as u32,
        y_min: b.y_min as u32,
        x_max: b.x_max as u32,
        y_max: b.y_max as u32,
    }
}

fn into_handle(inner: Predictor, labels: Vec<String>, out: *mut *mut GesturePredictor) -> GestureStatus {
    let labels = labels
        .into_iter()
        .map(|l| CString::new(l).unwrap_or_default())
        .collect();
    let handle = Box::new(GesturePredictor { inner, labels });
    unsafe { *out = Box::into_raw(handle) };
    GestureStatus::Ok
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gesture_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a classifier or detector checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gesture_predictor_load_checkpoint(
    path: *const c_char,
    out: *mut *mut GesturePredictor,
) -> GestureStatus {
    guard(|| {
        if out.is_null() {
            return fail(GestureStatus::NullArgument, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let ckpt = match load_checkpoint(&path) {
            Ok(c) => c,
            Err(e) => return from_core(e),
        };
        let labels = ckpt.network.labels.clone();
        let predictor = match ckpt.network.kind() {
            NetKind::Classifier => Predictor::Cnn(ckpt.network),
            NetKind::Detector { .. } => Predictor::detector(ckpt.network),
        };
        into_handle(predictor, labels, out)
    })
}

/// Loads a feature store directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gesture_predictor_load_store(
    dir: *const c_char,
    out: *mut *mut GesturePredictor,
) -> GestureStatus {
    guard(|| {
        if out.is_null() {
            return fail(GestureStatus::NullArgument, "out is null");
        }
        let dir = match path_arg(dir) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match FeatureStore::load(&dir) {
            Ok(store) => {
                let labels = store.labels().to_vec();
                into_handle(Predictor::Features(store), labels, out)
            }
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `handle` must be null or a pointer returned by a `gesture_predictor_load_*`
/// function that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn gesture_predictor_free(handle: *mut GesturePredictor) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live predictor handle.
#[no_mangle]
pub unsafe extern "C" fn gesture_predictor_label_count(handle: *const GesturePredictor) -> u32 {
    handle.as_ref().map_or(0, |h| h.labels.len() as u32)
}

/// Label at `index`, or null when out of range. Owned by the handle.
///
/// # Safety
/// `handle` must be a live predictor handle.
#[no_mangle]
pub unsafe extern "C" fn gesture_predictor_label(handle: *const GesturePredictor, index: u32) -> *const c_char {
    handle
        .as_ref()
        .and_then(|h| h.labels.get(index as usize))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Runs inference on an interleaved 8-bit image with 1 or 3 channels.
/// A frame without a hand or detection yields `label_index == -1`.
///
/// # Safety
/// `handle` must be live, `pixels` must hold `width * height * channels`
/// bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gesture_predictor_infer(
    handle: *const GesturePredictor,
    pixels: *const u8,
    width: u32,
    height: u32,
    channels: u32,
    out: *mut GesturePrediction,
) -> GestureStatus {
    guard(|| {
        let Some(h) = handle.as_ref() else {
            return fail(GestureStatus::NullArgument, "handle is null");
        };
        if out.is_null() {
            return fail(GestureStatus::NullArgument, "out is null");
        }
        let img = match image_arg(pixels, width, height, channels) {
            Ok(i) => i,
            Err(s) => return s,
        };
        let result = match infer(&h.inner, &img) {
            Ok(r) => r,
            Err(e) => return from_core(e),
        };
        let label_index = result
            .label
            .as_deref()
            .and_then(|l| h.labels.iter().position(|c| c.to_bytes() == l.as_bytes()))
            .map_or(-1, |i| i as i32);
        *out = GesturePrediction {
            label_index,
            confidence: result.confidence,
            has_bbox: u8::from(result.bbox.is_some()),
            bbox: result.bbox.map(pixel_box).unwrap_or_default(),
        };
        GestureStatus::Ok
    })
}

/// Bounding box of the largest skin region in an RGB image.
///
/// # Safety
/// `pixels` must hold `width * height * channels` bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gesture_find_hand(
    pixels: *const u8,
    width: u32,
    height: u32,
    channels: u32,
    out: *mut GesturePixelBox,
) -> GestureStatus {
    guard(|| {
        if out.is_null() {
            return fail(GestureStatus::NullArgument, "out is null");
        }
        let img = match image_arg(pixels, width, height, channels) {
            Ok(i) => i,
            Err(s) => return s,
        };
        match find_hand(&img, SkinRange::default()) {
            Ok(c) => {
                *out = pixel_box(c.bbox);
                GestureStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Intersection over union of two normalised boxes; 0 if either is null.
///
/// # Safety
/// `a` and `b` must be null or point to valid boxes.
#[no_mangle]
pub unsafe extern "C" fn gesture_iou(a: *const GestureBox, b: *const GestureBox) -> f64 {
    match (a.as_ref(), b.as_ref()) {
        (Some(a), Some(b)) => {
            let n = |g: &GestureBox| NormBox {
                cx: g.cx,
                cy: g.cy,
                w: g.w,
                h: g.h,
            };
            iou(&n(a), &n(b))
        }
        _ => 0.0,
    }
}

/// Parses one `class cx cy w h` line.
///
/// # Safety
/// `line` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gesture_yolo_parse_line(line: *const c_char, out: *mut GestureYolo) -> GestureStatus {
    guard(|| {
        if out.is_null() {
            return fail(GestureStatus::NullArgument, "out is null");
        }
        let line = match str_arg(line) {
            Ok(l) => l,
            Err(s) => return s,
        };
        match parse_yolo_line(line) {
            Ok(YoloAnnotation { class_id, cx, cy, w, h }) => {
                *out = GestureYolo {
                    class_id: class_id as u32,
                    bbox: GestureBox { cx, cy, w, h },
                };
                GestureStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}
