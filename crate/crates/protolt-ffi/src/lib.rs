//! C ABI over the protolt library.
//!
//! Conventions: every fallible function returns a [`ProtoltStatus`] and
//! writes results through out-pointers; `PROTOLT_STATUS_OK` is zero. On
//! failure a thread-local message is readable via
//! [`protolt_last_error_message`]. Matrices cross the boundary as flat
//! row-major f64 arrays with explicit row/dimension counts; feature rows
//! are normalized on ingest. The prototype bank is an opaque handle
//! created and destroyed by this library.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use protolt::bank::PrototypeBank;
use protolt::classifier::{predict_fused, predict_linear, predict_prototype, FusionConfig, LinearHead};
use protolt::error::Error;
use protolt::filter::{filter_weights, reconstruct, TextCandidateSet};
use protolt::format;
use protolt::geometry::{normalize, sample_uniform_sphere, softmax, FeatureMatrix};
use protolt::loss::{check_gradients, total_loss, LabeledBatch, LossConfig};
use protolt::metrics::{alignment, neighborhood_uniformity, split_accuracy, SplitThresholds};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtoltStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ZeroVector = 3,
    DimensionMismatch = 4,
    ClassOutOfRange = 5,
    TooFewClasses = 6,
    NumericalError = 7,
    IoError = 8,
    Utf8Error = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn record_error(message: String) {
    let sanitized = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn status_from(error: Error) -> ProtoltStatus {
    let status = match &error {
        Error::ZeroVector { .. } => ProtoltStatus::ZeroVector,
        Error::DimensionMismatch { .. }
        | Error::InvalidDimension { .. }
        | Error::CountMismatch { .. }
        | Error::LengthMismatch { .. } => ProtoltStatus::DimensionMismatch,
        Error::ClassOutOfRange { .. } => ProtoltStatus::ClassOutOfRange,
        Error::TooFewClasses { .. } | Error::EmptyClass { .. } => ProtoltStatus::TooFewClasses,
        Error::NonFinite { .. } => ProtoltStatus::NumericalError,
        Error::Io { .. } | Error::Format { .. } => ProtoltStatus::IoError,
        _ => ProtoltStatus::InvalidArgument,
    };
    record_error(error.to_string());
    status
}

fn invalid(message: &str) -> ProtoltStatus {
    record_error(message.to_string());
    ProtoltStatus::InvalidArgument
}

fn null_pointer() -> ProtoltStatus {
    record_error("null pointer argument".to_string());
    ProtoltStatus::NullPointer
}

/// Opaque prototype-bank handle.
pub struct ProtoltBank {
    inner: PrototypeBank,
}

unsafe fn slice_in<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

unsafe fn slice_out<'a, T>(ptr: *mut T, len: usize) -> Option<&'a mut [T]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(ptr, len))
    }
}

fn rows_from_flat(flat: &[f64], rows: usize, dim: usize) -> Option<Vec<Vec<f64>>> {
    if rows.checked_mul(dim)? != flat.len() {
        return None;
    }
    Some(flat.chunks_exact(dim).map(|c| c.to_vec()).collect())
}

unsafe fn labels_in(ptr: *const u32, len: usize) -> Option<Vec<usize>> {
    slice_in(ptr, len).map(|s| s.iter().map(|l| *l as usize).collect())
}

unsafe fn path_in<'a>(ptr: *const c_char) -> Result<&'a Path, ProtoltStatus> {
    if ptr.is_null() {
        return Err(null_pointer());
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            record_error("path is not valid UTF-8".to_string());
            Err(ProtoltStatus::Utf8Error)
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn protolt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent error on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn protolt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Builds a bank from `classes` anchor rows of `dim` values (row-major,
/// normalized on ingest) and per-class frequencies.
///
/// # Safety
/// `anchors` must hold `classes * dim` values, `frequencies` must hold
/// `classes` values, and `out_bank` must be a valid pointer. A returned
/// handle must be released with [`protolt_bank_free`].
#[no_mangle]
pub unsafe extern "C" fn protolt_bank_from_anchors(
    anchors: *const f64,
    classes: usize,
    dim: usize,
    frequencies: *const f64,
    momentum: f64,
    out_bank: *mut *mut ProtoltBank,
) -> ProtoltStatus {
    let Some(total) = classes.checked_mul(dim) else {
        return invalid("classes * dim overflows");
    };
    let (Some(anchor_values), Some(freq_values)) =
        (slice_in(anchors, total), slice_in(frequencies, classes))
    else {
        return null_pointer();
    };
    if out_bank.is_null() {
        return null_pointer();
    }
    let Some(rows) = rows_from_flat(anchor_values, classes, dim) else {
        return invalid("anchor buffer does not match classes * dim");
    };
    match PrototypeBank::from_anchors(&rows, freq_values, momentum) {
        Ok(inner) => {
            *out_bank = Box::into_raw(Box::new(ProtoltBank { inner }));
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Builds a bank with uniformly sampled prototypes.
///
/// # Safety
/// `frequencies` must hold `classes` values; `out_bank` must be valid.
#[no_mangle]
pub unsafe extern "C" fn protolt_bank_random(
    dim: usize,
    classes: usize,
    frequencies: *const f64,
    momentum: f64,
    seed: u64,
    out_bank: *mut *mut ProtoltBank,
) -> ProtoltStatus {
    let Some(freq_values) = slice_in(frequencies, classes) else {
        return null_pointer();
    };
    if out_bank.is_null() {
        return null_pointer();
    }
    match PrototypeBank::random(dim, classes, freq_values, momentum, seed) {
        Ok(inner) => {
            *out_bank = Box::into_raw(Box::new(ProtoltBank { inner }));
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Releases a bank handle. Passing NULL is a no-op.
///
/// # Safety
/// `bank` must be a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn protolt_bank_free(bank: *mut ProtoltBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// # Safety
/// `bank` and `out_classes` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn protolt_bank_classes(
    bank: *const ProtoltBank,
    out_classes: *mut usize,
) -> ProtoltStatus {
    let (Some(bank), false) = (bank.as_ref(), out_classes.is_null()) else {
        return null_pointer();
    };
    *out_classes = bank.inner.class_count();
    ProtoltStatus::Ok
}

/// # Safety
/// `bank` and `out_dim` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn protolt_bank_dim(
    bank: *const ProtoltBank,
    out_dim: *mut usize,
) -> ProtoltStatus {
    let (Some(bank), false) = (bank.as_ref(), out_dim.is_null()) else {
        return null_pointer();
    };
    *out_dim = bank.inner.dim();
    ProtoltStatus::Ok
}

/// Copies the prototype matrix (classes × dim, row-major) into `out`.
///
/// # Safety
/// `out` must hold `classes * dim` values.
#[no_mangle]
pub unsafe extern "C" fn protolt_bank_copy_prototypes(
    bank: *const ProtoltBank,
    out: *mut f64,
) -> ProtoltStatus {
    let Some(bank) = bank.as_ref() else {
        return null_pointer();
    };
    let total = bank.inner.class_count() * bank.inner.dim();
    let Some(buffer) = slice_out(out, total) else {
        return null_pointer();
    };
    for (chunk, row) in buffer
        .chunks_exact_mut(bank.inner.dim())
        .zip(bank.inner.prototypes().iter())
    {
        chunk.copy_from_slice(row.as_slice());
    }
    ProtoltStatus::Ok
}

/// One EMA step for class `class_id` with unit-normalized text and image
/// features of the bank's dimension.
///
/// # Safety
/// `z_text` and `z_image` must each hold `dim` values; `bank` must be a
/// live handle with no concurrent access.
#[no_mangle]
pub unsafe extern "C" fn protolt_bank_ema_update(
    bank: *mut ProtoltBank,
    class_id: usize,
    z_text: *const f64,
    z_image: *const f64,
) -> ProtoltStatus {
    let Some(bank) = bank.as_mut() else {
        return null_pointer();
    };
    let dim = bank.inner.dim();
    let (Some(text), Some(image)) = (slice_in(z_text, dim), slice_in(z_image, dim)) else {
        return null_pointer();
    };
    let text = match normalize(text) {
        Ok(v) => v,
        Err(e) => return status_from(e),
    };
    let image = match normalize(image) {
        Ok(v) => v,
        Err(e) => return status_from(e),
    };
    match bank.inner.ema_update(class_id, &text, &image) {
        Ok(()) => ProtoltStatus::Ok,
        Err(e) => status_from(e),
    }
}

/// Saves the bank as an embedding file plus JSON sidecar.
///
/// # Safety
/// Paths must be NUL-terminated UTF-8 strings; `bank` must be live.
#[no_mangle]
pub unsafe extern "C" fn protolt_bank_save(
    bank: *const ProtoltBank,
    prototypes_path: *const c_char,
    sidecar_path: *const c_char,
) -> ProtoltStatus {
    let Some(bank) = bank.as_ref() else {
        return null_pointer();
    };
    let (proto, sidecar) = match (path_in(prototypes_path), path_in(sidecar_path)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    match format::save_bank(&bank.inner, proto, sidecar) {
        Ok(()) => ProtoltStatus::Ok,
        Err(e) => status_from(e),
    }
}

/// Loads a bank saved by [`protolt_bank_save`].
///
/// # Safety
/// Paths must be NUL-terminated UTF-8 strings; `out_bank` must be valid.
#[no_mangle]
pub unsafe extern "C" fn protolt_bank_load(
    prototypes_path: *const c_char,
    sidecar_path: *const c_char,
    out_bank: *mut *mut ProtoltBank,
) -> ProtoltStatus {
    if out_bank.is_null() {
        return null_pointer();
    }
    let (proto, sidecar) = match (path_in(prototypes_path), path_in(sidecar_path)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    match format::load_bank(proto, sidecar) {
        Ok(inner) => {
            *out_bank = Box::into_raw(Box::new(ProtoltBank { inner }));
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

fn build_batch(
    images: &[f64],
    texts: &[f64],
    labels: &[usize],
    samples: usize,
    dim: usize,
) -> Result<LabeledBatch, Error> {
    let image_rows = FeatureMatrix::from_unnormalized(
        &rows_from_flat(images, samples, dim)
            .ok_or_else(|| Error::InvalidArgument("image buffer size mismatch".into()))?,
    )?;
    let text_rows = FeatureMatrix::from_unnormalized(
        &rows_from_flat(texts, samples, dim)
            .ok_or_else(|| Error::InvalidArgument("text buffer size mismatch".into()))?,
    )?;
    LabeledBatch::new(image_rows, text_rows, labels.to_vec())
}

/// Total matching loss (category term + λ · prototype term) over a batch
/// of `samples` image/text rows. Gradient buffers are optional: pass NULL
/// to skip them, otherwise each must hold `samples * dim` values.
///
/// # Safety
/// Buffers must match the documented sizes; `bank` must be live.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn protolt_total_loss(
    images: *const f64,
    texts: *const f64,
    samples: usize,
    dim: usize,
    labels: *const u32,
    bank: *const ProtoltBank,
    tau: f64,
    lambda: f64,
    out_value: *mut f64,
    out_grad_images: *mut f64,
    out_grad_texts: *mut f64,
) -> ProtoltStatus {
    let Some(bank) = bank.as_ref() else {
        return null_pointer();
    };
    let Some(total) = samples.checked_mul(dim) else {
        return invalid("samples * dim overflows");
    };
    let (Some(image_values), Some(text_values), Some(label_values)) = (
        slice_in(images, total),
        slice_in(texts, total),
        labels_in(labels, samples),
    ) else {
        return null_pointer();
    };
    if out_value.is_null() {
        return null_pointer();
    }
    let batch = match build_batch(image_values, text_values, &label_values, samples, dim) {
        Ok(b) => b,
        Err(e) => return status_from(e),
    };
    let cfg = LossConfig { tau, lambda };
    match total_loss(&batch, &bank.inner, &cfg) {
        Ok(result) => {
            *out_value = result.value;
            if let Some(buffer) = slice_out(out_grad_images, total) {
                for (chunk, row) in buffer.chunks_exact_mut(dim).zip(&result.grad_image) {
                    chunk.copy_from_slice(row);
                }
            }
            if let Some(buffer) = slice_out(out_grad_texts, total) {
                for (chunk, row) in buffer.chunks_exact_mut(dim).zip(&result.grad_text) {
                    chunk.copy_from_slice(row);
                }
            }
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Central finite-difference verification of the analytic loss gradients;
/// writes the maximum relative error.
///
/// # Safety
/// Buffer sizes as in [`protolt_total_loss`]; `out_max_error` must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn protolt_gradient_check(
    images: *const f64,
    texts: *const f64,
    samples: usize,
    dim: usize,
    labels: *const u32,
    bank: *const ProtoltBank,
    tau: f64,
    lambda: f64,
    step: f64,
    out_max_error: *mut f64,
) -> ProtoltStatus {
    let Some(bank) = bank.as_ref() else {
        return null_pointer();
    };
    let Some(total) = samples.checked_mul(dim) else {
        return invalid("samples * dim overflows");
    };
    let (Some(image_values), Some(text_values), Some(label_values)) = (
        slice_in(images, total),
        slice_in(texts, total),
        labels_in(labels, samples),
    ) else {
        return null_pointer();
    };
    if out_max_error.is_null() {
        return null_pointer();
    }
    let batch = match build_batch(image_values, text_values, &label_values, samples, dim) {
        Ok(b) => b,
        Err(e) => return status_from(e),
    };
    let cfg = LossConfig { tau, lambda };
    match check_gradients(&batch, &bank.inner, &cfg, step) {
        Ok(err) => {
            *out_max_error = err;
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

fn candidate_set(
    candidates: &[f64],
    count: usize,
    dim: usize,
    class_id: usize,
) -> Result<TextCandidateSet, Error> {
    let rows = rows_from_flat(candidates, count, dim)
        .ok_or_else(|| Error::InvalidArgument("candidate buffer size mismatch".into()))?;
    TextCandidateSet::new(FeatureMatrix::from_unnormalized(&rows)?, class_id)
}

/// Softmax weights over candidate-prototype similarities; `out_weights`
/// receives `count` values.
///
/// # Safety
/// `candidates` must hold `count * dim` values; `out_weights` `count`.
#[no_mangle]
pub unsafe extern "C" fn protolt_filter_weights(
    candidates: *const f64,
    count: usize,
    dim: usize,
    class_id: usize,
    bank: *const ProtoltBank,
    out_weights: *mut f64,
) -> ProtoltStatus {
    let Some(bank) = bank.as_ref() else {
        return null_pointer();
    };
    let Some(total) = count.checked_mul(dim) else {
        return invalid("count * dim overflows");
    };
    let (Some(values), Some(buffer)) = (slice_in(candidates, total), slice_out(out_weights, count))
    else {
        return null_pointer();
    };
    let set = match candidate_set(values, count, dim, class_id) {
        Ok(s) => s,
        Err(e) => return status_from(e),
    };
    match filter_weights(&set, &bank.inner) {
        Ok(weights) => {
            buffer.copy_from_slice(&weights);
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Reconstructs one unit text feature from the candidate set.
///
/// # Safety
/// `candidates` must hold `count * dim` values; `out_feature` `dim`.
#[no_mangle]
pub unsafe extern "C" fn protolt_filter_reconstruct(
    candidates: *const f64,
    count: usize,
    dim: usize,
    class_id: usize,
    bank: *const ProtoltBank,
    out_feature: *mut f64,
) -> ProtoltStatus {
    let Some(bank) = bank.as_ref() else {
        return null_pointer();
    };
    let Some(total) = count.checked_mul(dim) else {
        return invalid("count * dim overflows");
    };
    let (Some(values), Some(buffer)) = (slice_in(candidates, total), slice_out(out_feature, dim))
    else {
        return null_pointer();
    };
    let set = match candidate_set(values, count, dim, class_id) {
        Ok(s) => s,
        Err(e) => return status_from(e),
    };
    match reconstruct(&set, &bank.inner) {
        Ok(feature) => {
            buffer.copy_from_slice(feature.as_slice());
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Linear-head class probabilities for one feature.
///
/// # Safety
/// `weights` must hold `classes * dim`, `biases` and `out_probs` `classes`,
/// and `feature` `dim` values.
#[no_mangle]
pub unsafe extern "C" fn protolt_predict_linear(
    weights: *const f64,
    biases: *const f64,
    classes: usize,
    dim: usize,
    feature: *const f64,
    out_probs: *mut f64,
) -> ProtoltStatus {
    let Some(total) = classes.checked_mul(dim) else {
        return invalid("classes * dim overflows");
    };
    let (Some(weight_values), Some(bias_values), Some(feature_values), Some(buffer)) = (
        slice_in(weights, total),
        slice_in(biases, classes),
        slice_in(feature, dim),
        slice_out(out_probs, classes),
    ) else {
        return null_pointer();
    };
    let Some(weight_rows) = rows_from_flat(weight_values, classes, dim) else {
        return invalid("weight buffer size mismatch");
    };
    let head = match LinearHead::from_parts(weight_rows, bias_values.to_vec()) {
        Ok(h) => h,
        Err(e) => return status_from(e),
    };
    let z = match normalize(feature_values) {
        Ok(z) => z,
        Err(e) => return status_from(e),
    };
    match predict_linear(&head, &z) {
        Ok(probs) => {
            buffer.copy_from_slice(&probs);
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Prototype-head class probabilities for one feature of the bank's
/// dimension.
///
/// # Safety
/// `feature` must hold the bank dimension; `out_probs` the class count.
#[no_mangle]
pub unsafe extern "C" fn protolt_predict_prototype(
    bank: *const ProtoltBank,
    feature: *const f64,
    out_probs: *mut f64,
) -> ProtoltStatus {
    let Some(bank) = bank.as_ref() else {
        return null_pointer();
    };
    let (Some(feature_values), Some(buffer)) = (
        slice_in(feature, bank.inner.dim()),
        slice_out(out_probs, bank.inner.class_count()),
    ) else {
        return null_pointer();
    };
    let z = match normalize(feature_values) {
        Ok(z) => z,
        Err(e) => return status_from(e),
    };
    match predict_prototype(&bank.inner, &z) {
        Ok(probs) => {
            buffer.copy_from_slice(&probs);
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// α-fused class probabilities: α · prototype + (1 − α) · linear.
///
/// # Safety
/// Buffer sizes as in the two component predictors.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn protolt_predict_fused(
    weights: *const f64,
    biases: *const f64,
    classes: usize,
    dim: usize,
    alpha: f64,
    bank: *const ProtoltBank,
    feature: *const f64,
    out_probs: *mut f64,
) -> ProtoltStatus {
    let Some(bank) = bank.as_ref() else {
        return null_pointer();
    };
    let Some(total) = classes.checked_mul(dim) else {
        return invalid("classes * dim overflows");
    };
    let (Some(weight_values), Some(bias_values), Some(feature_values), Some(buffer)) = (
        slice_in(weights, total),
        slice_in(biases, classes),
        slice_in(feature, dim),
        slice_out(out_probs, classes),
    ) else {
        return null_pointer();
    };
    let Some(weight_rows) = rows_from_flat(weight_values, classes, dim) else {
        return invalid("weight buffer size mismatch");
    };
    let head = match LinearHead::from_parts(weight_rows, bias_values.to_vec()) {
        Ok(h) => h,
        Err(e) => return status_from(e),
    };
    let z = match normalize(feature_values) {
        Ok(z) => z,
        Err(e) => return status_from(e),
    };
    match predict_fused(&head, &bank.inner, &FusionConfig { alpha }, &z) {
        Ok(probs) => {
            buffer.copy_from_slice(&probs);
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Mean intra-class pairwise distance of `samples` feature rows.
///
/// # Safety
/// `features` must hold `samples * dim` values; `labels` `samples`.
#[no_mangle]
pub unsafe extern "C" fn protolt_alignment(
    features: *const f64,
    samples: usize,
    dim: usize,
    labels: *const u32,
    out_value: *mut f64,
) -> ProtoltStatus {
    let Some(total) = samples.checked_mul(dim) else {
        return invalid("samples * dim overflows");
    };
    let (Some(values), Some(label_values)) =
        (slice_in(features, total), labels_in(labels, samples))
    else {
        return null_pointer();
    };
    if out_value.is_null() {
        return null_pointer();
    }
    let Some(rows) = rows_from_flat(values, samples, dim) else {
        return invalid("feature buffer size mismatch");
    };
    let matrix = match FeatureMatrix::from_unnormalized(&rows) {
        Ok(m) => m,
        Err(e) => return status_from(e),
    };
    match alignment(&matrix, &label_values) {
        Ok(value) => {
            *out_value = value;
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Mean distance from each class center to its k nearest other centers.
///
/// # Safety
/// Buffer sizes as in [`protolt_alignment`].
#[no_mangle]
pub unsafe extern "C" fn protolt_uniformity(
    features: *const f64,
    samples: usize,
    dim: usize,
    labels: *const u32,
    k: usize,
    out_value: *mut f64,
) -> ProtoltStatus {
    let Some(total) = samples.checked_mul(dim) else {
        return invalid("samples * dim overflows");
    };
    let (Some(values), Some(label_values)) =
        (slice_in(features, total), labels_in(labels, samples))
    else {
        return null_pointer();
    };
    if out_value.is_null() {
        return null_pointer();
    }
    let Some(rows) = rows_from_flat(values, samples, dim) else {
        return invalid("feature buffer size mismatch");
    };
    let matrix = match FeatureMatrix::from_unnormalized(&rows) {
        Ok(m) => m,
        Err(e) => return status_from(e),
    };
    match neighborhood_uniformity(&matrix, &label_values, k) {
        Ok(value) => {
            *out_value = value;
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Overall and per-split accuracy. `out_accuracies` receives four values:
/// all, many, medium, few; splits with no samples are written as NaN.
///
/// # Safety
/// `predictions` and `labels` must hold `samples` values, `train_counts`
/// `classes` values, and `out_accuracies` four values.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn protolt_split_accuracy(
    predictions: *const u32,
    labels: *const u32,
    samples: usize,
    train_counts: *const u64,
    classes: usize,
    many_min: usize,
    few_max: usize,
    out_accuracies: *mut f64,
) -> ProtoltStatus {
    let (Some(prediction_values), Some(label_values), Some(count_values), Some(buffer)) = (
        labels_in(predictions, samples),
        labels_in(labels, samples),
        slice_in(train_counts, classes),
        slice_out(out_accuracies, 4),
    ) else {
        return null_pointer();
    };
    let counts: Vec<usize> = count_values.iter().map(|c| *c as usize).collect();
    let thresholds = SplitThresholds { many_min, few_max };
    match split_accuracy(&prediction_values, &label_values, &counts, &thresholds) {
        Ok(acc) => {
            buffer[0] = acc.all;
            buffer[1] = acc.many.unwrap_or(f64::NAN);
            buffer[2] = acc.medium.unwrap_or(f64::NAN);
            buffer[3] = acc.few.unwrap_or(f64::NAN);
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Temperature-scaled softmax of `count` scores.
///
/// # Safety
/// `scores` and `out_probs` must each hold `count` values.
#[no_mangle]
pub unsafe extern "C" fn protolt_softmax(
    scores: *const f64,
    count: usize,
    temperature: f64,
    out_probs: *mut f64,
) -> ProtoltStatus {
    let (Some(score_values), Some(buffer)) =
        (slice_in(scores, count), slice_out(out_probs, count))
    else {
        return null_pointer();
    };
    match softmax(score_values, temperature) {
        Ok(probs) => {
            buffer.copy_from_slice(&probs);
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Scales a vector to unit norm.
///
/// # Safety
/// `vector` and `out_unit` must each hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn protolt_normalize(
    vector: *const f64,
    dim: usize,
    out_unit: *mut f64,
) -> ProtoltStatus {
    let (Some(values), Some(buffer)) = (slice_in(vector, dim), slice_out(out_unit, dim)) else {
        return null_pointer();
    };
    match normalize(values) {
        Ok(unit) => {
            buffer.copy_from_slice(unit.as_slice());
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}

/// Deterministic uniform sphere samples; `out_rows` receives
/// `count * dim` values, row-major.
///
/// # Safety
/// `out_rows` must hold `count * dim` values.
#[no_mangle]
pub unsafe extern "C" fn protolt_sample_sphere(
    dim: usize,
    count: usize,
    seed: u64,
    out_rows: *mut f64,
) -> ProtoltStatus {
    let Some(total) = count.checked_mul(dim) else {
        return invalid("count * dim overflows");
    };
    let Some(buffer) = slice_out(out_rows, total) else {
        return null_pointer();
    };
    match sample_uniform_sphere(dim, count, seed) {
        Ok(matrix) => {
            for (chunk, row) in buffer.chunks_exact_mut(dim).zip(matrix.iter()) {
                chunk.copy_from_slice(row.as_slice());
            }
            ProtoltStatus::Ok
        }
        Err(e) => status_from(e),
    }
}
