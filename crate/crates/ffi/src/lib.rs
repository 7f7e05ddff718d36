//! C ABI over the zkzsl library.
//!
//! Every function returns a [`ZkzslStatus`]. On failure a description is
//! available from [`zkzsl_last_error`] on the same thread. Handles are
//! opaque, created by `*_load`, `*_synthesize` or `*_train` and released with
//! the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use zkzsl::datasets::{generate_synthetic, load_dataset, write_dataset, Dataset, SynthSpec};
use zkzsl::inference::infer;
use zkzsl::metrics::evaluate;
use zkzsl::model::ModelParams;
use zkzsl::training::{inference_seed, train, TrainConfig};
use zkzsl::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZkzslStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Load = 4,
    Config = 5,
    Training = 6,
    Inference = 7,
    EvaluationUnavailable = 8,
    Checkpoint = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Opaque dataset handle.
pub struct ZkzslDataset(Dataset);

/// Opaque trained-model handle.
pub struct ZkzslModel(ModelParams);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ZkzslDatasetShape {
    pub k_s: usize,
    pub k_t: usize,
    pub d: usize,
    pub feature_dim: usize,
    pub n_source: usize,
    pub n_target: usize,
    pub has_ground_truth: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ZkzslSynthSpec {
    pub k_s: usize,
    pub k_t: usize,
    pub d: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    pub separation: f64,
    pub within_std: f64,
    pub attribute_noise: f64,
    pub seed: u64,
}

/// Training settings. `hidden` points at `hidden_len` encoder widths; a null
/// pointer keeps the default widths.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ZkzslTrainConfig {
    pub h: usize,
    pub hidden: *const usize,
    pub hidden_len: usize,
    pub alpha: f64,
    pub beta: f64,
    pub drift_correction: bool,
    pub pretrain_lr: f64,
    pub train_lr: f64,
    pub weight_decay: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub pretrain_epochs: usize,
    pub train_epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZkzslMetrics {
    pub acc_s: f64,
    pub acc_u: f64,
    pub acc_h: f64,
    pub sr_s: f64,
    pub sr_u: f64,
    pub sr_h: f64,
    pub tau: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> ZkzslStatus {
    match e {
        Error::Io(_) => ZkzslStatus::Io,
        Error::Load { .. } | Error::Csv(_) => ZkzslStatus::Load,
        Error::Config(_) | Error::Dimension { .. } => ZkzslStatus::Config,
        Error::Divergence(_) | Error::NonFiniteGradient(_) | Error::DegenerateBatch(_) => ZkzslStatus::Training,
        Error::Inference(_) | Error::Clustering(_) | Error::UndefinedDirection(_) => ZkzslStatus::Inference,
        Error::EvaluationUnavailable(_) | Error::LabelsUnavailable(_) => ZkzslStatus::EvaluationUnavailable,
        Error::Checkpoint(_) | Error::Json(_) => ZkzslStatus::Checkpoint,
        _ => ZkzslStatus::InvalidArgument,
    }
}

struct Failure(ZkzslStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ZkzslStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ZkzslStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ZkzslStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            ZkzslStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ZkzslStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message describing the last failure on this thread; empty after success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn zkzsl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn zkzsl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn zkzsl_synth_spec_default() -> ZkzslSynthSpec {
    let s = SynthSpec::default();
    ZkzslSynthSpec {
        k_s: s.k_s,
        k_t: s.k_t,
        d: s.d,
        feature_dim: s.feature_dim,
        samples_per_class: s.samples_per_class,
        separation: s.separation,
        within_std: s.within_std,
        attribute_noise: s.attribute_noise,
        seed: s.seed,
    }
}

#[no_mangle]
pub extern "C" fn zkzsl_train_config_default() -> ZkzslTrainConfig {
    let c = TrainConfig::default();
    ZkzslTrainConfig {
        h: c.h,
        hidden: ptr::null(),
        hidden_len: 0,
        alpha: c.alpha,
        beta: c.beta,
        drift_correction: c.drift_correction,
        pretrain_lr: c.pretrain_lr,
        train_lr: c.train_lr,
        weight_decay: c.weight_decay,
        lr_decay_factor: c.lr_decay_factor,
        lr_decay_every: c.lr_decay_every,
        pretrain_epochs: c.pretrain_epochs,
        train_epochs: c.train_epochs,
        batch_size: c.batch_size,
        dropout: c.dropout,
        seed: c.seed,
    }
}

/// # Safety
/// `spec` must point to a valid spec and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn zkzsl_dataset_synthesize(spec: *const ZkzslSynthSpec, out: *mut *mut ZkzslDataset) -> ZkzslStatus {
    guard(|| {
        let s = in_arg(spec, "spec")?;
        let out = out_arg(out, "out")?;
        let ds = generate_synthetic(&SynthSpec {
            k_s: s.k_s,
            k_t: s.k_t,
            d: s.d,
            feature_dim: s.feature_dim,
            samples_per_class: s.samples_per_class,
            separation: s.separation,
            within_std: s.within_std,
            attribute_noise: s.attribute_noise,
            seed: s.seed,
        })?;
        *out = Box::into_raw(Box::new(ZkzslDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `dir` must be a NUL-terminated path and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn zkzsl_dataset_load(dir: *const c_char, out: *mut *mut ZkzslDataset) -> ZkzslStatus {
    guard(|| {
        let dir = path_arg(dir, "dir")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(ZkzslDataset(load_dataset(dir)?)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live dataset handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn zkzsl_dataset_save(ds: *const ZkzslDataset, dir: *const c_char) -> ZkzslStatus {
    guard(|| {
        let ds = in_arg(ds, "dataset")?;
        write_dataset(&ds.0, path_arg(dir, "dir")?)?;
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live dataset handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn zkzsl_dataset_shape(ds: *const ZkzslDataset, out: *mut ZkzslDatasetShape) -> ZkzslStatus {
    guard(|| {
        let ds = &in_arg(ds, "dataset")?.0;
        *out_arg(out, "out")? = ZkzslDatasetShape {
            k_s: ds.k_s,
            k_t: ds.k_t,
            d: ds.d,
            feature_dim: ds.feature_dim(),
            n_source: ds.source_features.rows(),
            n_target: ds.target_features.rows(),
            has_ground_truth: ds.target_labels.is_some() && ds.attributes_full.is_some(),
        };
        Ok(())
    })
}

/// Releases a dataset; null is ignored.
///
/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn zkzsl_dataset_free(ds: *mut ZkzslDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

unsafe fn train_config(c: &ZkzslTrainConfig) -> Result<TrainConfig, Failure> {
    let hidden = if c.hidden.is_null() {
        TrainConfig::default().hidden
    } else {
        std::slice::from_raw_parts(c.hidden, c.hidden_len).to_vec()
    };
    Ok(TrainConfig {
        h: c.h,
        hidden,
        alpha: c.alpha,
        beta: c.beta,
        drift_correction: c.drift_correction,
        pretrain_lr: c.pretrain_lr,
        train_lr: c.train_lr,
        weight_decay: c.weight_decay,
        lr_decay_factor: c.lr_decay_factor,
        lr_decay_every: c.lr_decay_every,
        pretrain_epochs: c.pretrain_epochs,
        train_epochs: c.train_epochs,
        batch_size: c.batch_size,
        dropout: c.dropout,
        seed: c.seed,
    })
}

/// Pretrains, initializes centroids and trains on `ds`.
///
/// # Safety
/// `ds` and `config` must be valid; `config.hidden`, when non-null, must
/// point to `config.hidden_len` widths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zkzsl_model_train(
    ds: *const ZkzslDataset,
    config: *const ZkzslTrainConfig,
    out: *mut *mut ZkzslModel,
) -> ZkzslStatus {
    guard(|| {
        let ds = &in_arg(ds, "dataset")?.0;
        let cfg = train_config(in_arg(config, "config")?)?;
        let out = out_arg(out, "out")?;
        let outcome = train(ds, &cfg)?;
        *out = Box::into_raw(Box::new(ZkzslModel(outcome.params)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated path and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn zkzsl_model_load(path: *const c_char, out: *mut *mut ZkzslModel) -> ZkzslStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(ZkzslModel(ModelParams::load(path)?)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn zkzsl_model_save(model: *const ZkzslModel, path: *const c_char) -> ZkzslStatus {
    guard(|| {
        let model = in_arg(model, "model")?;
        model.0.save(path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn zkzsl_model_free(model: *mut ZkzslModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs inference on the target set of `ds` and scores it. `seed` is the
/// training seed; the unseen K-means derives its own stream from it.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn zkzsl_model_evaluate(
    model: *const ZkzslModel,
    ds: *const ZkzslDataset,
    seed: u64,
    out: *mut ZkzslMetrics,
) -> ZkzslStatus {
    guard(|| {
        let model = &in_arg(model, "model")?.0;
        let ds = &in_arg(ds, "dataset")?.0;
        let out = out_arg(out, "out")?;
        let inf = infer(model, &ds.target_features, ds.attributes_full.as_ref(), inference_seed(seed))?;
        let r = evaluate(ds, &inf)?;
        *out = ZkzslMetrics {
            acc_s: r.acc_s,
            acc_u: r.acc_u,
            acc_h: r.acc_h,
            sr_s: r.sr_s,
            sr_u: r.sr_u,
            sr_h: r.sr_h,
            tau: r.tau,
        };
        Ok(())
    })
}

/// Writes the predicted class of every target sample into `labels`, which
/// must hold at least `n_target` entries (`len`).
///
/// # Safety
/// Handles must be live and `labels` must point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn zkzsl_model_predict(
    model: *const ZkzslModel,
    ds: *const ZkzslDataset,
    seed: u64,
    labels: *mut usize,
    len: usize,
) -> ZkzslStatus {
    guard(|| {
        let model = &in_arg(model, "model")?.0;
        let ds = &in_arg(ds, "dataset")?.0;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let n = ds.target_features.rows();
        if len < n {
            return Err(Failure(ZkzslStatus::BufferTooSmall, format!("need {n} entries, buffer holds {len}")));
        }
        let inf = infer(model, &ds.target_features, None, inference_seed(seed))?;
        std::slice::from_raw_parts_mut(labels, n).copy_from_slice(&inf.y_hat);
        Ok(())
    })
}
