use std::ffi::{CStr, CString};
use std::ptr;

use zkzsl_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(zkzsl_last_error()) }.to_string_lossy().into_owned()
}

fn quick_config(hidden: &[usize]) -> ZkzslTrainConfig {
    ZkzslTrainConfig {
        h: 4,
        hidden: hidden.as_ptr(),
        hidden_len: hidden.len(),
        pretrain_epochs: 3,
        train_epochs: 3,
        batch_size: 16,
        ..zkzsl_train_config_default()
    }
}

fn small_dataset() -> *mut ZkzslDataset {
    let spec = ZkzslSynthSpec { samples_per_class: 12, feature_dim: 8, ..zkzsl_synth_spec_default() };
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { zkzsl_dataset_synthesize(&spec, &mut ds) }, ZkzslStatus::Ok);
    ds
}

#[test]
fn train_save_load_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset();
    let mut shape = ZkzslDatasetShape { k_s: 0, k_t: 0, d: 0, feature_dim: 0, n_source: 0, n_target: 0, has_ground_truth: false };
    unsafe {
        assert_eq!(zkzsl_dataset_shape(ds, &mut shape), ZkzslStatus::Ok);
        assert_eq!((shape.k_s, shape.k_t, shape.n_target), (3, 5, 60));
        assert!(shape.has_ground_truth);

        let hidden = [8usize];
        let cfg = quick_config(&hidden);
        let mut model = ptr::null_mut();
        assert_eq!(zkzsl_model_train(ds, &cfg, &mut model), ZkzslStatus::Ok, "{}", last_error());
        assert_eq!(last_error(), "");

        let mut m = ZkzslMetrics::default();
        assert_eq!(zkzsl_model_evaluate(model, ds, cfg.seed, &mut m), ZkzslStatus::Ok, "{}", last_error());
        for v in [m.acc_s, m.acc_u, m.acc_h, m.sr_s, m.sr_u, m.sr_h] {
            assert!((0.0..=1.0).contains(&v));
        }

        let path = CString::new(dir.path().join("model.json").to_str().unwrap()).unwrap();
        assert_eq!(zkzsl_model_save(model, path.as_ptr()), ZkzslStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(zkzsl_model_load(path.as_ptr(), &mut loaded), ZkzslStatus::Ok);
        let mut m2 = ZkzslMetrics::default();
        assert_eq!(zkzsl_model_evaluate(loaded, ds, cfg.seed, &mut m2), ZkzslStatus::Ok);
        assert_eq!(m, m2);

        let mut labels = vec![usize::MAX; shape.n_target];
        assert_eq!(zkzsl_model_predict(loaded, ds, cfg.seed, labels.as_mut_ptr(), labels.len()), ZkzslStatus::Ok);
        assert!(labels.iter().all(|&l| l < shape.k_t));
        assert_eq!(
            zkzsl_model_predict(loaded, ds, cfg.seed, labels.as_mut_ptr(), 3),
            ZkzslStatus::BufferTooSmall
        );

        zkzsl_model_free(model);
        zkzsl_model_free(loaded);
        zkzsl_dataset_free(ds);
    }
}

#[test]
fn dataset_round_trips_through_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(zkzsl_dataset_save(ds, path.as_ptr()), ZkzslStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(zkzsl_dataset_load(path.as_ptr(), &mut back), ZkzslStatus::Ok);
        let mut shape = std::mem::zeroed::<ZkzslDatasetShape>();
        zkzsl_dataset_shape(back, &mut shape);
        assert_eq!(shape.n_source, 36);
        zkzsl_dataset_free(back);
        zkzsl_dataset_free(ds);
    }
}

#[test]
fn errors_carry_a_status_and_message() {
    unsafe {
        let mut ds = ptr::null_mut();
        let missing = CString::new("/nonexistent/zkzsl").unwrap();
        assert_eq!(zkzsl_dataset_load(missing.as_ptr(), &mut ds), ZkzslStatus::Load);
        assert!(last_error().contains("manifest.json"), "{}", last_error());
        assert!(ds.is_null());

        assert_eq!(zkzsl_dataset_load(ptr::null(), &mut ds), ZkzslStatus::NullArgument);
        assert!(last_error().contains("dir"));

        let bad = ZkzslSynthSpec { k_s: 7, ..zkzsl_synth_spec_default() };
        assert_eq!(zkzsl_dataset_synthesize(&bad, &mut ds), ZkzslStatus::Config);

        let ds = small_dataset();
        let hidden = [8usize];
        let cfg = ZkzslTrainConfig { batch_size: 0, ..quick_config(&hidden) };
        let mut model = ptr::null_mut();
        assert_eq!(zkzsl_model_train(ds, &cfg, &mut model), ZkzslStatus::Config);
        assert!(model.is_null());
        zkzsl_dataset_free(ds);
        zkzsl_dataset_free(ptr::null_mut());
        zkzsl_model_free(ptr::null_mut());
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(zkzsl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
