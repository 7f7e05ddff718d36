//! Optimization: Adam, the learning-rate schedule, the per-batch objective
//! with its backward pass, pretraining and full training.

use std::collections::BTreeMap;
use std::path::Path;

use log::{debug, info};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::pseudo_labels;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::losses::{
    centroid_alignment_loss, cluster_assignment, clustering_regularization_given_target, self_reconstruction_loss,
    semantic_ranking_loss, structural_alignment_wrt, target_distribution, total_objective, AssignmentMatrix,
    LossParts, LossWeights, PseudoMeans,
};
use crate::model::{Architecture, ModelParams, CENTROIDS};
use crate::numkernel::{GradientBundle, Matrix, Mode, ParamAccess};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// Hyperparameters of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub h: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
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

impl Default for TrainConfig {
    /// Desk-scale defaults for small synthetic problems.
    fn default() -> Self {
        Self {
            h: 32,
            hidden: vec![64],
            alpha: 1.0,
            beta: 1.0,
            drift_correction: true,
            pretrain_lr: 1e-3,
            train_lr: 1e-4,
            weight_decay: 1e-5,
            lr_decay_factor: 0.1,
            lr_decay_every: 200,
            pretrain_epochs: 60,
            train_epochs: 400,
            batch_size: 64,
            dropout: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Full-width network for 2048-dimensional features.
    pub fn full_scale(h: usize) -> Self {
        Self {
            h,
            hidden: vec![512, 256, 256, 4096],
            batch_size: 256,
            ..Self::default()
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            drift_correction: self.drift_correction,
        }
    }

    pub fn architecture(&self, ds: &Dataset) -> Architecture {
        Architecture {
            feature_dim: ds.feature_dim(),
            hidden: self.hidden.clone(),
            h: self.h,
            d: ds.d,
            k_s: ds.k_s,
            k_t: ds.k_t,
            dropout: self.dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("pretrain_lr", self.pretrain_lr),
            ("train_lr", self.train_lr),
            ("lr_decay_factor", self.lr_decay_factor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.h == 0 {
            return bad("h must be positive".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be positive".into());
        }
        self.weights().validate()
    }
}

/// `base · factor^⌊epoch / every⌋`
pub fn learning_rate(base: f64, factor: f64, every: usize, epoch: usize) -> f64 {
    base * factor.powi((epoch / every) as i32)
}

/// First and second moment estimates per parameter block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: BTreeMap<String, Matrix>,
    pub v: BTreeMap<String, Matrix>,
}

/// One Adam update with bias correction and decoupled weight decay. Blocks
/// without a gradient entry are left untouched.
pub fn adam_step<P: ParamAccess>(
    params: &mut P,
    grads: &BTreeMap<String, Matrix>,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .param(name)
            .ok_or_else(|| Error::Config(format!("gradient for unknown block `{name}`")))?;
        if p.shape() != g.shape() {
            return Err(crate::error::dim_err(
                "adam_step",
                format!("block `{name}` is {:?}, gradient {:?}", p.shape(), g.shape()),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for (name, g) in grads {
        let (rows, cols) = g.shape();
        let m = state.m.entry(name.clone()).or_insert_with(|| Matrix::zeros(rows, cols));
        let v = state.v.entry(name.clone()).or_insert_with(|| Matrix::zeros(rows, cols));
        let p = params.param_mut(name).expect("checked above");
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = ADAM_BETA1 * *mv + (1.0 - ADAM_BETA1) * gv;
            *vv = ADAM_BETA2 * *vv + (1.0 - ADAM_BETA2) * gv * gv;
            let mhat = *mv / c1;
            let vhat = *vv / c2;
            *pv -= lr * mhat / (vhat.sqrt() + ADAM_EPS) + lr * weight_decay * *pv;
        }
    }
    Ok(())
}

/// A source mini-batch and a target mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x_s: Matrix,
    pub y_s: Vec<usize>,
    pub x_t: Matrix,
}

impl Batch {
    /// Independent uniform draws without replacement from source and target.
    pub fn sample(ds: &Dataset, size: usize, rng: &mut ChaCha8Rng) -> Self {
        let ns = size.min(ds.source_features.rows());
        let nt = size.min(ds.target_features.rows());
        let is = sample(rng, ds.source_features.rows(), ns).into_vec();
        let it = sample(rng, ds.target_features.rows(), nt).into_vec();
        Self {
            x_s: ds.source_features.select_rows(&is),
            y_s: is.iter().map(|&i| ds.source_labels[i]).collect(),
            x_t: ds.target_features.select_rows(&it),
        }
    }
}

/// Quantities held constant when differentiating one step: the sharpened
/// target distribution and the pseudo labels of the target batch.
#[derive(Debug, Clone)]
pub struct FrozenTargets {
    pub q: AssignmentMatrix,
    pub pseudo_labels: Vec<usize>,
}

impl FrozenTargets {
    pub fn from_embeddings(z_t: &Matrix, centroids: &Matrix) -> Result<Self> {
        let p = cluster_assignment(z_t, centroids)?;
        Ok(Self {
            q: target_distribution(&p),
            pseudo_labels: pseudo_labels(&p),
        })
    }
}

/// Raw (unweighted) values of the five components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub l_self: f64,
    pub l_reg: f64,
    pub l_cent: f64,
    pub l_a: f64,
    pub l_align: f64,
}

impl LossValues {
    fn add_scaled(&mut self, o: &LossValues, s: f64) {
        self.l_self += s * o.l_self;
        self.l_reg += s * o.l_reg;
        self.l_cent += s * o.l_cent;
        self.l_a += s * o.l_a;
        self.l_align += s * o.l_align;
    }
}

/// Objective value, its components and the gradient of every block it touches.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub total: f64,
    pub losses: LossValues,
    pub grads: BTreeMap<String, Matrix>,
}

fn pad_rows(top: Option<&Matrix>, bottom: Option<&Matrix>, n_top: usize, n_bottom: usize, cols: usize) -> Result<Matrix> {
    let t = top.cloned().unwrap_or_else(|| Matrix::zeros(n_top, cols));
    let b = bottom.cloned().unwrap_or_else(|| Matrix::zeros(n_bottom, cols));
    t.vstack(&b)
}

fn merge(into: &mut BTreeMap<String, Matrix>, from: BTreeMap<String, Matrix>) -> Result<()> {
    for (k, g) in from {
        match into.get_mut(&k) {
            Some(e) => e.axpy(1.0, &g)?,
            None => {
                into.insert(k, g);
            }
        }
    }
    Ok(())
}

struct Forward {
    z: Matrix,
    xhat: Matrix,
    a_hat: Matrix,
    caches: [crate::model::ForwardCache; 3],
}

fn forward_batch(params: &ModelParams, x: &Matrix, mut rng: Option<&mut ChaCha8Rng>) -> Result<Forward> {
    let (z, enc) = params.encode(x, Mode::Train, rng.as_deref_mut())?;
    let (xhat, dec) = params.decode(&z, Mode::Train, rng)?;
    let (a_hat, head) = params.predict_semantics(&z, Mode::Train)?;
    Ok(Forward { z, xhat, a_hat, caches: [enc, dec, head] })
}

/// Chains gradients w.r.t. `z`, `xhat` and `a_hat` of the stacked batch back
/// through the three networks.
fn backward_batch(
    params: &ModelParams,
    fw: &Forward,
    dz: &Matrix,
    dxhat: &Matrix,
    da_hat: &Matrix,
) -> Result<BTreeMap<String, Matrix>> {
    let [enc, dec, head] = &fw.caches;
    let mut grads = BTreeMap::new();
    let (dz_dec, g) = params.backward(dec, dxhat)?;
    merge(&mut grads, g)?;
    let (dz_head, g) = params.backward(head, da_hat)?;
    merge(&mut grads, g)?;
    let mut dz_total = dz.clone();
    dz_total.axpy(1.0, &dz_dec)?;
    dz_total.axpy(1.0, &dz_head)?;
    let (_, g) = params.backward(enc, &dz_total)?;
    merge(&mut grads, g)?;
    Ok(grads)
}

/// `L_self + α·L_a` on one batch.
pub fn pretrain_objective(
    params: &ModelParams,
    batch: &Batch,
    attributes_seen: &Matrix,
    alpha: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(StepResult, [crate::model::ForwardCache; 3])> {
    let (ns, nt) = (batch.x_s.rows(), batch.x_t.rows());
    let x = batch.x_s.vstack(&batch.x_t)?;
    let fw = forward_batch(params, &x, rng)?;
    let feat = x.cols();
    let xhat_s = fw.xhat.slice_rows(0, ns);
    let xhat_t = fw.xhat.slice_rows(ns, ns + nt);
    let rec = self_reconstruction_loss(&batch.x_s, &xhat_s, &batch.x_t, &xhat_t)?;
    let a_s = fw.a_hat.slice_rows(0, ns);
    let sem = semantic_ranking_loss(&a_s, &batch.y_s, attributes_seen)?;

    let dxhat = rec.grads["xhat_s"].vstack(&rec.grads["xhat_t"])?;
    let da = pad_rows(Some(&sem.grads["a_hat"].scale(alpha)), None, ns, nt, fw.a_hat.cols())?;
    let dz = Matrix::zeros(ns + nt, params.arch.h);
    debug_assert_eq!(dxhat.shape(), (ns + nt, feat));
    let grads = backward_batch(params, &fw, &dz, &dxhat, &da)?;
    let losses = LossValues {
        l_self: rec.value,
        l_a: sem.value,
        ..LossValues::default()
    };
    let total = rec.value + alpha * sem.value;
    let Forward { caches, .. } = fw;
    Ok((StepResult { total, losses, grads }, caches))
}

/// The full objective on one batch. When `targets` is `None` they are
/// computed from this pass's target embeddings and then held fixed.
pub fn full_objective(
    params: &ModelParams,
    batch: &Batch,
    attributes_seen: &Matrix,
    weights: &LossWeights,
    targets: Option<&FrozenTargets>,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(StepResult, [crate::model::ForwardCache; 3])> {
    weights.validate()?;
    let (ns, nt) = (batch.x_s.rows(), batch.x_t.rows());
    let n = ns + nt;
    let k_s = params.arch.k_s;
    let h = params.arch.h;
    let d = params.arch.d;
    let x = batch.x_s.vstack(&batch.x_t)?;
    let fw = forward_batch(params, &x, rng)?;
    let mu = params.centroids();
    let z_s = fw.z.slice_rows(0, ns);
    let z_t = fw.z.slice_rows(ns, n);
    let a_s = fw.a_hat.slice_rows(0, ns);
    let a_t = fw.a_hat.slice_rows(ns, n);
    let computed;
    let targets = match targets {
        Some(t) => t,
        None => {
            computed = FrozenTargets::from_embeddings(&z_t, mu)?;
            &computed
        }
    };
    let (sem_mu, sem_cache) = params.predict_semantics(mu, Mode::Eval)?;

    let rec = self_reconstruction_loss(&batch.x_s, &fw.xhat.slice_rows(0, ns), &batch.x_t, &fw.xhat.slice_rows(ns, n))?;
    let rec = GradientBundle::new(rec.value).with("xhat", rec.grads["xhat_s"].vstack(&rec.grads["xhat_t"])?);

    let reg = clustering_regularization_given_target(&z_t, mu, &targets.q)?;
    let reg = GradientBundle::new(reg.value)
        .with("z", pad_rows(None, Some(&reg.grads["z"]), ns, nt, h)?)
        .with(CENTROIDS, reg.grads["centroids"].clone());

    let pm = if weights.drift_correction {
        Some(PseudoMeans::from_labels(&z_t, &targets.pseudo_labels, k_s)?)
    } else {
        None
    };
    let cent = centroid_alignment_loss(&z_s, &batch.y_s, mu, k_s, pm.as_ref(), weights.drift_correction)?;
    let dz_t_drift = match (&pm, cent.bundle.get("pseudo_means")) {
        (Some(pm), Some(g)) => Some(pm.backward(&targets.pseudo_labels, g, nt)),
        _ => None,
    };
    let cent_bundle = GradientBundle::new(cent.bundle.value)
        .with("z", pad_rows(Some(&cent.bundle.grads["z_s"]), dz_t_drift.as_ref(), ns, nt, h)?)
        .with(CENTROIDS, cent.bundle.grads["centroids"].clone());

    let sem = semantic_ranking_loss(&a_s, &batch.y_s, attributes_seen)?;
    let sem = GradientBundle::new(sem.value).with("a_hat", pad_rows(Some(&sem.grads["a_hat"]), None, ns, nt, d)?);

    let align = structural_alignment_wrt(&z_t, mu, &a_t, &sem_mu)?;
    let align = GradientBundle::new(align.value)
        .with("z", pad_rows(None, Some(&align.grads["z"]), ns, nt, h)?)
        .with("a_hat", pad_rows(None, Some(&align.grads["a_hat"]), ns, nt, d)?)
        .with(CENTROIDS, align.grads["centroids"].clone())
        .with("semantic_centroids", align.grads["semantic_centroids"].clone());

    let losses = LossValues {
        l_self: rec.value,
        l_reg: reg.value,
        l_cent: cent_bundle.value,
        l_a: sem.value,
        l_align: align.value,
    };
    let parts = LossParts {
        self_reconstruction: Some(rec),
        regularization: Some(reg),
        centroid_alignment: Some(cent_bundle),
        semantic: Some(sem),
        structural: Some(align),
    };
    let total = total_objective(&parts, weights)?;
    let zeros = |r, c| Matrix::zeros(r, c);
    let dz = total.get("z").cloned().unwrap_or_else(|| zeros(n, h));
    let dxhat = total.get("xhat").cloned().unwrap_or_else(|| zeros(n, x.cols()));
    let da = total.get("a_hat").cloned().unwrap_or_else(|| zeros(n, d));
    let mut grads = backward_batch(params, &fw, &dz, &dxhat, &da)?;

    let mut dmu = total.get(CENTROIDS).cloned().unwrap_or_else(|| zeros(mu.rows(), h));
    if let Some(ds) = total.get("semantic_centroids") {
        let (dmu_sem, g) = params.backward(&sem_cache, ds)?;
        dmu.axpy(1.0, &dmu_sem)?;
        merge(&mut grads, g)?;
    }
    grads.insert(CENTROIDS.to_string(), dmu);
    let Forward { caches, .. } = fw;
    Ok((StepResult { total: total.value, losses, grads }, caches))
}

/// One CSV row per completed epoch: mean raw losses over the epoch's steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_self: f64,
    pub l_reg: f64,
    pub l_cent: f64,
    pub l_a: f64,
    pub l_align: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "l_self", "l_reg", "l_cent", "l_a", "l_align", "lr"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.l_self.to_string(),
                r.l_reg.to_string(),
                r.l_cent.to_string(),
                r.l_a.to_string(),
                r.l_align.to_string(),
                r.lr.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Steps per epoch: enough batches to cover the target set once.
pub fn steps_per_epoch(ds: &Dataset, batch_size: usize) -> usize {
    ds.target_features.rows().div_ceil(batch_size).max(1)
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Seed of the K-means run inside inference for a given global seed.
pub fn inference_seed(seed: u64) -> u64 {
    derive_seed(seed, 4)
}

fn check_loss(total: f64, stage: &str, epoch: usize) -> Result<()> {
    if !total.is_finite() || total > DIVERGENCE_LIMIT {
        return Err(Error::Divergence(format!("{stage} loss {total} at epoch {epoch}")));
    }
    Ok(())
}

fn record(epoch: usize, sum: &LossValues, steps: usize, lr: f64) -> EpochRecord {
    let s = 1.0 / steps as f64;
    EpochRecord {
        epoch,
        l_self: sum.l_self * s,
        l_reg: sum.l_reg * s,
        l_cent: sum.l_cent * s,
        l_a: sum.l_a * s,
        l_align: sum.l_align * s,
        lr,
    }
}

fn check_dataset(ds: &Dataset) -> Result<()> {
    if ds.source_features.rows() < 2 || ds.target_features.rows() < 2 {
        return Err(Error::DegenerateBatch(
            "training needs at least 2 source and 2 target samples".into(),
        ));
    }
    Ok(())
}

/// Fresh parameters trained on `L_self + α·L_a`.
pub fn pretrain(ds: &Dataset, config: &TrainConfig) -> Result<(ModelParams, TrainTrace)> {
    config.validate()?;
    check_dataset(ds)?;
    let mut params = ModelParams::new(config.architecture(ds), derive_seed(config.seed, 1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2));
    let mut state = AdamState::default();
    let mut trace = TrainTrace::default();
    let steps = steps_per_epoch(ds, config.batch_size);
    for epoch in 0..config.pretrain_epochs {
        let lr = learning_rate(config.pretrain_lr, config.lr_decay_factor, config.lr_decay_every, epoch);
        let mut sum = LossValues::default();
        for _ in 0..steps {
            let batch = Batch::sample(ds, config.batch_size, &mut rng);
            let (step, caches) = pretrain_objective(&params, &batch, &ds.attributes_seen, config.alpha, Some(&mut rng))?;
            check_loss(step.total, "pretraining", epoch)?;
            for c in &caches {
                params.commit_running_stats(c);
            }
            adam_step(&mut params, &step.grads, &mut state, lr, config.weight_decay)?;
            sum.add_scaled(&step.losses, 1.0);
        }
        let rec = record(epoch, &sum, steps, lr);
        debug!("pretrain epoch {epoch}: l_self {:.5} l_a {:.5}", rec.l_self, rec.l_a);
        trace.records.push(rec);
    }
    if let Some(last) = trace.records.last() {
        info!("pretraining done: l_self {:.5}, l_a {:.5}", last.l_self, last.l_a);
    }
    Ok((params, trace))
}

/// Sets the centroids from K-means on eval-mode embeddings of source and target.
pub fn initialize_centroids(params: &mut ModelParams, ds: &Dataset, seed: u64) -> Result<()> {
    let zs = params.embed(&ds.source_features)?;
    let zt = params.embed(&ds.target_features)?;
    params.init_centroids(&zs, &ds.source_labels, &zt, derive_seed(seed, 3))
}

/// Called after every completed epoch of [`fit_with`].
pub type EpochHook<'a> = dyn FnMut(&EpochRecord, &ModelParams) -> Result<()> + 'a;

/// Full-objective training starting from `params`.
pub fn fit(ds: &Dataset, config: &TrainConfig, params: ModelParams) -> Result<(ModelParams, TrainTrace)> {
    fit_with(ds, config, params, &mut |_, _| Ok(()))
}

pub fn fit_with(
    ds: &Dataset,
    config: &TrainConfig,
    mut params: ModelParams,
    hook: &mut EpochHook<'_>,
) -> Result<(ModelParams, TrainTrace)> {
    config.validate()?;
    check_dataset(ds)?;
    params.check_shapes()?;
    let weights = config.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 5));
    let mut state = AdamState::default();
    let mut trace = TrainTrace::default();
    let steps = steps_per_epoch(ds, config.batch_size);
    for epoch in 0..config.train_epochs {
        let lr = learning_rate(config.train_lr, config.lr_decay_factor, config.lr_decay_every, epoch);
        let mut sum = LossValues::default();
        for _ in 0..steps {
            let batch = Batch::sample(ds, config.batch_size, &mut rng);
            let (step, caches) = full_objective(&params, &batch, &ds.attributes_seen, &weights, None, Some(&mut rng))?;
            check_loss(step.total, "training", epoch)?;
            for c in &caches {
                params.commit_running_stats(c);
            }
            adam_step(&mut params, &step.grads, &mut state, lr, config.weight_decay)?;
            sum.add_scaled(&step.losses, 1.0);
        }
        let rec = record(epoch, &sum, steps, lr);
        debug!(
            "epoch {epoch}: self {:.4} reg {:.4} cent {:.4} a {:.4} align {:.4}",
            rec.l_self, rec.l_reg, rec.l_cent, rec.l_a, rec.l_align
        );
        hook(&rec, &params)?;
        trace.records.push(rec);
    }
    Ok((params, trace))
}

/// Everything produced by [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub pretrain_trace: TrainTrace,
    pub trace: TrainTrace,
}

/// Pretraining, centroid initialization and full training.
pub fn train(ds: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(ds, config, &mut |_, _| Ok(()))
}

pub fn train_with(ds: &Dataset, config: &TrainConfig, hook: &mut EpochHook<'_>) -> Result<TrainOutcome> {
    let (mut params, pretrain_trace) = pretrain(ds, config)?;
    initialize_centroids(&mut params, ds, config.seed)?;
    let (params, trace) = fit_with(ds, config, params, hook)?;
    Ok(TrainOutcome { params, pretrain_trace, trace })
}
