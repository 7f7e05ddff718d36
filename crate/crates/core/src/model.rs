//! Encoder, decoder, semantic head and learnable centroids.
//!
//! Every trainable matrix lives in one name-keyed map (`encoder.0.weight`,
//! `head.0.gamma`, `centroids`, ...), which the optimizer, checkpoints and the
//! gradient oracle all address through [`ParamAccess`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans_fit, KMEANS_MAX_ITER, KMEANS_TOL};
use crate::error::{dim_err, Error, Result};
use crate::numkernel::{
    affine_backward, affine_forward, batchnorm_backward, batchnorm_forward_pure, dot, dropout_apply, leaky_relu,
    leaky_relu_backward, sq_dist, BatchNormCache, Matrix, Mode, ParamAccess, RunningStats, LEAKY_SLOPE,
};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CENTROIDS: &str = "centroids";

/// Layer widths and problem sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub feature_dim: usize,
    /// Encoder hidden widths, input side first. The decoder mirrors them.
    pub hidden: Vec<usize>,
    /// Embedding width.
    pub h: usize,
    /// Attribute dimension.
    pub d: usize,
    pub k_s: usize,
    pub k_t: usize,
    /// Input dropout rate of encoder and decoder.
    pub dropout: f64,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let widths = [self.feature_dim, self.h, self.d];
        if widths.contains(&0) || self.hidden.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive: {self:?}")));
        }
        if self.k_s == 0 || self.k_s >= self.k_t {
            return Err(Error::Config(format!("need 0 < k_s < k_t, got {} and {}", self.k_s, self.k_t)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn layers(&self, net: Net) -> Vec<LayerSpec> {
        let chain = |widths: Vec<usize>| -> Vec<LayerSpec> {
            let last = widths.len() - 2;
            widths
                .windows(2)
                .enumerate()
                .map(|(i, w)| LayerSpec {
                    input: w[0],
                    output: w[1],
                    norm: i < last,
                    activate: i < last,
                })
                .collect()
        };
        match net {
            Net::Encoder => {
                let mut w = vec![self.feature_dim];
                w.extend(&self.hidden);
                w.push(self.h);
                chain(w)
            }
            Net::Decoder => {
                let mut w = vec![self.h];
                w.extend(self.hidden.iter().rev());
                w.push(self.feature_dim);
                chain(w)
            }
            Net::Head => vec![LayerSpec {
                input: self.h,
                output: self.d,
                norm: true,
                activate: false,
            }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Net {
    Encoder,
    Decoder,
    Head,
}

impl Net {
    pub const ALL: [Net; 3] = [Net::Encoder, Net::Decoder, Net::Head];

    fn has_input_dropout(self) -> bool {
        !matches!(self, Net::Head)
    }
}

impl fmt::Display for Net {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Net::Encoder => "encoder",
            Net::Decoder => "decoder",
            Net::Head => "head",
        })
    }
}

/// One affine layer, optionally followed by batch norm and Leaky ReLU.
/// Normalized layers carry no bias; batch norm's shift takes its place.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub norm: bool,
    pub activate: bool,
}

fn block(net: Net, layer: usize, part: &str) -> String {
    format!("{net}.{layer}.{part}")
}

fn stats_key(net: Net, layer: usize) -> String {
    format!("{net}.{layer}")
}

/// Values kept from one layer's forward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Matrix,
    pub bn: Option<BatchNormCache>,
    /// Activation input, present when the layer has one.
    pub pre_activation: Option<Matrix>,
}

/// Per-layer record of a forward pass through one network.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub net: Net,
    pub mode: Mode,
    pub dropout_mask: Option<Matrix>,
    pub layers: Vec<LayerCache>,
}

/// All model state: trainable blocks plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    pub blocks: BTreeMap<String, Matrix>,
    pub running: BTreeMap<String, RunningStats>,
}

impl ParamAccess for ModelParams {
    fn param_names(&self) -> Vec<String> {
        self.blocks.keys().cloned().collect()
    }
    fn param(&self, name: &str) -> Option<&Matrix> {
        self.blocks.get(name)
    }
    fn param_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.blocks.get_mut(name)
    }
}

impl ModelParams {
    /// Fan-in scaled uniform weights, zero biases, identity batch norm and
    /// random unit-norm centroids.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = BTreeMap::new();
        let mut running = BTreeMap::new();
        for net in Net::ALL {
            for (i, spec) in arch.layers(net).iter().enumerate() {
                let bound = 1.0 / (spec.input as f64).sqrt();
                let mut w = Matrix::zeros(spec.input, spec.output);
                w.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
                blocks.insert(block(net, i, "weight"), w);
                if spec.norm {
                    blocks.insert(block(net, i, "gamma"), Matrix::filled(1, spec.output, 1.0));
                    blocks.insert(block(net, i, "beta"), Matrix::zeros(1, spec.output));
                    running.insert(stats_key(net, i), RunningStats::new(spec.output));
                } else {
                    blocks.insert(block(net, i, "bias"), Matrix::zeros(1, spec.output));
                }
            }
        }
        let mut centroids = Matrix::zeros(arch.k_t, arch.h);
        for r in 0..arch.k_t {
            let row = centroids.row_mut(r);
            row.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
            let n = dot(row, row).sqrt().max(f64::MIN_POSITIVE);
            row.iter_mut().for_each(|v| *v /= n);
        }
        blocks.insert(CENTROIDS.to_string(), centroids);
        Ok(Self { arch, blocks, running })
    }

    pub fn centroids(&self) -> &Matrix {
        &self.blocks[CENTROIDS]
    }

    fn get(&self, name: &str) -> Result<&Matrix> {
        self.blocks
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter block `{name}`")))
    }

    /// Runs `x` through `net`. Train mode uses batch statistics and, when `rng`
    /// is given, input dropout. Running statistics are not touched; see
    /// [`ModelParams::commit_running_stats`].
    pub fn forward(
        &self,
        net: Net,
        x: &Matrix,
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Matrix, ForwardCache)> {
        let specs = self.arch.layers(net);
        if x.cols() != specs[0].input {
            return Err(dim_err(
                "forward",
                format!("{net} expects {} input columns, got {}", specs[0].input, x.cols()),
            ));
        }
        let mut cur = x.clone();
        let mut dropout_mask = None;
        if let (true, Some(rng)) = (net.has_input_dropout() && mode == Mode::Train, rng) {
            let (out, mask) = dropout_apply(&cur, self.arch.dropout, mode, rng)?;
            cur = out;
            dropout_mask = mask;
        }
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let input = cur;
            let weight = self.get(&block(net, i, "weight"))?;
            let mut y = if spec.norm {
                input.matmul(weight)?
            } else {
                affine_forward(&input, weight, self.get(&block(net, i, "bias"))?)?
            };
            let mut bn = None;
            if spec.norm {
                let stats = self
                    .running
                    .get(&stats_key(net, i))
                    .ok_or_else(|| Error::Checkpoint(format!("missing running stats for {net}.{i}")))?;
                let (out, cache) = batchnorm_forward_pure(
                    &y,
                    self.get(&block(net, i, "gamma"))?,
                    self.get(&block(net, i, "beta"))?,
                    stats,
                    mode,
                )?;
                y = out;
                bn = Some(cache);
            }
            let mut pre_activation = None;
            if spec.activate {
                let act = leaky_relu(&y, LEAKY_SLOPE);
                pre_activation = Some(y);
                y = act;
            }
            layers.push(LayerCache { input, bn, pre_activation });
            cur = y;
        }
        if !cur.is_finite() {
            return Err(Error::Divergence(format!("{net} produced non-finite output")));
        }
        Ok((cur, ForwardCache { net, mode, dropout_mask, layers }))
    }

    /// Back-propagates `dy` through the pass recorded in `cache`, returning
    /// the input gradient and the gradients of that network's blocks.
    pub fn backward(&self, cache: &ForwardCache, dy: &Matrix) -> Result<(Matrix, BTreeMap<String, Matrix>)> {
        let net = cache.net;
        let mut grads = BTreeMap::new();
        let mut g = dy.clone();
        for (i, lc) in cache.layers.iter().enumerate().rev() {
            if let Some(pre) = &lc.pre_activation {
                g = leaky_relu_backward(pre, &g, LEAKY_SLOPE)?;
            }
            if let Some(bn) = &lc.bn {
                let gamma = self.get(&block(net, i, "gamma"))?;
                let (dx, dgamma, dbeta) = batchnorm_backward(bn, gamma, &g)?;
                grads.insert(block(net, i, "gamma"), dgamma);
                grads.insert(block(net, i, "beta"), dbeta);
                g = dx;
            }
            let (dx, dw, db) = affine_backward(&lc.input, self.get(&block(net, i, "weight"))?, &g)?;
            grads.insert(block(net, i, "weight"), dw);
            if lc.bn.is_none() {
                grads.insert(block(net, i, "bias"), db);
            }
            g = dx;
        }
        if let Some(mask) = &cache.dropout_mask {
            g = g.zip_map(mask, |a, m| a * m)?;
        }
        Ok((g, grads))
    }

    /// Folds the batch statistics of a train-mode pass into the running statistics.
    pub fn commit_running_stats(&mut self, cache: &ForwardCache) {
        if cache.mode != Mode::Train {
            return;
        }
        for (i, lc) in cache.layers.iter().enumerate() {
            if let Some(bn) = &lc.bn {
                if let Some(stats) = self.running.get_mut(&stats_key(cache.net, i)) {
                    stats.update(&bn.batch_mean, &bn.batch_var, lc.input.rows());
                }
            }
        }
    }

    pub fn encode(&self, x: &Matrix, mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Result<(Matrix, ForwardCache)> {
        self.forward(Net::Encoder, x, mode, rng)
    }

    pub fn decode(&self, z: &Matrix, mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Result<(Matrix, ForwardCache)> {
        self.forward(Net::Decoder, z, mode, rng)
    }

    pub fn predict_semantics(&self, z: &Matrix, mode: Mode) -> Result<(Matrix, ForwardCache)> {
        self.forward(Net::Head, z, mode, None)
    }

    /// Deterministic embeddings.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.encode(x, Mode::Eval, None)?.0)
    }

    /// `f(μ_k)` for every centroid, in eval mode.
    pub fn semantic_centroids(&self) -> Result<Matrix> {
        Ok(self.predict_semantics(self.centroids(), Mode::Eval)?.0)
    }

    /// Replaces the centroids with K-means centers of the stacked embeddings
    /// `z_source ∪ z_target`, reordered so that center `k < k_s` is the one
    /// greedily matched to the mean embedding of source class `k`.
    pub fn init_centroids(&mut self, z_source: &Matrix, y_source: &[usize], z_target: &Matrix, seed: u64) -> Result<()> {
        let (k_s, k_t, h) = (self.arch.k_s, self.arch.k_t, self.arch.h);
        if z_source.cols() != h || z_target.cols() != h {
            return Err(dim_err(
                "init_centroids",
                format!("embeddings {:?} / {:?} for h={h}", z_source.shape(), z_target.shape()),
            ));
        }
        if y_source.len() != z_source.rows() {
            return Err(dim_err(
                "init_centroids",
                format!("{} labels for {} source rows", y_source.len(), z_source.rows()),
            ));
        }
        let all = z_source.vstack(z_target)?;
        if all.rows() < k_t {
            return Err(Error::Clustering(format!(
                "cannot initialize {k_t} centroids from {} embeddings",
                all.rows()
            )));
        }
        let km = kmeans_fit(&all, k_t, seed, KMEANS_MAX_ITER, KMEANS_TOL)?;

        let mut means = Matrix::zeros(k_s, h);
        let mut counts = vec![0usize; k_s];
        for (i, &y) in y_source.iter().enumerate() {
            if y >= k_s {
                return Err(Error::Config(format!("source label {y} outside 0..{k_s}")));
            }
            counts[y] += 1;
            for (m, &v) in means.row_mut(y).iter_mut().zip(z_source.row(i)) {
                *m += v;
            }
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Clustering(format!("source class {k} has no samples")));
        }
        for (k, &c) in counts.iter().enumerate() {
            means.row_mut(k).iter_mut().for_each(|v| *v /= c as f64);
        }

        let matched = greedy_match(&means, &km.centers);
        let mut order = matched.clone();
        order.extend((0..k_t).filter(|c| !matched.contains(c)));
        self.blocks.insert(CENTROIDS.to_string(), km.centers.select_rows(&order));
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let ck = CheckpointRef { version: CHECKPOINT_VERSION, params: self };
        fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: version {} is not supported (expected {CHECKPOINT_VERSION})",
                path.display(),
                ck.version
            )));
        }
        ck.params.check_shapes()?;
        Ok(ck.params)
    }

    /// Verifies that every block required by the architecture is present with
    /// the right shape.
    pub fn check_shapes(&self) -> Result<()> {
        self.arch.validate()?;
        let expect = |name: String, shape: (usize, usize)| -> Result<()> {
            match self.blocks.get(&name) {
                Some(m) if m.shape() == shape => Ok(()),
                Some(m) => Err(Error::Checkpoint(format!("block `{name}` is {:?}, expected {shape:?}", m.shape()))),
                None => Err(Error::Checkpoint(format!("missing block `{name}`"))),
            }
        };
        let mut count = 1;
        for net in Net::ALL {
            for (i, s) in self.arch.layers(net).iter().enumerate() {
                expect(block(net, i, "weight"), (s.input, s.output))?;
                count += 1;
                if !s.norm {
                    expect(block(net, i, "bias"), (1, s.output))?;
                    count += 1;
                } else {
                    expect(block(net, i, "gamma"), (1, s.output))?;
                    expect(block(net, i, "beta"), (1, s.output))?;
                    count += 2;
                    let ok = self
                        .running
                        .get(&stats_key(net, i))
                        .is_some_and(|r| r.mean.shape() == (1, s.output) && r.var.shape() == (1, s.output));
                    if !ok {
                        return Err(Error::Checkpoint(format!("bad running stats for {net}.{i}")));
                    }
                }
            }
        }
        expect(CENTROIDS.to_string(), (self.arch.k_t, self.arch.h))?;
        if self.blocks.len() != count {
            return Err(Error::Checkpoint(format!("{} blocks, expected {count}", self.blocks.len())));
        }
        Ok(())
    }
}

/// Repeatedly pairs the closest unmatched (row of `a`, row of `b`); returns
/// the index in `b` chosen for each row of `a`.
fn greedy_match(a: &Matrix, b: &Matrix) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.rows() * b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            pairs.push((sq_dist(a.row(i), b.row(j)), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut out = vec![usize::MAX; a.rows()];
    let mut used = vec![false; b.rows()];
    for (_, i, j) in pairs {
        if out[i] == usize::MAX && !used[j] {
            out[i] = j;
            used[j] = true;
        }
    }
    out
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    version: u32,
    params: &'a ModelParams,
}

#[derive(Deserialize)]
struct Checkpoint {
    version: u32,
    params: ModelParams,
}
