//! Loss terms of the training objective, each returning its value and the
//! gradient with respect to its inputs.
//!
//! Gradients are expressed w.r.t. the tensors a loss consumes (embeddings,
//! reconstructions, assignment matrices, centroids). The training loop turns
//! them into parameter gradients with one backward pass through the network.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numkernel::{dot, sq_dist, GradientBundle, Matrix};

/// Clamp used inside logarithms and cluster-mass divisions.
pub const LOG_EPS: f64 = 1e-12;

/// Margin of the pairwise ranking loss.
pub const RANKING_MARGIN: f64 = 0.5;

/// Row-stochastic `N x K` matrix of soft cluster memberships.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix(Matrix);

impl AssignmentMatrix {
    /// Wraps `m` after checking that every row is a probability vector.
    pub fn new(m: Matrix) -> Result<Self> {
        for (i, row) in m.iter_rows().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(dim_err(
                    "AssignmentMatrix::new",
                    format!("row {i} is not a probability vector (sum {s})"),
                ));
            }
        }
        Ok(Self(m))
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }
}

/// Trade-off weights of the full objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub drift_correction: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            drift_correction: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Mean squared reconstruction error of the source batch plus that of the
/// target batch. Either batch may be empty, in which case its term is zero.
/// Gradients: `xhat_s`, `xhat_t`.
pub fn self_reconstruction_loss(
    x_s: &Matrix,
    xhat_s: &Matrix,
    x_t: &Matrix,
    xhat_t: &Matrix,
) -> Result<GradientBundle> {
    x_s.ensure_same_shape(xhat_s, "self_reconstruction_loss (source)")?;
    x_t.ensure_same_shape(xhat_t, "self_reconstruction_loss (target)")?;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(2);
    for (x, xh) in [(x_s, xhat_s), (x_t, xhat_t)] {
        let n = x.rows();
        let mut g = Matrix::zeros(x.rows(), x.cols());
        if n > 0 {
            let resid = xh.sub(x)?;
            value += resid.frobenius_sq() / n as f64;
            g = resid.scale(2.0 / n as f64);
        }
        grads.push(g);
    }
    let g_t = grads.pop().expect("two terms");
    let g_s = grads.pop().expect("two terms");
    Ok(GradientBundle::new(value).with("xhat_s", g_s).with("xhat_t", g_t))
}

/// Student-t soft assignment `p_ik ∝ (1 + ‖z_i − μ_k‖²)⁻¹`.
pub fn cluster_assignment(z: &Matrix, centroids: &Matrix) -> Result<AssignmentMatrix> {
    let d2 = z.sq_dists(centroids).map_err(|_| {
        dim_err(
            "cluster_assignment",
            format!("points {:?} vs centroids {:?}", z.shape(), centroids.shape()),
        )
    })?;
    let mut p = d2.map(|v| 1.0 / (1.0 + v));
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(AssignmentMatrix(p))
}

/// Semantic-space assignment: the same kernel between predicted attributes
/// and the semantic images of the centroids.
pub fn semantic_cluster_assignment(
    a_hat: &Matrix,
    semantic_centroids: &Matrix,
) -> Result<AssignmentMatrix> {
    cluster_assignment(a_hat, semantic_centroids)
}

/// Back-propagates `dp = ∂L/∂P` through [`cluster_assignment`], returning
/// `(∂L/∂z, ∂L/∂μ)`.
pub fn cluster_assignment_backward(
    z: &Matrix,
    centroids: &Matrix,
    p: &AssignmentMatrix,
    dp: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let p = p.as_matrix();
    p.ensure_same_shape(dp, "cluster_assignment_backward")?;
    let (n, k) = p.shape();
    let mut dz = Matrix::zeros(z.rows(), z.cols());
    let mut dmu = Matrix::zeros(centroids.rows(), centroids.cols());
    for i in 0..n {
        let zi = z.row(i);
        let pr = p.row(i);
        let gr = dp.row(i);
        let inner = dot(pr, gr);
        // w_il = 1/(1+d²); S_i = Σ w; p = w/S.  ∂L/∂w_il = (g_il − Σ_k g_ik p_ik)/S_i
        let w: Vec<f64> = (0..k)
            .map(|l| 1.0 / (1.0 + sq_dist(zi, centroids.row(l))))
            .collect();
        let s: f64 = w.iter().sum();
        for l in 0..k {
            let dw = (gr[l] - inner) / s;
            // ∂w/∂z = −2 w² (z − μ)
            let coef = -2.0 * dw * w[l] * w[l];
            let mu = centroids.row(l);
            for c in 0..zi.len() {
                let diff = zi[c] - mu[c];
                dz[(i, c)] += coef * diff;
                dmu[(l, c)] -= coef * diff;
            }
        }
    }
    Ok((dz, dmu))
}

/// Sharpened auxiliary distribution `q_ik ∝ p_ik² / Σ_j p_jk`, rows renormalized.
/// Cluster masses are clamped at [`LOG_EPS`].
pub fn target_distribution(p: &AssignmentMatrix) -> AssignmentMatrix {
    let p = p.as_matrix();
    let freq: Vec<f64> = p
        .column_sums()
        .data()
        .iter()
        .map(|&f| f.max(LOG_EPS))
        .collect();
    let mut q = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        let row = q.row_mut(i);
        for (k, v) in row.iter_mut().enumerate() {
            let pik = p.get(i, k);
            *v = pik * pik / freq[k];
        }
        let s: f64 = row.iter().sum::<f64>().max(LOG_EPS);
        row.iter_mut().for_each(|v| *v /= s);
    }
    AssignmentMatrix(q)
}

/// `(1/N) Σ_i KL(p_i ‖ q_i)` with `q` held constant. Gradient: `p`.
pub fn clustering_regularization(
    p: &AssignmentMatrix,
    q: &AssignmentMatrix,
) -> Result<GradientBundle> {
    let (p, q) = (p.as_matrix(), q.as_matrix());
    p.ensure_same_shape(q, "clustering_regularization")?;
    let n = p.rows();
    if n == 0 {
        return Ok(GradientBundle::new(0.0).with("p", Matrix::zeros(0, p.cols())));
    }
    let nf = n as f64;
    let mut value = 0.0;
    let mut g = Matrix::zeros(p.rows(), p.cols());
    for (idx, (&pv, &qv)) in p.data().iter().zip(q.data()).enumerate() {
        let log_ratio = pv.max(LOG_EPS).ln() - qv.max(LOG_EPS).ln();
        value += pv * log_ratio;
        let dlog = if pv > LOG_EPS { 1.0 } else { 0.0 };
        g.data_mut()[idx] = (log_ratio + dlog) / nf;
    }
    Ok(GradientBundle::new(value / nf).with("p", g))
}

/// Clustering regularization as a function of embeddings and centroids, with
/// the target distribution recomputed from the current assignment and then
/// frozen. Gradients: `z`, `centroids`.
pub fn clustering_regularization_wrt(z: &Matrix, centroids: &Matrix) -> Result<GradientBundle> {
    let p = cluster_assignment(z, centroids)?;
    let q = target_distribution(&p);
    clustering_regularization_given_target(z, centroids, &q)
}

/// As [`clustering_regularization_wrt`] with an explicit, frozen target `q`.
pub fn clustering_regularization_given_target(
    z: &Matrix,
    centroids: &Matrix,
    q: &AssignmentMatrix,
) -> Result<GradientBundle> {
    let p = cluster_assignment(z, centroids)?;
    let reg = clustering_regularization(&p, q)?;
    let (dz, dmu) = cluster_assignment_backward(z, centroids, &p, &reg.grads["p"])?;
    Ok(GradientBundle::new(reg.value)
        .with("z", dz)
        .with("centroids", dmu))
}

/// Distance used inside the prototypical softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Distance {
    Euclidean,
    /// `1 − cos(a, b)`
    Cosine,
}

fn distance_matrix(z: &Matrix, centroids: &Matrix, k_limit: usize, distance: Distance) -> Result<Matrix> {
    if k_limit == 0 || k_limit > centroids.rows() {
        return Err(dim_err(
            "prototypical_probability",
            format!("k_limit {k_limit} with {} centroids", centroids.rows()),
        ));
    }
    if z.cols() != centroids.cols() {
        return Err(dim_err(
            "prototypical_probability",
            format!("points {:?} vs centroids {:?}", z.shape(), centroids.shape()),
        ));
    }
    let mut d = Matrix::zeros(z.rows(), k_limit);
    match distance {
        Distance::Euclidean => {
            for i in 0..z.rows() {
                for k in 0..k_limit {
                    d[(i, k)] = sq_dist(z.row(i), centroids.row(k)).sqrt();
                }
            }
        }
        Distance::Cosine => {
            let norm = |v: &[f64]| dot(v, v).sqrt();
            let cnorms: Vec<f64> = (0..k_limit).map(|k| norm(centroids.row(k))).collect();
            if let Some(k) = cnorms.iter().position(|&n| n == 0.0) {
                return Err(Error::UndefinedDirection(format!("centroid {k} is the zero vector")));
            }
            for i in 0..z.rows() {
                let zn = norm(z.row(i));
                if zn == 0.0 {
                    return Err(Error::UndefinedDirection(format!("point {i} is the zero vector")));
                }
                for k in 0..k_limit {
                    d[(i, k)] = 1.0 - dot(z.row(i), centroids.row(k)) / (zn * cnorms[k]);
                }
            }
        }
    }
    Ok(d)
}

fn softmax_neg(d: &Matrix) -> Matrix {
    let mut p = d.scale(-1.0);
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v = (*v - m).exp());
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    p
}

/// Softmax over `−d(z_i, μ_k)` for the first `k_limit` centroids.
pub fn prototypical_probability(
    z: &Matrix,
    centroids: &Matrix,
    k_limit: usize,
    distance: Distance,
) -> Result<Matrix> {
    Ok(softmax_neg(&distance_matrix(z, centroids, k_limit, distance)?))
}

/// Per-class mean of target embeddings grouped by pseudo label, for the seen
/// classes `0..k_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMeans {
    pub means: Matrix,
    pub counts: Vec<usize>,
}

impl PseudoMeans {
    pub fn from_labels(z_t: &Matrix, labels: &[usize], k_s: usize) -> Result<Self> {
        if labels.len() != z_t.rows() {
            return Err(dim_err(
                "PseudoMeans::from_labels",
                format!("{} labels for {} points", labels.len(), z_t.rows()),
            ));
        }
        let mut means = Matrix::zeros(k_s, z_t.cols());
        let mut counts = vec![0usize; k_s];
        for (i, &l) in labels.iter().enumerate() {
            if l < k_s {
                counts[l] += 1;
                for (m, &v) in means.row_mut(l).iter_mut().zip(z_t.row(i)) {
                    *m += v;
                }
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            if c > 0 {
                means.row_mut(k).iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        Ok(Self { means, counts })
    }

    /// Chains `∂L/∂μ̃` to the target embeddings that formed each mean.
    pub fn backward(&self, labels: &[usize], dmeans: &Matrix, n_t: usize) -> Matrix {
        let mut dz = Matrix::zeros(n_t, dmeans.cols());
        for (i, &l) in labels.iter().enumerate() {
            if l < self.counts.len() && self.counts[l] > 0 {
                let c = self.counts[l] as f64;
                for (d, &g) in dz.row_mut(i).iter_mut().zip(dmeans.row(l)) {
                    *d = g / c;
                }
            }
        }
        dz
    }
}

/// Result of [`centroid_alignment_loss`].
#[derive(Debug, Clone)]
pub struct CentroidAlignment {
    /// Gradients: `z_s`, `centroids`, and `pseudo_means` when drift correction is on.
    pub bundle: GradientBundle,
    pub cross_entropy: f64,
    pub drift: f64,
    /// Seen classes with no pseudo-labeled target point; excluded from the drift average.
    pub skipped_classes: Vec<usize>,
}

/// Cross-entropy of the Euclidean prototypical probability over the first
/// `K_s` centroids against the source labels, plus, with drift correction,
/// the mean squared gap between pseudo-label class means and seen centroids.
pub fn centroid_alignment_loss(
    z_s: &Matrix,
    y_s: &[usize],
    centroids: &Matrix,
    k_s: usize,
    pseudo_means: Option<&PseudoMeans>,
    drift_correction: bool,
) -> Result<CentroidAlignment> {
    if y_s.len() != z_s.rows() {
        return Err(dim_err(
            "centroid_alignment_loss",
            format!("{} labels for {} points", y_s.len(), z_s.rows()),
        ));
    }
    if let Some(&bad) = y_s.iter().find(|&&y| y >= k_s) {
        return Err(Error::Config(format!("source label {bad} outside 0..{k_s}")));
    }
    if drift_correction != pseudo_means.is_some() {
        return Err(Error::Config(
            "pseudo means must be supplied exactly when drift correction is enabled".into(),
        ));
    }
    let dist = distance_matrix(z_s, centroids, k_s, Distance::Euclidean)?;
    let p = softmax_neg(&dist);
    let n = z_s.rows();
    let mut dz = Matrix::zeros(n, z_s.cols());
    let mut dmu = Matrix::zeros(centroids.rows(), centroids.cols());
    let mut ce = 0.0;
    if n > 0 {
        let nf = n as f64;
        for (i, &y) in y_s.iter().enumerate() {
            // −log softmax(−d)_y = d_y + log Σ exp(−d_k)
            let row = dist.row(i);
            let m = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let lse = -m + row.iter().map(|&d| (-(d - m)).exp()).sum::<f64>().ln();
            ce += row[y] + lse;
            for k in 0..k_s {
                let dk = row[k];
                if dk < 1e-12 {
                    continue;
                }
                // ∂CE/∂d_k = δ_ky − p_k
                let g = (if k == y { 1.0 } else { 0.0 } - p[(i, k)]) / nf / dk;
                let zi = z_s.row(i);
                let mu = centroids.row(k);
                for c in 0..zi.len() {
                    let diff = zi[c] - mu[c];
                    dz[(i, c)] += g * diff;
                    dmu[(k, c)] -= g * diff;
                }
            }
        }
        ce /= nf;
    }

    let mut drift = 0.0;
    let mut skipped = Vec::new();
    let mut dpm = None;
    if let Some(pm) = pseudo_means {
        if pm.means.shape() != (k_s, centroids.cols()) {
            return Err(dim_err(
                "centroid_alignment_loss",
                format!("pseudo means {:?}, expected ({k_s}, {})", pm.means.shape(), centroids.cols()),
            ));
        }
        let present: Vec<usize> = (0..k_s).filter(|&k| pm.counts[k] > 0).collect();
        skipped = (0..k_s).filter(|&k| pm.counts[k] == 0).collect();
        if !skipped.is_empty() {
            warn!("drift term skips seen classes without pseudo-labeled points: {skipped:?}");
        }
        let mut g = Matrix::zeros(k_s, centroids.cols());
        if !present.is_empty() {
            let denom = present.len() as f64;
            for &k in &present {
                let gap: Vec<f64> = pm
                    .means
                    .row(k)
                    .iter()
                    .zip(centroids.row(k))
                    .map(|(a, b)| a - b)
                    .collect();
                drift += dot(&gap, &gap) / denom;
                for (c, &gv) in gap.iter().enumerate() {
                    g[(k, c)] = 2.0 * gv / denom;
                    dmu[(k, c)] -= 2.0 * gv / denom;
                }
            }
        }
        dpm = Some(g);
    }

    let mut bundle = GradientBundle::new(ce + drift)
        .with("z_s", dz)
        .with("centroids", dmu);
    if let Some(g) = dpm {
        bundle = bundle.with("pseudo_means", g);
    }
    Ok(CentroidAlignment {
        bundle,
        cross_entropy: ce,
        drift,
        skipped_classes: skipped,
    })
}

/// Pairwise ranking hinge `(1/N) Σ_i Σ_{k≠y_i} max(0, m − A_yᵀâ_i + A_kᵀâ_i)`
/// with margin [`RANKING_MARGIN`]. Gradient: `a_hat`.
pub fn semantic_ranking_loss(a_hat: &Matrix, y_s: &[usize], attributes: &Matrix) -> Result<GradientBundle> {
    if a_hat.cols() != attributes.cols() || y_s.len() != a_hat.rows() {
        return Err(dim_err(
            "semantic_ranking_loss",
            format!(
                "predictions {:?}, attributes {:?}, {} labels",
                a_hat.shape(),
                attributes.shape(),
                y_s.len()
            ),
        ));
    }
    let k_s = attributes.rows();
    if let Some(&bad) = y_s.iter().find(|&&y| y >= k_s) {
        return Err(Error::Config(format!("source label {bad} outside 0..{k_s}")));
    }
    let n = a_hat.rows();
    let mut g = Matrix::zeros(n, a_hat.cols());
    if n == 0 {
        return Ok(GradientBundle::new(0.0).with("a_hat", g));
    }
    let nf = n as f64;
    let mut value = 0.0;
    for (i, &y) in y_s.iter().enumerate() {
        let a = a_hat.row(i);
        let scores: Vec<f64> = (0..k_s).map(|k| dot(attributes.row(k), a)).collect();
        for k in (0..k_s).filter(|&k| k != y) {
            let h = RANKING_MARGIN - scores[y] + scores[k];
            if h > 0.0 {
                value += h;
                for c in 0..a.len() {
                    g[(i, c)] += (attributes[(k, c)] - attributes[(y, c)]) / nf;
                }
            }
        }
    }
    Ok(GradientBundle::new(value / nf).with("a_hat", g))
}

/// `(1/N) Σ_i Σ_j (p_iᶻᵀp_jᶻ − p_iᵃᵀp_jᵃ)²` over the rows of the batch.
/// Gradients: `p_z`, `p_a`.
pub fn structural_alignment_loss(p_z: &AssignmentMatrix, p_a: &AssignmentMatrix) -> Result<GradientBundle> {
    let (pz, pa) = (p_z.as_matrix(), p_a.as_matrix());
    pz.ensure_same_shape(pa, "structural_alignment_loss")?;
    let n = pz.rows();
    if n == 0 {
        return Ok(GradientBundle::new(0.0)
            .with("p_z", Matrix::zeros(0, pz.cols()))
            .with("p_a", Matrix::zeros(0, pa.cols())));
    }
    let gz = pz.matmul_nt(pz)?;
    let ga = pa.matmul_nt(pa)?;
    let diff = gz.sub(&ga)?;
    let nf = n as f64;
    let value = diff.frobenius_sq() / nf;
    let dpz = diff.matmul(pz)?.scale(4.0 / nf);
    let dpa = diff.matmul(pa)?.scale(-4.0 / nf);
    Ok(GradientBundle::new(value).with("p_z", dpz).with("p_a", dpa))
}

/// Structural alignment as a function of embeddings, centroids, predicted
/// attributes and semantic centroids. Gradients: `z`, `centroids`, `a_hat`,
/// `semantic_centroids`.
pub fn structural_alignment_wrt(
    z: &Matrix,
    centroids: &Matrix,
    a_hat: &Matrix,
    semantic_centroids: &Matrix,
) -> Result<GradientBundle> {
    let pz = cluster_assignment(z, centroids)?;
    let pa = semantic_cluster_assignment(a_hat, semantic_centroids)?;
    let l = structural_alignment_loss(&pz, &pa)?;
    let (dz, dmu) = cluster_assignment_backward(z, centroids, &pz, &l.grads["p_z"])?;
    let (da, ds) = cluster_assignment_backward(a_hat, semantic_centroids, &pa, &l.grads["p_a"])?;
    Ok(GradientBundle::new(l.value)
        .with("z", dz)
        .with("centroids", dmu)
        .with("a_hat", da)
        .with("semantic_centroids", ds))
}

/// The five component losses of one optimization step, each already
/// expressed over a common set of gradient names.
#[derive(Debug, Clone, Default)]
pub struct LossParts {
    pub self_reconstruction: Option<GradientBundle>,
    pub regularization: Option<GradientBundle>,
    pub centroid_alignment: Option<GradientBundle>,
    pub semantic: Option<GradientBundle>,
    pub structural: Option<GradientBundle>,
}

/// `L_self + L_reg + L_cent + α·L_a + β·L_align`, with gradient bundles
/// combined by weighted summation.
pub fn total_objective(parts: &LossParts, weights: &LossWeights) -> Result<GradientBundle> {
    weights.validate()?;
    let need = |b: &Option<GradientBundle>, name: &str| -> Result<GradientBundle> {
        b.clone()
            .ok_or_else(|| Error::Composition(format!("missing {name} component")))
    };
    let mut total = GradientBundle::new(0.0);
    total.accumulate(&need(&parts.self_reconstruction, "self-reconstruction")?, 1.0)?;
    total.accumulate(&need(&parts.regularization, "clustering regularization")?, 1.0)?;
    total.accumulate(&need(&parts.centroid_alignment, "centroid alignment")?, 1.0)?;
    total.accumulate(&need(&parts.semantic, "semantic ranking")?, weights.alpha)?;
    total.accumulate(&need(&parts.structural, "structural alignment")?, weights.beta)?;
    Ok(total)
}
