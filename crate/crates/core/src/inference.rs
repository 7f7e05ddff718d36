//! Seen/unseen separation, class prediction and semantic recovery on the
//! target set.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans_fit, KMEANS_MAX_ITER, KMEANS_TOL};
use crate::error::{dim_err, Error, Result};
use crate::losses::{prototypical_probability, Distance};
use crate::model::ModelParams;
use crate::numkernel::{argmax, argmin, dot, sq_dist, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    /// Predicted class per target point; ids below `k_s` are seen classes.
    pub y_hat: Vec<usize>,
    pub seen_mask: Vec<bool>,
    pub tau: f64,
    pub pmax: Vec<f64>,
    pub a_hat: Matrix,
    /// Semantic-recovery prediction, present when full attributes were given.
    pub y_tilde: Option<Vec<usize>>,
}

/// Best seen-class prototypical probability per point and its mean `τ`.
pub fn compute_pmax(z_t: &Matrix, centroids: &Matrix, k_s: usize) -> Result<(Vec<f64>, f64)> {
    if z_t.rows() == 0 {
        return Err(Error::Inference("empty target set".into()));
    }
    let p = prototypical_probability(z_t, centroids, k_s, Distance::Euclidean)?;
    let pmax: Vec<f64> = p
        .iter_rows()
        .map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let tau = pmax.iter().sum::<f64>() / pmax.len() as f64;
    Ok((pmax, tau))
}

/// `pmax[i] ≥ τ`
pub fn seen_mask(pmax: &[f64], tau: f64) -> Vec<bool> {
    pmax.iter().map(|&p| p >= tau).collect()
}

/// Accepted points take their nearest seen centroid; rejected points are
/// clustered into `k_t − k_s` groups by K-means and labeled `k_s + group`.
pub fn classify_target(
    z_t: &Matrix,
    centroids: &Matrix,
    k_s: usize,
    k_t: usize,
    pmax: &[f64],
    tau: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    if pmax.len() != z_t.rows() {
        return Err(dim_err(
            "classify_target",
            format!("{} scores for {} points", pmax.len(), z_t.rows()),
        ));
    }
    if k_s == 0 || k_s >= k_t || centroids.rows() < k_s || centroids.cols() != z_t.cols() {
        return Err(dim_err(
            "classify_target",
            format!("k_s={k_s}, k_t={k_t}, centroids {:?}, points {:?}", centroids.shape(), z_t.shape()),
        ));
    }
    let mask = seen_mask(pmax, tau);
    let mut y = vec![0usize; z_t.rows()];
    let mut rejected = Vec::new();
    for (i, &seen) in mask.iter().enumerate() {
        if seen {
            let d: Vec<f64> = (0..k_s).map(|k| sq_dist(z_t.row(i), centroids.row(k))).collect();
            y[i] = argmin(&d);
        } else {
            rejected.push(i);
        }
    }
    let k_u = k_t - k_s;
    if rejected.is_empty() {
        return Ok(y);
    }
    if rejected.len() < k_u {
        return Err(Error::Inference(format!(
            "only {} points fall below the threshold {tau:.4}, fewer than the {k_u} unseen classes; inspect the pmax distribution",
            rejected.len()
        )));
    }
    let sub = z_t.select_rows(&rejected);
    let km = kmeans_fit(&sub, k_u, seed, KMEANS_MAX_ITER, KMEANS_TOL)?;
    for (r, &i) in rejected.iter().enumerate() {
        let d: Vec<f64> = (0..k_u).map(|c| sq_dist(sub.row(r), km.centers.row(c))).collect();
        y[i] = k_s + argmin(&d);
    }
    Ok(y)
}

/// `ỹ_i = argmax_k A_kᵀ â_i`, ties to the lowest class id.
pub fn semantic_recovery_predict(a_hat: &Matrix, attributes: &Matrix) -> Result<Vec<usize>> {
    if a_hat.cols() != attributes.cols() {
        return Err(dim_err(
            "semantic_recovery_predict",
            format!("predictions {:?} vs attributes {:?}", a_hat.shape(), attributes.shape()),
        ));
    }
    Ok(a_hat
        .iter_rows()
        .map(|a| {
            let s: Vec<f64> = attributes.iter_rows().map(|c| dot(c, a)).collect();
            argmax(&s)
        })
        .collect())
}

/// Full inference on target features with an eval-mode model.
pub fn infer(params: &ModelParams, x_t: &Matrix, attributes_full: Option<&Matrix>, seed: u64) -> Result<InferenceResult> {
    let z = params.embed(x_t)?;
    let (k_s, k_t) = (params.arch.k_s, params.arch.k_t);
    let (pmax, tau) = compute_pmax(&z, params.centroids(), k_s)?;
    let y_hat = classify_target(&z, params.centroids(), k_s, k_t, &pmax, tau, seed)?;
    let (a_hat, _) = params.predict_semantics(&z, crate::numkernel::Mode::Eval)?;
    let y_tilde = attributes_full
        .map(|a| {
            if a.rows() != k_t {
                return Err(dim_err(
                    "infer",
                    format!("{} attribute rows for k_t={k_t}", a.rows()),
                ));
            }
            semantic_recovery_predict(&a_hat, a)
        })
        .transpose()?;
    Ok(InferenceResult {
        seen_mask: seen_mask(&pmax, tau),
        y_hat,
        tau,
        pmax,
        a_hat,
        y_tilde,
    })
}

impl InferenceResult {
    /// CSV with columns `index, y_hat, seen_flag, pmax, y_tilde, a0..`.
    /// `y_tilde` is left empty when unavailable.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["index".to_string(), "y_hat".into(), "seen_flag".into(), "pmax".into(), "y_tilde".into()];
        header.extend((0..self.a_hat.cols()).map(|j| format!("a{j}")));
        w.write_record(&header)?;
        for i in 0..self.y_hat.len() {
            let mut rec = vec![
                i.to_string(),
                self.y_hat[i].to_string(),
                u8::from(self.seen_mask[i]).to_string(),
                self.pmax[i].to_string(),
                self.y_tilde.as_ref().map(|t| t[i].to_string()).unwrap_or_default(),
            ];
            rec.extend(self.a_hat.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_is_mean_and_boundary_is_inclusive() {
        let pmax = [0.9, 0.5, 0.7];
        let tau = pmax.iter().sum::<f64>() / 3.0;
        assert_eq!(seen_mask(&pmax, tau), vec![true, false, true]);
        assert_eq!(seen_mask(&[0.4, 0.4], 0.4), vec![true, true]);
    }

    #[test]
    fn identical_points_are_all_seen() {
        let z = Matrix::filled(4, 2, 0.3);
        let c = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [5.0, 5.0]]).unwrap();
        let (pmax, tau) = compute_pmax(&z, &c, 2).unwrap();
        assert!(pmax.iter().all(|&p| p == tau));
        assert!(seen_mask(&pmax, tau).iter().all(|&s| s));
    }

    #[test]
    fn single_seen_class_gives_unit_pmax() {
        let z = Matrix::from_rows(&[[0.0, 1.0], [4.0, -2.0]]).unwrap();
        let c = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let (pmax, tau) = compute_pmax(&z, &c, 1).unwrap();
        assert_eq!(pmax, vec![1.0, 1.0]);
        assert_eq!(tau, 1.0);
    }

    #[test]
    fn empty_target_is_an_error() {
        let c = Matrix::zeros(2, 2);
        assert!(matches!(compute_pmax(&Matrix::zeros(0, 2), &c, 1), Err(Error::Inference(_))));
    }

    #[test]
    fn points_at_seen_centroids_keep_their_index() {
        let c = Matrix::from_rows(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]).unwrap();
        let z = Matrix::from_rows(&[[0.0, 0.0], [10.0, 0.0], [10.0, 0.0], [0.0, 0.0]]).unwrap();
        let (pmax, tau) = compute_pmax(&z, &c, 2).unwrap();
        let y = classify_target(&z, &c, 2, 3, &pmax, tau, 0).unwrap();
        assert_eq!(y, vec![0, 1, 1, 0]);
    }

    #[test]
    fn single_rejected_point_takes_first_unseen_id() {
        let c = Matrix::from_rows(&[[0.0], [10.0], [5.0]]).unwrap();
        let z = Matrix::from_rows(&[[0.0], [10.0], [5.0]]).unwrap();
        let (pmax, tau) = compute_pmax(&z, &c, 2).unwrap();
        assert_eq!(seen_mask(&pmax, tau), vec![true, true, false]);
        assert_eq!(classify_target(&z, &c, 2, 3, &pmax, tau, 0).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn too_few_rejections_is_an_error() {
        let c = Matrix::from_rows(&[[0.0], [10.0], [5.0], [6.0]]).unwrap();
        let z = Matrix::from_rows(&[[0.0], [10.0], [5.0]]).unwrap();
        let (pmax, tau) = compute_pmax(&z, &c, 2).unwrap();
        assert!(matches!(classify_target(&z, &c, 2, 4, &pmax, tau, 0), Err(Error::Inference(_))));
    }

    #[test]
    fn semantic_recovery_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [s, s, 0.0]]).unwrap();
        let hat = Matrix::from_rows(&[[s, s, 0.0], [0.0, 0.0, 0.0], [2.0, 0.1, 0.0]]).unwrap();
        assert_eq!(semantic_recovery_predict(&hat, &a).unwrap(), vec![2, 0, 0]);

        let two = Matrix::from_rows(&[[0.6, 0.8], [1.0, 0.0]]).unwrap();
        let neg = Matrix::from_rows(&[[-1.0, 0.0]]).unwrap();
        assert_eq!(semantic_recovery_predict(&neg, &two).unwrap(), vec![0]);
        let neg0 = Matrix::from_rows(&[[-0.6, -0.8]]).unwrap();
        assert_eq!(semantic_recovery_predict(&neg0, &two).unwrap(), vec![1]);
        assert!(semantic_recovery_predict(&Matrix::zeros(1, 3), &two).is_err());
    }
}
