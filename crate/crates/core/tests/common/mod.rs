#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zkzsl::numkernel::{compare_gradients, numerical_gradient, GradCheckReport, GradientBundle, DEFAULT_FD_STEP};
use zkzsl::{Matrix, Result};

pub type Params = BTreeMap<String, Matrix>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..k)).collect()
}

pub fn params(blocks: &[(&str, Matrix)]) -> Params {
    blocks.iter().map(|(n, m)| (n.to_string(), m.clone())).collect()
}

/// Compares the analytic bundle for `params` with central differences of
/// the scalar loss and returns the report.
pub fn check<F>(params: &Params, mut f: F) -> GradCheckReport
where
    F: FnMut(&Params) -> Result<GradientBundle>,
{
    let analytic = f(params).unwrap();
    let numeric = numerical_gradient(|p: &Params| f(p).map(|b| b.value), params, DEFAULT_FD_STEP).unwrap();
    compare_gradients(&analytic, &numeric)
}

/// Largest matched count over all bijections of a square count matrix.
pub fn best_permutation_count(confusion: &[Vec<u64>]) -> u64 {
    use itertools::Itertools;
    let n = confusion.len();
    (0..n)
        .permutations(n)
        .map(|perm| perm.iter().enumerate().map(|(r, &c)| confusion[r][c]).sum())
        .max()
        .unwrap_or(0)
}

/// Ten labeled target samples over two seen and two unseen classes with
/// hand-computed metrics `[acc_s, acc_u, acc_h, sr_s, sr_u, sr_h]`.
///
/// ```text
/// truth   0 0 0 1 1 2 2 2 3 3
/// y_hat   0 0 1 1 1 3 3 2 2 2   seen (2/3, 2/2); unseen swapped by the map (2/3, 2/2)
/// y_tilde 0 1 1 1 0 2 2 3 3 0   seen (1/3, 1/2); unseen (2/3, 1/2)
/// ```
pub fn metric_fixture() -> (zkzsl::datasets::Dataset, zkzsl::inference::InferenceResult, [f64; 6]) {
    use zkzsl::datasets::Dataset;
    use zkzsl::inference::InferenceResult;
    let truth = vec![0, 0, 0, 1, 1, 2, 2, 2, 3, 3];
    let y_hat = vec![0, 0, 1, 1, 1, 3, 3, 2, 2, 2];
    let y_tilde = vec![0, 1, 1, 1, 0, 2, 2, 3, 3, 0];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let attrs = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [s, s], [s, -s]]).unwrap();
    let xs = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
    let xt = Matrix::filled(10, 2, 0.5);
    let ds = Dataset::new(2, 4, xs, vec![0, 1], attrs.slice_rows(0, 2), xt, Some(truth), Some(attrs)).unwrap();
    let inf = InferenceResult {
        seen_mask: y_hat.iter().map(|&y| y < 2).collect(),
        y_hat,
        tau: 0.5,
        pmax: vec![0.5; 10],
        a_hat: Matrix::zeros(10, 2),
        y_tilde: Some(y_tilde),
    };
    let acc_s = (2.0 / 3.0 + 1.0) / 2.0;
    let acc_u = (2.0 / 3.0 + 1.0) / 2.0;
    let sr_s = (1.0 / 3.0 + 1.0 / 2.0) / 2.0;
    let sr_u = (2.0 / 3.0 + 1.0 / 2.0) / 2.0;
    let h = |a: f64, b: f64| 2.0 * a * b / (a + b);
    (ds, inf, [acc_s, acc_u, h(acc_s, acc_u), sr_s, sr_u, h(sr_s, sr_u)])
}
