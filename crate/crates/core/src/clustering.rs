//! K-means, hard pseudo labels, and the Hungarian matching used to align
//! predicted unseen clusters with ground-truth unseen classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::AssignmentMatrix;
use crate::numkernel::{argmax, argmin, sq_dist, Matrix};

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Matrix,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step, ending with the final value.
    pub inertia_trace: Vec<f64>,
}

impl KMeansResult {
    /// Index of the nearest center for every row of `x`.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let d = x.sq_dists(&self.centers)?;
        Ok(d.iter_rows().map(argmin).collect())
    }
}

fn assign(x: &Matrix, centers: &Matrix) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(x.rows());
    let mut dists = Vec::with_capacity(x.rows());
    for row in x.iter_rows() {
        let d: Vec<f64> = centers.iter_rows().map(|c| sq_dist(row, c)).collect();
        let best = argmin(&d);
        labels.push(best);
        dists.push(d[best]);
    }
    (labels, dists)
}

fn kmeans_pp_seed(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = x.iter_rows().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // rounding can walk past the last positive weight
            if d2[pick] == 0.0 {
                pick = argmax(&d2);
            }
            pick
        } else {
            // fewer distinct points than clusters
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for (i, row) in x.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(row, x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

/// Lloyd iterations from k-means++ seeding. Stops when the total center
/// movement falls below `tol` relative to the center norm, or after
/// `max_iter` iterations. Empty clusters are re-seeded at the points farthest
/// from their current centers.
pub fn kmeans_fit(x: &Matrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansResult> {
    let n = x.rows();
    if k == 0 {
        return Err(Error::Clustering("k-means needs at least one cluster".into()));
    }
    if n < k {
        return Err(Error::Clustering(format!(
            "k-means asked for {k} clusters from {n} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp_seed(x, k, &mut rng);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let (mut labels, mut dists) = assign(x, &centers);
    trace.push(dists.iter().sum());
    while iterations < max_iter {
        iterations += 1;
        let mut new_centers = Matrix::zeros(k, x.cols());
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (c, &v) in new_centers.row_mut(l).iter_mut().zip(x.row(i)) {
                *c += v;
            }
        }
        let mut far: Vec<usize> = (0..n).collect();
        far.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
        let mut far = far.into_iter();
        for j in 0..k {
            if counts[j] > 0 {
                let c = counts[j] as f64;
                new_centers.row_mut(j).iter_mut().for_each(|v| *v /= c);
            } else {
                let idx = far.next().expect("n >= k");
                new_centers.row_mut(j).copy_from_slice(x.row(idx));
            }
        }
        let shift: f64 = centers
            .iter_rows()
            .zip(new_centers.iter_rows())
            .map(|(a, b)| sq_dist(a, b))
            .sum::<f64>()
            .sqrt();
        let scale = centers.frobenius_sq().sqrt().max(1e-12);
        centers = new_centers;
        let (l, d) = assign(x, &centers);
        labels = l;
        dists = d;
        trace.push(dists.iter().sum());
        if shift <= tol * scale {
            break;
        }
    }
    let inertia = *trace.last().expect("at least one assignment");
    Ok(KMeansResult {
        centers,
        assignments: labels,
        inertia,
        iterations,
        inertia_trace: trace,
    })
}

/// `argmax_k p_ik` per row, ties to the lowest index.
pub fn pseudo_labels(p: &AssignmentMatrix) -> Vec<usize> {
    p.as_matrix().iter_rows().map(argmax).collect()
}

/// Bijection from predicted unseen cluster ids `offset..offset+U` to
/// ground-truth unseen class ids in the same range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub offset: usize,
    /// `mapping[p]` is the true class matched to predicted cluster `offset + p`.
    pub mapping: Vec<usize>,
}

impl LabelMap {
    pub fn identity(offset: usize, size: usize) -> Self {
        Self {
            offset,
            mapping: (offset..offset + size).collect(),
        }
    }

    /// Maps a predicted unseen id; ids outside the unseen range pass through.
    pub fn apply(&self, predicted: usize) -> usize {
        match predicted.checked_sub(self.offset) {
            Some(p) if p < self.mapping.len() => self.mapping[p],
            _ => predicted,
        }
    }
}

/// Maximum-weight perfect matching on a square integer matrix. Returns
/// `assignment[row] = col`. Among all optimal matchings the lexicographically
/// smallest assignment vector is returned.
pub fn max_weight_assignment(weights: &[Vec<i64>]) -> Result<Vec<usize>> {
    let n = weights.len();
    if let Some((r, row)) = weights.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Clustering(format!(
            "assignment matrix must be square: row {r} has {} entries, expected {n}",
            row.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // Min-cost Hungarian with potentials (1-indexed, column 0 is a sentinel).
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    // Every optimal matching lives on the tight edges of an optimal dual, so
    // the lexicographic refinement only has to search that subgraph.
    let tight = |i: usize, j: usize| u[i + 1] + v[j + 1] == cost(i + 1, j + 1);
    let mut row_of = vec![usize::MAX; n];
    let mut col_of = vec![usize::MAX; n];
    for j in 1..=n {
        row_of[j - 1] = p[j] - 1;
        col_of[p[j] - 1] = j - 1;
    }
    let mut fixed_col = vec![false; n];
    for i in 0..n {
        for c in 0..n {
            if fixed_col[c] || !tight(i, c) {
                continue;
            }
            if col_of[i] == c {
                break;
            }
            // Give column c to row i; its previous owner must reach the
            // column i releases through an alternating path over unfixed rows.
            let owner = row_of[c];
            let freed = col_of[i];
            let mut seen = vec![false; n];
            seen[c] = true;
            let mut path = Vec::new();
            if reroute(owner, freed, i, &tight, &col_of, &row_of, &fixed_col, &mut seen, &mut path) {
                for &(r, newc) in path.iter().rev() {
                    col_of[r] = newc;
                    row_of[newc] = r;
                }
                col_of[i] = c;
                row_of[c] = i;
                break;
            }
        }
        fixed_col[col_of[i]] = true;
    }
    Ok(col_of)
}

/// Depth-first search for an alternating path letting `row` move off its
/// column and eventually land the displaced chain on `target`.
#[allow(clippy::too_many_arguments)]
fn reroute(
    row: usize,
    target: usize,
    current: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    col_of: &[usize],
    row_of: &[usize],
    fixed_col: &[bool],
    seen: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    let n = col_of.len();
    for c in 0..n {
        if seen[c] || fixed_col[c] || !tight(row, c) {
            continue;
        }
        seen[c] = true;
        if c == target {
            path.push((row, c));
            return true;
        }
        let next = row_of[c];
        if next == current {
            continue;
        }
        if reroute(next, target, current, tight, col_of, row_of, fixed_col, seen, path) {
            path.push((row, c));
            return true;
        }
    }
    false
}

/// Builds the accuracy-maximizing bijection between predicted unseen
/// clusters (rows of `confusion`) and true unseen classes (columns).
pub fn hungarian_map(confusion: &[Vec<u64>], offset: usize) -> Result<LabelMap> {
    let weights: Vec<Vec<i64>> = confusion
        .iter()
        .map(|r| r.iter().map(|&c| c as i64).collect())
        .collect();
    let assignment = max_weight_assignment(&weights)?;
    Ok(LabelMap {
        offset,
        mapping: assignment.into_iter().map(|c| c + offset).collect(),
    })
}
