//! Datasets: on-disk layout, validation, attribute normalization, and a
//! synthetic generator for desk-scale experiments.
//!
//! A dataset directory holds
//!
//! ```text
//! manifest.json          {"k_s", "k_t", "d", "feature_dim"}
//! source_features.csv    N_s rows, header f0..f{D-1}
//! source_labels.csv      N_s rows, header "label", values in [0, k_s)
//! attributes_seen.csv    k_s rows, header a0..a{d-1}; row i is class i
//! target_features.csv    N_t rows, header f0..f{D-1}
//! target_labels.csv      optional, header "label", values in [0, k_t)
//! attributes_full.csv    optional, k_t rows, header a0..a{d-1}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{dot, Matrix};

pub const MANIFEST: &str = "manifest.json";
pub const SOURCE_FEATURES: &str = "source_features.csv";
pub const SOURCE_LABELS: &str = "source_labels.csv";
pub const ATTRIBUTES_SEEN: &str = "attributes_seen.csv";
pub const TARGET_FEATURES: &str = "target_features.csv";
pub const TARGET_LABELS: &str = "target_labels.csv";
pub const ATTRIBUTES_FULL: &str = "attributes_full.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub k_s: usize,
    pub k_t: usize,
    pub d: usize,
    pub feature_dim: usize,
}

/// Source and target data for one split. Unseen classes occupy `k_s..k_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub k_s: usize,
    pub k_t: usize,
    pub d: usize,
    pub source_features: Matrix,
    pub source_labels: Vec<usize>,
    /// `k_s x d`, unit rows.
    pub attributes_seen: Matrix,
    pub target_features: Matrix,
    /// Ground truth for evaluation only.
    pub target_labels: Option<Vec<usize>>,
    /// `k_t x d`, unit rows; evaluation only.
    pub attributes_full: Option<Matrix>,
}

impl Dataset {
    /// Validates the parts and unit-normalizes attribute rows.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k_s: usize,
        k_t: usize,
        source_features: Matrix,
        source_labels: Vec<usize>,
        attributes_seen: Matrix,
        target_features: Matrix,
        target_labels: Option<Vec<usize>>,
        attributes_full: Option<Matrix>,
    ) -> Result<Self> {
        let bad = |msg: String| Error::Config(msg);
        if k_s == 0 || k_s >= k_t {
            return Err(bad(format!("need 0 < k_s < k_t, got k_s={k_s}, k_t={k_t}")));
        }
        let d = attributes_seen.cols();
        if attributes_seen.rows() != k_s {
            return Err(bad(format!(
                "{} seen attribute rows for k_s={k_s}",
                attributes_seen.rows()
            )));
        }
        if source_features.cols() != target_features.cols() {
            return Err(bad(format!(
                "source features have {} columns, target features {}",
                source_features.cols(),
                target_features.cols()
            )));
        }
        if source_labels.len() != source_features.rows() {
            return Err(bad(format!(
                "{} source labels for {} source rows",
                source_labels.len(),
                source_features.rows()
            )));
        }
        if let Some(i) = source_labels.iter().position(|&y| y >= k_s) {
            return Err(bad(format!("source label {} at row {i} outside 0..{k_s}", source_labels[i])));
        }
        if let Some(yt) = &target_labels {
            if yt.len() != target_features.rows() {
                return Err(bad(format!(
                    "{} target labels for {} target rows",
                    yt.len(),
                    target_features.rows()
                )));
            }
            if let Some(i) = yt.iter().position(|&y| y >= k_t) {
                return Err(bad(format!("target label {} at row {i} outside 0..{k_t}", yt[i])));
            }
        }
        if let Some(af) = &attributes_full {
            if af.shape() != (k_t, d) {
                return Err(bad(format!("full attributes {:?}, expected ({k_t}, {d})", af.shape())));
            }
        }
        for (name, m) in [("source features", &source_features), ("target features", &target_features)] {
            if !m.is_finite() {
                return Err(bad(format!("{name} contain non-finite values")));
            }
        }
        let attributes_seen = normalize_rows(attributes_seen).map_err(|r| bad(format!("seen attribute row {r} has zero norm")))?;
        let attributes_full = attributes_full
            .map(|m| normalize_rows(m).map_err(|r| bad(format!("full attribute row {r} has zero norm"))))
            .transpose()?;
        Ok(Self {
            k_s,
            k_t,
            d,
            source_features,
            source_labels,
            attributes_seen,
            target_features,
            target_labels,
            attributes_full,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.source_features.cols()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            k_s: self.k_s,
            k_t: self.k_t,
            d: self.d,
            feature_dim: self.feature_dim(),
        }
    }

    /// Number of unseen classes.
    pub fn k_u(&self) -> usize {
        self.k_t - self.k_s
    }
}

/// Scales each row to unit L2 norm. Rows already within 1e-12 of unit norm
/// are left untouched. On a zero row returns its index.
fn normalize_rows(mut m: Matrix) -> std::result::Result<Matrix, usize> {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let norm = dot(row, row).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(r);
        }
        if (norm - 1.0).abs() > 1e-12 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(m)
}

/// `mask[i] = (y_t[i] < k_s)`
pub fn target_seen_mask(ds: &Dataset) -> Result<Vec<bool>> {
    let yt = ds
        .target_labels
        .as_ref()
        .ok_or_else(|| Error::LabelsUnavailable("dataset has no target labels".into()))?;
    Ok(yt.iter().map(|&y| y < ds.k_s).collect())
}

fn load_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| load_err(path, e.to_string()))?;
    let width = rdr.headers().map_err(|e| load_err(path, e.to_string()))?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| load_err(path, format!("row {i}: {e}")))?;
        if rec.len() != width {
            return Err(load_err(path, format!("row {i} has {} cells, header has {width}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| load_err(path, format!("row {i}, column {j}: `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(load_err(path, format!("row {i}, column {j}: non-finite value")));
            }
            data.push(v);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, width, data).map_err(|e| load_err(path, e.to_string()))
}

fn read_labels(path: &Path, bound: usize) -> Result<Vec<usize>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| load_err(path, e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| load_err(path, format!("row {i}: {e}")))?;
        if rec.len() != 1 {
            return Err(load_err(path, format!("row {i} has {} cells, expected 1", rec.len())));
        }
        let y: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| load_err(path, format!("row {i}: `{}` is not a label", &rec[0])))?;
        if y >= bound {
            return Err(load_err(path, format!("row {i}: label {y} outside 0..{bound}")));
        }
        out.push(y);
    }
    Ok(out)
}

fn write_matrix(path: &Path, m: &Matrix, prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..m.cols()).map(|j| format!("{prefix}{j}")))?;
    for row in m.iter_rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label"])?;
    for y in labels {
        w.write_record([y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let file = |name: &str| -> PathBuf { dir.join(name) };
    let manifest_path = file(MANIFEST);
    let manifest: Manifest = serde_json::from_str(
        &fs::read_to_string(&manifest_path).map_err(|e| load_err(&manifest_path, e.to_string()))?,
    )
    .map_err(|e| load_err(&manifest_path, e.to_string()))?;
    let Manifest { k_s, k_t, d, feature_dim } = manifest;
    if k_s == 0 || k_s >= k_t {
        return Err(load_err(&manifest_path, format!("need 0 < k_s < k_t, got {k_s}, {k_t}")));
    }

    let check_cols = |path: &Path, m: &Matrix, want: usize| -> Result<()> {
        if m.cols() != want {
            return Err(load_err(path, format!("{} columns, manifest says {want}", m.cols())));
        }
        Ok(())
    };

    let p = file(SOURCE_FEATURES);
    let xs = read_matrix(&p)?;
    check_cols(&p, &xs, feature_dim)?;
    let p = file(SOURCE_LABELS);
    let ys = read_labels(&p, k_s)?;
    if ys.len() != xs.rows() {
        return Err(load_err(&p, format!("{} labels for {} source rows", ys.len(), xs.rows())));
    }
    let p = file(ATTRIBUTES_SEEN);
    let a = read_matrix(&p)?;
    check_cols(&p, &a, d)?;
    if a.rows() != k_s {
        return Err(load_err(&p, format!("{} attribute rows, manifest says k_s={k_s}", a.rows())));
    }
    check_attribute_rows(&p, &a)?;
    let p = file(TARGET_FEATURES);
    let xt = read_matrix(&p)?;
    check_cols(&p, &xt, feature_dim)?;

    let p = file(TARGET_LABELS);
    let yt = if p.exists() {
        let yt = read_labels(&p, k_t)?;
        if yt.len() != xt.rows() {
            return Err(load_err(&p, format!("{} labels for {} target rows", yt.len(), xt.rows())));
        }
        Some(yt)
    } else {
        None
    };
    let p = file(ATTRIBUTES_FULL);
    let af = if p.exists() {
        let af = read_matrix(&p)?;
        check_cols(&p, &af, d)?;
        if af.rows() != k_t {
            return Err(load_err(&p, format!("{} attribute rows, manifest says k_t={k_t}", af.rows())));
        }
        check_attribute_rows(&p, &af)?;
        Some(af)
    } else {
        None
    };
    Dataset::new(k_s, k_t, xs, ys, a, xt, yt, af)
}

fn check_attribute_rows(path: &Path, a: &Matrix) -> Result<()> {
    for (r, row) in a.iter_rows().enumerate() {
        if dot(row, row) == 0.0 {
            return Err(load_err(path, format!("row {r} has zero norm")));
        }
    }
    Ok(())
}

/// Writes `ds` in the directory layout read by [`load_dataset`].
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&ds.manifest())?)?;
    write_matrix(&dir.join(SOURCE_FEATURES), &ds.source_features, "f")?;
    write_labels(&dir.join(SOURCE_LABELS), &ds.source_labels)?;
    write_matrix(&dir.join(ATTRIBUTES_SEEN), &ds.attributes_seen, "a")?;
    write_matrix(&dir.join(TARGET_FEATURES), &ds.target_features, "f")?;
    if let Some(yt) = &ds.target_labels {
        write_labels(&dir.join(TARGET_LABELS), yt)?;
    }
    if let Some(af) = &ds.attributes_full {
        write_matrix(&dir.join(ATTRIBUTES_FULL), af, "a")?;
    }
    Ok(())
}

/// Parameters of [`generate_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub k_s: usize,
    pub k_t: usize,
    pub d: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    /// Minimum distance between class means, in units of `within_std`.
    pub separation: f64,
    /// Root-mean-square distance of a sample from its class mean.
    pub within_std: f64,
    /// Standard deviation of the per-entry noise added to attribute patterns
    /// before normalization.
    pub attribute_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            k_s: 3,
            k_t: 5,
            d: 3,
            feature_dim: 32,
            samples_per_class: 100,
            separation: 10.0,
            within_std: 1.0,
            attribute_noise: 0.05,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k_s == 0 || self.k_s >= self.k_t {
            return bad(format!("need 0 < k_s < k_t, got {} and {}", self.k_s, self.k_t));
        }
        if self.d < self.k_s {
            return bad(format!("d={} must be at least k_s={}", self.d, self.k_s));
        }
        if self.feature_dim < self.d {
            return bad(format!("feature_dim={} must be at least d={}", self.feature_dim, self.d));
        }
        // proper subsets with two or more members; the full set centers to zero
        let combos = ((1u128 << self.k_s.min(100)) - 2).saturating_sub(self.k_s as u128);
        if ((self.k_t - self.k_s) as u128) > combos {
            return bad(format!(
                "{} unseen classes need distinct combinations of {} seen attributes (at most {combos})",
                self.k_t - self.k_s,
                self.k_s
            ));
        }
        if self.samples_per_class < 2 {
            return bad("samples_per_class must be at least 2".into());
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return bad(format!("separation must be finite and >= 0, got {}", self.separation));
        }
        if !(self.within_std > 0.0) || !self.within_std.is_finite() {
            return bad(format!("within_std must be positive, got {}", self.within_std));
        }
        if !(self.attribute_noise >= 0.0) || !self.attribute_noise.is_finite() {
            return bad(format!("attribute_noise must be >= 0, got {}", self.attribute_noise));
        }
        Ok(())
    }
}

/// Subsets of `0..k_s` with at least two members and fewer than `k_s`,
/// ordered by size then lexicographically.
fn attribute_combinations(k_s: usize, count: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for size in 2..k_s {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            if out.len() == count {
                return out;
            }
            out.push(idx.clone());
            // next combination
            let mut i = size;
            while i > 0 && idx[i - 1] == k_s - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

/// Orthonormal `rows x cols` frame (rows ≥ cols) by Gram-Schmidt on Gaussian columns.
fn random_frame(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| normal.sample(rng)).collect();
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    let mut m = Matrix::zeros(rows, cols);
    for (j, b) in basis.iter().enumerate() {
        for i in 0..rows {
            m[(i, j)] = b[i];
        }
    }
    m
}

/// Generates Gaussian classes built from a shared set of binary attributes.
///
/// Seen class `k` carries attribute `k` alone; the `j`-th unseen class
/// carries a distinct proper subset of the seen attributes (pairs first,
/// then triples, ...). Writing `π_k` for the class's attribute pattern with
/// unit L1 mass, unseen patterns are convex mixtures of seen ones.
///
/// Feature means are `s · R π_k` with `R` a random orthonormal frame and `s`
/// set so the closest pair of means is `separation · within_std` apart, so
/// an unseen class sits inside the hull of the seen classes it mixes.
/// Semantic vectors are `π_k` centered on the seen-class mean, perturbed by
/// Gaussian noise and unit-normalized. Centering removes the direction shared
/// by every pattern, which seen classes alone cannot pin down under a
/// ranking objective. Samples add isotropic noise with RMS radius
/// `within_std`. The source set holds the seen classes only; the target set
/// holds all classes.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (k_s, k_t, d, dim) = (spec.k_s, spec.k_t, spec.d, spec.feature_dim);

    let mut patterns = Matrix::zeros(k_t, d);
    for k in 0..k_s {
        patterns[(k, k)] = 1.0;
    }
    for (j, combo) in attribute_combinations(k_s, k_t - k_s).iter().enumerate() {
        for &c in combo {
            patterns[(k_s + j, c)] = 1.0 / combo.len() as f64;
        }
    }

    let mut semantic = patterns.clone();
    for r in 0..k_t {
        let row = semantic.row_mut(r);
        row[..k_s].iter_mut().for_each(|v| *v -= 1.0 / k_s as f64);
    }
    for v in semantic.data_mut() {
        *v += spec.attribute_noise * normal.sample(&mut rng);
    }
    let attributes = normalize_rows(semantic)
        .map_err(|r| Error::Config(format!("attribute pattern {r} collapsed to zero")))?;

    let frame = random_frame(dim, d, &mut rng);
    let directions = patterns.matmul_nt(&frame)?; // k_t x dim, isometric image
    let mut min_gap = f64::INFINITY;
    for a in 0..k_t {
        for b in (a + 1)..k_t {
            min_gap = min_gap.min(crate::numkernel::sq_dist(directions.row(a), directions.row(b)).sqrt());
        }
    }
    let scale = if min_gap > 0.0 {
        spec.separation * spec.within_std / min_gap
    } else {
        0.0
    };
    let means = directions.scale(scale);
    let per_coord = spec.within_std / (dim as f64).sqrt();

    let sample = |classes: std::ops::Range<usize>, rng: &mut ChaCha8Rng| -> (Matrix, Vec<usize>) {
        let n = classes.len() * spec.samples_per_class;
        let mut x = Matrix::zeros(n, dim);
        let mut y = Vec::with_capacity(n);
        let mut r = 0;
        for k in classes {
            for _ in 0..spec.samples_per_class {
                for (c, v) in x.row_mut(r).iter_mut().enumerate() {
                    *v = means[(k, c)] + per_coord * normal.sample(rng);
                }
                y.push(k);
                r += 1;
            }
        }
        (x, y)
    };
    let (xs, ys) = sample(0..k_s, &mut rng);
    let (xt, yt) = sample(0..k_t, &mut rng);
    let seen = attributes.slice_rows(0, k_s);
    Dataset::new(k_s, k_t, xs, ys, seen, xt, Some(yt), Some(attributes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_order() {
        assert_eq!(
            attribute_combinations(3, 4),
            vec![vec![0, 1], vec![0, 2], vec![1, 2]]
        );
        assert_eq!(attribute_combinations(4, 2), vec![vec![0, 1], vec![0, 2]]);
        assert_eq!(attribute_combinations(4, 20).len(), 10);
    }

    #[test]
    fn normalization_is_idempotent_on_unit_rows() {
        let m = Matrix::from_rows(&[[0.6, 0.8], [1.0, 0.0]]).unwrap();
        assert_eq!(normalize_rows(m.clone()).unwrap(), m);
        assert_eq!(normalize_rows(Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]).unwrap()), Err(1));
    }

    #[test]
    fn synthetic_is_deterministic_and_valid() {
        let spec = SynthSpec { samples_per_class: 5, ..SynthSpec::default() };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source_features.rows(), 15);
        assert_eq!(a.target_features.rows(), 25);
        assert!(a.source_labels.iter().all(|&y| y < 3));
    }

    #[test]
    fn unseen_classes_mix_seen_ones() {
        let spec = SynthSpec { attribute_noise: 0.0, samples_per_class: 400, ..SynthSpec::default() };
        let ds = generate_synthetic(&spec).unwrap();
        let attrs = ds.attributes_full.as_ref().unwrap();
        for row in attrs.iter_rows() {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
        let mean = |k: usize| -> Vec<f64> {
            let y = ds.target_labels.as_ref().unwrap();
            let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == k).collect();
            let x = ds.target_features.select_rows(&idx);
            x.column_means().into_vec()
        };
        // unseen class 3 mixes seen 0 and 1
        let (m0, m1, m3) = (mean(0), mean(1), mean(3));
        let gap = crate::numkernel::sq_dist(&m0, &m1).sqrt();
        let mid: Vec<f64> = m0.iter().zip(&m1).map(|(a, b)| (a + b) / 2.0).collect();
        assert!(crate::numkernel::sq_dist(&mid, &m3).sqrt() < 0.05 * gap);
    }

    #[test]
    fn zero_separation_collapses_means() {
        let spec = SynthSpec { separation: 0.0, samples_per_class: 4, ..SynthSpec::default() };
        let ds = generate_synthetic(&spec).unwrap();
        assert_eq!(ds.target_features.rows(), 20);
    }

    #[test]
    fn seen_mask_counts() {
        let spec = SynthSpec { samples_per_class: 7, ..SynthSpec::default() };
        let ds = generate_synthetic(&spec).unwrap();
        let mask = target_seen_mask(&ds).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 3 * 7);
        let mut no_labels = ds;
        no_labels.target_labels = None;
        assert!(matches!(target_seen_mask(&no_labels), Err(Error::LabelsUnavailable(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let base = SynthSpec::default();
        for spec in [
            SynthSpec { k_s: 5, ..base },
            SynthSpec { samples_per_class: 1, ..base },
            SynthSpec { separation: -1.0, ..base },
            SynthSpec { d: 2, ..base },
            SynthSpec { k_s: 2, k_t: 4, ..base },
            SynthSpec { k_s: 2, k_t: 3, ..base },
            SynthSpec { k_t: 7, ..base },
        ] {
            assert!(generate_synthetic(&spec).is_err(), "{spec:?}");
        }
    }
}
