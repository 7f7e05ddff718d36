mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zkzsl::clustering::{hungarian_map, kmeans_fit, pseudo_labels, KMEANS_TOL};
use zkzsl::inference::semantic_recovery_predict;
use zkzsl::losses::{cluster_assignment, structural_alignment_loss, target_distribution, AssignmentMatrix};
use zkzsl::metrics::{harmonic, per_class_accuracy, unseen_accuracy};
use zkzsl::numkernel::{affine_forward, dropout_apply, Mode};
use zkzsl::Matrix;

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-scale..scale, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn stochastic(rows: usize, cols: usize) -> impl Strategy<Value = AssignmentMatrix> {
    prop::collection::vec(0.01f64..1.0, rows * cols).prop_map(move |v| {
        let mut m = Matrix::from_vec(rows, cols, v).unwrap();
        for r in 0..rows {
            let row = m.row_mut(r);
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        AssignmentMatrix::new(m).unwrap()
    })
}

fn is_row_stochastic(m: &Matrix) -> bool {
    m.iter_rows().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-9 && r.iter().all(|&v| v >= 0.0))
}

fn permuted_columns(m: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        for (c, &p) in perm.iter().enumerate() {
            out[(r, c)] = m[(r, p)];
        }
    }
    out
}

/// Labels over classes `0..k` in which every class occurs at least once.
fn covering_labels(k: usize, extra: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    let n = k + extra;
    (prop::collection::vec(0..k, extra), prop::collection::vec(0..k, n)).prop_map(move |(tail, pred)| {
        let truth: Vec<usize> = (0..k).chain(tail).collect();
        (truth, pred)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assignment_rows_are_distributions(z in matrix(6, 3, 5.0), mu in matrix(4, 3, 5.0)) {
        let p = cluster_assignment(&z, &mu).unwrap();
        prop_assert!(is_row_stochastic(p.as_matrix()));
    }

    #[test]
    fn assignment_is_translation_invariant(z in matrix(5, 3, 3.0), mu in matrix(3, 3, 3.0), t in prop::collection::vec(-10.0f64..10.0, 3)) {
        let shift = |m: &Matrix| {
            let mut s = m.clone();
            for r in 0..s.rows() {
                s.row_mut(r).iter_mut().zip(&t).for_each(|(v, d)| *v += d);
            }
            s
        };
        let a = cluster_assignment(&z, &mu).unwrap();
        let b = cluster_assignment(&shift(&z), &shift(&mu)).unwrap();
        for (x, y) in a.as_matrix().data().iter().zip(b.as_matrix().data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn target_distribution_is_row_stochastic(p in stochastic(7, 4)) {
        prop_assert!(is_row_stochastic(target_distribution(&p).as_matrix()));
    }

    #[test]
    fn uniform_assignment_is_a_fixed_point(n in 1usize..10, k in 1usize..6) {
        let p = AssignmentMatrix::new(Matrix::filled(n, k, 1.0 / k as f64)).unwrap();
        let q = target_distribution(&p);
        for v in q.as_matrix().data() {
            prop_assert!((v - 1.0 / k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn alignment_is_symmetric_and_nonnegative(a in stochastic(5, 3), b in stochastic(5, 3)) {
        let ab = structural_alignment_loss(&a, &b).unwrap().value;
        let ba = structural_alignment_loss(&b, &a).unwrap().value;
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert_eq!(structural_alignment_loss(&a, &a).unwrap().value, 0.0);
    }

    #[test]
    fn alignment_vanishes_iff_grams_match(a in stochastic(4, 3), b in stochastic(4, 3), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..3).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        // a column permutation keeps the Gram matrix
        let ap = AssignmentMatrix::new(permuted_columns(a.as_matrix(), &perm)).unwrap();
        prop_assert!(structural_alignment_loss(&a, &ap).unwrap().value < 1e-24);
        let gram_gap = a.as_matrix().matmul_nt(a.as_matrix()).unwrap()
            .sub(&b.as_matrix().matmul_nt(b.as_matrix()).unwrap()).unwrap()
            .frobenius_sq();
        let loss = structural_alignment_loss(&a, &b).unwrap().value;
        prop_assert!((loss - gram_gap / 4.0).abs() < 1e-12);
        prop_assert_eq!(loss == 0.0, gram_gap == 0.0);
    }

    #[test]
    fn alignment_ignores_shared_column_permutation(a in stochastic(5, 4), b in stochastic(5, 4), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let ap = AssignmentMatrix::new(permuted_columns(a.as_matrix(), &perm)).unwrap();
        let bp = AssignmentMatrix::new(permuted_columns(b.as_matrix(), &perm)).unwrap();
        let l0 = structural_alignment_loss(&a, &b).unwrap().value;
        let l1 = structural_alignment_loss(&ap, &bp).unwrap().value;
        prop_assert!((l0 - l1).abs() < 1e-12);
    }

    #[test]
    fn pseudo_labels_ignore_row_scale(p in stochastic(6, 4), s in prop::collection::vec(0.1f64..10.0, 6)) {
        let mut m = p.as_matrix().clone();
        for (r, f) in s.iter().enumerate() {
            m.row_mut(r).iter_mut().for_each(|v| *v *= f);
        }
        let scaled: Vec<usize> = m.iter_rows().map(zkzsl::numkernel::argmax).collect();
        prop_assert_eq!(pseudo_labels(&p), scaled);
    }

    #[test]
    fn hungarian_is_at_least_as_good_as_random_bijections(n in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let confusion: Vec<Vec<u64>> = (0..n).map(|_| common::labels(&mut rng, n, 30).into_iter().map(|v| v as u64).collect()).collect();
        let map = hungarian_map(&confusion, 0).unwrap();
        let best: u64 = map.mapping.iter().enumerate().map(|(r, &c)| confusion[r][c]).sum();
        let mut perm: Vec<usize> = (0..n).collect();
        for _ in 0..1000 {
            perm.shuffle(&mut rng);
            let v: u64 = perm.iter().enumerate().map(|(r, &c)| confusion[r][c]).sum();
            prop_assert!(best >= v);
        }
        prop_assert_eq!(best, common::best_permutation_count(&confusion));
    }

    #[test]
    fn kmeans_inertia_never_increases(x in matrix(30, 2, 10.0), k in 1usize..5, seed in any::<u64>()) {
        let r = kmeans_fit(&x, k, seed, 100, KMEANS_TOL).unwrap();
        for w in r.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
        prop_assert!((r.inertia - r.inertia_trace.last().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn per_class_accuracy_ignores_sample_order((truth, pred) in covering_labels(4, 12), seed in any::<u64>()) {
        let classes: Vec<usize> = (0..4).collect();
        let a = per_class_accuracy(&truth, &pred, &classes).unwrap();
        let mut idx: Vec<usize> = (0..truth.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let t: Vec<usize> = idx.iter().map(|&i| truth[i]).collect();
        let p: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
        let b = per_class_accuracy(&t, &p, &classes).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    // Balanced classes: the count-optimal map then also maximizes the
    // per-class mean, so the score cannot depend on how ties are broken.
    #[test]
    fn unseen_accuracy_ignores_cluster_relabeling(pred in prop::collection::vec(0usize..4, 16), seed in any::<u64>()) {
        let k_s = 2;
        let truth: Vec<usize> = (0..16).map(|i| k_s + i % 4).collect();
        let pred: Vec<usize> = pred.iter().map(|p| p + k_s).collect();
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let relabeled: Vec<usize> = pred.iter().map(|&p| k_s + perm[p - k_s]).collect();
        let (a, _) = unseen_accuracy(&truth, &pred, k_s, k_s + 4).unwrap();
        let (b, _) = unseen_accuracy(&truth, &relabeled, k_s, k_s + 4).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn harmonic_lies_between_min_and_twice_min(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let h = harmonic(a, b);
        let m = a.min(b);
        prop_assert!(h >= m - 1e-15 && h <= 2.0 * m + 1e-15);
        prop_assert!((0.0..=1.0).contains(&h));
    }

    #[test]
    fn semantic_recovery_ignores_positive_scale(a in matrix(6, 3, 1.0), attrs in matrix(4, 3, 1.0), s in 0.01f64..100.0) {
        let base = semantic_recovery_predict(&a, &attrs).unwrap();
        prop_assert_eq!(semantic_recovery_predict(&a.scale(s), &attrs).unwrap(), base);
    }

    #[test]
    fn affine_is_linear_in_its_input(x in matrix(3, 4, 2.0), y in matrix(3, 4, 2.0), w in matrix(4, 2, 2.0), c in -3.0f64..3.0) {
        let zero = Matrix::zeros(1, 2);
        let lhs = affine_forward(&x.add(&y.scale(c)).unwrap(), &w, &zero).unwrap();
        let rhs = affine_forward(&x, &w, &zero).unwrap().add(&affine_forward(&y, &w, &zero).unwrap().scale(c)).unwrap();
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((l - r).abs() < 1e-10);
        }
    }

    #[test]
    fn eval_dropout_is_identity(x in matrix(4, 5, 3.0), rate in 0.0f64..0.9, seed in any::<u64>()) {
        let (y, mask) = dropout_apply(&x, rate, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(y, x);
        prop_assert!(mask.is_none());
    }
}
