mod common;

use common::*;
use rand::Rng;
use zkzsl::losses::LossWeights;
use zkzsl::model::{Architecture, ModelParams, Net};
use zkzsl::numkernel::{compare_gradients, numerical_gradient, GradientBundle, Mode, DEFAULT_FD_STEP};
use zkzsl::training::{full_objective, pretrain_objective, Batch, FrozenTargets};
use zkzsl::Matrix;

const TOL: f64 = 1e-4;

fn arch(seed: u64) -> Architecture {
    let mut r = rng(seed);
    Architecture {
        feature_dim: r.gen_range(3..=6),
        hidden: vec![r.gen_range(3..=8), r.gen_range(3..=8)],
        h: r.gen_range(3..=5),
        d: r.gen_range(2..=4),
        k_s: 2,
        k_t: 4,
        dropout: 0.01,
    }
}

/// Random parameters with non-trivial batch-norm affine terms.
fn model(seed: u64) -> ModelParams {
    let mut p = ModelParams::new(arch(seed), seed).unwrap();
    let mut r = rng(seed + 1000);
    for (name, m) in p.blocks.iter_mut() {
        if name.ends_with("gamma") || name.ends_with("beta") || name.ends_with("bias") {
            m.data_mut().iter_mut().for_each(|v| *v += r.gen_range(-0.3..0.3));
        }
    }
    for stats in p.running.values_mut() {
        stats.mean.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-0.5..0.5));
        stats.var.data_mut().iter_mut().for_each(|v| *v = r.gen_range(0.5..2.0));
    }
    p
}

fn network_check(net: Net, mode: Mode) {
    for seed in 0..5 {
        let p = model(seed);
        let specs = p.arch.layers(net);
        let mut r = rng(seed + 50);
        let x = uniform(&mut r, 5, specs[0].input, 1.0);
        let probe = uniform(&mut r, 5, specs.last().unwrap().output, 1.0);
        let loss = |q: &ModelParams| -> zkzsl::Result<f64> {
            let (y, _) = q.forward(net, &x, mode, None)?;
            Ok(y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum())
        };
        let (y, cache) = p.forward(net, &x, mode, None).unwrap();
        let value: f64 = y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
        let (dx, grads) = p.backward(&cache, &probe).unwrap();
        let mut analytic = GradientBundle::new(value);
        analytic.grads = grads;
        let numeric = numerical_gradient(loss, &p, DEFAULT_FD_STEP).unwrap();
        // blocks of other networks are untouched by this pass
        let mut numeric = numeric;
        let prefix = format!("{net}.");
        numeric.bundle.grads.retain(|k, _| k.starts_with(&prefix));
        let rep = compare_gradients(&analytic, &numeric);
        assert!(rep.passes(TOL), "{net} {mode:?} seed {seed}: {:.3e} at {:?}", rep.max_rel_error, rep.worst);

        let input = params(&[("x", x.clone())]);
        let rep = check(&input, |q| {
            let (y, _) = p.forward(net, &q["x"], mode, None)?;
            let v = y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
            Ok(GradientBundle::new(v).with("x", dx.clone()))
        });
        assert!(rep.passes(TOL), "{net} input seed {seed}: {:.3e}", rep.max_rel_error);
    }
}

#[test]
fn encoder_train_and_eval() {
    network_check(Net::Encoder, Mode::Train);
    network_check(Net::Encoder, Mode::Eval);
}

#[test]
fn decoder_train_and_eval() {
    network_check(Net::Decoder, Mode::Train);
    network_check(Net::Decoder, Mode::Eval);
}

#[test]
fn head_train_and_eval() {
    network_check(Net::Head, Mode::Train);
    network_check(Net::Head, Mode::Eval);
}

fn batch(p: &ModelParams, seed: u64) -> (Batch, Matrix) {
    let mut r = rng(seed + 77);
    let f = p.arch.feature_dim;
    let b = Batch {
        x_s: uniform(&mut r, 3, f, 1.0),
        y_s: vec![0, 1, 1],
        x_t: uniform(&mut r, 3, f, 1.0),
    };
    (b, uniform(&mut r, p.arch.k_s, p.arch.d, 1.0))
}

#[test]
fn full_objective_over_all_blocks() {
    for drift in [true, false] {
        for seed in 0..5 {
            let mut p = model(seed);
            let mut r = rng(seed + 9);
            p.blocks.insert("centroids".into(), uniform(&mut r, p.arch.k_t, p.arch.h, 1.0));
            let (b, attrs) = batch(&p, seed);
            let w = LossWeights { alpha: 0.8, beta: 1.7, drift_correction: drift };
            let (z, _) = p.encode(&b.x_s.vstack(&b.x_t).unwrap(), Mode::Train, None).unwrap();
            let frozen = FrozenTargets::from_embeddings(&z.slice_rows(3, 6), p.centroids()).unwrap();
            let (step, _) = full_objective(&p, &b, &attrs, &w, Some(&frozen), None).unwrap();
            let mut analytic = GradientBundle::new(step.total);
            analytic.grads = step.grads;
            assert_eq!(analytic.grads.len(), p.blocks.len());
            let numeric = numerical_gradient(
                |q: &ModelParams| Ok(full_objective(q, &b, &attrs, &w, Some(&frozen), None)?.0.total),
                &p,
                DEFAULT_FD_STEP,
            )
            .unwrap();
            let rep = compare_gradients(&analytic, &numeric);
            assert!(
                rep.passes(TOL),
                "drift {drift} seed {seed}: {:.3e} at {:?} (skipped {})",
                rep.max_rel_error,
                rep.worst,
                rep.skipped
            );
        }
    }
}

#[test]
fn pretrain_objective_over_all_blocks() {
    for seed in 0..5 {
        let p = model(seed);
        let (b, attrs) = batch(&p, seed);
        let (step, _) = pretrain_objective(&p, &b, &attrs, 0.6, None).unwrap();
        let mut analytic = GradientBundle::new(step.total);
        analytic.grads = step.grads;
        assert!(!analytic.grads.contains_key("centroids"));
        let numeric = numerical_gradient(
            |q: &ModelParams| Ok(pretrain_objective(q, &b, &attrs, 0.6, None)?.0.total),
            &p,
            DEFAULT_FD_STEP,
        )
        .unwrap();
        // Every consumer of z starts with batch norm, so the encoder's output
        // bias has an exactly zero gradient here; only check it is zero.
        let last = p.arch.layers(Net::Encoder).len() - 1;
        let bias = format!("encoder.{last}.bias");
        let mut numeric = numeric;
        let nb = numeric.bundle.grads.remove(&bias).unwrap();
        let ab = analytic.grads.remove(&bias).unwrap();
        assert!(ab.data().iter().all(|v| v.abs() < 1e-12), "{ab:?}");
        assert!(nb.data().iter().all(|v| v.abs() < 1e-8), "{nb:?}");
        let rep = compare_gradients(&analytic, &numeric);
        assert!(rep.passes(TOL), "seed {seed}: {:.3e} at {:?}", rep.max_rel_error, rep.worst);
    }
}

#[test]
fn zero_weights_reduce_to_clustering_objective() {
    let p = model(3);
    let (b, attrs) = batch(&p, 3);
    let w = LossWeights { alpha: 0.0, beta: 0.0, drift_correction: false };
    let (step, _) = full_objective(&p, &b, &attrs, &w, None, None).unwrap();
    let l = step.losses;
    assert_eq!(step.total, l.l_self + l.l_reg + l.l_cent);
    assert!(l.l_a > 0.0 || l.l_align >= 0.0);
}
