use std::collections::BTreeMap;

use super::Matrix;
use crate::error::{Error, Result};

/// Named access to parameter blocks, used by the optimizer and the
/// finite-difference oracle.
pub trait ParamAccess {
    fn param_names(&self) -> Vec<String>;
    fn param(&self, name: &str) -> Option<&Matrix>;
    fn param_mut(&mut self, name: &str) -> Option<&mut Matrix>;
}

impl ParamAccess for BTreeMap<String, Matrix> {
    fn param_names(&self) -> Vec<String> {
        self.keys().cloned().collect()
    }
    fn param(&self, name: &str) -> Option<&Matrix> {
        self.get(name)
    }
    fn param_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.get_mut(name)
    }
}

/// A scalar loss value together with its gradient per parameter block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientBundle {
    pub value: f64,
    pub grads: BTreeMap<String, Matrix>,
}

impl GradientBundle {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            grads: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, grad: Matrix) -> Self {
        self.grads.insert(name.into(), grad);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.grads.get(name)
    }

    /// Adds `weight · other` into `self`, summing gradients of shared blocks.
    pub fn accumulate(&mut self, other: &GradientBundle, weight: f64) -> Result<()> {
        self.value += weight * other.value;
        for (name, g) in &other.grads {
            match self.grads.get_mut(name) {
                Some(existing) => existing.axpy(weight, g)?,
                None => {
                    self.grads.insert(name.clone(), g.scale(weight));
                }
            }
        }
        Ok(())
    }
}

/// Central-difference gradient plus the entries where the loss looked non-smooth.
#[derive(Debug, Clone)]
pub struct NumericalGradient {
    pub bundle: GradientBundle,
    /// `(block, flat index)` of entries whose one-sided slopes disagree.
    pub nonsmooth: Vec<(String, usize)>,
}

impl NumericalGradient {
    pub fn is_nonsmooth(&self, name: &str, idx: usize) -> bool {
        self.nonsmooth.iter().any(|(n, i)| n == name && *i == idx)
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central finite differences `(L(p+h·e_i) − L(p−h·e_i)) / 2h` over every
/// entry of every parameter block.
pub fn numerical_gradient<P, F>(mut loss_fn: F, params: &P, h: f64) -> Result<NumericalGradient>
where
    P: ParamAccess + Clone,
    F: FnMut(&P) -> Result<f64>,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::Oracle(format!("step must be positive, got {h}")));
    }
    let mut work = params.clone();
    let base = loss_fn(&work)?;
    if !base.is_finite() {
        return Err(Error::Oracle("non-finite loss at the unperturbed point".into()));
    }
    let mut bundle = GradientBundle::new(base);
    let mut nonsmooth = Vec::new();
    for name in params.param_names() {
        let len = params.param(&name).map_or(0, |m| m.data().len());
        let shape = params.param(&name).map(Matrix::shape).unwrap_or((0, 0));
        let mut grad = Matrix::zeros(shape.0, shape.1);
        for i in 0..len {
            let orig = work.param(&name).expect("block exists").data()[i];
            work.param_mut(&name).expect("block exists").data_mut()[i] = orig + h;
            let plus = loss_fn(&work)?;
            work.param_mut(&name).expect("block exists").data_mut()[i] = orig - h;
            let minus = loss_fn(&work)?;
            work.param_mut(&name).expect("block exists").data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Oracle(format!(
                    "non-finite loss when perturbing `{name}`[{i}]"
                )));
            }
            grad.data_mut()[i] = (plus - minus) / (2.0 * h);
            let right = (plus - base) / h;
            let left = (base - minus) / h;
            if (right - left).abs() > 1e-2 * right.abs().max(left.abs()).max(1.0) {
                nonsmooth.push((name.clone(), i));
            }
        }
        bundle.grads.insert(name, grad);
    }
    Ok(NumericalGradient { bundle, nonsmooth })
}

/// Outcome of comparing an analytic gradient against the oracle.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Elementwise relative error `|a − n| / max(|a|, |n|, 1e-8)`, skipping
/// entries the oracle flagged as kinks. Blocks missing from `analytic` count
/// as zero gradients.
pub fn compare_gradients(analytic: &GradientBundle, numeric: &NumericalGradient) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    for (name, num) in &numeric.bundle.grads {
        let ana = analytic.grads.get(name);
        for (i, &n) in num.data().iter().enumerate() {
            if numeric.is_nonsmooth(name, i) {
                report.skipped += 1;
                continue;
            }
            let a = ana.map_or(0.0, |m| m.data()[i]);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = if rel.is_finite() { rel } else { f64::INFINITY };
                report.worst = Some((name.clone(), i));
            }
        }
    }
    report
}
