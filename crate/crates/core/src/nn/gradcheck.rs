//! Central finite-difference verification of analytic gradients (f64 only).
//!
//! Each checked entry is probed at steps `ε`, `ε/2` and `ε/4`. For a smooth function
//! the second differences of successive probes scale by exactly 2 up to `O(ε³)`; when
//! either pair does not, a relu or max-pool kink lies within reach and the entry is
//! skipped. (A single pair has a blind spot: a kink at distance `ε/3` gives the right
//! ratio. The second pair's blind spot is at `ε/6`, so the two never coincide.) The
//! numeric estimate is the Richardson combination of the `ε` and `ε/2` central
//! differences.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seeding;

use super::tensor::Tensor;
use super::Module;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Check at most this many randomly chosen entries per tensor (input or parameter).
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries left out because the function is not differentiable near them.
    pub skipped: usize,
    /// Location of the largest error, e.g. `input[17]` or `conv.weight[3]`.
    pub worst: Option<String>,
}

const REL_FLOOR: f64 = 1e-6;
const KINK_ABS: f64 = 1e-7;
const KINK_REL: f64 = 1e-5;

/// Scalar head `L = Σ r ⊙ y` with a fixed random `r`, so every output entry matters.
pub fn grad_check<M: Module<f64> + ?Sized>(
    module: &mut M,
    input: &Tensor<f64>,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport> {
    let shape = module.forward(input, true)?.shape();
    let mut rng = seeding::rng(cfg.seed, "grad-check-projection", &[]);
    let n: usize = shape.iter().product();
    let r = Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    grad_check_with(module, input, cfg, |y| {
        if y.shape() != r.shape() {
            return Err(Error::Shape("output shape changed under perturbation".into()));
        }
        let loss = y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
        Ok((loss, r.clone()))
    })
}

/// Checks `head(module(input))`, where `head` returns a scalar loss and its gradient
/// with respect to the module output.
pub fn grad_check_with<M, H>(module: &mut M, input: &Tensor<f64>, cfg: GradCheckConfig, head: H) -> Result<GradCheckReport>
where
    M: Module<f64> + ?Sized,
    H: Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)>,
{
    module.visit_params(&mut |p| p.zero_grad());
    let y = module.forward(input, true)?;
    let (f0, dy) = head(&y)?;
    let dx = module.backward(&dy)?;

    let mut analytic: Vec<(String, Vec<f64>)> = vec![("input".into(), dx.into_vec())];
    module.visit_params(&mut |p| {
        if p.trainable {
            analytic.push((p.name.clone(), p.grad.data().to_vec()));
        }
    });

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        worst: None,
    };
    let mut rng = seeding::rng(cfg.seed, "grad-check-entries", &[]);
    for (t, (name, grads)) in analytic.iter().enumerate() {
        let entries: Vec<usize> = match cfg.max_per_tensor {
            Some(k) if k < grads.len() => {
                let mut v = sample(&mut rng, grads.len(), k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..grads.len()).collect(),
        };
        for i in entries {
            let mut eval = |delta: f64| -> Result<f64> {
                if t == 0 {
                    let mut x = input.clone();
                    x.data_mut()[i] += delta;
                    let y = module.forward(&x, true)?;
                    Ok(head(&y)?.0)
                } else {
                    nudge(module, t - 1, i, delta);
                    let y = module.forward(input, true);
                    nudge(module, t - 1, i, -delta);
                    Ok(head(&y?)?.0)
                }
            };
            let h = cfg.eps;
            let (p1, m1) = (eval(h)?, eval(-h)?);
            let (p2, m2) = (eval(h / 2.0)?, eval(-h / 2.0)?);
            let d1 = (p1 - m1) / (2.0 * h);
            let d2 = (p2 - m2) / h;
            let (p4, m4) = (eval(h / 4.0)?, eval(-h / 4.0)?);
            let d4 = (p4 - m4) / (h / 2.0);
            let a = (p1 - 2.0 * f0 + m1) / h;
            let b = (p2 - 2.0 * f0 + m2) / (h / 2.0);
            let c = (p4 - 2.0 * f0 + m4) / (h / 4.0);
            let bound = KINK_ABS + KINK_REL * d1.abs().max(d2.abs()).max(d4.abs());
            if (a - 2.0 * b).abs() > bound || (b - 2.0 * c).abs() > bound {
                report.skipped += 1;
                continue;
            }
            let numeric = (4.0 * d2 - d1) / 3.0;
            let g = grads[i];
            let rel = (numeric - g).abs() / numeric.abs().max(g.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some(format!("{name}[{i}]"));
            }
        }
    }
    // leave the module's caches consistent with the unperturbed input
    module.forward(input, true)?;
    Ok(report)
}

/// Adds `delta` to entry `i` of the `index`-th trainable parameter.
fn nudge<M: Module<f64> + ?Sized>(module: &mut M, index: usize, i: usize, delta: f64) {
    let mut k = 0;
    module.visit_params(&mut |p| {
        if p.trainable {
            if k == index {
                p.value.data_mut()[i] += delta;
            }
            k += 1;
        }
    });
}
