use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

/// Per-pixel class probabilities along the channel axis (max-shifted for stability).
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = logits.shape();
    let hw = h * w;
    let mut out = logits.zeros_like();
    let mut row = vec![0.0f64; c];
    for s in 0..n {
        let src = logits.sample(s);
        for p in 0..hw {
            let mut max = f64::NEG_INFINITY;
            for k in 0..c {
                row[k] = src[k * hw + p].f64();
                max = max.max(row[k]);
            }
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            let dst = out.sample_mut(s);
            for k in 0..c {
                dst[k * hw + p] = T::of(row[k] / z);
            }
        }
    }
    out
}

/// Mean softmax cross-entropy over all pixels and its gradient
/// `(softmax − onehot) / pixel_count`. `targets` holds 1-based class labels in
/// `(sample, row, col)` order.
pub fn softmax_ce_loss<T: Scalar>(logits: &Tensor<T>, targets: &[u8]) -> Result<(f64, Tensor<T>)> {
    let [n, c, h, w] = logits.shape();
    let hw = h * w;
    if targets.len() != n * hw {
        return Err(Error::Shape(format!(
            "{} targets for {n} samples of {h}x{w}",
            targets.len()
        )));
    }
    if let Some((i, &t)) = targets.iter().enumerate().find(|(_, &t)| t == 0 || t as usize > c) {
        let p = i % hw;
        return Err(Error::LabelOutOfRange {
            label: t,
            max: c,
            row: p / w,
            col: p % w,
        });
    }
    let mut grad = softmax(logits);
    let count = (n * hw) as f64;
    let mut loss = 0.0;
    for s in 0..n {
        let g = grad.sample_mut(s);
        for p in 0..hw {
            let t = targets[s * hw + p] as usize - 1;
            let prob = g[t * hw + p].f64();
            loss -= prob.max(f64::MIN_POSITIVE).ln();
            g[t * hw + p] = T::of(prob - 1.0);
        }
    }
    let scale = T::of(1.0 / count);
    for v in grad.data_mut() {
        *v *= scale;
    }
    Ok((loss / count, grad))
}

/// Per-pixel argmax as 1-based labels; ties go to the lowest class.
pub fn argmax_labels<T: Scalar>(scores: &Tensor<T>) -> Vec<u8> {
    let [n, c, h, w] = scores.shape();
    let hw = h * w;
    let mut out = Vec::with_capacity(n * hw);
    for s in 0..n {
        let src = scores.sample(s);
        for p in 0..hw {
            let mut best = 0;
            for k in 1..c {
                if src[k * hw + p] > src[best * hw + p] {
                    best = k;
                }
            }
            out.push(best as u8 + 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = Tensor::<f64>::zeros([2, 6, 3, 3]).unwrap();
        let (loss, grad) = softmax_ce_loss(&logits, &[4; 18]).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-12);
        assert!((grad.sum()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logit_gives_zero_loss() {
        let mut logits = Tensor::<f64>::zeros([1, 3, 1, 1]).unwrap();
        logits.set(0, 1, 0, 0, 100.0);
        let (loss, _) = softmax_ce_loss(&logits, &[2]).unwrap();
        assert!(loss < 1e-40);
    }

    #[test]
    fn targets_validated() {
        let logits = Tensor::<f32>::zeros([1, 3, 1, 2]).unwrap();
        assert!(softmax_ce_loss(&logits, &[1, 4]).is_err());
        assert!(softmax_ce_loss(&logits, &[0, 1]).is_err());
        assert!(softmax_ce_loss(&logits, &[1]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data: Vec<f64> = (0..2 * 4 * 2 * 2).map(|v| ((v * 37 % 17) as f64 - 8.0) * 0.3).collect();
        let logits = Tensor::from_vec([2, 4, 2, 2], data).unwrap();
        let targets = [1, 2, 3, 4, 4, 3, 2, 1];
        let (_, grad) = softmax_ce_loss(&logits, &targets).unwrap();
        let eps = 1e-5;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus.data_mut()[i] += eps;
            let mut minus = logits.clone();
            minus.data_mut()[i] -= eps;
            let num = (softmax_ce_loss(&plus, &targets).unwrap().0 - softmax_ce_loss(&minus, &targets).unwrap().0)
                / (2.0 * eps);
            let ana = grad.data()[i];
            assert!((num - ana).abs() <= 1e-4 * num.abs().max(ana.abs()).max(1e-6), "{num} vs {ana}");
        }
    }

    #[test]
    fn argmax_tie_picks_first_class() {
        let logits = Tensor::<f32>::full([1, 6, 1, 1], 0.5).unwrap();
        assert_eq!(argmax_labels(&logits), vec![1]);
        let probs = softmax(&Tensor::<f32>::from_vec([1, 3, 1, 2], vec![1.0, -2.0, 0.5, 3.0, 9.0, 0.0]).unwrap());
        for p in 0..2 {
            let s: f32 = (0..3).map(|k| probs.at(0, k, 0, p)).sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }
}
