//! Training objectives and their gradients with respect to the network
//! output: reconstruction of untransformed originals, softmax
//! cross-entropy, and batch-all triplet loss.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Reconstruction loss over M views: half the summed squared difference
/// between each view's reconstruction and the untransformed original,
/// `L = 1/2 sum_t sum_i (x_i - xhat_it)^2`. A sum, not a mean; callers that
/// want readable curves divide the reported value by (N*M) themselves.
///
/// Returns the scalar loss and one gradient tensor per view.
pub fn dtae_loss(originals: &Tensor, reconstructions: &[Tensor]) -> Result<(f64, Vec<Tensor>)> {
    if reconstructions.is_empty() {
        return Err(Error::EmptyInput(
            "dtae loss needs at least one view".into(),
        ));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(reconstructions.len());
    for view in reconstructions {
        if view.shape != originals.shape {
            return Err(Error::shape("dtae loss", &originals.shape, &view.shape));
        }
        let mut grad = view.clone();
        for (g, x) in grad.values.iter_mut().zip(&originals.values) {
            let diff = *g - x;
            total += 0.5 * diff * diff;
            // d/dxhat of 1/2 (x - xhat)^2 = (xhat - x)
            *g = diff;
        }
        grads.push(grad);
    }
    Ok((total, grads))
}

/// Row-wise softmax with max subtraction; rows sum to 1.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if !logits.is_matrix() {
        return Err(Error::shape("softmax", &[0, 0], &logits.shape));
    }
    let mut out = logits.clone();
    let c = out.cols();
    for row in out.values.chunks_mut(c) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Mean negative log softmax probability of the true class.
///
/// Returns the scalar loss and its gradient with respect to the logits,
/// `(softmax - onehot) / N`.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if !logits.is_matrix() {
        return Err(Error::shape("cross entropy", &[0, 0], &logits.shape));
    }
    let (n, c) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::shape("cross entropy labels", &[n], &[labels.len()]));
    }
    if n == 0 {
        return Err(Error::EmptyInput("cross entropy on an empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::UnknownLabel(format!("{bad} with {c} logits")));
    }
    let probs = softmax(logits)?;
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (i, &label) in labels.iter().enumerate() {
        // Clamp avoids -inf on an exactly-zero probability; the gradient is
        // computed from the unclamped softmax.
        loss -= probs.at2(i, label).max(f64::MIN_POSITIVE).ln();
        grad.set2(i, label, grad.at2(i, label) - 1.0);
    }
    for g in &mut grad.values {
        *g /= n as f64;
    }
    Ok((loss / n as f64, grad))
}

/// Batch-all triplet loss over squared euclidean distances: the mean of
/// `max(0, d(a,p)^2 - d(a,n)^2 + margin)` over triplets where that hinge is
/// active, 0 when every triplet satisfies the margin.
///
/// Errors when no (anchor, positive, negative) triplet exists at all.
pub fn triplet_loss(reps: &Tensor, labels: &[usize], margin: f64) -> Result<(f64, Tensor)> {
    if !reps.is_matrix() {
        return Err(Error::shape("triplet loss", &[0, 0], &reps.shape));
    }
    let (n, d) = (reps.rows(), reps.cols());
    if labels.len() != n {
        return Err(Error::shape("triplet labels", &[n], &[labels.len()]));
    }
    if !margin.is_finite() || margin <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "triplet margin must be positive, got {margin}"
        )));
    }

    // Pairwise squared distances.
    let mut dist2 = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for k in 0..d {
                let diff = reps.at2(i, k) - reps.at2(j, k);
                acc += diff * diff;
            }
            dist2[i * n + j] = acc;
            dist2[j * n + i] = acc;
        }
    }

    let mut grad = Tensor::zeros(&[n, d]);
    let mut active = 0usize;
    let mut any_triplet = false;
    let mut total = 0.0;
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for neg in 0..n {
                if labels[neg] == labels[a] {
                    continue;
                }
                any_triplet = true;
                let hinge = dist2[a * n + p] - dist2[a * n + neg] + margin;
                if hinge <= 0.0 {
                    continue;
                }
                total += hinge;
                active += 1;
                for k in 0..d {
                    let (za, zp, zn) = (reps.at2(a, k), reps.at2(p, k), reps.at2(neg, k));
                    // d hinge / dz, per operand of the two squared distances.
                    grad.set2(a, k, grad.at2(a, k) + 2.0 * (zn - zp));
                    grad.set2(p, k, grad.at2(p, k) - 2.0 * (za - zp));
                    grad.set2(neg, k, grad.at2(neg, k) + 2.0 * (za - zn));
                }
            }
        }
    }

    if !any_triplet {
        return Err(Error::DegenerateBatch(
            "triplet loss needs two classes and a repeated class".into(),
        ));
    }
    if active == 0 {
        return Ok((0.0, grad));
    }
    for g in &mut grad.values {
        *g /= active as f64;
    }
    Ok((total / active as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: usize, cols: usize, values: &[f64]) -> Tensor {
        Tensor::from_values(&[rows, cols], values.to_vec()).unwrap()
    }

    // ---- reconstruction ----

    #[test]
    fn dtae_zero_when_views_match_original() {
        let x = t2(1, 4, &[1.0, 0.0, 0.0, 1.0]);
        let (loss, grads) = dtae_loss(&x, &[x.clone(), x.clone()]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| g.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn dtae_single_unit_error_is_half() {
        // x = [[1,0],[0,0]] reconstructed as all-zero: 1/2 * 1^2 = 0.5.
        let x = t2(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        let zero = Tensor::zeros(&[1, 4]);
        let (loss, grads) = dtae_loss(&x, &[zero]).unwrap();
        assert!((loss - 0.5).abs() < 1e-15);
        assert_eq!(grads[0].values, vec![-1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dtae_sums_over_views() {
        let x = t2(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        let zero = Tensor::zeros(&[1, 4]);
        let (loss, _) = dtae_loss(&x, &[zero.clone(), zero]).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dtae_sums_not_means_over_batch() {
        // Two samples with the same unit error: sum gives 1.0, a mean 0.5.
        let x = t2(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let zero = Tensor::zeros(&[2, 2]);
        let (loss, _) = dtae_loss(&x, &[zero]).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dtae_rejects_mismatched_views() {
        let x = t2(1, 4, &[0.0; 4]);
        assert!(dtae_loss(&x, &[Tensor::zeros(&[1, 3])]).is_err());
        assert!(dtae_loss(&x, &[]).is_err());
    }

    // ---- cross entropy ----

    #[test]
    fn ce_uniform_logits_give_ln_c() {
        let (loss, _) = cross_entropy_loss(&t2(1, 2, &[0.0, 0.0]), &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn ce_hand_computed_two_class() {
        // logits [1,0], label 1: -log(1/(e+1)) = log(e+1) = 1.313262.
        let (loss, _) = cross_entropy_loss(&t2(1, 2, &[1.0, 0.0]), &[1]).unwrap();
        assert!((loss - 1.313262).abs() < 1e-6);
    }

    #[test]
    fn ce_large_logits_do_not_overflow() {
        let (loss, grad) = cross_entropy_loss(&t2(1, 2, &[1000.0, 0.0]), &[0]).unwrap();
        assert!(loss.is_finite());
        assert!(loss < 1e-12);
        assert!(grad.all_finite());
    }

    #[test]
    fn ce_mean_over_samples() {
        let logits = t2(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let (loss, _) = cross_entropy_loss(&logits, &[0, 1]).unwrap();
        let expected = (std::f64::consts::LN_2 + 1.0_f64.exp().ln_1p()) / 2.0;
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        assert!(matches!(
            cross_entropy_loss(&t2(1, 2, &[0.0, 0.0]), &[2]),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn ce_gradient_rows_sum_to_zero() {
        let logits = t2(
            3,
            4,
            &[0.1, -0.4, 0.7, 0.2, 1.0, 0.0, -1.0, 0.5, 0.3, 0.3, 0.3, 0.3],
        );
        let (_, grad) = cross_entropy_loss(&logits, &[2, 0, 3]).unwrap();
        for row in grad.values.chunks(4) {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = t2(
            3,
            5,
            &[
                0.0, 1.0, -2.0, 3.5, 0.25, 100.0, 100.0, 100.0, 100.0, 100.0, -50.0, 0.0, 50.0,
                2.0, -2.0,
            ],
        );
        let probs = softmax(&logits).unwrap();
        for row in probs.values.chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    // ---- triplet ----

    #[test]
    fn triplet_satisfied_margin_is_zero() {
        // d(a,p)^2 = 0, d(a,n)^2 = 2, margin 1: hinge max(0, 0-2+1) = 0.
        let reps = t2(3, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let (loss, grad) = triplet_loss(&reps, &[0, 0, 1], 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn triplet_hand_computed_hinge() {
        // d(a,p)^2 = 2, d(a,n)^2 = 1, margin 0.5: 2 - 1 + 0.5 = 1.5.
        // Both anchors of the positive pair violate by the same amount
        // (d(1,2)^2 = 1 as well), so the mean over active triplets is 1.5.
        let reps = t2(3, 2, &[0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let (loss, _) = triplet_loss(&reps, &[0, 0, 1], 0.5).unwrap();
        assert!((loss - 1.5).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn triplet_one_sample_per_class_is_degenerate() {
        let reps = t2(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(
            triplet_loss(&reps, &[0, 1], 0.5),
            Err(Error::DegenerateBatch(_))
        ));
    }

    #[test]
    fn triplet_single_class_is_degenerate() {
        let reps = t2(3, 2, &[0.0; 6]);
        assert!(triplet_loss(&reps, &[0, 0, 0], 0.5).is_err());
    }

    #[test]
    fn triplet_requires_positive_margin() {
        let reps = t2(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        assert!(triplet_loss(&reps, &[0, 0, 1], 0.0).is_err());
        assert!(triplet_loss(&reps, &[0, 0, 1], f64::NAN).is_err());
    }

    #[test]
    fn triplet_loss_is_nonnegative() {
        let reps = t2(
            4,
            3,
            &[
                0.1, 0.2, 0.3, -0.1, 0.25, 0.31, 5.0, 5.0, 5.0, -4.0, 0.0, 2.0,
            ],
        );
        let (loss, _) = triplet_loss(&reps, &[0, 1, 0, 1], 0.5).unwrap();
        assert!(loss >= 0.0);
    }
}
