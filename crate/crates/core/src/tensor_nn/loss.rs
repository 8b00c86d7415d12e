use super::ops::softmax_rows_inplace;
use super::{Float, Tensor};
use crate::error::{Error, Result};

/// Mean squared error over masked timesteps and present channels.
///
/// `pred`, `target`: `[B × T × C]`; `mask`: `[B × T]`; `present`: `[B × C]`.
/// Returns the loss and `dL/dpred`, which is exactly zero everywhere outside
/// the masked, present entries.
pub fn masked_mse<F: Float>(
    pred: &Tensor<F>,
    target: &Tensor<F>,
    mask: &[bool],
    present: &[bool],
) -> Result<(F, Tensor<F>)> {
    let (b, t, c) = match *pred.shape() {
        [b, t, c] => (b, t, c),
        _ => return Err(Error::Shape(format!("masked_mse pred {:?}", pred.shape()))),
    };
    if target.shape() != pred.shape() || mask.len() != b * t || present.len() != b * c {
        return Err(Error::Shape(format!(
            "masked_mse: pred {:?}, target {:?}, mask {}, present {}",
            pred.shape(),
            target.shape(),
            mask.len(),
            present.len()
        )));
    }
    let count: usize = (0..b)
        .map(|bi| {
            let masked = mask[bi * t..(bi + 1) * t].iter().filter(|&&m| m).count();
            let chans = present[bi * c..(bi + 1) * c].iter().filter(|&&p| p).count();
            masked * chans
        })
        .sum();
    if count == 0 {
        return Err(Error::DegenerateInput(
            "masked_mse needs at least one masked position with a present channel".into(),
        ));
    }
    let n = F::of(count as f64);
    let mut loss = F::zero();
    let mut grad = Tensor::zeros(pred.shape());
    let (p, y, g) = (pred.data(), target.data(), grad.data_mut());
    for bi in 0..b {
        for ti in 0..t {
            if !mask[bi * t + ti] {
                continue;
            }
            for ci in 0..c {
                if !present[bi * c + ci] {
                    continue;
                }
                let i = (bi * t + ti) * c + ci;
                let e = p[i] - y[i];
                loss += e * e;
                g[i] = F::of(2.0) * e / n;
            }
        }
    }
    Ok((loss / n, grad))
}

/// Softmax cross-entropy averaged over the batch, with optional per-class
/// weights (weighted mean). Returns loss, `dL/dlogits`, and probabilities.
pub fn cross_entropy<F: Float>(
    logits: &Tensor<F>,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<(F, Tensor<F>, Tensor<F>)> {
    let (b, k) = match *logits.shape() {
        [b, k] => (b, k),
        _ => return Err(Error::Shape(format!("cross_entropy logits {:?}", logits.shape()))),
    };
    if labels.len() != b || b == 0 {
        return Err(Error::Shape(format!("{} labels for batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Index(format!("label {bad} not in [0, {k})")));
    }
    let mut probs = logits.clone();
    softmax_rows_inplace(probs.data_mut(), k);
    let w = |l: usize| class_weights.map(|cw| cw[l]).unwrap_or(1.0);
    let total_w: f64 = labels.iter().map(|&l| w(l)).sum();
    let mut loss = F::zero();
    let mut grad = probs.clone();
    for (i, &l) in labels.iter().enumerate() {
        let wi = F::of(w(l) / total_w);
        let p = probs.data()[i * k + l];
        loss -= wi * p.max(F::min_positive_value()).ln();
        let row = &mut grad.data_mut()[i * k..(i + 1) * k];
        row[l] -= F::one();
        row.iter_mut().for_each(|g| *g *= wi);
    }
    Ok((loss, grad, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let x = Tensor::from_fn(&[2, 4, 3], |i| i as f64 * 0.1);
        let mask = vec![true, false, true, false, false, true, true, true];
        let (l, g) = masked_mse(&x, &x, &mask, &[true; 6]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_vanishes_off_mask_and_on_absent_channels() {
        let p = Tensor::from_fn(&[1, 3, 2], |i| i as f64);
        let y = Tensor::zeros(&[1, 3, 2]);
        let (l, g) = masked_mse(&p, &y, &[false, true, false], &[true, false]).unwrap();
        assert_eq!(l, 4.0); // only entry (t=1, c=0) = 2
        assert_eq!(g.data(), &[0.0, 0.0, 4.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn all_false_mask_is_degenerate() {
        let x = Tensor::<f32>::zeros(&[1, 2, 1]);
        assert!(matches!(
            masked_mse(&x, &x, &[false, false], &[true]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let logits = Tensor::<f64>::zeros(&[2, 2]);
        let (l, _, probs) = cross_entropy(&logits, &[0, 1], None).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(probs.data(), &[0.5; 4]);
    }
}
