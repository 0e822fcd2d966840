use nn_core::ops::{gather_class, log_softmax, softmax, sum_spatial};
use nn_core::{Element, Tensor};

use crate::{config_err, Result};

/// The training objective and its components. `total` is
/// `(CE + (1 - soft Dice)) / 2`; `ce` alone feeds the second loss curve.
pub struct LossOutput<E: Element> {
    pub total: Tensor<E>,
    pub ce: Tensor<E>,
    pub soft_dice: Tensor<E>,
}

/// Combined cross-entropy + soft-Dice segmentation loss.
///
/// CE is the mean negative log-softmax of the true class over all voxels
/// and batch rows. The Dice term uses class probabilities in place of the
/// argmax indicator (the hard version has zero gradient), computed per
/// sample and class, then averaged.
pub fn combined_loss<E: Element>(logits: &Tensor<E>, targets: &[u8]) -> Result<LossOutput<E>> {
    let shape = logits.shape();
    if shape.len() != 5 {
        return Err(config_err(format!(
            "logits must be [B, C, D, H, W], got {shape:?}"
        )));
    }
    let (batch, classes) = (shape[0], shape[1]);
    let spatial: usize = shape[2..].iter().product();
    if targets.len() != batch * spatial {
        return Err(config_err(format!(
            "{} target labels for {} voxels",
            targets.len(),
            batch * spatial
        )));
    }

    let log_probs = log_softmax(logits, 1)?;
    let picked = gather_class(&log_probs, targets)?;
    let ce = picked.mean_all().neg();

    let probs = softmax(logits, 1)?;
    let mut one_hot = vec![E::ZERO; batch * classes * spatial];
    let mut class_counts = vec![E::ZERO; batch * classes];
    for b in 0..batch {
        for r in 0..spatial {
            let c = usize::from(targets[b * spatial + r]);
            one_hot[(b * classes + c) * spatial + r] = E::ONE;
            class_counts[b * classes + c] += E::ONE;
        }
    }
    let one_hot = Tensor::from_vec(shape.to_vec(), one_hot);

    let inter = sum_spatial(&probs.mul(&one_hot)?)?;
    let prob_mass = sum_spatial(&probs)?;
    let denom = prob_mass.add(&Tensor::from_vec(vec![batch, classes], class_counts))?;
    let dice = inter.mul_scalar(2.0).div(&denom)?;
    let soft_dice = dice.mean_all();

    let total = ce.add(&soft_dice.rsub_scalar(1.0))?.mul_scalar(0.5);
    Ok(LossOutput {
        total,
        ce,
        soft_dice,
    })
}
