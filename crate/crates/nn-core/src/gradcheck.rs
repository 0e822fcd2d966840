use crate::{Result, Tensor};

/// Central finite-difference check of reverse-mode gradients at `f64`.
///
/// `f` maps the given leaves to a scalar loss. Every element of every
/// input is perturbed by ±1e-5 unless `max_per_tensor` caps the count, in
/// which case elements are sampled at an even stride. Returns the maximum
/// relative error against `max(|analytic|, |numeric|, 1e-8)`.
///
/// A central difference is only valid when the interval avoids the kinks
/// of relu/max-pool. When the first probe disagrees, the element is
/// re-measured at smaller steps; a real backward bug disagrees at every
/// scale, while a straddled kink drops out of the shrunken interval.
pub fn grad_check<F>(
    f: F,
    inputs: &[Tensor<f64>],
    max_per_tensor: Option<usize>,
) -> Result<f64>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    const STEPS: [f64; 3] = [1e-5, 1e-6, 1e-7];
    const GOOD_ENOUGH: f64 = 1e-6;
    for t in inputs {
        t.zero_grad();
    }
    let loss = f(inputs)?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let mut worst = 0.0f64;
    for (idx, input) in inputs.iter().enumerate() {
        let len = input.len();
        let indices: Vec<usize> = match max_per_tensor {
            Some(cap) if len > cap => {
                let stride = len / cap;
                (0..cap).map(|j| j * stride).collect()
            }
            _ => (0..len).collect(),
        };
        for i in indices {
            let eval = |delta: f64| -> Result<f64> {
                let mut data = input.data().to_vec();
                data[i] += delta;
                let probe: Vec<Tensor<f64>> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| {
                        if j == idx {
                            Tensor::from_vec(t.shape().to_vec(), data.clone())
                        } else {
                            Tensor::from_vec(t.shape().to_vec(), t.data().to_vec())
                        }
                    })
                    .collect();
                Ok(f(&probe)?.item())
            };
            let a = analytic[idx][i];
            let mut best = f64::INFINITY;
            for &h in &STEPS {
                let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                best = best.min(err);
                if best < GOOD_ENOUGH {
                    break;
                }
            }
            if best > worst {
                worst = best;
            }
        }
    }
    Ok(worst)
}
