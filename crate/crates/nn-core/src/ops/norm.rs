use crate::{invalid, Element, NnError, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    Train,
    Eval,
}

/// Running-statistics update produced by a train-mode batch norm; the
/// owner of the running buffers applies it after the step.
#[derive(Debug, Clone)]
pub struct BatchNormUpdate<E> {
    pub running_mean: Vec<E>,
    pub running_var: Vec<E>,
}

/// Per-channel batch normalization over `[B, C, ...]`.
///
/// Train mode normalizes by batch statistics (biased variance) and returns
/// momentum-blended running statistics (unbiased variance, PyTorch
/// convention). Eval mode is a pure function of the running statistics.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<E: Element>(
    x: &Tensor<E>,
    gamma: &Tensor<E>,
    beta: &Tensor<E>,
    running_mean: &[E],
    running_var: &[E],
    mode: BatchNormMode,
    momentum: f64,
    eps: f64,
) -> Result<(Tensor<E>, Option<BatchNormUpdate<E>>)> {
    let shape = x.shape();
    if shape.len() < 2 {
        return Err(invalid("batch_norm", "input must be [B, C, ...]"));
    }
    let batch = shape[0];
    let channels = shape[1];
    let rest: usize = shape[2..].iter().product();
    if batch == 0 || batch * rest == 0 {
        return Err(invalid("batch_norm", "zero-size batch"));
    }
    if gamma.shape() != [channels] || beta.shape() != [channels] {
        return Err(NnError::Shape {
            op: "batch_norm",
            lhs: vec![channels],
            rhs: gamma.shape().to_vec(),
        });
    }
    if running_mean.len() != channels || running_var.len() != channels {
        return Err(invalid("batch_norm", "running stats length mismatch"));
    }
    let eps_e = E::from_f64(eps);
    let m = batch * rest;

    let at = move |n: usize, c: usize| (n * channels + c) * rest;
    let src = x.data();

    let (mean, var) = match mode {
        BatchNormMode::Train => {
            let mut mean = vec![E::ZERO; channels];
            let mut var = vec![E::ZERO; channels];
            let inv_m = E::from_f64(1.0 / m as f64);
            for c in 0..channels {
                let mut acc = E::ZERO;
                for n in 0..batch {
                    for &v in &src[at(n, c)..at(n, c) + rest] {
                        acc += v;
                    }
                }
                let mu = acc * inv_m;
                let mut sq = E::ZERO;
                for n in 0..batch {
                    for &v in &src[at(n, c)..at(n, c) + rest] {
                        let d = v - mu;
                        sq += d * d;
                    }
                }
                mean[c] = mu;
                var[c] = sq * inv_m;
            }
            (mean, var)
        }
        BatchNormMode::Eval => (running_mean.to_vec(), running_var.to_vec()),
    };

    let invstd: Vec<E> = var.iter().map(|&v| E::ONE / (v + eps_e).sqrt()).collect();
    let mut data = vec![E::ZERO; src.len()];
    for n in 0..batch {
        for c in 0..channels {
            let (mu, is) = (mean[c], invstd[c]);
            let (gm, bt) = (gamma.data()[c], beta.data()[c]);
            let base = at(n, c);
            for (out, &v) in data[base..base + rest].iter_mut().zip(&src[base..base + rest]) {
                *out = gm * (v - mu) * is + bt;
            }
        }
    }

    let update = match mode {
        BatchNormMode::Train => {
            let mom = E::from_f64(momentum);
            let keep = E::from_f64(1.0 - momentum);
            // Unbiased variance in the running buffer.
            let bessel = if m > 1 {
                E::from_f64(m as f64 / (m as f64 - 1.0))
            } else {
                E::ONE
            };
            Some(BatchNormUpdate {
                running_mean: running_mean
                    .iter()
                    .zip(&mean)
                    .map(|(&r, &b)| keep * r + mom * b)
                    .collect(),
                running_var: running_var
                    .iter()
                    .zip(&var)
                    .map(|(&r, &b)| keep * r + mom * b * bessel)
                    .collect(),
            })
        }
        BatchNormMode::Eval => None,
    };

    let mean_c = mean.clone();
    let invstd_c = invstd.clone();
    let out = Tensor::from_op(
        shape.to_vec(),
        data,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g, parents| {
            let x = &parents[0];
            let gamma = &parents[1];
            let src = x.data();
            let mut dgamma = vec![E::ZERO; channels];
            let mut dbeta = vec![E::ZERO; channels];
            for c in 0..channels {
                let (mu, is) = (mean_c[c], invstd_c[c]);
                let mut dg = E::ZERO;
                let mut db = E::ZERO;
                for n in 0..batch {
                    let base = at(n, c);
                    for (&gv, &xv) in g[base..base + rest].iter().zip(&src[base..base + rest]) {
                        dg += gv * (xv - mu) * is;
                        db += gv;
                    }
                }
                dgamma[c] = dg;
                dbeta[c] = db;
            }
            let dx = x.track().then(|| {
                let mut dx = vec![E::ZERO; src.len()];
                match mode {
                    BatchNormMode::Train => {
                        let inv_m = E::from_f64(1.0 / m as f64);
                        for c in 0..channels {
                            let (mu, is) = (mean_c[c], invstd_c[c]);
                            let gm = gamma.data()[c];
                            // dgamma[c] is the xhat-weighted grad sum,
                            // dbeta[c] the plain sum.
                            let sum_g = dbeta[c];
                            let sum_gx = dgamma[c];
                            for n in 0..batch {
                                let base = at(n, c);
                                for i in 0..rest {
                                    let xhat = (src[base + i] - mu) * is;
                                    dx[base + i] = gm
                                        * is
                                        * (g[base + i] - (sum_g + xhat * sum_gx) * inv_m);
                                }
                            }
                        }
                    }
                    BatchNormMode::Eval => {
                        for c in 0..channels {
                            let scale = gamma.data()[c] * invstd_c[c];
                            for n in 0..batch {
                                let base = at(n, c);
                                for i in 0..rest {
                                    dx[base + i] = g[base + i] * scale;
                                }
                            }
                        }
                    }
                }
                dx
            });
            vec![dx, Some(dgamma), Some(dbeta)]
        }),
    );
    Ok((out, update))
}

/// Layer normalization over the last axis with per-element affine
/// parameters.
pub fn layer_norm<E: Element>(
    x: &Tensor<E>,
    gamma: &Tensor<E>,
    beta: &Tensor<E>,
    eps: f64,
) -> Result<Tensor<E>> {
    let shape = x.shape();
    let Some(&dim) = shape.last() else {
        return Err(invalid("layer_norm", "input must have at least one axis"));
    };
    if gamma.shape() != [dim] || beta.shape() != [dim] {
        return Err(NnError::Shape {
            op: "layer_norm",
            lhs: vec![dim],
            rhs: gamma.shape().to_vec(),
        });
    }
    let rows = x.len() / dim;
    let eps_e = E::from_f64(eps);
    let inv_d = E::from_f64(1.0 / dim as f64);
    let src = x.data();
    let mut data = vec![E::ZERO; src.len()];
    let mut means = vec![E::ZERO; rows];
    let mut invstds = vec![E::ZERO; rows];
    for r in 0..rows {
        let row = &src[r * dim..(r + 1) * dim];
        let mut mu = E::ZERO;
        for &v in row {
            mu += v;
        }
        mu *= inv_d;
        let mut var = E::ZERO;
        for &v in row {
            let d = v - mu;
            var += d * d;
        }
        var *= inv_d;
        let is = E::ONE / (var + eps_e).sqrt();
        means[r] = mu;
        invstds[r] = is;
        for (o, &v) in data[r * dim..(r + 1) * dim].iter_mut().zip(row) {
            *o = (v - mu) * is;
        }
        for (o, (&g, &b)) in data[r * dim..(r + 1) * dim]
            .iter_mut()
            .zip(gamma.data().iter().zip(beta.data()))
        {
            *o = *o * g + b;
        }
    }

    Ok(Tensor::from_op(
        shape.to_vec(),
        data,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g, parents| {
            let x = &parents[0];
            let gamma = &parents[1];
            let src = x.data();
            let mut dx = vec![E::ZERO; src.len()];
            let mut dgamma = vec![E::ZERO; dim];
            let mut dbeta = vec![E::ZERO; dim];
            for r in 0..rows {
                let (mu, is) = (means[r], invstds[r]);
                let row = &src[r * dim..(r + 1) * dim];
                let grow = &g[r * dim..(r + 1) * dim];
                let mut sum1 = E::ZERO;
                let mut sum2 = E::ZERO;
                for i in 0..dim {
                    let xhat = (row[i] - mu) * is;
                    let dxhat = grow[i] * gamma.data()[i];
                    sum1 += dxhat;
                    sum2 += dxhat * xhat;
                    dgamma[i] += grow[i] * xhat;
                    dbeta[i] += grow[i];
                }
                for i in 0..dim {
                    let xhat = (row[i] - mu) * is;
                    let dxhat = grow[i] * gamma.data()[i];
                    dx[r * dim + i] = (dxhat - (sum1 + xhat * sum2) * inv_d) * is;
                }
            }
            vec![Some(dx), Some(dgamma), Some(dbeta)]
        }),
    ))
}
