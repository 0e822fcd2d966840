use crate::{invalid, Element, Result, Tensor};

fn lanes(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

/// Numerically stabilized softmax along `axis`.
pub fn softmax<E: Element>(x: &Tensor<E>, axis: usize) -> Result<Tensor<E>> {
    if axis >= x.shape().len() {
        return Err(invalid(
            "softmax",
            format!("axis {axis} out of range for shape {:?}", x.shape()),
        ));
    }
    let (outer, len, inner) = lanes(x.shape(), axis);
    let src = x.data();
    let mut data = vec![E::ZERO; src.len()];
    for o in 0..outer {
        for r in 0..inner {
            let at = |i: usize| (o * len + i) * inner + r;
            let mut max = E::neg_infinity();
            for i in 0..len {
                max = max.maximum(src[at(i)]);
            }
            let mut denom = E::ZERO;
            for i in 0..len {
                let e = (src[at(i)] - max).exp();
                data[at(i)] = e;
                denom += e;
            }
            for i in 0..len {
                data[at(i)] = data[at(i)] / denom;
            }
        }
    }
    let out = data.clone();
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut dx = vec![E::ZERO; g.len()];
            for o in 0..outer {
                for r in 0..inner {
                    let at = |i: usize| (o * len + i) * inner + r;
                    let mut dot = E::ZERO;
                    for i in 0..len {
                        dot += g[at(i)] * out[at(i)];
                    }
                    for i in 0..len {
                        dx[at(i)] = out[at(i)] * (g[at(i)] - dot);
                    }
                }
            }
            vec![Some(dx)]
        }),
    ))
}

/// Stabilized log-softmax along `axis`.
pub fn log_softmax<E: Element>(x: &Tensor<E>, axis: usize) -> Result<Tensor<E>> {
    if axis >= x.shape().len() {
        return Err(invalid(
            "log_softmax",
            format!("axis {axis} out of range for shape {:?}", x.shape()),
        ));
    }
    let (outer, len, inner) = lanes(x.shape(), axis);
    let src = x.data();
    let mut data = vec![E::ZERO; src.len()];
    for o in 0..outer {
        for r in 0..inner {
            let at = |i: usize| (o * len + i) * inner + r;
            let mut max = E::neg_infinity();
            for i in 0..len {
                max = max.maximum(src[at(i)]);
            }
            let mut denom = E::ZERO;
            for i in 0..len {
                denom += (src[at(i)] - max).exp();
            }
            let log_denom = denom.ln() + max;
            for i in 0..len {
                data[at(i)] = src[at(i)] - log_denom;
            }
        }
    }
    let out = data.clone();
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut dx = vec![E::ZERO; g.len()];
            for o in 0..outer {
                for r in 0..inner {
                    let at = |i: usize| (o * len + i) * inner + r;
                    let mut sum_g = E::ZERO;
                    for i in 0..len {
                        sum_g += g[at(i)];
                    }
                    for i in 0..len {
                        dx[at(i)] = g[at(i)] - out[at(i)].exp() * sum_g;
                    }
                }
            }
            vec![Some(dx)]
        }),
    ))
}
