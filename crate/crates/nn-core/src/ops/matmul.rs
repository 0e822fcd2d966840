use rayon::prelude::*;

use crate::{Element, NnError, Result, Tensor};

/// Sequential work below which matmuls stay single-threaded.
const PAR_THRESHOLD: usize = 1 << 17;

/// `out[m,n] += a[m,k] * b[k,n]`, ikj order.
pub(crate) fn gemm<E: Element>(m: usize, k: usize, n: usize, a: &[E], b: &[E], out: &mut [E]) {
    let body = |i: usize, out_row: &mut [E]| {
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    } else {
        for (i, row) in out.chunks_mut(n).enumerate() {
            body(i, row);
        }
    }
}

/// `out[m,n] += a[m,k] * b[n,k]^T` (b stored row-major `[n,k]`).
pub(crate) fn gemm_nt<E: Element>(m: usize, k: usize, n: usize, a: &[E], b: &[E], out: &mut [E]) {
    let body = |i: usize, out_row: &mut [E]| {
        let arow = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = E::ZERO;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *o += acc;
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    } else {
        for (i, row) in out.chunks_mut(n).enumerate() {
            body(i, row);
        }
    }
}

/// `out[m,n] += a[k,m]^T * b[k,n]` (a stored row-major `[k,m]`).
pub(crate) fn gemm_tn<E: Element>(m: usize, k: usize, n: usize, a: &[E], b: &[E], out: &mut [E]) {
    let body = |i: usize, out_row: &mut [E]| {
        for p in 0..k {
            let av = a[p * m + i];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    } else {
        for (i, row) in out.chunks_mut(n).enumerate() {
            body(i, row);
        }
    }
}

fn dims2<E: Element>(op: &'static str, t: &Tensor<E>) -> Result<(usize, usize)> {
    match t.shape() {
        [a, b] => Ok((*a, *b)),
        _ => Err(NnError::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        }),
    }
}

/// 2D matrix product `[M,K] x [K,N] -> [M,N]`.
pub fn matmul<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (m, ka) = dims2("matmul", a)?;
    let (kb, n) = dims2("matmul", b)?;
    if ka != kb {
        return Err(NnError::Shape {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut data = vec![E::ZERO; m * n];
    gemm(m, ka, n, a.data(), b.data(), &mut data);
    Ok(Tensor::from_op(
        vec![m, n],
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |g, parents| {
            let a = &parents[0];
            let b = &parents[1];
            let da = a.track().then(|| {
                let mut da = vec![E::ZERO; a.len()];
                gemm_nt(m, n, ka, g, b.data(), &mut da);
                da
            });
            let db = b.track().then(|| {
                let mut db = vec![E::ZERO; b.len()];
                gemm_tn(ka, m, n, a.data(), g, &mut db);
                db
            });
            vec![da, db]
        }),
    ))
}

/// Batched matrix product `[B,M,K] x [B,K,N] -> [B,M,N]`; with
/// `transpose_b` the right operand is `[B,N,K]`.
pub fn bmm<E: Element>(a: &Tensor<E>, b: &Tensor<E>, transpose_b: bool) -> Result<Tensor<E>> {
    let (sa, sb) = (a.shape(), b.shape());
    let bad = || NnError::Shape {
        op: "bmm",
        lhs: sa.to_vec(),
        rhs: sb.to_vec(),
    };
    if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
        return Err(bad());
    }
    let (batch, m, k) = (sa[0], sa[1], sa[2]);
    let n = if transpose_b {
        if sb[2] != k {
            return Err(bad());
        }
        sb[1]
    } else {
        if sb[1] != k {
            return Err(bad());
        }
        sb[2]
    };
    let mut data = vec![E::ZERO; batch * m * n];
    for i in 0..batch {
        let av = &a.data()[i * m * k..(i + 1) * m * k];
        let bv = &b.data()[i * k * n..(i + 1) * k * n];
        let ov = &mut data[i * m * n..(i + 1) * m * n];
        if transpose_b {
            gemm_nt(m, k, n, av, bv, ov);
        } else {
            gemm(m, k, n, av, bv, ov);
        }
    }
    Ok(Tensor::from_op(
        vec![batch, m, n],
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |g, parents| {
            let a = &parents[0];
            let b = &parents[1];
            let da = a.track().then(|| {
                let mut da = vec![E::ZERO; a.len()];
                for i in 0..batch {
                    let gv = &g[i * m * n..(i + 1) * m * n];
                    let bv = &b.data()[i * k * n..(i + 1) * k * n];
                    let dv = &mut da[i * m * k..(i + 1) * m * k];
                    if transpose_b {
                        // out = a * b^T  =>  da = g * b  ([M,N] x [N,K])
                        gemm(m, n, k, gv, bv, dv);
                    } else {
                        gemm_nt(m, n, k, gv, bv, dv);
                    }
                }
                da
            });
            let db = b.track().then(|| {
                let mut db = vec![E::ZERO; b.len()];
                for i in 0..batch {
                    let gv = &g[i * m * n..(i + 1) * m * n];
                    let av = &a.data()[i * m * k..(i + 1) * m * k];
                    let dv = &mut db[i * k * n..(i + 1) * k * n];
                    if transpose_b {
                        // db[n,k] = sum_m g[m,n] a[m,k]
                        gemm_tn(n, m, k, gv, av, dv);
                    } else {
                        gemm_tn(k, m, n, av, gv, dv);
                    }
                }
                db
            });
            vec![da, db]
        }),
    ))
}

/// Affine map on the last axis: `[..., In] x [In, Out] (+ bias) -> [..., Out]`.
pub fn linear<E: Element>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    bias: Option<&Tensor<E>>,
) -> Result<Tensor<E>> {
    let (w_in, w_out) = dims2("linear", w)?;
    let shape = x.shape();
    let Some((&last, lead)) = shape.split_last() else {
        return Err(NnError::Shape {
            op: "linear",
            lhs: shape.to_vec(),
            rhs: w.shape().to_vec(),
        });
    };
    if last != w_in {
        return Err(NnError::Shape {
            op: "linear",
            lhs: shape.to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    if let Some(b) = bias {
        if b.shape() != [w_out] {
            return Err(NnError::Shape {
                op: "linear",
                lhs: vec![w_out],
                rhs: b.shape().to_vec(),
            });
        }
    }
    let rows: usize = lead.iter().product();
    let mut data = vec![E::ZERO; rows * w_out];
    gemm(rows, w_in, w_out, x.data(), w.data(), &mut data);
    if let Some(b) = bias {
        for row in data.chunks_mut(w_out) {
            for (v, &bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
    }
    let mut out_shape = lead.to_vec();
    out_shape.push(w_out);

    let mut parents = vec![x.clone(), w.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let has_bias = bias.is_some();
    Ok(Tensor::from_op(
        out_shape,
        data,
        parents,
        Box::new(move |g, parents| {
            let x = &parents[0];
            let w = &parents[1];
            let dx = x.track().then(|| {
                let mut dx = vec![E::ZERO; x.len()];
                gemm_nt(rows, w_out, w_in, g, w.data(), &mut dx);
                dx
            });
            let dw = w.track().then(|| {
                let mut dw = vec![E::ZERO; w.len()];
                gemm_tn(w_in, rows, w_out, x.data(), g, &mut dw);
                dw
            });
            let mut grads = vec![dx, dw];
            if has_bias {
                let mut db = vec![E::ZERO; w_out];
                for row in g.chunks(w_out) {
                    for (d, &gv) in db.iter_mut().zip(row) {
                        *d += gv;
                    }
                }
                grads.push(Some(db));
            }
            grads
        }),
    ))
}
