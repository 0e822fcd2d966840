use rayon::prelude::*;

use crate::{invalid, Element, NnError, Result, Tensor};

#[derive(Clone, Copy)]
struct ConvDims {
    batch: usize,
    c_in: usize,
    c_out: usize,
    in_d: usize,
    in_h: usize,
    in_w: usize,
    k_d: usize,
    k_h: usize,
    k_w: usize,
    out_d: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    pad: i64,
}

impl ConvDims {
    fn in_spatial(&self) -> usize {
        self.in_d * self.in_h * self.in_w
    }
    fn out_spatial(&self) -> usize {
        self.out_d * self.out_h * self.out_w
    }
}

fn out_extent(op: &'static str, n: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let span = n + 2 * pad;
    if span < k {
        return Err(invalid(
            op,
            format!("extent {n} too small for kernel {k} with padding {pad}"),
        ));
    }
    // Floor semantics: trailing positions that do not fit a full stride are
    // dropped (the stride-2 1x1x1 downsampler on even extents relies on it).
    Ok((span - k) / stride + 1)
}

/// Inclusive output range along one axis for kernel offset `dk`:
/// all `o` with `0 <= o*stride + dk - pad < n_in`.
#[inline]
fn out_range(n_in: usize, n_out: usize, stride: usize, pad: i64, dk: usize) -> (usize, usize) {
    let s = stride as i64;
    let shift = dk as i64 - pad;
    let lo = (-shift).div_euclid(s).max(0);
    let lo = if lo * s + shift < 0 { lo + 1 } else { lo };
    let hi = (n_in as i64 - 1 - shift).div_euclid(s).min(n_out as i64 - 1);
    if hi < lo {
        (1, 0) // empty
    } else {
        (lo as usize, hi as usize)
    }
}

/// 3D cross-correlation with zero padding: input `[B, C, D, H, W]`, kernel
/// `[K, C, kd, kh, kw]`, optional bias `[K]`, cubic stride and padding.
pub fn conv3d<E: Element>(
    input: &Tensor<E>,
    kernel: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<E>> {
    let is = input.shape();
    let ks = kernel.shape();
    if is.len() != 5 || ks.len() != 5 || is[1] != ks[1] {
        return Err(NnError::Shape {
            op: "conv3d",
            lhs: is.to_vec(),
            rhs: ks.to_vec(),
        });
    }
    if stride == 0 {
        return Err(invalid("conv3d", "stride must be positive"));
    }
    let dims = ConvDims {
        batch: is[0],
        c_in: is[1],
        c_out: ks[0],
        in_d: is[2],
        in_h: is[3],
        in_w: is[4],
        k_d: ks[2],
        k_h: ks[3],
        k_w: ks[4],
        out_d: out_extent("conv3d", is[2], ks[2], stride, padding)?,
        out_h: out_extent("conv3d", is[3], ks[3], stride, padding)?,
        out_w: out_extent("conv3d", is[4], ks[4], stride, padding)?,
        stride,
        pad: padding as i64,
    };
    if let Some(b) = bias {
        if b.shape() != [dims.c_out] {
            return Err(NnError::Shape {
                op: "conv3d",
                lhs: vec![dims.c_out],
                rhs: b.shape().to_vec(),
            });
        }
    }

    let mut data = vec![E::ZERO; dims.batch * dims.c_out * dims.out_spatial()];
    forward(&dims, input.data(), kernel.data(), &mut data);
    if let Some(b) = bias {
        let spatial = dims.out_spatial();
        for n in 0..dims.batch {
            for k in 0..dims.c_out {
                let bv = b.data()[k];
                let base = (n * dims.c_out + k) * spatial;
                for v in &mut data[base..base + spatial] {
                    *v += bv;
                }
            }
        }
    }

    let mut parents = vec![input.clone(), kernel.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let has_bias = bias.is_some();
    let out_shape = vec![dims.batch, dims.c_out, dims.out_d, dims.out_h, dims.out_w];
    Ok(Tensor::from_op(
        out_shape,
        data,
        parents,
        Box::new(move |g, parents| {
            let input = &parents[0];
            let kernel = &parents[1];
            let dx = input.track().then(|| {
                let mut dx = vec![E::ZERO; input.len()];
                backward_input(&dims, g, kernel.data(), &mut dx);
                dx
            });
            let dw = kernel.track().then(|| {
                let mut dw = vec![E::ZERO; kernel.len()];
                backward_kernel(&dims, g, input.data(), &mut dw);
                dw
            });
            let mut grads = vec![dx, dw];
            if has_bias {
                let spatial = dims.out_spatial();
                let mut db = vec![E::ZERO; dims.c_out];
                for n in 0..dims.batch {
                    for k in 0..dims.c_out {
                        let base = (n * dims.c_out + k) * spatial;
                        let mut acc = E::ZERO;
                        for &v in &g[base..base + spatial] {
                            acc += v;
                        }
                        db[k] += acc;
                    }
                }
                grads.push(Some(db));
            }
            grads
        }),
    ))
}

fn forward<E: Element>(d: &ConvDims, input: &[E], kernel: &[E], out: &mut [E]) {
    let in_sp = d.in_spatial();
    let out_sp = d.out_spatial();
    let d = *d;
    // One (batch, out-channel) slab per task; every slab writes disjoint
    // output, so parallelism cannot change results.
    out.par_chunks_mut(out_sp).enumerate().for_each(|(slab, o)| {
        let n = slab / d.c_out;
        let k = slab % d.c_out;
        for c in 0..d.c_in {
            let x = &input[(n * d.c_in + c) * in_sp..(n * d.c_in + c + 1) * in_sp];
            for dz in 0..d.k_d {
                let (zlo, zhi) = out_range(d.in_d, d.out_d, d.stride, d.pad, dz);
                for dy in 0..d.k_h {
                    let (ylo, yhi) = out_range(d.in_h, d.out_h, d.stride, d.pad, dy);
                    for dx in 0..d.k_w {
                        let w =
                            kernel[(((k * d.c_in + c) * d.k_d + dz) * d.k_h + dy) * d.k_w + dx];
                        let (xlo, xhi) = out_range(d.in_w, d.out_w, d.stride, d.pad, dx);
                        if xlo > xhi || ylo > yhi || zlo > zhi {
                            continue;
                        }
                        for zo in zlo..=zhi {
                            let zi = (zo * d.stride) as i64 + dz as i64 - d.pad;
                            for yo in ylo..=yhi {
                                let yi = (yo * d.stride) as i64 + dy as i64 - d.pad;
                                let orow = (zo * d.out_h + yo) * d.out_w;
                                let irow = (zi as usize * d.in_h + yi as usize) * d.in_w;
                                if d.stride == 1 {
                                    let shift = dx as i64 - d.pad;
                                    let os = &mut o[orow + xlo..orow + xhi + 1];
                                    let xs = &x[(irow as i64 + xlo as i64 + shift) as usize..];
                                    for (ov, &xv) in os.iter_mut().zip(xs) {
                                        *ov += w * xv;
                                    }
                                } else {
                                    for xo in xlo..=xhi {
                                        let xi =
                                            (xo * d.stride) as i64 + dx as i64 - d.pad;
                                        o[orow + xo] += w * x[irow + xi as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

fn backward_input<E: Element>(d: &ConvDims, g: &[E], kernel: &[E], dx_out: &mut [E]) {
    let in_sp = d.in_spatial();
    let out_sp = d.out_spatial();
    let d = *d;
    // One (batch, in-channel) slab per task, gathering from all output
    // channels in fixed order.
    dx_out
        .par_chunks_mut(in_sp)
        .enumerate()
        .for_each(|(slab, dx)| {
            let n = slab / d.c_in;
            let c = slab % d.c_in;
            for k in 0..d.c_out {
                let go = &g[(n * d.c_out + k) * out_sp..(n * d.c_out + k + 1) * out_sp];
                for dz in 0..d.k_d {
                    let (zlo, zhi) = out_range(d.in_d, d.out_d, d.stride, d.pad, dz);
                    for dy in 0..d.k_h {
                        let (ylo, yhi) = out_range(d.in_h, d.out_h, d.stride, d.pad, dy);
                        for dxk in 0..d.k_w {
                            let w = kernel
                                [(((k * d.c_in + c) * d.k_d + dz) * d.k_h + dy) * d.k_w + dxk];
                            let (xlo, xhi) = out_range(d.in_w, d.out_w, d.stride, d.pad, dxk);
                            if xlo > xhi || ylo > yhi || zlo > zhi {
                                continue;
                            }
                            for zo in zlo..=zhi {
                                let zi = (zo * d.stride) as i64 + dz as i64 - d.pad;
                                for yo in ylo..=yhi {
                                    let yi = (yo * d.stride) as i64 + dy as i64 - d.pad;
                                    let orow = (zo * d.out_h + yo) * d.out_w;
                                    let irow =
                                        (zi as usize * d.in_h + yi as usize) * d.in_w;
                                    if d.stride == 1 {
                                        let shift = dxk as i64 - d.pad;
                                        let gs = &go[orow + xlo..orow + xhi + 1];
                                        let base = (irow as i64 + xlo as i64 + shift) as usize;
                                        let ds = &mut dx[base..base + gs.len()];
                                        for (dv, &gv) in ds.iter_mut().zip(gs) {
                                            *dv += w * gv;
                                        }
                                    } else {
                                        for xo in xlo..=xhi {
                                            let xi = (xo * d.stride) as i64 + dxk as i64
                                                - d.pad;
                                            dx[irow + xi as usize] += w * go[orow + xo];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

fn backward_kernel<E: Element>(d: &ConvDims, g: &[E], input: &[E], dw: &mut [E]) {
    let in_sp = d.in_spatial();
    let out_sp = d.out_spatial();
    let taps = d.c_in * d.k_d * d.k_h * d.k_w;
    let d = *d;
    // One output channel's kernel slice per task; inner sums run in fixed
    // (batch, tap, row) order.
    dw.par_chunks_mut(taps).enumerate().for_each(|(k, dwk)| {
        for n in 0..d.batch {
            let go = &g[(n * d.c_out + k) * out_sp..(n * d.c_out + k + 1) * out_sp];
            for c in 0..d.c_in {
                let x = &input[(n * d.c_in + c) * in_sp..(n * d.c_in + c + 1) * in_sp];
                for dz in 0..d.k_d {
                    let (zlo, zhi) = out_range(d.in_d, d.out_d, d.stride, d.pad, dz);
                    for dy in 0..d.k_h {
                        let (ylo, yhi) = out_range(d.in_h, d.out_h, d.stride, d.pad, dy);
                        for dxk in 0..d.k_w {
                            let (xlo, xhi) = out_range(d.in_w, d.out_w, d.stride, d.pad, dxk);
                            if xlo > xhi || ylo > yhi || zlo > zhi {
                                continue;
                            }
                            let mut acc = E::ZERO;
                            for zo in zlo..=zhi {
                                let zi = (zo * d.stride) as i64 + dz as i64 - d.pad;
                                for yo in ylo..=yhi {
                                    let yi = (yo * d.stride) as i64 + dy as i64 - d.pad;
                                    let orow = (zo * d.out_h + yo) * d.out_w;
                                    let irow =
                                        (zi as usize * d.in_h + yi as usize) * d.in_w;
                                    if d.stride == 1 {
                                        let shift = dxk as i64 - d.pad;
                                        let gs = &go[orow + xlo..orow + xhi + 1];
                                        let base = (irow as i64 + xlo as i64 + shift) as usize;
                                        let xs = &x[base..base + gs.len()];
                                        for (&gv, &xv) in gs.iter().zip(xs) {
                                            acc += gv * xv;
                                        }
                                    } else {
                                        for xo in xlo..=xhi {
                                            let xi = (xo * d.stride) as i64 + dxk as i64
                                                - d.pad;
                                            acc += go[orow + xo] * x[irow + xi as usize];
                                        }
                                    }
                                }
                            }
                            dwk[((c * d.k_d + dz) * d.k_h + dy) * d.k_w + dxk] += acc;
                        }
                    }
                }
            }
        }
    });
}
