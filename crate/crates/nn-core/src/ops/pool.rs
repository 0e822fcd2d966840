use crate::{invalid, Element, Result, Tensor};

fn dims5<E: Element>(op: &'static str, t: &Tensor<E>) -> Result<[usize; 5]> {
    match t.shape() {
        [a, b, c, d, e] => Ok([*a, *b, *c, *d, *e]),
        other => Err(invalid(op, format!("expected rank 5, got {other:?}"))),
    }
}

/// Non-overlapping window maximum over `[B, C, D, H, W]` with cubic
/// `factor`. Ties keep the first element in window scan order.
pub fn max_pool3d<E: Element>(x: &Tensor<E>, factor: usize) -> Result<Tensor<E>> {
    let [b, c, d, h, w] = dims5("max_pool3d", x)?;
    if factor == 0 || d % factor != 0 || h % factor != 0 || w % factor != 0 {
        return Err(invalid(
            "max_pool3d",
            format!("spatial dims ({d},{h},{w}) not divisible by factor {factor}"),
        ));
    }
    let (od, oh, ow) = (d / factor, h / factor, w / factor);
    let in_sp = d * h * w;
    let out_sp = od * oh * ow;
    let src = x.data();
    let mut data = vec![E::ZERO; b * c * out_sp];
    let mut argmax = vec![0usize; b * c * out_sp];
    for slab in 0..b * c {
        let xs = &src[slab * in_sp..(slab + 1) * in_sp];
        for zo in 0..od {
            for yo in 0..oh {
                for xo in 0..ow {
                    let mut best = E::neg_infinity();
                    let mut best_i = 0usize;
                    for dz in 0..factor {
                        for dy in 0..factor {
                            for dx in 0..factor {
                                let i = ((zo * factor + dz) * h + yo * factor + dy) * w
                                    + xo * factor
                                    + dx;
                                if xs[i] > best {
                                    best = xs[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    let o = (zo * oh + yo) * ow + xo;
                    data[slab * out_sp + o] = best;
                    argmax[slab * out_sp + o] = slab * in_sp + best_i;
                }
            }
        }
    }
    let in_len = src.len();
    Ok(Tensor::from_op(
        vec![b, c, od, oh, ow],
        data,
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut dx = vec![E::ZERO; in_len];
            // Windows are disjoint: plain assignment per output.
            for (o, &src_i) in argmax.iter().enumerate() {
                dx[src_i] += g[o];
            }
            vec![Some(dx)]
        }),
    ))
}

/// Per-axis interpolation taps for align-corners=false upsampling by an
/// integer factor: for output `o`, `(i0, i1, w1)` with weight `1-w1` on
/// `i0`.
fn upsample_taps(n_in: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    let n_out = n_in * factor;
    (0..n_out)
        .map(|o| {
            let src = (o as f64 + 0.5) / factor as f64 - 0.5;
            let i0 = src.floor();
            let w1 = src - i0;
            let i0c = (i0.max(0.0) as usize).min(n_in - 1);
            let i1c = ((i0 + 1.0).max(0.0) as usize).min(n_in - 1);
            (i0c, i1c, w1)
        })
        .collect()
}

/// Trilinear upsampling by an integer factor, align-corners=false.
pub fn trilinear_upsample<E: Element>(x: &Tensor<E>, factor: usize) -> Result<Tensor<E>> {
    if factor == 0 {
        return Err(invalid("trilinear_upsample", "factor must be ≥ 1"));
    }
    let [b, c, d, h, w] = dims5("trilinear_upsample", x)?;
    if factor == 1 {
        let parent = x.clone();
        return Ok(Tensor::from_op(
            x.shape().to_vec(),
            x.data().to_vec(),
            vec![parent],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        ));
    }
    let (od, oh, ow) = (d * factor, h * factor, w * factor);
    let tz = upsample_taps(d, factor);
    let ty = upsample_taps(h, factor);
    let tx = upsample_taps(w, factor);
    let in_sp = d * h * w;
    let out_sp = od * oh * ow;
    let src = x.data();
    let mut data = vec![E::ZERO; b * c * out_sp];
    for slab in 0..b * c {
        let xs = &src[slab * in_sp..(slab + 1) * in_sp];
        let os = &mut data[slab * out_sp..(slab + 1) * out_sp];
        for (zo, &(z0, z1, wz)) in tz.iter().enumerate() {
            for (yo, &(y0, y1, wy)) in ty.iter().enumerate() {
                let row = (zo * oh + yo) * ow;
                for (xo, &(x0, x1, wx)) in tx.iter().enumerate() {
                    let mut acc = 0.0f64;
                    for (zi, zw) in [(z0, 1.0 - wz), (z1, wz)] {
                        for (yi, yw) in [(y0, 1.0 - wy), (y1, wy)] {
                            let base = (zi * h + yi) * w;
                            let zy = zw * yw;
                            acc += zy * (1.0 - wx) * xs[base + x0].to_f64();
                            acc += zy * wx * xs[base + x1].to_f64();
                        }
                    }
                    os[row + xo] = E::from_f64(acc);
                }
            }
        }
    }

    // Reverse taps: contributions of each input index along one axis.
    let reverse = |taps: &[(usize, usize, f64)], n_in: usize| -> Vec<Vec<(usize, f64)>> {
        let mut rev = vec![Vec::new(); n_in];
        for (o, &(i0, i1, w1)) in taps.iter().enumerate() {
            if 1.0 - w1 != 0.0 {
                rev[i0].push((o, 1.0 - w1));
            }
            if w1 != 0.0 {
                rev[i1].push((o, w1));
            }
        }
        rev
    };
    let rz = reverse(&tz, d);
    let ry = reverse(&ty, h);
    let rx = reverse(&tx, w);
    let slabs = b * c;
    Ok(Tensor::from_op(
        vec![b, c, od, oh, ow],
        data,
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut dx = vec![E::ZERO; slabs * in_sp];
            for slab in 0..slabs {
                let gs = &g[slab * out_sp..(slab + 1) * out_sp];
                let ds = &mut dx[slab * in_sp..(slab + 1) * in_sp];
                for (zi, zlist) in rz.iter().enumerate() {
                    for (yi, ylist) in ry.iter().enumerate() {
                        let irow = (zi * h + yi) * w;
                        for (xi, xlist) in rx.iter().enumerate() {
                            let mut acc = 0.0f64;
                            for &(zo, zw) in zlist {
                                for &(yo, yw) in ylist {
                                    let orow = (zo * oh + yo) * ow;
                                    let zy = zw * yw;
                                    for &(xo, xw) in xlist {
                                        acc += zy * xw * gs[orow + xo].to_f64();
                                    }
                                }
                            }
                            ds[irow + xi] = E::from_f64(acc);
                        }
                    }
                }
            }
            vec![Some(dx)]
        }),
    ))
}

/// Tokenizes `[B, C, G*P, G*P, G*P]` into `[B, G^3, P^3*C]` flattened
/// patches. Token order is the (gz, gy, gx) lattice scan; within a patch
/// the vector is channel-major.
pub fn extract_patches<E: Element>(x: &Tensor<E>, patch: usize) -> Result<Tensor<E>> {
    let [b, c, d, h, w] = dims5("extract_patches", x)?;
    if patch == 0 || d != h || h != w || d % patch != 0 {
        return Err(invalid(
            "extract_patches",
            format!("spatial dims ({d},{h},{w}) not tokenizable with patch {patch}"),
        ));
    }
    let g = d / patch;
    let n_tokens = g * g * g;
    let tok_dim = patch * patch * patch * c;
    let in_per = c * d * h * w;

    // Per-sample gather map: out position -> source position (bijective).
    let mut map = vec![0usize; n_tokens * tok_dim];
    let mut o = 0usize;
    for gz in 0..g {
        for gy in 0..g {
            for gx in 0..g {
                for ci in 0..c {
                    for pz in 0..patch {
                        for py in 0..patch {
                            for px in 0..patch {
                                let zi = gz * patch + pz;
                                let yi = gy * patch + py;
                                let xi = gx * patch + px;
                                map[o] = ((ci * d + zi) * h + yi) * w + xi;
                                o += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    let src = x.data();
    let mut data = vec![E::ZERO; b * n_tokens * tok_dim];
    for n in 0..b {
        let xs = &src[n * in_per..(n + 1) * in_per];
        let os = &mut data[n * n_tokens * tok_dim..(n + 1) * n_tokens * tok_dim];
        for (out, &src_i) in os.iter_mut().zip(&map) {
            *out = xs[src_i];
        }
    }
    Ok(Tensor::from_op(
        vec![b, n_tokens, tok_dim],
        data,
        vec![x.clone()],
        Box::new(move |grad, _| {
            let mut dx = vec![E::ZERO; b * in_per];
            for n in 0..b {
                let gs = &grad[n * n_tokens * tok_dim..(n + 1) * n_tokens * tok_dim];
                let ds = &mut dx[n * in_per..(n + 1) * in_per];
                for (&gv, &src_i) in gs.iter().zip(&map) {
                    ds[src_i] = gv;
                }
            }
            vec![Some(dx)]
        }),
    ))
}

/// Rearranges encoded tokens `[B, G^3, D]` into a volume `[B, D, G, G, G]`
/// using the same (gz, gy, gx) token order as [`extract_patches`].
pub fn tokens_to_volume<E: Element>(z: &Tensor<E>, g: usize) -> Result<Tensor<E>> {
    let shape = z.shape();
    let [b, n, dim] = match shape {
        [b, n, d] => [*b, *n, *d],
        other => {
            return Err(invalid(
                "tokens_to_volume",
                format!("expected rank 3, got {other:?}"),
            ))
        }
    };
    if n != g * g * g {
        return Err(invalid(
            "tokens_to_volume",
            format!("{n} tokens do not form a {g}^3 lattice"),
        ));
    }
    let src = z.data();
    let mut data = vec![E::ZERO; b * dim * n];
    for bi in 0..b {
        for t in 0..n {
            for di in 0..dim {
                // Token t scans (gz, gy, gx); volume is [D, G, G, G].
                data[(bi * dim + di) * n + t] = src[(bi * n + t) * dim + di];
            }
        }
    }
    Ok(Tensor::from_op(
        vec![b, dim, g, g, g],
        data,
        vec![z.clone()],
        Box::new(move |grad, _| {
            let mut dz = vec![E::ZERO; b * n * dim];
            for bi in 0..b {
                for t in 0..n {
                    for di in 0..dim {
                        dz[(bi * n + t) * dim + di] = grad[(bi * dim + di) * n + t];
                    }
                }
            }
            vec![Some(dz)]
        }),
    ))
}
