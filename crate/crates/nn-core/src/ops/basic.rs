use crate::{invalid, Element, NnError, Result, Tensor};

fn same_shape<E: Element>(op: &'static str, a: &Tensor<E>, b: &Tensor<E>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NnError::Shape {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<E: Element> Tensor<E> {
    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        same_shape("add", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, _| vec![Some(g.to_vec()), Some(g.to_vec())]),
        ))
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        same_shape("sub", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, _| {
                vec![
                    Some(g.to_vec()),
                    Some(g.iter().map(|&v| -v).collect()),
                ]
            }),
        ))
    }

    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        same_shape("mul", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents| {
                let a = parents[0].data();
                let b = parents[1].data();
                vec![
                    Some(g.iter().zip(b).map(|(&gv, &bv)| gv * bv).collect()),
                    Some(g.iter().zip(a).map(|(&gv, &av)| gv * av).collect()),
                ]
            }),
        ))
    }

    pub fn div(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        same_shape("div", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| a / b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents| {
                let a = parents[0].data();
                let b = parents[1].data();
                let da = g.iter().zip(b).map(|(&gv, &bv)| gv / bv).collect();
                let db = g
                    .iter()
                    .zip(a.iter().zip(b))
                    .map(|(&gv, (&av, &bv))| -gv * av / (bv * bv))
                    .collect();
                vec![Some(da), Some(db)]
            }),
        ))
    }

    pub fn neg(&self) -> Tensor<E> {
        let data = self.data().iter().map(|&v| -v).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.iter().map(|&v| -v).collect())]),
        )
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor<E> {
        let c = E::from_f64(c);
        let data = self.data().iter().map(|&v| v * c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(g.iter().map(|&v| v * c).collect())]),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Tensor<E> {
        let c = E::from_f64(c);
        let data = self.data().iter().map(|&v| v + c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        )
    }

    /// `c - x`.
    pub fn rsub_scalar(&self, c: f64) -> Tensor<E> {
        let c = E::from_f64(c);
        let data = self.data().iter().map(|&v| c - v).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.iter().map(|&v| -v).collect())]),
        )
    }

    pub fn exp(&self) -> Tensor<E> {
        let data: Vec<E> = self.data().iter().map(|&v| v.exp()).collect();
        let out = data.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, _| {
                vec![Some(g.iter().zip(&out).map(|(&gv, &y)| gv * y).collect())]
            }),
        )
    }

    pub fn ln(&self) -> Tensor<E> {
        let data = self.data().iter().map(|&v| v.ln()).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, parents| {
                let x = parents[0].data();
                vec![Some(g.iter().zip(x).map(|(&gv, &xv)| gv / xv).collect())]
            }),
        )
    }

    /// Rectified linear unit; the subgradient at 0 is 0.
    pub fn relu(&self) -> Tensor<E> {
        let data = self
            .data()
            .iter()
            .map(|&v| if v > E::ZERO { v } else { E::ZERO })
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, parents| {
                let x = parents[0].data();
                vec![Some(
                    g.iter()
                        .zip(x)
                        .map(|(&gv, &xv)| if xv > E::ZERO { gv } else { E::ZERO })
                        .collect(),
                )]
            }),
        )
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&self) -> Tensor<E> {
        let c = E::from_f64((2.0 / std::f64::consts::PI).sqrt());
        let k = E::from_f64(0.044715);
        let half = E::from_f64(0.5);
        let data = self
            .data()
            .iter()
            .map(|&x| {
                let u = c * (x + k * x * x * x);
                half * x * (E::ONE + u.tanh())
            })
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let x = parents[0].data();
                let three = E::from_f64(3.0);
                vec![Some(
                    g.iter()
                        .zip(x)
                        .map(|(&gv, &x)| {
                            let u = c * (x + k * x * x * x);
                            let t = u.tanh();
                            let sech2 = E::ONE - t * t;
                            let du = c * (E::ONE + three * k * x * x);
                            gv * (half * (E::ONE + t) + half * x * sech2 * du)
                        })
                        .collect(),
                )]
            }),
        )
    }

    pub fn sum_all(&self) -> Tensor<E> {
        let mut acc = E::ZERO;
        for &v in self.data() {
            acc += v;
        }
        let len = self.len();
        Tensor::from_op(
            vec![1],
            vec![acc],
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0]; len])]),
        )
    }

    pub fn mean_all(&self) -> Tensor<E> {
        let n = self.len();
        let inv = E::from_f64(1.0 / n as f64);
        let mut acc = E::ZERO;
        for &v in self.data() {
            acc += v;
        }
        Tensor::from_op(
            vec![1],
            vec![acc * inv],
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0] * inv; n])]),
        )
    }
}

/// Materialized axis permutation. `perm[i]` names the source axis placed
/// at output axis `i`.
pub fn permute<E: Element>(x: &Tensor<E>, perm: &[usize]) -> Result<Tensor<E>> {
    let rank = x.shape().len();
    if perm.len() != rank {
        return Err(invalid("permute", format!("perm {perm:?} vs rank {rank}")));
    }
    let mut seen = vec![false; rank];
    for &p in perm {
        if p >= rank || seen[p] {
            return Err(invalid("permute", format!("invalid perm {perm:?}")));
        }
        seen[p] = true;
    }
    let in_shape = x.shape().to_vec();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();

    let map = build_permute_map(&in_shape, perm);
    let src = x.data();
    let mut data = vec![E::ZERO; src.len()];
    for (o, &s) in map.iter().enumerate() {
        data[o] = src[s];
    }
    Ok(Tensor::from_op(
        out_shape,
        data,
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut dx = vec![E::ZERO; g.len()];
            for (o, &s) in map.iter().enumerate() {
                dx[s] = g[o];
            }
            vec![Some(dx)]
        }),
    ))
}

/// Source flat index for every output flat index of a permutation.
fn build_permute_map(in_shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let rank = in_shape.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let total: usize = out_shape.iter().product();
    let mut map = vec![0usize; total];
    let mut idx = vec![0usize; rank];
    for (o, slot) in map.iter_mut().enumerate() {
        let mut src = 0usize;
        for a in 0..rank {
            src += idx[a] * in_strides[perm[a]];
        }
        *slot = src;
        // Increment the mixed-radix output index.
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < out_shape[a] {
                break;
            }
            idx[a] = 0;
        }
        let _ = o;
    }
    map
}

/// Concatenates along axis 1 (channels). Leading and trailing dims must
/// match.
pub fn concat_channels<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != sb.len() || sa.len() < 2 || sa[0] != sb[0] || sa[2..] != sb[2..] {
        return Err(NnError::Shape {
            op: "concat_channels",
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        });
    }
    let batch = sa[0];
    let (ca, cb) = (sa[1], sb[1]);
    let rest: usize = sa[2..].iter().product();
    let mut shape = sa.to_vec();
    shape[1] = ca + cb;

    let mut data = Vec::with_capacity(batch * (ca + cb) * rest);
    for n in 0..batch {
        data.extend_from_slice(&a.data()[n * ca * rest..(n + 1) * ca * rest]);
        data.extend_from_slice(&b.data()[n * cb * rest..(n + 1) * cb * rest]);
    }
    Ok(Tensor::from_op(
        shape,
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |g, _| {
            let mut da = vec![E::ZERO; batch * ca * rest];
            let mut db = vec![E::ZERO; batch * cb * rest];
            for n in 0..batch {
                let base = n * (ca + cb) * rest;
                da[n * ca * rest..(n + 1) * ca * rest]
                    .copy_from_slice(&g[base..base + ca * rest]);
                db[n * cb * rest..(n + 1) * cb * rest]
                    .copy_from_slice(&g[base + ca * rest..base + (ca + cb) * rest]);
            }
            vec![Some(da), Some(db)]
        }),
    ))
}

/// Adds a per-channel bias to a `[B, C, ...]` tensor.
pub fn add_bias_channels<E: Element>(x: &Tensor<E>, bias: &Tensor<E>) -> Result<Tensor<E>> {
    let shape = x.shape();
    if shape.len() < 2 || bias.shape() != [shape[1]] {
        return Err(NnError::Shape {
            op: "add_bias_channels",
            lhs: shape.to_vec(),
            rhs: bias.shape().to_vec(),
        });
    }
    let batch = shape[0];
    let channels = shape[1];
    let rest: usize = shape[2..].iter().product();
    let mut data = x.data().to_vec();
    for n in 0..batch {
        for c in 0..channels {
            let bv = bias.data()[c];
            let base = (n * channels + c) * rest;
            for v in &mut data[base..base + rest] {
                *v += bv;
            }
        }
    }
    Ok(Tensor::from_op(
        shape.to_vec(),
        data,
        vec![x.clone(), bias.clone()],
        Box::new(move |g, _| {
            let mut db = vec![E::ZERO; channels];
            for n in 0..batch {
                for c in 0..channels {
                    let base = (n * channels + c) * rest;
                    let mut acc = E::ZERO;
                    for &v in &g[base..base + rest] {
                        acc += v;
                    }
                    db[c] += acc;
                }
            }
            vec![Some(g.to_vec()), Some(db)]
        }),
    ))
}

/// Adds a `[N, D]` table to every batch row of a `[B, N, D]` tensor
/// (position embeddings).
pub fn add_broadcast_rows<E: Element>(x: &Tensor<E>, rows: &Tensor<E>) -> Result<Tensor<E>> {
    let shape = x.shape();
    if shape.len() != 3 || rows.shape() != &shape[1..] {
        return Err(NnError::Shape {
            op: "add_broadcast_rows",
            lhs: shape.to_vec(),
            rhs: rows.shape().to_vec(),
        });
    }
    let batch = shape[0];
    let per = shape[1] * shape[2];
    let mut data = x.data().to_vec();
    for n in 0..batch {
        for (v, &r) in data[n * per..(n + 1) * per].iter_mut().zip(rows.data()) {
            *v += r;
        }
    }
    Ok(Tensor::from_op(
        shape.to_vec(),
        data,
        vec![x.clone(), rows.clone()],
        Box::new(move |g, _| {
            let mut dr = vec![E::ZERO; per];
            for n in 0..batch {
                for (d, &gv) in dr.iter_mut().zip(&g[n * per..(n + 1) * per]) {
                    *d += gv;
                }
            }
            vec![Some(g.to_vec()), Some(dr)]
        }),
    ))
}

/// Adds a per-sample `[B, D]` vector to every token of a `[B, N, D]`
/// tensor (time embeddings).
pub fn add_broadcast_tokens<E: Element>(x: &Tensor<E>, per: &Tensor<E>) -> Result<Tensor<E>> {
    let shape = x.shape();
    if shape.len() != 3 || per.shape() != [shape[0], shape[2]] {
        return Err(NnError::Shape {
            op: "add_broadcast_tokens",
            lhs: shape.to_vec(),
            rhs: per.shape().to_vec(),
        });
    }
    let (batch, tokens, dim) = (shape[0], shape[1], shape[2]);
    let mut data = x.data().to_vec();
    for n in 0..batch {
        let pv = &per.data()[n * dim..(n + 1) * dim];
        for t in 0..tokens {
            let base = (n * tokens + t) * dim;
            for (v, &p) in data[base..base + dim].iter_mut().zip(pv) {
                *v += p;
            }
        }
    }
    Ok(Tensor::from_op(
        shape.to_vec(),
        data,
        vec![x.clone(), per.clone()],
        Box::new(move |g, _| {
            let mut dp = vec![E::ZERO; batch * dim];
            for n in 0..batch {
                for t in 0..tokens {
                    let base = (n * tokens + t) * dim;
                    for (d, &gv) in dp[n * dim..(n + 1) * dim].iter_mut().zip(&g[base..base + dim])
                    {
                        *d += gv;
                    }
                }
            }
            vec![Some(g.to_vec()), Some(dp)]
        }),
    ))
}

/// Picks the channel named by each voxel's label: `[B, C, ...]` with labels
/// of length `B * prod(...)` gives `[B, ...]`.
pub fn gather_class<E: Element>(x: &Tensor<E>, labels: &[u8]) -> Result<Tensor<E>> {
    let shape = x.shape();
    if shape.len() < 2 {
        return Err(invalid("gather_class", "input must be [B, C, ...]"));
    }
    let batch = shape[0];
    let channels = shape[1];
    let rest: usize = shape[2..].iter().product();
    if labels.len() != batch * rest {
        return Err(invalid(
            "gather_class",
            format!("{} labels for {} voxels", labels.len(), batch * rest),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= channels) {
        return Err(invalid(
            "gather_class",
            format!("label {bad} out of range for {channels} classes"),
        ));
    }
    let mut out_shape = vec![batch];
    out_shape.extend_from_slice(&shape[2..]);
    let labels = labels.to_vec();
    let src = x.data();
    let mut data = vec![E::ZERO; batch * rest];
    for n in 0..batch {
        for r in 0..rest {
            let c = usize::from(labels[n * rest + r]);
            data[n * rest + r] = src[(n * channels + c) * rest + r];
        }
    }
    Ok(Tensor::from_op(
        out_shape,
        data,
        vec![x.clone()],
        Box::new(move |g, parents| {
            let mut dx = vec![E::ZERO; parents[0].len()];
            for n in 0..batch {
                for r in 0..rest {
                    let c = usize::from(labels[n * rest + r]);
                    dx[(n * channels + c) * rest + r] = g[n * rest + r];
                }
            }
            vec![Some(dx)]
        }),
    ))
}

/// Sums a `[B, C, ...]` tensor over the spatial axes only, leaving
/// `[B, C]`.
pub fn sum_spatial<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let shape = x.shape();
    if shape.len() < 2 {
        return Err(invalid("sum_spatial", "input must be [B, C, ...]"));
    }
    let batch = shape[0];
    let channels = shape[1];
    let spatial: usize = shape[2..].iter().product();
    let src = x.data();
    let mut data = vec![E::ZERO; batch * channels];
    for (i, slot) in data.iter_mut().enumerate() {
        let mut acc = E::ZERO;
        for &v in &src[i * spatial..(i + 1) * spatial] {
            acc += v;
        }
        *slot = acc;
    }
    Ok(Tensor::from_op(
        vec![batch, channels],
        data,
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut dx = vec![E::ZERO; batch * channels * spatial];
            for i in 0..batch * channels {
                for v in &mut dx[i * spatial..(i + 1) * spatial] {
                    *v = g[i];
                }
            }
            vec![Some(dx)]
        }),
    ))
}

/// Sums a `[B, C, ...]` tensor over batch and spatial positions, leaving
/// `[C]`.
pub fn sum_per_channel<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let shape = x.shape();
    if shape.len() < 2 {
        return Err(invalid("sum_per_channel", "input must be [B, C, ...]"));
    }
    let batch = shape[0];
    let channels = shape[1];
    let rest: usize = shape[2..].iter().product();
    let src = x.data();
    let mut data = vec![E::ZERO; channels];
    for n in 0..batch {
        for c in 0..channels {
            let base = (n * channels + c) * rest;
            let mut acc = E::ZERO;
            for &v in &src[base..base + rest] {
                acc += v;
            }
            data[c] += acc;
        }
    }
    Ok(Tensor::from_op(
        vec![channels],
        data,
        vec![x.clone()],
        Box::new(move |g, parents| {
            let mut dx = vec![E::ZERO; parents[0].len()];
            for n in 0..batch {
                for c in 0..channels {
                    let base = (n * channels + c) * rest;
                    for v in &mut dx[base..base + rest] {
                        *v = g[c];
                    }
                }
            }
            vec![Some(dx)]
        }),
    ))
}
