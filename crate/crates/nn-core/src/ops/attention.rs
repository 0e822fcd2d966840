use crate::ops::{bmm, linear, permute, softmax};
use crate::{invalid, Element, Result, Tensor};

/// Projection weights of one multi-head self-attention block. All four
/// maps are `[D, D]` with `[D]` biases, except the key projection: a key
/// bias shifts every score in a row equally and softmax ignores it, so the
/// parameter would be inert.
pub struct AttentionParams<'a, E: Element> {
    pub wq: &'a Tensor<E>,
    pub bq: &'a Tensor<E>,
    pub wk: &'a Tensor<E>,
    pub wv: &'a Tensor<E>,
    pub bv: &'a Tensor<E>,
    pub wo: &'a Tensor<E>,
    pub bo: &'a Tensor<E>,
    pub n_heads: usize,
}

/// Scaled dot-product multi-head self-attention on `[B, N, D]` tokens
/// (the residual connection is the caller's). Scale is `1/sqrt(D/heads)`.
pub fn multi_head_self_attention<E: Element>(
    z: &Tensor<E>,
    params: &AttentionParams<'_, E>,
) -> Result<Tensor<E>> {
    let shape = z.shape();
    let [b, n, d] = match shape {
        [b, n, d] => [*b, *n, *d],
        other => {
            return Err(invalid(
                "multi_head_self_attention",
                format!("expected [B, N, D], got {other:?}"),
            ))
        }
    };
    let heads = params.n_heads;
    if heads == 0 || d % heads != 0 {
        return Err(invalid(
            "multi_head_self_attention",
            format!("hidden dim {d} not divisible by {heads} heads"),
        ));
    }
    let dh = d / heads;

    let split = |t: &Tensor<E>| -> Result<Tensor<E>> {
        // [B, N, D] -> [B*H, N, dh]
        let t = t.reshape([b, n, heads, dh])?;
        let t = permute(&t, &[0, 2, 1, 3])?;
        t.reshape([b * heads, n, dh])
    };

    let q = split(&linear(z, params.wq, Some(params.bq))?)?;
    let k = split(&linear(z, params.wk, None)?)?;
    let v = split(&linear(z, params.wv, Some(params.bv))?)?;

    let scores = bmm(&q, &k, true)?.mul_scalar(1.0 / (dh as f64).sqrt());
    let attn = softmax(&scores, 2)?;
    let ctx = bmm(&attn, &v, false)?;

    // [B*H, N, dh] -> [B, N, D]
    let ctx = ctx.reshape([b, heads, n, dh])?;
    let ctx = permute(&ctx, &[0, 2, 1, 3])?;
    let ctx = ctx.reshape([b, n, d])?;
    linear(&ctx, params.wo, Some(params.bo))
}
