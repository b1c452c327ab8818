//! Random cross-view attention.
//!
//! Every frame's queries attend to the keys and values of a single key
//! frame `κ`: `out_i = softmax(Q_i K_κᵀ / √d) V_κ`. The cost is the same as
//! running independent self-attention per frame; only the K/V source
//! changes.

use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Per-frame token projections, each of shape `(N, L, d)`.
#[derive(Debug, Clone)]
pub struct AttentionBatch {
    q: Array3<f64>,
    k: Array3<f64>,
    v: Array3<f64>,
}

impl AttentionBatch {
    pub fn new(q: Array3<f64>, k: Array3<f64>, v: Array3<f64>) -> Result<Self> {
        let (n, l, d) = q.dim();
        let (kn, kl, kd) = k.dim();
        let (vn, vl, _) = v.dim();
        if (kn, kl) != (n, l) || (vn, vl) != (n, l) {
            return Err(Error::ShapeMismatch(format!(
                "Q {:?}, K {:?}, V {:?} must share (frames, tokens)",
                q.dim(),
                k.dim(),
                v.dim()
            )));
        }
        if kd != d {
            return Err(Error::ShapeMismatch(format!("query dim {d} != key dim {kd}")));
        }
        Ok(Self { q, k, v })
    }

    pub fn frames(&self) -> usize {
        self.q.dim().0
    }

    pub fn q(&self) -> ArrayView3<'_, f64> {
        self.q.view()
    }

    pub fn k(&self) -> ArrayView3<'_, f64> {
        self.k.view()
    }

    pub fn v(&self) -> ArrayView3<'_, f64> {
        self.v.view()
    }
}

/// Row-wise softmax in place, max-shifted.
fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
}

/// Attention weights `softmax(Q Kᵀ / √d)` for one query/key pair.
pub fn attention_weights(q: ArrayView2<'_, f64>, k: ArrayView2<'_, f64>) -> Array2<f64> {
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut scores = q.dot(&k.t()) * scale;
    softmax_rows(&mut scores);
    scores
}

/// Standard scaled dot-product attention on one frame.
pub fn scaled_dot_attention(q: ArrayView2<'_, f64>, k: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>) -> Array2<f64> {
    attention_weights(q, k).dot(&v)
}

fn attend_all(batch: &AttentionBatch, source: impl Fn(usize) -> usize) -> Array3<f64> {
    let (n, l, _) = batch.q.dim();
    let dv = batch.v.dim().2;
    let mut out = Array3::zeros((n, l, dv));
    for i in 0..n {
        let j = source(i);
        let o = scaled_dot_attention(
            batch.q.index_axis(Axis(0), i),
            batch.k.index_axis(Axis(0), j),
            batch.v.index_axis(Axis(0), j),
        );
        out.slice_mut(s![i, .., ..]).assign(&o);
    }
    out
}

/// Cross-view attention of every frame onto key frame `keyframe`.
pub fn rcv_attention(batch: &AttentionBatch, keyframe: usize) -> Result<Array3<f64>> {
    let n = batch.frames();
    if keyframe >= n {
        return Err(Error::KeyframeOutOfRange { index: keyframe, n });
    }
    Ok(attend_all(batch, |_| keyframe))
}

/// Independent per-frame self-attention (the uncoupled teacher).
pub fn self_attention(batch: &AttentionBatch) -> Array3<f64> {
    attend_all(batch, |i| i)
}

/// Multi-head form on `(N, heads, L, d)` arrays; every head shares the key
/// frame.
pub fn rcv_attention_multihead(
    q: &Array4<f64>,
    k: &Array4<f64>,
    v: &Array4<f64>,
    keyframe: usize,
) -> Result<Array4<f64>> {
    let (n, heads, l, _) = q.dim();
    if k.dim().0 != n || v.dim().0 != n || k.dim().1 != heads || v.dim().1 != heads {
        return Err(Error::ShapeMismatch("Q, K, V must share (frames, heads)".into()));
    }
    let mut out = Array4::zeros((n, heads, l, v.dim().3));
    for h in 0..heads {
        let batch = AttentionBatch::new(
            q.index_axis(Axis(1), h).to_owned(),
            k.index_axis(Axis(1), h).to_owned(),
            v.index_axis(Axis(1), h).to_owned(),
        )?;
        let o = rcv_attention(&batch, keyframe)?;
        out.index_axis_mut(Axis(1), h).assign(&o);
    }
    Ok(out)
}

/// Uniform key frame in `0..n`, one draw from the key-frame stream.
pub fn choose_keyframe(n: usize, rng: &mut Rng) -> usize {
    assert!(n >= 1, "need at least one frame");
    rng.index(n)
}
