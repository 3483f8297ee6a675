use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2};

use super::{cst, LogitsGrid, Model, ModelError, Scalar};
use crate::vocab::TokenId;

pub(crate) const LN_EPS: f64 = 1e-5;

#[inline]
pub(crate) fn view<T>(p: &[T], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((rows, cols), &p[off..off + rows * cols]).expect("tensor fits layout")
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

/// `x · w + b`
pub(crate) fn linear<T: Scalar>(x: &ArrayView2<'_, T>, w: ArrayView2<'_, T>, b: &[T]) -> Array2<T> {
    let mut out = Array2::<T>::zeros((x.nrows(), w.ncols()));
    for mut row in out.rows_mut() {
        row.as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(b);
    }
    general_mat_mul(T::one(), x, &w, T::one(), &mut out);
    out
}

/// The tanh term of the GELU approximation, `tanh(√(2/π)·(x + 0.044715·x³))`.
#[inline]
pub(crate) fn gelu_tanh<T: Scalar>(x: T) -> T {
    let c: T = cst(0.797_884_560_802_865_4);
    let k: T = cst(0.044715);
    let two: T = cst(2.0);
    let e = (two * c * (x + k * x * x * x)).exp();
    T::one() - two / (e + T::one())
}

#[inline]
pub(crate) fn gelu<T: Scalar>(x: T, t: T) -> T {
    let half: T = cst(0.5);
    half * x * (T::one() + t)
}

#[inline]
pub(crate) fn gelu_grad<T: Scalar>(x: T, t: T) -> T {
    let c: T = cst(0.797_884_560_802_865_4);
    let k: T = cst(0.044715);
    let half: T = cst(0.5);
    let three: T = cst(3.0);
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * k * x * x)
}

/// Normalized input and reciprocal standard deviation per row.
#[derive(Clone, Debug)]
pub(crate) struct NormCache<T> {
    pub xhat: Array2<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layer_norm<T: Scalar>(x: &Array2<T>, g: &[T], b: &[T]) -> (Array2<T>, NormCache<T>) {
    let (n, d) = x.dim();
    let inv_d: T = cst(1.0 / d as f64);
    let eps: T = cst(LN_EPS);
    let mut xhat = Array2::<T>::zeros((n, d));
    let mut out = Array2::<T>::zeros((n, d));
    let mut rstd = Vec::with_capacity(n);
    for ((xr, mut hr), mut or) in x
        .rows()
        .into_iter()
        .zip(xhat.rows_mut())
        .zip(out.rows_mut())
    {
        let xs = xr.as_slice().expect("standard layout");
        let mean = xs.iter().copied().sum::<T>() * inv_d;
        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = T::one() / (var + eps).sqrt();
        let hs = hr.as_slice_mut().expect("standard layout");
        let os = or.as_slice_mut().expect("standard layout");
        for i in 0..d {
            hs[i] = (xs[i] - mean) * r;
            os[i] = hs[i] * g[i] + b[i];
        }
        rstd.push(r);
    }
    (out, NormCache { xhat, rstd })
}

/// Saved intermediates of one block, needed by the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct LayerActs<T> {
    pub ln1: NormCache<T>,
    pub h1: Array2<T>,
    pub qkv: Array2<T>,
    /// `[head][query][key]`, rows of length `len`, zero above the diagonal.
    pub probs: Vec<T>,
    pub att: Array2<T>,
    pub ln2: NormCache<T>,
    pub h2: Array2<T>,
    pub pre: Array2<T>,
    pub tanh: Array2<T>,
    pub act: Array2<T>,
}

/// Everything a training forward keeps for [`Model::backward_into`].
#[derive(Clone, Debug)]
pub struct Activations<T> {
    pub(crate) ids: Vec<TokenId>,
    pub(crate) layers: Vec<LayerActs<T>>,
    pub(crate) lnf: NormCache<T>,
    pub(crate) hf: Array2<T>,
}

impl<T> Activations<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Per-layer keys and values of every processed position.
#[derive(Clone, Debug)]
pub struct KvCache<T> {
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    len: usize,
    shape: (usize, usize, usize, usize),
}

impl<T: Scalar> KvCache<T> {
    pub fn new<U: Scalar>(model: &Model<U>) -> Self {
        let c = model.config();
        Self {
            keys: vec![Vec::new(); c.n_layers],
            values: vec![Vec::new(); c.n_layers],
            len: 0,
            shape: (c.n_layers, c.d_model, c.n_heads, c.context_len),
        }
    }

    /// Number of cached positions.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Causal multi-head attention of `n` new queries over `past + n` cached keys.
#[allow(clippy::too_many_arguments)]
fn attend<T: Scalar>(
    qkv: &[T],
    n: usize,
    d: usize,
    heads: usize,
    keys: &[T],
    values: &[T],
    past: usize,
    mut probs: Option<&mut [T]>,
) -> Array2<T> {
    let dh = d / heads;
    let scale: T = cst(1.0 / (dh as f64).sqrt());
    let total = past + n;
    let mut out = vec![T::zero(); n * d];
    let mut scores = vec![T::zero(); total];
    for i in 0..n {
        let visible = past + i + 1;
        let q_row = &qkv[i * 3 * d..i * 3 * d + d];
        for h in 0..heads {
            let q = &q_row[h * dh..(h + 1) * dh];
            let mut max = T::neg_infinity();
            for (k, s) in scores[..visible].iter_mut().enumerate() {
                *s = dot(q, &keys[k * d + h * dh..k * d + (h + 1) * dh]) * scale;
                max = max.max(*s);
            }
            let mut sum = T::zero();
            for s in &mut scores[..visible] {
                *s = (*s - max).exp();
                sum += *s;
            }
            let inv = T::one() / sum;
            let o = &mut out[i * d + h * dh..i * d + (h + 1) * dh];
            for (k, s) in scores[..visible].iter_mut().enumerate() {
                *s *= inv;
                let v = &values[k * d + h * dh..k * d + (h + 1) * dh];
                for (oe, ve) in o.iter_mut().zip(v) {
                    *oe += *s * *ve;
                }
            }
            if let Some(p) = probs.as_deref_mut() {
                let row = (h * n + i) * total;
                p[row..row + visible].copy_from_slice(&scores[..visible]);
            }
        }
    }
    Array2::from_shape_vec((n, d), out).expect("n × d")
}

impl<T: Scalar> Model<T> {
    /// Runs `ids` after the positions already in `cache`, appending their keys
    /// and values. Returns logits for the new positions and, when `record` is
    /// set (only valid on an empty cache), the activations for backward.
    fn pass(
        &self,
        ids: &[TokenId],
        cache: &mut KvCache<T>,
        record: bool,
    ) -> Result<(LogitsGrid<T>, Option<Activations<T>>), ModelError> {
        let c = &self.config;
        if cache.shape != (c.n_layers, c.d_model, c.n_heads, c.context_len) {
            return Err(ModelError::CacheMismatch(format!(
                "cache shape {:?}",
                cache.shape
            )));
        }
        if ids.is_empty() {
            return Err(ModelError::Shape("empty input".into()));
        }
        self.check_tokens(ids, cache.len)?;
        let (n, d, past) = (ids.len(), c.d_model, cache.len);
        let p = &self.params;
        let lay = &self.layout;

        let mut x = Array2::<T>::zeros((n, d));
        for (j, (mut row, id)) in x.rows_mut().into_iter().zip(ids).enumerate() {
            let tok = &p[lay.tok_emb + id.index() * d..lay.tok_emb + (id.index() + 1) * d];
            let pos = &p[lay.pos_emb + (past + j) * d..lay.pos_emb + (past + j + 1) * d];
            for ((r, a), b) in row.iter_mut().zip(tok).zip(pos) {
                *r = *a + *b;
            }
        }

        let mut layer_acts = Vec::with_capacity(if record { c.n_layers } else { 0 });
        for (l, s) in lay.layers.iter().enumerate() {
            let (h1, ln1) = layer_norm(&x, &p[s.ln1_g..s.ln1_g + d], &p[s.ln1_b..s.ln1_b + d]);
            let qkv = linear(
                &h1.view(),
                view(p, s.qkv_w, d, 3 * d),
                &p[s.qkv_b..s.qkv_b + 3 * d],
            );
            let qkv_s = qkv.as_slice().expect("standard layout");
            for row in qkv_s.chunks_exact(3 * d) {
                cache.keys[l].extend_from_slice(&row[d..2 * d]);
                cache.values[l].extend_from_slice(&row[2 * d..]);
            }
            let mut probs = if record {
                vec![T::zero(); c.n_heads * n * n]
            } else {
                Vec::new()
            };
            let att = attend(
                qkv_s,
                n,
                d,
                c.n_heads,
                &cache.keys[l],
                &cache.values[l],
                past,
                record.then_some(probs.as_mut_slice()),
            );
            let o = linear(
                &att.view(),
                view(p, s.proj_w, d, d),
                &p[s.proj_b..s.proj_b + d],
            );
            x += &o;

            let (h2, ln2) = layer_norm(&x, &p[s.ln2_g..s.ln2_g + d], &p[s.ln2_b..s.ln2_b + d]);
            let pre = linear(
                &h2.view(),
                view(p, s.fc1_w, d, c.d_ff),
                &p[s.fc1_b..s.fc1_b + c.d_ff],
            );
            let tanh = pre.mapv(gelu_tanh);
            let mut act = tanh.clone();
            act.zip_mut_with(&pre, |t, &u| *t = gelu(u, *t));
            let f = linear(
                &act.view(),
                view(p, s.fc2_w, c.d_ff, d),
                &p[s.fc2_b..s.fc2_b + d],
            );
            x += &f;

            if record {
                layer_acts.push(LayerActs {
                    ln1,
                    h1,
                    qkv,
                    probs,
                    att,
                    ln2,
                    h2,
                    pre,
                    tanh,
                    act,
                });
            }
        }
        cache.len += n;

        let (hf, lnf) = layer_norm(
            &x,
            &p[lay.lnf_g..lay.lnf_g + d],
            &p[lay.lnf_b..lay.lnf_b + d],
        );
        let v = c.vocab_size;
        let logits = linear(
            &hf.view(),
            view(p, lay.head_w, d, v),
            &p[lay.head_b..lay.head_b + v],
        );
        let grid = LogitsGrid::from_vec(v, logits.into_raw_vec_and_offset().0)?;
        let acts = record.then(|| Activations {
            ids: ids.to_vec(),
            layers: layer_acts,
            lnf,
            hf,
        });
        Ok((grid, acts))
    }

    /// Next-token logits at every position of `ids`.
    pub fn forward(&self, ids: &[TokenId]) -> Result<LogitsGrid<T>, ModelError> {
        let mut cache = KvCache::new(self);
        Ok(self.pass(ids, &mut cache, false)?.0)
    }

    /// Forward pass that also returns the activations needed by backward.
    pub fn forward_train(
        &self,
        ids: &[TokenId],
    ) -> Result<(LogitsGrid<T>, Activations<T>), ModelError> {
        let mut cache = KvCache::new(self);
        let (grid, acts) = self.pass(ids, &mut cache, true)?;
        Ok((grid, acts.expect("recorded")))
    }

    /// Processes a prompt and returns its logits and the filled cache.
    pub fn prefill(&self, ids: &[TokenId]) -> Result<(LogitsGrid<T>, KvCache<T>), ModelError> {
        let mut cache = KvCache::new(self);
        let grid = self.pass(ids, &mut cache, false)?.0;
        Ok((grid, cache))
    }

    /// Appends a chunk of tokens to `cache` and returns their logits.
    pub fn extend(
        &self,
        cache: &mut KvCache<T>,
        ids: &[TokenId],
    ) -> Result<LogitsGrid<T>, ModelError> {
        Ok(self.pass(ids, cache, false)?.0)
    }

    /// One decoding step: logits for `next` given everything in `cache`.
    pub fn forward_incremental(
        &self,
        cache: &mut KvCache<T>,
        next: TokenId,
    ) -> Result<LogitsGrid<T>, ModelError> {
        self.extend(cache, std::slice::from_ref(&next))
    }
}
