use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use super::forward::{dot, gelu_grad, view, Activations, NormCache};
use super::{cst, LogitsGrid, Model, ModelError, Scalar};
use crate::vocab::TokenId;

/// Gradient with the same flat layout as the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub data: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(T::zero());
    }

    /// Euclidean norm, accumulated in f64.
    pub fn norm(&self) -> f64 {
        self.data
            .iter()
            .map(|g| g.to_f64().unwrap_or(f64::NAN).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|g| g.is_finite())
    }
}

fn view_mut<T>(g: &mut [T], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape((rows, cols), &mut g[off..off + rows * cols])
        .expect("tensor fits layout")
}

/// `dw += xᵀ·dy`, `db += Σ_rows dy`, returns `dy·wᵀ`.
fn linear_backward<T: Scalar>(
    x: &Array2<T>,
    w: ArrayView2<'_, T>,
    dy: &Array2<T>,
    grads: &mut [T],
    w_off: usize,
    b_off: usize,
) -> Array2<T> {
    let (rows, cols) = w.dim();
    general_mat_mul(
        T::one(),
        &x.t(),
        dy,
        T::one(),
        &mut view_mut(grads, w_off, rows, cols),
    );
    let db = &mut grads[b_off..b_off + cols];
    for row in dy.rows() {
        for (b, v) in db.iter_mut().zip(row) {
            *b += *v;
        }
    }
    let mut dx = Array2::<T>::zeros((dy.nrows(), rows));
    general_mat_mul(T::one(), dy, &w.t(), T::zero(), &mut dx);
    dx
}

fn layer_norm_backward<T: Scalar>(
    dy: &Array2<T>,
    cache: &NormCache<T>,
    gain: &[T],
    grads: &mut [T],
    g_off: usize,
    b_off: usize,
) -> Array2<T> {
    let (n, d) = dy.dim();
    let inv_d: T = cst(1.0 / d as f64);
    let mut dx = Array2::<T>::zeros((n, d));
    let mut dxhat = vec![T::zero(); d];
    for j in 0..n {
        let dyr = dy.row(j);
        let xh = cache.xhat.row(j);
        for i in 0..d {
            grads[g_off + i] += dyr[i] * xh[i];
            grads[b_off + i] += dyr[i];
            dxhat[i] = dyr[i] * gain[i];
        }
        let mean_d = dxhat.iter().copied().sum::<T>() * inv_d;
        let mean_dx = dxhat.iter().zip(xh.iter()).map(|(a, b)| *a * *b).sum::<T>() * inv_d;
        let r = cache.rstd[j];
        let mut out = dx.row_mut(j);
        for i in 0..d {
            out[i] = r * (dxhat[i] - mean_d - xh[i] * mean_dx);
        }
    }
    dx
}

#[allow(clippy::too_many_arguments)]
fn attention_backward<T: Scalar>(
    datt: &Array2<T>,
    qkv: &Array2<T>,
    probs: &[T],
    n: usize,
    d: usize,
    heads: usize,
) -> Array2<T> {
    let dh = d / heads;
    let scale: T = cst(1.0 / (dh as f64).sqrt());
    let qkv = qkv.as_slice().expect("standard layout");
    let datt = datt.as_slice().expect("standard layout");
    let mut dqkv = vec![T::zero(); n * 3 * d];
    let mut dp = vec![T::zero(); n];
    for h in 0..heads {
        let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
        for i in 0..n {
            let p = &probs[(h * n + i) * n..(h * n + i) * n + i + 1];
            let dout = &datt[i * d + h * dh..i * d + (h + 1) * dh];
            let mut s = T::zero();
            for k in 0..=i {
                dp[k] = dot(dout, &qkv[k * 3 * d + vo..k * 3 * d + vo + dh]);
                s += p[k] * dp[k];
                let dv = &mut dqkv[k * 3 * d + vo..k * 3 * d + vo + dh];
                for (a, b) in dv.iter_mut().zip(dout) {
                    *a += p[k] * *b;
                }
            }
            for k in 0..=i {
                let ds = p[k] * (dp[k] - s) * scale;
                if ds == T::zero() {
                    continue;
                }
                for e in 0..dh {
                    let kv = qkv[k * 3 * d + ko + e];
                    let qv = qkv[i * 3 * d + qo + e];
                    dqkv[i * 3 * d + qo + e] += ds * kv;
                    dqkv[k * 3 * d + ko + e] += ds * qv;
                }
            }
        }
    }
    Array2::from_shape_vec((n, 3 * d), dqkv).expect("n × 3d")
}

impl<T: Scalar> Model<T> {
    /// Accumulates into `grads` the parameter gradient of a scalar loss whose
    /// gradient with respect to the logits is `dlogits`.
    pub fn backward_into(
        &self,
        acts: &Activations<T>,
        dlogits: &LogitsGrid<T>,
        grads: &mut Gradients<T>,
    ) -> Result<(), ModelError> {
        let c = &self.config;
        let (n, d, v) = (acts.len(), c.d_model, c.vocab_size);
        if dlogits.len() != n || dlogits.vocab_size() != v {
            return Err(ModelError::Shape(format!(
                "dlogits is {}×{}, expected {n}×{v}",
                dlogits.len(),
                dlogits.vocab_size()
            )));
        }
        if grads.len() != self.params.len() {
            return Err(ModelError::Shape(
                "gradient buffer does not match parameters".into(),
            ));
        }
        let p = &self.params;
        let lay = &self.layout;
        let g = grads.data.as_mut_slice();

        let dl = Array2::from_shape_vec((n, v), dlogits.as_slice().to_vec()).expect("n × v");
        let dhf = linear_backward(
            &acts.hf,
            view(p, lay.head_w, d, v),
            &dl,
            g,
            lay.head_w,
            lay.head_b,
        );
        let mut dx = layer_norm_backward(
            &dhf,
            &acts.lnf,
            &p[lay.lnf_g..lay.lnf_g + d],
            g,
            lay.lnf_g,
            lay.lnf_b,
        );

        for (s, a) in lay.layers.iter().zip(&acts.layers).rev() {
            let dact = linear_backward(
                &a.act,
                view(p, s.fc2_w, c.d_ff, d),
                &dx,
                g,
                s.fc2_w,
                s.fc2_b,
            );
            let mut dpre = dact;
            for ((dv, &u), &t) in dpre.iter_mut().zip(a.pre.iter()).zip(a.tanh.iter()) {
                *dv *= gelu_grad(u, t);
            }
            let dh2 = linear_backward(
                &a.h2,
                view(p, s.fc1_w, d, c.d_ff),
                &dpre,
                g,
                s.fc1_w,
                s.fc1_b,
            );
            dx += &layer_norm_backward(&dh2, &a.ln2, &p[s.ln2_g..s.ln2_g + d], g, s.ln2_g, s.ln2_b);

            let datt = linear_backward(&a.att, view(p, s.proj_w, d, d), &dx, g, s.proj_w, s.proj_b);
            let dqkv = attention_backward(&datt, &a.qkv, &a.probs, n, d, c.n_heads);
            let dh1 = linear_backward(
                &a.h1,
                view(p, s.qkv_w, d, 3 * d),
                &dqkv,
                g,
                s.qkv_w,
                s.qkv_b,
            );
            dx += &layer_norm_backward(&dh1, &a.ln1, &p[s.ln1_g..s.ln1_g + d], g, s.ln1_g, s.ln1_b);
        }

        for (j, (row, id)) in dx.rows().into_iter().zip(&acts.ids).enumerate() {
            let tok = lay.tok_emb + id.index() * d;
            let pos = lay.pos_emb + j * d;
            for (i, v) in row.iter().enumerate() {
                g[tok + i] += *v;
                g[pos + i] += *v;
            }
        }
        Ok(())
    }

    /// Forward plus backward in one call; returns a fresh gradient.
    pub fn backward(
        &self,
        ids: &[TokenId],
        dlogits: &LogitsGrid<T>,
    ) -> Result<Gradients<T>, ModelError> {
        let (_, acts) = self.forward_train(ids)?;
        let mut grads = self.zero_grads();
        self.backward_into(&acts, dlogits, &mut grads)?;
        Ok(grads)
    }
}
