//! Pre-norm transformer primitives with explicit caches and hand-written
//! backward passes: norm -> attention -> residual, norm -> GELU MLP ->
//! residual. Scaled dot-product attention, no dropout, no class token.

use crate::linalg::{matmul, matmul_a_bt, matmul_at_b_acc, Scalar};
use crate::nets::params::{Gradients, ParameterStore};

const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct BlockDims {
    pub dim: usize,
    pub heads: usize,
}

impl BlockDims {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

pub struct LayerNormCache<T> {
    /// Normalized input (pre gamma/beta), [n, d].
    xhat: Vec<T>,
    /// Reciprocal standard deviation per row.
    rstd: Vec<T>,
}

pub fn layernorm_forward<T: Scalar>(
    x: &[T],
    n: usize,
    d: usize,
    gamma: &[T],
    beta: &[T],
) -> (Vec<T>, LayerNormCache<T>) {
    let mut y = vec![T::zero(); n * d];
    let mut xhat = vec![T::zero(); n * d];
    let mut rstd = vec![T::zero(); n];
    let dn = T::from_usize(d);
    let eps = T::from_f64(LN_EPS);
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().copied().sum::<T>() / dn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let r = (var + eps).sqrt().recip();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = h * gamma[j] + beta[j];
        }
    }
    (y, LayerNormCache { xhat, rstd })
}

pub fn layernorm_backward<T: Scalar>(
    dy: &[T],
    cache: &LayerNormCache<T>,
    n: usize,
    d: usize,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<T> {
    let mut dx = vec![T::zero(); n * d];
    let dn = T::from_usize(d);
    for i in 0..n {
        let dy_row = &dy[i * d..(i + 1) * d];
        let xhat_row = &cache.xhat[i * d..(i + 1) * d];
        let mut sum_dxhat = T::zero();
        let mut sum_dxhat_xhat = T::zero();
        for j in 0..d {
            let dxhat = dy_row[j] * gamma[j];
            sum_dxhat = sum_dxhat + dxhat;
            sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat_row[j];
            dgamma[j] = dgamma[j] + dy_row[j] * xhat_row[j];
            dbeta[j] = dbeta[j] + dy_row[j];
        }
        let mean_dxhat = sum_dxhat / dn;
        let mean_dxhat_xhat = sum_dxhat_xhat / dn;
        for j in 0..d {
            let dxhat = dy_row[j] * gamma[j];
            dx[i * d + j] = cache.rstd[i] * (dxhat - mean_dxhat - xhat_row[j] * mean_dxhat_xhat);
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Linear: y = x W^T + b with W stored [out, in]
// ---------------------------------------------------------------------------

pub fn linear_forward<T: Scalar>(
    x: &[T],
    n: usize,
    in_dim: usize,
    w: &[T],
    b: &[T],
    out_dim: usize,
) -> Vec<T> {
    let mut y = matmul_a_bt(x, w, n, in_dim, out_dim);
    for i in 0..n {
        for j in 0..out_dim {
            y[i * out_dim + j] = y[i * out_dim + j] + b[j];
        }
    }
    y
}

/// Returns dx; accumulates dW and db.
pub fn linear_backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    n: usize,
    in_dim: usize,
    w: &[T],
    out_dim: usize,
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    // dW[out,in] += dy^T x
    matmul_at_b_acc(dw, dy, x, out_dim, n, in_dim);
    for i in 0..n {
        for j in 0..out_dim {
            db[j] = db[j] + dy[i * out_dim + j];
        }
    }
    // dx[n,in] = dy[n,out] W[out,in]
    matmul(dy, w, n, out_dim, in_dim)
}

// ---------------------------------------------------------------------------
// GELU (tanh approximation)
// ---------------------------------------------------------------------------

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

pub fn gelu_forward<T: Scalar>(x: &[T]) -> Vec<T> {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    x.iter()
        .map(|&v| {
            let u = c * (v + a * v * v * v);
            half * v * (T::one() + u.tanh())
        })
        .collect()
}

pub fn gelu_backward<T: Scalar>(dy: &[T], x: &[T]) -> Vec<T> {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    dy.iter()
        .zip(x)
        .map(|(&g, &v)| {
            let u = c * (v + a * v * v * v);
            let t = u.tanh();
            let sech2 = T::one() - t * t;
            let du = c * (T::one() + three * a * v * v);
            g * (half * (T::one() + t) + half * v * sech2 * du)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Row-wise softmax in place over `[rows, cols]`.
pub fn softmax_rows<T: Scalar>(x: &mut [T], rows: usize, cols: usize) {
    for i in 0..rows {
        let row = &mut x[i * cols..(i + 1) * cols];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

// ---------------------------------------------------------------------------
// Multi-head self-attention
// ---------------------------------------------------------------------------

pub struct AttnCache<T> {
    x: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention probabilities, [heads][n][n] flattened.
    probs: Vec<T>,
    /// Concatenated per-head context before the output projection, [n, d].
    ctx: Vec<T>,
    n: usize,
}

fn head_slice<T: Scalar>(m: &[T], n: usize, dims: BlockDims, head: usize) -> Vec<T> {
    let (d, hd) = (dims.dim, dims.head_dim());
    let mut out = vec![T::zero(); n * hd];
    for i in 0..n {
        out[i * hd..(i + 1) * hd].copy_from_slice(&m[i * d + head * hd..i * d + (head + 1) * hd]);
    }
    out
}

fn head_slice_add<T: Scalar>(m: &mut [T], src: &[T], n: usize, dims: BlockDims, head: usize) {
    let (d, hd) = (dims.dim, dims.head_dim());
    for i in 0..n {
        for j in 0..hd {
            m[i * d + head * hd + j] = m[i * d + head * hd + j] + src[i * hd + j];
        }
    }
}

pub fn attention_forward<T: Scalar>(
    x: &[T],
    n: usize,
    store: &ParameterStore<T>,
    prefix: &str,
    dims: BlockDims,
) -> (Vec<T>, AttnCache<T>) {
    let d = dims.dim;
    let hd = dims.head_dim();
    let scale = T::from_f64(1.0 / (hd as f64).sqrt());

    let proj = |name: &str| -> Vec<T> {
        let w = store.get(&format!("{prefix}attn.{name}.weight"));
        let b = store.get(&format!("{prefix}attn.{name}.bias"));
        linear_forward(x, n, d, &w.data, &b.data, d)
    };
    let q = proj("wq");
    let k = proj("wk");
    let v = proj("wv");

    let mut probs = vec![T::zero(); dims.heads * n * n];
    let mut ctx = vec![T::zero(); n * d];
    for h in 0..dims.heads {
        let qh = head_slice(&q, n, dims, h);
        let kh = head_slice(&k, n, dims, h);
        let vh = head_slice(&v, n, dims, h);
        // scores[i,j] = <q_i, k_j> / sqrt(hd)
        let mut scores = matmul_a_bt(&qh, &kh, n, hd, n);
        for s in scores.iter_mut() {
            *s = *s * scale;
        }
        softmax_rows(&mut scores, n, n);
        let ctx_h = matmul(&scores, &vh, n, n, hd);
        head_slice_add(&mut ctx, &ctx_h, n, dims, h);
        probs[h * n * n..(h + 1) * n * n].copy_from_slice(&scores);
    }

    let wo = store.get(&format!("{prefix}attn.wo.weight"));
    let bo = store.get(&format!("{prefix}attn.wo.bias"));
    let out = linear_forward(&ctx, n, d, &wo.data, &bo.data, d);
    (out, AttnCache { x: x.to_vec(), q, k, v, probs, ctx, n })
}

pub fn attention_backward<T: Scalar>(
    dout: &[T],
    cache: &AttnCache<T>,
    store: &ParameterStore<T>,
    grads: &mut Gradients<T>,
    prefix: &str,
    dims: BlockDims,
) -> Vec<T> {
    let d = dims.dim;
    let hd = dims.head_dim();
    let n = cache.n;
    let scale = T::from_f64(1.0 / (hd as f64).sqrt());

    // Output projection.
    let wo_name = format!("{prefix}attn.wo.weight");
    let wo = store.get(&wo_name).data.clone();
    let (i_w, i_b) = (store.index_of(&wo_name), store.index_of(&format!("{prefix}attn.wo.bias")));
    let dctx = {
        let (dw, db) = grads.pair_mut(i_w, i_b);
        linear_backward(dout, &cache.ctx, n, d, &wo, d, dw, db)
    };

    let mut dq = vec![T::zero(); n * d];
    let mut dk = vec![T::zero(); n * d];
    let mut dv = vec![T::zero(); n * d];
    for h in 0..dims.heads {
        let qh = head_slice(&cache.q, n, dims, h);
        let kh = head_slice(&cache.k, n, dims, h);
        let vh = head_slice(&cache.v, n, dims, h);
        let dctx_h = head_slice(&dctx, n, dims, h);
        let probs = &cache.probs[h * n * n..(h + 1) * n * n];

        // dprobs[i,j] = <dctx_i, v_j>; dv[j] += sum_i probs[i,j] dctx_i
        let dprobs = matmul_a_bt(&dctx_h, &vh, n, hd, n);
        let mut dvh = vec![T::zero(); n * hd];
        matmul_at_b_acc(&mut dvh, probs, &dctx_h, n, n, hd);

        // Softmax backward per row.
        let mut dscores = vec![T::zero(); n * n];
        for i in 0..n {
            let p_row = &probs[i * n..(i + 1) * n];
            let dp_row = &dprobs[i * n..(i + 1) * n];
            let inner: T = p_row.iter().zip(dp_row).map(|(&p, &g)| p * g).sum();
            for j in 0..n {
                dscores[i * n + j] = p_row[j] * (dp_row[j] - inner) * scale;
            }
        }

        // dq_h = dscores k_h ; dk_h = dscores^T q_h
        let dqh = matmul(&dscores, &kh, n, n, hd);
        let mut dkh = vec![T::zero(); n * hd];
        matmul_at_b_acc(&mut dkh, &dscores, &qh, n, n, hd);

        head_slice_add(&mut dq, &dqh, n, dims, h);
        head_slice_add(&mut dk, &dkh, n, dims, h);
        head_slice_add(&mut dv, &dvh, n, dims, h);
    }

    // Input projections; dx sums the three paths.
    let mut dx = vec![T::zero(); n * d];
    for (name, dproj) in [("wq", &dq), ("wk", &dk), ("wv", &dv)] {
        let w_name = format!("{prefix}attn.{name}.weight");
        let w = store.get(&w_name).data.clone();
        let i_w = store.index_of(&w_name);
        let i_b = store.index_of(&format!("{prefix}attn.{name}.bias"));
        let dxi = {
            let (dw, db) = grads.pair_mut(i_w, i_b);
            linear_backward(dproj, &cache.x, n, d, &w, d, dw, db)
        };
        crate::linalg::add_assign(&mut dx, &dxi);
    }
    dx
}

// ---------------------------------------------------------------------------
// Full pre-norm block
// ---------------------------------------------------------------------------

pub struct BlockCache<T> {
    ln1: LayerNormCache<T>,
    attn: AttnCache<T>,
    ln2: LayerNormCache<T>,
    /// MLP intermediate: pre-activation hidden, [n, 4d].
    h_pre: Vec<T>,
    /// MLP activation output, [n, 4d].
    h_act: Vec<T>,
    ln2_out: Vec<T>,
    n: usize,
}

pub fn block_forward<T: Scalar>(
    x: &[T],
    n: usize,
    store: &ParameterStore<T>,
    prefix: &str,
    dims: BlockDims,
) -> (Vec<T>, BlockCache<T>) {
    let d = dims.dim;
    let g1 = store.get(&format!("{prefix}ln1.gamma"));
    let b1 = store.get(&format!("{prefix}ln1.beta"));
    let (ln1_out, ln1) = layernorm_forward(x, n, d, &g1.data, &b1.data);
    let (attn_out, attn) = attention_forward(&ln1_out, n, store, prefix, dims);

    let mut x_mid = x.to_vec();
    crate::linalg::add_assign(&mut x_mid, &attn_out);

    let g2 = store.get(&format!("{prefix}ln2.gamma"));
    let b2 = store.get(&format!("{prefix}ln2.beta"));
    let (ln2_out, ln2) = layernorm_forward(&x_mid, n, d, &g2.data, &b2.data);

    let w1 = store.get(&format!("{prefix}mlp.fc1.weight"));
    let bb1 = store.get(&format!("{prefix}mlp.fc1.bias"));
    let h_pre = linear_forward(&ln2_out, n, d, &w1.data, &bb1.data, 4 * d);
    let h_act = gelu_forward(&h_pre);
    let w2 = store.get(&format!("{prefix}mlp.fc2.weight"));
    let bb2 = store.get(&format!("{prefix}mlp.fc2.bias"));
    let mlp_out = linear_forward(&h_act, n, 4 * d, &w2.data, &bb2.data, d);

    let mut y = x_mid.clone();
    crate::linalg::add_assign(&mut y, &mlp_out);

    (y, BlockCache { ln1, attn, ln2, h_pre, h_act, ln2_out, n })
}

pub fn block_backward<T: Scalar>(
    dy: &[T],
    cache: &BlockCache<T>,
    store: &ParameterStore<T>,
    grads: &mut Gradients<T>,
    prefix: &str,
    dims: BlockDims,
) -> Vec<T> {
    let d = dims.dim;
    let n = cache.n;

    // y = x_mid + mlp(ln2(x_mid))
    let w2_name = format!("{prefix}mlp.fc2.weight");
    let w2 = store.get(&w2_name).data.clone();
    let dh_act = {
        let (i_w, i_b) =
            (store.index_of(&w2_name), store.index_of(&format!("{prefix}mlp.fc2.bias")));
        let (dw, db) = grads.pair_mut(i_w, i_b);
        linear_backward(dy, &cache.h_act, n, 4 * d, &w2, d, dw, db)
    };
    let dh_pre = gelu_backward(&dh_act, &cache.h_pre);
    let w1_name = format!("{prefix}mlp.fc1.weight");
    let w1 = store.get(&w1_name).data.clone();
    let dln2_out = {
        let (i_w, i_b) =
            (store.index_of(&w1_name), store.index_of(&format!("{prefix}mlp.fc1.bias")));
        let (dw, db) = grads.pair_mut(i_w, i_b);
        linear_backward(&dh_pre, &cache.ln2_out, n, d, &w1, 4 * d, dw, db)
    };
    let g2_name = format!("{prefix}ln2.gamma");
    let g2 = store.get(&g2_name).data.clone();
    let mut dx_mid = {
        let (i_g, i_b) = (store.index_of(&g2_name), store.index_of(&format!("{prefix}ln2.beta")));
        let (dg, db) = grads.pair_mut(i_g, i_b);
        layernorm_backward(&dln2_out, &cache.ln2, n, d, &g2, dg, db)
    };
    // Residual path.
    crate::linalg::add_assign(&mut dx_mid, dy);

    // x_mid = x + attn(ln1(x))
    let dattn_out = dx_mid.clone();
    let dln1_out = attention_backward(&dattn_out, &cache.attn, store, grads, prefix, dims);
    let g1_name = format!("{prefix}ln1.gamma");
    let g1 = store.get(&g1_name).data.clone();
    let mut dx = {
        let (i_g, i_b) = (store.index_of(&g1_name), store.index_of(&format!("{prefix}ln1.beta")));
        let (dg, db) = grads.pair_mut(i_g, i_b);
        layernorm_backward(&dln1_out, &cache.ln1, n, d, &g1, dg, db)
    };
    crate::linalg::add_assign(&mut dx, &dx_mid);
    dx
}

/// Run `depth` blocks under `{base}{i}.` prefixes, collecting caches.
pub fn stack_forward<T: Scalar>(
    x: Vec<T>,
    n: usize,
    store: &ParameterStore<T>,
    base: &str,
    depth: usize,
    dims: BlockDims,
) -> (Vec<T>, Vec<BlockCache<T>>) {
    let mut h = x;
    let mut caches = Vec::with_capacity(depth);
    for i in 0..depth {
        let (next, cache) = block_forward(&h, n, store, &format!("{base}{i}."), dims);
        caches.push(cache);
        h = next;
    }
    (h, caches)
}

pub fn stack_backward<T: Scalar>(
    dy: Vec<T>,
    caches: &[BlockCache<T>],
    store: &ParameterStore<T>,
    grads: &mut Gradients<T>,
    base: &str,
    dims: BlockDims,
) -> Vec<T> {
    let mut d = dy;
    for (i, cache) in caches.iter().enumerate().rev() {
        d = block_backward(&d, cache, store, grads, &format!("{base}{i}."), dims);
    }
    d
}
