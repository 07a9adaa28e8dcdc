//! Forward computation for the full record pipeline plus the matching
//! hand-written backward pass.
//!
//! Flow per record: visible low-res patches -> encoder -> (a) pooled global
//! feature fused into visible report-token embeddings for the report
//! decoder, (b) image decoder restoring every grid cell at 2x resolution.
//! Losses read only masked positions; the backward pass mirrors that.

use crate::error::{Error, Result};
use crate::linalg::Scalar;
use crate::masking::{MaskedImageView, MaskedReportView};
use crate::nets::block::{
    linear_backward, linear_forward, softmax_rows, stack_backward, stack_forward, BlockCache,
    BlockDims,
};
use crate::nets::config::{FusionMode, ModelConfig};
use crate::nets::params::{Gradients, ParameterStore, LOOKUP_NAME};
use crate::nets::posenc::{sincos_1d, sincos_2d};
use crate::record_io::tokenizer::MASK_ID;

/// Masked views of one record, borrowed by forward/backward.
#[derive(Clone, Copy)]
pub struct RecordViews<'a> {
    pub image: &'a MaskedImageView,
    pub report: &'a MaskedReportView,
}

fn to_scalar<T: Scalar>(rows: &[Vec<f32>]) -> Vec<T> {
    rows.iter().flat_map(|r| r.iter().map(|&v| T::from_f32(v))).collect()
}

fn check_positions(positions: &[usize], limit: usize, what: &str) -> Result<()> {
    if let Some(&p) = positions.iter().find(|&&p| p >= limit) {
        return Err(Error::Argument(format!("{what} position {p} outside 0..{limit}")));
    }
    Ok(())
}

/// Check that two position lists partition 0..total.
fn check_partition(visible: &[usize], masked: &[usize], total: usize, what: &str) -> Result<()> {
    let mut seen = vec![false; total];
    for &p in visible.iter().chain(masked) {
        if p >= total || seen[p] {
            return Err(Error::Argument(format!(
                "{what} positions do not partition 0..{total} (offender {p})"
            )));
        }
        seen[p] = true;
    }
    if visible.len() + masked.len() != total {
        return Err(Error::Argument(format!(
            "{what} positions cover {} of {total} slots",
            visible.len() + masked.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

pub(crate) struct EncodeCache<T> {
    /// Raw patch vectors, [k, patch_dim].
    x_patches: Vec<T>,
    caches: Vec<BlockCache<T>>,
    k: usize,
}

pub(crate) fn encode_cached<T: Scalar>(
    patches: &[Vec<f32>],
    positions: &[usize],
    store: &ParameterStore<T>,
    config: &ModelConfig,
) -> Result<(Vec<T>, EncodeCache<T>)> {
    let k = patches.len();
    if positions.len() != k {
        return Err(Error::Argument(format!(
            "{k} patches but {} positions",
            positions.len()
        )));
    }
    check_positions(positions, config.num_patches(), "grid")?;
    let pd = config.patch_dim();
    if let Some(p) = patches.iter().find(|p| p.len() != pd) {
        return Err(Error::Argument(format!(
            "patch vector length {} does not match p^2*C = {pd}",
            p.len()
        )));
    }
    let d = config.encoder_dim;
    let x_patches = to_scalar::<T>(patches);

    let w = store.get("encoder.patch_embed.weight");
    let b = store.get("encoder.patch_embed.bias");
    let mut h = linear_forward(&x_patches, k, pd, &w.data, &b.data, d);

    let pos_table: Vec<T> = sincos_2d(config.grid_rows(), config.grid_cols(), d)?;
    for (i, &pos) in positions.iter().enumerate() {
        for j in 0..d {
            h[i * d + j] = h[i * d + j] + pos_table[pos * d + j];
        }
    }

    let dims = BlockDims { dim: d, heads: config.encoder_heads };
    let (out, caches) = stack_forward(h, k, store, "encoder.block", config.encoder_depth, dims);
    Ok((out, EncodeCache { x_patches, caches, k }))
}

pub(crate) fn encode_backward<T: Scalar>(
    d_out: Vec<T>,
    cache: &EncodeCache<T>,
    store: &ParameterStore<T>,
    grads: &mut Gradients<T>,
    config: &ModelConfig,
) {
    let dims = BlockDims { dim: config.encoder_dim, heads: config.encoder_heads };
    let d_embed = stack_backward(d_out, &cache.caches, store, grads, "encoder.block", dims);
    // Positional constants are parameter-free; gradient passes through.
    let w_name = "encoder.patch_embed.weight";
    let w = store.get(w_name).data.clone();
    let (i_w, i_b) = (store.index_of(w_name), store.index_of("encoder.patch_embed.bias"));
    let (dw, db) = grads.pair_mut(i_w, i_b);
    let _ = linear_backward(
        &d_embed,
        &cache.x_patches,
        cache.k,
        config.patch_dim(),
        &w,
        config.encoder_dim,
        dw,
        db,
    );
}

/// One embedding per visible patch, in input order. No class token.
pub fn encode<T: Scalar>(
    patches: &[Vec<f32>],
    positions: &[usize],
    store: &ParameterStore<T>,
    config: &ModelConfig,
) -> Result<Vec<Vec<T>>> {
    let (flat, cache) = encode_cached(patches, positions, store, config)?;
    let d = config.encoder_dim;
    Ok((0..cache.k).map(|i| flat[i * d..(i + 1) * d].to_vec()).collect())
}

// ---------------------------------------------------------------------------
// Global pooling
// ---------------------------------------------------------------------------

pub(crate) struct PoolCache {
    /// Argmax row per coordinate (GMP only).
    argmax: Option<Vec<usize>>,
    k: usize,
}

pub(crate) fn global_pool_cached<T: Scalar>(
    flat: &[T],
    k: usize,
    d: usize,
    mode: FusionMode,
) -> Result<(Vec<T>, PoolCache)> {
    if k == 0 {
        return Err(Error::Argument("global pooling over zero embeddings".into()));
    }
    match mode {
        FusionMode::Gap => {
            let kn = T::from_usize(k);
            let mut g = vec![T::zero(); d];
            for i in 0..k {
                for j in 0..d {
                    g[j] = g[j] + flat[i * d + j];
                }
            }
            for v in g.iter_mut() {
                *v = *v / kn;
            }
            Ok((g, PoolCache { argmax: None, k }))
        }
        FusionMode::Gmp => {
            let mut g = flat[..d].to_vec();
            let mut arg = vec![0usize; d];
            for i in 1..k {
                for j in 0..d {
                    if flat[i * d + j] > g[j] {
                        g[j] = flat[i * d + j];
                        arg[j] = i;
                    }
                }
            }
            Ok((g, PoolCache { argmax: Some(arg), k }))
        }
    }
}

pub(crate) fn global_pool_backward<T: Scalar>(d_g: &[T], cache: &PoolCache, d_flat: &mut [T], d: usize) {
    match &cache.argmax {
        None => {
            let kn = T::from_usize(cache.k);
            for i in 0..cache.k {
                for j in 0..d {
                    d_flat[i * d + j] = d_flat[i * d + j] + d_g[j] / kn;
                }
            }
        }
        Some(arg) => {
            for j in 0..d {
                d_flat[arg[j] * d + j] = d_flat[arg[j] * d + j] + d_g[j];
            }
        }
    }
}

/// Collapse per-patch embeddings to a single vector: coordinatewise mean
/// (GAP) or max (GMP).
pub fn global_pool<T: Scalar>(embeddings: &[Vec<T>], mode: FusionMode) -> Result<Vec<T>> {
    if embeddings.is_empty() {
        return Err(Error::Argument("global pooling over zero embeddings".into()));
    }
    let d = embeddings[0].len();
    let flat: Vec<T> = embeddings.iter().flat_map(|r| r.iter().copied()).collect();
    Ok(global_pool_cached(&flat, embeddings.len(), d, mode)?.0)
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

/// Hybrid embeddings: lookup(v_i) + g for every visible token. Mask-token
/// positions are not fused; they receive the [MASK] embedding only (in
/// [`decode_report`]).
pub fn fuse<T: Scalar>(
    visible_token_ids: &[usize],
    global_feature: &[T],
    store: &ParameterStore<T>,
    config: &ModelConfig,
) -> Result<Vec<Vec<T>>> {
    let d = config.report_decoder_dim;
    if global_feature.len() != d {
        return Err(Error::Argument(format!(
            "global feature length {} does not match report decoder dim {d}",
            global_feature.len()
        )));
    }
    let lookup = store.get(LOOKUP_NAME);
    let v = config.vocab_size;
    let mut out = Vec::with_capacity(visible_token_ids.len());
    for &id in visible_token_ids {
        if id >= v {
            return Err(Error::Argument(format!("token id {id} outside vocabulary of size {v}")));
        }
        let row = &lookup.data[id * d..(id + 1) * d];
        out.push(row.iter().zip(global_feature).map(|(&a, &b)| a + b).collect());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Report decoder
// ---------------------------------------------------------------------------

pub struct ReportDecode<T> {
    /// Softmax rows at masked positions, [p, vocab].
    pub probs_masked: Vec<T>,
    /// Decoder output embeddings, [L, d_rep].
    rep_out: Vec<T>,
    caches: Vec<BlockCache<T>>,
    seq_len: usize,
}

fn report_pos_table<T: Scalar>(store: &ParameterStore<T>, config: &ModelConfig) -> Result<Vec<T>> {
    match store.try_get("report_decoder.pos_table") {
        Some(t) => Ok(t.data.clone()),
        None => sincos_1d(config.max_report_len, config.report_decoder_dim),
    }
}

/// Assemble the full-length decoder input: hybrid embeddings at visible
/// positions, the [MASK] lookup row at masked positions, plus positional
/// encodings. Returns the input matrix [L, d_rep].
fn assemble_report_input<T: Scalar>(
    hybrid: &[Vec<T>],
    visible_positions: &[usize],
    masked_positions: &[usize],
    store: &ParameterStore<T>,
    config: &ModelConfig,
) -> Result<Vec<T>> {
    let seq_len = visible_positions.len() + masked_positions.len();
    if seq_len > config.max_report_len {
        return Err(Error::Argument(format!(
            "sequence length {seq_len} exceeds max report length {}",
            config.max_report_len
        )));
    }
    if hybrid.len() != visible_positions.len() {
        return Err(Error::Argument(format!(
            "{} hybrid embeddings but {} visible positions",
            hybrid.len(),
            visible_positions.len()
        )));
    }
    check_partition(visible_positions, masked_positions, seq_len, "report")?;
    let d = config.report_decoder_dim;
    let lookup = store.get(LOOKUP_NAME);
    let mask_row = &lookup.data[MASK_ID * d..(MASK_ID + 1) * d];
    let pos_table = report_pos_table(store, config)?;

    let mut x = vec![T::zero(); seq_len * d];
    for (i, &pos) in visible_positions.iter().enumerate() {
        if hybrid[i].len() != d {
            return Err(Error::Argument(format!(
                "hybrid embedding length {} does not match report decoder dim {d}",
                hybrid[i].len()
            )));
        }
        x[pos * d..(pos + 1) * d].copy_from_slice(&hybrid[i]);
    }
    for &pos in masked_positions {
        x[pos * d..(pos + 1) * d].copy_from_slice(mask_row);
    }
    for pos in 0..seq_len {
        for j in 0..d {
            x[pos * d + j] = x[pos * d + j] + pos_table[pos * d + j];
        }
    }
    Ok(x)
}

fn decode_report_cached<T: Scalar>(
    hybrid: &[Vec<T>],
    visible_positions: &[usize],
    masked_positions: &[usize],
    store: &ParameterStore<T>,
    config: &ModelConfig,
) -> Result<ReportDecode<T>> {
    let seq_len = visible_positions.len() + masked_positions.len();
    let d = config.report_decoder_dim;
    if seq_len == 0 {
        return Ok(ReportDecode {
            probs_masked: Vec::new(),
            rep_out: Vec::new(),
            caches: Vec::new(),
            seq_len: 0,
        });
    }
    let x = assemble_report_input(hybrid, visible_positions, masked_positions, store, config)?;
    let dims = BlockDims { dim: d, heads: config.report_decoder_heads };
    let (rep_out, caches) =
        stack_forward(x, seq_len, store, "report_decoder.block", config.report_decoder_depth, dims);

    // Vocabulary head + softmax at masked rows only.
    let p = masked_positions.len();
    let v = config.vocab_size;
    let mut probs_masked = vec![T::zero(); p * v];
    if p > 0 {
        let rows: Vec<T> = masked_positions
            .iter()
            .flat_map(|&pos| rep_out[pos * d..(pos + 1) * d].iter().copied())
            .collect();
        let w = store.get("report_decoder.head.weight");
        let b = store.get("report_decoder.head.bias");
        probs_masked = linear_forward(&rows, p, d, &w.data, &b.data, v);
        softmax_rows(&mut probs_masked, p, v);
    }
    Ok(ReportDecode { probs_masked, rep_out, caches, seq_len })
}

/// Per-position probability distributions over the vocabulary at masked
/// positions, in `masked_positions` order. Each row sums to 1.
pub fn decode_report<T: Scalar>(
    hybrid: &[Vec<T>],
    visible_positions: &[usize],
    masked_positions: &[usize],
    store: &ParameterStore<T>,
    config: &ModelConfig,
) -> Result<Vec<Vec<T>>> {
    let dec = decode_report_cached(hybrid, visible_positions, masked_positions, store, config)?;
    let v = config.vocab_size;
    Ok((0..masked_positions.len())
        .map(|i| dec.probs_masked[i * v..(i + 1) * v].to_vec())
        .collect())
}

/// Like [`decode_report`] but returns the distribution at every sequence
/// position (visible and masked), for reconstruction dumps and for checking
/// that the losses ignore visible positions.
pub fn decode_report_all<T: Scalar>(
    hybrid: &[Vec<T>],
    visible_positions: &[usize],
    masked_positions: &[usize],
    store: &ParameterStore<T>,
    config: &ModelConfig,
) -> Result<Vec<Vec<T>>> {
    let seq_len = visible_positions.len() + masked_positions.len();
    if seq_len == 0 {
        return Ok(Vec::new());
    }
    let d = config.report_decoder_dim;
    let x = assemble_report_input(hybrid, visible_positions, masked_positions, store, config)?;
    let dims = BlockDims { dim: d, heads: config.report_decoder_heads };
    let (rep_out, _) =
        stack_forward(x, seq_len, store, "report_decoder.block", config.report_decoder_depth, dims);
    let w = store.get("report_decoder.head.weight");
    let b = store.get("report_decoder.head.bias");
    let v = config.vocab_size;
    let mut logits = linear_forward(&rep_out, seq_len, d, &w.data, &b.data, v);
    softmax_rows(&mut logits, seq_len, v);
    Ok((0..seq_len).map(|i| logits[i * v..(i + 1) * v].to_vec()).collect())
}

// ---------------------------------------------------------------------------
// Image decoder
// ---------------------------------------------------------------------------

pub struct ImageDecode<T> {
    /// Per-token pixel predictions for every grid position, [N, target_dim].
    pub preds: Vec<T>,
    dec_out: Vec<T>,
    caches: Vec<BlockCache<T>>,
    /// Raw pooled visible-token lookup embedding (pre projection), when
    /// hybrid restoration is active.
    text_pool: Option<Vec<T>>,
}

/// GAP over the lookup embeddings of visible report tokens; zero vector
/// when no tokens are visible.
fn pool_visible_token_embeddings<T: Scalar>(
    visible_token_ids: &[usize],
    store: &ParameterStore<T>,
    config: &ModelConfig,
) -> Result<Vec<T>> {
    let d = config.report_decoder_dim;
    let mut pooled = vec![T::zero(); d];
    if visible_token_ids.is_empty() {
        return Ok(pooled);
    }
    let lookup = store.get(LOOKUP_NAME);
    for &id in visible_token_ids {
        if id >= config.vocab_size {
            return Err(Error::Argument(format!(
                "token id {id} outside vocabulary of size {}",
                config.vocab_size
            )));
        }
        for j in 0..d {
            pooled[j] = pooled[j] + lookup.data[id * d + j];
        }
    }
    let q = T::from_usize(visible_token_ids.len());
    for v in pooled.iter_mut() {
        *v = *v / q;
    }
    Ok(pooled)
}

fn decode_image_cached<T: Scalar>(
    visible_embeddings: &[T],
    visible_positions: &[usize],
    masked_positions: &[usize],
    text_pool: Option<Vec<T>>,
    store: &ParameterStore<T>,
    config: &ModelConfig,
) -> Result<ImageDecode<T>> {
    let n = config.num_patches();
    check_partition(visible_positions, masked_positions, n, "grid")?;
    let k = visible_positions.len();
    if visible_embeddings.len() != k * config.encoder_dim {
        return Err(Error::Argument(format!(
            "visible embeddings size {} does not match {k} x {}",
            visible_embeddings.len(),
            config.encoder_dim
        )));
    }
    let d = config.image_decoder_dim;

    // Project encoder outputs into decoder width, scatter to grid slots,
    // fill masked slots with the learned mask token.
    let w = store.get("image_decoder.embed.weight");
    let b = store.get("image_decoder.embed.bias");
    let vis = linear_forward(visible_embeddings, k, config.encoder_dim, &w.data, &b.data, d);
    let mask_token = store.get("image_decoder.mask_token");
    let mut x = vec![T::zero(); n * d];
    for (i, &pos) in visible_positions.iter().enumerate() {
        x[pos * d..(pos + 1) * d].copy_from_slice(&vis[i * d..(i + 1) * d]);
    }
    for &pos in masked_positions {
        x[pos * d..(pos + 1) * d].copy_from_slice(&mask_token.data);
    }

    let pos_table: Vec<T> = sincos_2d(config.grid_rows(), config.grid_cols(), d)?;
    for i in 0..n * d {
        x[i] = x[i] + pos_table[i];
    }

    // Hybrid restoration: pooled report-token embedding, projected, added to
    // every token.
    if let Some(pool) = &text_pool {
        let w = store.get("image_decoder.report_proj.weight");
        let b = store.get("image_decoder.report_proj.bias");
        let t = linear_forward(pool, 1, config.report_decoder_dim, &w.data, &b.data, d);
        for i in 0..n {
            for j in 0..d {
                x[i * d + j] = x[i * d + j] + t[j];
            }
        }
    }

    let dims = BlockDims { dim: d, heads: config.image_decoder_heads };
    let (dec_out, caches) =
        stack_forward(x, n, store, "image_decoder.block", config.image_decoder_depth, dims);

    let hw = store.get("image_decoder.head.weight");
    let hb = store.get("image_decoder.head.bias");
    let preds = linear_forward(&dec_out, n, d, &hw.data, &hb.data, config.target_dim());
    Ok(ImageDecode { preds, dec_out, caches, text_pool })
}

/// Pixel predictions for every grid position (mask tokens fill the gaps).
/// Each row has `(2p)^2*C` values with super-resolution on, `p^2*C` off.
/// `visible_token_ids` feeds the pooled text embedding when hybrid image
/// restoration is configured; it is ignored otherwise.
pub fn decode_image<T: Scalar>(
    visible_embeddings: &[Vec<T>],
    visible_positions: &[usize],
    masked_positions: &[usize],
    visible_token_ids: &[usize],
    store: &ParameterStore<T>,
    config: &ModelConfig,
) -> Result<Vec<Vec<T>>> {
    let flat: Vec<T> = visible_embeddings.iter().flat_map(|r| r.iter().copied()).collect();
    let text_pool = if config.hybrid_image_restoration {
        Some(pool_visible_token_embeddings(visible_token_ids, store, config)?)
    } else {
        None
    };
    let dec = decode_image_cached(&flat, visible_positions, masked_positions, text_pool, store, config)?;
    let td = config.target_dim();
    Ok((0..config.num_patches()).map(|i| dec.preds[i * td..(i + 1) * td].to_vec()).collect())
}

// ---------------------------------------------------------------------------
// Whole-record forward/backward
// ---------------------------------------------------------------------------

/// Everything retained from one record's forward pass: outputs for the
/// losses plus the caches the backward pass needs.
pub struct RecordForward<T> {
    pub enc_out: Vec<T>,
    enc_cache: EncodeCache<T>,
    pool: PoolCache,
    /// Pooled feature before the optional projection into report space.
    global_raw: Vec<T>,
    /// Global feature in report-decoder space.
    pub global: Vec<T>,
    pub report: Option<ReportDecode<T>>,
    pub image: Option<ImageDecode<T>>,
}

pub fn record_forward<T: Scalar>(
    views: RecordViews<'_>,
    store: &ParameterStore<T>,
    config: &ModelConfig,
    mlm_enabled: bool,
    mim_enabled: bool,
) -> Result<RecordForward<T>> {
    let d_enc = config.encoder_dim;
    let (enc_out, enc_cache) = encode_cached(
        &views.image.visible_patches,
        &views.image.visible_positions,
        store,
        config,
    )?;
    let k = views.image.visible_positions.len();
    let (global_raw, pool) = global_pool_cached(&enc_out, k, d_enc, config.fusion_mode)?;

    let global = if store.contains("report_decoder.global_proj.weight") {
        let w = store.get("report_decoder.global_proj.weight");
        let b = store.get("report_decoder.global_proj.bias");
        linear_forward(&global_raw, 1, d_enc, &w.data, &b.data, config.report_decoder_dim)
    } else {
        global_raw.clone()
    };

    let report = if mlm_enabled {
        let hybrid = fuse(&views.report.visible_tokens, &global, store, config)?;
        Some(decode_report_cached(
            &hybrid,
            &views.report.visible_positions,
            &views.report.masked_positions,
            store,
            config,
        )?)
    } else {
        None
    };

    let image = if mim_enabled {
        let text_pool = if config.hybrid_image_restoration {
            Some(pool_visible_token_embeddings(&views.report.visible_tokens, store, config)?)
        } else {
            None
        };
        Some(decode_image_cached(
            &enc_out,
            &views.image.visible_positions,
            &views.image.masked_positions,
            text_pool,
            store,
            config,
        )?)
    } else {
        None
    };

    Ok(RecordForward { enc_out, enc_cache, pool, global_raw, global, report, image })
}

/// Backward for one record. `w_report` scales the gradient of the summed
/// masked-token negative log-likelihood; `w_image` scales the gradient of
/// the summed masked-pixel squared error. Batch-level means are expressed
/// through these weights.
pub fn record_backward<T: Scalar>(
    fwd: &RecordForward<T>,
    views: RecordViews<'_>,
    store: &ParameterStore<T>,
    config: &ModelConfig,
    grads: &mut Gradients<T>,
    w_report: T,
    w_image: T,
) -> Result<()> {
    let d_enc = config.encoder_dim;
    let d_rep = config.report_decoder_dim;
    let k = views.image.visible_positions.len();
    let mut d_enc_out = vec![T::zero(); k * d_enc];
    let mut d_global = vec![T::zero(); d_rep];

    // ---- Image branch ----
    if let Some(img) = &fwd.image {
        if w_image != T::zero() {
            let n = config.num_patches();
            let d_img = config.image_decoder_dim;
            let td = config.target_dim();
            let two = T::from_f64(2.0);

            // d(sum of squared errors)/d pred = 2 (pred - target) at masked
            // rows; exactly zero elsewhere.
            let mut d_preds = vec![T::zero(); n * td];
            for (j, &pos) in views.image.masked_positions.iter().enumerate() {
                let target = &views.image.targets[j];
                for c in 0..td {
                    let diff = img.preds[pos * td + c] - T::from_f32(target[c]);
                    d_preds[pos * td + c] = two * diff * w_image;
                }
            }

            let hw_name = "image_decoder.head.weight";
            let hw = store.get(hw_name).data.clone();
            let d_dec_out = {
                let (i_w, i_b) =
                    (store.index_of(hw_name), store.index_of("image_decoder.head.bias"));
                let (dw, db) = grads.pair_mut(i_w, i_b);
                linear_backward(&d_preds, &img.dec_out, n, d_img, &hw, td, dw, db)
            };

            let dims = BlockDims { dim: d_img, heads: config.image_decoder_heads };
            let d_x =
                stack_backward(d_dec_out, &img.caches, store, grads, "image_decoder.block", dims);

            // Pooled text feature was added to every token.
            if let Some(pool) = &img.text_pool {
                let mut d_t = vec![T::zero(); d_img];
                for i in 0..n {
                    for j in 0..d_img {
                        d_t[j] = d_t[j] + d_x[i * d_img + j];
                    }
                }
                let w_name = "image_decoder.report_proj.weight";
                let w = store.get(w_name).data.clone();
                let d_pool = {
                    let (i_w, i_b) =
                        (store.index_of(w_name), store.index_of("image_decoder.report_proj.bias"));
                    let (dw, db) = grads.pair_mut(i_w, i_b);
                    linear_backward(&d_t, pool, 1, d_rep, &w, d_img, dw, db)
                };
                let q = views.report.visible_tokens.len();
                if q > 0 {
                    let qn = T::from_usize(q);
                    let d_lookup = grads.by_name_mut(store, LOOKUP_NAME);
                    for &id in &views.report.visible_tokens {
                        for j in 0..d_rep {
                            d_lookup[id * d_rep + j] = d_lookup[id * d_rep + j] + d_pool[j] / qn;
                        }
                    }
                }
            }

            // Mask token rows.
            {
                let d_mask = grads.by_name_mut(store, "image_decoder.mask_token");
                for &pos in &views.image.masked_positions {
                    for j in 0..d_img {
                        d_mask[j] = d_mask[j] + d_x[pos * d_img + j];
                    }
                }
            }

            // Visible rows flow back through the decoder embedding into the
            // encoder outputs.
            let d_vis: Vec<T> = views
                .image
                .visible_positions
                .iter()
                .flat_map(|&pos| d_x[pos * d_img..(pos + 1) * d_img].iter().copied())
                .collect();
            let w_name = "image_decoder.embed.weight";
            let w = store.get(w_name).data.clone();
            let d_enc_from_img = {
                let (i_w, i_b) =
                    (store.index_of(w_name), store.index_of("image_decoder.embed.bias"));
                let (dw, db) = grads.pair_mut(i_w, i_b);
                linear_backward(&d_vis, &fwd.enc_out, k, d_enc, &w, d_img, dw, db)
            };
            crate::linalg::add_assign(&mut d_enc_out, &d_enc_from_img);
        }
    }

    // ---- Report branch ----
    if let Some(rep) = &fwd.report {
        if w_report != T::zero() && rep.seq_len > 0 {
            let v = config.vocab_size;
            let p = views.report.masked_positions.len();
            if p > 0 {
                // Cross-entropy through softmax: d logits = (probs - onehot) * w.
                let mut d_logits = rep.probs_masked.clone();
                for (j, &target) in views.report.targets.iter().enumerate() {
                    d_logits[j * v + target] = d_logits[j * v + target] - T::one();
                }
                crate::linalg::scale(&mut d_logits, w_report);

                let rows: Vec<T> = views
                    .report
                    .masked_positions
                    .iter()
                    .flat_map(|&pos| rep.rep_out[pos * d_rep..(pos + 1) * d_rep].iter().copied())
                    .collect();
                let hw_name = "report_decoder.head.weight";
                let hw = store.get(hw_name).data.clone();
                let d_rows = {
                    let (i_w, i_b) =
                        (store.index_of(hw_name), store.index_of("report_decoder.head.bias"));
                    let (dw, db) = grads.pair_mut(i_w, i_b);
                    linear_backward(&d_logits, &rows, p, d_rep, &hw, v, dw, db)
                };

                // Scatter masked-row gradients into the full sequence; visible
                // rows receive nothing from the loss.
                let mut d_rep_out = vec![T::zero(); rep.seq_len * d_rep];
                for (j, &pos) in views.report.masked_positions.iter().enumerate() {
                    d_rep_out[pos * d_rep..(pos + 1) * d_rep]
                        .copy_from_slice(&d_rows[j * d_rep..(j + 1) * d_rep]);
                }

                let dims = BlockDims { dim: d_rep, heads: config.report_decoder_heads };
                let d_x = stack_backward(
                    d_rep_out,
                    &rep.caches,
                    store,
                    grads,
                    "report_decoder.block",
                    dims,
                );

                // Learnable positional rows.
                if store.contains("report_decoder.pos_table") {
                    let d_pos = grads.by_name_mut(store, "report_decoder.pos_table");
                    for pos in 0..rep.seq_len {
                        for j in 0..d_rep {
                            d_pos[pos * d_rep + j] = d_pos[pos * d_rep + j] + d_x[pos * d_rep + j];
                        }
                    }
                }

                // Masked slots hold the [MASK] lookup row.
                {
                    let d_lookup = grads.by_name_mut(store, LOOKUP_NAME);
                    for &pos in &views.report.masked_positions {
                        for j in 0..d_rep {
                            d_lookup[MASK_ID * d_rep + j] =
                                d_lookup[MASK_ID * d_rep + j] + d_x[pos * d_rep + j];
                        }
                    }
                    // Visible slots: hybrid = lookup(v_i) + g.
                    for (i, &pos) in views.report.visible_positions.iter().enumerate() {
                        let id = views.report.visible_tokens[i];
                        for j in 0..d_rep {
                            d_lookup[id * d_rep + j] =
                                d_lookup[id * d_rep + j] + d_x[pos * d_rep + j];
                        }
                    }
                }
                for &pos in &views.report.visible_positions {
                    for j in 0..d_rep {
                        d_global[j] = d_global[j] + d_x[pos * d_rep + j];
                    }
                }
            }
        }
    }

    // ---- Global feature into encoder ----
    let d_global_raw = if store.contains("report_decoder.global_proj.weight") {
        let w_name = "report_decoder.global_proj.weight";
        let w = store.get(w_name).data.clone();
        let (i_w, i_b) = (store.index_of(w_name), store.index_of("report_decoder.global_proj.bias"));
        let (dw, db) = grads.pair_mut(i_w, i_b);
        linear_backward(&d_global, &fwd.global_raw, 1, d_enc, &w, d_rep, dw, db)
    } else {
        d_global
    };
    global_pool_backward(&d_global_raw, &fwd.pool, &mut d_enc_out, d_enc);

    encode_backward(d_enc_out, &fwd.enc_cache, store, grads, config);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::{image_mask_rng, mask_image_patches, mask_report_tokens, report_mask_rng};
    use crate::nets::config::ReportPosMode;
    use crate::nets::params::init_params;
    use crate::objectives::{loss_image_sums_flat, loss_report_sums_flat, LossSums};
    use rand::Rng;

    fn micro_config() -> ModelConfig {
        ModelConfig {
            image_size: 8,
            patch_size: 4,
            channels: 1,
            encoder_dim: 8,
            encoder_depth: 1,
            encoder_heads: 2,
            image_decoder_dim: 8,
            image_decoder_depth: 1,
            image_decoder_heads: 2,
            report_decoder_dim: 8,
            report_decoder_depth: 1,
            report_decoder_heads: 2,
            vocab_size: 11,
            max_report_len: 8,
            fusion_mode: FusionMode::Gap,
            report_pos_mode: ReportPosMode::Learnable,
            super_resolution: true,
            hybrid_image_restoration: false,
        }
    }

    fn rand_patches(n: usize, len: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = crate::rng::derive_rng(seed, &[201]);
        (0..n).map(|_| (0..len).map(|_| rng.gen_range(0.0..1.0f32)).collect()).collect()
    }

    fn micro_views(config: &ModelConfig, seed: u64) -> (MaskedImageView, MaskedReportView) {
        let n = config.num_patches();
        let low = rand_patches(n, config.patch_dim(), seed);
        let hi = rand_patches(n, config.target_dim(), seed + 1);
        let image =
            mask_image_patches(&low, &hi, 0.5, &mut image_mask_rng(seed, 0, 0)).unwrap();
        let tokens = [3usize, 4, 5, 6, 7];
        let report =
            mask_report_tokens(&tokens, 0.5, &mut report_mask_rng(seed, 0, 0)).unwrap();
        (image, report)
    }

    #[test]
    fn encode_shape_and_purity() {
        let config = ModelConfig::desk(19);
        let store: ParameterStore<f32> = init_params(&config, 1).unwrap();
        let patches = rand_patches(49, config.patch_dim(), 3);
        let positions: Vec<usize> = (0..49).collect();
        let out = encode(&patches, &positions, &store, &config).unwrap();
        assert_eq!(out.len(), 49);
        assert!(out.iter().all(|v| v.len() == config.encoder_dim));
        let again = encode(&patches, &positions, &store, &config).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn encode_permutation_equivariance() {
        let config = ModelConfig::desk(19);
        let store: ParameterStore<f32> = init_params(&config, 2).unwrap();
        let patches = rand_patches(6, config.patch_dim(), 4);
        let positions = vec![5usize, 9, 12, 20, 33, 63];
        let base = encode(&patches, &positions, &store, &config).unwrap();
        let perm = [2usize, 0, 5, 1, 4, 3];
        let p_patches: Vec<Vec<f32>> = perm.iter().map(|&i| patches[i].clone()).collect();
        let p_positions: Vec<usize> = perm.iter().map(|&i| positions[i]).collect();
        let permuted = encode(&p_patches, &p_positions, &store, &config).unwrap();
        // Permutation equivariance is exact in real arithmetic; floating
        // point summation order perturbs the last bits.
        for (j, &i) in perm.iter().enumerate() {
            for (a, b) in permuted[j].iter().zip(&base[i]) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn encode_rejects_bad_positions_and_patches() {
        let config = ModelConfig::desk(19);
        let store: ParameterStore<f32> = init_params(&config, 1).unwrap();
        let patches = rand_patches(2, config.patch_dim(), 5);
        assert!(encode(&patches, &[0, 64], &store, &config).is_err());
        let bad = vec![vec![0.0f32; 3], vec![0.0f32; 3]];
        assert!(encode(&bad, &[0, 1], &store, &config).is_err());
    }

    #[test]
    fn global_pool_examples() {
        let embeddings = vec![vec![1.0f64, 0.0], vec![0.0, 1.0]];
        assert_eq!(global_pool(&embeddings, FusionMode::Gap).unwrap(), vec![0.5, 0.5]);
        assert_eq!(global_pool(&embeddings, FusionMode::Gmp).unwrap(), vec![1.0, 1.0]);
        let swapped = vec![embeddings[1].clone(), embeddings[0].clone()];
        assert_eq!(
            global_pool(&swapped, FusionMode::Gap).unwrap(),
            global_pool(&embeddings, FusionMode::Gap).unwrap()
        );
        assert!(global_pool::<f64>(&[], FusionMode::Gap).is_err());
    }

    #[test]
    fn fuse_is_additive() {
        let config = micro_config();
        let store: ParameterStore<f64> = init_params(&config, 3).unwrap();
        let ids = [3usize, 7, 9];
        let zero = vec![0.0f64; config.report_decoder_dim];
        let raw = fuse(&ids, &zero, &store, &config).unwrap();
        let lookup = store.get(LOOKUP_NAME);
        let d = config.report_decoder_dim;
        for (i, &id) in ids.iter().enumerate() {
            assert_eq!(raw[i], lookup.data[id * d..(id + 1) * d].to_vec());
        }
        let delta = 0.125f64;
        let g = vec![delta; d];
        let shifted = fuse(&ids, &g, &store, &config).unwrap();
        for (r, s) in raw.iter().zip(&shifted) {
            for (a, b) in r.iter().zip(s) {
                assert_eq!(a + delta, *b);
            }
        }
        assert!(fuse(&[11usize], &zero, &store, &config).is_err());
        assert!(fuse::<f64>(&[], &zero, &store, &config).unwrap().is_empty());
    }

    #[test]
    fn decode_report_uniform_at_init_and_normalized() {
        let config = micro_config();
        let store: ParameterStore<f64> = init_params(&config, 4).unwrap();
        let g = vec![0.1f64; config.report_decoder_dim];
        let hybrid = fuse(&[3, 4, 5], &g, &store, &config).unwrap();
        let dists =
            decode_report(&hybrid, &[0, 2, 4], &[1, 3], &store, &config).unwrap();
        assert_eq!(dists.len(), 2);
        let v = config.vocab_size as f64;
        for dist in &dists {
            let sum: f64 = dist.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            // Zero-initialized head: exactly uniform.
            for &p in dist {
                assert!((p - 1.0 / v).abs() < 1e-12);
            }
        }
        // No masked positions -> empty output.
        let none = decode_report(&hybrid, &[0, 1, 2], &[], &store, &config).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn decode_report_matches_all_positions_variant() {
        let config = micro_config();
        let mut store: ParameterStore<f64> = init_params(&config, 5).unwrap();
        // Randomize the head so distributions are informative.
        let mut rng = crate::rng::derive_rng(9, &[7]);
        let idx = store.index_of("report_decoder.head.weight");
        for v in store.at_mut(idx).tensor.data.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let g = vec![0.05f64; config.report_decoder_dim];
        let hybrid = fuse(&[3, 4], &g, &store, &config).unwrap();
        let masked = decode_report(&hybrid, &[0, 3], &[1, 2], &store, &config).unwrap();
        let all = decode_report_all(&hybrid, &[0, 3], &[1, 2], &store, &config).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(masked[0], all[1]);
        assert_eq!(masked[1], all[2]);
    }

    #[test]
    fn decode_report_rejects_overlong() {
        let config = micro_config();
        let store: ParameterStore<f64> = init_params(&config, 4).unwrap();
        let g = vec![0.0f64; config.report_decoder_dim];
        let hybrid = fuse(&vec![3usize; 9], &g, &store, &config).unwrap();
        let visible: Vec<usize> = (0..9).collect();
        assert!(decode_report(&hybrid, &visible, &[], &store, &config).is_err());
    }

    #[test]
    fn decode_image_shape_law() {
        // p=16 grid 2x2; super-resolution on -> 1024 values per token, off -> 256.
        let base = ModelConfig {
            image_size: 32,
            patch_size: 16,
            channels: 1,
            encoder_dim: 8,
            encoder_depth: 1,
            encoder_heads: 2,
            image_decoder_dim: 8,
            image_decoder_depth: 1,
            image_decoder_heads: 2,
            report_decoder_dim: 8,
            report_decoder_depth: 1,
            report_decoder_heads: 2,
            vocab_size: 11,
            max_report_len: 8,
            fusion_mode: FusionMode::Gap,
            report_pos_mode: ReportPosMode::Learnable,
            super_resolution: true,
            hybrid_image_restoration: false,
        };
        for (flag, expect) in [(true, 1024usize), (false, 256)] {
            let config = ModelConfig { super_resolution: flag, ..base.clone() };
            let store: ParameterStore<f32> = init_params(&config, 6).unwrap();
            let patches = rand_patches(2, config.patch_dim(), 8);
            let emb = encode(&patches, &[0, 3], &store, &config).unwrap();
            let preds = decode_image(&emb, &[0, 3], &[1, 2], &[], &store, &config).unwrap();
            assert_eq!(preds.len(), 4, "every grid position gets a prediction");
            assert!(preds.iter().all(|p| p.len() == expect));
        }
    }

    #[test]
    fn decode_image_covers_grid_at_any_ratio() {
        let config = micro_config();
        let store: ParameterStore<f32> = init_params(&config, 7).unwrap();
        let patches = rand_patches(1, config.patch_dim(), 9);
        let preds = decode_image(&patches_embed(&patches, &[2], &store, &config), &[2], &[0, 1, 3], &[], &store, &config)
            .unwrap();
        assert_eq!(preds.len(), config.num_patches());
        // Zero-init head: predictions are exactly zero at initialization.
        assert!(preds.iter().all(|row| row.iter().all(|&v| v == 0.0)));
    }

    fn patches_embed(
        patches: &[Vec<f32>],
        positions: &[usize],
        store: &ParameterStore<f32>,
        config: &ModelConfig,
    ) -> Vec<Vec<f32>> {
        encode(patches, positions, store, config).unwrap()
    }

    /// End-to-end analytic gradients vs central finite differences at f64,
    /// on a configuration that exercises every optional path: differing
    /// encoder/report widths (global projection), hybrid image restoration,
    /// learnable report positions.
    #[test]
    fn record_gradcheck_every_parameter() {
        let config = ModelConfig {
            report_decoder_dim: 12,
            hybrid_image_restoration: true,
            ..micro_config()
        };
        run_record_gradcheck(&config, 21, 1.0);
    }

    #[test]
    fn record_gradcheck_gmp_fusion() {
        let config = ModelConfig { fusion_mode: FusionMode::Gmp, ..micro_config() };
        run_record_gradcheck(&config, 22, 0.5);
    }

    fn total_loss(
        store: &ParameterStore<f64>,
        views: RecordViews<'_>,
        config: &ModelConfig,
        lambda: f64,
    ) -> f64 {
        let fwd = record_forward(views, store, config, true, true).unwrap();
        let mut sums = LossSums::default();
        let rep = fwd.report.as_ref().unwrap();
        sums.add(
            &loss_report_sums_flat(&rep.probs_masked, config.vocab_size, &views.report.targets)
                .unwrap(),
        );
        let img = fwd.image.as_ref().unwrap();
        sums.add(
            &loss_image_sums_flat(
                &img.preds,
                config.target_dim(),
                &views.image.targets,
                &views.image.masked_positions,
            )
            .unwrap(),
        );
        sums.reduce(lambda).total
    }

    fn run_record_gradcheck(config: &ModelConfig, seed: u64, lambda: f64) {
        let mut store: ParameterStore<f64> = init_params(config, seed).unwrap();
        // Zero-initialized heads would zero most of the gradient field; give
        // them random values so gradient flows everywhere.
        let mut rng = crate::rng::derive_rng(seed, &[55]);
        for name in ["report_decoder.head.weight", "image_decoder.head.weight"] {
            let idx = store.index_of(name);
            for v in store.at_mut(idx).tensor.data.iter_mut() {
                *v = rng.gen_range(-0.3..0.3);
            }
        }

        let (image, report) = micro_views(config, seed);
        let views = RecordViews { image: &image, report: &report };
        let p = report.targets.len();
        let pixels = image.targets.len() * config.target_dim();
        assert!(p > 0 && pixels > 0, "micro views must mask something");
        let w_report = 1.0 / p as f64;
        let w_image = lambda / pixels as f64;

        let fwd = record_forward(views, &store, config, true, true).unwrap();
        let mut grads = Gradients::zeros_like(&store);
        record_backward(&fwd, views, &store, config, &mut grads, w_report, w_image).unwrap();

        let eps = 1e-5;
        let mut checked = 0usize;
        for pi in 0..store.len() {
            let len = store.at(pi).tensor.data.len();
            for j in 0..len {
                let orig = store.at(pi).tensor.data[j];
                store.at_mut(pi).tensor.data[j] = orig + eps;
                let up = total_loss(&store, views, config, lambda);
                store.at_mut(pi).tensor.data[j] = orig - eps;
                let down = total_loss(&store, views, config, lambda);
                store.at_mut(pi).tensor.data[j] = orig;
                let fd = (up - down) / (2.0 * eps);
                let an = grads.slot(pi)[j];
                let denom = fd.abs().max(an.abs());
                if denom < 1e-6 {
                    // Below finite-difference resolution; require agreement
                    // in absolute terms instead.
                    assert!(
                        (fd - an).abs() < 1e-8,
                        "{}[{j}]: fd {fd} vs analytic {an}",
                        store.at(pi).name
                    );
                    continue;
                }
                let rel = (fd - an).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "{}[{j}]: fd {fd} vs analytic {an} (rel {rel})",
                    store.at(pi).name
                );
                checked += 1;
            }
        }
        assert!(checked > 500, "only {checked} informative gradients checked");
    }
}
