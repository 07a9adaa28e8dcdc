//! Named parameter storage.
//!
//! Parameters live in three sections keyed by dotted-name prefix:
//! `encoder.*`, `image_decoder.*`, `report_decoder.*`. Shapes are a pure
//! function of [`ModelConfig`]; creation order is fixed, which makes
//! initialization fully deterministic for a given seed.

use std::collections::HashMap;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::Scalar;
use crate::nets::config::{ModelConfig, ReportPosMode};
use crate::rng::{derive_rng, stream};

pub const SEC_ENCODER: &str = "encoder.";
pub const SEC_IMAGE_DECODER: &str = "image_decoder.";
pub const SEC_REPORT_DECODER: &str = "report_decoder.";

pub const LOOKUP_NAME: &str = "report_decoder.lookup";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![T::zero(); n] }
    }
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    /// Whether weight decay applies (norm scales, biases, the token lookup
    /// table, and positional tables opt out).
    pub decay: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParameterStore<T = f32> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore { params: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<T>, decay: bool) {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch for {name}");
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param { name: name.to_string(), tensor: Tensor { shape, data }, decay });
    }

    pub fn get(&self, name: &str) -> &Tensor<T> {
        match self.index.get(name) {
            Some(&i) => &self.params[i].tensor,
            None => panic!("unknown parameter {name}"),
        }
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.params[i].tensor)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn index_of(&self, name: &str) -> usize {
        match self.index.get(name) {
            Some(&i) => i,
            None => panic!("unknown parameter {name}"),
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn at(&self, i: usize) -> &Param<T> {
        &self.params[i]
    }

    pub fn at_mut(&mut self, i: usize) -> &mut Param<T> {
        &mut self.params[i]
    }

    /// Total scalar count across all tensors.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.data.len()).sum()
    }

    /// Parameters whose dotted name starts with `prefix`, in store order.
    pub fn section<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Param<T>> + 'a {
        self.params.iter().filter(move |p| p.name.starts_with(prefix))
    }

    pub fn convert<U: Scalar>(&self) -> ParameterStore<U> {
        let mut out = ParameterStore::new();
        for p in &self.params {
            let data = p.tensor.data.iter().map(|&v| U::from_f64(v.as_f64())).collect();
            out.insert(&p.name, p.tensor.shape.clone(), data, p.decay);
        }
        out
    }
}

/// Per-parameter gradient buffers aligned with a store's index order.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    slots: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(store: &ParameterStore<T>) -> Self {
        Gradients { slots: store.iter().map(|p| vec![T::zero(); p.tensor.data.len()]).collect() }
    }

    pub fn slot(&self, i: usize) -> &[T] {
        &self.slots[i]
    }

    pub fn slot_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.slots[i]
    }

    pub fn by_name(&self, store: &ParameterStore<T>, name: &str) -> &[T] {
        &self.slots[store.index_of(name)]
    }

    pub fn by_name_mut(&mut self, store: &ParameterStore<T>, name: &str) -> &mut [T] {
        &mut self.slots[store.index_of(name)]
    }

    /// Mutable access to two distinct slots at once (weight + bias of one layer).
    pub fn pair_mut(&mut self, i: usize, j: usize) -> (&mut [T], &mut [T]) {
        assert_ne!(i, j, "pair_mut requires distinct slots");
        if i < j {
            let (a, b) = self.slots.split_at_mut(j);
            (&mut a[i], &mut b[0])
        } else {
            let (a, b) = self.slots.split_at_mut(i);
            (&mut b[0], &mut a[j])
        }
    }

    /// dst += src, slot by slot.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        assert_eq!(self.slots.len(), other.slots.len());
        for (d, s) in self.slots.iter_mut().zip(&other.slots) {
            crate::linalg::add_assign(d, s);
        }
    }

    pub fn scale(&mut self, s: T) {
        for slot in self.slots.iter_mut() {
            crate::linalg::scale(slot, s);
        }
    }
}

struct Init<T> {
    rng: rand_chacha::ChaCha8Rng,
    normal: Normal<f64>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Init<T> {
    fn new(seed: u64) -> Self {
        Init {
            rng: derive_rng(seed, &[stream::PARAM_INIT]),
            normal: Normal::new(0.0, 0.02).expect("valid std"),
            _marker: std::marker::PhantomData,
        }
    }

    /// Truncated normal, std 0.02, resampled beyond two standard deviations.
    fn trunc_normal(&mut self, n: usize) -> Vec<T> {
        (0..n)
            .map(|_| {
                loop {
                    let v = self.normal.sample(&mut self.rng);
                    if v.abs() <= 0.04 {
                        // Draws stay in f32 range so f32 and f64 stores built
                        // from one seed hold identical values.
                        return T::from_f32(v as f32);
                    }
                }
            })
            .collect()
    }

    fn weight(&mut self, store: &mut ParameterStore<T>, name: &str, shape: Vec<usize>) {
        let n = shape.iter().product();
        let data = self.trunc_normal(n);
        store.insert(name, shape, data, true);
    }

    fn bias(&mut self, store: &mut ParameterStore<T>, name: &str, n: usize) {
        store.insert(name, vec![n], vec![T::zero(); n], false);
    }

    fn linear(&mut self, store: &mut ParameterStore<T>, name: &str, out_dim: usize, in_dim: usize) {
        self.weight(store, &format!("{name}.weight"), vec![out_dim, in_dim]);
        self.bias(store, &format!("{name}.bias"), out_dim);
    }

    fn zero_linear(&mut self, store: &mut ParameterStore<T>, name: &str, out: usize, in_dim: usize) {
        store.insert(&format!("{name}.weight"), vec![out, in_dim], vec![T::zero(); out * in_dim], true);
        self.bias(store, &format!("{name}.bias"), out);
    }

    fn layernorm(&mut self, store: &mut ParameterStore<T>, name: &str, dim: usize) {
        store.insert(&format!("{name}.gamma"), vec![dim], vec![T::one(); dim], false);
        store.insert(&format!("{name}.beta"), vec![dim], vec![T::zero(); dim], false);
    }

    fn block(&mut self, store: &mut ParameterStore<T>, prefix: &str, dim: usize) {
        self.layernorm(store, &format!("{prefix}.ln1"), dim);
        for proj in ["wq", "wk", "wv", "wo"] {
            self.linear(store, &format!("{prefix}.attn.{proj}"), dim, dim);
        }
        self.layernorm(store, &format!("{prefix}.ln2"), dim);
        self.linear(store, &format!("{prefix}.mlp.fc1"), 4 * dim, dim);
        self.linear(store, &format!("{prefix}.mlp.fc2"), dim, 4 * dim);
    }
}

/// Build and initialize all parameters for a configuration. Deterministic
/// in `seed`. Both output heads start at exactly zero so the initial losses
/// have closed forms (uniform vocabulary distributions; all-zero pixels).
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ParameterStore<T>> {
    config.validate()?;
    let mut store = ParameterStore::new();
    let mut init = Init::<T>::new(seed);
    let d_enc = config.encoder_dim;
    let d_img = config.image_decoder_dim;
    let d_rep = config.report_decoder_dim;

    // Encoder: patch projection + blocks. Positional terms are fixed
    // sin-cos constants, not parameters.
    init.linear(&mut store, "encoder.patch_embed", d_enc, config.patch_dim());
    for i in 0..config.encoder_depth {
        init.block(&mut store, &format!("encoder.block{i}"), d_enc);
    }

    // Image decoder: embedding from encoder width, mask token, blocks,
    // shared zero-initialized restoration head.
    init.linear(&mut store, "image_decoder.embed", d_img, d_enc);
    let mask_token = init.trunc_normal(d_img);
    store.insert("image_decoder.mask_token", vec![d_img], mask_token, true);
    if config.hybrid_image_restoration {
        init.linear(&mut store, "image_decoder.report_proj", d_img, d_rep);
    }
    for i in 0..config.image_decoder_depth {
        init.block(&mut store, &format!("image_decoder.block{i}"), d_img);
    }
    init.zero_linear(&mut store, "image_decoder.head", config.target_dim(), d_img);

    // Report decoder: token lookup table, optional global-feature projection,
    // positional table (when learnable), blocks, zero-initialized vocabulary
    // head.
    let lookup = init.trunc_normal(config.vocab_size * d_rep);
    store.insert(LOOKUP_NAME, vec![config.vocab_size, d_rep], lookup, false);
    if d_enc != d_rep {
        init.linear(&mut store, "report_decoder.global_proj", d_rep, d_enc);
    }
    if config.report_pos_mode == ReportPosMode::Learnable {
        let pos = init.trunc_normal(config.max_report_len * d_rep);
        store.insert("report_decoder.pos_table", vec![config.max_report_len, d_rep], pos, false);
    }
    for i in 0..config.report_decoder_depth {
        init.block(&mut store, &format!("report_decoder.block{i}"), d_rep);
    }
    init.zero_linear(&mut store, "report_decoder.head", config.vocab_size, d_rep);

    Ok(store)
}

/// Weight-decay rule by name: norm scales, biases, the token lookup table,
/// and positional tables are exempt. Checkpoint loading reconstructs flags
/// with this; init uses the same rule by construction.
pub fn decay_for_name(name: &str) -> bool {
    !(name.ends_with(".gamma")
        || name.ends_with(".beta")
        || name.ends_with(".bias")
        || name == LOOKUP_NAME
        || name == "report_decoder.pos_table")
}

/// Which ablation-dependent sections a parameter belongs to, for optimizer
/// freezing. See [`crate::pretrain::TrainConfig`].
pub fn section_of(name: &str) -> &'static str {
    if name.starts_with(SEC_ENCODER) {
        SEC_ENCODER
    } else if name.starts_with(SEC_IMAGE_DECODER) {
        SEC_IMAGE_DECODER
    } else if name.starts_with(SEC_REPORT_DECODER) {
        SEC_REPORT_DECODER
    } else {
        panic!("parameter {name} outside known sections")
    }
}

/// Validation error helper shared by the forward entry points.
pub fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig::desk(19)
    }

    #[test]
    fn deterministic_init() {
        let a: ParameterStore<f32> = init_params(&cfg(), 7).unwrap();
        let b: ParameterStore<f32> = init_params(&cfg(), 7).unwrap();
        for (pa, pb) in a.iter().zip(b.iter()) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.tensor.data, pb.tensor.data);
        }
        let c: ParameterStore<f32> = init_params(&cfg(), 8).unwrap();
        let differs = a.iter().zip(c.iter()).any(|(x, y)| x.tensor.data != y.tensor.data);
        assert!(differs);
    }

    #[test]
    fn heads_start_at_zero() {
        let store: ParameterStore<f32> = init_params(&cfg(), 1).unwrap();
        for name in
            ["report_decoder.head.weight", "report_decoder.head.bias", "image_decoder.head.weight"]
        {
            assert!(store.get(name).data.iter().all(|&v| v == 0.0), "{name} not zero");
        }
        let sum: f32 = store.get("report_decoder.head.weight").data.iter().sum();
        assert_eq!(sum, 0.0);
    }

    #[test]
    fn param_count_monotone_in_depth() {
        let mut sizes = Vec::new();
        for depth in [1, 2, 4, 8] {
            let c = ModelConfig { encoder_depth: depth, ..cfg() };
            let store: ParameterStore<f32> = init_params(&c, 0).unwrap();
            sizes.push(store.num_values());
        }
        assert!(sizes.windows(2).all(|w| w[0] < w[1]), "{sizes:?}");
    }

    #[test]
    fn invalid_config_is_config_error() {
        let mut c = cfg();
        c.encoder_heads = 3;
        assert!(matches!(init_params::<f32>(&c, 0), Err(Error::Config(_))));
    }

    #[test]
    fn decay_exclusions() {
        let store: ParameterStore<f32> = init_params(&cfg(), 0).unwrap();
        for p in store.iter() {
            assert_eq!(p.decay, decay_for_name(&p.name), "{}", p.name);
        }
    }

    #[test]
    fn f64_conversion_preserves_values() {
        let store: ParameterStore<f32> = init_params(&cfg(), 3).unwrap();
        let wide: ParameterStore<f64> = store.convert();
        let narrow: ParameterStore<f32> = wide.convert();
        for (a, b) in store.iter().zip(narrow.iter()) {
            assert_eq!(a.tensor.data, b.tensor.data);
        }
    }

    #[test]
    fn optional_params_follow_flags() {
        let base: ParameterStore<f32> = init_params(&cfg(), 0).unwrap();
        assert!(!base.contains("image_decoder.report_proj.weight"));
        assert!(!base.contains("report_decoder.global_proj.weight"));
        assert!(base.contains("report_decoder.pos_table"));

        let c = ModelConfig {
            hybrid_image_restoration: true,
            report_pos_mode: ReportPosMode::Fixed,
            image_decoder_dim: 32,
            ..cfg()
        };
        let store: ParameterStore<f32> = init_params(&c, 0).unwrap();
        assert!(store.contains("image_decoder.report_proj.weight"));
        assert!(!store.contains("report_decoder.pos_table"));

        let c2 = ModelConfig { report_decoder_dim: 32, report_decoder_heads: 2, ..cfg() };
        let store2: ParameterStore<f32> = init_params(&c2, 0).unwrap();
        assert!(store2.contains("report_decoder.global_proj.weight"));
    }
}
