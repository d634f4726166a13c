//! Dual-stream windowed-attention image classifier.
//!
//! Each stream patchifies its image, adds learned positional embeddings and
//! runs pre-norm blocks of windowed multi-head self-attention and a GELU MLP.
//! The streams are fused by one of four strategies and a two-layer head
//! produces the bed-exit logit. Forward and backward passes are written out
//! by hand over row-major token matrices (see [`ops`]).

pub mod checkpoint;
mod net;
pub mod ops;
pub mod optim;
pub mod train;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::ImageTensor;
use crate::rng::{stream, Purpose};

pub use net::{Forward, Grads};
pub use ops::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint config mismatch on {key}: expected {expected}, found {found}")]
    ConfigMismatch { key: String, expected: String, found: String },
    #[error("checkpoint tensor {name}: {msg}")]
    TensorMismatch { name: String, msg: String },
    #[error("empty {0} split")]
    EmptySplit(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    EarlyConcat,
    MidConcat,
    Gated,
    Cross,
}

/// Which images the model sees. Single-image models run one stream and
/// mean-pool it; `fusion_mode` is then unused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Both,
    Line,
    Texture,
}

macro_rules! str_enum {
    ($ty:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $s),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($s => Ok($ty::$variant),)+
                    other => Err(format!("unknown {} {other:?}", stringify!($ty))),
                }
            }
        }
    };
}

str_enum!(FusionMode { EarlyConcat => "early_concat", MidConcat => "mid_concat", Gated => "gated", Cross => "cross" });
str_enum!(Modality { Both => "both", Line => "line", Texture => "texture" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub num_blocks_per_stream: usize,
    pub attn_heads: usize,
    pub fusion_mode: FusionMode,
    pub fusion_heads: usize,
    pub dropout: f64,
    /// MLP hidden width as a multiple of `embed_dim`.
    pub mlp_ratio: usize,
    /// Side of the square self-attention window, in tokens.
    pub window_tokens: usize,
    pub modality: Modality,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            patch_size: 8,
            embed_dim: 64,
            num_blocks_per_stream: 2,
            attn_heads: 4,
            fusion_mode: FusionMode::Cross,
            fusion_heads: 4,
            dropout: 0.0,
            mlp_ratio: 2,
            window_tokens: 4,
            modality: Modality::Both,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        let positive = [
            ("input_size", self.input_size),
            ("patch_size", self.patch_size),
            ("embed_dim", self.embed_dim),
            ("attn_heads", self.attn_heads),
            ("fusion_heads", self.fusion_heads),
            ("mlp_ratio", self.mlp_ratio),
            ("window_tokens", self.window_tokens),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return fail(format!("{name} must be positive"));
        }
        if self.input_size % self.patch_size != 0 {
            return fail(format!("input_size {} not divisible by patch_size {}", self.input_size, self.patch_size));
        }
        for (name, h) in [("attn_heads", self.attn_heads), ("fusion_heads", self.fusion_heads)] {
            if self.embed_dim % h != 0 {
                return fail(format!("embed_dim {} not divisible by {name} {h}", self.embed_dim));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.input_size / self.patch_size
    }

    pub fn tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Effective fusion: `None` for a single-image model.
    pub fn fusion(&self) -> Option<FusionMode> {
        match self.modality {
            Modality::Both => Some(self.fusion_mode),
            Modality::Line | Modality::Texture => None,
        }
    }

    /// Key-value form stored in checkpoint headers.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("input_size", self.input_size.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("num_blocks_per_stream", self.num_blocks_per_stream.to_string()),
            ("attn_heads", self.attn_heads.to_string()),
            ("fusion_mode", self.fusion_mode.to_string()),
            ("fusion_heads", self.fusion_heads.to_string()),
            ("dropout", format!("{:?}", self.dropout)),
            ("mlp_ratio", self.mlp_ratio.to_string()),
            ("window_tokens", self.window_tokens.to_string()),
            ("modality", self.modality.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, ModelError> {
        let get = |key: &str| -> Result<&str, ModelError> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| ModelError::Checkpoint(format!("missing config key {key}")))
        };
        let bad = |key: &str, e: String| ModelError::Checkpoint(format!("config key {key}: {e}"));
        let num = |key: &str| get(key)?.parse::<usize>().map_err(|e| bad(key, e.to_string()));
        let cfg = Self {
            input_size: num("input_size")?,
            patch_size: num("patch_size")?,
            embed_dim: num("embed_dim")?,
            num_blocks_per_stream: num("num_blocks_per_stream")?,
            attn_heads: num("attn_heads")?,
            fusion_mode: get("fusion_mode")?.parse().map_err(|e| bad("fusion_mode", e))?,
            fusion_heads: num("fusion_heads")?,
            dropout: get("dropout")?.parse().map_err(|e: std::num::ParseFloatError| bad("dropout", e.to_string()))?,
            mlp_ratio: num("mlp_ratio")?,
            window_tokens: num("window_tokens")?,
            modality: get("modality")?.parse().map_err(|e| bad("modality", e))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The two images of one window at model input size.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub line: ImageTensor,
    pub texture: ImageTensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probability: f64,
    pub alarm: bool,
}

impl Prediction {
    pub fn new(probability: f64, threshold: f64) -> Self {
        Self { probability, alarm: probability >= threshold }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Lin {
    pub w: usize,
    pub b: usize,
    pub din: usize,
    pub dout: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Ln {
    pub g: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Attn {
    pub q: Lin,
    pub k: Lin,
    pub v: Lin,
    pub o: Lin,
}

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub ln1: Ln,
    pub attn: Attn,
    pub ln2: Ln,
    pub fc1: Lin,
    pub fc2: Lin,
}

#[derive(Debug, Clone)]
pub(crate) struct Stream {
    pub patch: Lin,
    pub pos: usize,
    pub blocks: Vec<Block>,
    pub norm: Ln,
}

/// One direction of cross-attention: `queries` tokens attend to `keys` tokens.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CrossDir {
    pub norm_q: Ln,
    pub norm_kv: Ln,
    pub attn: Attn,
}

#[derive(Debug, Clone)]
pub(crate) enum Fusion {
    Single,
    Mid,
    Gated(Lin),
    Cross { line_queries: CrossDir, texture_queries: CrossDir },
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub streams: Vec<Stream>,
    pub fusion: Fusion,
    pub fc1: Lin,
    pub fc2: Lin,
    /// Token position -> patch index (row-major) so windows are contiguous.
    pub order: Vec<usize>,
    /// Token ranges of the attention windows within one sample.
    pub windows: Vec<Range<usize>>,
}

struct Builder {
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push((name, shape, init));
        self.specs.len() - 1
    }

    fn lin(&mut self, prefix: &str, din: usize, dout: usize) -> Lin {
        let w = self.add(format!("{prefix}.weight"), vec![din, dout], Init::Normal);
        let b = self.add(format!("{prefix}.bias"), vec![dout], Init::Zeros);
        Lin { w, b, din, dout }
    }

    fn ln(&mut self, prefix: &str, d: usize) -> Ln {
        let g = self.add(format!("{prefix}.gamma"), vec![d], Init::Ones);
        let b = self.add(format!("{prefix}.beta"), vec![d], Init::Zeros);
        Ln { g, b }
    }

    fn attn(&mut self, prefix: &str, d: usize) -> Attn {
        Attn {
            q: self.lin(&format!("{prefix}.q"), d, d),
            k: self.lin(&format!("{prefix}.k"), d, d),
            v: self.lin(&format!("{prefix}.v"), d, d),
            o: self.lin(&format!("{prefix}.o"), d, d),
        }
    }

    fn stream(&mut self, name: &str, channels: usize, cfg: &ModelConfig) -> Stream {
        let d = cfg.embed_dim;
        let patch = self.lin(&format!("{name}.patch"), cfg.patch_size * cfg.patch_size * channels, d);
        let pos = self.add(format!("{name}.pos"), vec![cfg.tokens(), d], Init::Normal);
        let blocks = (0..cfg.num_blocks_per_stream)
            .map(|i| {
                let p = format!("{name}.blocks.{i}");
                Block {
                    ln1: self.ln(&format!("{p}.norm1"), d),
                    attn: self.attn(&format!("{p}.attn"), d),
                    ln2: self.ln(&format!("{p}.norm2"), d),
                    fc1: self.lin(&format!("{p}.mlp.fc1"), d, d * cfg.mlp_ratio),
                    fc2: self.lin(&format!("{p}.mlp.fc2"), d * cfg.mlp_ratio, d),
                }
            })
            .collect();
        let norm = self.ln(&format!("{name}.norm"), d);
        Stream { patch, pos, blocks, norm }
    }

    fn cross_dir(&mut self, prefix: &str, d: usize) -> CrossDir {
        CrossDir {
            norm_q: self.ln(&format!("{prefix}.norm_q"), d),
            norm_kv: self.ln(&format!("{prefix}.norm_kv"), d),
            attn: self.attn(&format!("{prefix}.attn"), d),
        }
    }
}

fn window_order(grid: usize, win: usize) -> (Vec<usize>, Vec<Range<usize>>) {
    let mut order = Vec::with_capacity(grid * grid);
    let mut windows = Vec::new();
    for wy in (0..grid).step_by(win) {
        for wx in (0..grid).step_by(win) {
            let start = order.len();
            for y in wy..(wy + win).min(grid) {
                for x in wx..(wx + win).min(grid) {
                    order.push(y * grid + x);
                }
            }
            windows.push(start..order.len());
        }
    }
    (order, windows)
}

fn build_layout(cfg: &ModelConfig) -> (Layout, Vec<(String, Vec<usize>, Init)>) {
    let mut b = Builder { specs: Vec::new() };
    let d = cfg.embed_dim;
    let (streams, fusion, fused_dim) = match cfg.fusion() {
        None => {
            let name = if cfg.modality == Modality::Line { "line" } else { "texture" };
            (vec![b.stream(name, 3, cfg)], Fusion::Single, d)
        }
        Some(FusionMode::EarlyConcat) => (vec![b.stream("joint", 6, cfg)], Fusion::Single, d),
        Some(mode) => {
            let streams = vec![b.stream("line", 3, cfg), b.stream("texture", 3, cfg)];
            let (fusion, dim) = match mode {
                FusionMode::MidConcat => (Fusion::Mid, 2 * d),
                FusionMode::Gated => (Fusion::Gated(b.lin("fusion.gate", 2 * d, d)), d),
                _ => (
                    Fusion::Cross {
                        line_queries: b.cross_dir("fusion.line_queries", d),
                        texture_queries: b.cross_dir("fusion.texture_queries", d),
                    },
                    2 * d,
                ),
            };
            (streams, fusion, dim)
        }
    };
    let fc1 = b.lin("head.fc1", fused_dim, d);
    let fc2 = b.lin("head.fc2", d, 1);
    let (order, windows) = window_order(cfg.grid(), cfg.window_tokens);
    (Layout { streams, fusion, fc1, fc2, order, windows }, b.specs)
}

/// Model parameters plus the configuration that shapes them.
#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    pub(crate) layout: Layout,
    params: Vec<Tensor<T>>,
}

/// Truncated normal, std 0.02, cut at two standard deviations.
fn trunc_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return 0.02 * z;
        }
    }
}

impl<T: Scalar> Model<T> {
    /// Seeded initialization: projections and positional embeddings from a
    /// truncated normal, biases zero, layer-norm scales one.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, specs) = build_layout(config);
        let mut rng = stream(seed, Purpose::Init, 0);
        let params = specs
            .into_iter()
            .map(|(name, shape, init)| {
                let n = shape.iter().product();
                let data = match init {
                    Init::Normal => (0..n).map(|_| T::of(trunc_normal(&mut rng))).collect(),
                    Init::Zeros => vec![T::zero(); n],
                    Init::Ones => vec![T::one(); n],
                };
                Tensor { name, shape, data }
            })
            .collect();
        Ok(Self { config: config.clone(), layout, params })
    }

    /// Every tensor zero (layer-norm scales included); the logit is then 0.
    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        let mut m = Self::new(config, 0)?;
        for t in &mut m.params {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|t| t.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.iter_mut().find(|t| t.name == name)
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|t| t.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        self.params.iter().map(|t| vec![T::zero(); t.data.len()]).collect()
    }

    pub(crate) fn p(&self, id: usize) -> &[T] {
        &self.params[id].data
    }

    pub fn check_input(&self, input: &ModelInput) -> Result<(), ModelError> {
        let s = self.config.input_size;
        for (name, img) in [("line", &input.line), ("texture", &input.texture)] {
            if img.height() != s || img.width() != s {
                return Err(ModelError::Shape(format!(
                    "{name} image is {}x{}, model expects {s}x{s}",
                    img.height(),
                    img.width()
                )));
            }
        }
        Ok(())
    }

    /// Logits for a batch; no dropout.
    pub fn logits(&self, inputs: &[ModelInput]) -> Result<Vec<T>, ModelError> {
        Ok(self.forward(inputs, None)?.logits)
    }

    /// Sigmoid probabilities, evaluated in chunks to bound memory.
    pub fn predict_proba(&self, inputs: &[ModelInput]) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(64) {
            out.extend(self.logits(chunk)?.into_iter().map(|z| ops::sigmoid(z).f64()));
        }
        Ok(out)
    }

    pub fn predict(&self, inputs: &[ModelInput], threshold: f64) -> Result<Vec<Prediction>, ModelError> {
        Ok(self.predict_proba(inputs)?.into_iter().map(|p| Prediction::new(p, threshold)).collect())
    }

    /// Same parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self
                .params
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|&v| U::of(v.f64())).collect(),
                })
                .collect(),
        }
    }

    /// Parameter tensors in layout order; shapes must match the config.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self, ModelError> {
        let mut m = Self::new(config, 0)?;
        if tensors.len() != m.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} tensors, config needs {}",
                tensors.len(),
                m.params.len()
            )));
        }
        for (slot, t) in m.params.iter_mut().zip(tensors) {
            if slot.name != t.name {
                return Err(ModelError::TensorMismatch {
                    name: t.name,
                    msg: format!("expected tensor {} at this position", slot.name),
                });
            }
            if slot.shape != t.shape || t.data.len() != slot.data.len() {
                return Err(ModelError::TensorMismatch {
                    name: t.name,
                    msg: format!("shape {:?}, config needs {:?}", t.shape, slot.shape),
                });
            }
            *slot = t;
        }
        Ok(m)
    }
}
