//! The generative stack seen by the compositor.
//!
//! A backend bundles five capabilities: an identity (visual) encoder, a
//! prompt-conditioned token generator, a cross-attention probe, a latent
//! autoencoder and a flow velocity predictor. Every operation must be a pure
//! function of its inputs and the backend's construction parameters.

pub mod adapter;
pub mod mock;

use crate::design::BoundingBox;
use crate::digest::Hasher;
use crate::error::{Error, Result};
use crate::raster::RasterImage;

pub use mock::{AttentionMode, MockBackend, MockConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenSource {
    Generative,
    Identity,
    Blended,
}

/// `K x D` conditioning tokens, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    k: usize,
    d: usize,
    data: Vec<f64>,
    pub source: TokenSource,
}

impl TokenSet {
    pub fn new(k: usize, d: usize, data: Vec<f64>, source: TokenSource) -> Result<Self> {
        if data.len() != k * d {
            return Err(Error::Contract(format!(
                "token data has {} entries, expected {k}x{d}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("token set has non-finite entries".into()));
        }
        Ok(Self { k, d, data, source })
    }

    pub fn from_rows(rows: &[Vec<f64>], source: TokenSource) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Contract("ragged token rows".into()));
        }
        Self::new(rows.len(), d, rows.concat(), source)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    /// Column-wise mean over the `K` tokens.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for i in 0..self.k {
            for (acc, v) in m.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.k as f64);
        m
    }

    pub fn checksum(&self) -> String {
        Hasher::new()
            .u64(self.k as u64)
            .u64(self.d as u64)
            .f64s(&self.data)
            .finish_hex()
    }
}

/// Latent image `H_lat x W_lat x C_lat` (row-major, channels last) at noise
/// level `sigma`. `frame_*` is the pixel size it decodes to.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f64>,
    pub sigma: f64,
    pub frame_width: usize,
    pub frame_height: usize,
}

impl Latent {
    pub fn same_shape(&self, other: &Latent) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
            && self.frame_width == other.frame_width
            && self.frame_height == other.frame_height
    }

    pub fn with_values(&self, values: Vec<f64>, sigma: f64) -> Latent {
        Latent {
            values,
            sigma,
            ..self.clone()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn checksum(&self) -> String {
        Hasher::new()
            .u64(self.height as u64)
            .u64(self.width as u64)
            .u64(self.channels as u64)
            .f64s(&self.values)
            .u64(self.sigma.to_bits())
            .finish_hex()
    }
}

/// Inputs to the prompt-conditioned token generator.
#[derive(Debug, Clone)]
pub struct CompositionPrompt {
    pub background: RasterImage,
    pub foreground: RasterImage,
    pub caption: String,
    pub bbox: BoundingBox,
}

impl CompositionPrompt {
    pub fn new(
        background: RasterImage,
        foreground: RasterImage,
        caption: &str,
        bbox: BoundingBox,
    ) -> Result<Self> {
        if caption.trim().is_empty() {
            return Err(Error::Precondition(
                "composition prompt needs a non-empty caption".into(),
            ));
        }
        Ok(Self {
            background,
            foreground,
            caption: caption.to_owned(),
            bbox,
        })
    }
}

/// `K x H x W` non-negative map, row-major per token.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub tokens: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl AttentionMap {
    pub fn new(tokens: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != tokens * height * width {
            return Err(Error::Contract(format!(
                "attention map has {} entries, expected {tokens}x{height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Contract(
                "attention entries must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            tokens,
            height,
            width,
            data,
        })
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Spatial map of token `i`.
    pub fn token(&self, i: usize) -> &[f64] {
        let n = self.cells();
        &self.data[i * n..(i + 1) * n]
    }

    fn same_shape(&self, other: &AttentionMap) -> bool {
        self.tokens == other.tokens && self.height == other.height && self.width == other.width
    }
}

/// Per-layer cross-attention maps sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStack {
    layers: Vec<AttentionMap>,
}

impl AttentionStack {
    pub fn new(layers: Vec<AttentionMap>) -> Result<Self> {
        if let Some(first) = layers.first() {
            if layers.iter().any(|l| !l.same_shape(first)) {
                return Err(Error::Contract("attention layers disagree in shape".into()));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[AttentionMap] {
        &self.layers
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct BackendDims {
    pub tokens: usize,
    pub token_width: usize,
    pub latent_height: usize,
    pub latent_width: usize,
}

pub trait Backend: Send + Sync {
    fn dims(&self) -> BackendDims;

    /// Identity tokens from the visual encoder alone.
    fn encode_identity(&self, image: &RasterImage) -> Result<TokenSet>;

    /// Stylization tokens from the full compositional prompt.
    fn generate_tokens(&self, prompt: &CompositionPrompt) -> Result<TokenSet>;

    /// Cross-attention maps of a scoring forward pass conditioned on `tokens`.
    fn attention_probe(
        &self,
        tokens: &TokenSet,
        latent: &Latent,
        sigma: f64,
    ) -> Result<AttentionStack>;

    fn encode_latent(&self, image: &RasterImage) -> Result<Latent>;

    fn decode_latent(&self, latent: &Latent) -> Result<RasterImage>;

    /// Flow velocity at noise level `sigma`, noise-minus-data convention,
    /// same layout as `latent.values`.
    fn predict_velocity(&self, latent: &Latent, sigma: f64, tokens: &TokenSet) -> Result<Vec<f64>>;
}
