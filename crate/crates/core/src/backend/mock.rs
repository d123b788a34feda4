//! Deterministic desk-scale backend.
//!
//! All pseudo-random quantities come from keyed counter-based mixing over
//! `(seed, operation, input digest)`, so every call is a pure function.
//!
//! Shapes and closed forms:
//!
//! - Latent grid is `latent_height x latent_width`; each cell stores the RGB
//!   block average of its pixel block followed by per-pixel residuals, which
//!   makes the autoencoder an invertible linear map.
//! - Identity tokens are `feature(image) + small keyed noise`, where the
//!   feature is the luminance of the image averaged over a `g x g` grid
//!   (`g = floor(sqrt(D))`, remaining dimensions zero).
//! - `target(tokens)` is a fixed linear map of the token mean: block averages
//!   take the grid luminance plus a keyed color mix, residuals are zero.
//! - Velocity is `(x - target) / max(sigma, SIGMA_MIN)`, whose exact flow
//!   `x(sigma) = target + sigma * c` is linear, so Euler steps are exact.

use serde::{Deserialize, Serialize};

use super::{
    AttentionMap, AttentionStack, Backend, BackendDims, CompositionPrompt, Latent, TokenSet,
    TokenSource,
};
use crate::digest::{combine, keyed_unit, tag, Hasher};
use crate::error::{Error, Result};
use crate::raster::RasterImage;

pub const SIGMA_MIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Softmax over cells of a keyed score per (layer, token, cell).
    Softmax,
    /// Token `i` attends only to cell `i mod (H*W)`, identical on every layer.
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    pub seed: u64,
    pub tokens: usize,
    pub token_width: usize,
    pub latent_height: usize,
    pub latent_width: usize,
    pub layers: usize,
    pub attention: AttentionMode,
    /// Softmax sharpness.
    pub attention_temperature: f64,
    /// Amplitude of per-token noise on identity tokens.
    pub identity_noise: f64,
    /// Weight of the keyed color mix in `target`.
    pub style_mix: f64,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tokens: 64,
            token_width: 16,
            latent_height: 8,
            latent_width: 8,
            layers: 3,
            attention: AttentionMode::Softmax,
            attention_temperature: 4.0,
            identity_noise: 0.05,
            style_mix: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    cfg: MockConfig,
}

impl MockBackend {
    pub fn new(cfg: MockConfig) -> Result<Self> {
        if cfg.tokens == 0 || cfg.token_width == 0 || cfg.layers == 0 {
            return Err(Error::Config(
                "mock backend needs tokens, token_width and layers >= 1".into(),
            ));
        }
        if cfg.latent_height == 0 || cfg.latent_width == 0 {
            return Err(Error::Config(
                "mock latent grid must be at least 1x1".into(),
            ));
        }
        Ok(Self { cfg })
    }

    pub fn with_seed(seed: u64) -> Self {
        Self::new(MockConfig {
            seed,
            ..MockConfig::default()
        })
        .expect("default config is valid")
    }

    pub fn config(&self) -> &MockConfig {
        &self.cfg
    }

    fn key(&self, op: &str, digest: u64) -> u64 {
        combine(&[self.cfg.seed, tag(op), digest])
    }

    fn grid(&self) -> usize {
        ((self.cfg.token_width as f64).sqrt().floor() as usize).max(1)
    }

    /// Pixel block covered by one latent cell for a `w x h` frame.
    fn block(&self, w: usize, h: usize) -> (usize, usize) {
        (
            w.div_ceil(self.cfg.latent_width),
            h.div_ceil(self.cfg.latent_height),
        )
    }

    /// Luminance averaged over a `g x g` grid, padded with zeros to `D`.
    fn feature(&self, image: &RasterImage) -> Vec<f64> {
        let g = self.grid();
        let (w, h) = (image.width(), image.height());
        let mut sums = vec![0.0; g * g];
        let mut counts = vec![0usize; g * g];
        for y in 0..h {
            for x in 0..w {
                let cell = (y * g / h) * g + x * g / w;
                let p = image.pixel(x, y);
                sums[cell] += 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
                counts[cell] += 1;
            }
        }
        let mut f = vec![0.0; self.cfg.token_width];
        for (i, slot) in f.iter_mut().take(g * g).enumerate() {
            if counts[i] > 0 {
                *slot = sums[i] / counts[i] as f64;
            }
        }
        f
    }

    /// The mock generator's clean output for `tokens`, laid out like `shape`.
    pub fn target(&self, tokens: &TokenSet, shape: &Latent) -> Vec<f64> {
        let m = tokens.mean();
        let g = self.grid();
        let (lh, lw, ch) = (shape.height, shape.width, shape.channels);
        let n = ch / 3;
        let key = self.key("target", 0);
        let mut out = vec![0.0; lh * lw * ch];
        for y in 0..lh {
            for x in 0..lw {
                let cell = y * lw + x;
                let base = m[(y * g / lh) * g + x * g / lw];
                for c in 0..3 {
                    let mut mix = 0.0;
                    for (d, md) in m.iter().enumerate() {
                        let counter = ((c * lh * lw + cell) * m.len() + d) as u64;
                        mix += keyed_unit(key, counter) * md;
                    }
                    out[cell * ch + c * n] = base + self.cfg.style_mix * mix / m.len() as f64;
                }
            }
        }
        out
    }

    fn check_tokens(&self, tokens: &TokenSet) -> Result<()> {
        if tokens.k() != self.cfg.tokens || tokens.d() != self.cfg.token_width {
            return Err(Error::Contract(format!(
                "token set is {}x{}, backend expects {}x{}",
                tokens.k(),
                tokens.d(),
                self.cfg.tokens,
                self.cfg.token_width
            )));
        }
        Ok(())
    }

    fn check_latent(&self, latent: &Latent) -> Result<()> {
        let (bw, bh) = self.block(latent.frame_width, latent.frame_height);
        if latent.height != self.cfg.latent_height
            || latent.width != self.cfg.latent_width
            || latent.channels != 3 * bw * bh
            || latent.values.len() != latent.height * latent.width * latent.channels
        {
            return Err(Error::Contract(format!(
                "latent {}x{}x{} does not match backend grid {}x{}",
                latent.height,
                latent.width,
                latent.channels,
                self.cfg.latent_height,
                self.cfg.latent_width
            )));
        }
        Ok(())
    }
}

fn image_digest(img: &RasterImage) -> u64 {
    Hasher::new()
        .u64(img.width() as u64)
        .u64(img.height() as u64)
        .u64(img.channels() as u64)
        .f64s(img.data())
        .finish_u64()
}

impl Backend for MockBackend {
    fn dims(&self) -> BackendDims {
        BackendDims {
            tokens: self.cfg.tokens,
            token_width: self.cfg.token_width,
            latent_height: self.cfg.latent_height,
            latent_width: self.cfg.latent_width,
        }
    }

    fn encode_identity(&self, image: &RasterImage) -> Result<TokenSet> {
        if !image.is_finite() {
            return Err(Error::Precondition("image has non-finite pixels".into()));
        }
        let f = self.feature(image);
        let key = self.key("encode_identity", image_digest(image));
        let (k, d) = (self.cfg.tokens, self.cfg.token_width);
        let data = (0..k * d)
            .map(|j| f[j % d] + self.cfg.identity_noise * keyed_unit(key, j as u64))
            .collect();
        TokenSet::new(k, d, data, TokenSource::Identity)
    }

    fn generate_tokens(&self, prompt: &CompositionPrompt) -> Result<TokenSet> {
        if prompt.caption.trim().is_empty() {
            return Err(Error::Precondition("empty caption".into()));
        }
        let digest = Hasher::new()
            .str(&prompt.caption)
            .f64s(&prompt.bbox.as_array())
            .u64(image_digest(&prompt.background))
            .u64(image_digest(&prompt.foreground))
            .finish_u64();
        let key = self.key("generate_tokens", digest);
        let (k, d) = (self.cfg.tokens, self.cfg.token_width);
        let data = (0..k * d)
            .map(|j| 0.5 + 0.5 * keyed_unit(key, j as u64))
            .collect();
        TokenSet::new(k, d, data, TokenSource::Generative)
    }

    fn attention_probe(
        &self,
        tokens: &TokenSet,
        latent: &Latent,
        sigma: f64,
    ) -> Result<AttentionStack> {
        self.check_tokens(tokens)?;
        self.check_latent(latent)?;
        let (k, h, w) = (
            self.cfg.tokens,
            self.cfg.latent_height,
            self.cfg.latent_width,
        );
        let cells = h * w;
        let layers = match self.cfg.attention {
            AttentionMode::Delta => {
                let mut data = vec![0.0; k * cells];
                for i in 0..k {
                    data[i * cells + i % cells] = 1.0;
                }
                let map = AttentionMap::new(k, h, w, data)?;
                vec![map; self.cfg.layers]
            }
            AttentionMode::Softmax => {
                let digest = Hasher::new()
                    .f64s(tokens.data())
                    .f64s(&latent.values)
                    .u64(sigma.to_bits())
                    .finish_u64();
                let key = self.key("attention_probe", digest);
                let mut layers = Vec::with_capacity(self.cfg.layers);
                for l in 0..self.cfg.layers {
                    let mut data = Vec::with_capacity(k * cells);
                    for i in 0..k {
                        let base = ((l * k + i) * cells) as u64;
                        let scores: Vec<f64> = (0..cells as u64)
                            .map(|j| self.cfg.attention_temperature * keyed_unit(key, base + j))
                            .collect();
                        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                        let total: f64 = exps.iter().sum();
                        data.extend(exps.iter().map(|e| e / total));
                    }
                    layers.push(AttentionMap::new(k, h, w, data)?);
                }
                layers
            }
        };
        AttentionStack::new(layers)
    }

    fn encode_latent(&self, image: &RasterImage) -> Result<Latent> {
        let (fw, fh) = (image.width(), image.height());
        let (bw, bh) = self.block(fw, fh);
        let (lh, lw) = (self.cfg.latent_height, self.cfg.latent_width);
        let n = bw * bh;
        let ch = 3 * n;
        let mut values = vec![0.0; lh * lw * ch];
        let mut block = vec![0.0; n];
        for ly in 0..lh {
            for lx in 0..lw {
                let cell = (ly * lw + lx) * ch;
                for c in 0..3 {
                    for (j, slot) in block.iter_mut().enumerate() {
                        let x = (lx * bw + j % bw).min(fw - 1);
                        let y = (ly * bh + j / bw).min(fh - 1);
                        *slot = image.get(x, y, c);
                    }
                    let mean = block.iter().sum::<f64>() / n as f64;
                    values[cell + c * n] = mean;
                    for j in 1..n {
                        values[cell + c * n + j] = block[j] - mean;
                    }
                }
            }
        }
        Ok(Latent {
            height: lh,
            width: lw,
            channels: ch,
            values,
            sigma: 0.0,
            frame_width: fw,
            frame_height: fh,
        })
    }

    fn decode_latent(&self, latent: &Latent) -> Result<RasterImage> {
        self.check_latent(latent)?;
        if latent.sigma != 0.0 {
            log::warn!("decoding a latent at sigma {} (expected 0)", latent.sigma);
        }
        let (fw, fh) = (latent.frame_width, latent.frame_height);
        let (bw, bh) = self.block(fw, fh);
        let n = bw * bh;
        let ch = latent.channels;
        let mut data = vec![0.0; fw * fh * 3];
        let mut block = vec![0.0; n];
        for ly in 0..latent.height {
            for lx in 0..latent.width {
                let cell = (ly * latent.width + lx) * ch;
                for c in 0..3 {
                    let mean = latent.values[cell + c * n];
                    let mut rest = 0.0;
                    let residuals = &latent.values[cell + c * n + 1..cell + (c + 1) * n];
                    for (slot, r) in block[1..].iter_mut().zip(residuals) {
                        *slot = mean + r;
                        rest += *slot;
                    }
                    block[0] = n as f64 * mean - rest;
                    for (j, v) in block.iter().enumerate() {
                        let x = lx * bw + j % bw;
                        let y = ly * bh + j / bw;
                        if x < fw && y < fh {
                            data[(y * fw + x) * 3 + c] = *v;
                        }
                    }
                }
            }
        }
        RasterImage::new(fw, fh, 3, data)
    }

    fn predict_velocity(&self, latent: &Latent, sigma: f64, tokens: &TokenSet) -> Result<Vec<f64>> {
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::Contract(format!(
                "velocity requested at sigma {sigma}, expected (0, 1]"
            )));
        }
        self.check_tokens(tokens)?;
        self.check_latent(latent)?;
        let target = self.target(tokens, latent);
        let scale = sigma.max(SIGMA_MIN);
        Ok(latent
            .values
            .iter()
            .zip(&target)
            .map(|(x, t)| (x - t) / scale)
            .collect())
    }
}
