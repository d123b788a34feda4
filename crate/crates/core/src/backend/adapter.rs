//! Contract for plugging a real generative stack into [`Backend`].
//!
//! No weights ship with this crate. An adapter around a multimodal
//! encoder/decoder pair with a latent-diffusion UNet maps onto the trait as
//! follows:
//!
//! | trait method        | real component                                                 |
//! |---------------------|----------------------------------------------------------------|
//! | `encode_identity`   | visual encoder applied directly to the image (bypassing the LLM), yielding the `K` autoencoded tokens |
//! | `generate_tokens`   | LLM decoder forward pass over the compositional prompt (background, foreground, caption, box) |
//! | `attention_probe`   | one UNet forward pass at the requested sigma conditioned on the given tokens, with hooks on every cross-attention layer; heads are reduced **within** each layer with [`average_heads`] before the layer maps are returned |
//! | `encode_latent` / `decode_latent` | the image autoencoder (VAE/VQ-VAE), `sigma = 0` on encode |
//! | `predict_velocity`  | the denoiser's prediction converted to the noise-minus-data velocity `v = eps - x0`, so that an Euler step `x += (sigma_next - sigma) * v` moves toward data |
//!
//! Token count `K` and width `D` are fixed per backend instance and reported
//! by [`Backend::dims`]. Attention maps must be non-negative and share the
//! latent grid of the probed latent.
//!
//! [`Backend`]: super::Backend
//! [`Backend::dims`]: super::Backend::dims

use serde::{Deserialize, Serialize};

use super::AttentionMap;
use crate::error::{Error, Result};

/// Where attention heads are averaged relative to layer averaging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadReduction {
    /// Heads averaged inside each layer, then layers averaged.
    #[default]
    WithinLayer,
    /// All (layer, head) maps pooled and averaged in one step.
    Pooled,
}

/// Mean over per-head maps of one attention layer.
pub fn average_heads(heads: &[AttentionMap]) -> Result<AttentionMap> {
    let first = heads
        .first()
        .ok_or_else(|| Error::Contract("no attention heads to average".into()))?;
    let mut acc = vec![0.0; first.data.len()];
    for h in heads {
        if (h.tokens, h.height, h.width) != (first.tokens, first.height, first.width) {
            return Err(Error::Contract("attention heads disagree in shape".into()));
        }
        for (a, v) in acc.iter_mut().zip(&h.data) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|v| *v /= heads.len() as f64);
    AttentionMap::new(first.tokens, first.height, first.width, acc)
}

/// Collapse `[layer][head]` maps to one map per layer under `mode`.
///
/// With `Pooled`, every layer is replaced by the global head mean so that a
/// subsequent layer average yields the pooled mean over all maps.
pub fn reduce_heads(
    per_layer: &[Vec<AttentionMap>],
    mode: HeadReduction,
) -> Result<Vec<AttentionMap>> {
    match mode {
        HeadReduction::WithinLayer => per_layer.iter().map(|heads| average_heads(heads)).collect(),
        HeadReduction::Pooled => {
            let all: Vec<AttentionMap> = per_layer.iter().flatten().cloned().collect();
            let pooled = average_heads(&all)?;
            Ok(vec![pooled; per_layer.len()])
        }
    }
}
