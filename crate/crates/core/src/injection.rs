//! Cross-attention guided token injection.
//!
//! Identity tokens (the visual encoding of a naive foreground-on-canvas
//! composite) are blended into the generative tokens only on the indices
//! whose attention peaks inside the foreground or background region.

use serde::{Deserialize, Serialize};

use crate::backend::{AttentionMap, Backend, CompositionPrompt, Latent, TokenSet, TokenSource};
use crate::design::BoundingBox;
use crate::digest::{combine, tag};
use crate::error::{Error, Result};
use crate::flow::{add_noise, gaussian_noise};
use crate::mask::{
    complement, downsample_to_latent, mask_from_alpha, mask_from_bbox, naive_composite, place_mask,
    BinaryMask,
};
use crate::raster::RasterImage;
use crate::relevance::{
    aggregate_attention, relevance, select_top, RelevanceScores, TokenIndexSet,
};

/// How indices selected for both regions are treated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMode {
    /// Foreground blend, then background blend read from `T_gen`; shared
    /// indices end with the background blend.
    #[default]
    Literal,
    /// Foreground indices are removed from the background set first.
    Disjoint,
}

/// Resolution at which the foreground mask is built.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskResolution {
    /// Build at canvas resolution from alpha (or the box), then max-pool.
    #[default]
    Pixel,
    /// Box mask built directly on the latent grid.
    Latent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionConfig {
    pub beta_fg: f64,
    pub beta_bg: f64,
    pub n_fg: usize,
    pub n_bg: usize,
    pub enabled: bool,
    pub overlap: OverlapMode,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            beta_fg: 0.3,
            beta_bg: 0.2,
            n_fg: 16,
            n_bg: 8,
            enabled: true,
            overlap: OverlapMode::Literal,
        }
    }
}

impl InjectionConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        for (name, b) in [("beta_fg", self.beta_fg), ("beta_bg", self.beta_bg)] {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::Config(format!("{name} = {b} outside [0, 1]")));
            }
        }
        if self.n_fg > k || self.n_bg > k {
            return Err(Error::Config(format!(
                "n_fg = {}, n_bg = {} must not exceed K = {k}",
                self.n_fg, self.n_bg
            )));
        }
        Ok(())
    }
}

/// Parameters of the attention scoring pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringPass {
    pub sigma: f64,
    pub seed: u64,
    pub alpha_threshold: f64,
    pub mask_resolution: MaskResolution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectionTrace {
    pub enabled: bool,
    pub beta_fg: f64,
    pub beta_bg: f64,
    pub n_fg: usize,
    pub n_bg: usize,
    pub overlap: OverlapMode,
    pub score_sigma: f64,
    /// Token set the scoring pass was conditioned on.
    pub probe_conditioning: Option<TokenSource>,
    pub scores: Option<RelevanceScores>,
    pub s_fg: TokenIndexSet,
    pub s_bg: TokenIndexSet,
    pub identity_input_checksum: Option<String>,
    pub t_gen_checksum: String,
    pub t_auto_checksum: Option<String>,
    pub t_final_checksum: String,
}

fn blend_row(out: &mut [f64], gen: &[f64], auto: &[f64], beta: f64) {
    for ((o, g), a) in out.iter_mut().zip(gen).zip(auto) {
        *o = (1.0 - beta) * g + beta * a;
    }
}

/// `T_final[S] = (1 - beta) T_gen[S] + beta T_auto[S]` for the foreground
/// set, then the background set, both reading from `T_gen`.
pub fn blend_tokens(
    t_gen: &TokenSet,
    t_auto: &TokenSet,
    s_fg: &TokenIndexSet,
    s_bg: &TokenIndexSet,
    cfg: &InjectionConfig,
) -> Result<TokenSet> {
    if t_gen.k() != t_auto.k() || t_gen.d() != t_auto.d() {
        return Err(Error::Contract(format!(
            "cannot blend {}x{} with {}x{} tokens",
            t_gen.k(),
            t_gen.d(),
            t_auto.k(),
            t_auto.d()
        )));
    }
    let k = t_gen.k();
    if s_fg.indices().iter().chain(s_bg.indices()).any(|&i| i >= k) {
        return Err(Error::Contract(format!(
            "token index out of range for K={k}"
        )));
    }
    let s_bg = match cfg.overlap {
        OverlapMode::Literal => s_bg.clone(),
        OverlapMode::Disjoint => s_bg.without(s_fg),
    };
    let mut out = t_gen.clone();
    out.source = TokenSource::Blended;
    for &i in s_fg.indices() {
        blend_row(out.row_mut(i), t_gen.row(i), t_auto.row(i), cfg.beta_fg);
    }
    for &i in s_bg.indices() {
        blend_row(out.row_mut(i), t_gen.row(i), t_auto.row(i), cfg.beta_bg);
    }
    Ok(out)
}

/// Foreground and background masks on the backend's latent grid.
pub fn region_masks(
    foreground: &RasterImage,
    canvas: &RasterImage,
    bbox: &BoundingBox,
    latent_h: usize,
    latent_w: usize,
    scoring: &ScoringPass,
) -> Result<(BinaryMask, BinaryMask)> {
    let m_fg = match scoring.mask_resolution {
        MaskResolution::Latent => mask_from_bbox(bbox, latent_h, latent_w),
        MaskResolution::Pixel => {
            let full = pixel_foreground_mask(
                foreground,
                canvas.width(),
                canvas.height(),
                bbox,
                scoring.alpha_threshold,
            )?;
            downsample_to_latent(&full, latent_h, latent_w)?
        }
    };
    let m_bg = complement(&m_fg);
    Ok((m_fg, m_bg))
}

/// Canvas-resolution mask of a box-sized foreground placed at `bbox`: its
/// alpha when present, the hard box otherwise.
pub fn pixel_foreground_mask(
    foreground: &RasterImage,
    width: usize,
    height: usize,
    bbox: &BoundingBox,
    threshold: f64,
) -> Result<BinaryMask> {
    if !foreground.has_alpha() {
        return Ok(mask_from_bbox(bbox, height, width));
    }
    let pb = bbox.pixel_box(width, height);
    let fg = if (foreground.width(), foreground.height()) == (pb.width, pb.height) {
        foreground.clone()
    } else {
        foreground.resize_bilinear(pb.width, pb.height)
    };
    let local = mask_from_alpha(&fg, threshold)?;
    Ok(place_mask(&local, pb, width, height))
}

fn drop_zero_scores(set: TokenIndexSet, scores: &[f64], k: usize) -> Result<TokenIndexSet> {
    TokenIndexSet::new(
        set.indices()
            .iter()
            .copied()
            .filter(|&i| scores[i] > 0.0)
            .collect(),
        k,
    )
}

/// Full injection procedure for one element.
///
/// `foreground` is the asset already fitted to the element's pixel box.
/// Returns `T_final` (or `T_gen` untouched when injection is disabled).
pub fn run_token_injection(
    foreground: &RasterImage,
    canvas: &RasterImage,
    bbox: &BoundingBox,
    caption: &str,
    backend: &dyn Backend,
    cfg: &InjectionConfig,
    scoring: &ScoringPass,
) -> Result<(TokenSet, InjectionTrace)> {
    let dims = backend.dims();
    cfg.validate(dims.tokens)?;

    let prompt = CompositionPrompt::new(canvas.clone(), foreground.clone(), caption, *bbox)?;
    let t_gen = backend.generate_tokens(&prompt)?;

    let mut trace = InjectionTrace {
        enabled: cfg.enabled,
        beta_fg: cfg.beta_fg,
        beta_bg: cfg.beta_bg,
        n_fg: cfg.n_fg,
        n_bg: cfg.n_bg,
        overlap: cfg.overlap,
        score_sigma: scoring.sigma,
        probe_conditioning: None,
        scores: None,
        s_fg: TokenIndexSet::default(),
        s_bg: TokenIndexSet::default(),
        identity_input_checksum: None,
        t_gen_checksum: t_gen.checksum(),
        t_auto_checksum: None,
        t_final_checksum: t_gen.checksum(),
    };
    if !cfg.enabled {
        return Ok((t_gen, trace));
    }

    let probe = score_tokens(foreground, canvas, bbox, backend, cfg, scoring)?;
    trace.identity_input_checksum = Some(probe.identity_input_checksum.clone());
    trace.t_auto_checksum = Some(probe.t_auto.checksum());
    trace.probe_conditioning = Some(probe.t_auto.source);

    let t_final = blend_tokens(&t_gen, &probe.t_auto, &probe.s_fg, &probe.s_bg, cfg)?;
    trace.t_final_checksum = t_final.checksum();
    trace.scores = Some(probe.scores);
    trace.s_fg = probe.s_fg;
    trace.s_bg = probe.s_bg;
    Ok((t_final, trace))
}
/// Everything the attention scoring pass produces for one element.
#[derive(Debug, Clone)]
pub struct TokenScoring {
    pub t_auto: TokenSet,
    pub identity_input_checksum: String,
    /// Layer-averaged cross-attention.
    pub attention: AttentionMap,
    pub m_fg: BinaryMask,
    pub m_bg: BinaryMask,
    pub scores: RelevanceScores,
    pub s_fg: TokenIndexSet,
    pub s_bg: TokenIndexSet,
}

/// Identity encoding of the naive composite, scoring pass conditioned on
/// it, relevance and top-N selection. Tokens with zero relevance are never
/// selected.
pub fn score_tokens(
    foreground: &RasterImage,
    canvas: &RasterImage,
    bbox: &BoundingBox,
    backend: &dyn Backend,
    cfg: &InjectionConfig,
    scoring: &ScoringPass,
) -> Result<TokenScoring> {
    let k = backend.dims().tokens;
    cfg.validate(k)?;
    let composite = naive_composite(canvas, foreground, bbox);
    let t_auto = backend.encode_identity(&composite)?;

    let probe_latent = scoring_latent(&composite, backend, scoring)?;
    let stack = backend.attention_probe(&t_auto, &probe_latent, scoring.sigma)?;
    let attention = aggregate_attention(&stack)?;

    let (m_fg, m_bg) = region_masks(
        foreground,
        canvas,
        bbox,
        attention.height,
        attention.width,
        scoring,
    )?;
    let scores = relevance(&attention, &m_fg, &m_bg)?;
    let s_fg = drop_zero_scores(select_top(&scores.r_fg, cfg.n_fg)?, &scores.r_fg, k)?;
    let s_bg = drop_zero_scores(select_top(&scores.r_bg, cfg.n_bg)?, &scores.r_bg, k)?;
    Ok(TokenScoring {
        t_auto,
        identity_input_checksum: composite.checksum(),
        attention,
        m_fg,
        m_bg,
        scores,
        s_fg,
        s_bg,
    })
}

/// Noised encoding of the composite used by the scoring pass.
pub fn scoring_latent(
    composite: &RasterImage,
    backend: &dyn Backend,
    scoring: &ScoringPass,
) -> Result<Latent> {
    let x0 = backend.encode_latent(composite)?;
    let eps = gaussian_noise(
        combine(&[scoring.seed, tag("scoring_pass")]),
        x0.values.len(),
    );
    add_noise(&x0, &eps, scoring.sigma)
}
