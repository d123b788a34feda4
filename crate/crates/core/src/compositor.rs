//! Sequential composition of a design's foreground elements.
//!
//! The canvas starts as the rasterized background. Each foreground element,
//! in layer order, is captioned, injected, and generated from an inversion of
//! the *current* canvas; the result becomes the canvas for the next element.

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::design::{foreground_elements, DesignDocument, DesignElement, ElementKind};
use crate::digest::{combine, tag, Hasher};
use crate::error::{Error, Result};
use crate::flow::{denoise, invert_canvas, SchedulerConfig};
use crate::injection::{
    pixel_foreground_mask, run_token_injection, InjectionConfig, InjectionTrace, MaskResolution,
    ScoringPass,
};
use crate::mask::DEFAULT_ALPHA_THRESHOLD;
use crate::raster::{load_asset, Fit, RasterImage};

/// Region of the canvas an image element's generation may overwrite.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageReplace {
    /// The generated canvas replaces the whole canvas.
    #[default]
    Full,
    /// Only the element box grown by this many pixels is replaced.
    DilatedBbox(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposeConfig {
    pub injection: InjectionConfig,
    pub scheduler: SchedulerConfig,
    pub seed: u64,
    pub svg_paste_back: bool,
    pub alpha_threshold: f64,
    pub mask_resolution: MaskResolution,
    pub image_replace: ImageReplace,
    /// Noise level of the attention scoring pass; the schedule midpoint when unset.
    pub score_sigma: Option<f64>,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        Self {
            injection: InjectionConfig::default(),
            scheduler: SchedulerConfig::default(),
            seed: 0,
            svg_paste_back: true,
            alpha_threshold: DEFAULT_ALPHA_THRESHOLD,
            mask_resolution: MaskResolution::Pixel,
            image_replace: ImageReplace::Full,
            score_sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElementRecord {
    pub id: String,
    pub kind: ElementKind,
    pub caption: String,
    /// `[x, y, width, height]` in canvas pixels.
    pub pixel_box: [usize; 4],
    pub seed: u64,
    pub injection: InjectionTrace,
    pub sigmas: Vec<f64>,
    pub strength: f64,
    pub start_index: usize,
    pub canvas_in_checksum: String,
    pub generated_checksum: String,
    pub canvas_out_checksum: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CompositionTrace {
    pub background_checksum: String,
    pub elements: Vec<ElementRecord>,
}

#[derive(Debug)]
pub struct Composition {
    pub backing: RasterImage,
    pub trace: CompositionTrace,
}

/// A document that failed part-way, with the trace up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("{}{error}", element.as_deref().map(|id| format!("element `{id}`: ")).unwrap_or_default())]
pub struct ComposeFailure {
    pub error: Error,
    /// The element being composed when the failure happened, if any.
    pub element: Option<String>,
    pub partial: Box<CompositionTrace>,
}

impl ComposeFailure {
    /// The underlying error with the failing element named in its message.
    /// The variant, and so the exit code, is unchanged.
    pub fn into_error(self) -> Error {
        let Some(id) = self.element else {
            return self.error;
        };
        let named = |m: String| format!("element `{id}`: {m}");
        match self.error {
            Error::Contract(m) => Error::Contract(named(m)),
            Error::Precondition(m) => Error::Precondition(named(m)),
            Error::Validation(m) => Error::Validation(named(m)),
            Error::Config(m) => Error::Config(named(m)),
            Error::UndefinedInput(m) => Error::UndefinedInput(named(m)),
            other => other,
        }
    }
}

pub fn default_caption(element: &DesignElement) -> String {
    format!("a {} design element {}", element.kind.as_str(), element.id)
}

/// Per-element seed, stable under reordering of other elements.
pub fn element_seed(seed: u64, element_id: &str) -> u64 {
    combine(&[
        seed,
        tag("element"),
        Hasher::new().str(element_id).finish_u64(),
    ])
}

fn element_error(element: &DesignElement, e: Error) -> Error {
    match e {
        Error::Asset { path, message } => Error::Element {
            element: element.id.clone(),
            message: format!("cannot read asset {}: {message}", path.display()),
        },
        other => other,
    }
}

/// Rasterize the background element at document resolution (opaque RGB).
pub fn load_background(doc: &DesignDocument) -> Result<RasterImage> {
    let bg = doc.background();
    let (w, h) = (doc.canvas.width as usize, doc.canvas.height as usize);
    let img = load_asset(&doc.resolve_asset(&bg.asset), w, h, Fit::Stretch)
        .map_err(|e| element_error(bg, e))?;
    Ok(img.flatten_over([1.0, 1.0, 1.0]))
}

/// Load a foreground asset fitted to its pixel box, applying the separate
/// alpha matte when one is given.
pub fn load_foreground(doc: &DesignDocument, element: &DesignElement) -> Result<RasterImage> {
    let (w, h) = (doc.canvas.width as usize, doc.canvas.height as usize);
    let pb = element.bbox.pixel_box(w, h);
    let img = load_asset(
        &doc.resolve_asset(&element.asset),
        pb.width,
        pb.height,
        Fit::Letterbox,
    )
    .map_err(|e| element_error(element, e))?;
    let Some(alpha_path) = &element.alpha else {
        return Ok(img);
    };
    let matte = load_asset(
        &doc.resolve_asset(alpha_path),
        pb.width,
        pb.height,
        Fit::Stretch,
    )
    .map_err(|e| element_error(element, e))?;
    Ok(RasterImage::from_fn(pb.width, pb.height, 4, |x, y, c| {
        if c < 3 {
            img.get(x, y, c)
        } else if matte.has_alpha() {
            matte.get(x, y, 3)
        } else {
            let p = matte.pixel(x, y);
            0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
        }
    }))
}

/// One iteration of the composition loop.
///
/// `foreground` is the element's asset fitted to its pixel box.
pub fn compose_element(
    canvas: &RasterImage,
    element: &DesignElement,
    foreground: &RasterImage,
    cfg: &ComposeConfig,
    backend: &dyn Backend,
) -> Result<(RasterImage, ElementRecord)> {
    if element.kind == ElementKind::Background {
        return Err(Error::Precondition(format!(
            "`{}` is the background, not a foreground",
            element.id
        )));
    }
    let (w, h) = (canvas.width(), canvas.height());
    let pb = element.bbox.pixel_box(w, h);
    let caption = element
        .caption
        .as_deref()
        .filter(|c| !c.trim().is_empty())
        .map_or_else(|| default_caption(element), str::to_owned);
    let seed = element_seed(cfg.seed, &element.id);
    let schedule = cfg.scheduler.schedule()?;
    let scoring = ScoringPass {
        sigma: cfg.score_sigma.unwrap_or_else(|| schedule.mid_sigma()),
        seed,
        alpha_threshold: cfg.alpha_threshold,
        mask_resolution: cfg.mask_resolution,
    };

    let (t_final, injection) = run_token_injection(
        foreground,
        canvas,
        &element.bbox,
        &caption,
        backend,
        &cfg.injection,
        &scoring,
    )?;
    let (latent, start_index) =
        invert_canvas(canvas, cfg.scheduler.strength, &schedule, seed, backend)?;
    let denoised = denoise(&latent, start_index, &schedule, &t_final, backend)?;
    let generated = backend
        .decode_latent(&denoised)?
        .flatten_over([1.0, 1.0, 1.0]);
    if (generated.width(), generated.height()) != (w, h) {
        return Err(Error::Contract(format!(
            "backend decoded {}x{}, canvas is {w}x{h}",
            generated.width(),
            generated.height()
        )));
    }

    let out = match element.kind {
        ElementKind::Svg if cfg.svg_paste_back => {
            let mask = pixel_foreground_mask(foreground, w, h, &element.bbox, cfg.alpha_threshold)?;
            splice(canvas, &generated, |x, y| mask.get(x, y))
        }
        ElementKind::Image => match cfg.image_replace {
            ImageReplace::Full => generated.clone(),
            ImageReplace::DilatedBbox(margin) => {
                let region = pb.dilate(margin, w, h);
                splice(canvas, &generated, |x, y| region.contains(x, y))
            }
        },
        _ => generated.clone(),
    };

    let record = ElementRecord {
        id: element.id.clone(),
        kind: element.kind,
        caption,
        pixel_box: [pb.x, pb.y, pb.width, pb.height],
        seed,
        injection,
        sigmas: schedule.sigmas().to_vec(),
        strength: cfg.scheduler.strength,
        start_index,
        canvas_in_checksum: canvas.checksum(),
        generated_checksum: generated.checksum(),
        canvas_out_checksum: out.checksum(),
    };
    Ok((out, record))
}

/// `generated` where `take(x, y)`, `base` elsewhere.
fn splice(
    base: &RasterImage,
    generated: &RasterImage,
    take: impl Fn(usize, usize) -> bool,
) -> RasterImage {
    RasterImage::from_fn(base.width(), base.height(), base.channels(), |x, y, c| {
        if take(x, y) {
            generated.get(x, y, c)
        } else {
            base.get(x, y, c)
        }
    })
}

pub fn compose_document(
    doc: &DesignDocument,
    cfg: &ComposeConfig,
    backend: &dyn Backend,
) -> std::result::Result<Composition, ComposeFailure> {
    compose_document_observed(doc, cfg, backend, |_, _| {})
}

/// As [`compose_document`], calling `observe` with each element's record
/// and the canvas it produced.
pub fn compose_document_observed(
    doc: &DesignDocument,
    cfg: &ComposeConfig,
    backend: &dyn Backend,
    mut observe: impl FnMut(&ElementRecord, &RasterImage),
) -> std::result::Result<Composition, ComposeFailure> {
    let mut trace = CompositionTrace::default();
    let fail = |error: Error, element: Option<&str>, trace: &CompositionTrace| ComposeFailure {
        error,
        element: element.map(str::to_owned),
        partial: Box::new(trace.clone()),
    };
    let mut canvas =
        load_background(doc).map_err(|e| fail(e, Some(&doc.background().id), &trace))?;
    trace.background_checksum = canvas.checksum();
    log::info!(
        "composing {} foreground element(s); n_fg={}, n_bg={}, beta_fg={}, beta_bg={}",
        foreground_elements(doc).len(),
        cfg.injection.n_fg,
        cfg.injection.n_bg,
        cfg.injection.beta_fg,
        cfg.injection.beta_bg
    );
    for element in foreground_elements(doc) {
        let step = load_foreground(doc, element)
            .and_then(|fg| compose_element(&canvas, element, &fg, cfg, backend));
        let (next, record) = step.map_err(|e| fail(e, Some(&element.id), &trace))?;
        log::debug!(
            "element `{}` composed, start index {}",
            record.id,
            record.start_index
        );
        observe(&record, &next);
        trace.elements.push(record);
        canvas = next;
    }
    Ok(Composition {
        backing: canvas,
        trace,
    })
}

/// Compose only the elements below `element_id` and return the canvas the
/// element would be composed onto.
pub fn canvas_before(
    doc: &DesignDocument,
    element_id: &str,
    cfg: &ComposeConfig,
    backend: &dyn Backend,
) -> Result<RasterImage> {
    let target = doc
        .element(element_id)
        .filter(|e| e.kind != ElementKind::Background)
        .ok_or_else(|| Error::Validation(format!("no foreground element `{element_id}`")))?;
    let mut canvas = load_background(doc)?;
    for element in foreground_elements(doc)
        .into_iter()
        .take_while(|e| e.layer < target.layer)
    {
        let fg = load_foreground(doc, element)?;
        canvas = compose_element(&canvas, element, &fg, cfg, backend)?.0;
    }
    Ok(canvas)
}
