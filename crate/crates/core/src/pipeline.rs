//! Run configuration and the `compose`, `probe` and `eval` commands.
//!
//! Every command writes its artifacts under an output path and returns an
//! error whose [`Error::exit_code`] is the process status: 0 success, 1 bad
//! input, 2 backend or contract failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{Backend, MockBackend, MockConfig};
use crate::compositor::{
    canvas_before, compose_document_observed, element_seed, load_foreground, ComposeConfig,
};
use crate::design::{load_design_file, BoundingBox};
use crate::digest::Hasher;
use crate::error::{Error, Result};
use crate::identity::{evaluate_pairs, Embedder, IdentityReport, ReferenceEmbedder};
use crate::injection::{score_tokens, ScoringPass};
use crate::raster::RasterImage;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub mock: MockConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Reference,
}

/// Fully resolved run configuration. Missing fields take built-in defaults;
/// the top-level `seed` drives every random choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub backend: BackendConfig,
    pub compose: ComposeConfig,
    pub embedder: EmbedderKind,
    pub debug_intermediates: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            backend: BackendConfig::default(),
            compose: ComposeConfig::default(),
            embedder: EmbedderKind::Reference,
            debug_intermediates: false,
        }
    }
}

/// Command-line overrides, applied after the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub debug_intermediates: bool,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Built-in defaults, then the optional file, then `overrides`.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                Self::from_json(&text)?
            }
            None => Self::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        cfg.debug_intermediates |= overrides.debug_intermediates;
        Ok(cfg.resolved())
    }

    /// Propagate the top-level seed into the component configs.
    pub fn resolved(mut self) -> Self {
        self.compose.seed = self.seed;
        self.backend.mock.seed = self.seed;
        self
    }

    pub fn build_backend(&self) -> Result<Box<dyn Backend>> {
        match self.backend.kind {
            BackendKind::Mock => Ok(Box::new(MockBackend::new(self.backend.mock.clone())?)),
        }
    }

    pub fn build_embedder(&self) -> Box<dyn Embedder> {
        match self.embedder {
            EmbedderKind::Reference => Box::new(ReferenceEmbedder),
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Asset {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone)]
pub struct ComposeOutput {
    pub backing_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Compose a design and write `backing.png` plus `manifest.json` to `out_dir`.
///
/// On an element failure the manifest is still written, with the trace up
/// to the failing element, and the error is returned.
pub fn cmd_compose(
    design_path: &Path,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<ComposeOutput> {
    let doc = load_design_file(design_path)?;
    let backend = cfg.build_backend()?;
    fs::create_dir_all(out_dir)?;
    let manifest_path = out_dir.join("manifest.json");
    let backing_path = out_dir.join("backing.png");

    let inter_dir = out_dir.join("intermediates");
    if cfg.debug_intermediates {
        fs::create_dir_all(&inter_dir)?;
    }
    let mut step = 0usize;
    let mut write_err = None;
    let outcome =
        compose_document_observed(&doc, &cfg.compose, backend.as_ref(), |record, canvas| {
            step += 1;
            if cfg.debug_intermediates {
                let p = inter_dir.join(format!("step_{step:02}_{}.png", record.id));
                if let Err(e) = canvas.save_png(&p) {
                    write_err.get_or_insert(e);
                }
            }
        });
    if let Some(e) = write_err {
        return Err(e);
    }

    let mut manifest = json!({
        "design": doc.to_json(),
        "config": cfg,
        "backend": backend.dims(),
        "text_elements": doc.text_elements,
    });
    match outcome {
        Ok(composition) => {
            composition.backing.save_png(&backing_path)?;
            let png = fs::read(&backing_path)?;
            manifest["status"] = json!("ok");
            manifest["trace"] = serde_json::to_value(&composition.trace)?;
            manifest["backing"] = json!({
                "file": "backing.png",
                "width": composition.backing.width(),
                "height": composition.backing.height(),
                "png_sha256": Hasher::new().bytes(&png).finish_hex(),
                "checksum": composition.backing.checksum(),
            });
            write(&manifest_path, to_pretty(&manifest))?;
            Ok(ComposeOutput {
                backing_path,
                manifest_path,
            })
        }
        Err(failure) => {
            manifest["status"] = json!("failed");
            manifest["error"] = json!(failure.to_string());
            manifest["failed_element"] = json!(failure.element);
            manifest["trace"] = serde_json::to_value(&failure.partial)?;
            write(&manifest_path, to_pretty(&manifest))?;
            Err(failure.into_error())
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeOutput {
    pub csv_path: PathBuf,
    pub selection_path: PathBuf,
    pub heatmaps: Vec<PathBuf>,
}

/// Relevance diagnostics for one element at its current canvas state:
/// `relevance.csv`, `selection.json`, fg/bg mask PNGs and one attention
/// heatmap per token under `heatmaps/`.
pub fn cmd_probe(
    design_path: &Path,
    cfg: &PipelineConfig,
    element_id: &str,
    out_dir: &Path,
) -> Result<ProbeOutput> {
    let doc = load_design_file(design_path)?;
    let element = doc
        .element(element_id)
        .ok_or_else(|| Error::Validation(format!("unknown element `{element_id}`")))?;
    let backend = cfg.build_backend()?;
    let canvas = canvas_before(&doc, element_id, &cfg.compose, backend.as_ref())?;
    let fg = load_foreground(&doc, element)?;
    let schedule = cfg.compose.scheduler.schedule()?;
    let scoring = ScoringPass {
        sigma: cfg
            .compose
            .score_sigma
            .unwrap_or_else(|| schedule.mid_sigma()),
        seed: element_seed(cfg.seed, element_id),
        alpha_threshold: cfg.compose.alpha_threshold,
        mask_resolution: cfg.compose.mask_resolution,
    };
    let probe = score_tokens(
        &fg,
        &canvas,
        &element.bbox,
        backend.as_ref(),
        &cfg.compose.injection,
        &scoring,
    )?;

    fs::create_dir_all(out_dir.join("heatmaps"))?;
    let csv_path = out_dir.join("relevance.csv");
    write(
        &csv_path,
        relevance_csv(&probe.scores.r_fg, &probe.scores.r_bg),
    )?;

    let selection_path = out_dir.join("selection.json");
    let selection = json!({
        "element": element_id,
        "score_sigma": scoring.sigma,
        "n_fg": cfg.compose.injection.n_fg,
        "n_bg": cfg.compose.injection.n_bg,
        "s_fg": probe.s_fg,
        "s_bg": probe.s_bg,
        "identity_input_checksum": probe.identity_input_checksum,
        "canvas_checksum": canvas.checksum(),
    });
    write(&selection_path, to_pretty(&selection))?;
    probe.m_fg.save_png(&out_dir.join("mask_fg.png"))?;
    probe.m_bg.save_png(&out_dir.join("mask_bg.png"))?;

    let ca = &probe.attention;
    let width = ca.tokens.saturating_sub(1).to_string().len();
    let mut heatmaps = Vec::with_capacity(ca.tokens);
    for i in 0..ca.tokens {
        let map = ca.token(i);
        let peak = map.iter().copied().fold(0.0, f64::max);
        let bytes: Vec<u8> = map
            .iter()
            .map(|v| {
                if peak > 0.0 {
                    (v / peak * 255.0).round() as u8
                } else {
                    0
                }
            })
            .collect();
        let p = out_dir
            .join("heatmaps")
            .join(format!("token_{i:0width$}.png"));
        image::save_buffer(
            &p,
            &bytes,
            ca.width as u32,
            ca.height as u32,
            image::ExtendedColorType::L8,
        )?;
        heatmaps.push(p);
    }
    Ok(ProbeOutput {
        csv_path,
        selection_path,
        heatmaps,
    })
}

/// `token_index,r_fg,r_bg` with shortest round-trip float formatting.
pub fn relevance_csv(r_fg: &[f64], r_bg: &[f64]) -> String {
    let mut out = String::from("token_index,r_fg,r_bg\n");
    for (i, (f, b)) in r_fg.iter().zip(r_bg).enumerate() {
        let _ = writeln!(out, "{i},{f},{b}");
    }
    out
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub foreground: PathBuf,
    pub composed: PathBuf,
    pub bbox: [f64; 4],
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PairsFile {
    Wrapped { pairs: Vec<PairEntry> },
    Bare(Vec<PairEntry>),
}

/// Parse a pairs manifest: either `[{...}]` or `{"pairs": [{...}]}`.
pub fn parse_pairs_manifest(text: &str) -> Result<Vec<PairEntry>> {
    let parsed: PairsFile =
        serde_json::from_str(text).map_err(|e| Error::parse("pairs", e.to_string()))?;
    Ok(match parsed {
        PairsFile::Wrapped { pairs } | PairsFile::Bare(pairs) => pairs,
    })
}

/// Load each pair: the foreground as-is and the composed image cropped to
/// the pair's box.
pub fn load_pairs(
    entries: &[PairEntry],
    root: Option<&Path>,
) -> Result<Vec<(RasterImage, RasterImage)>> {
    let resolve = |p: &Path| match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p.to_path_buf(),
    };
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let bbox = BoundingBox::new(e.bbox[0], e.bbox[1], e.bbox[2], e.bbox[3])
                .map_err(|err| Error::parse(format!("pairs[{i}].bbox"), err.to_string()))?;
            let fg = RasterImage::load_png(&resolve(&e.foreground))?;
            let composed = RasterImage::load_png(&resolve(&e.composed))?;
            let crop = composed.crop(bbox.pixel_box(composed.width(), composed.height()));
            Ok((fg, crop))
        })
        .collect()
}

/// Identity metrics over a pairs manifest; writes the report JSON to
/// `out_path` and the text table next to it with a `.txt` extension.
pub fn cmd_eval(
    pairs_manifest: &Path,
    cfg: &PipelineConfig,
    out_path: &Path,
) -> Result<IdentityReport> {
    let text = fs::read_to_string(pairs_manifest).map_err(|e| Error::Asset {
        path: pairs_manifest.to_path_buf(),
        message: e.to_string(),
    })?;
    let entries = parse_pairs_manifest(&text)?;
    if entries.is_empty() {
        return Err(Error::Validation("pairs manifest is empty".into()));
    }
    let pairs = load_pairs(&entries, pairs_manifest.parent())?;
    let embedder = cfg.build_embedder();
    let report = evaluate_pairs(&pairs, embedder.as_ref())?;
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write(out_path, to_pretty(&serde_json::to_value(&report)?))?;
    write(&out_path.with_extension("txt"), report.to_table())?;
    Ok(report)
}
