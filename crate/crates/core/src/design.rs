//! Layered design documents: the layout stage's output consumed by the
//! compositor.
//!
//! Bounding boxes are stored as fractions of the canvas so a document can be
//! rendered at any resolution. Text elements are carried through untouched
//! for the downstream typography stage.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

const BBOX_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "canvas must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }
}

/// Integer pixel rectangle, always at least 1x1 and inside its frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelBox {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    /// Grow by `margin` pixels on every side, clipped to a `frame_w` x `frame_h` frame.
    pub fn dilate(&self, margin: usize, frame_w: usize, frame_h: usize) -> PixelBox {
        let x = self.x.saturating_sub(margin);
        let y = self.y.saturating_sub(margin);
        let right = (self.x + self.width + margin).min(frame_w);
        let bottom = (self.y + self.height + margin).min(frame_h);
        PixelBox {
            x,
            y,
            width: right - x,
            height: bottom - y,
        }
    }
}

/// Normalized `[left, top, width, height]` in canvas fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Result<Self> {
        let vals = [left, top, width, height];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "bbox has non-finite entries: {vals:?}"
            )));
        }
        if left < 0.0 || top < 0.0 {
            return Err(Error::Validation(format!(
                "bbox origin must be non-negative: {vals:?}"
            )));
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(Error::Validation(format!(
                "bbox must have positive size: {vals:?}"
            )));
        }
        if left + width > 1.0 + BBOX_SLACK || top + height > 1.0 + BBOX_SLACK {
            return Err(Error::Validation(format!(
                "bbox extends past the canvas: {vals:?}"
            )));
        }
        Ok(Self {
            left,
            top,
            width,
            height,
        })
    }

    pub fn full() -> Self {
        Self {
            left: 0.0,
            top: 0.0,
            width: 1.0,
            height: 1.0,
        }
    }

    pub fn is_full(&self) -> bool {
        self.left.abs() <= BBOX_SLACK
            && self.top.abs() <= BBOX_SLACK
            && (self.width - 1.0).abs() <= BBOX_SLACK
            && (self.height - 1.0).abs() <= BBOX_SLACK
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.left, self.top, self.width, self.height]
    }

    /// Pixel rectangle on a `frame_w` x `frame_h` grid: origin is floored,
    /// size is rounded and kept at least one pixel.
    pub fn pixel_box(&self, frame_w: usize, frame_h: usize) -> PixelBox {
        let x = ((self.left * frame_w as f64).floor() as usize).min(frame_w - 1);
        let y = ((self.top * frame_h as f64).floor() as usize).min(frame_h - 1);
        let w = (self.width * frame_w as f64).round() as usize;
        let h = (self.height * frame_h as f64).round() as usize;
        if w == 0 || h == 0 {
            log::warn!(
                "bbox {:?} rounds to zero area on {frame_w}x{frame_h}; clamping to 1x1",
                self.as_array()
            );
        }
        PixelBox {
            x,
            y,
            width: w.clamp(1, frame_w - x),
            height: h.clamp(1, frame_h - y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Background,
    Image,
    Svg,
}

impl ElementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ElementKind::Background => "background",
            ElementKind::Image => "image",
            ElementKind::Svg => "svg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignElement {
    pub id: String,
    pub kind: ElementKind,
    pub asset: PathBuf,
    pub caption: Option<String>,
    pub bbox: BoundingBox,
    pub layer: i64,
    pub alpha: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignDocument {
    pub canvas: Canvas,
    /// Visual elements sorted ascending by layer.
    pub elements: Vec<DesignElement>,
    /// Text elements, verbatim, for the typography stage.
    pub text_elements: Vec<Value>,
    /// Directory relative asset paths are resolved against.
    pub asset_root: Option<PathBuf>,
}

const ELEMENT_FIELDS: &[&str] = &["id", "kind", "asset", "caption", "bbox", "layer", "alpha"];

/// Parse and validate design JSON.
pub fn load_design(source: &str) -> Result<DesignDocument> {
    let root: Value = serde_json::from_str(source).map_err(|e| Error::parse("$", e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::parse("$", "expected a JSON object"))?;
    warn_unknown(obj, &["canvas", "elements"], "$");

    let canvas_v = obj
        .get("canvas")
        .ok_or_else(|| Error::parse("canvas", "missing"))?;
    let canvas_o = canvas_v
        .as_object()
        .ok_or_else(|| Error::parse("canvas", "expected an object"))?;
    warn_unknown(canvas_o, &["width", "height"], "canvas");
    let width = positive_u32(canvas_o.get("width"), "canvas.width")?;
    let height = positive_u32(canvas_o.get("height"), "canvas.height")?;
    let canvas = Canvas::new(width, height)?;

    let elems = obj
        .get("elements")
        .ok_or_else(|| Error::parse("elements", "missing"))?
        .as_array()
        .ok_or_else(|| Error::parse("elements", "expected an array"))?;

    let mut elements = Vec::new();
    let mut text_elements = Vec::new();
    for (i, ev) in elems.iter().enumerate() {
        let path = format!("elements[{i}]");
        let eo = ev
            .as_object()
            .ok_or_else(|| Error::parse(&path, "expected an object"))?;
        let kind = string_field(eo, "kind", &path)?;
        if kind == "text" {
            text_elements.push(ev.clone());
            continue;
        }
        warn_unknown(eo, ELEMENT_FIELDS, &path);
        let kind = match kind.as_str() {
            "background" => ElementKind::Background,
            "image" => ElementKind::Image,
            "svg" => ElementKind::Svg,
            other => {
                return Err(Error::parse(
                    format!("{path}.kind"),
                    format!("unknown kind `{other}` (expected background, image, svg or text)"),
                ))
            }
        };
        let id = string_field(eo, "id", &path)?;
        let asset = PathBuf::from(string_field(eo, "asset", &path)?);
        let caption = optional_string(eo, "caption", &path)?;
        let alpha = optional_string(eo, "alpha", &path)?.map(PathBuf::from);
        let bbox = parse_bbox(eo.get("bbox"), &format!("{path}.bbox"))?;
        let layer = eo
            .get("layer")
            .ok_or_else(|| Error::parse(format!("{path}.layer"), "missing"))?
            .as_i64()
            .ok_or_else(|| Error::parse(format!("{path}.layer"), "expected an integer"))?;
        elements.push(DesignElement {
            id,
            kind,
            asset,
            caption,
            bbox,
            layer,
            alpha,
        });
    }

    let doc = DesignDocument::new(canvas, elements, text_elements)?;
    Ok(doc)
}

/// Read a design file; relative asset paths resolve against its directory.
pub fn load_design_file(path: &Path) -> Result<DesignDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Asset {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut doc = load_design(&text)?;
    doc.asset_root = path.parent().map(Path::to_path_buf);
    Ok(doc)
}

impl DesignDocument {
    /// Validate and normalize (sort by layer).
    pub fn new(
        canvas: Canvas,
        mut elements: Vec<DesignElement>,
        text_elements: Vec<Value>,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Validation("document has no visual elements".into()));
        }
        let backgrounds: Vec<_> = elements
            .iter()
            .filter(|e| e.kind == ElementKind::Background)
            .collect();
        match backgrounds.len() {
            0 => return Err(Error::Validation("missing background element".into())),
            1 => {}
            _ => return Err(Error::Validation("multiple backgrounds".into())),
        }
        if !backgrounds[0].bbox.is_full() {
            return Err(Error::Validation(format!(
                "background `{}` must cover the full canvas",
                backgrounds[0].id
            )));
        }
        elements.sort_by_key(|e| e.layer);
        for pair in elements.windows(2) {
            if pair[0].layer == pair[1].layer {
                return Err(Error::Validation(format!(
                    "duplicate layer {} on `{}` and `{}`",
                    pair[0].layer, pair[0].id, pair[1].id
                )));
            }
        }
        let mut ids: Vec<&str> = elements.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!(
                "duplicate element id `{}`",
                w[0]
            )));
        }
        Ok(Self {
            canvas,
            elements,
            text_elements,
            asset_root: None,
        })
    }

    pub fn background(&self) -> &DesignElement {
        self.elements
            .iter()
            .find(|e| e.kind == ElementKind::Background)
            .expect("validated document has a background")
    }

    pub fn element(&self, id: &str) -> Option<&DesignElement> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn resolve_asset(&self, p: &Path) -> PathBuf {
        match &self.asset_root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn to_json(&self) -> Value {
        let mut elements: Vec<Value> = self
            .elements
            .iter()
            .map(|e| {
                let mut o = Map::new();
                o.insert("id".into(), json!(e.id));
                o.insert("kind".into(), json!(e.kind.as_str()));
                o.insert("asset".into(), json!(e.asset.to_string_lossy()));
                if let Some(c) = &e.caption {
                    o.insert("caption".into(), json!(c));
                }
                o.insert("bbox".into(), json!(e.bbox.as_array()));
                o.insert("layer".into(), json!(e.layer));
                if let Some(a) = &e.alpha {
                    o.insert("alpha".into(), json!(a.to_string_lossy()));
                }
                Value::Object(o)
            })
            .collect();
        elements.extend(self.text_elements.iter().cloned());
        json!({
            "canvas": {"width": self.canvas.width, "height": self.canvas.height},
            "elements": elements,
        })
    }
}

/// All non-background elements in ascending layer order.
pub fn foreground_elements(doc: &DesignDocument) -> Vec<&DesignElement> {
    doc.elements
        .iter()
        .filter(|e| e.kind != ElementKind::Background)
        .collect()
}

fn warn_unknown(obj: &Map<String, Value>, known: &[&str], path: &str) {
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            log::warn!("ignoring unknown field `{path}.{key}`");
        }
    }
}

fn positive_u32(v: Option<&Value>, field: &str) -> Result<u32> {
    let v = v.ok_or_else(|| Error::parse(field, "missing"))?;
    let n = v
        .as_u64()
        .ok_or_else(|| Error::parse(field, "expected a positive integer"))?;
    if n == 0 || n > u32::MAX as u64 {
        return Err(Error::parse(field, format!("out of range: {n}")));
    }
    Ok(n as u32)
}

fn string_field(obj: &Map<String, Value>, key: &str, path: &str) -> Result<String> {
    obj.get(key)
        .ok_or_else(|| Error::parse(format!("{path}.{key}"), "missing"))?
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| Error::parse(format!("{path}.{key}"), "expected a string"))
}

fn optional_string(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<String>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(Error::parse(format!("{path}.{key}"), "expected a string")),
    }
}

fn parse_bbox(v: Option<&Value>, field: &str) -> Result<BoundingBox> {
    let arr = v
        .ok_or_else(|| Error::parse(field, "missing"))?
        .as_array()
        .ok_or_else(|| Error::parse(field, "expected [left, top, width, height]"))?;
    if arr.len() != 4 {
        return Err(Error::parse(
            field,
            format!("expected 4 numbers, got {}", arr.len()),
        ));
    }
    let mut vals = [0.0; 4];
    for (slot, v) in vals.iter_mut().zip(arr) {
        *slot = v
            .as_f64()
            .ok_or_else(|| Error::parse(field, "entries must be numbers"))?;
    }
    BoundingBox::new(vals[0], vals[1], vals[2], vals[3]).map_err(|e| match e {
        Error::Validation(m) => Error::parse(field, m),
        other => other,
    })
}
