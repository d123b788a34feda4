#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use layercomp::compositor::ComposeConfig;
use layercomp::flow::{ScheduleShape, SchedulerConfig};
use layercomp::pipeline::PipelineConfig;
use layercomp::raster::RasterImage;
use serde_json::{json, Value};

pub const W: usize = 64;
pub const H: usize = 48;

pub fn background_image() -> RasterImage {
    RasterImage::from_fn(W, H, 3, |x, y, c| {
        let v = match c {
            0 => x as f64 / (W - 1) as f64,
            1 => y as f64 / (H - 1) as f64,
            _ => ((x / 8 + y / 8) % 2) as f64 * 0.5 + 0.25,
        };
        v.clamp(0.0, 1.0)
    })
}

/// A disc on a transparent square, tinted by `hue`.
pub fn disc_image(size: usize, hue: [f64; 3]) -> RasterImage {
    let r = size as f64 / 2.0;
    RasterImage::from_fn(size, size, 4, |x, y, c| {
        let dx = x as f64 + 0.5 - r;
        let dy = y as f64 + 0.5 - r;
        if c == 3 {
            f64::from(u8::from(dx * dx + dy * dy <= r * r * 0.8))
        } else {
            hue[c]
        }
    })
}

pub fn svg_star(color: &str) -> String {
    format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="40" height="40" viewBox="0 0 40 40"><polygon points="20,2 25,15 38,15 27,23 31,37 20,29 9,37 13,23 2,15 15,15" fill="{color}"/></svg>"##
    )
}

/// Writes assets and a design document into a directory.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub elements: Vec<Value>,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        background_image()
            .save_png(&dir.path().join("bg.png"))
            .unwrap();
        Fixture {
            dir,
            elements: vec![
                json!({"id": "bg", "kind": "background", "asset": "bg.png", "bbox": [0, 0, 1, 1], "layer": 0}),
            ],
        }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn image(mut self, id: &str, layer: i64, bbox: [f64; 4], img: &RasterImage) -> Self {
        let name = format!("{id}.png");
        img.save_png(&self.path().join(&name)).unwrap();
        self.elements
            .push(json!({"id": id, "kind": "image", "asset": name, "bbox": bbox, "layer": layer, "caption": format!("photo {id}")}));
        self
    }

    pub fn svg(mut self, id: &str, layer: i64, bbox: [f64; 4], color: &str) -> Self {
        let name = format!("{id}.svg");
        fs::write(self.path().join(&name), svg_star(color)).unwrap();
        self.elements
            .push(json!({"id": id, "kind": "svg", "asset": name, "bbox": bbox, "layer": layer}));
        self
    }

    pub fn raw(mut self, element: Value) -> Self {
        self.elements.push(element);
        self
    }

    pub fn document(&self) -> Value {
        let mut elements = self.elements.clone();
        elements.push(json!({"kind": "text", "text": "SUMMER SALE", "layer": 99}));
        json!({"canvas": {"width": W, "height": H}, "elements": elements})
    }

    pub fn write_design(&self) -> PathBuf {
        let p = self.path().join("design.json");
        fs::write(&p, serde_json::to_string_pretty(&self.document()).unwrap()).unwrap();
        p
    }
}

/// A short linear schedule keeps the end-to-end tests fast.
pub fn fast_compose() -> ComposeConfig {
    ComposeConfig {
        scheduler: SchedulerConfig {
            n_steps: 6,
            shape: ScheduleShape::Linear,
            shift: 1.0,
            strength: 0.7,
        },
        ..ComposeConfig::default()
    }
}

pub fn fast_pipeline(seed: u64) -> PipelineConfig {
    PipelineConfig {
        seed,
        compose: fast_compose(),
        ..PipelineConfig::default()
    }
    .resolved()
}
