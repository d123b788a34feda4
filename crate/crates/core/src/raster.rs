//! Floating-point raster images plus PNG/SVG asset IO.

use std::path::Path;

use crate::design::PixelBox;
use crate::digest::Hasher;
use crate::error::{Error, Result};

/// Row-major `H x W x C` image, `C` in {3, 4}, sRGB values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    /// Build from raw samples; finite values are clamped into `[0, 1]`.
    pub fn new(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        if channels != 3 && channels != 4 {
            return Err(Error::Precondition(format!(
                "unsupported channel count {channels}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Precondition(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Precondition(format!(
                "expected {} samples for {width}x{height}x{channels}, got {}",
                width * height * channels,
                data.len()
            )));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, color: &[f64]) -> Self {
        let channels = color.len();
        assert!(channels == 3 || channels == 4, "color must be RGB or RGBA");
        let data = color
            .iter()
            .copied()
            .cycle()
            .take(width * height * channels)
            .collect();
        Self::new(width, height, channels, data).expect("valid dimensions")
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data).expect("valid dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn has_alpha(&self) -> bool {
        self.channels == 4
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v.clamp(0.0, 1.0);
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Alpha of a pixel; 1 for RGB images.
    pub fn alpha(&self, x: usize, y: usize) -> f64 {
        if self.has_alpha() {
            self.get(x, y, 3)
        } else {
            1.0
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// SHA-256 over dimensions and exact sample bits.
    pub fn checksum(&self) -> String {
        Hasher::new()
            .u64(self.width as u64)
            .u64(self.height as u64)
            .u64(self.channels as u64)
            .f64s(&self.data)
            .finish_hex()
    }

    /// Drop alpha by compositing over an opaque RGB color.
    pub fn flatten_over(&self, color: [f64; 3]) -> RasterImage {
        if !self.has_alpha() {
            return self.clone();
        }
        RasterImage::from_fn(self.width, self.height, 3, |x, y, c| {
            let a = self.get(x, y, 3);
            self.get(x, y, c) * a + color[c] * (1.0 - a)
        })
    }

    pub fn with_alpha(&self) -> RasterImage {
        if self.has_alpha() {
            return self.clone();
        }
        RasterImage::from_fn(self.width, self.height, 4, |x, y, c| {
            if c == 3 {
                1.0
            } else {
                self.get(x, y, c)
            }
        })
    }

    pub fn crop(&self, b: PixelBox) -> RasterImage {
        RasterImage::from_fn(b.width, b.height, self.channels, |x, y, c| {
            self.get(b.x + x, b.y + y, c)
        })
    }

    /// Bilinear resampling with pixel-center alignment and edge clamping.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> RasterImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        RasterImage::from_fn(width, height, self.channels, |x, y, c| {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
            let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
            let top = self.get(x0, y0, c) * (1.0 - tx) + self.get(x1, y0, c) * tx;
            let bottom = self.get(x0, y1, c) * (1.0 - tx) + self.get(x1, y1, c) * tx;
            top * (1.0 - ty) + bottom * ty
        })
    }

    /// Fit inside `width` x `height` preserving aspect ratio, centered, with
    /// transparent padding. Output is always RGBA.
    pub fn letterbox(&self, width: usize, height: usize) -> RasterImage {
        let (w, h, ox, oy) = letterbox_geometry(self.width, self.height, width, height);
        let scaled = self.resize_bilinear(w, h);
        let mut out = RasterImage::filled(width, height, &[0.0, 0.0, 0.0, 0.0]);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    out.set(ox + x, oy + y, c, scaled.get(x, y, c));
                }
                out.set(ox + x, oy + y, 3, scaled.alpha(x, y));
            }
        }
        out
    }

    pub fn load_png(path: &Path) -> Result<RasterImage> {
        let img = image::open(path).map_err(|e| Error::Asset {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if img.color().has_alpha() {
            let buf = img.to_rgba8();
            let (w, h) = buf.dimensions();
            let data = buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            RasterImage::new(w as usize, h as usize, 4, data)
        } else {
            let buf = img.to_rgb8();
            let (w, h) = buf.dimensions();
            let data = buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            RasterImage::new(w as usize, h as usize, 3, data)
        }
    }

    /// 8-bit quantization used for PNG export.
    pub fn to_bytes_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = if self.has_alpha() {
            image::ExtendedColorType::Rgba8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer(
            path,
            &self.to_bytes_u8(),
            self.width as u32,
            self.height as u32,
            color,
        )?;
        Ok(())
    }
}

/// Size and offset of an aspect-preserving fit of `src` inside `dst`.
pub fn letterbox_geometry(
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> (usize, usize, usize, usize) {
    let scale = (dst_w as f64 / src_w as f64).min(dst_h as f64 / src_h as f64);
    let w = ((src_w as f64 * scale).round() as usize).clamp(1, dst_w);
    let h = ((src_h as f64 * scale).round() as usize).clamp(1, dst_h);
    (w, h, (dst_w - w) / 2, (dst_h - h) / 2)
}

/// How an asset is mapped onto its target rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fit {
    Stretch,
    Letterbox,
}

fn is_svg(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("svg"))
}

/// Load a PNG or SVG asset at exactly `width` x `height`.
///
/// SVGs are rasterized at the target size with their own alpha. Rasters
/// without alpha are stretched to fill the rectangle; rasters with alpha
/// follow `fit`.
pub fn load_asset(path: &Path, width: usize, height: usize, fit: Fit) -> Result<RasterImage> {
    if is_svg(path) {
        return rasterize_svg(path, width, height, fit);
    }
    let img = RasterImage::load_png(path)?;
    match (fit, img.has_alpha()) {
        (Fit::Letterbox, true) => Ok(img.letterbox(width, height)),
        _ => Ok(img.resize_bilinear(width, height)),
    }
}

pub fn rasterize_svg(path: &Path, width: usize, height: usize, fit: Fit) -> Result<RasterImage> {
    let asset_err = |message: String| Error::Asset {
        path: path.to_path_buf(),
        message,
    };
    let bytes = std::fs::read(path).map_err(|e| asset_err(e.to_string()))?;
    let tree = resvg::usvg::Tree::from_data(&bytes, &resvg::usvg::Options::default())
        .map_err(|e| asset_err(e.to_string()))?;
    let size = tree.size();
    let (sw, sh) = (size.width() as f64, size.height() as f64);
    let transform = match fit {
        Fit::Stretch => resvg::tiny_skia::Transform::from_scale(
            (width as f64 / sw) as f32,
            (height as f64 / sh) as f32,
        ),
        Fit::Letterbox => {
            let s = (width as f64 / sw).min(height as f64 / sh);
            let tx = (width as f64 - sw * s) / 2.0;
            let ty = (height as f64 - sh * s) / 2.0;
            resvg::tiny_skia::Transform::from_row(
                s as f32, 0.0, 0.0, s as f32, tx as f32, ty as f32,
            )
        }
    };
    let mut pixmap = resvg::tiny_skia::Pixmap::new(width as u32, height as u32)
        .ok_or_else(|| asset_err(format!("cannot allocate {width}x{height} pixmap")))?;
    resvg::render(&tree, transform, &mut pixmap.as_mut());
    let mut data = Vec::with_capacity(width * height * 4);
    for px in pixmap.pixels() {
        let c = px.demultiply();
        data.extend([c.red(), c.green(), c.blue(), c.alpha()].map(|v| v as f64 / 255.0));
    }
    RasterImage::new(width, height, 4, data)
}
