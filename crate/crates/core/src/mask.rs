//! Foreground/background masks and naive alpha-over compositing.

use std::path::Path;

use crate::design::{BoundingBox, PixelBox};
use crate::error::{Error, Result};
use crate::raster::RasterImage;

pub const DEFAULT_ALPHA_THRESHOLD: f64 = 0.5;

/// `{0,1}` grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    cells: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![1; width * height],
        }
    }

    /// From rows of 0/1 values; any nonzero entry counts as 1.
    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged mask rows");
        let cells = rows.iter().flatten().map(|&v| u8::from(v != 0)).collect();
        Self {
            width,
            height,
            cells,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                m.cells[y * width + x] = u8::from(f(x, y));
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x] == 1
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.cells[y * self.width + x] = u8::from(on);
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.cells.chunks(self.width).map(<[u8]>::to_vec).collect()
    }

    /// Single-channel PNG, 0 or 255.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.cells.iter().map(|&c| c * 255).collect();
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )?;
        Ok(())
    }
}

/// Cell is 1 iff alpha > `threshold`.
pub fn mask_from_alpha(image: &RasterImage, threshold: f64) -> Result<BinaryMask> {
    if !image.has_alpha() {
        return Err(Error::Precondition(
            "image has no alpha channel; use mask_from_bbox for opaque assets".into(),
        ));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Precondition(format!(
            "alpha threshold {threshold} outside [0, 1]"
        )));
    }
    Ok(BinaryMask::from_fn(
        image.width(),
        image.height(),
        |x, y| image.get(x, y, 3) > threshold,
    ))
}

/// Ones on the pixel box of `bbox` in a `height` x `width` grid.
pub fn mask_from_bbox(bbox: &BoundingBox, height: usize, width: usize) -> BinaryMask {
    let pb = bbox.pixel_box(width, height);
    BinaryMask::from_fn(width, height, |x, y| pb.contains(x, y))
}

pub fn complement(mask: &BinaryMask) -> BinaryMask {
    BinaryMask {
        width: mask.width,
        height: mask.height,
        cells: mask.cells.iter().map(|&c| 1 - c).collect(),
    }
}

/// Max-pool to `h_lat` x `w_lat`. Each output cell pools every input cell it
/// overlaps, so non-integer ratios are handled.
pub fn downsample_to_latent(mask: &BinaryMask, h_lat: usize, w_lat: usize) -> Result<BinaryMask> {
    if h_lat == 0 || w_lat == 0 || h_lat > mask.height || w_lat > mask.width {
        return Err(Error::Precondition(format!(
            "cannot pool {}x{} mask to {w_lat}x{h_lat}",
            mask.width, mask.height
        )));
    }
    let span = |o: usize, n_out: usize, n_in: usize| {
        let start = o * n_in / n_out;
        let end = ((o + 1) * n_in).div_ceil(n_out);
        start..end
    };
    Ok(BinaryMask::from_fn(w_lat, h_lat, |ox, oy| {
        span(oy, h_lat, mask.height).any(|y| span(ox, w_lat, mask.width).any(|x| mask.get(x, y)))
    }))
}

/// Place a box-sized mask at `pb` inside a `width` x `height` frame.
pub fn place_mask(local: &BinaryMask, pb: PixelBox, width: usize, height: usize) -> BinaryMask {
    BinaryMask::from_fn(width, height, |x, y| {
        pb.contains(x, y) && local.get(x - pb.x, y - pb.y)
    })
}

/// Alpha-over of `foreground` onto `background` inside the pixel box of
/// `bbox`. Pixels outside the box are copied bit-for-bit.
pub fn naive_composite(
    background: &RasterImage,
    foreground: &RasterImage,
    bbox: &BoundingBox,
) -> RasterImage {
    let pb = bbox.pixel_box(background.width(), background.height());
    let fg;
    let fg = if foreground.width() == pb.width && foreground.height() == pb.height {
        foreground
    } else {
        fg = foreground.resize_bilinear(pb.width, pb.height);
        &fg
    };
    let mut out = background.clone();
    for y in 0..pb.height {
        for x in 0..pb.width {
            let a = fg.alpha(x, y);
            let (cx, cy) = (pb.x + x, pb.y + y);
            for c in 0..3 {
                let v = fg.get(x, y, c) * a + background.get(cx, cy, c) * (1.0 - a);
                out.set(cx, cy, c, v);
            }
            if background.has_alpha() {
                let ba = background.get(cx, cy, 3);
                out.set(cx, cy, 3, a + ba * (1.0 - a));
            }
        }
    }
    out
}
