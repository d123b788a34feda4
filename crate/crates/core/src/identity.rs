//! Identity-preservation metrics between input foregrounds and the matching
//! crops of composed outputs.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::RasterImage;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub embedder: String,
}

pub trait Embedder: Send + Sync {
    fn tag(&self) -> &str;
    fn embed(&self, image: &RasterImage) -> Result<EmbeddingVector>;
}

/// Bilinear downsample to 16x16 RGB, flatten, L2-normalize. An all-zero
/// image embeds to the zero vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceEmbedder;

pub const REFERENCE_SIDE: usize = 16;

impl Embedder for ReferenceEmbedder {
    fn tag(&self) -> &str {
        "reference-16x16-rgb"
    }

    fn embed(&self, image: &RasterImage) -> Result<EmbeddingVector> {
        let rgb = image.flatten_over([0.0; 3]);
        let small = rgb.resize_bilinear(REFERENCE_SIDE, REFERENCE_SIDE);
        let mut values = small.data().to_vec();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(EmbeddingVector {
            values,
            embedder: self.tag().to_owned(),
        })
    }
}

pub fn embed(image: &RasterImage, embedder: &dyn Embedder) -> Result<EmbeddingVector> {
    embedder.embed(image)
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Precondition(format!(
            "vector lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedInput(
            "cosine similarity of a zero vector".into(),
        ));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn manhattan(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairMetrics {
    pub cosine: f64,
    pub manhattan: f64,
    pub euclidean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub embedder: String,
    pub pairs: Vec<PairMetrics>,
    pub mean: PairMetrics,
}

pub fn pair_metrics(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<PairMetrics> {
    Ok(PairMetrics {
        cosine: cosine_similarity(&a.values, &b.values)?,
        manhattan: manhattan(&a.values, &b.values)?,
        euclidean: euclidean(&a.values, &b.values)?,
    })
}

/// Metrics for each `(foreground, composed crop)` pair plus their means.
pub fn evaluate_pairs(
    pairs: &[(RasterImage, RasterImage)],
    embedder: &dyn Embedder,
) -> Result<IdentityReport> {
    if pairs.is_empty() {
        return Err(Error::Precondition("no pairs to evaluate".into()));
    }
    let per_pair = pairs
        .iter()
        .map(|(fg, composed)| pair_metrics(&embedder.embed(fg)?, &embedder.embed(composed)?))
        .collect::<Result<Vec<_>>>()?;
    let n = per_pair.len() as f64;
    let mean = PairMetrics {
        cosine: per_pair.iter().map(|m| m.cosine).sum::<f64>() / n,
        manhattan: per_pair.iter().map(|m| m.manhattan).sum::<f64>() / n,
        euclidean: per_pair.iter().map(|m| m.euclidean).sum::<f64>() / n,
    };
    Ok(IdentityReport {
        embedder: embedder.tag().to_owned(),
        pairs: per_pair,
        mean,
    })
}

impl IdentityReport {
    /// Aligned text table: one row per pair and a final mean row.
    pub fn to_table(&self) -> String {
        let header = ["Pair", "Cos. Sim. ↑", "Manhattan ↓", "Euclidean ↓"];
        let mut rows: Vec<[String; 4]> = self
            .pairs
            .iter()
            .enumerate()
            .map(|(i, m)| {
                [
                    i.to_string(),
                    fmt(m.cosine),
                    fmt(m.manhattan),
                    fmt(m.euclidean),
                ]
            })
            .collect();
        rows.push([
            "mean".into(),
            fmt(self.mean.cosine),
            fmt(self.mean.manhattan),
            fmt(self.mean.euclidean),
        ]);
        let widths: Vec<usize> = (0..4)
            .map(|c| {
                rows.iter()
                    .map(|r| r[c].chars().count())
                    .chain([header[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = format!("embedder: {}\n", self.embedder);
        let line = |cells: [&str; 4], out: &mut String| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", padded.join(" | ").trim_end());
        };
        line(header, &mut out);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(out, "{}", rule.join("-+-"));
        for r in &rows {
            line([&r[0], &r[1], &r[2], &r[3]], &mut out);
        }
        out
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}
