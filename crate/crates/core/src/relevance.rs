//! Per-token foreground/background relevance from cross-attention.
//!
//! For token `i` with aggregated map `CA[i]`:
//!
//! ```text
//! r_fg[i] = max(CA[i] * m_fg) / max(CA[i])
//! r_bg[i] = max(CA[i] * m_bg) / max(CA[i])
//! ```
//!
//! Tokens whose map is identically zero score 0 in both regions.

use serde::Serialize;

use crate::backend::{AttentionMap, AttentionStack};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelevanceScores {
    pub r_fg: Vec<f64>,
    pub r_bg: Vec<f64>,
}

/// Strictly increasing token indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(transparent)]
pub struct TokenIndexSet(Vec<usize>);

impl TokenIndexSet {
    /// Sorts and deduplicates; every index must be `< k`.
    pub fn new(mut indices: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(bad) = indices.iter().find(|&&i| i >= k) {
            return Err(Error::Contract(format!(
                "token index {bad} out of range for K={k}"
            )));
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn without(&self, other: &TokenIndexSet) -> TokenIndexSet {
        TokenIndexSet(
            self.0
                .iter()
                .copied()
                .filter(|&i| !other.contains(i))
                .collect(),
        )
    }
}

/// Elementwise mean over layers.
pub fn aggregate_attention(stack: &AttentionStack) -> Result<AttentionMap> {
    let layers = stack.layers();
    let first = layers
        .first()
        .ok_or_else(|| Error::Contract("cannot aggregate an empty attention stack".into()))?;
    let mut acc = vec![0.0; first.data.len()];
    for layer in layers {
        for (a, v) in acc.iter_mut().zip(&layer.data) {
            *a += v;
        }
    }
    let n = layers.len() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    AttentionMap::new(first.tokens, first.height, first.width, acc)
}

fn masked_max(map: &[f64], mask: &BinaryMask) -> f64 {
    map.iter()
        .zip(mask.cells())
        .map(|(v, &m)| v * m as f64)
        .fold(0.0, f64::max)
}

pub fn relevance(
    ca: &AttentionMap,
    m_fg: &BinaryMask,
    m_bg: &BinaryMask,
) -> Result<RelevanceScores> {
    for (name, m) in [("foreground", m_fg), ("background", m_bg)] {
        if m.height() != ca.height || m.width() != ca.width {
            return Err(Error::Contract(format!(
                "{name} mask is {}x{}, attention grid is {}x{}",
                m.width(),
                m.height(),
                ca.width,
                ca.height
            )));
        }
    }
    let mut r_fg = Vec::with_capacity(ca.tokens);
    let mut r_bg = Vec::with_capacity(ca.tokens);
    for i in 0..ca.tokens {
        let map = ca.token(i);
        let peak = map.iter().copied().fold(0.0, f64::max);
        if peak > 0.0 {
            r_fg.push(masked_max(map, m_fg) / peak);
            r_bg.push(masked_max(map, m_bg) / peak);
        } else {
            r_fg.push(0.0);
            r_bg.push(0.0);
        }
    }
    Ok(RelevanceScores { r_fg, r_bg })
}

/// Indices of the `n` largest scores, lowest index first among ties,
/// returned in ascending order.
pub fn select_top(scores: &[f64], n: usize) -> Result<TokenIndexSet> {
    if n > scores.len() {
        return Err(Error::Contract(format!(
            "cannot select {n} of {} tokens",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(n);
    order.sort_unstable();
    Ok(TokenIndexSet(order))
}
