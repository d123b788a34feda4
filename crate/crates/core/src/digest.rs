//! Content digests and keyed counter-based mixing.
//!
//! Everything random in the mock backend is a pure function of
//! `(seed, operation tag, counter, input digest)`.

use sha2::{Digest, Sha256};

/// Incremental SHA-256 over canonical little-endian encodings.
#[derive(Clone, Default)]
pub struct Hasher(Sha256);

impl Hasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn f64s(&mut self, vals: &[f64]) -> &mut Self {
        self.0.update((vals.len() as u64).to_le_bytes());
        for v in vals {
            self.0.update(v.to_bits().to_le_bytes());
        }
        self
    }

    pub fn finish(&self) -> [u8; 32] {
        self.0.clone().finalize().into()
    }

    pub fn finish_hex(&self) -> String {
        hex::encode(self.finish())
    }

    pub fn finish_u64(&self) -> u64 {
        let d = self.finish();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit key for an operation name.
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01B3)
    })
}

/// Keyed counter-based stream: `key` selects the stream, `counter` the draw.
pub fn keyed(key: u64, counter: u64) -> u64 {
    mix64(key ^ mix64(counter.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Uniform draw in `[-1, 1)` from the keyed stream.
pub fn keyed_unit(key: u64, counter: u64) -> f64 {
    let bits = keyed(key, counter) >> 11;
    (bits as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

pub fn combine(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x2545_F491_4F6C_DD1Du64, |acc, &p| mix64(acc ^ p))
}
