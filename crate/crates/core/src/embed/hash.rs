//! Deterministic offline embeddings.
//!
//! The seed is the 64-bit FNV-1a hash of the UTF-8 text. Values come from a
//! splitmix64 stream turned into standard normals with the Box–Muller
//! transform (both branches used), then L2-normalised. Everything here is
//! integer arithmetic plus `ln`/`sqrt`/`sin`/`cos`, so vectors are stable
//! across runs and platforms.

use super::{EmbedError, EmbeddingProvider};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Counter-based generator: the state advances by a fixed odd constant and
/// each output is a bijective mix of the state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Deterministic unit vector of dimension `d` for `text`.
pub fn test_embed(text: &str, d: usize) -> Vec<f64> {
    let mut rng = SplitMix64::new(fnv1a64(text.as_bytes()));
    let mut v = Vec::with_capacity(d + 1);
    while v.len() < d {
        let u1 = 1.0 - rng.next_f64();
        let u2 = rng.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        v.push(r * theta.cos());
        v.push(r * theta.sin());
    }
    v.truncate(d);
    normalize(&mut v);
    v
}

pub(crate) fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Splits on non-alphanumerics and lower-to-upper case changes, lowercased.
/// `IncreaseSafety(New York)` → `increase safety new york`.
pub fn word_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if c.is_uppercase() && prev_lower && !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_lower = c.is_lowercase() || c.is_numeric();
            cur.extend(c.to_lowercase());
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_lower = false;
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// One [`test_embed`] vector per distinct text.
#[derive(Debug, Clone)]
pub struct HashProvider {
    dimension: usize,
}

impl HashProvider {
    pub fn new(dimension: usize) -> Self {
        Self { dimension }
    }
}

impl EmbeddingProvider for HashProvider {
    fn name(&self) -> &str {
        "hash"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        super::check_batch(texts)?;
        Ok(texts.iter().map(|t| test_embed(t, self.dimension)).collect())
    }
}

/// Bag of word vectors: the normalised sum of [`test_embed`] over
/// [`word_tokens`]. Texts sharing words land close together, which gives the
/// offline pipeline meaningful clusters.
#[derive(Debug, Clone)]
pub struct TokenHashProvider {
    dimension: usize,
}

impl TokenHashProvider {
    pub fn new(dimension: usize) -> Self {
        Self { dimension }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let tokens = word_tokens(text);
        if tokens.is_empty() {
            return test_embed(text, self.dimension);
        }
        let mut acc = vec![0.0; self.dimension];
        for t in &tokens {
            for (a, x) in acc.iter_mut().zip(test_embed(t, self.dimension)) {
                *a += x;
            }
        }
        normalize(&mut acc);
        if acc.iter().all(|x| *x == 0.0) {
            return test_embed(text, self.dimension);
        }
        acc
    }
}

impl EmbeddingProvider for TokenHashProvider {
    fn name(&self) -> &str {
        "token-hash"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        super::check_batch(texts)?;
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::cosine;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs for seed 1234567.
        let mut r = SplitMix64::new(1234567);
        assert_eq!(r.next_u64(), 6457827717110365317);
        assert_eq!(r.next_u64(), 3203168211198807973);
        assert_eq!(r.next_u64(), 9817491932198370423);
    }

    #[test]
    fn same_text_same_vector() {
        assert_eq!(test_embed("x", 384), test_embed("x", 384));
    }

    #[test]
    fn distinct_texts_are_not_parallel() {
        let c = cosine(&test_embed("x", 384), &test_embed("y", 384)).unwrap();
        assert!(c > -1.0 && c < 1.0);
        assert!(c.abs() < 0.3);
    }

    #[test]
    fn unit_norm() {
        for t in ["x", "Reduce(Vaccines,Risk)", "a much longer piece of text"] {
            for d in [1, 7, 384] {
                let n = test_embed(t, d).iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn golden_prefix() {
        let v = test_embed("x", 4);
        let golden = GOLDEN_X4;
        for (a, b) in v.iter().zip(golden) {
            assert!((a - b).abs() < 1e-12, "{v:?}");
        }
    }

    // Computed with an independent Python transcription of the algorithm.
    const GOLDEN_X4: [f64; 4] = [
        0.15206782229853172,
        -0.3947156958247537,
        0.4270692644290554,
        -0.7991787911794134,
    ];

    #[test]
    fn tokens_split_camel_case() {
        assert_eq!(word_tokens("IncreaseSafety(New York, x2)"), vec!["increase", "safety", "new", "york", "x2"]);
        assert_eq!(word_tokens("¬Safe(Policy)"), vec!["safe", "policy"]);
        assert!(word_tokens("→ ∧").is_empty());
    }

    #[test]
    fn token_provider_groups_shared_words() {
        let p = TokenHashProvider::new(128);
        let a = p.embed_one("IncreaseSafety(Masks)");
        let b = p.embed_one("BoostSafety(Vaccines)");
        let c = p.embed_one("CauseHarm(Masks)");
        let ab = cosine(&a, &b).unwrap();
        let bc = cosine(&b, &c).unwrap();
        assert!(ab > bc + 0.1, "ab={ab} bc={bc}");
    }
}
