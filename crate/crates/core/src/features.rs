//! Text normalization and signed feature hashing over character and word
//! n-grams.
//!
//! Every gram is hashed with 64-bit FNV-1a (offset basis
//! `0xcbf29ce484222325`, prime `0x100000001b3`) over the bytes
//! `kind || 0x1f || utf8(gram)`, where `kind` is `b'c'` for character grams
//! and `b'w'` for word grams. The bucket is the low `log2(dims)` bits of the
//! hash and, with signed hashing, bit 63 selects the sign (set = negative).
//! Vectors are therefore bit-reproducible across runs and platforms.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const MIN_DIMS: usize = 1 << 10;

/// Lowercase, collapse whitespace runs to a single space, trim. Nothing else
/// is removed.
pub fn normalize_text(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub dims: usize,
    pub char_ngrams: RangeInclusive<usize>,
    pub word_ngrams: RangeInclusive<usize>,
    pub signed_hashing: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            dims: 1 << 18,
            char_ngrams: 2..=5,
            word_ngrams: 1..=2,
            signed_hashing: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.dims.is_power_of_two() || self.dims < MIN_DIMS {
            return Err(Error::Config(format!(
                "dims must be a power of two >= {MIN_DIMS}, got {}",
                self.dims
            )));
        }
        for (name, r) in [("char_ngrams", &self.char_ngrams), ("word_ngrams", &self.word_ngrams)] {
            if r.is_empty() || *r.start() == 0 {
                return Err(Error::Config(format!("{name} range {r:?} must be non-empty and start at 1 or more")));
            }
        }
        Ok(())
    }
}

/// Sparse vector with strictly ascending indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dims: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn empty(dims: usize) -> Self {
        SparseVector {
            dims,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Build from unsorted `(index, value)` pairs, summing repeats and
    /// dropping exact zeros.
    pub fn from_pairs(dims: usize, pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            if i as usize >= dims {
                return Err(Error::InvalidArgument(format!("index {i} outside dims {dims}")));
            }
            *acc.entry(i).or_insert(0.0) += v;
        }
        let (indices, values) = acc.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        Ok(SparseVector {
            dims,
            indices,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sparse-sparse dot product by merging the sorted index lists.
    pub fn dot(&self, other: &SparseVector) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                actual: other.dims,
            });
        }
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(acc)
    }
}

fn fnv1a(kind: u8, gram: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in [kind, 0x1f].iter().chain(gram.as_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Stable hash of a character (`kind = b'c'`) or word (`kind = b'w'`) gram.
pub fn gram_hash(kind: u8, gram: &str) -> u64 {
    fnv1a(kind, gram)
}

/// Enumerate every character and word n-gram of an already-normalized text.
pub fn grams(text: &str, cfg: &FeatureConfig) -> Vec<(u8, String)> {
    let mut out = Vec::new();
    if text.is_empty() {
        return out;
    }
    let chars: Vec<char> = text.chars().collect();
    for n in cfg.char_ngrams.clone() {
        if n > chars.len() {
            break;
        }
        for w in chars.windows(n) {
            out.push((b'c', w.iter().collect()));
        }
    }
    let words: Vec<&str> = text.split(' ').filter(|w| !w.is_empty()).collect();
    for n in cfg.word_ngrams.clone() {
        if n > words.len() {
            break;
        }
        for w in words.windows(n) {
            out.push((b'w', w.join(" ")));
        }
    }
    out
}

/// Hash n-grams of `text` into a signed, L2-normalized sparse vector.
pub fn extract_features(text: &str, cfg: &FeatureConfig) -> SparseVector {
    let mask = (cfg.dims - 1) as u64;
    let pairs = grams(text, cfg).into_iter().map(|(kind, g)| {
        let h = fnv1a(kind, &g);
        let sign = if cfg.signed_hashing && (h >> 63) == 1 { -1.0 } else { 1.0 };
        ((h & mask) as u32, sign)
    });
    let mut v = SparseVector::from_pairs(cfg.dims, pairs).expect("masked index within dims");
    let norm = v.norm();
    if norm > 0.0 {
        for x in &mut v.values {
            *x /= norm;
        }
    }
    v
}

/// Normalize then featurize a batch of raw texts.
pub fn featurize_all<S: AsRef<str>>(texts: &[S], cfg: &FeatureConfig) -> Vec<SparseVector> {
    texts
        .iter()
        .map(|t| extract_features(&normalize_text(t.as_ref()), cfg))
        .collect()
}

/// Cosine similarity; 0 when either vector is empty.
pub fn cosine_similarity(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_cfg() -> FeatureConfig {
        FeatureConfig {
            dims: 1 << 12,
            ..FeatureConfig::default()
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_text("  NOOB   team "), "noob team");
        assert_eq!(normalize_text("gg"), "gg");
        assert_eq!(normalize_text("A\tB\n\nC"), "a b c");
        assert_eq!(normalize_text("wtf?!"), "wtf?!");
    }

    #[test]
    fn fnv_reference_values() {
        // Plain FNV-1a 64 of "a" is 0xaf63dc4c8601ec8c; with our two-byte
        // prefix the value is fixed by construction and must never change.
        let mut h = FNV_OFFSET;
        h ^= b'a' as u64;
        h = h.wrapping_mul(FNV_PRIME);
        assert_eq!(h, 0xaf63_dc4c_8601_ec8c);
        assert_eq!(gram_hash(b'w', "gg"), gram_hash(b'w', "gg"));
        assert_ne!(gram_hash(b'w', "gg"), gram_hash(b'c', "gg"));
    }

    #[test]
    fn empty_text_is_empty_vector() {
        assert!(extract_features("", &small_cfg()).is_empty());
    }

    #[test]
    fn unsigned_hashing_has_positive_values() {
        let cfg = FeatureConfig {
            signed_hashing: false,
            ..small_cfg()
        };
        let v = extract_features("noob team push", &cfg);
        assert!(v.values.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(FeatureConfig::default().validate().is_ok());
        let bad = FeatureConfig {
            dims: 1000,
            ..FeatureConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FeatureConfig {
            dims: 512,
            ..FeatureConfig::default()
        };
        assert!(bad.validate().is_err());
        #[allow(clippy::reversed_empty_ranges)]
        let bad = FeatureConfig {
            char_ngrams: 5..=2,
            ..FeatureConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cosine_basics() {
        let cfg = small_cfg();
        let v = extract_features("gg wp", &cfg);
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);

        let a = SparseVector::from_pairs(16, [(1, 1.0), (3, 2.0)]).unwrap();
        let b = SparseVector::from_pairs(16, [(2, 1.0), (4, 2.0)]).unwrap();
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&a, &SparseVector::empty(16)).unwrap(), 0.0);

        let c = SparseVector::empty(32);
        assert!(matches!(
            cosine_similarity(&a, &c),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn dense(v: &SparseVector) -> Vec<f64> {
        let mut d = vec![0.0; v.dims];
        for (i, x) in v.iter() {
            d[i] = x;
        }
        d
    }

    fn dense_cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn nonempty_text_has_unit_norm(s in "[a-z!?]{1,8}( [a-z0-9]{1,8}){0,6}") {
            let v = extract_features(&normalize_text(&s), &FeatureConfig::default());
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            let strictly_ascending = v.indices.windows(2).all(|w| w[0] < w[1]);
            prop_assert!(strictly_ascending);
            prop_assert!(v.nnz() <= grams(&normalize_text(&s), &FeatureConfig::default()).len());
        }

        #[test]
        fn featurization_is_deterministic(s in "[a-z ]{0,30}") {
            let cfg = small_cfg();
            prop_assert_eq!(extract_features(&s, &cfg), extract_features(&s, &cfg));
        }

        #[test]
        fn cosine_matches_dense_oracle(a in "[a-e]{1,6}( [a-e]{1,6}){0,4}", b in "[a-e]{1,6}( [a-e]{1,6}){0,4}") {
            let cfg = FeatureConfig { dims: 1 << 10, ..FeatureConfig::default() };
            let va = extract_features(&a, &cfg);
            let vb = extract_features(&b, &cfg);
            let got = cosine_similarity(&va, &vb).unwrap();
            let want = dense_cosine(&dense(&va), &dense(&vb));
            prop_assert!((got - want).abs() < 1e-12, "{} vs {}", got, want);
        }
    }
}
