use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dense embedding produced by an embedder backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        EmbeddingVector(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|v| f64::from(*v) * f64::from(*v))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f32>> for EmbeddingVector {
    fn from(values: Vec<f32>) -> Self {
        EmbeddingVector(values)
    }
}

/// Raw cosine similarity in `[-1, 1]`, accumulated in f64.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(Error::invalid(format!(
            "embedding dimension mismatch: {} vs {}",
            a.dimension(),
            b.dimension()
        )));
    }
    if a.dimension() == 0 {
        return Err(Error::invalid("empty embedding"));
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.values().iter().zip(b.values()) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateEmbedding(
            "cannot score an all-zeros vector".into(),
        ));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Token stream seen by the stub embedder: whitespace split, lowercased,
/// with leading and trailing non-alphanumerics removed.
pub fn stub_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().filter_map(|raw| {
        let tok = raw
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        (!tok.is_empty()).then_some(tok)
    })
}

/// Seeded signed-bucket hash embedding, L2-normalized.
///
/// Each token hashes (with the seed) to one of `dimension` buckets and a
/// sign; bucket contributions are summed. Text without tokens yields the
/// zero vector, which scoring rejects.
pub fn stub_text_embedding(text: &str, seed: u64, dimension: usize) -> EmbeddingVector {
    let mut acc = vec![0.0f64; dimension];
    for tok in stub_tokens(text) {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(tok.as_bytes());
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        let bucket = (u64::from_le_bytes(head) % dimension as u64) as usize;
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut acc {
            *v /= norm;
        }
    }
    EmbeddingVector(acc.into_iter().map(|v| v as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_fold_case_and_strip_punctuation() {
        let toks: Vec<_> = stub_tokens("A map, of the US. ...").collect();
        assert_eq!(toks, ["a", "map", "of", "the", "us"]);
    }

    #[test]
    fn stub_embedding_is_unit_length() {
        let v = stub_text_embedding("flood waters rose", 7, 64);
        assert_eq!(v.dimension(), 64);
        assert!((v.norm() - 1.0).abs() < 1e-6);
        assert!(stub_text_embedding("...", 7, 64).is_zero());
    }

    #[test]
    fn distinct_words_give_distinct_vectors() {
        assert_ne!(
            stub_text_embedding("flood", 7, 64),
            stub_text_embedding("drought", 7, 64)
        );
        assert_ne!(
            stub_text_embedding("flood", 7, 64),
            stub_text_embedding("flood", 8, 64)
        );
    }

    #[test]
    fn cosine_rejects_mismatch_and_zero() {
        let a = EmbeddingVector::new(vec![1.0, 0.0]);
        let b = EmbeddingVector::new(vec![1.0, 0.0, 0.0]);
        assert!(matches!(cosine_similarity(&a, &b), Err(Error::InvalidInput(_))));
        let z = EmbeddingVector::new(vec![0.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&a, &z),
            Err(Error::DegenerateEmbedding(_))
        ));
    }
}
