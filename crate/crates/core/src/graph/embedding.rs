//! Deterministic pseudo-embeddings.
//!
//! No encoder model is involved: an embedding is a keyed SHA-256 expansion
//! mapped into `[-1, 1]^d`. Text is embedded token by token and mean-pooled
//! over fixed-size chunks, so texts sharing tokens have correlated vectors.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::AttrValue;

pub const DEFAULT_DIM: usize = 16;

/// Tokens per chunk when pooling text embeddings.
pub const CHUNK_TOKENS: usize = 8;

const SALT: &[u8] = b"evograph/pseudo-embedding/v1";

fn expand(key: &[u8], dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    let mut block = 0u32;
    while out.len() < dim {
        let digest = Sha256::new().chain_update(SALT).chain_update(key).chain_update(block.to_le_bytes()).finalize();
        for word in digest.chunks_exact(8) {
            if out.len() == dim {
                break;
            }
            let raw = u64::from_le_bytes(word.try_into().expect("8-byte chunk"));
            // 53 high bits -> [0, 1) -> [-1, 1)
            let unit = (raw >> 11) as f64 / (1u64 << 53) as f64;
            out.push(2.0 * unit - 1.0);
        }
        block += 1;
    }
    out
}

/// Embedding keyed on a node id and its attribute map.
pub fn pseudo_embedding(id: &str, attributes: &BTreeMap<String, AttrValue>, dim: usize) -> Vec<f64> {
    let mut key = Vec::with_capacity(64);
    key.extend_from_slice(id.as_bytes());
    key.push(0);
    for (k, v) in attributes {
        key.extend_from_slice(k.as_bytes());
        key.push(b'=');
        match v {
            AttrValue::Bool(b) => key.push(u8::from(*b)),
            AttrValue::Num(x) => key.extend_from_slice(&x.to_bits().to_le_bytes()),
            AttrValue::Text(s) => key.extend_from_slice(s.as_bytes()),
        }
        key.push(0);
    }
    expand(&key, dim)
}

pub fn token_embedding(token: &str, dim: usize) -> Vec<f64> {
    let mut key = b"tok:".to_vec();
    key.extend_from_slice(token.as_bytes());
    expand(&key, dim)
}

/// Mean of equally-weighted vectors; zero vector for an empty input.
pub fn mean_pool<I>(vectors: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        n += 1;
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc
}

/// Chunked, mean-pooled embedding of a token sequence.
pub fn text_embedding<S: AsRef<str>>(tokens: &[S], dim: usize) -> Vec<f64> {
    let chunks =
        tokens.chunks(CHUNK_TOKENS).map(|chunk| mean_pool(chunk.iter().map(|t| token_embedding(t.as_ref(), dim)), dim));
    mean_pool(chunks, dim)
}

/// Whitespace split with case folding.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_are_bounded_and_stable() {
        let attrs = BTreeMap::from([("quality".to_string(), AttrValue::Num(0.5))]);
        let a = pseudo_embedding("svc", &attrs, DEFAULT_DIM);
        assert_eq!(a.len(), DEFAULT_DIM);
        assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_eq!(a, pseudo_embedding("svc", &attrs, DEFAULT_DIM));
        assert_ne!(a, pseudo_embedding("svc2", &attrs, DEFAULT_DIM));
    }

    #[test]
    fn pooling_is_order_invariant_across_chunks() {
        let a: Vec<String> = (0..16).map(|i| format!("t{i}")).collect();
        let mut b = a[8..].to_vec();
        b.extend_from_slice(&a[..8]);
        let ea = text_embedding(&a, 8);
        let eb = text_embedding(&b, 8);
        for (x, y) in ea.iter().zip(&eb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_text_embeds_to_zero() {
        let empty: [&str; 0] = [];
        assert!(text_embedding(&empty, 4).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn tokenize_folds_case() {
        assert_eq!(tokenize("The  Cat\tsat"), vec!["the", "cat", "sat"]);
    }
}
