use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};

/// Signed feature hashing of unigrams (and optionally bigrams), L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub bigrams: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            dim: 64,
            bigrams: true,
        }
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn hash_feature(parts: &[&str]) -> u64 {
    let mut h = FnvHasher::default();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.write_u8(0x1f);
        }
        h.write(p.as_bytes());
    }
    h.finish()
}

fn accumulate(v: &mut [f64], h: u64) {
    let bucket = (h % v.len() as u64) as usize;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    v[bucket] += sign;
}

pub fn embed_text(text: &str, cfg: &FeaturizerConfig) -> Result<Vec<f64>> {
    if cfg.dim == 0 {
        return Err(LensError::Usage(
            "featurizer dimension must be positive".into(),
        ));
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(LensError::Usage("cannot featurize empty text".into()));
    }
    let mut v = vec![0.0; cfg.dim];
    for t in &tokens {
        accumulate(&mut v, hash_feature(&[t]));
    }
    if cfg.bigrams {
        for pair in tokens.windows(2) {
            accumulate(&mut v, hash_feature(&[&pair[0], &pair[1]]));
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_item_bank;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn identical_texts_identical_vectors() {
        let cfg = FeaturizerConfig::default();
        assert_eq!(
            embed_text("Find the mean.", &cfg).unwrap(),
            embed_text("Find the mean.", &cfg).unwrap()
        );
        assert_eq!(
            embed_text("FIND the mean", &cfg).unwrap(),
            embed_text("find, the MEAN!", &cfg).unwrap()
        );
    }

    #[test]
    fn single_token_is_a_signed_basis_vector() {
        let v = embed_text("fraction", &FeaturizerConfig::default()).unwrap();
        let nonzero: Vec<f64> = v.iter().copied().filter(|x| *x != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].abs(), 1.0);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(
            embed_text("  ?! ", &FeaturizerConfig::default()),
            Err(LensError::Usage(_))
        ));
    }

    #[test]
    fn word_order_matters_only_through_bigrams() {
        let uni = FeaturizerConfig {
            dim: 64,
            bigrams: false,
        };
        assert_eq!(
            embed_text("solve the linear equation", &uni).unwrap(),
            embed_text("equation linear the solve", &uni).unwrap()
        );
        let bi = FeaturizerConfig::default();
        assert_ne!(
            embed_text("solve the linear equation", &bi).unwrap(),
            embed_text("equation linear the solve", &bi).unwrap()
        );
    }

    #[test]
    fn same_skill_items_are_closer_than_cross_skill() {
        let items = generate_item_bank(5, 40, 21).unwrap();
        let cfg = FeaturizerConfig::default();
        let vecs: Vec<Vec<f64>> = items
            .iter()
            .map(|i| embed_text(&i.text, &cfg).unwrap())
            .collect();
        let (mut same, mut n_same, mut cross, mut n_cross) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..items.len() {
            for j in i + 1..items.len() {
                let c = cosine(&vecs[i], &vecs[j]);
                if items[i].skill_id == items[j].skill_id {
                    same += c;
                    n_same += 1;
                } else {
                    cross += c;
                    n_cross += 1;
                }
            }
        }
        let gap = same / n_same as f64 - cross / n_cross as f64;
        assert!(gap > 0.05, "gap {gap}");
    }
}
