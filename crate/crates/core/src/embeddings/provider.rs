use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{embed_text, EmbeddingTable, FeaturizerConfig};
use crate::data::Item;
use crate::error::{LensError, Result};
use crate::model::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderMode {
    IdOneHot,
    FileVectors,
    TextFeatures,
}

/// Where item vectors come from. Serialized into model checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EmbeddingSource {
    /// Ordered vocabulary of every item id the model may see.
    IdOneHot {
        vocab: Vec<u32>,
    },
    FileVectors {
        table: EmbeddingTable,
    },
    TextFeatures {
        featurizer: FeaturizerConfig,
    },
}

/// Set of item ids a provider has been asked to embed.
#[derive(Debug, Clone, Default)]
pub struct AccessLog(Arc<Mutex<BTreeSet<u32>>>);

impl AccessLog {
    pub fn items(&self) -> BTreeSet<u32> {
        self.0.lock().expect("access log poisoned").clone()
    }

    pub fn clear(&self) {
        self.0.lock().expect("access log poisoned").clear();
    }

    fn record(&self, item_id: u32) {
        self.0.lock().expect("access log poisoned").insert(item_id);
    }
}

/// Deterministic item → vector map; immutable after construction.
#[derive(Debug, Clone)]
pub struct EmbeddingProvider {
    source: EmbeddingSource,
    vocab_index: HashMap<u32, usize>,
    log: Option<AccessLog>,
}

/// One-hot code of `item` over `vocab`.
pub fn embed_id(item: &Item, vocab: &[u32]) -> Result<Vec<f64>> {
    let index = vocab
        .iter()
        .position(|&id| id == item.item_id)
        .ok_or(LensError::Lookup(item.item_id))?;
    let mut v = vec![0.0; vocab.len()];
    v[index] = 1.0;
    Ok(v)
}

/// Builds the provider for a model kind, checking that the source suits the
/// kind and covers every item in `items`.
pub fn provider_for(
    kind: ModelKind,
    source: EmbeddingSource,
    items: &[Item],
) -> Result<EmbeddingProvider> {
    match (kind, &source) {
        (ModelKind::Lens, EmbeddingSource::IdOneHot { .. }) => {}
        (
            ModelKind::TextLens,
            EmbeddingSource::FileVectors { .. } | EmbeddingSource::TextFeatures { .. },
        ) => {}
        (kind, source) => {
            return Err(LensError::Usage(format!(
                "{kind} cannot use a {:?} embedding source",
                mode_of(source)
            )))
        }
    }
    let provider = EmbeddingProvider::new(source)?;
    for item in items {
        provider.check_covers(item)?;
    }
    Ok(provider)
}

fn mode_of(source: &EmbeddingSource) -> ProviderMode {
    match source {
        EmbeddingSource::IdOneHot { .. } => ProviderMode::IdOneHot,
        EmbeddingSource::FileVectors { .. } => ProviderMode::FileVectors,
        EmbeddingSource::TextFeatures { .. } => ProviderMode::TextFeatures,
    }
}

impl EmbeddingProvider {
    pub fn new(source: EmbeddingSource) -> Result<Self> {
        let mut vocab_index = HashMap::new();
        match &source {
            EmbeddingSource::IdOneHot { vocab } => {
                if vocab.is_empty() {
                    return Err(LensError::Usage("one-hot vocabulary is empty".into()));
                }
                for (i, &id) in vocab.iter().enumerate() {
                    if vocab_index.insert(id, i).is_some() {
                        return Err(LensError::Data(format!("vocabulary lists item {id} twice")));
                    }
                }
            }
            EmbeddingSource::TextFeatures { featurizer } if featurizer.dim == 0 => {
                return Err(LensError::Usage(
                    "featurizer dimension must be positive".into(),
                ));
            }
            _ => {}
        }
        Ok(EmbeddingProvider {
            source,
            vocab_index,
            log: None,
        })
    }

    /// One-hot provider over every item (seen and unseen), in id order.
    pub fn one_hot_over(items: &[Item]) -> Result<Self> {
        let mut vocab: Vec<u32> = items.iter().map(|i| i.item_id).collect();
        vocab.sort_unstable();
        EmbeddingProvider::new(EmbeddingSource::IdOneHot { vocab })
    }

    /// Records every item id passed to [`EmbeddingProvider::embed`] from now on.
    pub fn with_access_log(mut self) -> (Self, AccessLog) {
        let log = AccessLog::default();
        self.log = Some(log.clone());
        (self, log)
    }

    pub fn source(&self) -> &EmbeddingSource {
        &self.source
    }

    pub fn mode(&self) -> ProviderMode {
        mode_of(&self.source)
    }

    pub fn dim(&self) -> usize {
        match &self.source {
            EmbeddingSource::IdOneHot { vocab } => vocab.len(),
            EmbeddingSource::FileVectors { table } => table.dim(),
            EmbeddingSource::TextFeatures { featurizer } => featurizer.dim,
        }
    }

    fn check_covers(&self, item: &Item) -> Result<()> {
        match &self.source {
            EmbeddingSource::IdOneHot { .. } if !self.vocab_index.contains_key(&item.item_id) => {
                Err(LensError::Lookup(item.item_id))
            }
            EmbeddingSource::FileVectors { table } if !table.contains(item.item_id) => {
                Err(LensError::Lookup(item.item_id))
            }
            EmbeddingSource::TextFeatures { .. } if item.text.trim().is_empty() => Err(
                LensError::Usage(format!("item {} has empty text", item.item_id)),
            ),
            _ => Ok(()),
        }
    }

    pub fn embed(&self, item: &Item) -> Result<Vec<f64>> {
        if let Some(log) = &self.log {
            log.record(item.item_id);
        }
        match &self.source {
            EmbeddingSource::IdOneHot { vocab } => {
                let index = *self
                    .vocab_index
                    .get(&item.item_id)
                    .ok_or(LensError::Lookup(item.item_id))?;
                let mut v = vec![0.0; vocab.len()];
                v[index] = 1.0;
                Ok(v)
            }
            EmbeddingSource::FileVectors { table } => Ok(table.get(item.item_id)?.to_vec()),
            EmbeddingSource::TextFeatures { featurizer } => embed_text(&item.text, featurizer),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_item_bank, Difficulty};
    use std::collections::BTreeMap;

    fn item(id: u32, text: &str) -> Item {
        Item {
            item_id: id,
            skill_id: 0,
            subskill_id: 0,
            difficulty: Difficulty::Easy,
            text: text.into(),
        }
    }

    #[test]
    fn one_hot_examples() {
        assert_eq!(embed_id(&item(7, "a"), &[3, 7]).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(
            embed_id(&item(5, "a"), &[3, 7]),
            Err(LensError::Lookup(5))
        ));
        let a = embed_id(&item(3, "a"), &[3, 7]).unwrap();
        let b = embed_id(&item(7, "a"), &[3, 7]).unwrap();
        assert_eq!(a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>(), 0.0);
    }

    #[test]
    fn lens_provider_over_bank_has_vocab_width() {
        let items = generate_item_bank(5, 40, 1).unwrap();
        let p = provider_for(
            ModelKind::Lens,
            EmbeddingSource::IdOneHot {
                vocab: items.iter().map(|i| i.item_id).collect(),
            },
            &items,
        )
        .unwrap();
        assert_eq!(p.dim(), 200);
        assert_eq!(p.embed(&items[17]).unwrap().len(), 200);
        assert_eq!(p.embed(&items[17]).unwrap(), p.embed(&items[17]).unwrap());
    }

    #[test]
    fn text_provider_embeds_unknown_items() {
        let items = generate_item_bank(1, 3, 1).unwrap();
        let p = provider_for(
            ModelKind::TextLens,
            EmbeddingSource::TextFeatures {
                featurizer: FeaturizerConfig::default(),
            },
            &items,
        )
        .unwrap();
        let fresh = item(999, "A brand new question about ratio");
        assert_eq!(p.embed(&fresh).unwrap().len(), 64);
    }

    #[test]
    fn inconsistent_pairings_are_usage_errors() {
        let items = generate_item_bank(1, 3, 1).unwrap();
        let text = EmbeddingSource::TextFeatures {
            featurizer: FeaturizerConfig::default(),
        };
        assert!(matches!(
            provider_for(ModelKind::Lens, text, &items),
            Err(LensError::Usage(_))
        ));
        let ids = EmbeddingSource::IdOneHot {
            vocab: vec![0, 1, 2],
        };
        assert!(matches!(
            provider_for(ModelKind::TextLens, ids, &items),
            Err(LensError::Usage(_))
        ));
    }

    #[test]
    fn table_must_cover_evaluation_items() {
        let items = generate_item_bank(1, 3, 1).unwrap();
        let mut rows = BTreeMap::new();
        rows.insert(items[0].item_id, vec![1.0, 0.0]);
        rows.insert(items[1].item_id, vec![0.0, 1.0]);
        let source = EmbeddingSource::FileVectors {
            table: EmbeddingTable::new(rows).unwrap(),
        };
        let err = provider_for(ModelKind::TextLens, source, &items).unwrap_err();
        assert!(matches!(err, LensError::Lookup(id) if id == items[2].item_id));
    }

    #[test]
    fn access_log_records_embedded_items() {
        let items = generate_item_bank(1, 6, 1).unwrap();
        let (p, log) = EmbeddingProvider::one_hot_over(&items)
            .unwrap()
            .with_access_log();
        p.embed(&items[4]).unwrap();
        p.embed(&items[1]).unwrap();
        assert_eq!(
            log.items().into_iter().collect::<Vec<_>>(),
            vec![items[1].item_id, items[4].item_id]
        );
    }
}
