//! Item representations: one-hot item ids (LENS) or text-derived vectors
//! (Text-LENS), behind one provider type used for both input and query items.

mod featurizer;
mod provider;
mod table;

pub use featurizer::{embed_text, tokenize, FeaturizerConfig};
pub use provider::{
    embed_id, provider_for, AccessLog, EmbeddingProvider, EmbeddingSource, ProviderMode,
};
pub use table::{load_embedding_table, save_embedding_table, EmbeddingTable};
