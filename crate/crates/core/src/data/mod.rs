//! Item banks, simulated students and responses, dataset splits, and the
//! on-disk item/response formats.

mod dataset;
mod io;
mod irt;
mod item;
mod split;
mod synth;
pub mod textgen;

pub use dataset::Dataset;
pub use io::{
    ingest_items, ingest_responses, ingest_students, read_items, read_responses, write_items,
    write_responses, write_students,
};
pub use irt::{p_correct, sample_students, simulate_responses, IrtParams};
pub use item::{Difficulty, Item, ResponseRecord, StudentProfile};
pub use split::{split_items_seen_unseen, split_students, DatasetSplit, ItemSplit, StudentSplit};
pub use synth::{generate_dataset, split_dataset, SyntheticConfig};
pub use textgen::{
    generate_item_bank, generate_item_bank_with, shuffle_difficulty_text_link, ItemBankConfig,
};
