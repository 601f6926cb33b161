use serde::{Deserialize, Serialize};

use super::{
    generate_item_bank_with, sample_students, simulate_responses, split_items_seen_unseen,
    split_students, Dataset, DatasetSplit, IrtParams, ItemBankConfig,
};
use crate::error::Result;

/// Parameters of a simulated item bank and student population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_students: usize,
    pub bank: ItemBankConfig,
    pub irt: IrtParams,
}

impl Default for SyntheticConfig {
    /// 2,000 students answering 5 skills x 40 items.
    fn default() -> Self {
        SyntheticConfig {
            n_students: 2000,
            bank: ItemBankConfig::default(),
            irt: IrtParams::default(),
        }
    }
}

/// Generates items, proficiencies and every (student, item) response.
pub fn generate_dataset(cfg: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    let items = generate_item_bank_with(&cfg.bank, seed)?;
    let students = sample_students(cfg.n_students, cfg.bank.n_skills, seed)?;
    let responses = simulate_responses(&students, &items, cfg.irt, seed)?;
    Ok(Dataset::new(items, &responses)?.with_profiles(students))
}

/// 80/10/10 student split plus stratified seen/unseen item halves.
pub fn split_dataset(dataset: &Dataset, seed: u64) -> Result<DatasetSplit> {
    Ok(DatasetSplit {
        students: split_students(&dataset.student_ids(), (0.8, 0.1, 0.1), seed)?,
        items: split_items_seen_unseen(dataset.items(), seed)?,
    })
}
