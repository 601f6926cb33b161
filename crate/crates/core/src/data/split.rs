use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::{Difficulty, Item};
use crate::error::{LensError, Result};
use crate::rng::{stream, Stage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentSplit {
    pub train: Vec<u32>,
    pub validation: Vec<u32>,
    pub test: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemSplit {
    pub seen: BTreeSet<u32>,
    pub unseen: BTreeSet<u32>,
}

impl ItemSplit {
    pub fn is_seen(&self, item_id: u32) -> bool {
        self.seen.contains(&item_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub students: StudentSplit,
    pub items: ItemSplit,
}

/// Seeded shuffle-split of students. Train and validation sizes are rounded
/// from the ratios; the test split takes the rest.
pub fn split_students(
    student_ids: &[u32],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<StudentSplit> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| *r < 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(LensError::Usage(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let n = student_ids.len();
    let n_train = (tr * n as f64).round() as usize;
    let n_val = ((va * n as f64).round() as usize).min(n - n_train.min(n));
    let n_test = n.saturating_sub(n_train + n_val);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(LensError::Usage(format!(
            "{n} students give an empty split ({n_train}/{n_val}/{n_test})"
        )));
    }
    let mut ids = student_ids.to_vec();
    ids.sort_unstable();
    ids.shuffle(&mut stream(seed, Stage::StudentSplit, 0));
    let mut train = ids[..n_train].to_vec();
    let mut validation = ids[n_train..n_train + n_val].to_vec();
    let mut test = ids[n_train + n_val..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(StudentSplit {
        train,
        validation,
        test,
    })
}

/// Halves every (skill, difficulty) stratum into seen and unseen items.
///
/// Odd strata put their extra item alternately in the seen and the unseen
/// half (first odd stratum of a skill favours seen), so each skill's halves
/// differ by at most one item.
pub fn split_items_seen_unseen(items: &[Item], seed: u64) -> Result<ItemSplit> {
    let mut strata: BTreeMap<(u32, Difficulty), Vec<u32>> = BTreeMap::new();
    for item in items {
        strata
            .entry((item.skill_id, item.difficulty))
            .or_default()
            .push(item.item_id);
    }
    let small: Vec<String> = strata
        .iter()
        .filter(|(_, ids)| ids.len() < 2)
        .map(|((s, d), ids)| format!("(skill {s}, {}) has {} item(s)", d.as_str(), ids.len()))
        .collect();
    if !small.is_empty() {
        return Err(LensError::Usage(format!(
            "strata need at least 2 items: {}",
            small.join("; ")
        )));
    }
    let mut rng = stream(seed, Stage::ItemSplit, 0);
    let mut split = ItemSplit {
        seen: BTreeSet::new(),
        unseen: BTreeSet::new(),
    };
    let mut odd_seen_in_skill: BTreeMap<u32, usize> = BTreeMap::new();
    for ((skill, _), mut ids) in strata {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let mut n_seen = ids.len() / 2;
        if ids.len() % 2 == 1 {
            let odd = odd_seen_in_skill.entry(skill).or_insert(0);
            if odd.is_multiple_of(2) {
                n_seen += 1;
            }
            *odd += 1;
        }
        split.seen.extend(&ids[..n_seen]);
        split.unseen.extend(&ids[n_seen..]);
    }
    Ok(split)
}
