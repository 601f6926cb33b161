use std::collections::{BTreeMap, HashMap};

use super::{Item, ResponseRecord, StudentProfile};
use crate::error::{LensError, Result};

/// Items plus observed responses, indexed by student.
#[derive(Debug, Clone)]
pub struct Dataset {
    items: Vec<Item>,
    item_index: HashMap<u32, usize>,
    responses: BTreeMap<u32, Vec<(u32, bool)>>,
    n_responses: usize,
    profiles: Option<Vec<StudentProfile>>,
}

impl Dataset {
    /// Validates item-id uniqueness, response references and duplicate
    /// (student, item) pairs.
    pub fn new(items: Vec<Item>, responses: &[ResponseRecord]) -> Result<Self> {
        let mut item_index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item_index.insert(item.item_id, i).is_some() {
                return Err(LensError::Data(format!(
                    "duplicate item_id {}",
                    item.item_id
                )));
            }
        }
        let mut by_student: BTreeMap<u32, Vec<(u32, bool)>> = BTreeMap::new();
        for r in responses {
            if !item_index.contains_key(&r.item_id) {
                return Err(LensError::Data(format!(
                    "response of student {} references unknown item {}",
                    r.student_id, r.item_id
                )));
            }
            by_student
                .entry(r.student_id)
                .or_default()
                .push((r.item_id, r.correct));
        }
        for (student, list) in by_student.iter_mut() {
            list.sort_unstable_by_key(|&(item, _)| item);
            if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(LensError::Data(format!(
                    "duplicate response for (student {student}, item {})",
                    w[0].0
                )));
            }
        }
        Ok(Dataset {
            items,
            item_index,
            responses: by_student,
            n_responses: responses.len(),
            profiles: None,
        })
    }

    /// Attaches simulator ground truth (used only by oracle predictors).
    pub fn with_profiles(mut self, profiles: Vec<StudentProfile>) -> Self {
        self.profiles = Some(profiles);
        self
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, item_id: u32) -> Option<&Item> {
        self.item_index.get(&item_id).map(|&i| &self.items[i])
    }

    pub fn n_skills(&self) -> usize {
        self.items
            .iter()
            .map(|i| i.skill_id as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn student_ids(&self) -> Vec<u32> {
        self.responses.keys().copied().collect()
    }

    pub fn n_students(&self) -> usize {
        self.responses.len()
    }

    pub fn n_responses(&self) -> usize {
        self.n_responses
    }

    /// Responses of one student, sorted by item id.
    pub fn responses_of(&self, student_id: u32) -> &[(u32, bool)] {
        self.responses.get(&student_id).map_or(&[], Vec::as_slice)
    }

    pub fn response(&self, student_id: u32, item_id: u32) -> Option<bool> {
        let list = self.responses_of(student_id);
        list.binary_search_by_key(&item_id, |&(i, _)| i)
            .ok()
            .map(|k| list[k].1)
    }

    pub fn profiles(&self) -> Option<&[StudentProfile]> {
        self.profiles.as_deref()
    }

    pub fn profile(&self, student_id: u32) -> Option<&StudentProfile> {
        let profiles = self.profiles.as_ref()?;
        profiles
            .get(student_id as usize)
            .filter(|p| p.student_id == student_id)
            .or_else(|| profiles.iter().find(|p| p.student_id == student_id))
    }

    /// The same responses over a different version of the item texts.
    pub fn with_items(&self, items: Vec<Item>) -> Result<Dataset> {
        if items.len() != self.items.len() || items.iter().any(|it| self.item(it.item_id).is_none())
        {
            return Err(LensError::Data(
                "replacement items must have the same ids".into(),
            ));
        }
        let mut out = self.clone();
        out.items = items;
        Ok(out)
    }

    pub fn records(&self) -> Vec<ResponseRecord> {
        self.responses
            .iter()
            .flat_map(|(&student_id, list)| {
                list.iter().map(move |&(item_id, correct)| ResponseRecord {
                    student_id,
                    item_id,
                    correct,
                })
            })
            .collect()
    }
}
