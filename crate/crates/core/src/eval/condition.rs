use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pool {
    Seen,
    Unseen,
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pool::Seen => "seen",
            Pool::Unseen => "unseen",
        })
    }
}

/// Skill of the input items relative to the query item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkillRule {
    Target,
    Other,
}

impl fmt::Display for SkillRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkillRule::Target => "on-target",
            SkillRule::Other => "off-target",
        })
    }
}

pub const DEFAULT_N_INPUT: usize = 19;

/// One evaluation condition: where the input and query items come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub condition_id: u8,
    pub input_source: Pool,
    pub input_skill: SkillRule,
    pub query_source: Pool,
    pub n_input: usize,
}

/// Conditions 1-4 query seen items, 5-8 unseen ones. Within each half the
/// inputs are seen on-target, unseen on-target, seen off-target and unseen
/// off-target.
pub fn build_condition(condition_id: u8) -> Result<ConditionSpec> {
    if !(1..=8).contains(&condition_id) {
        return Err(LensError::Usage(format!(
            "condition id {condition_id} is outside 1..=8"
        )));
    }
    let i = condition_id - 1;
    Ok(ConditionSpec {
        condition_id,
        input_source: if i.is_multiple_of(2) {
            Pool::Seen
        } else {
            Pool::Unseen
        },
        input_skill: if i % 4 < 2 {
            SkillRule::Target
        } else {
            SkillRule::Other
        },
        query_source: if i < 4 { Pool::Seen } else { Pool::Unseen },
        n_input: DEFAULT_N_INPUT,
    })
}

pub fn all_conditions() -> Vec<ConditionSpec> {
    (1..=8)
        .map(|id| build_condition(id).expect("valid id"))
        .collect()
}
