use serde::{Deserialize, Serialize};

/// Difficulty label of an item. Each label maps to a fixed IRT difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    /// IRT difficulty parameter `b`.
    pub fn b(self) -> f64 {
        match self {
            Difficulty::Easy => -1.5,
            Difficulty::Medium => 0.0,
            Difficulty::Hard => 1.5,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Difficulty> {
        Difficulty::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: u32,
    pub skill_id: u32,
    pub subskill_id: u32,
    pub difficulty: Difficulty,
    pub text: String,
}

impl Item {
    pub fn b(&self) -> f64 {
        self.difficulty.b()
    }
}

/// Per-skill latent proficiencies of one simulated student.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentProfile {
    pub student_id: u32,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub student_id: u32,
    pub item_id: u32,
    pub correct: bool,
}
