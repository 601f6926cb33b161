//! Deterministic templated item text.
//!
//! Each skill owns a keyword lexicon (shared words plus per-subskill words)
//! and each difficulty level owns a pool of phrasing templates: short
//! single-step wording for easy items, two-step wording for medium items and
//! long multi-step wording for hard items, closing with a level-specific
//! instruction and using numbers from a level-specific set. Every text opens
//! with a short topic header of skill words.
//!
//! The phrasing level of an item agrees with its difficulty with probability
//! `cue_fidelity`; otherwise one of the other two levels' phrasing is used.
//! Text is a pure function of `(skill, subskill, difficulty, template index)`
//! for a fixed generator configuration.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Difficulty, Item};
use crate::error::{LensError, Result};
use crate::rng::{mix, stream, Stage};

struct SkillLexicon {
    shared: &'static [&'static str],
    subskills: [&'static [&'static str]; 4],
}

const SUBSKILLS_PER_SKILL: u32 = 4;

const LEXICONS: &[SkillLexicon] = &[
    SkillLexicon {
        shared: &[
            "fraction",
            "numerator",
            "denominator",
            "equivalent",
            "proper",
            "improper",
            "mixed",
        ],
        subskills: [
            &["halves", "quarters", "eighths"],
            &["reciprocal", "unit", "thirds"],
            &["common", "lowest", "terms"],
            &["fractional", "part", "sevenths"],
        ],
    },
    SkillLexicon {
        shared: &[
            "angle",
            "degrees",
            "triangle",
            "acute",
            "obtuse",
            "reflex",
            "protractor",
        ],
        subskills: [
            &["vertically", "opposite", "intersecting"],
            &["parallel", "alternate", "corresponding"],
            &["interior", "polygon", "exterior"],
            &["bearing", "clockwise", "compass"],
        ],
    },
    SkillLexicon {
        shared: &[
            "equation",
            "unknown",
            "variable",
            "solve",
            "linear",
            "coefficient",
            "expression",
        ],
        subskills: [
            &["bracket", "expand", "collect"],
            &["inequality", "greater", "inclusive"],
            &["substitute", "formula", "subject"],
            &["simultaneous", "eliminate", "pair"],
        ],
    },
    SkillLexicon {
        shared: &[
            "percentage",
            "percent",
            "discount",
            "increase",
            "decrease",
            "interest",
            "multiplier",
        ],
        subskills: [
            &["sale", "price", "reduction"],
            &["compound", "annual", "savings"],
            &["profit", "loss", "original"],
            &["vat", "tax", "receipt"],
        ],
    },
    SkillLexicon {
        shared: &[
            "probability",
            "outcome",
            "event",
            "likely",
            "dice",
            "spinner",
            "chance",
        ],
        subskills: [
            &["independent", "tree", "branch"],
            &["relative", "frequency", "trials"],
            &["sample", "space", "listing"],
            &["venn", "diagram", "union"],
        ],
    },
    SkillLexicon {
        shared: &[
            "area",
            "perimeter",
            "rectangle",
            "length",
            "width",
            "square",
            "units",
        ],
        subskills: [
            &["parallelogram", "base", "height"],
            &["trapezium", "sides", "parallel"],
            &["compound", "shape", "composite"],
            &["circle", "radius", "circumference"],
        ],
    },
    SkillLexicon {
        shared: &[
            "ratio",
            "proportion",
            "share",
            "parts",
            "scale",
            "simplest",
            "direct",
        ],
        subskills: [
            &["recipe", "ingredients", "servings"],
            &["map", "distance", "kilometres"],
            &["exchange", "currency", "rate"],
            &["inverse", "workers", "days"],
        ],
    },
    SkillLexicon {
        shared: &[
            "decimal",
            "place",
            "value",
            "tenths",
            "hundredths",
            "digit",
            "round",
        ],
        subskills: [
            &["ordering", "smallest", "largest"],
            &["significant", "figures", "estimate"],
            &["recurring", "terminating", "convert"],
            &["thousandths", "column", "point"],
        ],
    },
    SkillLexicon {
        shared: &[
            "negative",
            "integer",
            "minus",
            "zero",
            "number",
            "line",
            "temperature",
        ],
        subskills: [
            &["below", "freezing", "thermometer"],
            &["debt", "balance", "overdrawn"],
            &["sign", "product", "quotient"],
            &["difference", "sea", "level"],
        ],
    },
    SkillLexicon {
        shared: &[
            "factor",
            "multiple",
            "prime",
            "divisible",
            "highest",
            "lowest",
            "common",
        ],
        subskills: [
            &["factorisation", "index", "tree"],
            &["hcf", "greatest", "divisor"],
            &["lcm", "timetable", "buses"],
            &["square", "cube", "root"],
        ],
    },
    SkillLexicon {
        shared: &[
            "sequence",
            "term",
            "nth",
            "rule",
            "pattern",
            "arithmetic",
            "difference",
        ],
        subskills: [
            &["position", "tiles", "matchsticks"],
            &["geometric", "ratio", "doubling"],
            &["fibonacci", "previous", "sum"],
            &["quadratic", "second", "differences"],
        ],
    },
    SkillLexicon {
        shared: &[
            "mean",
            "median",
            "mode",
            "range",
            "data",
            "average",
            "frequency",
        ],
        subskills: [
            &["table", "grouped", "midpoint"],
            &["outlier", "spread", "compare"],
            &["bar", "chart", "tally"],
            &["missing", "total", "values"],
        ],
    },
    SkillLexicon {
        shared: &[
            "coordinate",
            "axis",
            "grid",
            "point",
            "quadrant",
            "origin",
            "plot",
        ],
        subskills: [
            &["gradient", "straight", "intercept"],
            &["reflection", "mirror", "image"],
            &["translation", "vector", "shift"],
            &["midpoint", "segment", "endpoints"],
        ],
    },
    SkillLexicon {
        shared: &[
            "volume", "cuboid", "cube", "capacity", "litres", "net", "faces",
        ],
        subskills: [
            &["prism", "cross", "section"],
            &["cylinder", "surface", "curved"],
            &["edges", "vertices", "solid"],
            &["millilitres", "container", "fill"],
        ],
    },
];

const CONTEXTS: &[&str] = &["a class test", "a homework sheet", "a revision quiz"];

/// Words that only ever appear in one level's phrasing templates.
const CUE_WORDS: [&[&str]; 3] = [
    &["simply", "directly", "quickly", "just"],
    &["first", "then", "next", "afterwards"],
    &["justify", "explain", "prove", "several"],
];

const TEMPLATES: [&[&str]; 3] = [
    &[
        "Simply work out the {t1} of {n1} and {n2} in this {s1} question.",
        "In {ctx}, directly find the {t1} for {n1} {s1}.",
        "Quickly state the {t1} when the {s1} is {n1}.",
        "Just write the {t1} of {n1} using the {s1}.",
    ],
    &[
        "First find the {t1} of {n1} and {n2}, then use it to give the {t2} of the {s1}.",
        "In {ctx}, a {s1} has {t1} {n1}. First work out the {s2}, then the {t2} when it changes by {n2}.",
        "Find the {t1} of {n1} {s1} first, and next compare it with the {t2} of {n2}.",
        "Work out the {t1} for {n1}, then afterwards round the {t2} of the {s2} to the nearest {n2}.",
    ],
    &[
        "In {ctx}, a student claims the {t1} of {n1} and {n2} equals {n3}. Explain whether this is correct, justify each step, and find the {t2} of the {s1} and the {s2}.",
        "Given {n1} {s1} and a {t1} of {n2}, prove that the {t2} cannot exceed {n3}, showing several steps involving the {s2}.",
        "A {s1} problem from {ctx} combines a {t1} of {n1}, a {t2} of {n2} and a {s2} of {n3}. Explain how to find the missing value across several stages.",
        "Justify, over several steps, how the {t1} of {n1} changes when the {s1} is multiplied by {n2} and the {s2} is reduced by {n3}.",
    ],
];

/// Closing instruction shared by every template of a level.
const CLOSINGS: [&str; 3] = [
    "Just answer directly; simply and quickly.",
    "First do one part, then the next, and afterwards check.",
    "Explain, justify and prove several steps.",
];

/// Numbers used by each level's phrasing.
const NUMBERS: [&[u32]; 3] = [&[3, 5, 8], &[15, 24, 60], &[250, 480, 960]];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ItemBankConfig {
    pub n_skills: usize,
    pub items_per_skill: usize,
    /// Probability that an item's phrasing level equals its difficulty.
    pub cue_fidelity: f64,
}

impl Default for ItemBankConfig {
    fn default() -> Self {
        ItemBankConfig {
            n_skills: 5,
            items_per_skill: 40,
            cue_fidelity: 0.9,
        }
    }
}

/// Lexicon words of `skill`, including every subskill's words.
pub fn skill_vocabulary(skill: u32) -> Vec<String> {
    let lex = &LEXICONS[skill as usize % LEXICONS.len()];
    lex.shared
        .iter()
        .chain(lex.subskills.iter().flat_map(|s| s.iter()))
        .map(|w| skill_word(skill, w))
        .collect()
}

// Skills beyond the built-in lexicons reuse one with a distinguishing suffix.
fn skill_word(skill: u32, word: &str) -> String {
    let round = skill as usize / LEXICONS.len();
    if round == 0 {
        word.to_string()
    } else {
        format!("{word}{round}")
    }
}

/// Phrasing level used for an item; agrees with `difficulty` with
/// probability `fidelity` over template indices.
pub fn phrasing_level(
    skill: u32,
    subskill: u32,
    difficulty: Difficulty,
    template_index: u32,
    fidelity: f64,
) -> Difficulty {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
        0x0063_7565,
        u64::from(skill),
        u64::from(subskill),
        difficulty.index() as u64,
        u64::from(template_index),
    ]));
    if rng.random::<f64>() < fidelity {
        difficulty
    } else {
        let shift = rng.random_range(1..3);
        Difficulty::from_index((difficulty.index() + shift) % 3).expect("index < 3")
    }
}

/// Renders the text of one item.
pub fn render_item_text(
    skill: u32,
    subskill: u32,
    difficulty: Difficulty,
    template_index: u32,
    fidelity: f64,
) -> String {
    let level = phrasing_level(skill, subskill, difficulty, template_index, fidelity);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
        0x7465_7874,
        u64::from(skill),
        u64::from(subskill),
        difficulty.index() as u64,
        u64::from(template_index),
    ]));
    let lex = &LEXICONS[skill as usize % LEXICONS.len()];
    let sub = lex.subskills[(subskill % SUBSKILLS_PER_SKILL) as usize];

    let pool = TEMPLATES[level.index()];
    let template = pool[rng.random_range(0..pool.len())];
    let band = NUMBERS[level.index()];
    let numbers: Vec<u32> = (0..3)
        .map(|_| band[rng.random_range(0..band.len())])
        .collect();
    let ctx = CONTEXTS[rng.random_range(0..CONTEXTS.len())];

    let header = format!(
        "{}, {} and {} ({}): ",
        skill_word(skill, lex.shared[0]),
        skill_word(skill, lex.shared[1]),
        skill_word(skill, lex.shared[2]),
        skill_word(skill, sub[0])
    );
    let body = template
        .replace("{ctx}", ctx)
        .replace("{s1}", &skill_word(skill, lex.shared[3]))
        .replace("{s2}", &skill_word(skill, lex.shared[4]))
        .replace("{t1}", &skill_word(skill, sub[1]))
        .replace("{t2}", &skill_word(skill, sub[2]))
        .replace("{n1}", &numbers[0].to_string())
        .replace("{n2}", &numbers[1].to_string())
        .replace("{n3}", &numbers[2].to_string());
    format!("{header}{body} {}", CLOSINGS[level.index()])
}

/// Recovers the phrasing level from text, when exactly one level's cue words
/// are present.
pub fn detect_phrasing_level(text: &str) -> Option<Difficulty> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let hits: Vec<usize> = (0..3)
        .filter(|&lvl| words.iter().any(|w| CUE_WORDS[lvl].contains(&w.as_str())))
        .collect();
    match hits.as_slice() {
        [one] => Difficulty::from_index(*one),
        _ => None,
    }
}

/// `n_skills * items_per_skill` items with difficulty levels as balanced as
/// possible within each skill. Item ids are `0..n`, grouped by skill.
pub fn generate_item_bank(n_skills: usize, items_per_skill: usize, seed: u64) -> Result<Vec<Item>> {
    generate_item_bank_with(
        &ItemBankConfig {
            n_skills,
            items_per_skill,
            ..ItemBankConfig::default()
        },
        seed,
    )
}

pub fn generate_item_bank_with(cfg: &ItemBankConfig, seed: u64) -> Result<Vec<Item>> {
    if cfg.n_skills == 0 || cfg.items_per_skill == 0 {
        return Err(LensError::Usage(format!(
            "item bank needs positive counts, got {} skills x {} items",
            cfg.n_skills, cfg.items_per_skill
        )));
    }
    if !(0.0..=1.0).contains(&cfg.cue_fidelity) {
        return Err(LensError::Usage(format!(
            "cue_fidelity {} outside [0, 1]",
            cfg.cue_fidelity
        )));
    }
    let mut rng = stream(seed, Stage::ItemBank, 0);
    let mut items = Vec::with_capacity(cfg.n_skills * cfg.items_per_skill);
    for skill in 0..cfg.n_skills as u32 {
        let mut levels: Vec<Difficulty> = (0..cfg.items_per_skill)
            .map(|i| {
                // remainder goes to the easier levels
                let per = cfg.items_per_skill / 3;
                let rem = cfg.items_per_skill % 3;
                let mut bound = 0;
                for (lvl, d) in Difficulty::ALL.iter().enumerate() {
                    bound += per + usize::from(lvl < rem);
                    if i < bound {
                        return *d;
                    }
                }
                unreachable!()
            })
            .collect();
        levels.shuffle(&mut rng);
        for (k, difficulty) in levels.into_iter().enumerate() {
            let subskill = k as u32 % SUBSKILLS_PER_SKILL;
            let template_index: u32 = rng.random();
            items.push(Item {
                item_id: items.len() as u32,
                skill_id: skill,
                subskill_id: subskill,
                difficulty,
                text: render_item_text(
                    skill,
                    subskill,
                    difficulty,
                    template_index,
                    cfg.cue_fidelity,
                ),
            });
        }
    }
    Ok(items)
}

/// Permutes item texts among the items of each skill, breaking the link
/// between text and difficulty while keeping skill vocabulary aligned.
/// Difficulty labels stay with their item ids. `None` applies the identity
/// permutation.
pub fn shuffle_difficulty_text_link(items: &[Item], seed: Option<u64>) -> Vec<Item> {
    let mut out = items.to_vec();
    let Some(seed) = seed else {
        return out;
    };
    let mut rng = stream(seed, Stage::TextShuffle, 0);
    let mut skills: Vec<u32> = items.iter().map(|it| it.skill_id).collect();
    skills.sort_unstable();
    skills.dedup();
    for skill in skills {
        let positions: Vec<usize> = (0..items.len())
            .filter(|&i| items[i].skill_id == skill)
            .collect();
        let mut texts: Vec<String> = positions.iter().map(|&i| items[i].text.clone()).collect();
        texts.shuffle(&mut rng);
        for (&pos, text) in positions.iter().zip(texts) {
            out[pos].text = text;
        }
    }
    out
}
