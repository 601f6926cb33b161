use rand::Rng;
use rand_distr::StandardNormal;

use super::{Item, ResponseRecord, StudentProfile};
use crate::error::{LensError, Result};
use crate::nn::sigmoid;
use crate::rng::{stream, Stage};

/// Proficiencies are clipped (not resampled) into this range.
pub const THETA_LIMIT: f64 = 4.0;

/// Item-independent 3-PL parameters; difficulty comes from the item.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IrtParams {
    /// Discrimination.
    pub a: f64,
    /// Guessing floor, in `[0, 1)`.
    pub c: f64,
}

impl Default for IrtParams {
    fn default() -> Self {
        IrtParams { a: 1.0, c: 0.1 }
    }
}

/// Three-parameter logistic response probability.
pub fn p_correct(theta: f64, params: IrtParams, b: f64) -> f64 {
    params.c + (1.0 - params.c) * sigmoid(params.a * (theta - b))
}

/// `n` students with one independent, clipped standard-normal proficiency
/// per skill. Student ids are `0..n`.
pub fn sample_students(n: usize, n_skills: usize, seed: u64) -> Result<Vec<StudentProfile>> {
    if n == 0 || n_skills == 0 {
        return Err(LensError::Usage(format!(
            "need at least one student and one skill, got n={n}, n_skills={n_skills}"
        )));
    }
    let mut rng = stream(seed, Stage::Students, 0);
    Ok((0..n as u32)
        .map(|student_id| StudentProfile {
            student_id,
            theta: (0..n_skills)
                .map(|_| {
                    rng.sample::<f64, _>(StandardNormal)
                        .clamp(-THETA_LIMIT, THETA_LIMIT)
                })
                .collect(),
        })
        .collect())
}

/// One Bernoulli response per (student, item). Each student draws from its
/// own stream, so the result does not depend on how students are batched.
pub fn simulate_responses(
    students: &[StudentProfile],
    items: &[Item],
    params: IrtParams,
    seed: u64,
) -> Result<Vec<ResponseRecord>> {
    if students.is_empty() || items.is_empty() {
        return Err(LensError::Usage(
            "simulate_responses needs students and items".into(),
        ));
    }
    let n_skills = students[0].theta.len();
    if let Some(item) = items.iter().find(|it| it.skill_id as usize >= n_skills) {
        return Err(LensError::Data(format!(
            "item {} references skill {} but students have {n_skills} skills",
            item.item_id, item.skill_id
        )));
    }
    let mut out = Vec::with_capacity(students.len() * items.len());
    for student in students {
        let mut rng = stream(seed, Stage::Responses, u64::from(student.student_id));
        for item in items {
            let p = p_correct(student.theta[item.skill_id as usize], params, item.b());
            out.push(ResponseRecord {
                student_id: student.student_id,
                item_id: item.item_id,
                correct: rng.random::<f64>() < p,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Difficulty;

    fn item(id: u32, skill: u32, d: Difficulty) -> Item {
        Item {
            item_id: id,
            skill_id: skill,
            subskill_id: 0,
            difficulty: d,
            text: "x".into(),
        }
    }

    #[test]
    fn p_correct_anchor_points() {
        let p = IrtParams::default();
        assert!((p_correct(0.7, p, 0.7) - 0.55).abs() < 1e-12);
        // 0.1 + 0.9 / (1 + e^1.5)
        assert!((p_correct(0.0, p, 1.5) - 0.264_182_971_425_720_7).abs() < 1e-12);
        assert!((p_correct(-60.0, p, 0.0) - 0.1).abs() < 1e-12);
        assert!((p_correct(60.0, p, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn p_correct_is_monotone_and_bounded() {
        let p = IrtParams::default();
        let grid: Vec<f64> = (-40..=40).map(|i| f64::from(i) * 0.1).collect();
        for w in grid.windows(2) {
            assert!(p_correct(w[1], p, 0.0) > p_correct(w[0], p, 0.0));
            assert!(p_correct(0.0, p, w[1]) < p_correct(0.0, p, w[0]));
        }
        for &t in &grid {
            let v = p_correct(t, p, 1.5);
            assert!(v > 0.1 && v < 1.0);
        }
    }

    #[test]
    fn students_are_clipped_and_centered() {
        let students = sample_students(50_000, 5, 11).unwrap();
        assert_eq!(students.len(), 50_000);
        let n = students.len() as f64;
        for s in 0..5 {
            let mean = students.iter().map(|p| p.theta[s]).sum::<f64>() / n;
            assert!(mean.abs() < 0.02, "skill {s} mean {mean}");
        }
        assert!(students
            .iter()
            .flat_map(|p| &p.theta)
            .all(|t| t.abs() <= THETA_LIMIT));
        // cross-skill correlation
        let col = |s: usize| students.iter().map(|p| p.theta[s]).collect::<Vec<_>>();
        for (a, b) in [(0, 1), (2, 4)] {
            let rho = correlation(&col(a), &col(b));
            assert!(rho.abs() < 0.02, "rho({a},{b}) = {rho}");
        }
    }

    fn correlation(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn zero_students_is_usage_error() {
        assert!(matches!(sample_students(0, 5, 1), Err(LensError::Usage(_))));
    }

    #[test]
    fn responses_cover_cartesian_product_and_replay() {
        let students = sample_students(30, 2, 3).unwrap();
        let items = vec![
            item(0, 0, Difficulty::Easy),
            item(1, 1, Difficulty::Hard),
            item(2, 1, Difficulty::Medium),
        ];
        let a = simulate_responses(&students, &items, IrtParams::default(), 9).unwrap();
        let b = simulate_responses(&students, &items, IrtParams::default(), 9).unwrap();
        assert_eq!(a.len(), 90);
        assert_eq!(a, b);
        let c = simulate_responses(&students, &items, IrtParams::default(), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn out_of_range_skill_is_data_error() {
        let students = sample_students(3, 2, 3).unwrap();
        let items = vec![item(0, 2, Difficulty::Easy)];
        assert!(matches!(
            simulate_responses(&students, &items, IrtParams::default(), 1),
            Err(LensError::Data(_))
        ));
    }

    #[test]
    fn easy_items_for_average_students_match_integral() {
        // Students pinned at theta = 0: the correct rate must match p_correct.
        let students: Vec<StudentProfile> = (0..200_000)
            .map(|i| StudentProfile {
                student_id: i,
                theta: vec![0.0],
            })
            .collect();
        let items = vec![item(0, 0, Difficulty::Easy)];
        let r = simulate_responses(&students, &items, IrtParams::default(), 5).unwrap();
        let rate = r.iter().filter(|r| r.correct).count() as f64 / r.len() as f64;
        let expected = p_correct(0.0, IrtParams::default(), -1.5);
        assert!((rate - expected).abs() < 0.01, "{rate} vs {expected}");
    }
}
