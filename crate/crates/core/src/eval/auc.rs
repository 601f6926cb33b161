use crate::error::{LensError, Result};

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half. Computed from average
/// ranks (Mann-Whitney U).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(LensError::dim("auc", &[scores.len()], &[labels.len()]));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(LensError::UndefinedMetric(format!("score {i} is NaN")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(LensError::UndefinedMetric(format!(
            "AUC needs both classes, got {n_pos} positive and {n_neg} negative labels"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Ranks are 1-based; a tie group spanning ranks lo..=hi gets (lo + hi) / 2.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum_pos += avg_rank * positives as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
