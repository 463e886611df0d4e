use crate::error::{NrbaError, Result};

/// Area under the ROC curve: `P(score_pos > score_neg) + P(tie) / 2`,
/// computed from mid-ranks in O(n log n).
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(NrbaError::Data(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(NrbaError::Data("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = labels.iter().filter(|&&l| l == 0.0).count();
    if n_pos + n_neg != labels.len() {
        return Err(NrbaError::Data("labels must be 0/1".into()));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(NrbaError::Data("AUC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the mid-rank keeps every quantity integral.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            if labels[k] == 1.0 {
                rank_sum2 += twice_mid;
            }
        }
        i = j + 1;
    }
    let np = n_pos as u64;
    let u2 = rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_tied() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 6], &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_error() {
        assert!(auc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
    }
}
