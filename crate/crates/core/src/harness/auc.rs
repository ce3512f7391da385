use crate::error::{Error, Result};

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Invalid(format!("score {s} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_tied() {
        assert_eq!(auc_roc(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(auc_roc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
    }

    #[test]
    fn mixed_ranking() {
        // Pairs (pos, neg): (0.9,0.4) (0.9,0.1) (0.6,0.4) (0.6,0.1) all correct.
        assert_eq!(auc_roc(&[0.9, 0.4, 0.6, 0.1], &[true, false, true, false]).unwrap(), 1.0);
        // (0.9,0.6) ok, (0.9,0.1) ok, (0.4,0.6) wrong, (0.4,0.1) ok.
        assert_eq!(auc_roc(&[0.9, 0.6, 0.4, 0.1], &[true, false, true, false]).unwrap(), 0.75);
    }

    #[test]
    fn errors() {
        assert!(matches!(auc_roc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass)));
        assert!(matches!(auc_roc(&[0.1], &[true, false]), Err(Error::LengthMismatch(1, 2))));
        assert!(auc_roc(&[f64::NAN, 0.2], &[true, false]).is_err());
    }
}
