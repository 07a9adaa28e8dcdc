//! ROC AUC via the rank statistic with midrank tie handling: the
//! probability that a random positive outscores a random negative, ties
//! counted as one half.

use crate::error::{Error, Result};

/// AUC for one class. Requires at least one positive and one negative.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("NaN score".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Validation(format!("label {l} is not binary")));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Argument(
            "undefined class: AUC needs at least one positive and one negative".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // 1-based midranks over runs of equal scores.
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }

    let pos_rank_sum: f64 =
        ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(&r, _)| r).sum();
    let p = positives as f64;
    let n = negatives as f64;
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Unweighted mean over classes with a defined AUC. `None` entries mark
/// classes skipped for lacking both label values.
pub fn mean_auc(per_class: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Argument("undefined class: no class has both labels".into()));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Per-class AUCs over multi-label data: `scores[i][c]` and `labels[i][c]`.
/// Classes with a single label value come back as `None` (and are logged).
pub fn per_class_auc(scores: &[Vec<f64>], labels: &[Vec<f32>]) -> Result<Vec<Option<f64>>> {
    if scores.len() != labels.len() {
        return Err(Error::Argument("score/label count mismatch".into()));
    }
    let classes = scores.first().map(|s| s.len()).unwrap_or(0);
    let mut out = Vec::with_capacity(classes);
    for c in 0..classes {
        let s: Vec<f64> = scores.iter().map(|row| row[c]).collect();
        let l: Vec<u8> = labels.iter().map(|row| row[c] as u8).collect();
        match auc(&s, &l) {
            Ok(v) => out.push(Some(v)),
            Err(Error::Argument(_)) => {
                log::warn!("class {c} lacks both label values; skipping its AUC");
                out.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// O(n^2) pairwise definition, kept as the independent oracle the rank
/// implementation is verified against.
pub fn auc_bruteforce(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let pos: Vec<f64> =
        scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(&s, _)| s).collect();
    let neg: Vec<f64> =
        scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Argument("undefined class".into()));
    }
    let mut wins = 0.0f64;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() as f64 * neg.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [0, 0, 1, 1];
        assert!((auc(&scores, &labels).unwrap() - 0.75).abs() < 1e-15);
        assert!((auc_bruteforce(&scores, &labels).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn perfect_separation_and_ties() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 6], &[0, 1, 0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.8, 0.1], &[0, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(auc(&[0.1, 0.2], &[0, 0]).is_err());
    }

    #[test]
    fn invariant_under_monotone_transform() {
        let scores = [0.05, 0.3, 0.3, 0.72, 0.9, 0.11];
        let labels = [0, 1, 0, 1, 1, 0];
        let base = auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|&s| 1.0 / (1.0 + (-5.0 * s).exp())).collect();
        assert!((auc(&squashed, &labels).unwrap() - base).abs() < 1e-15);
    }

    #[test]
    fn mean_auc_skips_undefined() {
        let mean = mean_auc(&[Some(0.8), None, Some(0.6)]).unwrap();
        assert!((mean - 0.7).abs() < 1e-15);
        assert!(mean_auc(&[None, None]).is_err());
    }

    #[test]
    fn per_class_reports_skips() {
        let scores = vec![vec![0.9, 0.4], vec![0.1, 0.6], vec![0.7, 0.5]];
        let labels = vec![vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let per = per_class_auc(&scores, &labels).unwrap();
        assert!(per[0].is_some());
        assert!(per[1].is_none());
    }

    proptest! {
        /// Rank statistic equals the pairwise oracle within 1e-12, ties
        /// included (scores drawn from a coarse grid to force them).
        #[test]
        fn rank_matches_bruteforce(
            raw in prop::collection::vec((0u32..20, prop::bool::ANY), 2..80)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 10.0).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, l)| *l as u8).collect();
            let pos = labels.iter().filter(|&&l| l == 1).count();
            prop_assume!(pos > 0 && pos < labels.len());
            let fast = auc(&scores, &labels).unwrap();
            let slow = auc_bruteforce(&scores, &labels).unwrap();
            prop_assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }
}
