//! The two masked-reconstruction losses and their weighted total.
//!
//! Report loss: mean negative log-likelihood over all masked tokens in the
//! batch. Image loss: mean squared error over all pixels of all masked
//! patches in the batch. Visible positions contribute nothing to either.
//! Scalars accumulate in f64 regardless of the model width.

use crate::error::{Error, Result};
use crate::linalg::Scalar;

/// Per-batch loss terms. `total = report + lambda * image` exactly.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LossBreakdown {
    pub report: f64,
    pub image: f64,
    pub lambda: f64,
    pub total: f64,
}

/// Summed (not yet averaged) loss contributions of one record, combined
/// across a batch before division by the batch-wide masked counts.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossSums {
    pub report_nll: f64,
    pub masked_tokens: usize,
    pub image_sq: f64,
    pub masked_pixels: usize,
}

impl LossSums {
    pub fn add(&mut self, other: &LossSums) {
        self.report_nll += other.report_nll;
        self.masked_tokens += other.masked_tokens;
        self.image_sq += other.image_sq;
        self.masked_pixels += other.masked_pixels;
    }

    /// Reduce to batch means. Empty masked sets contribute zero (a warning
    /// is logged because it usually means a degenerate masking config).
    pub fn reduce(&self, lambda: f64) -> LossBreakdown {
        let report = if self.masked_tokens == 0 {
            0.0
        } else {
            self.report_nll / self.masked_tokens as f64
        };
        let image = if self.masked_pixels == 0 {
            0.0
        } else {
            self.image_sq / self.masked_pixels as f64
        };
        loss_total(report, image, lambda)
    }
}

/// Mean over masked tokens of -log P(target). One distribution per masked
/// position, each normalized to 1 within 1e-5.
pub fn loss_report<T: Scalar>(distributions: &[Vec<T>], targets: &[usize]) -> Result<f64> {
    let sums = loss_report_sums(distributions, targets)?;
    if sums.masked_tokens == 0 {
        log::warn!("report loss over an empty masked set; defining it as 0");
        return Ok(0.0);
    }
    Ok(sums.report_nll / sums.masked_tokens as f64)
}

/// Summed form used for batch-level reduction.
pub fn loss_report_sums<T: Scalar>(distributions: &[Vec<T>], targets: &[usize]) -> Result<LossSums> {
    if distributions.len() != targets.len() {
        return Err(Error::Argument(format!(
            "{} distributions for {} targets",
            distributions.len(),
            targets.len()
        )));
    }
    if let Some(d) = distributions.first() {
        let flat: Vec<T> = distributions.iter().flat_map(|r| r.iter().copied()).collect();
        if flat.len() != d.len() * distributions.len() {
            return Err(Error::Argument("ragged distribution rows".into()));
        }
        return loss_report_sums_flat(&flat, d.len(), targets);
    }
    Ok(LossSums::default())
}

/// Flat `[p, vocab]` variant used on the training path.
pub fn loss_report_sums_flat<T: Scalar>(
    probs: &[T],
    vocab: usize,
    targets: &[usize],
) -> Result<LossSums> {
    if probs.len() != vocab * targets.len() {
        return Err(Error::Argument(format!(
            "{} probabilities for {} targets over vocab {vocab}",
            probs.len(),
            targets.len()
        )));
    }
    let mut nll = 0.0f64;
    for (j, &target) in targets.iter().enumerate() {
        let row = &probs[j * vocab..(j + 1) * vocab];
        let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(Error::Internal(format!("distribution sums to {sum}, not 1")));
        }
        if target >= vocab {
            return Err(Error::Argument(format!("target {target} outside vocabulary {vocab}")));
        }
        nll -= row[target].as_f64().ln();
    }
    Ok(LossSums {
        report_nll: nll,
        masked_tokens: targets.len(),
        image_sq: 0.0,
        masked_pixels: 0,
    })
}

/// Mean squared error over all pixels of all masked positions. Predictions
/// cover every grid position; visible rows are excluded by construction.
pub fn loss_image<T: Scalar>(
    predictions: &[Vec<T>],
    targets: &[Vec<f32>],
    masked_positions: &[usize],
) -> Result<f64> {
    let sums = loss_image_sums(predictions, targets, masked_positions)?;
    if sums.masked_pixels == 0 {
        log::warn!("image loss over an empty masked set; defining it as 0");
        return Ok(0.0);
    }
    Ok(sums.image_sq / sums.masked_pixels as f64)
}

/// Summed form used for batch-level reduction.
pub fn loss_image_sums<T: Scalar>(
    predictions: &[Vec<T>],
    targets: &[Vec<f32>],
    masked_positions: &[usize],
) -> Result<LossSums> {
    if let Some(&pos) = masked_positions.iter().find(|&&p| p >= predictions.len()) {
        return Err(Error::Argument(format!("no prediction for grid position {pos}")));
    }
    if predictions.is_empty() {
        if masked_positions.is_empty() && targets.is_empty() {
            return Ok(LossSums::default());
        }
        return Err(Error::Argument("no predictions for a non-empty masked set".into()));
    }
    let width = predictions[0].len();
    if predictions.iter().any(|p| p.len() != width) {
        return Err(Error::Dimension("ragged prediction rows".into()));
    }
    let flat: Vec<T> = predictions.iter().flat_map(|r| r.iter().copied()).collect();
    loss_image_sums_flat(&flat, width, targets, masked_positions)
}

/// Flat `[N, target_dim]` variant used on the training path.
pub fn loss_image_sums_flat<T: Scalar>(
    predictions: &[T],
    target_dim: usize,
    targets: &[Vec<f32>],
    masked_positions: &[usize],
) -> Result<LossSums> {
    if targets.len() != masked_positions.len() {
        return Err(Error::Argument(format!(
            "{} targets for {} masked positions",
            targets.len(),
            masked_positions.len()
        )));
    }
    let n = if target_dim == 0 { 0 } else { predictions.len() / target_dim };
    let mut sq = 0.0f64;
    let mut pixels = 0usize;
    for (target, &pos) in targets.iter().zip(masked_positions) {
        if pos >= n {
            return Err(Error::Argument(format!("no prediction for grid position {pos}")));
        }
        if target.len() != target_dim {
            return Err(Error::Dimension(format!(
                "prediction width {target_dim} vs target width {} at position {pos}",
                target.len()
            )));
        }
        let pred = &predictions[pos * target_dim..(pos + 1) * target_dim];
        for (p, &t) in pred.iter().zip(target) {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Validation(format!("target pixel {t} outside [0,1]")));
            }
            let diff = p.as_f64() - t as f64;
            sq += diff * diff;
        }
        pixels += target.len();
    }
    Ok(LossSums { report_nll: 0.0, masked_tokens: 0, image_sq: sq, masked_pixels: pixels })
}

/// L = L_R + lambda * L_I.
pub fn loss_total(report: f64, image: f64, lambda: f64) -> LossBreakdown {
    LossBreakdown { report, image, lambda, total: report + lambda * image }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_distributions_give_ln_v() {
        let v = 30000;
        let dists: Vec<Vec<f64>> = (0..7).map(|_| vec![1.0 / v as f64; v]).collect();
        let targets = vec![5usize; 7];
        let l = loss_report(&dists, &targets).unwrap();
        let expect = (v as f64).ln();
        assert!((l - expect).abs() < 1e-9, "{l} vs {expect}");
        // ln 30000 = 10.3090 to four decimals
        assert!((expect - 10.3090).abs() < 5e-5);
    }

    #[test]
    fn one_hot_correct_gives_zero() {
        let mut dist = vec![0.0f64; 10];
        dist[3] = 1.0;
        let l = loss_report(&[dist], &[3]).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn unnormalized_distribution_is_internal_error() {
        let dist = vec![0.3f64, 0.3, 0.3];
        assert!(matches!(loss_report(&[dist], &[0]), Err(Error::Internal(_))));
    }

    #[test]
    fn image_loss_zero_init_is_mean_target_squared() {
        let preds: Vec<Vec<f64>> = vec![vec![0.0; 4]; 3];
        let targets = vec![vec![0.5f32; 4]; 2];
        let l = loss_image(&preds, &targets, &[0, 2]).unwrap();
        assert!((l - 0.25).abs() < 1e-12);
    }

    #[test]
    fn image_loss_perfect_prediction_zero() {
        let preds: Vec<Vec<f64>> = vec![vec![0.25; 4]; 2];
        let targets = vec![vec![0.25f32; 4]];
        assert_eq!(loss_image(&preds, &targets, &[1]).unwrap(), 0.0);
    }

    #[test]
    fn image_loss_ignores_visible_predictions() {
        let targets = vec![vec![0.5f32; 4]];
        let mut preds: Vec<Vec<f64>> = vec![vec![0.0; 4]; 3];
        let a = loss_image(&preds, &targets, &[1]).unwrap();
        preds[0] = vec![123.0; 4];
        preds[2] = vec![-55.0; 4];
        let b = loss_image(&preds, &targets, &[1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn image_loss_rejects_out_of_range_targets() {
        let preds: Vec<Vec<f64>> = vec![vec![0.0; 2]];
        let targets = vec![vec![1.5f32, 0.0]];
        assert!(matches!(
            loss_image(&preds, &targets, &[0]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn empty_mask_is_zero() {
        let preds: Vec<Vec<f64>> = vec![vec![0.3; 2]; 4];
        assert_eq!(loss_image(&preds, &[], &[]).unwrap(), 0.0);
        assert_eq!(loss_report::<f64>(&[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn total_is_exact_combination() {
        let b = loss_total(2.0, 3.0, 1.0);
        assert_eq!(b.total, 5.0);
        let b = loss_total(2.0, 3.0, 0.5);
        assert_eq!(b.total, 3.5);
        for lambda in [0.5, 1.0, 2.0] {
            let b = loss_total(1.25, 0.75, lambda);
            assert_eq!(b.total, b.report + b.lambda * b.image);
        }
    }

    #[test]
    fn sums_reduce_matches_means() {
        let mut sums = LossSums::default();
        sums.add(&LossSums { report_nll: 6.0, masked_tokens: 3, image_sq: 8.0, masked_pixels: 4 });
        sums.add(&LossSums { report_nll: 2.0, masked_tokens: 1, image_sq: 0.0, masked_pixels: 4 });
        let b = sums.reduce(2.0);
        assert_eq!(b.report, 2.0);
        assert_eq!(b.image, 1.0);
        assert_eq!(b.total, 4.0);
    }
}
