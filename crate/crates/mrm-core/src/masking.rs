//! Random masking of patch and token sequences.
//!
//! Image masking hides an exact count of patches (uniform shuffle, take the
//! first h); report masking is an independent per-token Bernoulli draw.
//! Per-record streams are derived from (seed, epoch, record index), so the
//! masks a record sees never depend on batch composition or thread order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::record_io::tokenizer::MASK_ID;
use crate::rng::{derive_rng, stream};

/// Visible low-resolution patches plus the high-resolution targets hidden
/// from the encoder. Positions are flat grid indices; `targets[j]` is the
/// high-resolution patch at the same grid cell as `masked_positions[j]`.
#[derive(Debug, Clone)]
pub struct MaskedImageView {
    pub visible_patches: Vec<Vec<f32>>,
    pub visible_positions: Vec<usize>,
    pub masked_positions: Vec<usize>,
    pub targets: Vec<Vec<f32>>,
}

impl MaskedImageView {
    pub fn num_patches(&self) -> usize {
        self.visible_positions.len() + self.masked_positions.len()
    }
}

/// Visible tokens plus masked targets, positions indexing the original
/// token sequence.
#[derive(Debug, Clone)]
pub struct MaskedReportView {
    pub visible_tokens: Vec<usize>,
    pub visible_positions: Vec<usize>,
    pub masked_positions: Vec<usize>,
    pub targets: Vec<usize>,
}

impl MaskedReportView {
    pub fn seq_len(&self) -> usize {
        self.visible_positions.len() + self.masked_positions.len()
    }
}

/// Masking hyper-parameters. Defaults: 75% of image patches, 50% per-token
/// report probability.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MaskConfig {
    pub image_ratio: f64,
    pub report_ratio: f64,
    pub seed: u64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig { image_ratio: 0.75, report_ratio: 0.5, seed: 0 }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        check_ratio(self.image_ratio)?;
        check_ratio(self.report_ratio)
    }
}

fn check_ratio(r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Argument(format!("masking ratio {r} outside [0,1)")));
    }
    Ok(())
}

/// Round-half-up count of masked positions.
pub fn masked_count(ratio: f64, total: usize) -> usize {
    (ratio * total as f64 + 0.5).floor() as usize
}

/// Per-record image-mask stream for a given epoch.
pub fn image_mask_rng(seed: u64, epoch: u64, record_index: u64) -> ChaCha8Rng {
    derive_rng(seed, &[stream::IMAGE_MASK, epoch, record_index])
}

/// Per-record report-mask stream for a given epoch.
pub fn report_mask_rng(seed: u64, epoch: u64, record_index: u64) -> ChaCha8Rng {
    derive_rng(seed, &[stream::REPORT_MASK, epoch, record_index])
}

/// Mask exactly `round(ratio * n)` patches, chosen uniformly without
/// replacement. Low- and high-resolution patch lists must share one grid.
pub fn mask_image_patches(
    low_res: &[Vec<f32>],
    high_res: &[Vec<f32>],
    ratio: f64,
    rng: &mut impl Rng,
) -> Result<MaskedImageView> {
    check_ratio(ratio)?;
    if low_res.len() != high_res.len() {
        return Err(Error::Dimension(format!(
            "low-res ({}) and high-res ({}) patch counts differ",
            low_res.len(),
            high_res.len()
        )));
    }
    let n = low_res.len();
    let h = masked_count(ratio, n);

    let mut order: Vec<usize> = (0..n).collect();
    // Uniform shuffle, take the first h as the masked set.
    for i in 0..n.saturating_sub(1) {
        let j = rng.gen_range(i..n);
        order.swap(i, j);
    }
    let mut masked_positions: Vec<usize> = order[..h].to_vec();
    let mut visible_positions: Vec<usize> = order[h..].to_vec();
    masked_positions.sort_unstable();
    visible_positions.sort_unstable();

    Ok(MaskedImageView {
        visible_patches: visible_positions.iter().map(|&i| low_res[i].clone()).collect(),
        targets: masked_positions.iter().map(|&i| high_res[i].clone()).collect(),
        visible_positions,
        masked_positions,
    })
}

/// Mask each token independently with the given probability. A fully masked
/// sequence (q = 0) is legal; the caller decides what to do with it.
pub fn mask_report_tokens(
    token_ids: &[usize],
    probability: f64,
    rng: &mut impl Rng,
) -> Result<MaskedReportView> {
    check_ratio(probability)?;
    if token_ids.contains(&MASK_ID) {
        return Err(Error::Validation("input tokens already contain [MASK]".into()));
    }
    let mut view = MaskedReportView {
        visible_tokens: Vec::new(),
        visible_positions: Vec::new(),
        masked_positions: Vec::new(),
        targets: Vec::new(),
    };
    for (pos, &tok) in token_ids.iter().enumerate() {
        if rng.gen::<f64>() < probability {
            view.masked_positions.push(pos);
            view.targets.push(tok);
        } else {
            view.visible_positions.push(pos);
            view.visible_tokens.push(tok);
        }
    }
    Ok(view)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn patches(n: usize, len: usize) -> Vec<Vec<f32>> {
        (0..n).map(|i| vec![i as f32; len]).collect()
    }

    #[test]
    fn exact_masked_counts() {
        let lo = patches(196, 4);
        let hi = patches(196, 16);
        let mut rng = image_mask_rng(0, 0, 0);
        let view = mask_image_patches(&lo, &hi, 0.75, &mut rng).unwrap();
        assert_eq!(view.masked_positions.len(), 147);
        assert_eq!(view.visible_positions.len(), 49);
    }

    #[test]
    fn ratio_zero_all_visible() {
        let lo = patches(16, 4);
        let hi = patches(16, 16);
        let mut rng = image_mask_rng(0, 0, 0);
        let view = mask_image_patches(&lo, &hi, 0.0, &mut rng).unwrap();
        assert!(view.masked_positions.is_empty());
        assert_eq!(view.visible_positions.len(), 16);
    }

    #[test]
    fn same_stream_same_mask() {
        let lo = patches(64, 4);
        let hi = patches(64, 16);
        let a = mask_image_patches(&lo, &hi, 0.75, &mut image_mask_rng(9, 2, 5)).unwrap();
        let b = mask_image_patches(&lo, &hi, 0.75, &mut image_mask_rng(9, 2, 5)).unwrap();
        assert_eq!(a.masked_positions, b.masked_positions);
        let c = mask_image_patches(&lo, &hi, 0.75, &mut image_mask_rng(9, 2, 6)).unwrap();
        assert_ne!(a.masked_positions, c.masked_positions);
    }

    #[test]
    fn rejects_out_of_range_ratio() {
        let lo = patches(4, 1);
        let hi = patches(4, 4);
        let mut rng = image_mask_rng(0, 0, 0);
        assert!(mask_image_patches(&lo, &hi, 1.0, &mut rng).is_err());
        assert!(mask_image_patches(&lo, &hi, -0.1, &mut rng).is_err());
        assert!(mask_report_tokens(&[3, 4], 1.0, &mut rng).is_err());
    }

    #[test]
    fn target_alignment_follows_grid_cell() {
        // High-res patch at cell 5 is all ones, everything else zero.
        let lo = patches(16, 4);
        let mut hi = vec![vec![0.0f32; 16]; 16];
        hi[5] = vec![1.0; 16];
        for seed in 0..50 {
            let view =
                mask_image_patches(&lo, &hi, 0.5, &mut image_mask_rng(seed, 0, 0)).unwrap();
            if let Some(j) = view.masked_positions.iter().position(|&p| p == 5) {
                assert!(view.targets[j].iter().all(|&v| v == 1.0));
                return;
            }
        }
        panic!("cell 5 never masked in 50 draws");
    }

    #[test]
    fn report_probability_zero_all_visible() {
        let toks = [5, 6, 7, 8];
        let view = mask_report_tokens(&toks, 0.0, &mut report_mask_rng(0, 0, 0)).unwrap();
        assert!(view.targets.is_empty());
        assert_eq!(view.visible_tokens, toks);
    }

    #[test]
    fn report_bernoulli_fraction() {
        let toks = vec![3usize; 100_000];
        let view = mask_report_tokens(&toks, 0.5, &mut report_mask_rng(1, 0, 0)).unwrap();
        let frac = view.masked_positions.len() as f64 / toks.len() as f64;
        assert!((0.49..=0.51).contains(&frac), "masked fraction {frac}");
    }

    #[test]
    fn fully_masked_sequence_is_legal() {
        let toks = [3, 4, 5, 6];
        for seed in 0..200 {
            let view = mask_report_tokens(&toks, 0.9, &mut report_mask_rng(seed, 0, 0)).unwrap();
            if view.visible_positions.is_empty() {
                assert_eq!(view.masked_positions.len(), 4);
                assert_eq!(view.targets, toks);
                return;
            }
        }
        panic!("no fully masked draw at p=0.9 in 200 seeds");
    }

    #[test]
    fn mask_indicators_uncorrelated() {
        // Pairwise correlation of adjacent indicators over many draws.
        let toks = vec![3usize; 2];
        let trials = 20_000;
        let (mut n00, mut n01, mut n10, mut n11) = (0f64, 0f64, 0f64, 0f64);
        for t in 0..trials {
            let view = mask_report_tokens(&toks, 0.5, &mut report_mask_rng(2, 0, t)).unwrap();
            let a = view.masked_positions.contains(&0);
            let b = view.masked_positions.contains(&1);
            match (a, b) {
                (false, false) => n00 += 1.0,
                (false, true) => n01 += 1.0,
                (true, false) => n10 += 1.0,
                (true, true) => n11 += 1.0,
            }
        }
        let n = trials as f64;
        let pa = (n10 + n11) / n;
        let pb = (n01 + n11) / n;
        let cov = n11 / n - pa * pb;
        let corr = cov / (pa * (1.0 - pa) * pb * (1.0 - pb)).sqrt();
        assert!(corr.abs() < 0.03, "pairwise correlation {corr}");
    }

    #[test]
    fn rejects_mask_in_input() {
        let mut rng = report_mask_rng(0, 0, 0);
        assert!(mask_report_tokens(&[3, MASK_ID, 4], 0.5, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn image_partition_is_exhaustive(n in 1usize..80, seed in 0u64..500, pct in 0u32..100) {
            let ratio = pct as f64 / 100.0;
            let lo = patches(n, 2);
            let hi = patches(n, 8);
            let view = mask_image_patches(&lo, &hi, ratio, &mut image_mask_rng(seed, 0, 0)).unwrap();
            prop_assert_eq!(view.masked_positions.len(), masked_count(ratio, n));
            let mut all: Vec<usize> = view
                .masked_positions
                .iter()
                .chain(view.visible_positions.iter())
                .copied()
                .collect();
            all.sort_unstable();
            let expect: Vec<usize> = (0..n).collect();
            prop_assert_eq!(all, expect);
            // Visible patches carry the low-res content of their position.
            for (v, &p) in view.visible_patches.iter().zip(&view.visible_positions) {
                prop_assert_eq!(v[0], p as f32);
            }
        }

        #[test]
        fn report_partition_is_exhaustive(len in 0usize..64, seed in 0u64..500) {
            let toks: Vec<usize> = (0..len).map(|i| 3 + (i % 5)).collect();
            let view = mask_report_tokens(&toks, 0.5, &mut report_mask_rng(seed, 0, 0)).unwrap();
            let mut all: Vec<usize> = view
                .masked_positions
                .iter()
                .chain(view.visible_positions.iter())
                .copied()
                .collect();
            all.sort_unstable();
            let expect: Vec<usize> = (0..len).collect();
            prop_assert_eq!(all, expect);
            for (t, &p) in view.targets.iter().zip(&view.masked_positions) {
                prop_assert_eq!(*t, toks[p]);
            }
        }
    }
}
