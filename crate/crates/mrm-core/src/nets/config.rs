//! Model architecture configuration and the two named presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How visible patch embeddings collapse into the single global image
/// feature fused into report tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Coordinatewise mean (default).
    Gap,
    /// Coordinatewise max.
    Gmp,
}

/// Positional encoding of the report decoder input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportPosMode {
    /// Parameter-free sinusoidal table.
    Fixed,
    /// Learned positional table (default).
    Learnable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Low-resolution input side in pixels (the source image is 2x this).
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub encoder_dim: usize,
    pub encoder_depth: usize,
    pub encoder_heads: usize,
    pub image_decoder_dim: usize,
    pub image_decoder_depth: usize,
    pub image_decoder_heads: usize,
    pub report_decoder_dim: usize,
    pub report_decoder_depth: usize,
    pub report_decoder_heads: usize,
    pub vocab_size: usize,
    pub max_report_len: usize,
    pub fusion_mode: FusionMode,
    pub report_pos_mode: ReportPosMode,
    /// Restore masked patches at 2x the input resolution.
    pub super_resolution: bool,
    /// Pool visible report-token embeddings into the image decoder input.
    pub hybrid_image_restoration: bool,
}

impl ModelConfig {
    /// Desk-scale default: trains in seconds on a CPU.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            image_size: 32,
            patch_size: 4,
            channels: 1,
            encoder_dim: 64,
            encoder_depth: 4,
            encoder_heads: 4,
            image_decoder_dim: 32,
            image_decoder_depth: 2,
            image_decoder_heads: 2,
            report_decoder_dim: 64,
            report_decoder_depth: 3,
            report_decoder_heads: 4,
            vocab_size,
            max_report_len: 32,
            fusion_mode: FusionMode::Gap,
            report_pos_mode: ReportPosMode::Learnable,
            super_resolution: true,
            hybrid_image_restoration: false,
        }
    }

    /// Full-scale preset: ViT-B/16 encoder on 224px inputs with lightweight
    /// decoders (4 blocks / 6 heads image side, 6 blocks / 6 heads report
    /// side).
    pub fn vitb16(vocab_size: usize) -> Self {
        ModelConfig {
            image_size: 224,
            patch_size: 16,
            channels: 1,
            encoder_dim: 768,
            encoder_depth: 12,
            encoder_heads: 12,
            image_decoder_dim: 384,
            image_decoder_depth: 4,
            image_decoder_heads: 6,
            report_decoder_dim: 384,
            report_decoder_depth: 6,
            report_decoder_heads: 6,
            vocab_size,
            max_report_len: 128,
            fusion_mode: FusionMode::Gap,
            report_pos_mode: ReportPosMode::Learnable,
            super_resolution: true,
            hybrid_image_restoration: false,
        }
    }

    pub fn grid_rows(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn grid_cols(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid_rows() * self.grid_cols()
    }

    /// Input patch vector length: p^2 * C.
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    /// Output pixels per token: (2p)^2 * C with super-resolution, p^2 * C without.
    pub fn target_dim(&self) -> usize {
        let side = if self.super_resolution { 2 * self.patch_size } else { self.patch_size };
        side * side * self.channels
    }

    /// Side of the restored patch in pixels.
    pub fn target_patch_size(&self) -> usize {
        if self.super_resolution {
            2 * self.patch_size
        } else {
            self.patch_size
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return err(format!(
                "patch size {} does not divide image size {}",
                self.patch_size, self.image_size
            ));
        }
        for (what, dim, heads) in [
            ("encoder", self.encoder_dim, self.encoder_heads),
            ("image decoder", self.image_decoder_dim, self.image_decoder_heads),
            ("report decoder", self.report_decoder_dim, self.report_decoder_heads),
        ] {
            if heads == 0 || dim % heads != 0 {
                return err(format!("{what} dim {dim} not divisible by {heads} heads"));
            }
        }
        // Image streams carry fixed 2-D sin-cos tables.
        for (what, dim) in
            [("encoder", self.encoder_dim), ("image decoder", self.image_decoder_dim)]
        {
            if dim % 4 != 0 {
                return err(format!("{what} dim {dim} must be divisible by 4"));
            }
        }
        if self.report_pos_mode == ReportPosMode::Fixed && self.report_decoder_dim % 2 != 0 {
            return err(format!(
                "report decoder dim {} must be even for fixed positions",
                self.report_decoder_dim
            ));
        }
        if self.vocab_size < 4 {
            return err(format!("vocab size {} below minimum 4", self.vocab_size));
        }
        if self.channels == 0 || self.max_report_len == 0 {
            return err("channels and max_report_len must be positive".into());
        }
        if self.encoder_depth == 0 || self.image_decoder_depth == 0 || self.report_decoder_depth == 0
        {
            return err("all depths must be at least 1".into());
        }
        Ok(())
    }

    /// Stable architecture fingerprint (FNV-1a over the canonical JSON form).
    /// Detects checkpoint/model mismatches on load.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ModelConfig::desk(19).validate().unwrap();
        ModelConfig::vitb16(30000).validate().unwrap();
    }

    #[test]
    fn desk_geometry() {
        let cfg = ModelConfig::desk(19);
        assert_eq!(cfg.num_patches(), 64);
        assert_eq!(cfg.patch_dim(), 16);
        assert_eq!(cfg.target_dim(), 64);
        let flat = ModelConfig { super_resolution: false, ..cfg };
        assert_eq!(flat.target_dim(), 16);
    }

    #[test]
    fn vitb16_head_sizes() {
        let cfg = ModelConfig::vitb16(30000);
        assert_eq!(cfg.num_patches(), 196);
        assert_eq!(cfg.patch_dim(), 256);
        assert_eq!(cfg.target_dim(), 1024);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ModelConfig::desk(19);
        cfg.encoder_heads = 5;
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::desk(19);
        cfg.patch_size = 5;
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::desk(19);
        cfg.vocab_size = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_tracks_architecture() {
        let a = ModelConfig::desk(19);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.patch_size = 8;
        b.image_size = 64;
        assert_ne!(a.hash(), b.hash());
        // The super-resolution flag changes head shapes, so it must change
        // the fingerprint too.
        let c = ModelConfig { super_resolution: false, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }
}
