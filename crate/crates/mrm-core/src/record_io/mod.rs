//! Paired image/report records: loading, validation, synthesis, and the
//! image/text preprocessing shared by pre-training and transfer.

pub mod image;
pub mod manifest;
pub mod synth;
pub mod tokenizer;

pub use image::{downsample, patchify, unpatchify, Image, PatchGrid};
pub use manifest::load_manifest;
pub use synth::{synth_generate, synth_generate_labeled, synth_vocabulary};
pub use tokenizer::{Vocabulary, MASK_ID, PAD_ID, UNK_ID};

use crate::error::{Error, Result};

/// One paired (image, report) training unit. The stored image is the
/// high-resolution source; the low-resolution model input is derived from it.
#[derive(Debug, Clone)]
pub struct Record {
    pub id: String,
    pub image: Image,
    pub report: String,
}

impl Record {
    /// Enforce the record invariants for a given patch size: dimensions
    /// divisible by `2 * patch_size` and pixel values in [0,1].
    pub fn validate(&self, patch_size: usize) -> Result<()> {
        let div = 2 * patch_size;
        if self.image.height % div != 0 || self.image.width % div != 0 {
            return Err(Error::Dimension(format!(
                "record {}: {}x{} not divisible by 2*patch_size = {div}",
                self.id, self.image.height, self.image.width
            )));
        }
        self.image.validate_range()
    }
}
