//! Joint masked-image / masked-report pre-training over paired image-text
//! records, with encoder transfer to labeled classification tasks.
//!
//! The pipeline masks most patches of a low-resolution image and half the
//! tokens of its paired report, then trains one image encoder so that its
//! visible-patch embeddings can (a) restore the missing report tokens via a
//! text decoder fed hybrid token+image embeddings, and (b) restore the
//! missing patches at twice the input resolution via an image decoder. Only
//! the encoder transfers downstream.

pub mod error;
pub mod linalg;
pub mod masking;
pub mod nets;
pub mod objectives;
pub mod parallel;
pub mod pretrain;
pub mod record_io;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};
pub use masking::{MaskConfig, MaskedImageView, MaskedReportView};
pub use nets::{FusionMode, ModelConfig, ReportPosMode};
pub use objectives::LossBreakdown;
pub use pretrain::{Checkpoint, TrainConfig};
pub use record_io::{Record, Vocabulary};
pub use transfer::{FinetuneConfig, LabeledSet};
