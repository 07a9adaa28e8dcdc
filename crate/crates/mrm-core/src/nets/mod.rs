//! Network parameterization and forward/backward computation: image
//! encoder, image decoder, report decoder, token lookup, positional
//! encodings, and multi-modal fusion.

pub mod block;
pub mod config;
pub mod forward;
pub mod params;
pub mod posenc;

pub use config::{FusionMode, ModelConfig, ReportPosMode};
pub use forward::{
    decode_image, decode_report, decode_report_all, encode, fuse, global_pool, record_forward,
    record_backward, RecordForward, RecordViews,
};
pub use params::{init_params, Gradients, ParameterStore};
pub use posenc::{sincos_1d, sincos_2d};
