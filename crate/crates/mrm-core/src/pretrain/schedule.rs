//! Learning-rate schedule: linear warmup to the peak, then cosine decay
//! reaching zero at the final step.

use std::f64::consts::PI;

pub fn lr_at(step: u64, total_steps: u64, warmup_steps: u64, peak_lr: f64) -> f64 {
    debug_assert!(warmup_steps < total_steps, "warmup must be shorter than the run");
    debug_assert!(step < total_steps, "step {step} beyond {total_steps}");
    if warmup_steps > 0 && step < warmup_steps {
        return peak_lr * step as f64 / warmup_steps as f64;
    }
    let span = total_steps.saturating_sub(1).saturating_sub(warmup_steps).max(1);
    let progress = ((step - warmup_steps) as f64 / span as f64).min(1.0);
    peak_lr * 0.5 * (1.0 + (PI * progress).cos())
}
