/// Optimizer steps needed to cover `examples` once with the last partial
/// batch kept.
pub fn steps_per_epoch(examples: usize, batch_size: usize) -> usize {
    examples.div_ceil(batch_size.max(1))
}

/// Linear decay from `initial` at step 0 to 0 at step `total_steps − 1`.
/// A single-step run uses `initial`.
pub fn linear_lr(initial: f64, step: usize, total_steps: usize) -> f64 {
    if total_steps <= 1 {
        return initial;
    }
    let last = (total_steps - 1) as f64;
    (initial * (1.0 - step.min(total_steps - 1) as f64 / last)).max(0.0)
}
