//! Learning-rate schedules: layer-wise geometric decay and step decay.

use crate::params::LayerSlot;

/// Layer-wise lr decay: the embedding is layer 0, block i is layer i+1, the
/// head (and everything after the blocks) is layer depth+1 and receives the
/// base rate. lr = base * decay^(depth + 1 - layer).
pub fn layer_lr(base_lr: f64, decay: f64, slot: LayerSlot, depth: usize) -> f64 {
    let layer = match slot {
        LayerSlot::Embed => 0,
        LayerSlot::Block(i) => i + 1,
        LayerSlot::Head => depth + 1,
    };
    base_lr * decay.powi((depth + 1 - layer) as i32)
}

/// Multiply by 0.1 for every milestone the epoch has reached.
pub fn step_multiplier(epoch: usize, milestones: &[usize]) -> f64 {
    let passed = milestones.iter().filter(|&&m| epoch >= m).count();
    0.1f64.powi(passed as i32)
}
