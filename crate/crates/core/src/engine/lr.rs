use serde::{Deserialize, Serialize};

/// Linear warm-up from 0 to `max_lr`, then cosine decay to `min_lr` at
/// `total_iters`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub warmup_iters: usize,
    pub max_lr: f64,
    pub min_lr: f64,
    pub total_iters: usize,
}

impl LrSchedule {
    pub fn from_config(config: &crate::types::DistillationConfig) -> Self {
        Self {
            warmup_iters: config.warmup_iters,
            max_lr: config.max_lr,
            min_lr: config.min_lr,
            total_iters: config.total_iters(),
        }
    }
}

pub fn lr_at(iteration: usize, schedule: &LrSchedule) -> f64 {
    let LrSchedule {
        warmup_iters,
        max_lr,
        min_lr,
        total_iters,
    } = *schedule;
    if iteration < warmup_iters {
        return max_lr * iteration as f64 / warmup_iters as f64;
    }
    if total_iters <= warmup_iters {
        return max_lr;
    }
    let progress = ((iteration - warmup_iters) as f64 / (total_iters - warmup_iters) as f64).min(1.0);
    min_lr + 0.5 * (max_lr - min_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
}
