//! Distillation of the teacher's edit into the student.

pub mod distill;
pub mod lr;
pub mod optim;
pub mod sds;

pub use distill::{
    distill, initialize, sample_student, student_step, DistillObserver, DistillOptions, DistillOutput,
    Initialization, IterationRecord, TSchedule,
};
pub use lr::{lr_at, LrSchedule};
pub use optim::AdamW;
pub use sds::{sds_gradient, surrogate_loss, DifferentiableEstimate, StudentEstimate};

use crate::types::{Latent, LatentBatch};

/// Student latents after an outer step.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub tau: f64,
    pub latents: LatentBatch,
}

/// Engine state handed to observers after every outer step.
#[derive(Debug, Clone)]
pub struct RunState {
    /// Current student timestep.
    pub tau: f64,
    pub outer_step: usize,
    /// Optimizer steps taken so far.
    pub iteration: usize,
    pub latents: LatentBatch,
    pub reference_latent: Latent,
    pub reference_index: usize,
    /// Per-iteration gradient norms.
    pub loss_history: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
}
