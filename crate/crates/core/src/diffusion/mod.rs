//! Diffusion backend contracts, noise schedules and the per-stage operations
//! of a distillation iteration.

pub mod model;
pub mod ops;
pub mod schedule;

pub use model::{guided_noise, sample_edit, Guidance, Parameterization, StudentModel, TeacherModel};
pub use ops::{
    align_student_to_teacher, bilinear_resize, bilinear_resize_adjoint, cfg_compose, perturb,
    sample_teacher_timestep, tweedie_clean_estimate, tweedie_prediction_jacobian,
};
pub use schedule::{ddim_step, DdimScheduler, NoiseSchedule, StudentScheduler, VpLinearSchedule};
