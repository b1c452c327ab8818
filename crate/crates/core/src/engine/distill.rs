//! The nested distillation loop.
//!
//! For every student timestep `τ = 1, 1-Δτ, …, Δτ` the student is updated
//! `k` times against the teacher, then takes one sampling step to `τ-Δτ`.
//! Latents `ζ_τ` stay fixed within the `k` inner iterations; only the
//! student parameters change.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lr::{lr_at, LrSchedule};
use super::optim::AdamW;
use super::sds::{sds_gradient, DifferentiableEstimate, StudentEstimate};
use super::{Checkpoint, RunState};
use crate::attention::choose_keyframe;
use crate::diffusion::{
    align_student_to_teacher, guided_noise, perturb, sample_teacher_timestep, tweedie_clean_estimate, StudentModel,
    TeacherModel,
};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::types::{DistillationConfig, EditTask, Image, Latent, LatentBatch, LatentSpace, Pose, Scene};

/// How the teacher timestep `t` is chosen each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TSchedule {
    /// Truncated normal on `[τ, b]` centred at `b`.
    #[default]
    TruncNorm,
    /// Uniform on `[0.02, 0.98]`, as in plain SDS.
    Uniform,
    /// `t = min(τ, b)`.
    Matched,
}

impl FromStr for TSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncnorm" => Ok(Self::TruncNorm),
            "uniform" => Ok(Self::Uniform),
            "matched" => Ok(Self::Matched),
            other => Err(Error::InvalidConfig(format!(
                "unknown t-schedule '{other}' (expected truncnorm, uniform or matched)"
            ))),
        }
    }
}

impl fmt::Display for TSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TruncNorm => "truncnorm",
            Self::Uniform => "uniform",
            Self::Matched => "matched",
        })
    }
}

/// Engine switches that are not part of the hyperparameter config.
#[derive(Debug, Clone, Copy)]
pub struct DistillOptions {
    pub t_schedule: TSchedule,
    pub rcv_attention: bool,
    /// SDS weighting `w(t)`.
    pub weighting: fn(f64) -> f64,
}

fn unit_weight(_: f64) -> f64 {
    1.0
}

impl Default for DistillOptions {
    fn default() -> Self {
        Self {
            t_schedule: TSchedule::TruncNorm,
            rcv_attention: true,
            weighting: unit_weight,
        }
    }
}

/// One optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based global optimizer step.
    pub iteration: usize,
    pub outer_step: usize,
    pub tau: f64,
    pub t: f64,
    /// Set when the teacher timestep support was empty (`τ >= b`).
    pub t_clamped: bool,
    pub keyframe: usize,
    pub grad_norm: f64,
    pub lr: f64,
}

/// Receives progress from [`distill`].
pub trait DistillObserver {
    fn on_iteration(&mut self, _record: &IterationRecord) {}
    fn on_outer_step(&mut self, _state: &RunState) {}
}

impl DistillObserver for () {}

#[derive(Debug, Clone)]
pub struct Initialization {
    pub reference_index: usize,
    pub reference_edit: Image,
    pub reference_latent: Latent,
    pub init_latents: LatentBatch,
}

/// Reference edit and initial student latents.
pub fn initialize(
    scene: &Scene,
    task: &EditTask,
    teacher: &dyn TeacherModel,
    student: &dyn StudentModel,
    sigma_student: f64,
    seed: u64,
) -> Result<Initialization> {
    let mut choice = Rng::new(seed, rng::REFERENCE_CHOICE);
    let reference_index = choice.index(scene.len());
    let mut edit_rng = choice.substream("edit");
    let reference_edit = teacher
        .edit(&scene.images()[reference_index], task, &mut edit_rng)
        .map_err(|e| e.context(format!("teacher edit of reference frame {reference_index}")))?;
    let reference_latent = student.encode(&reference_edit)?;
    let mut init = Rng::new(seed, rng::INIT_LATENTS);
    let shape = student.latent_shape().dims();
    let latents = (0..scene.len()).map(|_| init.normal_array(shape, sigma_student)).collect();
    Ok(Initialization {
        reference_index,
        reference_edit,
        reference_latent,
        init_latents: LatentBatch::new(latents, 1.0, LatentSpace::Student)?,
    })
}

fn outer_tau(step: usize, steps: usize) -> f64 {
    (steps - step) as f64 / steps as f64
}

/// One student sampling step from `τ` using the current parameters.
pub fn student_step(
    student: &dyn StudentModel,
    latents: &LatentBatch,
    reference: &Latent,
    poses: &[Pose],
    tau: f64,
    delta_tau: f64,
) -> Result<LatentBatch> {
    let pred = student.predict(latents, reference, poses, tau)?;
    let clean = tweedie_clean_estimate(latents, &pred, student.scheduler(), tau, student.parameterization())?;
    student.scheduler().step(latents, &clean, tau, delta_tau)
}

/// Plain student sampling (no distillation) from `init` at `τ = 1` to 0.
pub fn sample_student(
    student: &dyn StudentModel,
    init: &LatentBatch,
    reference: &Latent,
    poses: &[Pose],
    steps: usize,
) -> Result<LatentBatch> {
    let mut z = init.clone();
    for s in 0..steps {
        let tau = outer_tau(s, steps);
        z = LatentBatch::new(z.into_latents(), tau, LatentSpace::Student)?;
        z = student_step(student, &z, reference, poses, tau, 1.0 / steps as f64)?;
    }
    Ok(z)
}

fn draw_teacher_t(schedule: TSchedule, tau: f64, config: &DistillationConfig, rng: &mut Rng) -> (f64, bool) {
    let b = config.upper_clip_b;
    match schedule {
        TSchedule::TruncNorm => (sample_teacher_timestep(tau, config.skew_f, b, rng), tau >= b),
        TSchedule::Uniform => (0.02 + 0.96 * rng.uniform(), false),
        TSchedule::Matched => (tau.min(b), tau > b),
    }
}

#[derive(Debug, Clone)]
pub struct DistillOutput {
    pub images: Vec<Image>,
    /// Final clean latents in teacher space (what was decoded).
    pub final_latents: LatentBatch,
    pub reference_index: usize,
    pub reference_latent: Latent,
    pub records: Vec<IterationRecord>,
    pub state: RunState,
}

pub fn distill(
    scene: &Scene,
    task: &EditTask,
    teacher: &dyn TeacherModel,
    student: &mut dyn StudentModel,
    config: &DistillationConfig,
    options: &DistillOptions,
    observer: &mut dyn DistillObserver,
) -> Result<DistillOutput> {
    config.validate()?;
    task.validate()?;
    let student_shape = student.latent_shape();
    let teacher_shape = teacher.latent_shape();
    if student_shape.channels != teacher_shape.channels {
        return Err(Error::ChannelMismatch {
            student: student_shape.channels,
            teacher: teacher_shape.channels,
        });
    }

    let init = initialize(scene, task, teacher, &*student, config.sigma_student, config.seed)?;
    let steps = config.num_student_steps;
    let k = config.k_updates_per_step;
    let delta_tau = config.delta_tau();
    let lr_schedule = LrSchedule::from_config(config);
    let mut optimizer = AdamW::new(student.parameters().len());
    let mut keyframe_rng = Rng::new(config.seed, rng::KEYFRAME);
    let mut noise_rng = Rng::new(config.seed, rng::TEACHER_NOISE);
    let mut t_rng = Rng::new(config.seed, rng::TEACHER_TIMESTEP);
    let n = scene.len();

    let mut state = RunState {
        tau: 1.0,
        outer_step: 0,
        iteration: 0,
        latents: init.init_latents.clone(),
        reference_latent: init.reference_latent.clone(),
        reference_index: init.reference_index,
        loss_history: Vec::with_capacity(config.total_iters()),
        checkpoints: Vec::with_capacity(steps),
    };
    let mut records = Vec::with_capacity(config.total_iters());

    for step in 0..steps {
        let tau = outer_tau(step, steps);
        state.tau = tau;
        state.outer_step = step;
        state.latents = LatentBatch::new(state.latents.latents().to_vec(), tau, LatentSpace::Student)?;

        for _ in 0..k {
            let estimate = StudentEstimate {
                student: &*student,
                latents: &state.latents,
                reference: &state.reference_latent,
                poses: scene.poses(),
                tau,
                target: teacher_shape,
            };
            let clean = estimate.clean_estimate()?;
            let (t, t_clamped) = draw_teacher_t(options.t_schedule, tau, config, &mut t_rng);
            let (noisy, noise) = perturb(&clean, t, teacher.schedule(), &mut noise_rng)?;
            let keyframe = choose_keyframe(n, &mut keyframe_rng);
            let routed = options.rcv_attention.then_some(keyframe);
            let teacher_pred = guided_noise(teacher, &noisy, task, scene.images(), t, routed)?;
            let grad = sds_gradient(&estimate, &noise, &teacher_pred, (options.weighting)(t))?;

            state.iteration += 1;
            let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !grad_norm.is_finite() {
                return Err(Error::NonFiniteGradient {
                    iteration: state.iteration,
                    tau,
                    snapshot: Box::new(state.clone()),
                });
            }
            let lr = lr_at(state.iteration, &lr_schedule);
            optimizer.step(student.parameters_mut(), &grad, lr);
            state.loss_history.push(grad_norm);
            let record = IterationRecord {
                iteration: state.iteration,
                outer_step: step,
                tau,
                t,
                t_clamped,
                keyframe,
                grad_norm,
                lr,
            };
            observer.on_iteration(&record);
            records.push(record);
        }

        state.latents = student_step(
            &*student,
            &state.latents,
            &state.reference_latent,
            scene.poses(),
            tau,
            delta_tau,
        )?;
        state.checkpoints.push(Checkpoint {
            tau: state.latents.timestep(),
            latents: state.latents.clone(),
        });
        observer.on_outer_step(&state);
    }
    state.tau = 0.0;

    let final_latents = align_student_to_teacher(&state.latents, teacher_shape)?;
    let images = final_latents
        .latents()
        .iter()
        .map(|l| teacher.decode(l))
        .collect::<Result<Vec<_>>>()?;
    Ok(DistillOutput {
        images,
        final_latents,
        reference_index: init.reference_index,
        reference_latent: init.reference_latent,
        records,
        state,
    })
}
