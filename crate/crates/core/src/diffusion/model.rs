//! Teacher and student backend contracts.

use serde::{Deserialize, Serialize};

use super::ops::{cfg_compose, tweedie_clean_estimate};
use super::schedule::{ddim_step, NoiseSchedule, StudentScheduler};
use crate::error::Result;
use crate::rng::Rng;
use crate::types::{EditTask, Image, Latent, LatentBatch, LatentShape, LatentSpace, Pose};

/// What the student network outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    Epsilon,
    V,
}

/// Which conditioning signals a teacher pass sees. The three passes are
/// combined by [`cfg_compose`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guidance {
    /// Neither text nor source image.
    Unconditional,
    /// Source image only.
    Image,
    /// Source image and instruction.
    Full,
}

/// Frozen monocular instruction-editing diffusion model.
pub trait TeacherModel {
    fn name(&self) -> &str;

    fn latent_shape(&self) -> LatentShape;

    fn schedule(&self) -> &dyn NoiseSchedule;

    fn encode(&self, image: &Image) -> Result<Latent>;

    fn decode(&self, latent: &Latent) -> Result<Image>;

    /// Noise prediction for every view of `noisy`. With `keyframe` set, the
    /// backend routes its self-attention through the RCV attention of
    /// [`crate::attention::rcv_attention`] with that key frame.
    fn predict_noise(
        &self,
        noisy: &LatentBatch,
        guidance: Guidance,
        task: &EditTask,
        sources: &[Image],
        t: f64,
        keyframe: Option<usize>,
    ) -> Result<Vec<Latent>>;

    /// Full editing pass on a single image.
    fn edit(&self, image: &Image, task: &EditTask, rng: &mut Rng) -> Result<Image> {
        sample_edit(self, image, task, rng, DEFAULT_EDIT_STEPS)
    }

    /// Flattened frozen weights, for integrity checks. Empty when the
    /// backend has none.
    fn parameters(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Trainable multi-view diffusion model.
pub trait StudentModel {
    fn name(&self) -> &str;

    fn parameterization(&self) -> Parameterization;

    fn latent_shape(&self) -> LatentShape;

    fn scheduler(&self) -> &dyn StudentScheduler;

    fn encode(&self, image: &Image) -> Result<Latent>;

    /// Network output (noise or velocity) for every view.
    fn predict(&self, latents: &LatentBatch, reference: &Latent, poses: &[Pose], tau: f64) -> Result<Vec<Latent>>;

    /// Gradient of `Σ_i <cotangent_i, predict(...)_i>` with respect to the
    /// parameters.
    fn predict_vjp(
        &self,
        latents: &LatentBatch,
        reference: &Latent,
        poses: &[Pose],
        tau: f64,
        cotangent: &[Latent],
    ) -> Result<Vec<f64>>;

    fn parameters(&self) -> &[f64];

    fn parameters_mut(&mut self) -> &mut [f64];
}

pub const DEFAULT_EDIT_STEPS: usize = 50;

/// Three teacher passes combined with the task's two guidance scales.
pub fn guided_noise<T: TeacherModel + ?Sized>(
    teacher: &T,
    noisy: &LatentBatch,
    task: &EditTask,
    sources: &[Image],
    t: f64,
    keyframe: Option<usize>,
) -> Result<Vec<Latent>> {
    let uncond = teacher.predict_noise(noisy, Guidance::Unconditional, task, sources, t, keyframe)?;
    let img = teacher.predict_noise(noisy, Guidance::Image, task, sources, t, keyframe)?;
    let full = teacher.predict_noise(noisy, Guidance::Full, task, sources, t, keyframe)?;
    cfg_compose(&uncond, &img, &full, task.text_cfg_scale, task.image_cfg_scale)
}

/// Deterministic DDIM sampling with the teacher, conditioned on one source
/// image.
pub fn sample_edit<T: TeacherModel + ?Sized>(
    teacher: &T,
    image: &Image,
    task: &EditTask,
    rng: &mut Rng,
    steps: usize,
) -> Result<Image> {
    let shape = teacher.latent_shape();
    let schedule = teacher.schedule();
    let sources = std::slice::from_ref(image);
    let mut z = LatentBatch::new(vec![rng.normal_array(shape.dims(), 1.0)], 1.0, LatentSpace::Teacher)?;
    for s in (1..=steps).rev() {
        let t = s as f64 / steps as f64;
        let eps = guided_noise(teacher, &z, task, sources, t, None)?;
        let x0 = tweedie_clean_estimate(&z, &eps, schedule, t, Parameterization::Epsilon)?;
        let mut next = ddim_step(schedule, &z, &x0, t, 1.0 / steps as f64)?;
        if s == 1 {
            next = x0;
        }
        z = LatentBatch::new(next.into_latents(), (s - 1) as f64 / steps as f64, LatentSpace::Teacher)?;
    }
    teacher.decode(&z.latents()[0])
}
