//! Averaged score-distillation gradient.
//!
//! The gradient is that of the surrogate
//! `L(θ) = (1/N) Σ_i w(t)·<stopgrad(ε̃_i - ε_i), ẑ_0^i(θ)>`,
//! which is assembled as one vector-Jacobian product of the clean estimate
//! with cotangent `w(t)·(ε̃_i - ε_i)/N`. The teacher output never receives
//! a derivative.

use crate::diffusion::{align_student_to_teacher, bilinear_resize_adjoint, tweedie_clean_estimate, tweedie_prediction_jacobian, StudentModel};
use crate::error::{Error, Result};
use crate::types::{check_same_shape, inner, Latent, LatentBatch, LatentShape, Pose};

/// A teacher-space clean estimate that can be differentiated with respect
/// to the trainable parameters.
pub trait DifferentiableEstimate {
    fn num_params(&self) -> usize;

    fn clean_estimate(&self) -> Result<LatentBatch>;

    /// `∂/∂θ Σ_i <cotangent_i, ẑ_0^i(θ)>`.
    fn vjp(&self, cotangent: &[Latent]) -> Result<Vec<f64>>;
}

fn residuals(noise: &[Latent], teacher_pred: &[Latent], weight: f64) -> Result<Vec<Latent>> {
    check_same_shape(noise, teacher_pred, "sds residual")?;
    if noise.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let scale = weight / noise.len() as f64;
    Ok(teacher_pred
        .iter()
        .zip(noise)
        .map(|(tp, n)| (tp - n) * scale)
        .collect())
}

pub fn sds_gradient(
    estimate: &dyn DifferentiableEstimate,
    noise: &[Latent],
    teacher_pred: &[Latent],
    weight: f64,
) -> Result<Vec<f64>> {
    let cot = residuals(noise, teacher_pred, weight)?;
    let grad = estimate.vjp(&cot)?;
    if grad.len() != estimate.num_params() {
        return Err(Error::ShapeMismatch(format!(
            "gradient has {} entries for {} parameters",
            grad.len(),
            estimate.num_params()
        )));
    }
    Ok(grad)
}

/// Value of the surrogate loss at the given clean estimate.
pub fn surrogate_loss(clean: &[Latent], noise: &[Latent], teacher_pred: &[Latent], weight: f64) -> Result<f64> {
    let cot = residuals(noise, teacher_pred, weight)?;
    check_same_shape(clean, &cot, "surrogate loss")?;
    Ok(clean.iter().zip(&cot).map(|(z, r)| inner(z, r)).sum())
}

/// Student single-step prediction, Tweedie estimate and bilinear alignment
/// as one differentiable map of the student's parameters.
pub struct StudentEstimate<'a> {
    pub student: &'a dyn StudentModel,
    pub latents: &'a LatentBatch,
    pub reference: &'a Latent,
    pub poses: &'a [Pose],
    pub tau: f64,
    pub target: LatentShape,
}

impl StudentEstimate<'_> {
    /// Clean estimate in student space, before alignment.
    pub fn student_clean_estimate(&self) -> Result<LatentBatch> {
        let pred = self.student.predict(self.latents, self.reference, self.poses, self.tau)?;
        tweedie_clean_estimate(
            self.latents,
            &pred,
            self.student.scheduler(),
            self.tau,
            self.student.parameterization(),
        )
    }
}

impl DifferentiableEstimate for StudentEstimate<'_> {
    fn num_params(&self) -> usize {
        self.student.parameters().len()
    }

    fn clean_estimate(&self) -> Result<LatentBatch> {
        align_student_to_teacher(&self.student_clean_estimate()?, self.target)
    }

    fn vjp(&self, cotangent: &[Latent]) -> Result<Vec<f64>> {
        let shape = self.student.latent_shape();
        if cotangent.len() != self.latents.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} cotangents for {} views",
                cotangent.len(),
                self.latents.len()
            )));
        }
        let jac = tweedie_prediction_jacobian(self.student.scheduler(), self.tau, self.student.parameterization())?;
        let mut pulled = Vec::with_capacity(cotangent.len());
        for c in cotangent {
            if LatentShape::of(c) != self.target {
                return Err(Error::ShapeMismatch(format!(
                    "cotangent shape {:?} != teacher latent shape {:?}",
                    c.dim(),
                    self.target.dims()
                )));
            }
            pulled.push(bilinear_resize_adjoint(c, shape.height, shape.width) * jac);
        }
        self.student
            .predict_vjp(self.latents, self.reference, self.poses, self.tau, &pulled)
    }
}
