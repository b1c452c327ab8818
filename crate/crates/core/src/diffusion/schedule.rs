//! Continuous-time noise schedules on `t ∈ [0, 1]`.

use ndarray::Zip;

use crate::error::{Error, Result};
use crate::types::{LatentBatch, LatentSpace};

/// Forward process `z_t = alpha(t)·z_0 + sigma(t)·eps`.
pub trait NoiseSchedule: Send + Sync {
    fn alpha(&self, t: f64) -> f64;
    fn sigma(&self, t: f64) -> f64;
}

/// Variance-preserving schedule obtained from the usual linear-beta
/// discretization (`beta` from `beta_start` to `beta_end` over
/// `train_steps` steps), integrated to continuous time:
/// `log alpha_bar(t) = -train_steps·(beta_start·t + (beta_end - beta_start)·t²/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpLinearSchedule {
    pub beta_start: f64,
    pub beta_end: f64,
    pub train_steps: usize,
}

impl Default for VpLinearSchedule {
    fn default() -> Self {
        Self {
            beta_start: 1e-4,
            beta_end: 0.02,
            train_steps: 1000,
        }
    }
}

impl VpLinearSchedule {
    pub fn alpha_bar(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let n = self.train_steps as f64;
        (-n * (self.beta_start * t + 0.5 * (self.beta_end - self.beta_start) * t * t)).exp()
    }
}

impl NoiseSchedule for VpLinearSchedule {
    fn alpha(&self, t: f64) -> f64 {
        self.alpha_bar(t).sqrt()
    }

    fn sigma(&self, t: f64) -> f64 {
        // -expm1 keeps sigma accurate (and exactly 0) near t = 0
        let n = self.train_steps as f64;
        let t = t.clamp(0.0, 1.0);
        let log_ab = -n * (self.beta_start * t + 0.5 * (self.beta_end - self.beta_start) * t * t);
        (-log_ab.exp_m1()).max(0.0).sqrt()
    }
}

/// Student-side scheduler: initial noise level plus the sampling transition.
pub trait StudentScheduler: NoiseSchedule {
    fn init_sigma(&self) -> f64;

    /// Move `latents` from `tau` to `tau - delta_tau` given a clean estimate.
    /// Defaults to the deterministic DDIM update.
    fn step(&self, latents: &LatentBatch, clean: &LatentBatch, tau: f64, delta_tau: f64) -> Result<LatentBatch> {
        ddim_step(self, latents, clean, tau, delta_tau)
    }
}

pub fn ddim_step<S: NoiseSchedule + ?Sized>(
    schedule: &S,
    latents: &LatentBatch,
    clean: &LatentBatch,
    tau: f64,
    delta_tau: f64,
) -> Result<LatentBatch> {
    crate::types::check_same_shape(latents.latents(), clean.latents(), "student step")?;
    let mut next = tau - delta_tau;
    if next.abs() < 1e-12 {
        next = 0.0;
    }
    if next < 0.0 {
        return Err(Error::InvalidConfig(format!("step from {tau} by {delta_tau} goes below 0")));
    }
    let (a_now, s_now) = (schedule.alpha(tau), schedule.sigma(tau));
    let (a_next, s_next) = (schedule.alpha(next), schedule.sigma(next));
    if s_now <= 0.0 {
        return Err(Error::InvalidConfig(format!("cannot step from noise-free timestep {tau}")));
    }
    let out = latents
        .latents()
        .iter()
        .zip(clean.latents())
        .map(|(z, x0)| {
            let mut out = x0.clone();
            Zip::from(&mut out).and(z).for_each(|o, &zv| {
                let x = *o;
                let eps = (zv - a_now * x) / s_now;
                *o = a_next * x + s_next * eps;
            });
            out
        })
        .collect();
    LatentBatch::new(out, next, LatentSpace::Student)
}

/// DDIM student scheduler on a VP schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdimScheduler {
    pub schedule: VpLinearSchedule,
    pub init_sigma: f64,
}

impl Default for DdimScheduler {
    fn default() -> Self {
        Self {
            schedule: VpLinearSchedule::default(),
            init_sigma: 1.0,
        }
    }
}

impl NoiseSchedule for DdimScheduler {
    fn alpha(&self, t: f64) -> f64 {
        self.schedule.alpha(t)
    }

    fn sigma(&self, t: f64) -> f64 {
        self.schedule.sigma(t)
    }
}

impl StudentScheduler for DdimScheduler {
    fn init_sigma(&self) -> f64 {
        self.init_sigma
    }
}
