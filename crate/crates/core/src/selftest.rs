//! Toy-world checks run by `mix2mix selftest`.
//!
//! Each check reports a measured value against a threshold. The
//! experiment helpers are public so the integration tests can run the
//! same measurements.

use sha2::{Digest, Sha256};

use crate::diffusion::{tweedie_clean_estimate, Guidance, Parameterization, StudentModel, TeacherModel};
use crate::engine::{distill, surrogate_loss, DifferentiableEstimate, DistillOptions, StudentEstimate};
use crate::error::Result;
use crate::rng::Rng;
use crate::stats::{binomial_sign_test, fisher_exact, ContingencyTable};
use crate::toy::{analytic_posterior_mean, make_toy_world, toy_config, ToyStudent, ToyTeacher, ToyWorld};
use crate::types::{EditTask, Latent, LatentBatch, LatentShape, LatentSpace};

/// Instruction used by the toy experiments.
pub const TOY_INSTRUCTION: &str = "make it snowy";

/// SHA-256 of the little-endian bytes of the 4×4 shift for
/// [`TOY_INSTRUCTION`].
pub const DELTA_FINGERPRINT: &str = "99b6ba96352d0495c4b219934ff521940f05d08fd456d7f191fbb350b4642c92";

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn below(name: &'static str, measured: f64, threshold: f64) -> Self {
        Self {
            name,
            measured,
            threshold,
            passed: measured < threshold,
            detail: format!("{measured:.3e} < {threshold:.3e}"),
        }
    }

    fn above(name: &'static str, measured: f64, threshold: f64) -> Self {
        Self {
            name,
            measured,
            threshold,
            passed: measured > threshold,
            detail: format!("{measured:.3e} > {threshold:.3e}"),
        }
    }

    fn failed(name: &'static str, err: &crate::Error) -> Self {
        Self {
            name,
            measured: f64::NAN,
            threshold: f64::NAN,
            passed: false,
            detail: format!("error: {err}"),
        }
    }
}

/// Hex SHA-256 of the teacher's shift for [`TOY_INSTRUCTION`].
pub fn delta_fingerprint(teacher: &ToyTeacher) -> String {
    let shift = teacher.shift(TOY_INSTRUCTION);
    let mut h = Sha256::new();
    for v in shift.iter() {
        h.update(v.to_le_bytes());
    }
    let digest: [u8; 32] = h.finalize().into();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn norm(x: &Latent) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Per-view shifts `out_i − μ₀(π_i)`.
fn shifts(world: &ToyWorld, outputs: &[Latent]) -> Vec<Latent> {
    outputs.iter().zip(&world.base_means).map(|(o, m)| o - m).collect()
}

fn mean_latent(xs: &[Latent]) -> Latent {
    let mut acc = Latent::zeros(xs[0].dim());
    for x in xs {
        acc += x;
    }
    acc / xs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    /// `‖mean_i(out_i − μ₀_i) − δ‖`.
    pub error: f64,
    pub delta_norm: f64,
}

impl Convergence {
    pub fn ratio(&self) -> f64 {
        self.error / self.delta_norm
    }
}

/// Distill on a 4-view, 16-dimensional toy world and compare the mean
/// output shift with the true `δ`.
pub fn toy_convergence(
    seed: u64,
    steps: usize,
    k: usize,
    student_shape: Option<LatentShape>,
    teacher: Option<ToyTeacher>,
) -> Result<Convergence> {
    let (world, scene) = make_toy_world(4, 16, seed)?;
    let world = world.with_instruction(TOY_INSTRUCTION);
    let teacher = teacher.unwrap_or_else(|| ToyTeacher::for_world(&world));
    let mut student = ToyStudent::for_world(&world, student_shape, seed)?;
    let mut config = toy_config();
    config.num_student_steps = steps;
    config.k_updates_per_step = k;
    config.seed = seed;
    let task = EditTask::new(TOY_INSTRUCTION, config.text_cfg, config.image_cfg)?;
    let out = distill(&scene, &task, &teacher, &mut student, &config, &DistillOptions::default(), &mut ())?;
    let mean_shift = mean_latent(&shifts(&world, out.final_latents.latents()));
    let delta = world.delta();
    Ok(Convergence {
        error: norm(&(&mean_shift - &delta)),
        delta_norm: norm(&delta),
    })
}

fn mean_pairwise_distance(xs: &[Latent]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            total += norm(&(&xs[i] - &xs[j]));
            pairs += 1.0;
        }
    }
    total / pairs
}

/// Mean variance across views, averaged over latent entries.
fn cross_view_variance(xs: &[Latent]) -> f64 {
    let mean = mean_latent(xs);
    let n = xs.len() as f64;
    let ss: f64 = xs.iter().map(|x| (x - &mean).iter().map(|v| v * v).sum::<f64>()).sum();
    ss / ((n - 1.0) * mean.len() as f64)
}

/// Std of the teacher's per-view perturbation of `δ` in the disagreement
/// and variance experiments.
pub const TOY_JITTER: f64 = 0.3;

fn jittered_run(seed: u64, rcv: bool) -> Result<(ToyWorld, Vec<Latent>)> {
    let (world, scene) = make_toy_world(4, 16, seed)?;
    let world = world.with_instruction(TOY_INSTRUCTION);
    let teacher = ToyTeacher::for_world(&world).with_jitter(TOY_JITTER);
    let mut student = ToyStudent::for_world(&world, None, seed)?;
    let mut config = toy_config();
    config.seed = seed;
    let task = EditTask::new(TOY_INSTRUCTION, config.text_cfg, config.image_cfg)?;
    let options = DistillOptions {
        rcv_attention: rcv,
        ..DistillOptions::default()
    };
    let out = distill(&scene, &task, &teacher, &mut student, &config, &options, &mut ())?;
    let s = shifts(&world, out.final_latents.latents());
    Ok((world, s))
}

/// Mean pairwise distance between per-view edit shifts after distilling
/// against a teacher whose shift is perturbed independently per view.
pub fn cross_view_disagreement(seed: u64, rcv: bool) -> Result<f64> {
    Ok(mean_pairwise_distance(&jittered_run(seed, rcv)?.1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftVariance {
    /// Cross-view variance of shifts from independent per-view teacher edits.
    pub teacher_only: f64,
    /// Cross-view variance of shifts from the distilled student.
    pub distilled: f64,
}

impl ShiftVariance {
    pub fn ratio(&self) -> f64 {
        self.teacher_only / self.distilled
    }
}

pub fn shift_variance(seed: u64) -> Result<ShiftVariance> {
    let (world, distilled) = jittered_run(seed, true)?;
    let teacher = ToyTeacher::for_world(&world).with_jitter(TOY_JITTER);
    let codec = world.codec();
    let task = EditTask::new(TOY_INSTRUCTION, 1.0, 1.0)?;
    let rng = Rng::new(seed, "teacher-only");
    let mut edits = Vec::with_capacity(world.base_means.len());
    for (i, m) in world.base_means.iter().enumerate() {
        let mut view_rng = rng.substream(&i.to_string());
        let edited = teacher.edit(&codec.decode(m)?, &task, &mut view_rng)?;
        edits.push(codec.encode(&edited)?);
    }
    Ok(ShiftVariance {
        teacher_only: cross_view_variance(&shifts(&world, &edits)),
        distilled: cross_view_variance(&distilled),
    })
}

/// Largest deviation between the teacher's Tweedie estimate and the
/// closed-form posterior mean over random latents and timesteps.
pub fn tweedie_oracle_error(seed: u64, cases: usize) -> Result<f64> {
    let (world, scene) = make_toy_world(3, 16, seed)?;
    let world = world.with_instruction(TOY_INSTRUCTION);
    let teacher = ToyTeacher::for_world(&world);
    let task = EditTask::new(TOY_INSTRUCTION, 1.0, 1.0)?;
    let mut rng = Rng::new(seed, "tweedie-oracle");
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let t = 0.05 + 0.9 * rng.uniform();
        let z: Vec<Latent> = (0..3).map(|_| rng.normal_array(world.shape.dims(), 1.0)).collect();
        let batch = LatentBatch::new(z.clone(), t, LatentSpace::Teacher)?;
        let eps = teacher.predict_noise(&batch, Guidance::Full, &task, scene.images(), t, Some(0))?;
        let est = tweedie_clean_estimate(&batch, &eps, teacher.schedule(), t, Parameterization::Epsilon)?;
        for (v, e) in est.latents().iter().enumerate() {
            let exact = analytic_posterior_mean(&z[v], t, &world, v);
            worst = worst.max((e - &exact).iter().fold(0.0, |m: f64, x| m.max(x.abs())));
        }
    }
    Ok(worst)
}

/// Worst relative error `‖g − g_fd‖ / ‖g_fd‖` between the SDS gradient
/// and central differences of the surrogate loss, with a 3×3 student
/// aligned to the 4×4 teacher.
pub fn sds_finite_difference_error(seed: u64, draws: usize) -> Result<f64> {
    let (world, scene) = make_toy_world(3, 16, seed)?;
    let mut student = ToyStudent::for_world(&world, Some(LatentShape::new(1, 3, 3)), seed)?;
    let mut rng = Rng::new(seed, "sds-fd");
    let reference = student.encode(&scene.images()[0])?;
    let mut worst: f64 = 0.0;
    let base = student.parameters().to_vec();
    for _ in 0..draws {
        for (p, b) in student.parameters_mut().iter_mut().zip(&base) {
            *p = b + 0.3 * rng.standard_normal();
        }
        let tau = 0.05 + 0.9 * rng.uniform();
        let z: Vec<Latent> = (0..3).map(|_| rng.normal_array((1, 3, 3), 1.0)).collect();
        let latents = LatentBatch::new(z, tau, LatentSpace::Student)?;
        let noise: Vec<Latent> = (0..3).map(|_| rng.normal_array(world.shape.dims(), 1.0)).collect();
        let teacher_pred: Vec<Latent> = (0..3).map(|_| rng.normal_array(world.shape.dims(), 1.0)).collect();
        let estimate = |s: &ToyStudent| -> Result<f64> {
            let est = StudentEstimate {
                student: s,
                latents: &latents,
                reference: &reference,
                poses: &world.poses,
                tau,
                target: world.shape,
            };
            surrogate_loss(est.clean_estimate()?.latents(), &noise, &teacher_pred, 1.0)
        };
        let grad = {
            let est = StudentEstimate {
                student: &student,
                latents: &latents,
                reference: &reference,
                poses: &world.poses,
                tau,
                target: world.shape,
            };
            crate::engine::sds_gradient(&est, &noise, &teacher_pred, 1.0)?
        };
        let h = 1e-5;
        let mut diff2 = 0.0;
        let mut fd2 = 0.0;
        for (i, g) in grad.iter().enumerate() {
            let orig = student.parameters()[i];
            student.parameters_mut()[i] = orig + h;
            let up = estimate(&student)?;
            student.parameters_mut()[i] = orig - h;
            let down = estimate(&student)?;
            student.parameters_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            diff2 += (g - fd) * (g - fd);
            fd2 += fd * fd;
        }
        worst = worst.max((diff2 / fd2).sqrt());
    }
    Ok(worst)
}

fn check(name: &'static str, run: impl FnOnce() -> Result<Check>) -> Check {
    run().unwrap_or_else(|e| Check::failed(name, &e))
}

/// Run every check. `corrupt_delta_map` swaps the teacher's shift salt, a
/// negative control that must make the fingerprint and convergence checks
/// fail.
pub fn run_selftest(quick: bool, corrupt_delta_map: bool) -> Vec<Check> {
    let (world, _) = make_toy_world(4, 16, 0).expect("toy world");
    let mut teacher = ToyTeacher::for_world(&world);
    if corrupt_delta_map {
        teacher = teacher.with_delta_salt("corrupted");
    }
    let fd_draws = if quick { 5 } else { 100 };
    let tweedie_cases = if quick { 100 } else { 1000 };
    let mut checks = Vec::new();

    let fp = delta_fingerprint(&teacher);
    checks.push(Check {
        name: "delta-map-fingerprint",
        measured: f64::from(u8::from(fp == DELTA_FINGERPRINT)),
        threshold: 1.0,
        passed: fp == DELTA_FINGERPRINT,
        detail: format!("{fp} vs frozen {DELTA_FINGERPRINT}"),
    });
    checks.push(check("tweedie-posterior", || {
        Ok(Check::below("tweedie-posterior", tweedie_oracle_error(0, tweedie_cases)?, 1e-8))
    }));
    checks.push(check("sds-finite-difference", || {
        Ok(Check::below("sds-finite-difference", sds_finite_difference_error(0, fd_draws)?, 1e-4))
    }));
    checks.push(check("toy-convergence", || {
        let c = toy_convergence(0, 20, 20, None, Some(teacher.clone()))?;
        Ok(Check::below("toy-convergence", c.ratio(), 0.1))
    }));
    if !quick {
        checks.push(check("toy-convergence-resized", || {
            let untrained = toy_convergence(0, 20, 0, Some(LatentShape::new(1, 3, 3)), Some(teacher.clone()))?;
            let trained = toy_convergence(0, 20, 20, Some(LatentShape::new(1, 3, 3)), Some(teacher.clone()))?;
            Ok(Check::below("toy-convergence-resized", trained.error / untrained.error, 0.8))
        }));
        checks.push(check("rcv-disagreement", || {
            let on = cross_view_disagreement(0, true)?;
            let off = cross_view_disagreement(0, false)?;
            Ok(Check::below("rcv-disagreement", on / off, 1.0))
        }));
        checks.push(check("teacher-only-variance", || {
            Ok(Check::above("teacher-only-variance", shift_variance(0)?.ratio(), 2.0))
        }));
    }
    checks.push(check("binomial-reference", || {
        let r = binomial_sign_test(15, 20)?;
        let err = (r.p_one_sided - 0.020695).abs().max((r.p_two_sided - 0.041389).abs());
        Ok(Check::below("binomial-reference", err, 1e-6))
    }));
    checks.push(check("fisher-reference", || {
        let r = fisher_exact(&ContingencyTable::new([[13, 87], [31, 69]])?);
        Ok(Check::below("fisher-reference", (r.p_two_sided - 0.003405).abs(), 5e-6))
    }));
    checks
}
