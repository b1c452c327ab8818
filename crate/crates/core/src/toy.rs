//! Gaussian toy world with closed-form teacher and a small trainable
//! student.
//!
//! Each view `i` has clean latents distributed as
//! `N(μ₀(π_i), s²·I)`; the edit instruction `y` shifts the mean by a fixed
//! hash-derived vector `δ(y)`. The teacher's noise prediction is the exact
//! denoising minimizer for the edited Gaussian, so the SDS fixed point and
//! every Tweedie estimate are known in closed form.

use ndarray::{Array2, Array3, Zip};
use sha2::{Digest, Sha256};

use crate::attention::{rcv_attention, self_attention, AttentionBatch};
use crate::diffusion::{
    bilinear_resize, DdimScheduler, Guidance, NoiseSchedule, Parameterization, StudentModel, StudentScheduler,
    TeacherModel, VpLinearSchedule,
};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::{DistillationConfig, EditTask, Image, Latent, LatentBatch, LatentShape, Pose, Scene};

/// Salt of the instruction → shift map. Changing it changes every recorded
/// toy result.
pub const TOY_DELTA_VERSION: &str = "mix2mix-toy-delta-v1";

/// Side length in pixels of one latent cell in toy renderings.
pub const TOY_CELL: usize = 8;

/// Pixel value per latent unit: `pixel = 0.5 + latent / TOY_PIXEL_RANGE`.
const TOY_PIXEL_RANGE: f64 = 8.0;

const DEFAULT_NOISE_SCALE: f64 = 0.02;

/// Latent shape `(1, h, w)` with `h·w = dim` and `h` the largest divisor
/// not above `√dim`.
pub fn toy_latent_shape(dim: usize) -> LatentShape {
    assert!(dim >= 1);
    let mut h = (dim as f64).sqrt().floor() as usize;
    while !dim.is_multiple_of(h) {
        h -= 1;
    }
    LatentShape::new(1, h, dim / h)
}

/// Instruction → mean shift. The empty instruction maps to zero.
pub fn edit_shift(instruction: &str, shape: LatentShape) -> Latent {
    edit_shift_salted(instruction, shape, TOY_DELTA_VERSION)
}

pub(crate) fn edit_shift_salted(instruction: &str, shape: LatentShape, salt: &str) -> Latent {
    let n = shape.numel();
    if instruction.is_empty() {
        return Latent::zeros(shape.dims());
    }
    let mut values = Vec::with_capacity(n);
    let mut block = 0u32;
    while values.len() < n {
        let mut h = Sha256::new();
        h.update(salt.as_bytes());
        h.update([0u8]);
        h.update(instruction.as_bytes());
        h.update(block.to_le_bytes());
        let digest: [u8; 32] = h.finalize().into();
        for pair in digest.chunks_exact(2) {
            let u = f64::from(u16::from_le_bytes([pair[0], pair[1]])) / 65535.0;
            values.push(u - 0.5);
        }
        block += 1;
    }
    values.truncate(n);
    Latent::from_shape_vec(shape.dims(), values).expect("shape matches length")
}

/// Latent ↔ image mapping used by the toy backends: every latent entry is a
/// `TOY_CELL`² grey block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyCodec {
    pub shape: LatentShape,
}

impl ToyCodec {
    pub fn decode(&self, latent: &Latent) -> Result<Image> {
        let (c, h, w) = latent.dim();
        if (c, h, w) != self.shape.dims() {
            return Err(Error::ShapeMismatch(format!(
                "toy decode expects {:?}, got {:?}",
                self.shape.dims(),
                latent.dim()
            )));
        }
        let data = Array3::from_shape_fn((h * TOY_CELL, w * TOY_CELL, 3), |(y, x, ch)| {
            let v = latent[[ch % c, y / TOY_CELL, x / TOY_CELL]];
            (0.5 + v / TOY_PIXEL_RANGE).clamp(0.0, 1.0)
        });
        Image::new(data)
    }

    /// Block-average the image onto the latent grid.
    pub fn encode(&self, image: &Image) -> Result<Latent> {
        let (c, h, w) = self.shape.dims();
        let (ih, iw) = (image.height(), image.width());
        if ih < h || iw < w {
            return Err(Error::ShapeMismatch(format!(
                "image {iw}x{ih} smaller than latent grid {w}x{h}"
            )));
        }
        let mut out = Latent::zeros((c, h, w));
        for gy in 0..h {
            let (y0, y1) = (gy * ih / h, (gy + 1) * ih / h);
            for gx in 0..w {
                let (x0, x1) = (gx * iw / w, (gx + 1) * iw / w);
                for ch in 0..c {
                    let mut acc = 0.0;
                    let mut count = 0.0;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            for k in (ch..3).step_by(c) {
                                acc += image.data[[y, x, k]];
                                count += 1.0;
                            }
                        }
                    }
                    out[[ch, gy, gx]] = (acc / count - 0.5) * TOY_PIXEL_RANGE;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct ToyWorld {
    pub shape: LatentShape,
    pub poses: Vec<Pose>,
    /// Clean per-view means `μ₀(π_i)`.
    pub base_means: Vec<Latent>,
    /// Linear map from pose features to latents: `μ₀(π) = pose_map·feat(π) + offset`.
    pub pose_map: Array2<f64>,
    pub offset: Latent,
    pub noise_scale: f64,
    pub instruction: String,
    pub schedule: VpLinearSchedule,
}

fn orbit_pose(angle: f64, radius: f64, height: f64) -> Pose {
    let (s, c) = angle.sin_cos();
    Pose([
        [c, 0.0, s, radius * s],
        [0.0, 1.0, 0.0, height],
        [-s, 0.0, c, radius * c],
        [0.0, 0.0, 0.0, 1.0],
    ])
}

impl ToyWorld {
    pub fn mean_for_pose(&self, pose: &Pose) -> Latent {
        let feat = ndarray::Array1::from(pose.features().to_vec());
        let flat = self.pose_map.dot(&feat);
        let mut out = self.offset.clone();
        Zip::from(&mut out).and(&flat.into_shape_with_order(self.shape.dims()).expect("pose map rows")).for_each(|o, &f| *o += f);
        out
    }

    pub fn with_instruction(mut self, instruction: &str) -> Self {
        self.instruction = instruction.to_string();
        self
    }

    pub fn delta(&self) -> Latent {
        edit_shift(&self.instruction, self.shape)
    }

    /// Mean of the edited distribution for `view`.
    pub fn edited_mean(&self, view: usize) -> Latent {
        &self.base_means[view] + &self.delta()
    }

    pub fn codec(&self) -> ToyCodec {
        ToyCodec { shape: self.shape }
    }
}

/// Deterministic world with `views` cameras on an orbit and `dim`-dimensional
/// latents, plus the matching rendered scene.
pub fn make_toy_world(views: usize, dim: usize, seed: u64) -> Result<(ToyWorld, Scene)> {
    if views == 0 || dim == 0 {
        return Err(Error::InvalidConfig("toy world needs views >= 1 and dim >= 1".into()));
    }
    let shape = toy_latent_shape(dim);
    let mut rng = Rng::new(seed, "toy-world");
    let poses: Vec<Pose> = (0..views)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / views as f64 + 0.2 * rng.uniform();
            orbit_pose(angle, 2.0 + 0.2 * rng.uniform(), 0.3 * rng.standard_normal())
        })
        .collect();
    let pose_map = Array2::from_shape_simple_fn((dim, 12), || 0.15 * rng.standard_normal());
    let offset = rng.normal_array(shape.dims(), 0.3);
    let mut world = ToyWorld {
        shape,
        poses: poses.clone(),
        base_means: Vec::new(),
        pose_map,
        offset,
        noise_scale: DEFAULT_NOISE_SCALE,
        instruction: String::new(),
        schedule: VpLinearSchedule::default(),
    };
    world.base_means = poses.iter().map(|p| world.mean_for_pose(p)).collect();
    let codec = world.codec();
    let images = world
        .base_means
        .iter()
        .map(|m| codec.decode(m))
        .collect::<Result<Vec<_>>>()?;
    let names = (0..views).map(|i| format!("view_{i:02}")).collect();
    let scene = Scene::new(images, poses, names)?;
    Ok((world, scene))
}

/// `E[z₀ | z_t]` under the edited Gaussian of `view`.
pub fn analytic_posterior_mean(z_t: &Latent, t: f64, world: &ToyWorld, view: usize) -> Latent {
    let alpha = world.schedule.alpha(t);
    let sigma = world.schedule.sigma(t);
    if sigma == 0.0 {
        return z_t.clone();
    }
    let s2 = world.noise_scale * world.noise_scale;
    let gain = alpha * s2 / (alpha * alpha * s2 + sigma * sigma);
    let mean = world.edited_mean(view);
    Zip::from(&mean).and(z_t).map_collect(|&m, &z| m + gain * (z - alpha * m))
}

/// Exact noise prediction for a Gaussian prior `N(target, s²I)`.
fn gaussian_eps(z: &Latent, target: &Latent, alpha: f64, sigma: f64, s2: f64) -> Latent {
    let denom = alpha * alpha * s2 + sigma * sigma;
    Zip::from(z).and(target).map_collect(|&z, &m| sigma * (z - alpha * m) / denom)
}

fn content_key(t: f64, z: &Latent, view: usize) -> u64 {
    let sum: f64 = z.iter().sum();
    t.to_bits() ^ sum.to_bits().rotate_left(17) ^ (view as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Closed-form teacher for the toy world.
///
/// Source images supply the per-view base means (through the codec), the
/// instruction supplies `δ(y)`. With token attention on, each view's shift
/// is routed through attention whose values are the per-row shift tokens,
/// so RCV attention makes every view use the key frame's shift.
#[derive(Debug, Clone)]
pub struct ToyTeacher {
    pub codec: ToyCodec,
    pub schedule: VpLinearSchedule,
    pub noise_scale: f64,
    /// Std of a per-view, per-call perturbation of `δ`. Zero gives the
    /// exact teacher.
    pub edit_jitter: f64,
    pub token_attention: bool,
    delta_salt: String,
}

impl ToyTeacher {
    pub fn new(shape: LatentShape, noise_scale: f64) -> Self {
        Self {
            codec: ToyCodec { shape },
            schedule: VpLinearSchedule::default(),
            noise_scale,
            edit_jitter: 0.0,
            token_attention: true,
            delta_salt: TOY_DELTA_VERSION.to_string(),
        }
    }

    pub fn for_world(world: &ToyWorld) -> Self {
        let mut t = Self::new(world.shape, world.noise_scale);
        t.schedule = world.schedule;
        t
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.edit_jitter = jitter;
        self
    }

    /// Replace the shift salt; only for negative-control checks.
    pub fn with_delta_salt(mut self, salt: &str) -> Self {
        self.delta_salt = salt.to_string();
        self
    }

    pub fn shift(&self, instruction: &str) -> Latent {
        edit_shift_salted(instruction, self.codec.shape, &self.delta_salt)
    }

    fn view_shifts(&self, noisy: &LatentBatch, task: &EditTask, t: f64, keyframe: Option<usize>) -> Result<Vec<Latent>> {
        let delta = self.shift(&task.instruction);
        let shifts: Vec<Latent> = noisy
            .latents()
            .iter()
            .enumerate()
            .map(|(i, z)| {
                if self.edit_jitter > 0.0 {
                    let mut rng = Rng::new(content_key(t, z, i), "toy-teacher-jitter");
                    &delta + &rng.normal_array(delta.dim(), self.edit_jitter)
                } else {
                    delta.clone()
                }
            })
            .collect();
        if !self.token_attention {
            return Ok(shifts);
        }
        // tokens are latent rows; positional queries/keys make each token
        // attend (to within e^-60) to the same row of the source frame
        let (c, h, w) = self.codec.shape.dims();
        let n = shifts.len();
        let rows = c * h;
        let gain = (60.0 * (rows as f64).sqrt()).sqrt();
        let pos = Array2::from_shape_fn((rows, rows), |(a, b)| if a == b { gain } else { 0.0 });
        let mut q = Array3::zeros((n, rows, rows));
        let mut v = Array3::zeros((n, rows, w));
        for (i, s) in shifts.iter().enumerate() {
            q.index_axis_mut(ndarray::Axis(0), i).assign(&pos);
            let flat = s.to_shape((rows, w)).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
            v.index_axis_mut(ndarray::Axis(0), i).assign(&flat);
        }
        let batch = AttentionBatch::new(q.clone(), q, v)?;
        let out = match keyframe {
            Some(k) => rcv_attention(&batch, k)?,
            None => self_attention(&batch),
        };
        Ok((0..n)
            .map(|i| {
                out.index_axis(ndarray::Axis(0), i)
                    .to_owned()
                    .into_shape_with_order((c, h, w))
                    .expect("row tokens reshape")
            })
            .collect())
    }
}

impl TeacherModel for ToyTeacher {
    fn name(&self) -> &str {
        "toy-teacher"
    }

    fn latent_shape(&self) -> LatentShape {
        self.codec.shape
    }

    fn schedule(&self) -> &dyn NoiseSchedule {
        &self.schedule
    }

    fn encode(&self, image: &Image) -> Result<Latent> {
        self.codec.encode(image)
    }

    fn decode(&self, latent: &Latent) -> Result<Image> {
        self.codec.decode(latent)
    }

    fn predict_noise(
        &self,
        noisy: &LatentBatch,
        guidance: Guidance,
        task: &EditTask,
        sources: &[Image],
        t: f64,
        keyframe: Option<usize>,
    ) -> Result<Vec<Latent>> {
        if sources.len() != noisy.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} source images for {} latents",
                sources.len(),
                noisy.len()
            )));
        }
        if let Some(k) = keyframe {
            if k >= noisy.len() {
                return Err(Error::KeyframeOutOfRange { index: k, n: noisy.len() });
            }
        }
        let alpha = self.schedule.alpha(t);
        let sigma = self.schedule.sigma(t);
        let s2 = self.noise_scale * self.noise_scale;
        let shifts = match guidance {
            Guidance::Full => Some(self.view_shifts(noisy, task, t, keyframe)?),
            _ => None,
        };
        noisy
            .latents()
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let target = match guidance {
                    Guidance::Unconditional => Latent::zeros(z.dim()),
                    Guidance::Image => self.codec.encode(&sources[i])?,
                    Guidance::Full => self.codec.encode(&sources[i])? + &shifts.as_ref().expect("full guidance")[i],
                };
                Ok(gaussian_eps(z, &target, alpha, sigma, s2))
            })
            .collect()
    }

    fn parameters(&self) -> Vec<f64> {
        vec![
            self.noise_scale,
            self.edit_jitter,
            self.schedule.beta_start,
            self.schedule.beta_end,
        ]
    }
}

/// Small MLP student.
///
/// The student's implied clean distribution for view `i` is
/// `N(m_i(θ), s²I)` with
/// `m_i(θ) = prior(π_i) + W₂·tanh(W₁·[feat(π_i); z_ref; τ] + b₁) + b₂`,
/// and it outputs the exact noise prediction for that Gaussian. `prior`
/// is the fixed scene knowledge (per-pose means). `W₂` and `b₂` start at
/// zero, so the untrained student reproduces the unedited scene.
#[derive(Debug, Clone)]
pub struct ToyStudent {
    shape: LatentShape,
    /// Grid the images are rendered on; encodings are resized from it.
    source_codec: ToyCodec,
    scheduler: DdimScheduler,
    noise_scale: f64,
    prior: Vec<(Pose, Latent)>,
    hidden: usize,
    input_dim: usize,
    params: Vec<f64>,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

impl ToyStudent {
    pub const DEFAULT_HIDDEN: usize = 8;

    pub fn new(
        shape: LatentShape,
        source_codec: ToyCodec,
        noise_scale: f64,
        prior: Vec<(Pose, Latent)>,
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        if prior.iter().any(|(_, m)| LatentShape::of(m) != shape) {
            return Err(Error::ShapeMismatch("prior means must match the student latent shape".into()));
        }
        let dim = shape.numel();
        let input_dim = 12 + dim + 1;
        let n_params = hidden * input_dim + hidden + dim * hidden + dim;
        let mut params = vec![0.0; n_params];
        let mut rng = Rng::new(seed, "toy-student-init");
        let std = 1.0 / (input_dim as f64).sqrt();
        for p in &mut params[..hidden * input_dim] {
            *p = std * rng.standard_normal();
        }
        Ok(Self {
            shape,
            source_codec,
            scheduler: DdimScheduler::default(),
            noise_scale,
            prior,
            hidden,
            input_dim,
            params,
        })
    }

    /// Student at the world's resolution (or `shape` if given) with the
    /// world's clean means as prior.
    pub fn for_world(world: &ToyWorld, shape: Option<LatentShape>, seed: u64) -> Result<Self> {
        let shape = shape.unwrap_or(world.shape);
        let prior = world
            .poses
            .iter()
            .zip(&world.base_means)
            .map(|(p, m)| (*p, bilinear_resize(m, shape.height, shape.width)))
            .collect();
        Self::new(shape, world.codec(), world.noise_scale, prior, Self::DEFAULT_HIDDEN, seed)
    }

    fn layout(&self) -> Layout {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input_dim;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.shape.numel() * self.hidden;
        Layout { w1, b1, w2, b2 }
    }

    fn prior_mean(&self, pose: &Pose) -> Latent {
        let dist = |p: &Pose| -> f64 {
            p.0.iter()
                .flatten()
                .zip(pose.0.iter().flatten())
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        self.prior
            .iter()
            .min_by(|a, b| dist(&a.0).total_cmp(&dist(&b.0)))
            .map(|(_, m)| m.clone())
            .unwrap_or_else(|| Latent::zeros(self.shape.dims()))
    }

    fn input(&self, pose: &Pose, reference: &Latent, tau: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim);
        x.extend_from_slice(&pose.features());
        x.extend(reference.iter().copied());
        x.push(tau);
        x
    }

    /// `(m_i, hidden activations, input)` for one view.
    fn forward(&self, pose: &Pose, reference: &Latent, tau: f64) -> (Latent, Vec<f64>, Vec<f64>) {
        let l = self.layout();
        let x = self.input(pose, reference, tau);
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.params[l.w1 + j * self.input_dim..l.w1 + (j + 1) * self.input_dim];
                let a: f64 = row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>() + self.params[l.b1 + j];
                a.tanh()
            })
            .collect();
        let mut m = self.prior_mean(pose);
        for (d, out) in m.iter_mut().enumerate() {
            let row = &self.params[l.w2 + d * self.hidden..l.w2 + (d + 1) * self.hidden];
            *out += row.iter().zip(&h).map(|(w, hj)| w * hj).sum::<f64>() + self.params[l.b2 + d];
        }
        (m, h, x)
    }

    /// Mean `m_i(θ)` the student currently assigns to `pose`.
    pub fn mean(&self, pose: &Pose, reference: &Latent, tau: f64) -> Latent {
        self.forward(pose, reference, tau).0
    }

    fn check_inputs(&self, latents: &LatentBatch, reference: &Latent, poses: &[Pose]) -> Result<()> {
        if poses.len() != latents.len() {
            return Err(Error::ShapeMismatch(format!("{} poses for {} latents", poses.len(), latents.len())));
        }
        if LatentShape::of(reference) != self.shape || latents.shape().is_some_and(|s| s != self.shape) {
            return Err(Error::ShapeMismatch(format!(
                "toy student expects latents of shape {:?}",
                self.shape.dims()
            )));
        }
        Ok(())
    }
}

impl StudentModel for ToyStudent {
    fn name(&self) -> &str {
        "toy-student"
    }

    fn parameterization(&self) -> Parameterization {
        Parameterization::Epsilon
    }

    fn latent_shape(&self) -> LatentShape {
        self.shape
    }

    fn scheduler(&self) -> &dyn StudentScheduler {
        &self.scheduler
    }

    fn encode(&self, image: &Image) -> Result<Latent> {
        let grid = self.source_codec.encode(image)?;
        Ok(bilinear_resize(&grid, self.shape.height, self.shape.width))
    }

    fn predict(&self, latents: &LatentBatch, reference: &Latent, poses: &[Pose], tau: f64) -> Result<Vec<Latent>> {
        self.check_inputs(latents, reference, poses)?;
        let alpha = self.scheduler.alpha(tau);
        let sigma = self.scheduler.sigma(tau);
        let s2 = self.noise_scale * self.noise_scale;
        Ok(latents
            .latents()
            .iter()
            .zip(poses)
            .map(|(z, pose)| gaussian_eps(z, &self.mean(pose, reference, tau), alpha, sigma, s2))
            .collect())
    }

    fn predict_vjp(
        &self,
        latents: &LatentBatch,
        reference: &Latent,
        poses: &[Pose],
        tau: f64,
        cotangent: &[Latent],
    ) -> Result<Vec<f64>> {
        self.check_inputs(latents, reference, poses)?;
        if cotangent.len() != latents.len() || cotangent.iter().any(|c| LatentShape::of(c) != self.shape) {
            return Err(Error::ShapeMismatch("cotangent must match the latent batch".into()));
        }
        let alpha = self.scheduler.alpha(tau);
        let sigma = self.scheduler.sigma(tau);
        let s2 = self.noise_scale * self.noise_scale;
        // ∂eps/∂m for the Gaussian noise prediction
        let dm = -sigma * alpha / (alpha * alpha * s2 + sigma * sigma);
        let l = self.layout();
        let mut grad = vec![0.0; self.params.len()];
        for (pose, cot) in poses.iter().zip(cotangent) {
            let (_, h, x) = self.forward(pose, reference, tau);
            let gm: Vec<f64> = cot.iter().map(|c| c * dm).collect();
            let mut gh = vec![0.0; self.hidden];
            for (d, &g) in gm.iter().enumerate() {
                grad[l.b2 + d] += g;
                for j in 0..self.hidden {
                    grad[l.w2 + d * self.hidden + j] += g * h[j];
                    gh[j] += self.params[l.w2 + d * self.hidden + j] * g;
                }
            }
            for j in 0..self.hidden {
                let ga = gh[j] * (1.0 - h[j] * h[j]);
                grad[l.b1 + j] += ga;
                for (i, xi) in x.iter().enumerate() {
                    grad[l.w1 + j * self.input_dim + i] += ga * xi;
                }
            }
        }
        Ok(grad)
    }

    fn parameters(&self) -> &[f64] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

/// Hyperparameters sized for the toy world: short loop, unit guidance
/// scales (so the guided teacher is exactly the edited Gaussian) and a
/// learning rate large enough to move the student within 400 steps.
pub fn toy_config() -> DistillationConfig {
    DistillationConfig {
        num_student_steps: 20,
        k_updates_per_step: 20,
        max_lr: 1e-2,
        min_lr: 1e-3,
        warmup_iters: 20,
        text_cfg: 1.0,
        image_cfg: 1.0,
        ..DistillationConfig::default()
    }
}

/// Toy backends for an arbitrary scene: the teacher works at the default
/// 4×4 grid, the student's prior is the encoded source frames.
pub fn toy_pair_for_scene(scene: &Scene, seed: u64) -> Result<(ToyTeacher, ToyStudent)> {
    let shape = toy_latent_shape(16);
    let teacher = ToyTeacher::new(shape, DEFAULT_NOISE_SCALE);
    let prior = scene
        .poses()
        .iter()
        .zip(scene.images())
        .map(|(p, im)| Ok((*p, teacher.codec.encode(im)?)))
        .collect::<Result<Vec<_>>>()?;
    let student = ToyStudent::new(shape, teacher.codec, DEFAULT_NOISE_SCALE, prior, ToyStudent::DEFAULT_HIDDEN, seed)?;
    Ok((teacher, student))
}
