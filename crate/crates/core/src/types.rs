//! Domain types shared by every module.

use std::path::Path;

use ndarray::{Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single latent tensor of shape `(C, h, w)`.
pub type Latent = Array3<f64>;

/// `(channels, height, width)` of a latent tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl LatentShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn numel(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn of(latent: &Latent) -> Self {
        let (c, h, w) = latent.dim();
        Self::new(c, h, w)
    }
}

/// RGB image with values in `[0, 1]`, stored as `(H, W, 3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub data: Array3<f64>,
}

impl Image {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.dim().2 != 3 {
            return Err(Error::ShapeMismatch(format!(
                "image must have 3 channels, got {}",
                data.dim().2
            )));
        }
        Ok(Self { data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            data: Array3::from_elem((height, width, 3), value),
        }
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let (h, w, _) = self.data.dim();
        image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let px = |c: usize| (self.data[[y as usize, x as usize, c]].clamp(0.0, 1.0) * 255.0).round() as u8;
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
            f64::from(img.get_pixel(x as u32, y as u32)[c]) / 255.0
        });
        Self { data }
    }
}

/// Camera-to-world 4×4 pose, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose(pub [[f64; 4]; 4]);

impl Pose {
    pub const IDENTITY: Pose = Pose([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]);

    pub fn is_homogeneous(&self) -> bool {
        self.0[3] == [0.0, 0.0, 0.0, 1.0]
    }

    /// The top 3×4 block, flattened row-major.
    pub fn features(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            out[r * 4..r * 4 + 4].copy_from_slice(&self.0[r]);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    images: Vec<Image>,
    poses: Vec<Pose>,
    names: Vec<String>,
}

impl Scene {
    pub fn new(images: Vec<Image>, poses: Vec<Pose>, names: Vec<String>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::InvalidScene("scene needs at least one view".into()));
        }
        if images.len() != poses.len() || images.len() != names.len() {
            return Err(Error::PoseMismatch(format!(
                "{} images, {} poses, {} names",
                images.len(),
                poses.len(),
                names.len()
            )));
        }
        if let Some(i) = poses.iter().position(|p| !p.is_homogeneous()) {
            return Err(Error::InvalidScene(format!(
                "pose of '{}' does not have bottom row (0,0,0,1)",
                names[i]
            )));
        }
        let (h, w) = (images[0].height(), images[0].width());
        if let Some(i) = images.iter().position(|im| im.height() != h || im.width() != w) {
            return Err(Error::InvalidScene(format!(
                "image '{}' is {}x{}, expected {}x{}",
                names[i],
                images[i].width(),
                images[i].height(),
                w,
                h
            )));
        }
        Ok(Self {
            images,
            poses,
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.images[0].height(), self.images[0].width())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditTask {
    pub instruction: String,
    pub original_caption: String,
    pub edited_caption: String,
    pub text_cfg_scale: f64,
    pub image_cfg_scale: f64,
}

impl EditTask {
    pub fn new(instruction: impl Into<String>, text_cfg_scale: f64, image_cfg_scale: f64) -> Result<Self> {
        let task = Self {
            instruction: instruction.into(),
            original_caption: String::new(),
            edited_caption: String::new(),
            text_cfg_scale,
            image_cfg_scale,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn with_captions(mut self, original: impl Into<String>, edited: impl Into<String>) -> Self {
        self.original_caption = original.into();
        self.edited_caption = edited.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.instruction.trim().is_empty() {
            return Err(Error::InvalidConfig("edit instruction must be non-empty".into()));
        }
        if !(self.text_cfg_scale >= 1.0 && self.image_cfg_scale >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "CFG scales must be >= 1 (text {}, image {})",
                self.text_cfg_scale, self.image_cfg_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentSpace {
    Student,
    Teacher,
}

/// A batch of per-view latents at a common timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    data: Vec<Latent>,
    timestep: f64,
    space: LatentSpace,
}

impl LatentBatch {
    pub fn new(data: Vec<Latent>, timestep: f64, space: LatentSpace) -> Result<Self> {
        if !(0.0..=1.0).contains(&timestep) {
            return Err(Error::ShapeMismatch(format!("timestep {timestep} outside [0, 1]")));
        }
        if let Some(first) = data.first() {
            let shape = first.dim();
            if data.iter().any(|l| l.dim() != shape) {
                return Err(Error::ShapeMismatch("latents in a batch must share a shape".into()));
            }
        }
        Ok(Self {
            data,
            timestep,
            space,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn timestep(&self) -> f64 {
        self.timestep
    }

    pub fn space(&self) -> LatentSpace {
        self.space
    }

    pub fn latents(&self) -> &[Latent] {
        &self.data
    }

    pub fn into_latents(self) -> Vec<Latent> {
        self.data
    }

    pub fn shape(&self) -> Option<LatentShape> {
        self.data.first().map(LatentShape::of)
    }
}

/// Check that two latent lists agree in length and per-element shape.
pub(crate) fn check_same_shape(a: &[Latent], b: &[Latent], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: batch sizes differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x.dim() != y.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: view {i} has shape {:?} vs {:?}",
                x.dim(),
                y.dim()
            )));
        }
    }
    Ok(())
}

/// Frobenius inner product.
pub fn inner(a: &Latent, b: &Latent) -> f64 {
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|x, y| acc += x * y);
    acc
}

/// Every hyperparameter of the distillation loop. Field names match the
/// JSON config format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillationConfig {
    pub num_student_steps: usize,
    pub k_updates_per_step: usize,
    pub skew_f: f64,
    pub upper_clip_b: f64,
    pub sigma_student: f64,
    pub max_lr: f64,
    pub min_lr: f64,
    pub warmup_iters: usize,
    pub seed: u64,
    pub text_cfg: f64,
    pub image_cfg: f64,
}

impl Default for DistillationConfig {
    fn default() -> Self {
        default_config()
    }
}

pub fn default_config() -> DistillationConfig {
    DistillationConfig {
        num_student_steps: 40,
        k_updates_per_step: 50,
        skew_f: 0.5,
        upper_clip_b: 0.95,
        sigma_student: 1.0,
        max_lr: 1e-4,
        min_lr: 5e-5,
        warmup_iters: 200,
        seed: 0,
        text_cfg: 7.5,
        image_cfg: 1.5,
    }
}

impl DistillationConfig {
    /// Student step size, `1 / num_student_steps`.
    pub fn delta_tau(&self) -> f64 {
        1.0 / self.num_student_steps as f64
    }

    pub fn total_iters(&self) -> usize {
        self.num_student_steps * self.k_updates_per_step
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_student_steps < 1 {
            return fail("num_student_steps must be >= 1".into());
        }
        if self.skew_f.is_nan() || self.skew_f <= 0.0 {
            return fail(format!("skew_f must be > 0, got {}", self.skew_f));
        }
        if !(self.upper_clip_b > 0.0 && self.upper_clip_b <= 1.0) {
            return fail(format!("upper_clip_b must be in (0, 1], got {}", self.upper_clip_b));
        }
        if self.sigma_student.is_nan() || self.sigma_student <= 0.0 {
            return fail(format!("sigma_student must be > 0, got {}", self.sigma_student));
        }
        if !(self.min_lr > 0.0 && self.max_lr >= self.min_lr) {
            return fail(format!(
                "need max_lr >= min_lr > 0, got max_lr={} min_lr={}",
                self.max_lr, self.min_lr
            ));
        }
        if !(self.text_cfg >= 1.0 && self.image_cfg >= 1.0) {
            return fail("CFG scales must be >= 1".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_values() {
        let c = default_config();
        assert_eq!(c.num_student_steps, 40);
        assert_eq!(c.k_updates_per_step, 50);
        assert_eq!(c.total_iters(), 2000);
        assert_eq!(c.skew_f, 0.5);
        assert_eq!(c.upper_clip_b, 0.95);
        assert_eq!(c.max_lr, 1e-4);
        assert_eq!(c.min_lr, 5e-5);
        assert_eq!(c.warmup_iters, 200);
        assert_eq!(c.text_cfg, 7.5);
        assert_eq!(c.image_cfg, 1.5);
        assert_eq!(c.delta_tau(), 1.0 / 40.0);
        c.validate().unwrap();
    }

    #[test]
    fn config_json_uses_field_names() {
        let json = serde_json::to_value(default_config()).unwrap();
        for key in [
            "num_student_steps",
            "k_updates_per_step",
            "skew_f",
            "upper_clip_b",
            "sigma_student",
            "max_lr",
            "min_lr",
            "warmup_iters",
            "seed",
            "text_cfg",
            "image_cfg",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert!(serde_json::from_str::<DistillationConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn invalid_lr_rejected() {
        let mut c = default_config();
        c.min_lr = 2e-4;
        assert!(c.validate().is_err());
        c.min_lr = 0.0;
        c.max_lr = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn scene_invariants() {
        let img = Image::filled(2, 2, 0.5);
        let ok = Scene::new(vec![img.clone()], vec![Pose::IDENTITY], vec!["a".into()]);
        assert!(ok.is_ok());

        let mut bad = Pose::IDENTITY;
        bad.0[3][0] = 0.1;
        assert!(Scene::new(vec![img.clone()], vec![bad], vec!["a".into()]).is_err());

        let err = Scene::new(vec![img.clone(), img.clone()], vec![Pose::IDENTITY], vec!["a".into()]);
        assert_eq!(err.unwrap_err().kind(), "pose-mismatch");

        let other = Image::filled(3, 2, 0.5);
        assert!(Scene::new(
            vec![img, other],
            vec![Pose::IDENTITY; 2],
            vec!["a".into(), "b".into()]
        )
        .is_err());
    }

    #[test]
    fn edit_task_requires_instruction() {
        assert!(EditTask::new("", 7.5, 1.5).is_err());
        assert!(EditTask::new("make it snowy", 7.5, 1.5).is_ok());
        assert!(EditTask::new("x", 0.5, 1.5).is_err());
    }

    #[test]
    fn latent_batch_rejects_mixed_shapes() {
        let a = Latent::zeros((1, 2, 2));
        let b = Latent::zeros((1, 3, 2));
        assert!(LatentBatch::new(vec![a.clone(), b], 0.0, LatentSpace::Student).is_err());
        assert!(LatentBatch::new(vec![a.clone()], 1.5, LatentSpace::Student).is_err());
        assert!(LatentBatch::new(vec![a], 0.3, LatentSpace::Teacher).is_ok());
    }
}
