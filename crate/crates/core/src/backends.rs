//! Backend registry and the null backends.
//!
//! Teachers and students are created by name from a scene and a seed, so
//! the CLI can switch implementations without code changes.

use std::collections::BTreeMap;

use crate::diffusion::{
    DdimScheduler, Guidance, NoiseSchedule, Parameterization, StudentModel, StudentScheduler, TeacherModel,
    VpLinearSchedule,
};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::toy::{toy_latent_shape, toy_pair_for_scene, ToyCodec};
use crate::types::{EditTask, Image, Latent, LatentBatch, LatentShape, Pose, Scene};

/// Teacher that predicts zero noise and returns the input as its edit.
#[derive(Debug, Clone)]
pub struct NullTeacher {
    codec: ToyCodec,
    schedule: VpLinearSchedule,
}

impl NullTeacher {
    pub fn new(shape: LatentShape) -> Self {
        Self {
            codec: ToyCodec { shape },
            schedule: VpLinearSchedule::default(),
        }
    }
}

impl TeacherModel for NullTeacher {
    fn name(&self) -> &str {
        "null"
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
        _guidance: Guidance,
        _task: &EditTask,
        _sources: &[Image],
        _t: f64,
        keyframe: Option<usize>,
    ) -> Result<Vec<Latent>> {
        if let Some(k) = keyframe {
            if k >= noisy.len() {
                return Err(Error::KeyframeOutOfRange { index: k, n: noisy.len() });
            }
        }
        Ok(noisy.latents().iter().map(|z| Latent::zeros(z.dim())).collect())
    }

    fn edit(&self, image: &Image, _task: &EditTask, _rng: &mut Rng) -> Result<Image> {
        Ok(image.clone())
    }
}

/// Student with v-prediction that always outputs zero. Its single
/// parameter never influences the output.
#[derive(Debug, Clone)]
pub struct NullStudent {
    codec: ToyCodec,
    scheduler: DdimScheduler,
    params: Vec<f64>,
}

impl NullStudent {
    pub fn new(shape: LatentShape) -> Self {
        Self {
            codec: ToyCodec { shape },
            scheduler: DdimScheduler::default(),
            params: vec![0.0],
        }
    }
}

impl StudentModel for NullStudent {
    fn name(&self) -> &str {
        "null"
    }

    fn parameterization(&self) -> Parameterization {
        Parameterization::V
    }

    fn latent_shape(&self) -> LatentShape {
        self.codec.shape
    }

    fn scheduler(&self) -> &dyn StudentScheduler {
        &self.scheduler
    }

    fn encode(&self, image: &Image) -> Result<Latent> {
        self.codec.encode(image)
    }

    fn predict(&self, latents: &LatentBatch, _reference: &Latent, poses: &[Pose], _tau: f64) -> Result<Vec<Latent>> {
        if poses.len() != latents.len() {
            return Err(Error::ShapeMismatch(format!("{} poses for {} latents", poses.len(), latents.len())));
        }
        Ok(latents.latents().iter().map(|z| Latent::zeros(z.dim())).collect())
    }

    fn predict_vjp(
        &self,
        latents: &LatentBatch,
        reference: &Latent,
        poses: &[Pose],
        tau: f64,
        _cotangent: &[Latent],
    ) -> Result<Vec<f64>> {
        self.predict(latents, reference, poses, tau)?;
        Ok(vec![0.0; self.params.len()])
    }

    fn parameters(&self) -> &[f64] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

/// Inputs available to backend factories.
#[derive(Debug, Clone, Copy)]
pub struct BackendContext<'a> {
    pub scene: &'a Scene,
    pub seed: u64,
}

pub type TeacherFactory = fn(&BackendContext<'_>) -> Result<Box<dyn TeacherModel>>;
pub type StudentFactory = fn(&BackendContext<'_>) -> Result<Box<dyn StudentModel>>;

#[derive(Clone)]
pub struct BackendRegistry {
    teachers: BTreeMap<String, TeacherFactory>,
    students: BTreeMap<String, StudentFactory>,
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendRegistry")
            .field("teachers", &self.teachers.keys().collect::<Vec<_>>())
            .field("students", &self.students.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn toy_teacher(ctx: &BackendContext<'_>) -> Result<Box<dyn TeacherModel>> {
    Ok(Box::new(toy_pair_for_scene(ctx.scene, ctx.seed)?.0))
}

fn toy_student(ctx: &BackendContext<'_>) -> Result<Box<dyn StudentModel>> {
    Ok(Box::new(toy_pair_for_scene(ctx.scene, ctx.seed)?.1))
}

fn null_teacher(_: &BackendContext<'_>) -> Result<Box<dyn TeacherModel>> {
    Ok(Box::new(NullTeacher::new(toy_latent_shape(16))))
}

fn null_student(_: &BackendContext<'_>) -> Result<Box<dyn StudentModel>> {
    Ok(Box::new(NullStudent::new(toy_latent_shape(16))))
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self {
            teachers: BTreeMap::new(),
            students: BTreeMap::new(),
        }
    }

    /// `toy-teacher`/`toy`, `toy-student`/`toy` and `null` for both roles.
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register_teacher("toy-teacher", toy_teacher);
        r.register_teacher("toy", toy_teacher);
        r.register_teacher("null", null_teacher);
        r.register_student("toy-student", toy_student);
        r.register_student("toy", toy_student);
        r.register_student("null", null_student);
        r
    }

    pub fn register_teacher(&mut self, name: &str, factory: TeacherFactory) {
        self.teachers.insert(name.to_string(), factory);
    }

    pub fn register_student(&mut self, name: &str, factory: StudentFactory) {
        self.students.insert(name.to_string(), factory);
    }

    pub fn teacher_names(&self) -> Vec<String> {
        self.teachers.keys().cloned().collect()
    }

    pub fn student_names(&self) -> Vec<String> {
        self.students.keys().cloned().collect()
    }

    pub fn make_teacher(&self, name: &str, ctx: &BackendContext<'_>) -> Result<Box<dyn TeacherModel>> {
        let factory = self.teachers.get(name).ok_or_else(|| Error::UnknownBackend {
            kind: "teacher",
            name: name.into(),
            available: self.teacher_names().join(", "),
        })?;
        factory(ctx)
    }

    pub fn make_student(&self, name: &str, ctx: &BackendContext<'_>) -> Result<Box<dyn StudentModel>> {
        let factory = self.students.get(name).ok_or_else(|| Error::UnknownBackend {
            kind: "student",
            name: name.into(),
            available: self.student_names().join(", "),
        })?;
        factory(ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::make_toy_world;

    #[test]
    fn builtin_names_resolve() {
        let (_, scene) = make_toy_world(2, 16, 0).unwrap();
        let ctx = BackendContext { scene: &scene, seed: 0 };
        let r = BackendRegistry::with_builtin();
        for name in ["toy", "toy-teacher", "null"] {
            assert!(r.make_teacher(name, &ctx).is_ok());
        }
        for name in ["toy", "toy-student", "null"] {
            assert!(r.make_student(name, &ctx).is_ok());
        }
        let err = r.make_teacher("sdxl", &ctx).err().unwrap();
        assert!(err.to_string().contains("toy-teacher"));
    }

    #[test]
    fn null_teacher_edit_is_identity() {
        let (_, scene) = make_toy_world(1, 16, 0).unwrap();
        let t = NullTeacher::new(toy_latent_shape(16));
        let task = EditTask::new("anything", 7.5, 1.5).unwrap();
        let mut rng = Rng::new(0, "x");
        assert_eq!(&t.edit(&scene.images()[0], &task, &mut rng).unwrap(), &scene.images()[0]);
    }
}
