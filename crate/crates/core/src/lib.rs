//! Multi-view consistent image editing by score distillation.
//!
//! A monocular instruction-guided editor (the teacher) is distilled into a
//! multi-view diffusion model (the student) while the student samples, so
//! that every view of a scene receives the same edit.

pub mod attention;
pub mod backends;
pub mod cli;
pub mod diffusion;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod plot;
pub mod rng;
pub mod scene_io;
pub mod selftest;
pub mod stats;
pub mod toy;
pub mod types;

pub use error::{Error, Result};
