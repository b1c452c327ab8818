//! Scene directories: `frames/*.png|jpg` plus a `poses.json` manifest.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Image, Pose, Scene};

pub const FRAMES_DIR: &str = "frames";
pub const POSE_MANIFEST: &str = "poses.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEntry {
    pub file: String,
    pub pose: Pose,
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image_file(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_image(path: &Path) -> Result<Image> {
    let decoded = image::open(path).map_err(|e| Error::Decode {
        file: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(Image::from_rgb8(&decoded.to_rgb8()))
}

pub fn write_png(image: &Image, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    image
        .to_rgb8()
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Backend(format!("writing {}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn load_scene(dir: &Path) -> Result<Scene> {
    let frames_dir = dir.join(FRAMES_DIR);
    let frames = list_images(&frames_dir)?;
    let manifest_path = dir.join(POSE_MANIFEST);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let entries: Vec<PoseEntry> = serde_json::from_str(&text)?;

    let on_disk: BTreeSet<PathBuf> = frames.iter().cloned().collect();
    let mut listed = BTreeSet::new();
    let mut images = Vec::with_capacity(entries.len());
    let mut poses = Vec::with_capacity(entries.len());
    let mut names = Vec::with_capacity(entries.len());
    for entry in &entries {
        let mut path = dir.join(&entry.file);
        if !path.exists() {
            path = frames_dir.join(&entry.file);
        }
        if !on_disk.contains(&path) {
            return Err(Error::PoseMismatch(format!(
                "manifest entry '{}' has no matching image in {}",
                entry.file,
                frames_dir.display()
            )));
        }
        if !listed.insert(path.clone()) {
            return Err(Error::PoseMismatch(format!("image '{}' listed twice", entry.file)));
        }
        images.push(read_image(&path)?);
        poses.push(entry.pose);
        names.push(stem(&path));
    }
    let missing: Vec<String> = on_disk
        .difference(&listed)
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    if !missing.is_empty() {
        return Err(Error::PoseMismatch(format!("no pose for image(s): {}", missing.join(", "))));
    }
    Scene::new(images, poses, names)
}

pub fn save_scene(scene: &Scene, dir: &Path) -> Result<()> {
    let frames_dir = dir.join(FRAMES_DIR);
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut entries = Vec::with_capacity(scene.len());
    for ((image, pose), name) in scene.images().iter().zip(scene.poses()).zip(scene.names()) {
        let file = format!("{FRAMES_DIR}/{name}.png");
        write_png(image, &dir.join(&file))?;
        entries.push(PoseEntry { file, pose: *pose });
    }
    let manifest = dir.join(POSE_MANIFEST);
    let text = serde_json::to_string_pretty(&entries)?;
    std::fs::write(&manifest, text + "\n").map_err(|e| Error::io(&manifest, e))
}
