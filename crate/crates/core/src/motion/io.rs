//! Motion files: `<name>.json` manifest plus `<name>.f32` little-endian payload.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::layout::FeatureLayout;
use super::sequence::PoseSequence;
use super::skeleton::Skeleton;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionManifest {
    pub format_version: u64,
    pub fps: f64,
    pub joint_count: usize,
    pub feature_dim: usize,
    pub frame_count: usize,
    pub skeleton_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_label: Option<usize>,
    pub normalized: bool,
}

/// `dir/clip`, `dir/clip.json` and `dir/clip.f32` all name the same motion.
pub fn motion_stem(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("f32") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn save_motion(seq: &PoseSequence, path: &Path) -> Result<()> {
    let stem = motion_stem(path);
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let skeleton_id = seq.skeleton.id();
    if skeleton_id != "default21" {
        seq.skeleton.save(&with_suffix(&stem, ".skeleton.json"))?;
    }
    let manifest = MotionManifest {
        format_version: FORMAT_VERSION,
        fps: seq.fps,
        joint_count: seq.skeleton.joint_count(),
        feature_dim: seq.dim(),
        frame_count: seq.len(),
        skeleton_id,
        style_label: seq.style_label,
        content_label: seq.content_label,
        normalized: seq.normalized,
    };
    let json_path = with_suffix(&stem, ".json");
    let text = serde_json::to_string_pretty(&manifest).map_err(Error::json(&json_path))?;
    std::fs::write(&json_path, text).map_err(Error::io(&json_path))?;
    let mut bytes = Vec::with_capacity(seq.frames.len() * 4);
    for v in seq.frames.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let bin_path = with_suffix(&stem, ".f32");
    std::fs::write(&bin_path, bytes).map_err(Error::io(&bin_path))
}

pub fn load_manifest(path: &Path) -> Result<MotionManifest> {
    let json_path = with_suffix(&motion_stem(path), ".json");
    let text = std::fs::read_to_string(&json_path).map_err(Error::io(&json_path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::json(&json_path))?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        None => return Err(Error::BadMagic(json_path)),
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::UnsupportedVersion(v)),
    }
    serde_json::from_value(value).map_err(Error::json(&json_path))
}

pub fn load_motion(path: &Path) -> Result<PoseSequence> {
    let stem = motion_stem(path);
    let manifest = load_manifest(&stem)?;
    let skeleton = if manifest.skeleton_id == "default21" {
        Skeleton::default21()
    } else {
        Skeleton::load(&with_suffix(&stem, ".skeleton.json"))?
    };
    load_motion_with(&stem, &manifest, Arc::new(skeleton))
}

/// Loads a motion, reusing an already shared skeleton.
pub fn load_motion_with(path: &Path, manifest: &MotionManifest, skeleton: Arc<Skeleton>) -> Result<PoseSequence> {
    let stem = motion_stem(path);
    if skeleton.joint_count() != manifest.joint_count
        || FeatureLayout::new(manifest.joint_count).dim() != manifest.feature_dim
    {
        return Err(Error::ShapeMismatch(format!(
            "manifest declares {} joints and {} features",
            manifest.joint_count, manifest.feature_dim
        )));
    }
    let bin_path = with_suffix(&stem, ".f32");
    let bytes = std::fs::read(&bin_path).map_err(Error::io(&bin_path))?;
    let want = manifest.frame_count * manifest.feature_dim * 4;
    if bytes.len() != want {
        return Err(Error::ShapeMismatch(format!(
            "{}: header says {}×{} floats ({want} bytes), payload has {} bytes",
            bin_path.display(),
            manifest.frame_count,
            manifest.feature_dim,
            bytes.len()
        )));
    }
    let data: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let frames = Array2::from_shape_vec((manifest.frame_count, manifest.feature_dim), data)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(PoseSequence::new(frames, manifest.fps, skeleton, manifest.normalized)?
        .with_labels(manifest.style_label, manifest.content_label))
}

/// Imports a preprocessed `T × D` array stored as `.npy` (f32 or f64) for the default rig.
pub fn import_npy(path: &Path, fps: f64) -> Result<PoseSequence> {
    use ndarray_npy::ReadNpyExt;
    let file = std::fs::File::open(path).map_err(Error::io(path))?;
    let frames = match Array2::<f32>::read_npy(&file) {
        Ok(a) => a,
        Err(_) => {
            let file = std::fs::File::open(path).map_err(Error::io(path))?;
            Array2::<f64>::read_npy(file)
                .map_err(|e| Error::ShapeMismatch(format!("{}: {e}", path.display())))?
                .mapv(|v| v as f32)
        }
    };
    PoseSequence::new(frames, fps, Arc::new(Skeleton::default21()), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::kinematics::rest_sequence;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut seq = rest_sequence(Arc::new(Skeleton::default21()), 7, 30.0, 0.9);
        seq.frames[[2, 10]] = f32::from_bits(0x3f80_0001);
        seq.frames[[3, 11]] = -0.0;
        let seq = seq.with_labels(Some(2), None);
        let path = dir.path().join("sub/clip");
        save_motion(&seq, &path).unwrap();
        let back = load_motion(&path.with_extension("json")).unwrap();
        assert_eq!(back.style_label, Some(2));
        assert_eq!(back.content_label, None);
        assert!(back.frames.iter().zip(seq.frames.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corrupt_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let seq = rest_sequence(Arc::new(Skeleton::default21()), 4, 30.0, 0.9);
        let path = dir.path().join("clip");
        save_motion(&seq, &path).unwrap();
        let json = dir.path().join("clip.json");
        let text = std::fs::read_to_string(&json).unwrap();

        std::fs::write(&json, text.replace("format_version", "fmt")).unwrap();
        assert!(matches!(load_motion(&path), Err(Error::BadMagic(_))));
        std::fs::write(&json, text.replace("\"format_version\": 1", "\"format_version\": 9")).unwrap();
        assert!(matches!(load_motion(&path), Err(Error::UnsupportedVersion(9))));
        std::fs::write(&json, text.replace("\"frame_count\": 4", "\"frame_count\": 5")).unwrap();
        assert!(matches!(load_motion(&path), Err(Error::ShapeMismatch(_))));
    }
}
