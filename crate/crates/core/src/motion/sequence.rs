use std::sync::Arc;

use ndarray::{s, Array2, ArrayView1};

use super::layout::FeatureLayout;
use super::skeleton::Skeleton;
use crate::error::{Error, Result};

/// A clip of per-frame pose features.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    /// `T × D`, row-major, one row per frame.
    pub frames: Array2<f32>,
    pub fps: f64,
    pub skeleton: Arc<Skeleton>,
    pub normalized: bool,
    pub style_label: Option<usize>,
    pub content_label: Option<usize>,
}

impl PoseSequence {
    pub fn new(frames: Array2<f32>, fps: f64, skeleton: Arc<Skeleton>, normalized: bool) -> Result<Self> {
        let layout = FeatureLayout::new(skeleton.joint_count());
        if frames.ncols() != layout.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature columns, skeleton needs {}",
                frames.ncols(),
                layout.dim()
            )));
        }
        if frames.nrows() == 0 {
            return Err(Error::TooShort { needed: 1, actual: 0 });
        }
        if !(fps > 0.0) {
            return Err(Error::ShapeMismatch(format!("fps must be positive, got {fps}")));
        }
        Ok(Self { frames, fps, skeleton, normalized, style_label: None, content_label: None })
    }

    pub fn with_labels(mut self, style: Option<usize>, content: Option<usize>) -> Self {
        self.style_label = style;
        self.content_label = content;
        self
    }

    /// Same metadata, new frame array (must keep the feature width).
    pub fn with_frames(&self, frames: Array2<f32>) -> Self {
        debug_assert_eq!(frames.ncols(), self.frames.ncols());
        Self { frames, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> Self {
        Self {
            frames: Array2::zeros((0, 0)),
            fps: self.fps,
            skeleton: self.skeleton.clone(),
            normalized: self.normalized,
            style_label: self.style_label,
            content_label: self.content_label,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new(self.skeleton.joint_count())
    }

    pub fn frame(&self, t: usize) -> ArrayView1<'_, f32> {
        self.frames.row(t)
    }

    /// Frames `start .. start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        self.with_frames(self.frames.slice(s![start..start + len, ..]).to_owned())
    }

    pub fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::NotNormalized)
        }
    }

    pub fn require_raw(&self) -> Result<()> {
        if self.normalized {
            Err(Error::Normalized)
        } else {
            Ok(())
        }
    }

    /// Repeats the last frame until the clip has at least `len` frames.
    pub fn edge_padded(&self, len: usize) -> Self {
        if self.len() >= len {
            return self.clone();
        }
        let mut frames = Array2::zeros((len, self.dim()));
        frames.slice_mut(s![..self.len(), ..]).assign(&self.frames);
        let last = self.frames.row(self.len() - 1);
        for t in self.len()..len {
            frames.row_mut(t).assign(&last);
        }
        self.with_frames(frames)
    }
}
