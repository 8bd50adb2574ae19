use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::sequence::PoseSequence;
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-6;

/// Per-channel z-normalization statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl NormStats {
    /// Population mean and standard deviation over every frame of the corpus.
    pub fn fit<'a>(corpus: impl IntoIterator<Item = &'a PoseSequence>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        let mut seqs = Vec::new();
        for seq in corpus {
            seq.require_raw()?;
            if sum.is_empty() {
                sum = vec![0.0; seq.dim()];
                sq = vec![0.0; seq.dim()];
            } else if seq.dim() != sum.len() {
                return Err(Error::ShapeMismatch(format!("corpus mixes widths {} and {}", sum.len(), seq.dim())));
            }
            for row in seq.frames.rows() {
                for (s, &v) in sum.iter_mut().zip(row) {
                    *s += v as f64;
                }
            }
            n += seq.len();
            seqs.push(seq);
        }
        if n == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        // second pass for a well-conditioned variance
        for seq in seqs {
            for row in seq.frames.rows() {
                for ((q, &v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *q += (v as f64 - m).powi(2);
                }
            }
        }
        let std = sq.iter().map(|q| ((q / n as f64).sqrt().max(STD_FLOOR)) as f32).collect();
        Ok(Self { mean: mean.iter().map(|&m| m as f32).collect(), std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, seq: &PoseSequence) -> Result<()> {
        if seq.dim() != self.dim() {
            return Err(Error::DimMismatch(seq.dim(), self.dim()));
        }
        Ok(())
    }

    pub fn normalize_frames(&self, frames: &Array2<f32>) -> Array2<f32> {
        let mut out = frames.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn denormalize_frames(&self, frames: &Array2<f32>) -> Array2<f32> {
        let mut out = frames.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        out
    }

    pub fn znormalize(&self, seq: &PoseSequence) -> Result<PoseSequence> {
        seq.require_raw()?;
        self.check(seq)?;
        let mut out = seq.with_frames(self.normalize_frames(&seq.frames));
        out.normalized = true;
        Ok(out)
    }

    pub fn denormalize(&self, seq: &PoseSequence) -> Result<PoseSequence> {
        seq.require_normalized()?;
        self.check(seq)?;
        let mut out = seq.with_frames(self.denormalize_frames(&seq.frames));
        out.normalized = false;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(Error::json(path))?;
        std::fs::write(path, text).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let stats: Self = serde_json::from_str(&text).map_err(Error::json(path))?;
        if stats.mean.len() != stats.std.len() || stats.std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::ShapeMismatch(format!("{}: malformed norm stats", path.display())));
        }
        Ok(stats)
    }
}
