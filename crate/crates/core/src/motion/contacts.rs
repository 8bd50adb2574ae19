use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::skeleton::Skeleton;

/// Displacement threshold for contact labels, scaled with frame rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    /// Per-frame displacement (m) at `reference_fps` below which a foot is planted.
    pub threshold: f64,
    pub reference_fps: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self { threshold: 0.002, reference_fps: 30.0 }
    }
}

impl ContactConfig {
    /// Squared per-frame displacement limit at `fps`.
    pub fn squared_limit(&self, fps: f64) -> f64 {
        let d = self.threshold * (self.reference_fps / fps);
        d * d
    }
}

/// `T × 4` labels: 1 where the foot joint moved strictly less than the limit
/// since the previous frame. Frame 0 copies frame 1; a single frame is labelled 0.
pub fn detect_foot_contacts(
    positions: &Array3<f64>,
    skeleton: &Skeleton,
    fps: f64,
    config: &ContactConfig,
) -> Array2<f32> {
    let t_len = positions.shape()[0];
    let limit = config.squared_limit(fps);
    let mut out = Array2::zeros((t_len, 4));
    for (c, &joint) in skeleton.foot_joints.iter().enumerate() {
        for t in 1..t_len {
            let d2: f64 =
                (0..3).map(|k| (positions[[t, joint, k]] - positions[[t - 1, joint, k]]).powi(2)).sum();
            out[[t, c]] = if d2 < limit { 1.0 } else { 0.0 };
        }
        if t_len >= 2 {
            out[[0, c]] = out[[1, c]];
        }
    }
    out
}
