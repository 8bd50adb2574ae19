use ndarray::Array2;

use super::layout::{ROOT_VEL_X, ROOT_VEL_Z, ROOT_YAW_RATE};
use super::sequence::PoseSequence;
use crate::error::{Error, Result};

/// Reflects a clip across the sagittal plane.
///
/// Left/right joints swap, lateral components flip sign, rotations are
/// conjugated by `diag(-1, 1, 1)` and the contact columns follow their feet.
/// Only sign flips and permutations are involved, so mirroring twice is exact.
pub fn mirror(seq: &PoseSequence) -> Result<PoseSequence> {
    seq.require_raw()?;
    let skeleton = &seq.skeleton;
    let map = skeleton.mirror_map()?;
    let layout = seq.layout();
    let contact_map: Vec<usize> = skeleton
        .foot_joints
        .iter()
        .map(|&f| skeleton.foot_joints.iter().position(|&g| g == map[f]).unwrap_or(0))
        .collect();
    let contact_map: Vec<usize> = if contact_map.iter().enumerate().all(|(c, &m)| contact_map[m] == c) {
        contact_map
    } else {
        (0..4).collect()
    };
    let mut out = Array2::zeros(seq.frames.raw_dim());
    for (src, mut dst) in seq.frames.rows().into_iter().zip(out.rows_mut()) {
        dst[ROOT_YAW_RATE] = -src[ROOT_YAW_RATE];
        dst[ROOT_VEL_X] = -src[ROOT_VEL_X];
        dst[ROOT_VEL_Z] = src[ROOT_VEL_Z];
        dst[3] = src[3];
        for j in 0..layout.joints {
            let m = map[j];
            for base in [layout.position(0), layout.velocity(0)] {
                let (d, s) = (base + 3 * j, base + 3 * m);
                dst[d] = -src[s];
                dst[d + 1] = src[s + 1];
                dst[d + 2] = src[s + 2];
            }
            let (d, s) = (layout.rotation(j), layout.rotation(m));
            dst[d] = src[s];
            dst[d + 1] = -src[s + 1];
            dst[d + 2] = -src[s + 2];
            dst[d + 3] = -src[s + 3];
            dst[d + 4] = src[s + 4];
            dst[d + 5] = src[s + 5];
        }
        let c0 = layout.contacts().start;
        for (c, &m) in contact_map.iter().enumerate() {
            dst[c0 + c] = src[c0 + m];
        }
    }
    Ok(seq.with_frames(out))
}

/// Columns holding per-frame displacements, rescaled when the rate changes.
fn velocity_columns(seq: &PoseSequence) -> Vec<usize> {
    let mut cols = vec![ROOT_YAW_RATE, ROOT_VEL_X, ROOT_VEL_Z];
    cols.extend(seq.layout().velocities());
    cols
}

/// Lowers the frame rate.
///
/// An integral rate ratio keeps every `ratio`-th frame; otherwise continuous
/// channels are linearly interpolated and contacts take the nearest frame.
/// Velocities are multiplied by the ratio so they stay per-frame quantities.
pub fn resample_fps(seq: &PoseSequence, target_fps: f64) -> Result<PoseSequence> {
    seq.require_raw()?;
    if !(target_fps > 0.0) || target_fps > seq.fps * (1.0 + 1e-12) {
        return Err(Error::UpsamplingUnsupported { from: seq.fps, to: target_fps });
    }
    let ratio = seq.fps / target_fps;
    if (ratio - 1.0).abs() < 1e-12 {
        return Ok(seq.clone());
    }
    let t_len = seq.len();
    let contacts = seq.layout().contacts();
    let mut out = if (ratio - ratio.round()).abs() < 1e-9 {
        let stride = ratio.round() as usize;
        let kept: Vec<usize> = (0..t_len).step_by(stride).collect();
        seq.frames.select(ndarray::Axis(0), &kept)
    } else {
        let new_len = ((t_len - 1) as f64 / ratio).floor() as usize + 1;
        let mut out = Array2::zeros((new_len, seq.dim()));
        for k in 0..new_len {
            let u = k as f64 * ratio;
            let i0 = (u.floor() as usize).min(t_len - 1);
            let i1 = (i0 + 1).min(t_len - 1);
            let w = (u - i0 as f64) as f32;
            let nearest = if w >= 0.5 { i1 } else { i0 };
            for c in 0..seq.dim() {
                out[[k, c]] = if contacts.contains(&c) {
                    seq.frames[[nearest, c]]
                } else {
                    seq.frames[[i0, c]] * (1.0 - w) + seq.frames[[i1, c]] * w
                };
            }
        }
        out
    };
    for c in velocity_columns(seq) {
        out.column_mut(c).mapv_inplace(|v| v * ratio as f32);
    }
    let mut res = seq.with_frames(out);
    res.fps = target_fps;
    Ok(res)
}
