use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, Array3};

use super::contacts::{detect_foot_contacts, ContactConfig};
use super::layout::{FeatureLayout, ROOT_HEIGHT, ROOT_VEL_X, ROOT_VEL_Z, ROOT_YAW_RATE};
use super::rotation::{matrix_to_sixd, sixd_to_matrix_lenient, yaw_matrix, Rotation6D};
use super::sequence::PoseSequence;
use super::skeleton::Skeleton;
use crate::error::Result;

/// World-space root state per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RootTrajectory {
    pub yaw: Vec<f64>,
    pub position: Vec<Vector3<f64>>,
}

/// Integrates the root channels: yaw from the yaw rate, planar position from
/// the heading-frame velocity, height read directly. Starts at yaw 0 over the origin.
pub fn integrate_root(seq: &PoseSequence) -> RootTrajectory {
    let t_len = seq.len();
    let mut yaw = Vec::with_capacity(t_len);
    let mut position = Vec::with_capacity(t_len);
    let (mut theta, mut x, mut z) = (0.0f64, 0.0f64, 0.0f64);
    for t in 0..t_len {
        let f = seq.frame(t);
        yaw.push(theta);
        position.push(Vector3::new(x, f[ROOT_HEIGHT] as f64, z));
        let v = yaw_matrix(theta) * Vector3::new(f[ROOT_VEL_X] as f64, 0.0, f[ROOT_VEL_Z] as f64);
        x += v.x;
        z += v.z;
        theta += f[ROOT_YAW_RATE] as f64;
    }
    RootTrajectory { yaw, position }
}

/// Local joint rotations of frame `t`.
pub fn local_rotations(seq: &PoseSequence, t: usize) -> Vec<Matrix3<f64>> {
    let layout = seq.layout();
    let f = seq.frame(t);
    (0..layout.joints)
        .map(|j| {
            let o = layout.rotation(j);
            let mut r = [0.0; 6];
            for (k, v) in r.iter_mut().enumerate() {
                *v = f[o + k] as f64;
            }
            sixd_to_matrix_lenient(&Rotation6D(r))
        })
        .collect()
}

/// Global joint positions for one frame; joint 0 sits at `root`.
pub fn pose_joints(
    skeleton: &Skeleton,
    yaw: f64,
    root: Vector3<f64>,
    local: &[Matrix3<f64>],
) -> Vec<Vector3<f64>> {
    let j = skeleton.joint_count();
    let mut global = Vec::with_capacity(j);
    let mut pos = Vec::with_capacity(j);
    global.push(yaw_matrix(yaw) * local[0]);
    pos.push(root);
    for i in 1..j {
        let p = skeleton.parent(i).expect("non-root joint has a parent");
        let gp: Matrix3<f64> = global[p];
        pos.push(pos[p] + gp * skeleton.offset(i));
        global.push(gp * local[i]);
    }
    pos
}

/// `T × J × 3` world joint positions.
pub fn forward_kinematics(seq: &PoseSequence) -> Result<Array3<f64>> {
    seq.require_raw()?;
    let skeleton = &seq.skeleton;
    let j = skeleton.joint_count();
    let root = integrate_root(seq);
    let mut out = Array3::zeros((seq.len(), j, 3));
    for t in 0..seq.len() {
        let local = local_rotations(seq, t);
        let joints = pose_joints(skeleton, root.yaw[t], root.position[t], &local);
        for (i, p) in joints.iter().enumerate() {
            for k in 0..3 {
                out[[t, i, k]] = p[k];
            }
        }
    }
    Ok(out)
}

/// Joint positions relative to the root in the first frame's coordinates,
/// i.e. with the trajectory removed. Used for root-aligned errors.
pub fn root_aligned_positions(seq: &PoseSequence) -> Array3<f64> {
    let layout = seq.layout();
    let mut out = Array3::zeros((seq.len(), layout.joints, 3));
    for t in 0..seq.len() {
        let f = seq.frame(t);
        for j in 0..layout.joints {
            for k in 0..3 {
                out[[t, j, k]] = f[layout.position(j) + k] as f64;
            }
        }
    }
    out
}

/// Builds the feature matrix from a world-space animation.
///
/// `yaw[t]` and `root[t]` describe the root (heading and pelvis position),
/// `local[t][j]` the joint rotations relative to their parents (the root's
/// relative to the heading frame). Returns the sequence and the world joint positions.
pub fn compose_features(
    skeleton: Arc<Skeleton>,
    fps: f64,
    yaw: &[f64],
    root: &[Vector3<f64>],
    local: &[Vec<Matrix3<f64>>],
    contacts: &ContactConfig,
) -> Result<(PoseSequence, Array3<f64>)> {
    let t_len = yaw.len();
    assert!(t_len >= 2 && root.len() == t_len && local.len() == t_len);
    let layout = FeatureLayout::new(skeleton.joint_count());
    let j = layout.joints;
    let mut world = Array3::zeros((t_len, j, 3));
    for t in 0..t_len {
        for (i, p) in pose_joints(&skeleton, yaw[t], root[t], &local[t]).iter().enumerate() {
            for k in 0..3 {
                world[[t, i, k]] = p[k];
            }
        }
    }
    let at = |t: usize, i: usize| Vector3::new(world[[t, i, 0]], world[[t, i, 1]], world[[t, i, 2]]);
    let foot = detect_foot_contacts(&world, &skeleton, fps, contacts);
    let mut frames = Array2::<f32>::zeros((t_len, layout.dim()));
    for t in 0..t_len {
        // forward differences; the last frame repeats the previous one
        let tn = if t + 1 < t_len { t } else { t - 1 };
        let heading_inv = yaw_matrix(yaw[t]).transpose();
        let step_heading = yaw_matrix(yaw[tn]).transpose();
        let mut row = frames.row_mut(t);
        row[ROOT_YAW_RATE] = (yaw[tn + 1] - yaw[tn]) as f32;
        let dv = step_heading * (root[tn + 1] - root[tn]);
        row[ROOT_VEL_X] = dv.x as f32;
        row[ROOT_VEL_Z] = dv.z as f32;
        row[ROOT_HEIGHT] = root[t].y as f32;
        for i in 0..j {
            let lp = heading_inv * (at(t, i) - root[t]);
            let lv = step_heading * (at(tn + 1, i) - at(tn, i));
            for k in 0..3 {
                row[layout.position(i) + k] = lp[k] as f32;
                row[layout.velocity(i) + k] = lv[k] as f32;
            }
            let r6 = matrix_to_sixd(&local[t][i])?;
            for k in 0..6 {
                row[layout.rotation(i) + k] = r6.0[k] as f32;
            }
        }
        for c in 0..4 {
            row[layout.contacts().start + c] = foot[[t, c]];
        }
    }
    Ok((PoseSequence::new(frames, fps, skeleton, false)?, world))
}

/// Identity pose standing still at root height `h`.
pub fn rest_sequence(skeleton: Arc<Skeleton>, frames: usize, fps: f64, h: f64) -> PoseSequence {
    let layout = FeatureLayout::new(skeleton.joint_count());
    let ident = vec![Matrix3::identity(); layout.joints];
    let root = Vector3::new(0.0, h, 0.0);
    let joints = pose_joints(&skeleton, 0.0, root, &ident);
    let mut data = Array2::<f32>::zeros((frames, layout.dim()));
    for mut row in data.rows_mut() {
        row[ROOT_HEIGHT] = h as f32;
        for (i, p) in joints.iter().enumerate() {
            for k in 0..3 {
                row[layout.position(i) + k] = (p[k] - root[k]) as f32;
            }
            for (k, v) in Rotation6D::IDENTITY.0.iter().enumerate() {
                row[layout.rotation(i) + k] = *v as f32;
            }
        }
        for c in layout.contacts() {
            row[c] = 1.0;
        }
    }
    PoseSequence::new(data, fps, skeleton, false).expect("rest pose shape")
}
