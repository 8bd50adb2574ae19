//! Sinusoidal limb-phase gait model with a foot-locked root.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::factors::{ContentFactor, Gait, StyleFactor};
use crate::error::{Error, Result};
use crate::motion::contacts::ContactConfig;
use crate::motion::kinematics::{compose_features, pose_joints};
use crate::motion::rotation::{axis_angle, yaw_matrix};
use crate::motion::{PoseSequence, Skeleton};

/// A generated clip with the world joint trajectory it was built from.
#[derive(Clone, Debug)]
pub struct SyntheticClip {
    pub seq: PoseSequence,
    /// `T × J × 3`, meters.
    pub positions: Array3<f64>,
}

struct GaitShape {
    freq: f64,
    base_speed: f64,
    hip: f64,
    knee: f64,
    knee_bias: f64,
    ankle: f64,
    arm: f64,
    elbow_bias: f64,
    torso_pitch: f64,
    twist: f64,
}

fn shape(gait: Gait) -> GaitShape {
    match gait {
        Gait::Walk => GaitShape {
            freq: 0.9,
            base_speed: 1.2,
            hip: 0.35,
            knee: 0.65,
            knee_bias: 0.05,
            ankle: 0.15,
            arm: 0.3,
            elbow_bias: 0.2,
            torso_pitch: 0.0,
            twist: 0.08,
        },
        Gait::Run => GaitShape {
            freq: 1.35,
            base_speed: 2.6,
            hip: 0.55,
            knee: 1.2,
            knee_bias: 0.25,
            ankle: 0.25,
            arm: 0.45,
            elbow_bias: 1.3,
            torso_pitch: 0.18,
            twist: 0.12,
        },
        Gait::March => GaitShape {
            freq: 0.75,
            base_speed: 0.9,
            hip: 0.15,
            knee: 1.3,
            knee_bias: 0.0,
            ankle: 0.3,
            arm: 0.5,
            elbow_bias: 0.05,
            torso_pitch: -0.05,
            twist: 0.03,
        },
        Gait::KickStep => GaitShape {
            freq: 0.7,
            base_speed: 0.9,
            hip: 0.3,
            knee: 0.5,
            knee_bias: 0.05,
            ankle: 0.1,
            arm: 0.25,
            elbow_bias: 0.3,
            torso_pitch: -0.08,
            twist: 0.05,
        },
    }
}

/// Slow sinusoidal wobble added to a joint angle for within-class variation.
#[derive(Clone, Copy)]
struct Wobble {
    amp: f64,
    freq: f64,
    phase: f64,
}

impl Wobble {
    fn draw(rng: &mut impl Rng, amp: f64) -> Self {
        Self { amp: rng.random_range(0.0..amp), freq: rng.random_range(0.2..0.8), phase: rng.random_range(0.0..TAU) }
    }

    fn at(&self, s: f64) -> f64 {
        self.amp * (TAU * self.freq * s + self.phase).sin()
    }
}

fn rx(a: f64) -> Matrix3<f64> {
    axis_angle(Vector3::x(), a)
}

fn ry(a: f64) -> Matrix3<f64> {
    axis_angle(Vector3::y(), a)
}

fn rz(a: f64) -> Matrix3<f64> {
    axis_angle(Vector3::z(), a)
}

/// Generates one clip of `length` frames at 30 fps.
///
/// Joint angles follow a per-gait phase model modulated by the style; the root
/// is then placed so that the stance toe stays fixed on the ground, which ties
/// walking speed to stride length and cadence.
pub fn generate_clip(
    content: &ContentFactor,
    style: &StyleFactor,
    length: usize,
    seed: u64,
    skeleton: Arc<Skeleton>,
) -> Result<SyntheticClip> {
    if length < 2 {
        return Err(Error::TooShort { needed: 2, actual: length });
    }
    content.validate()?;
    style.validate()?;
    let fps = 30.0;
    let j_count = skeleton.joint_count();
    if j_count != 21 {
        return Err(Error::InvalidSkeleton("the gait model drives the default 21-joint rig".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = shape(content.gait);
    let phase0 = rng.random_range(0.0..TAU);
    let amp = style.amplitude_scale * rng.random_range(0.93..1.07);
    let speed_gain = content.speed / g.base_speed * rng.random_range(0.92..1.08);
    let freq = g.freq * style.cadence_scale * rng.random_range(0.95..1.05);
    let arm = g.arm * amp * style.arm_swing_scale;
    let turn = content.heading.turn_rate + rng.random_range(-0.12..0.12);
    let wobble_phase = rng.random_range(0.0..TAU);
    let noise: Vec<Wobble> = (0..j_count).map(|_| Wobble::draw(&mut rng, 0.04)).collect();
    let posture: Vec<Matrix3<f64>> = {
        let mut p = vec![Matrix3::identity(); j_count];
        for &(j, aa) in &style.posture_offset {
            let v = Vector3::from(aa);
            if j < j_count && v.norm() > 0.0 {
                p[j] = axis_angle(v, v.norm());
            }
        }
        p
    };

    let mut local = Vec::with_capacity(length);
    let mut omega = Vec::with_capacity(length);
    let mut stance_toe = Vec::with_capacity(length);
    for t in 0..length {
        let s = t as f64 / fps;
        let phi = TAU * freq * s + phase0;
        let mut r = vec![Matrix3::identity(); j_count];
        for (side, (hip, knee, ankle, shoulder, elbow)) in [(0.0, (1, 2, 3, 14, 15)), (PI, (5, 6, 7, 18, 19))] {
            let p = phi + side;
            // swing occupies the half cycle where the hip moves forward; `u` is its progress
            let u = (p + PI / 2.0).rem_euclid(TAU) / PI;
            let lift = if u < 1.0 { (PI * (u / 0.85).min(1.0)).sin() } else { 0.0 };
            let (hip_a, knee_a) = match content.gait {
                Gait::Walk | Gait::Run => (-g.hip * speed_gain * p.sin(), g.knee * lift + g.knee_bias),
                Gait::March => (-g.hip * speed_gain * p.sin() - 0.9 * lift, g.knee * lift),
                Gait::KickStep if side == 0.0 => (-g.hip * speed_gain * p.sin() - 1.0 * lift * lift, 0.15 * lift),
                Gait::KickStep => (-g.hip * speed_gain * p.sin(), g.knee * lift + g.knee_bias),
            };
            r[hip] = rx(amp * hip_a + noise[hip].at(s));
            r[knee] = rx(amp * knee_a + noise[knee].at(s));
            // the ankle keeps the foot roughly level, plus a small roll-over
            r[ankle] = rx(amp * (g.ankle * p.sin() - 0.85 * (hip_a + knee_a)) + noise[ankle].at(s));
            // arms swing against the leg on the same side
            r[shoulder] = rx(arm * p.sin() + noise[shoulder].at(s));
            r[elbow] = rx(-g.elbow_bias - 0.3 * arm * lift + noise[elbow].at(s));
            if u >= 1.0 {
                stance_toe.push(if side == 0.0 { 4 } else { 8 });
            }
        }
        r[0] = ry(amp * g.twist * phi.sin());
        r[9] = rx(g.torso_pitch) * rz(-style.torso_lean) * ry(-0.5 * amp * g.twist * phi.sin());
        r[10] = rx(noise[10].at(s));
        r[11] = rx(noise[11].at(s));
        for (j, m) in r.iter_mut().enumerate() {
            *m = posture[j] * *m;
        }
        local.push(r);
        let h = &content.heading;
        omega.push((turn + h.wobble_amp * (TAU * h.wobble_freq * s + wobble_phase).sin()) / fps);
    }

    // heading-frame joint positions with the root at the origin
    let rel: Vec<Vec<Vector3<f64>>> =
        local.iter().map(|r| pose_joints(&skeleton, 0.0, Vector3::zeros(), r)).collect();
    let mut yaw = vec![0.0; length];
    for t in 1..length {
        yaw[t] = yaw[t - 1] + omega[t - 1];
    }
    // the stance toe keeps its ground position and the lowest foot joint touches the floor
    let mut root = vec![Vector3::zeros(); length];
    for t in 0..length {
        let toe = stance_toe[t];
        root[t].y = -skeleton.foot_joints.iter().map(|&f| rel[t][f].y).fold(f64::INFINITY, f64::min);
        if t + 1 < length {
            let step = yaw_matrix(yaw[t]) * rel[t][toe] - yaw_matrix(yaw[t + 1]) * rel[t + 1][toe];
            root[t + 1].x = root[t].x + step.x;
            root[t + 1].z = root[t].z + step.z;
        }
    }
    let (seq, positions) = compose_features(skeleton, fps, &yaw, &root, &local, &ContactConfig::default())?;
    Ok(SyntheticClip { seq: seq.with_labels(Some(style.style_id), Some(content.content_id)), positions })
}
