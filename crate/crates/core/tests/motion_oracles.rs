use std::sync::Arc;

use motionstyle::motion::kinematics::rest_sequence;
use motionstyle::motion::rotation::orthonormality_error;
use motionstyle::motion::window::homo_pair_starts;
use motionstyle::motion::*;
use nalgebra::{Matrix3, Quaternion, UnitQuaternion};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn random_quaternion(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let q = Quaternion::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q)
}

/// Rotation matrix written out from quaternion components, independent of nalgebra's conversion.
fn quat_matrix(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

#[test]
fn sixd_reconstructs_quaternion_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let m = quat_matrix(&random_quaternion(&mut rng));
        let r6 = Rotation6D([m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]]);
        let back = sixd_to_matrix(&r6).unwrap();
        assert!((back - m).abs().max() < 1e-6);
    }
}

#[test]
fn matrix_sixd_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let m = quat_matrix(&random_quaternion(&mut rng));
        let back = sixd_to_matrix(&matrix_to_sixd(&m).unwrap()).unwrap();
        assert!((back - m).abs().max() < 1e-6);
    }
}

proptest! {
    #[test]
    fn sixd_output_is_a_rotation(v in prop::array::uniform6(-10.0f64..10.0)) {
        prop_assume!(v[..3].iter().map(|x| x * x).sum::<f64>() > 1e-12
            || v[3..].iter().map(|x| x * x).sum::<f64>() > 1e-12);
        let m = sixd_to_matrix(&Rotation6D(v)).unwrap();
        prop_assert!(orthonormality_error(&m) < 1e-6);
        prop_assert!((m.determinant() - 1.0).abs() < 1e-6);
        let n1 = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n1 > 1e-8 {
            for k in 0..3 {
                prop_assert!((m[(k, 0)] - v[k] / n1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mirror_is_an_exact_involution(seed in any::<u64>(), len in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skel = Arc::new(Skeleton::default21());
        let mut seq = rest_sequence(skel, len, 30.0, 0.9);
        seq.frames.mapv_inplace(|_| rng.random_range(-2.0f32..2.0));
        let twice = mirror(&mirror(&seq).unwrap()).unwrap();
        prop_assert!(twice.frames.iter().zip(seq.frames.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn resample_same_rate_is_identity(seed in any::<u64>(), len in 1usize..20, fps in 10.0f64..120.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seq = rest_sequence(Arc::new(Skeleton::default21()), len, fps, 0.9);
        seq.frames.mapv_inplace(|_| rng.random_range(-2.0f32..2.0));
        prop_assert_eq!(resample_fps(&seq, fps).unwrap(), seq);
    }

    #[test]
    fn zero_velocity_fk_is_time_constant(seed in any::<u64>(), len in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seq = rest_sequence(Arc::new(Skeleton::default21()), len, 30.0, 0.9);
        let pose: Vec<f32> = (0..seq.dim()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        for mut row in seq.frames.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = if c < 3 { 0.0 } else { pose[c] };
            }
        }
        let p = forward_kinematics(&seq).unwrap();
        for t in 1..len {
            for j in 0..21 {
                for k in 0..3 {
                    prop_assert_eq!(p[[t, j, k]], p[[0, j, k]]);
                }
            }
        }
    }

    #[test]
    fn normalization_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skel = Arc::new(Skeleton::default21());
        let clips: Vec<PoseSequence> = (0..3)
            .map(|_| {
                let mut s = rest_sequence(skel.clone(), 20, 30.0, 0.9);
                s.frames.mapv_inplace(|_| rng.random_range(-1.0f32..1.0));
                s
            })
            .collect();
        let stats = NormStats::fit(&clips).unwrap();
        for c in &clips {
            let back = stats.denormalize(&stats.znormalize(c).unwrap()).unwrap();
            for (a, b) in back.frames.iter().zip(c.frames.iter()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn normalized_corpus_has_standard_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let skel = Arc::new(Skeleton::default21());
    let clips: Vec<PoseSequence> = (0..6)
        .map(|i| {
            let mut s = rest_sequence(skel.clone(), 40, 30.0, 0.9);
            s.frames.mapv_inplace(|_| 3.0 + i as f32 * 0.1 + rng.random_range(-1.0f32..1.0) * 0.5);
            s
        })
        .collect();
    let stats = NormStats::fit(&clips).unwrap();
    let normed: Vec<PoseSequence> = clips.iter().map(|c| stats.znormalize(c).unwrap()).collect();
    let n = 240.0;
    for c in 0..260 {
        let vals: Vec<f64> = normed.iter().flat_map(|s| s.frames.column(c).to_vec()).map(|v| v as f64).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6, "channel {c} mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-4, "channel {c} std {}", var.sqrt());
    }
}

fn chi_square_p(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn homo_pair_starts_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (t_len, length) = (200, 160);
    let mut first = vec![0u64; t_len - length + 1];
    let mut second = vec![0u64; t_len - length + 1];
    for _ in 0..10_000 {
        let (a, b) = homo_pair_starts(t_len, length, &mut rng).unwrap();
        first[a] += 1;
        second[b] += 1;
    }
    assert!(chi_square_p(&first) > 0.01);
    assert!(chi_square_p(&second) > 0.01);
}

#[test]
fn symmetric_rest_pose_is_a_mirror_fixed_point() {
    let seq = rest_sequence(Arc::new(Skeleton::default21()), 5, 30.0, 0.9);
    assert_eq!(mirror(&seq).unwrap().frames, seq.frames);
}

#[test]
fn mirrored_rotations_match_reflected_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let skel = Arc::new(Skeleton::default21());
    let mut seq = rest_sequence(skel, 1, 30.0, 0.9);
    let layout = seq.layout();
    let mats: Vec<Matrix3<f64>> = (0..21).map(|_| quat_matrix(&random_quaternion(&mut rng))).collect();
    for (j, m) in mats.iter().enumerate() {
        let r6 = matrix_to_sixd(m).unwrap();
        for k in 0..6 {
            seq.frames[[0, layout.rotation(j) + k]] = r6.0[k] as f32;
        }
    }
    let mirrored = mirror(&seq).unwrap();
    let map = seq.skeleton.mirror_map().unwrap();
    let s = Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, 1.0, 1.0));
    for j in 0..21 {
        let want = s * mats[map[j]] * s;
        let o = layout.rotation(j);
        let got: Vec<f64> = (0..6).map(|k| mirrored.frames[[0, o + k]] as f64).collect();
        let m = sixd_to_matrix(&Rotation6D(got.try_into().unwrap())).unwrap();
        assert!((m - want).abs().max() < 1e-6);
    }
}
