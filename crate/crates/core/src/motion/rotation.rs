//! Continuous 6D rotation encoding (first two matrix columns) and helpers.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns shorter than this are treated as missing.
pub const DEGENERACY_EPS: f64 = 1e-8;

/// First two columns of a rotation matrix, column-major: `(c0x, c0y, c0z, c1x, c1y, c1z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation6D(pub [f64; 6]);

impl Rotation6D {
    pub const IDENTITY: Self = Self([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    fn columns(&self) -> (Vector3<f64>, Vector3<f64>) {
        let r = &self.0;
        (Vector3::new(r[0], r[1], r[2]), Vector3::new(r[3], r[4], r[5]))
    }
}

/// Any unit vector orthogonal to unit `v`.
fn orthogonal_to(v: &Vector3<f64>) -> Vector3<f64> {
    let (ax, ay, az) = (v.x.abs(), v.y.abs(), v.z.abs());
    let helper = if ax <= ay && ax <= az {
        Vector3::x()
    } else if ay <= az {
        Vector3::y()
    } else {
        Vector3::z()
    };
    v.cross(&helper).normalize()
}

/// Gram–Schmidt reconstruction of a rotation matrix.
///
/// If one column vanishes or the two are parallel, the basis is completed
/// from the longer column.
pub fn sixd_to_matrix(r: &Rotation6D) -> Result<Matrix3<f64>> {
    let (a1, a2) = r.columns();
    if !(a1.iter().chain(a2.iter()).all(|v| v.is_finite())) {
        return Err(Error::DegenerateRotation);
    }
    let (n1, n2) = (a1.norm(), a2.norm());
    if n1 <= DEGENERACY_EPS && n2 <= DEGENERACY_EPS {
        return Err(Error::DegenerateRotation);
    }
    let (b1, b2) = if n1 > DEGENERACY_EPS {
        let b1 = a1 / n1;
        let rest = a2 - b1 * b1.dot(&a2);
        let rn = rest.norm();
        let b2 = if rn > DEGENERACY_EPS { rest / rn } else { orthogonal_to(&b1) };
        (b1, b2)
    } else {
        let b2 = a2 / n2;
        let b1 = b2.cross(&orthogonal_to(&b2)).normalize();
        (b1, b2)
    };
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// Like [`sixd_to_matrix`] but maps unrecoverable input to the identity.
/// Used on network outputs, which are never exactly degenerate in practice.
pub fn sixd_to_matrix_lenient(r: &Rotation6D) -> Matrix3<f64> {
    sixd_to_matrix(r).unwrap_or_else(|_| Matrix3::identity())
}

/// Largest elementwise deviation of `RᵀR` from the identity.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).abs().max()
}

pub fn matrix_to_sixd(m: &Matrix3<f64>) -> Result<Rotation6D> {
    let err = orthonormality_error(m);
    if !(err <= 1e-4) || m.determinant() <= 0.0 {
        return Err(Error::NotARotation(err));
    }
    Ok(Rotation6D([m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]]))
}

/// Rotation about the vertical axis.
pub fn yaw_matrix(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Angle of the relative rotation `aᵀb`, in `[0, π]`.
pub fn geodesic_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let cos = (((a.transpose() * b).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    cos.acos()
}

/// Rotation of `angle` radians about unit `axis`.
pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}

/// `M R M` with `M = diag(-1, 1, 1)`: the rotation seen in a mirror across the sagittal plane.
pub fn reflect_sagittal(m: &Matrix3<f64>) -> Matrix3<f64> {
    let s = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
    s * m * s
}
