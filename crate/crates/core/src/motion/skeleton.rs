use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint names of the default 21-joint rig, in index order.
pub const DEFAULT_JOINT_NAMES: [&str; 21] = [
    "pelvis", "l_hip", "l_knee", "l_ankle", "l_toe", "r_hip", "r_knee", "r_ankle", "r_toe",
    "spine1", "spine2", "neck", "head", "l_collar", "l_shoulder", "l_elbow", "l_wrist",
    "r_collar", "r_shoulder", "r_elbow", "r_wrist",
];

/// Kinematic tree. Coordinates are y-up, z-forward, +x to the character's left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    /// Parent of each joint; `-1` marks the root.
    pub parents: Vec<i32>,
    /// Rest offset of each joint from its parent, in meters.
    pub offsets: Vec<[f64; 3]>,
    /// Left ankle, left toe, right ankle, right toe.
    pub foot_joints: [usize; 4],
    /// `(left, right)` pairs swapped by mirroring.
    pub mirror_pairs: Vec<(usize, usize)>,
    pub height: f64,
    #[serde(default)]
    pub names: Vec<String>,
}

impl Skeleton {
    /// The 21-joint rig used throughout the crate.
    pub fn default21() -> Self {
        let parents = vec![-1, 0, 1, 2, 3, 0, 5, 6, 7, 0, 9, 10, 11, 10, 13, 14, 15, 10, 17, 18, 19];
        let left_leg = [[0.09, -0.06, 0.0], [0.0, -0.42, 0.0], [0.0, -0.41, 0.0], [0.0, -0.06, 0.14]];
        let left_arm = [[0.07, 0.18, 0.0], [0.12, 0.0, 0.0], [0.0, -0.28, 0.0], [0.0, -0.25, 0.0]];
        let flip = |v: [f64; 3]| [-v[0], v[1], v[2]];
        let mut offsets = vec![[0.0, 0.0, 0.0]];
        offsets.extend(left_leg);
        offsets.extend(left_leg.map(flip));
        offsets.extend([[0.0, 0.12, 0.0], [0.0, 0.25, 0.0], [0.0, 0.22, 0.0], [0.0, 0.12, 0.02]]);
        offsets.extend(left_arm);
        offsets.extend(left_arm.map(flip));
        let skeleton = Self {
            parents,
            offsets,
            foot_joints: [3, 4, 7, 8],
            mirror_pairs: vec![(1, 5), (2, 6), (3, 7), (4, 8), (13, 17), (14, 18), (15, 19), (16, 20)],
            height: 1.7,
            names: DEFAULT_JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        };
        skeleton.validate().expect("default skeleton is valid");
        skeleton
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        usize::try_from(self.parents[joint]).ok()
    }

    pub fn offset(&self, joint: usize) -> Vector3<f64> {
        Vector3::from(self.offsets[joint])
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.parents.len();
        let bad = |m: String| Err(Error::InvalidSkeleton(m));
        if j == 0 {
            return bad("no joints".into());
        }
        if self.offsets.len() != j {
            return bad(format!("{} offsets for {j} joints", self.offsets.len()));
        }
        if self.parents[0] != -1 {
            return bad("joint 0 must be the root".into());
        }
        for (i, &p) in self.parents.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= i {
                return bad(format!("joint {i} has parent {p}; parents must precede children"));
            }
        }
        if let Some(f) = self.foot_joints.iter().find(|&&f| f >= j) {
            return bad(format!("foot joint {f} out of range"));
        }
        let mut seen = vec![false; j];
        for &(l, r) in &self.mirror_pairs {
            if l == r || l >= j || r >= j || seen[l] || seen[r] {
                return bad(format!("mirror pair ({l}, {r}) is not part of an involution"));
            }
            seen[l] = true;
            seen[r] = true;
        }
        if !(self.height > 0.0) {
            return bad("height must be positive".into());
        }
        Ok(())
    }

    /// Joint permutation applied by mirroring (identity where unpaired).
    pub fn mirror_map(&self) -> Result<Vec<usize>> {
        if self.mirror_pairs.is_empty() {
            return Err(Error::MissingMirrorMap);
        }
        let mut map: Vec<usize> = (0..self.joint_count()).collect();
        for &(l, r) in &self.mirror_pairs {
            map[l] = r;
            map[r] = l;
        }
        Ok(map)
    }

    /// Stable identifier written into motion manifests.
    pub fn id(&self) -> String {
        if *self == Self::default21() {
            "default21".to_string()
        } else {
            format!("custom{}", self.joint_count())
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let skeleton: Self = serde_json::from_str(&text).map_err(Error::json(path))?;
        skeleton.validate()?;
        Ok(skeleton)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(Error::json(path))?;
        std::fs::write(path, text).map_err(Error::io(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rig_shape() {
        let s = Skeleton::default21();
        assert_eq!(s.joint_count(), 21);
        assert_eq!(s.parent(0), None);
        assert_eq!(s.parent(16), Some(15));
        let map = s.mirror_map().unwrap();
        for j in 0..21 {
            assert_eq!(map[map[j]], j);
            // mirrored offsets are reflections of each other
            let (a, b) = (s.offsets[j], s.offsets[map[j]]);
            assert!(a[0] == -b[0] && a[1] == b[1] && a[2] == b[2]);
        }
    }

    #[test]
    fn rejects_broken_trees() {
        let mut s = Skeleton::default21();
        s.parents[3] = 5;
        assert!(s.validate().is_err());
        let mut s = Skeleton::default21();
        s.mirror_pairs.push((1, 2));
        assert!(s.validate().is_err());
        let mut s = Skeleton::default21();
        s.mirror_pairs.clear();
        assert!(matches!(s.mirror_map(), Err(Error::MissingMirrorMap)));
    }
}
