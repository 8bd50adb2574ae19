use std::ops::Range;

/// Column ranges of the per-frame feature vector for a `J`-joint skeleton.
///
/// `[yaw rate, vx, vz, height | positions 3J | velocities 3J | rotations 6J | contacts 4]`
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    pub joints: usize,
}

pub const ROOT_YAW_RATE: usize = 0;
pub const ROOT_VEL_X: usize = 1;
pub const ROOT_VEL_Z: usize = 2;
pub const ROOT_HEIGHT: usize = 3;
pub const ROOT_CHANNELS: usize = 4;
pub const CONTACT_CHANNELS: usize = 4;

impl FeatureLayout {
    pub const fn new(joints: usize) -> Self {
        Self { joints }
    }

    pub const fn dim(&self) -> usize {
        ROOT_CHANNELS + 12 * self.joints + CONTACT_CHANNELS
    }

    pub const fn root(&self) -> Range<usize> {
        0..ROOT_CHANNELS
    }

    pub const fn positions(&self) -> Range<usize> {
        ROOT_CHANNELS..ROOT_CHANNELS + 3 * self.joints
    }

    pub const fn velocities(&self) -> Range<usize> {
        let s = ROOT_CHANNELS + 3 * self.joints;
        s..s + 3 * self.joints
    }

    pub const fn rotations(&self) -> Range<usize> {
        let s = ROOT_CHANNELS + 6 * self.joints;
        s..s + 6 * self.joints
    }

    pub const fn contacts(&self) -> Range<usize> {
        let s = ROOT_CHANNELS + 12 * self.joints;
        s..s + CONTACT_CHANNELS
    }

    /// Everything between the root and contact blocks.
    pub const fn local(&self) -> Range<usize> {
        ROOT_CHANNELS..ROOT_CHANNELS + 12 * self.joints
    }

    pub const fn position(&self, joint: usize) -> usize {
        ROOT_CHANNELS + 3 * joint
    }

    pub const fn velocity(&self, joint: usize) -> usize {
        ROOT_CHANNELS + 3 * self.joints + 3 * joint
    }

    pub const fn rotation(&self, joint: usize) -> usize {
        ROOT_CHANNELS + 6 * self.joints + 6 * joint
    }
}
