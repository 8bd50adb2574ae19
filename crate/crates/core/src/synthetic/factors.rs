use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gait {
    Walk,
    Run,
    March,
    KickStep,
}

impl Gait {
    pub const ALL: [Gait; 4] = [Gait::Walk, Gait::Run, Gait::March, Gait::KickStep];

    pub fn name(self) -> &'static str {
        match self {
            Gait::Walk => "walk",
            Gait::Run => "run",
            Gait::March => "march",
            Gait::KickStep => "kick-step",
        }
    }
}

/// Yaw rate over time: `turn_rate + wobble_amp · sin(2π · wobble_freq · t)`, rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadingProfile {
    pub turn_rate: f64,
    pub wobble_amp: f64,
    pub wobble_freq: f64,
}

impl HeadingProfile {
    pub const STRAIGHT: Self = Self { turn_rate: 0.0, wobble_amp: 0.0, wobble_freq: 0.0 };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentFactor {
    pub content_id: usize,
    pub gait: Gait,
    pub heading: HeadingProfile,
    /// Nominal speed (m/s) of the neutral style; sets the leg swing.
    pub speed: f64,
}

impl ContentFactor {
    /// Content `id`: the gait cycles through walk, run, march, kick-step and
    /// larger ids add progressively sharper turns.
    pub fn preset(id: usize) -> Self {
        let gait = Gait::ALL[id % 4];
        let round = (id / 4) as f64;
        let speed = match gait {
            Gait::Walk => 1.2,
            Gait::Run => 2.6,
            Gait::March => 0.9,
            Gait::KickStep => 0.9,
        };
        let sign = if (id / 4) % 2 == 0 { 1.0 } else { -1.0 };
        Self {
            content_id: id,
            gait,
            heading: HeadingProfile { turn_rate: sign * 0.15 * round, wobble_amp: 0.2, wobble_freq: 0.25 },
            speed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0) {
            return Err(Error::Config(format!("content {}: speed must be positive", self.content_id)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleFactor {
    pub style_id: usize,
    pub name: String,
    /// Scales every oscillating joint angle.
    pub amplitude_scale: f64,
    /// Lateral torso roll, radians; positive leans to the character's left.
    pub torso_lean: f64,
    pub cadence_scale: f64,
    /// Extra scale on arm swing, on top of `amplitude_scale`.
    pub arm_swing_scale: f64,
    /// Constant `(joint, axis-angle)` offsets applied before the gait rotation.
    pub posture_offset: Vec<(usize, [f64; 3])>,
}

impl StyleFactor {
    pub fn neutral(style_id: usize) -> Self {
        Self {
            style_id,
            name: "neutral".into(),
            amplitude_scale: 1.0,
            torso_lean: 0.0,
            cadence_scale: 1.0,
            arm_swing_scale: 1.0,
            posture_offset: Vec::new(),
        }
    }

    /// Styles 0..4 are neutral, exaggerated, stooped-lean and brisk; higher
    /// ids get deterministic parametric variations.
    pub fn preset(id: usize) -> Self {
        let base = Self::neutral(id);
        match id {
            0 => base,
            1 => Self {
                name: "exaggerated".into(),
                amplitude_scale: 1.6,
                arm_swing_scale: 1.8,
                posture_offset: vec![(13, [0.0, 0.0, 0.25]), (17, [0.0, 0.0, -0.25])],
                ..base
            },
            2 => Self {
                name: "stooped-lean".into(),
                amplitude_scale: 0.8,
                torso_lean: 0.22,
                cadence_scale: 0.85,
                arm_swing_scale: 0.6,
                posture_offset: vec![(9, [0.35, 0.0, 0.0]), (11, [0.3, 0.0, 0.0]), (12, [0.25, 0.0, 0.0])],
                ..base
            },
            3 => Self {
                name: "brisk".into(),
                amplitude_scale: 1.05,
                cadence_scale: 1.3,
                arm_swing_scale: 1.3,
                posture_offset: vec![
                    (15, [-0.9, 0.0, 0.0]),
                    (19, [-0.9, 0.0, 0.0]),
                    (11, [-0.15, 0.0, 0.0]),
                ],
                ..base
            },
            _ => {
                let k = id - 4;
                Self {
                    name: format!("variant-{k}"),
                    amplitude_scale: 0.7 + 0.2 * (k % 5) as f64,
                    torso_lean: 0.1 * ((k % 3) as f64 - 1.0),
                    cadence_scale: 0.8 + 0.15 * (k % 4) as f64,
                    arm_swing_scale: 0.6 + 0.3 * (k % 3) as f64,
                    posture_offset: vec![(9, [0.08 * (k % 4) as f64, 0.0, 0.0])],
                    ..base
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64| (0.5..=2.0).contains(&v);
        if !in_range(self.amplitude_scale) || !in_range(self.cadence_scale) {
            return Err(Error::Config(format!("style {}: amplitude and cadence scales must lie in [0.5, 2]", self.style_id)));
        }
        if !(-0.5..=0.5).contains(&self.torso_lean) {
            return Err(Error::Config(format!("style {}: torso lean must lie in [-0.5, 0.5] rad", self.style_id)));
        }
        if !(self.arm_swing_scale >= 0.0) {
            return Err(Error::Config(format!("style {}: arm swing scale must be non-negative", self.style_id)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for id in 0..12 {
            StyleFactor::preset(id).validate().unwrap();
            ContentFactor::preset(id).validate().unwrap();
        }
        assert_eq!(StyleFactor::preset(2).name, "stooped-lean");
        assert_eq!(ContentFactor::preset(3).gait, Gait::KickStep);
        let mut bad = StyleFactor::preset(0);
        bad.cadence_scale = 2.5;
        assert!(bad.validate().is_err());
    }
}
