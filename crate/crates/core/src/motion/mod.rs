//! Pose features, rotation math, kinematics, augmentation and motion files.

pub mod augment;
pub mod contacts;
pub mod io;
pub mod kinematics;
pub mod layout;
pub mod norm;
pub mod rotation;
pub mod sequence;
pub mod skeleton;
pub mod window;

pub use augment::{mirror, resample_fps};
pub use contacts::{detect_foot_contacts, ContactConfig};
pub use io::{load_motion, save_motion, MotionManifest};
pub use kinematics::{forward_kinematics, integrate_root};
pub use layout::FeatureLayout;
pub use norm::NormStats;
pub use rotation::{matrix_to_sixd, sixd_to_matrix, Rotation6D};
pub use sequence::PoseSequence;
pub use skeleton::Skeleton;
pub use window::{homo_pair, window};
