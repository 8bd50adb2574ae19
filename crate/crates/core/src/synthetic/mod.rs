//! Procedurally generated, labelled locomotion clips with independent style
//! and content factors.

pub mod corpus;
pub mod factors;
pub mod gait;

pub use corpus::{Corpus, CorpusSpec, LabeledClip, Split};
pub use factors::{ContentFactor, Gait, HeadingProfile, StyleFactor};
pub use gait::{generate_clip, SyntheticClip};
