use rand::Rng;

use super::sequence::PoseSequence;
use crate::error::{Error, Result};

/// Fixed-length windows starting at `0, stride, 2·stride, ...`.
pub fn window(seq: &PoseSequence, length: usize, stride: usize) -> Result<Vec<PoseSequence>> {
    if length == 0 || stride == 0 {
        return Err(Error::Config("window length and stride must be positive".into()));
    }
    if seq.len() < length {
        return Err(Error::TooShort { needed: length, actual: seq.len() });
    }
    Ok((0..=seq.len() - length).step_by(stride).map(|s| seq.slice(s, length)).collect())
}

/// Two independent uniform start indices for windows of `length` in `t_len` frames.
pub fn homo_pair_starts(t_len: usize, length: usize, rng: &mut impl Rng) -> Result<(usize, usize)> {
    if length == 0 || t_len < length {
        return Err(Error::TooShort { needed: length, actual: t_len });
    }
    let span = t_len - length;
    Ok((rng.random_range(0..=span), rng.random_range(0..=span)))
}

/// Two same-length sub-clips of one sequence with independent random starts.
pub fn homo_pair(seq: &PoseSequence, length: usize, rng: &mut impl Rng) -> Result<(PoseSequence, PoseSequence)> {
    let (a, b) = homo_pair_starts(seq.len(), length, rng)?;
    Ok((seq.slice(a, length), seq.slice(b, length)))
}
