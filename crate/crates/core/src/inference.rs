//! Stylization modes over a trained model bundle.

use std::path::Path;
use std::sync::Arc;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Codec, MotionCode};
use crate::error::{Error, Result};
use crate::global_motion::GlobalMotion;
use crate::motion::layout::{ROOT_VEL_Z, ROOT_YAW_RATE};
use crate::motion::{detect_foot_contacts, forward_kinematics, ContactConfig, NormStats, PoseSequence, Skeleton};
use crate::stylizer::{interpolate, sample_prior, sample_style, StyleCode, Stylizer};
use crate::trainer::Ablations;

/// Style motions shorter than this are edge-padded before encoding.
pub const MIN_STYLE_FRAMES: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactSource {
    /// Re-detected from the forward kinematics of the output.
    #[default]
    Recompute,
    /// As produced by the decoder, thresholded at 0.5.
    Decoded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StylizeOptions {
    /// Predict root velocity from the generated local motion; otherwise copy it from the content clip.
    pub use_gmp: bool,
    pub contacts: ContactSource,
    /// Motion-based mode: sample the style distribution with this seed instead of taking its mean.
    pub sample_seed: Option<u64>,
}

impl Default for StylizeOptions {
    fn default() -> Self {
        Self { use_gmp: true, contacts: ContactSource::Recompute, sample_seed: None }
    }
}

/// Everything needed to stylize raw clips.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub codec: Codec,
    pub stylizer: Stylizer,
    pub gmp: Option<GlobalMotion>,
    pub stats: NormStats,
    pub skeleton: Arc<Skeleton>,
    pub contact: ContactConfig,
    pub ablations: Ablations,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    format_version: u32,
    has_gmp: bool,
    contact: ContactConfig,
}

impl ModelBundle {
    pub fn supervised(&self) -> bool {
        self.stylizer.config().supervised()
    }

    pub fn n_labels(&self) -> Option<usize> {
        self.stylizer.config().n_labels
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        self.codec.save(dir)?;
        self.stylizer.save(dir, serde_json::to_value(self.ablations).map_err(Error::json(dir))?)?;
        if let Some(g) = &self.gmp {
            g.save(dir)?;
        }
        self.stats.save(&dir.join("norm.json"))?;
        self.skeleton.save(&dir.join("skeleton.json"))?;
        let meta = BundleFile { format_version: 1, has_gmp: self.gmp.is_some(), contact: self.contact };
        let path = dir.join("bundle.json");
        std::fs::write(&path, serde_json::to_string_pretty(&meta).map_err(Error::json(&path))?)
            .map_err(Error::io(&path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("bundle.json");
        let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
        let meta: BundleFile = serde_json::from_str(&text).map_err(Error::json(&path))?;
        let codec = Codec::load(dir)?;
        let (stylizer, abl) = Stylizer::load(dir)?;
        let gmp = if meta.has_gmp { Some(GlobalMotion::load(dir)?) } else { None };
        Ok(Self {
            codec,
            stylizer,
            gmp,
            stats: NormStats::load(&dir.join("norm.json"))?,
            skeleton: Arc::new(Skeleton::load(&dir.join("skeleton.json"))?),
            contact: meta.contact,
            ablations: serde_json::from_value(abl).map_err(Error::json(dir))?,
        })
    }

    fn normalized(&self, seq: &PoseSequence) -> Result<PoseSequence> {
        if seq.dim() != self.stats.dim() {
            return Err(Error::DimMismatch(seq.dim(), self.stats.dim()));
        }
        if seq.normalized { Ok(seq.clone()) } else { self.stats.znormalize(seq) }
    }

    fn raw(&self, seq: &PoseSequence) -> Result<PoseSequence> {
        if seq.normalized { self.stats.denormalize(seq) } else { Ok(seq.clone()) }
    }

    fn check_label(&self, label: Option<usize>) -> Result<()> {
        self.stylizer.config().check_label(label).map_err(|e| match e {
            Error::LabelOutOfRange { .. } => e,
            other => Error::ModeMismatch(other.to_string()),
        })
    }

    /// Motion code of a clip (raw or normalized).
    pub fn encode(&self, seq: &PoseSequence) -> Result<MotionCode> {
        self.codec.encode(&self.normalized(seq)?)
    }

    /// Style code of a style motion: the distribution mean, or a sample when `sample_seed` is set.
    pub fn style_of(&self, style_motion: &PoseSequence, label: Option<usize>, sample_seed: Option<u64>) -> Result<StyleCode> {
        self.check_label(label)?;
        if style_motion.is_empty() {
            return Err(Error::TooShort { needed: 1, actual: 0 });
        }
        let padded = style_motion.edge_padded(MIN_STYLE_FRAMES);
        let code = self.encode(&padded)?;
        let dist = self.stylizer.encode_style(&code.values, label)?;
        Ok(match sample_seed {
            Some(seed) => sample_style(&dist, &mut ChaCha8Rng::seed_from_u64(seed)),
            None => dist.mean_code(),
        })
    }

    /// Core pipeline: content code → generator → decoder → root prediction → contacts.
    pub fn render(&self, content: &PoseSequence, style: &StyleCode, label: Option<usize>, opts: &StylizeOptions) -> Result<PoseSequence> {
        self.check_label(label)?;
        if content.is_empty() {
            return Err(Error::TooShort { needed: 1, actual: 0 });
        }
        let content_raw = self.raw(content)?;
        let code = self.encode(content)?;
        let c = self.stylizer.encode_content(&code.values)?;
        let out_code = self.stylizer.generate(&c, style, label, Some(code.len()))?;
        let decoded = self.codec.decode(&MotionCode { values: out_code, ..code })?;
        let with_root = match (&self.gmp, opts.use_gmp) {
            (Some(g), true) => g.apply(&decoded)?,
            _ => decoded,
        };
        let mut out = self.stats.denormalize(&with_root)?;
        if !(opts.use_gmp && self.gmp.is_some()) {
            out.frames
                .slice_mut(s![.., ROOT_YAW_RATE..=ROOT_VEL_Z])
                .assign(&content_raw.frames.slice(s![.., ROOT_YAW_RATE..=ROOT_VEL_Z]));
        }
        let contacts = out.layout().contacts();
        match opts.contacts {
            ContactSource::Decoded => {
                out.frames.slice_mut(s![.., contacts]).mapv_inplace(|v| if v > 0.5 { 1.0 } else { 0.0 });
            }
            ContactSource::Recompute => {
                let pos = forward_kinematics(&out)?;
                let detected = detect_foot_contacts(&pos, &out.skeleton, out.fps, &self.contact);
                out.frames.slice_mut(s![.., contacts]).assign(&detected);
            }
        }
        out.style_label = label;
        out.content_label = content.content_label;
        Ok(out)
    }

    /// Style extracted from an example motion (modes a and c).
    pub fn stylize_motion_based(
        &self,
        content: &PoseSequence,
        style_motion: &PoseSequence,
        label: Option<usize>,
        opts: &StylizeOptions,
    ) -> Result<PoseSequence> {
        let style = self.style_of(style_motion, label, opts.sample_seed)?;
        self.render(content, &style, label, opts)
    }

    /// Style sampled from the prior, conditioned on a target label (mode b).
    pub fn stylize_label_based(&self, content: &PoseSequence, label: usize, seed: u64, opts: &StylizeOptions) -> Result<PoseSequence> {
        if !self.supervised() {
            return Err(Error::UnsupervisedModel);
        }
        let style = sample_prior(self.stylizer.config().style_dim, &mut ChaCha8Rng::seed_from_u64(seed));
        self.render(content, &style, Some(label), opts)
    }

    /// Style sampled from the prior without a label (mode d).
    pub fn stylize_prior_based(&self, content: &PoseSequence, seed: u64, opts: &StylizeOptions) -> Result<PoseSequence> {
        if self.supervised() {
            return Err(Error::SupervisedModel);
        }
        let style = sample_prior(self.stylizer.config().style_dim, &mut ChaCha8Rng::seed_from_u64(seed));
        self.render(content, &style, None, opts)
    }

    pub fn interpolate_styles(
        &self,
        style_a: &StyleCode,
        style_b: &StyleCode,
        alpha: f64,
        content: &PoseSequence,
        label: Option<usize>,
        opts: &StylizeOptions,
    ) -> Result<PoseSequence> {
        let style = interpolate(style_a, style_b, alpha)?;
        self.render(content, &style, label, opts)
    }
}

/// Largest per-frame feature difference between two equally shaped clips.
pub fn max_frame_jump(a: &PoseSequence, b: &PoseSequence) -> Result<f64> {
    if a.frames.dim() != b.frames.dim() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let d: Array2<f32> = &a.frames - &b.frames;
    Ok(d.rows().into_iter().map(|r| r.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt()).fold(0.0, f64::max))
}
