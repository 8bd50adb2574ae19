//! Pretrained motion autoencoder: pose sequences ↔ motion codes with 4× temporal compression.

use std::path::Path;
use std::sync::Arc;

use motionstyle_tape::{read_blob, write_blob, Adam, ParamStore, Real, Tape, Tensor, Var};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::kinematics::pose_joints;
use crate::motion::rotation::{sixd_to_matrix_lenient, Rotation6D};
use crate::motion::{FeatureLayout, NormStats, PoseSequence, Skeleton};
use crate::nn::{edge_pad_time, frames_to_tensor, lrelu, randn, reparameterize, tensor_to_frames, Conv1d};

/// Temporal compression of the convolutional codecs.
pub const CODEC_SCALE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecVariant {
    Vae,
    Ae,
    /// Identity codec: the code is the pose features themselves.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub variant: CodecVariant,
    pub latent_dim: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub lambda_kld: f64,
    pub lambda_l1: f64,
    pub lambda_sms: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            variant: CodecVariant::Vae,
            latent_dim: 512,
            hidden: 384,
            feature_dim: 260,
            lambda_kld: 1e-3,
            lambda_l1: 1e-3,
            lambda_sms: 1e-3,
        }
    }
}

impl CodecConfig {
    pub fn identity(feature_dim: usize) -> Self {
        Self { variant: CodecVariant::None, latent_dim: feature_dim, hidden: 0, feature_dim, ..Self::default() }
    }

    /// Width of the motion code.
    pub fn code_dim(&self) -> usize {
        match self.variant {
            CodecVariant::None => self.feature_dim,
            _ => self.latent_dim,
        }
    }

    pub fn scale(&self) -> usize {
        match self.variant {
            CodecVariant::None => 1,
            _ => CODEC_SCALE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.lambda_kld, self.lambda_l1, self.lambda_sms].iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("codec regularizer weights must be non-negative".into()));
        }
        if self.variant != CodecVariant::None && (self.latent_dim == 0 || self.hidden == 0) {
            return Err(Error::Config("codec widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct ConvLayers {
    enc1: Conv1d,
    enc2: Conv1d,
    dec1: Conv1d,
    dec2: Conv1d,
}

/// Codec architecture; weights live in a separate [`ParamStore`].
#[derive(Clone, Debug)]
pub struct CodecNet {
    pub config: CodecConfig,
    layers: Option<ConvLayers>,
}

/// Encoder output on the tape.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub z: Var,
    pub mu: Option<Var>,
    pub logvar: Option<Var>,
}

impl CodecNet {
    pub fn build<T: Real>(config: &CodecConfig, rng: &mut impl Rng) -> Result<(Self, ParamStore<T>)> {
        config.validate()?;
        let mut store = ParamStore::new();
        let layers = match config.variant {
            CodecVariant::None => None,
            v => {
                let (d, h, z) = (config.feature_dim, config.hidden, config.latent_dim);
                let enc_out = if v == CodecVariant::Vae { 2 * z } else { z };
                Some(ConvLayers {
                    enc1: Conv1d::new(&mut store, "codec.enc1", d, h, 3, 2, rng),
                    enc2: Conv1d::new(&mut store, "codec.enc2", h, enc_out, 3, 2, rng),
                    dec1: Conv1d::new(&mut store, "codec.dec1", z, h, 3, 1, rng),
                    dec2: Conv1d::new(&mut store, "codec.dec2", h, d, 3, 1, rng),
                })
            }
        };
        Ok((Self { config: config.clone(), layers }, store))
    }

    /// `x: [B, D, T]` with `T` a multiple of the scale. With `noise` the VAE
    /// samples; otherwise it returns the mean.
    pub fn encode<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        noise: Option<&mut dyn rand::RngCore>,
    ) -> Encoded {
        let Some(l) = &self.layers else {
            return Encoded { z: x, mu: None, logvar: None };
        };
        let h = l.enc1.forward(tape, store, x);
        let h = lrelu(tape, h);
        let out = l.enc2.forward(tape, store, h);
        if self.config.variant == CodecVariant::Vae {
            let zd = self.config.latent_dim;
            let mu = tape.narrow(out, 1, 0, zd);
            let logvar = tape.narrow(out, 1, zd, zd);
            let z = match noise {
                Some(rng) => {
                    let eps = randn(tape.shape(mu), rng);
                    reparameterize(tape, mu, logvar, eps)
                }
                None => mu,
            };
            Encoded { z, mu: Some(mu), logvar: Some(logvar) }
        } else {
            Encoded { z: out, mu: None, logvar: None }
        }
    }

    pub fn decode<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, z: Var) -> Var {
        let Some(l) = &self.layers else {
            return z;
        };
        let h = tape.upsample(z, 2);
        let h = l.dec1.forward(tape, store, h);
        let h = lrelu(tape, h);
        let h = tape.upsample(h, 2);
        l.dec2.forward(tape, store, h)
    }

    /// Latent regularizer for the configured variant, averaged per element.
    pub fn latent_reg<T: Real>(&self, tape: &mut Tape<T>, enc: &Encoded) -> Var {
        let c = &self.config;
        match c.variant {
            CodecVariant::None => tape.constant(Tensor::scalar(T::zero())),
            CodecVariant::Vae => {
                let (mu, lv) = (enc.mu.expect("vae mean"), enc.logvar.expect("vae logvar"));
                let per_item = tape.shape(mu)[1..].iter().product::<usize>().max(1);
                let kl = tape.kl_diag(mu, lv, None);
                tape.scale(kl, c.lambda_kld / per_item as f64)
            }
            CodecVariant::Ae => {
                let z = enc.z;
                let zeros = tape.constant(Tensor::zeros(tape.shape(z)));
                let mag = tape.l1(z, zeros);
                let t = tape.shape(z)[2];
                let sms = if t >= 2 {
                    let a = tape.narrow(z, 2, 1, t - 1);
                    let b = tape.narrow(z, 2, 0, t - 1);
                    tape.l1(a, b)
                } else {
                    tape.constant(Tensor::scalar(T::zero()))
                };
                let mag = tape.scale(mag, c.lambda_l1);
                let sms = tape.scale(sms, c.lambda_sms);
                tape.add(mag, sms)
            }
        }
    }
}

/// Latent statistics passed to [`latent_reg_value`].
#[derive(Clone, Debug)]
pub enum LatentStats<'a> {
    Code(&'a Array2<f32>),
    Gaussian { mu: &'a Array2<f32>, logvar: &'a Array2<f32> },
}

/// Regularizer value outside of training (for inspection and tests).
pub fn latent_reg_value(config: &CodecConfig, stats: LatentStats<'_>) -> Result<f64> {
    match (config.variant, stats) {
        (CodecVariant::Vae, LatentStats::Gaussian { mu, logvar }) => {
            let n = mu.len().max(1) as f64;
            let kl: f64 = mu
                .iter()
                .zip(logvar.iter())
                .map(|(&m, &l)| 0.5 * ((l as f64).exp() + (m as f64).powi(2) - 1.0 - l as f64))
                .sum();
            Ok(config.lambda_kld * kl / n)
        }
        (CodecVariant::Ae, LatentStats::Code(z)) => {
            let mag = z.iter().map(|v| v.abs() as f64).sum::<f64>() / z.len().max(1) as f64;
            let t = z.nrows();
            let sms = if t >= 2 {
                let d = &z.slice(s![1.., ..]) - &z.slice(s![..t - 1, ..]);
                d.iter().map(|v| v.abs() as f64).sum::<f64>() / d.len() as f64
            } else {
                0.0
            };
            Ok(config.lambda_l1 * mag + config.lambda_sms * sms)
        }
        (v, _) => Err(Error::VariantMismatch(format!("{v:?}"))),
    }
}

/// A `T_z × D_z` motion code.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionCode {
    pub values: Array2<f32>,
    pub source_fps: f64,
    pub variant: CodecVariant,
    /// Frame count of the clip that produced the code, used to crop after decoding.
    pub source_len: Option<usize>,
    pub skeleton: Arc<Skeleton>,
}

impl MotionCode {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// A codec with trained weights.
#[derive(Clone, Debug)]
pub struct Codec {
    pub net: CodecNet,
    pub params: ParamStore<f32>,
}

#[derive(Serialize, Deserialize)]
struct CodecFile {
    format_version: u32,
    config: CodecConfig,
    norm_stats: String,
    crate_version: String,
}

impl Codec {
    pub fn new(config: &CodecConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, mut params) = CodecNet::build(config, &mut rng)?;
        params.set_trainable(false);
        Ok(Self { net, params })
    }

    pub fn identity(feature_dim: usize) -> Self {
        Self::new(&CodecConfig::identity(feature_dim), 0).expect("identity codec")
    }

    pub fn config(&self) -> &CodecConfig {
        &self.net.config
    }

    /// Encodes a normalized clip; the VAE returns its mean. Conv codecs
    /// edge-pad the clip to a multiple of 4 frames first.
    pub fn encode(&self, seq: &PoseSequence) -> Result<MotionCode> {
        seq.require_normalized()?;
        let padded = edge_pad_time(&seq.frames, self.config().scale());
        let mut tape = Tape::<f32>::inference();
        let x = tape.constant(frames_to_tensor(&[&padded]));
        let enc = self.net.encode(&mut tape, &self.params, x, None);
        Ok(MotionCode {
            values: tensor_to_frames(tape.value(enc.z), 0),
            source_fps: seq.fps,
            variant: self.config().variant,
            source_len: Some(seq.len()),
            skeleton: seq.skeleton.clone(),
        })
    }

    /// Decodes to a normalized clip of `4·T_z` frames, cropped to the source length when known.
    pub fn decode(&self, code: &MotionCode) -> Result<PoseSequence> {
        if code.dim() != self.config().code_dim() {
            return Err(Error::DimMismatch(code.dim(), self.config().code_dim()));
        }
        let mut tape = Tape::<f32>::inference();
        let z = tape.constant(frames_to_tensor(&[&code.values]));
        let out = self.net.decode(&mut tape, &self.params, z);
        let mut frames = tensor_to_frames(tape.value(out), 0);
        if let Some(n) = code.source_len.filter(|&n| n <= frames.nrows()) {
            frames = frames.slice(s![..n, ..]).to_owned();
        }
        PoseSequence::new(frames, code.source_fps, code.skeleton.clone(), true)
    }

    pub fn reconstruct(&self, seq: &PoseSequence) -> Result<PoseSequence> {
        self.decode(&self.encode(seq)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let meta = CodecFile {
            format_version: 1,
            config: self.config().clone(),
            norm_stats: "norm.json".into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
        };
        let path = dir.join("codec.json");
        std::fs::write(&path, serde_json::to_string_pretty(&meta).map_err(Error::json(&path))?)
            .map_err(Error::io(&path))?;
        save_params(&self.params, &dir.join("codec.bin"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("codec.json");
        let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
        let meta: CodecFile = serde_json::from_str(&text).map_err(Error::json(&path))?;
        let mut codec = Self::new(&meta.config, 0)?;
        load_params(&mut codec.params, &dir.join("codec.bin"))?;
        Ok(codec)
    }
}

pub(crate) fn save_params(store: &ParamStore<f32>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    let mut w = std::io::BufWriter::new(file);
    write_blob(&mut w, store.named().map(|(n, t)| (n.to_string(), t.clone())))?;
    Ok(())
}

pub(crate) fn load_params(store: &mut ParamStore<f32>, path: &Path) -> Result<()> {
    let file = std::fs::File::open(path).map_err(Error::io(path))?;
    let entries = read_blob(&mut std::io::BufReader::new(file))?;
    store.load_named(entries)?;
    Ok(())
}

/// Mean per-joint position error (mm) between two raw clips, after removing
/// the root trajectory: joints are posed from their rotations with the root
/// at the origin facing +z, so drift in integrated root motion is ignored.
pub fn mpjpe_mm(a: &PoseSequence, b: &PoseSequence) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    a.require_raw()?;
    b.require_raw()?;
    let layout = a.layout();
    let skel = &a.skeleton;
    let pose = |seq: &PoseSequence, t: usize| {
        let f = seq.frame(t);
        let rots: Vec<_> = (0..layout.joints)
            .map(|j| {
                let o = layout.rotation(j);
                let r: [f64; 6] = std::array::from_fn(|k| f[o + k] as f64);
                sixd_to_matrix_lenient(&Rotation6D(r))
            })
            .collect();
        pose_joints(skel, 0.0, nalgebra::Vector3::zeros(), &rots)
    };
    let mut total = 0.0;
    for t in 0..a.len() {
        let (pa, pb) = (pose(a, t), pose(b, t));
        total += pa.iter().zip(&pb).map(|(x, y)| (x - y).norm()).sum::<f64>();
    }
    Ok(1000.0 * total / (a.len() * layout.joints) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub window: usize,
    pub lr: f64,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for CodecTrainConfig {
    fn default() -> Self {
        Self { steps: 20_000, batch: 32, window: 64, lr: 1e-4, warmup: 200, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CodecReport {
    /// `(step, training loss)` every few steps.
    pub curve: Vec<(usize, f64)>,
    pub heldout_loss_init: f64,
    pub heldout_loss_final: f64,
    pub heldout_mpjpe_mm: f64,
    pub final_train_loss: f64,
}

/// Random `window`-frame crops (edge-padded when a clip is shorter).
pub(crate) fn sample_windows<'a>(
    clips: &[&'a PoseSequence],
    window: usize,
    batch: usize,
    rng: &mut impl Rng,
) -> Vec<Array2<f32>> {
    (0..batch)
        .map(|_| {
            let seq = clips[rng.random_range(0..clips.len())];
            if seq.len() <= window {
                edge_pad_time(&seq.frames, window).slice(s![..window, ..]).to_owned()
            } else {
                let start = rng.random_range(0..=seq.len() - window);
                seq.frames.slice(s![start..start + window, ..]).to_owned()
            }
        })
        .collect()
}

fn recon_loss<T: Real>(
    net: &CodecNet,
    store: &ParamStore<T>,
    tape: &mut Tape<T>,
    x: Var,
    rng: Option<&mut dyn rand::RngCore>,
) -> Var {
    let enc = net.encode(tape, store, x, rng);
    let y = net.decode(tape, store, enc.z);
    let rec = tape.l1(y, x);
    let reg = net.latent_reg(tape, &enc);
    tape.add(rec, reg)
}

/// Held-out objective (deterministic encoding).
fn heldout_loss(codec: &Codec, clips: &[&PoseSequence]) -> f64 {
    let mut total = 0.0;
    for seq in clips {
        let padded = edge_pad_time(&seq.frames, codec.config().scale());
        let mut tape = Tape::<f32>::inference();
        let x = tape.constant(frames_to_tensor(&[&padded]));
        let l = recon_loss(&codec.net, &codec.params, &mut tape, x, None);
        total += tape.value(l).item() as f64;
    }
    total / clips.len().max(1) as f64
}

/// Trains the codec on normalized clips: frame L1 reconstruction plus the latent regularizer.
pub fn train_codec(
    train: &[&PoseSequence],
    heldout: &[&PoseSequence],
    stats: &NormStats,
    config: &CodecConfig,
    opts: &CodecTrainConfig,
) -> Result<(Codec, CodecReport)> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for seq in train.iter().chain(heldout) {
        seq.require_normalized()?;
    }
    let mut codec = Codec::new(config, opts.seed)?;
    let mut report = CodecReport::default();
    if config.variant == CodecVariant::None {
        return Ok((codec, report));
    }
    report.heldout_loss_init = heldout_loss(&codec, heldout);
    codec.params.set_trainable(true);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xC0DEC);
    let mut adam = Adam::new(opts.lr, opts.warmup);
    let window = opts.window.div_ceil(CODEC_SCALE) * CODEC_SCALE;
    let mut smoothed = None;
    for step in 0..opts.steps {
        let batch = sample_windows(train, window, opts.batch, &mut rng);
        let refs: Vec<&Array2<f32>> = batch.iter().collect();
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(frames_to_tensor(&refs));
        let loss = recon_loss(&codec.net, &codec.params, &mut tape, x, Some(&mut rng));
        let value = tape.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(Error::Diverged { step, what: "codec loss".into() });
        }
        let grads = tape.backward(loss);
        adam.step(&mut codec.params, &grads);
        let s = smoothed.map_or(value, |p: f64| 0.95 * p + 0.05 * value);
        smoothed = Some(s);
        if step % 25 == 0 || step + 1 == opts.steps {
            report.curve.push((step, value));
            log::debug!("codec step {step}: loss {value:.5} (smoothed {s:.5})");
        }
    }
    codec.params.set_trainable(false);
    report.final_train_loss = smoothed.unwrap_or(f64::NAN);
    report.heldout_loss_final = heldout_loss(&codec, heldout);
    let mut mpjpe = 0.0;
    for seq in heldout {
        let rec = codec.reconstruct(seq)?;
        mpjpe += mpjpe_mm(&stats.denormalize(seq)?, &stats.denormalize(&rec)?)?;
    }
    report.heldout_mpjpe_mm = mpjpe / heldout.len().max(1) as f64;
    Ok((codec, report))
}

pub fn feature_layout(config: &CodecConfig) -> FeatureLayout {
    FeatureLayout::new((config.feature_dim - 8) / 12)
}
