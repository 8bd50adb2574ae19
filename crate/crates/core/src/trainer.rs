//! Triplet sampling, the stylizer objective and the training loop.

use std::io::Write;
use std::path::Path;

use motionstyle_tape::{Adam, ParamStore, Real, Tape, Tensor, Var};
use ndarray::{s, Array2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Codec, CodecNet};
use crate::error::{Error, Result};
use crate::motion::PoseSequence;
use crate::nn::{edge_pad_time, frames_to_tensor};
use crate::stylizer::{StyleDistribution, Stylizer, StylizerConfig, StylizerNet, StyleOut};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Supervised,
    Unsupervised,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    pub no_latent: bool,
    pub no_prob_style: bool,
    pub no_homo_style: bool,
    pub no_autoencoding: bool,
    pub no_cycle: bool,
    pub prob_content: bool,
    pub end_to_end: bool,
}

impl Ablations {
    pub fn validate(&self) -> Result<()> {
        if self.no_latent && self.end_to_end {
            return Err(Error::Config("no_latent and end_to_end are mutually exclusive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub hsa: f64,
    pub cyc: f64,
    pub kl: f64,
}

impl LossWeights {
    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Supervised => Self { hsa: 1.0, cyc: 0.1, kl: 0.1 },
            Mode::Unsupervised => Self { hsa: 0.1, cyc: 1.0, kl: 0.01 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub ablations: Ablations,
    pub weights: LossWeights,
    /// Network widths; `code_dim`, `n_labels` and the ablation switches are filled in by the trainer.
    pub model: StylizerConfig,
    pub lr: f64,
    pub warmup: usize,
    /// Triplets per step.
    pub batch: usize,
    /// Frames per sub-clip.
    pub window: usize,
    pub steps: usize,
    pub seed: u64,
    /// Stop once the smoothed total has not improved by 1% for this many steps.
    pub early_stop_patience: Option<usize>,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(Mode::Supervised)
    }
}

impl TrainConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            ablations: Ablations::default(),
            weights: LossWeights::for_mode(mode),
            model: StylizerConfig::default(),
            lr: 1e-4,
            warmup: 200,
            batch: 32,
            window: 64,
            steps: 20_000,
            seed: 0,
            early_stop_patience: Some(2_000),
            log_every: 25,
        }
    }

    /// Weight of each term in the optimized total: `(rec, hsa, cyc, kl)`.
    pub fn effective_weights(&self) -> (f64, f64, f64, f64) {
        let a = &self.ablations;
        let w = &self.weights;
        (
            if a.no_autoencoding { 0.0 } else { 1.0 },
            if a.no_homo_style { 0.0 } else { w.hsa },
            if a.no_cycle { 0.0 } else { w.cyc },
            w.kl,
        )
    }

    /// The optimized total for given term values.
    pub fn combine(&self, rec: f64, hsa: f64, cyc: f64, kl: f64) -> f64 {
        let (a, b, c, d) = self.effective_weights();
        a * rec + b * hsa + c * cyc + d * kl
    }

    fn validate(&self) -> Result<()> {
        self.ablations.validate()?;
        let w = &self.weights;
        if [w.hsa, w.cyc, w.kl].iter().any(|x| !(*x >= 0.0)) || !(self.lr > 0.0) {
            return Err(Error::Config("loss weights must be non-negative and lr positive".into()));
        }
        if self.batch == 0 || self.window < 2 {
            return Err(Error::Config("batch must be positive and window at least 2 frames".into()));
        }
        Ok(())
    }
}

/// Three sub-clips: 1 and 2 share a sequence, 3 comes from a different one.
#[derive(Clone, Debug)]
pub struct Triplet {
    pub seq_ids: [usize; 3],
    pub clips: [Array2<f32>; 3],
    pub labels: [Option<usize>; 3],
}

impl Triplet {
    /// Motion codes of the three clips under a frozen codec.
    pub fn codes(&self, codec: &Codec, template: &PoseSequence) -> Result<[Array2<f32>; 3]> {
        let enc = |c: &Array2<f32>| -> Result<Array2<f32>> {
            let seq = PoseSequence::new(c.clone(), template.fps, template.skeleton.clone(), true)?;
            Ok(codec.encode(&seq)?.values)
        };
        Ok([enc(&self.clips[0])?, enc(&self.clips[1])?, enc(&self.clips[2])?])
    }
}

fn crop(seq: &PoseSequence, start: usize, len: usize) -> Array2<f32> {
    if seq.len() < len {
        edge_pad_time(&seq.frames, len).slice(s![..len, ..]).to_owned()
    } else {
        seq.frames.slice(s![start..start + len, ..]).to_owned()
    }
}

pub fn sample_triplet(dataset: &[&PoseSequence], window: usize, rng: &mut impl Rng) -> Result<Triplet> {
    if dataset.len() < 2 {
        return Err(Error::DatasetTooSmall(format!("{} sequences, need at least 2", dataset.len())));
    }
    let n = dataset.len();
    let a = rng.random_range(0..n);
    let mut c = rng.random_range(0..n - 1);
    if c >= a {
        c += 1;
    }
    let (sa, sc) = (dataset[a], dataset[c]);
    let span_a = sa.len().saturating_sub(window);
    let (p, q) = (rng.random_range(0..=span_a), rng.random_range(0..=span_a));
    let r = rng.random_range(0..=sc.len().saturating_sub(window));
    Ok(Triplet {
        seq_ids: [a, a, c],
        clips: [crop(sa, p, window), crop(sa, q, window), crop(sc, r, window)],
        labels: [sa.style_label, sa.style_label, sc.style_label],
    })
}

/// Chains same-style clips of different contents into longer single-style
/// sequences, cross-fading `fade` frames at each seam. Clip `i` of every
/// content (in a per-sequence shuffled order) forms sequence `i` of a style.
pub fn chain_by_style(clips: &[&PoseSequence], fade: usize, seed: u64) -> Result<Vec<PoseSequence>> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<usize, BTreeMap<usize, Vec<&PoseSequence>>> = BTreeMap::new();
    for c in clips {
        let style = c.style_label.ok_or(Error::LabelRequired)?;
        groups.entry(style).or_default().entry(c.content_label.unwrap_or(0)).or_default().push(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (style, contents) in groups {
        let per = contents.values().map(Vec::len).max().unwrap_or(0);
        for i in 0..per {
            let mut parts: Vec<&PoseSequence> = contents.values().filter_map(|v| v.get(i).copied()).collect();
            for k in (1..parts.len()).rev() {
                parts.swap(k, rng.random_range(0..=k));
            }
            let mut frames = parts[0].frames.clone();
            for p in &parts[1..] {
                let f = fade.min(frames.nrows()).min(p.len());
                let t0 = frames.nrows() - f;
                for k in 0..f {
                    let w = (k + 1) as f32 / (f + 1) as f32;
                    let mut row = frames.row_mut(t0 + k);
                    row *= 1.0 - w;
                    row.scaled_add(w, &p.frames.row(k));
                }
                frames.append(ndarray::Axis(0), p.frames.slice(s![f.., ..])).expect("equal widths");
            }
            let seq = PoseSequence::new(frames, parts[0].fps, parts[0].skeleton.clone(), parts[0].normalized)?;
            out.push(seq.with_labels(Some(style), None));
        }
    }
    Ok(out)
}

/// Closed-form `KL(a ‖ b)` between diagonal Gaussians, summed over dimensions.
pub fn kl_gaussians(a: &StyleDistribution, b: &StyleDistribution) -> Result<f64> {
    if a.mu.len() != b.mu.len() || a.logvar.len() != a.mu.len() || b.logvar.len() != b.mu.len() {
        return Err(Error::DimMismatch(a.mu.len(), b.mu.len()));
    }
    let mut kl = 0.0;
    for i in 0..a.mu.len() {
        let (ma, la) = (a.mu[i] as f64, a.logvar[i] as f64);
        let (mb, lb) = (b.mu[i] as f64, b.logvar[i] as f64);
        kl += 0.5 * (lb - la + ((la).exp() + (ma - mb).powi(2)) / lb.exp() - 1.0);
    }
    Ok(kl)
}

/// A batch of triplets as channels-first motion tensors `[B, D, T]`.
#[derive(Clone, Debug)]
pub struct TripletBatch<T: Real> {
    pub motion: [Tensor<T>; 3],
    pub labels: Option<[Vec<usize>; 3]>,
}

impl<T: Real> TripletBatch<T> {
    pub fn from_triplets(triplets: &[Triplet], supervised: bool) -> Result<Self> {
        let motion = std::array::from_fn(|i| {
            let refs: Vec<&Array2<f32>> = triplets.iter().map(|t| &t.clips[i]).collect();
            frames_to_tensor(&refs)
        });
        let labels = if supervised {
            let mut out: [Vec<usize>; 3] = Default::default();
            for t in triplets {
                for i in 0..3 {
                    out[i].push(t.labels[i].ok_or(Error::LabelRequired)?);
                }
            }
            Some(out)
        } else {
            None
        };
        Ok(Self { motion, labels })
    }
}

/// Loss terms on the tape.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub rec: Var,
    pub hsa: Var,
    pub cyc: Var,
    pub kl: Var,
    pub total: Var,
    /// Number of style distributions regularized towards the prior.
    pub kl_spaces: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec: f64,
    pub hsa: f64,
    pub cyc: f64,
    pub kl: f64,
    pub total: f64,
    pub grads_finite: bool,
}

fn cat<T: Real>(tape: &mut Tape<T>, parts: &[Var]) -> Var {
    parts[1..].iter().fold(parts[0], |acc, &p| tape.concat(acc, p, 0))
}

fn split<T: Real>(tape: &mut Tape<T>, x: Var, n: usize) -> Vec<Var> {
    let b = tape.shape(x)[0] / n;
    (0..n).map(|i| tape.narrow(x, 0, i * b, b)).collect()
}

fn cat_labels(labels: &Option<[Vec<usize>; 3]>, order: &[usize]) -> Option<Vec<usize>> {
    labels.as_ref().map(|l| order.iter().flat_map(|&i| l[i].iter().copied()).collect())
}

fn logvar_or_zero<T: Real>(tape: &mut Tape<T>, s: &StyleOut) -> Var {
    match s.logvar {
        Some(lv) => lv,
        None => tape.constant(Tensor::zeros(tape.shape(s.mu))),
    }
}

/// Builds the combined objective for one batch of triplets.
#[allow(clippy::too_many_arguments)]
pub fn loss_graph<T: Real>(
    tape: &mut Tape<T>,
    net: &StylizerNet,
    store: &ParamStore<T>,
    codec: &CodecNet,
    codec_store: &ParamStore<T>,
    batch: &TripletBatch<T>,
    cfg: &TrainConfig,
    noise: &mut dyn RngCore,
) -> Result<LossVars> {
    let labels = &batch.labels;
    let x: Vec<Var> = batch.motion.iter().map(|m| tape.constant(m.clone())).collect();
    let x_all = cat(tape, &x);
    let enc = codec.encode(tape, codec_store, x_all, None);
    let z_all = enc.z;
    let t_z = tape.shape(z_all)[2];
    let z = split(tape, z_all, 3);

    let content = net.encode_content(tape, store, z_all, Some(&mut *noise));
    let c = split(tape, content.code, 3);
    let style = net.encode_style(tape, store, z_all, cat_labels(labels, &[0, 1, 2]).as_deref())?;
    let sc_all = net.style_code(tape, &style, Some(&mut *noise));
    let sc = split(tape, sc_all, 3);

    // Reconstructions of 1 and 2, plus the swap z^t = G(content 2, style 3).
    let g_in_c = cat(tape, &[c[0], c[1], c[1]]);
    let g_in_s = cat(tape, &[sc[0], sc[1], sc[2]]);
    let g1 = net.generate(tape, store, g_in_c, g_in_s, cat_labels(labels, &[0, 1, 2]).as_deref(), t_z)?;
    let rec12 = tape.narrow(g1, 0, 0, 2 * tape.shape(x[0])[0]);
    let z_t = split(tape, g1, 3)[2];

    let content_t = net.encode_content(tape, store, z_t, Some(&mut *noise));
    let style_t = net.encode_style(tape, store, z_t, cat_labels(labels, &[2]).as_deref())?;
    let sc_t = net.style_code(tape, &style_t, Some(&mut *noise));

    // Cycle: z̃² = G(content t, style 2), z̃³ = G(content 3, style t).
    let g2_c = cat(tape, &[content_t.code, c[2]]);
    let g2_s = cat(tape, &[sc[1], sc_t]);
    let cyc23 = net.generate(tape, store, g2_c, g2_s, cat_labels(labels, &[1, 2]).as_deref(), t_z)?;

    let decoded = {
        let all = cat(tape, &[rec12, cyc23]);
        codec.decode(tape, codec_store, all)
    };
    let t = tape.shape(x[0])[2];
    let decoded = if tape.shape(decoded)[2] == t { decoded } else { tape.narrow(decoded, 2, 0, t) };
    let p_hat = split(tape, decoded, 2);

    let z12 = cat(tape, &[z[0], z[1]]);
    let z23 = cat(tape, &[z[1], z[2]]);
    let x12 = cat(tape, &[x[0], x[1]]);
    let x23 = cat(tape, &[x[1], x[2]]);
    let pair_l1 = |tape: &mut Tape<T>, a: Var, b: Var, c: Var, d: Var| {
        let lz = tape.l1(a, b);
        let lp = tape.l1(c, d);
        let s = tape.add(lz, lp);
        tape.scale(s, 2.0)
    };
    let rec = pair_l1(tape, rec12, z12, p_hat[0], x12);
    let cyc = pair_l1(tape, cyc23, z23, p_hat[1], x23);

    let lv_all = logvar_or_zero(tape, &style);
    let mu = split(tape, style.mu, 3);
    let lv = split(tape, lv_all, 3);
    let hsa = tape.kl_diag(mu[0], lv[0], Some((mu[1], lv[1])));

    let kl123 = tape.kl_diag(style.mu, lv_all, None);
    let kl123 = tape.scale(kl123, 3.0);
    let lv_t = logvar_or_zero(tape, &style_t);
    let kl_t = tape.kl_diag(style_t.mu, lv_t, None);
    let mut kl = tape.add(kl123, kl_t);
    if let (Some(m), Some(l)) = (content.mu, content.logvar) {
        let kc = tape.kl_diag(m, l, None);
        let kc = tape.scale(kc, 3.0);
        kl = tape.add(kl, kc);
    }

    let (w_rec, w_hsa, w_cyc, w_kl) = cfg.effective_weights();
    let terms = [(rec, w_rec), (hsa, w_hsa), (cyc, w_cyc), (kl, w_kl)];
    let mut total = tape.scale(terms[0].0, terms[0].1);
    for &(v, w) in &terms[1..] {
        let sv = tape.scale(v, w);
        total = tape.add(total, sv);
    }
    if cfg.ablations.end_to_end {
        let reg = codec.latent_reg(tape, &enc);
        total = tape.add(total, reg);
    }
    Ok(LossVars { rec, hsa, cyc, kl, total, kl_spaces: 4 })
}

impl LossReport {
    pub fn from_vars<T: Real>(tape: &Tape<T>, v: &LossVars) -> Self {
        let f = |x: Var| tape.value(x).item().to_f64().unwrap_or(f64::NAN);
        Self { rec: f(v.rec), hsa: f(v.hsa), cyc: f(v.cyc), kl: f(v.kl), total: f(v.total), grads_finite: true }
    }
}

/// Evaluates the objective on one batch without updating weights.
pub fn compute_losses(
    stylizer: &Stylizer,
    codec: &Codec,
    triplets: &[Triplet],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LossReport> {
    let batch = TripletBatch::from_triplets(triplets, stylizer.config().supervised())?;
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = loss_graph(&mut tape, &stylizer.net, &stylizer.params, &codec.net, &codec.params, &batch, cfg, &mut rng)?;
    let mut report = LossReport::from_vars(&tape, &vars);
    if !report.total.is_finite() {
        return Err(Error::NonFiniteLoss("total"));
    }
    report.grads_finite = tape.backward(vars.total).all_finite();
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub rec: f64,
    pub hsa: f64,
    pub cyc: f64,
    pub kl: f64,
    pub total: f64,
}

pub fn write_curve_csv(rows: &[CurveRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(Error::io(path))?);
    let mut out = String::from("step,L_rec,L_hsa,L_cyc,L_kl,total\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{},{}\n", r.step, r.rec, r.hsa, r.cyc, r.kl, r.total));
    }
    f.write_all(out.as_bytes()).map_err(Error::io(path))?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub stylizer: Stylizer,
    /// The codec used by the stylizer: the input codec, the identity codec
    /// (`no_latent`) or the jointly trained one (`end_to_end`).
    pub codec: Codec,
    pub curve: Vec<CurveRow>,
    pub steps_run: usize,
}

fn resolve_model(dataset: &[&PoseSequence], codec: &Codec, cfg: &TrainConfig) -> Result<StylizerConfig> {
    let mut m = cfg.model.clone();
    m.code_dim = codec.config().code_dim();
    m.no_prob_style = cfg.ablations.no_prob_style;
    m.prob_content = cfg.ablations.prob_content;
    m.n_labels = match cfg.mode {
        Mode::Unsupervised => None,
        Mode::Supervised => {
            let mut n = 0;
            for s in dataset {
                n = n.max(s.style_label.ok_or(Error::LabelRequired)? + 1);
            }
            Some(n)
        }
    };
    Ok(m)
}

/// Trains a stylizer on normalized clips against a frozen codec.
pub fn train_stylizer(dataset: &[&PoseSequence], codec: Option<&Codec>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.len() < 2 {
        return Err(Error::DatasetTooSmall(format!("{} sequences, need at least 2", dataset.len())));
    }
    for s in dataset {
        s.require_normalized()?;
    }
    let feature_dim = dataset[0].dim();
    let mut codec = if cfg.ablations.no_latent {
        Codec::identity(feature_dim)
    } else {
        let given = codec.ok_or_else(|| Error::MissingCodec("stylizer training needs a pretrained codec".into()))?;
        if cfg.ablations.end_to_end {
            let mut fresh = Codec::new(given.config(), cfg.seed ^ 0xE2E)?;
            fresh.params.set_trainable(true);
            fresh
        } else {
            given.clone()
        }
    };
    let model = resolve_model(dataset, &codec, cfg)?;
    let mut stylizer = Stylizer::new(&model, cfg.seed)?;
    stylizer.params.set_trainable(true);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5717));
    let mut adam = Adam::new(cfg.lr, cfg.warmup);
    let mut codec_adam = Adam::new(cfg.lr, cfg.warmup);
    let window = cfg.window.div_ceil(codec.config().scale()) * codec.config().scale();
    let mut curve = Vec::new();
    let (mut smoothed, mut best, mut best_step) = (None::<f64>, f64::INFINITY, 0);
    let mut steps_run = 0;
    for step in 0..cfg.steps {
        let triplets = (0..cfg.batch)
            .map(|_| sample_triplet(dataset, window, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let batch = TripletBatch::<f32>::from_triplets(&triplets, model.supervised())?;
        let mut tape = Tape::new();
        let vars = loss_graph(&mut tape, &stylizer.net, &stylizer.params, &codec.net, &codec.params, &batch, cfg, &mut rng)?;
        let report = LossReport::from_vars(&tape, &vars);
        if !report.total.is_finite() {
            return Err(Error::Diverged { step, what: "stylizer total loss".into() });
        }
        let grads = tape.backward(vars.total);
        if !grads.all_finite() {
            return Err(Error::Diverged { step, what: "stylizer gradients".into() });
        }
        adam.step(&mut stylizer.params, &grads);
        if cfg.ablations.end_to_end {
            codec_adam.step(&mut codec.params, &grads);
        }
        steps_run = step + 1;
        if step % cfg.log_every.max(1) == 0 || step + 1 == cfg.steps {
            let r = report;
            curve.push(CurveRow { step, rec: r.rec, hsa: r.hsa, cyc: r.cyc, kl: r.kl, total: r.total });
            log::debug!("stylizer step {step}: {r:?}");
        }
        let s = smoothed.map_or(report.total, |p| 0.98 * p + 0.02 * report.total);
        smoothed = Some(s);
        if s < 0.99 * best {
            best = s;
            best_step = step;
        }
        if cfg.early_stop_patience.is_some_and(|p| step - best_step >= p) {
            log::info!("stylizer early stop at step {step}");
            break;
        }
    }
    stylizer.params.set_trainable(false);
    codec.params.set_trainable(false);
    Ok(TrainOutcome { stylizer, codec, curve, steps_run })
}
