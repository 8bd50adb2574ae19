//! Metrics, feature-extracting classifiers, the runtime benchmark and the repeated evaluation protocol.

use std::path::Path;
use std::time::Instant;

use motionstyle_tape::{Adam, ParamStore, Real, Tape, Var};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::codec::{load_params, save_params};
use crate::error::{Error, Result};
use crate::inference::{ContactSource, ModelBundle, StylizeOptions};
use crate::motion::kinematics::local_rotations;
use crate::motion::rotation::geodesic_angle;
use crate::motion::{forward_kinematics, PoseSequence};
use crate::nn::{edge_pad_time, frames_to_tensor, lrelu, Conv1d, Linear};

/// Eigenvalues below this are treated as zero in the FID matrix square root.
pub const FID_EIG_CLAMP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Style,
    Content,
}

impl Target {
    pub fn label_of(&self, seq: &PoseSequence) -> Option<usize> {
        match self {
            Target::Style => seq.style_label,
            Target::Content => seq.content_label,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub feature_dim: usize,
    pub widths: [usize; 3],
    pub n_classes: usize,
}

impl ClassifierConfig {
    pub fn new(feature_dim: usize, n_classes: usize) -> Self {
        Self { feature_dim, widths: [64, 128, 256], n_classes }
    }

    pub fn penultimate_dim(&self) -> usize {
        self.widths[2]
    }
}

#[derive(Clone, Debug)]
struct ClassifierNet {
    convs: [Conv1d; 3],
    head: Linear,
}

impl ClassifierNet {
    fn build<T: Real>(c: &ClassifierConfig, rng: &mut impl Rng) -> (Self, ParamStore<T>) {
        let mut st = ParamStore::new();
        let [a, b, f] = c.widths;
        let convs = [
            Conv1d::new(&mut st, "clf.conv1", c.feature_dim, a, 3, 2, rng),
            Conv1d::new(&mut st, "clf.conv2", a, b, 3, 2, rng),
            Conv1d::new(&mut st, "clf.conv3", b, f, 3, 1, rng),
        ];
        let head = Linear::new(&mut st, "clf.head", f, c.n_classes, rng);
        (Self { convs, head }, st)
    }

    /// `(penultimate features [B, F], logits [B, N])`.
    fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> (Var, Var) {
        let mut h = x;
        for c in &self.convs {
            h = c.forward(tape, store, h);
            h = lrelu(tape, h);
        }
        let feat = tape.mean_time(h);
        let logits = self.head.forward(tape, store, feat);
        (feat, logits)
    }
}

/// Temporal-conv classifier over normalized clips; its penultimate layer is the feature extractor.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub target: Target,
    pub config: ClassifierConfig,
    pub heldout_accuracy: Option<f64>,
    net: ClassifierNet,
    params: ParamStore<f32>,
}

#[derive(Serialize, Deserialize)]
struct ClassifierFile {
    format_version: u32,
    target: Target,
    config: ClassifierConfig,
    heldout_accuracy: Option<f64>,
}

impl Classifier {
    pub fn new(target: Target, config: ClassifierConfig, seed: u64) -> Self {
        let (net, mut params) = ClassifierNet::build(&config, &mut ChaCha8Rng::seed_from_u64(seed));
        params.set_trainable(false);
        Self { target, config, heldout_accuracy: None, net, params }
    }

    fn run(&self, seq: &PoseSequence) -> Result<(Vec<f32>, Vec<f32>)> {
        seq.require_normalized()?;
        if seq.dim() != self.config.feature_dim {
            return Err(Error::DimMismatch(seq.dim(), self.config.feature_dim));
        }
        let frames = edge_pad_time(&seq.frames, 4);
        let frames = if frames.nrows() < 8 { seq.edge_padded(8).frames } else { frames };
        let mut tape = Tape::inference();
        let x = tape.constant(frames_to_tensor(&[&frames]));
        let (f, l) = self.net.forward(&mut tape, &self.params, x);
        Ok((tape.value(f).data().to_vec(), tape.value(l).data().to_vec()))
    }

    /// Penultimate features, one row per clip.
    pub fn features(&self, seqs: &[&PoseSequence]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((seqs.len(), self.config.penultimate_dim()));
        for (i, s) in seqs.iter().enumerate() {
            let (f, _) = self.run(s)?;
            out.row_mut(i).iter_mut().zip(f).for_each(|(o, v)| *o = v as f64);
        }
        Ok(out)
    }

    pub fn predict(&self, seqs: &[&PoseSequence]) -> Result<Vec<usize>> {
        seqs.iter()
            .map(|s| {
                let (_, l) = self.run(s)?;
                Ok(l.iter().enumerate().fold((0, f32::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0)
            })
            .collect()
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let path = dir.join(format!("{stem}.json"));
        let meta = ClassifierFile {
            format_version: 1,
            target: self.target,
            config: self.config.clone(),
            heldout_accuracy: self.heldout_accuracy,
        };
        std::fs::write(&path, serde_json::to_string_pretty(&meta).map_err(Error::json(&path))?)
            .map_err(Error::io(&path))?;
        save_params(&self.params, &dir.join(format!("{stem}.bin")))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let path = dir.join(format!("{stem}.json"));
        let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
        let meta: ClassifierFile = serde_json::from_str(&text).map_err(Error::json(&path))?;
        let mut c = Self::new(meta.target, meta.config, 0);
        c.heldout_accuracy = meta.heldout_accuracy;
        load_params(&mut c.params, &dir.join(format!("{stem}.bin")))?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub window: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self { steps: 600, batch: 32, window: 64, lr: 1e-3, seed: 0 }
    }
}

fn labels_for(seqs: &[&PoseSequence], target: Target) -> Result<Vec<usize>> {
    seqs.iter().map(|s| target.label_of(s).ok_or(Error::LabelRequired)).collect()
}

/// Trains on random windows of labeled, normalized clips.
pub fn train_classifier(
    train: &[&PoseSequence],
    heldout: &[&PoseSequence],
    target: Target,
    opts: &ClassifierTrainConfig,
) -> Result<Classifier> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let labels = labels_for(train, target)?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let mut clf = Classifier::new(target, ClassifierConfig::new(train[0].dim(), n_classes), opts.seed);
    clf.params.set_trainable(true);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xC1F);
    let mut adam = Adam::new(opts.lr, 20);
    for step in 0..opts.steps {
        let mut crops = Vec::with_capacity(opts.batch);
        let mut ys = Vec::with_capacity(opts.batch);
        for _ in 0..opts.batch {
            let i = rng.random_range(0..train.len());
            let seq = train[i];
            let w = opts.window.min(seq.len());
            let start = rng.random_range(0..=seq.len() - w);
            crops.push(edge_pad_time(&seq.frames.slice(s![start..start + w, ..]).to_owned(), opts.window.max(8)));
            ys.push(labels[i]);
        }
        let refs: Vec<&Array2<f32>> = crops.iter().map(|c| c).collect();
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(frames_to_tensor(&refs));
        let (_, logits) = clf.net.forward(&mut tape, &clf.params, x);
        let loss = tape.cross_entropy(logits, &ys);
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Diverged { step, what: "classifier loss".into() });
        }
        let grads = tape.backward(loss);
        adam.step(&mut clf.params, &grads);
    }
    clf.params.set_trainable(false);
    if !heldout.is_empty() {
        let y = labels_for(heldout, target)?;
        clf.heldout_accuracy = Some(accuracy(heldout, &y, &clf)?);
    }
    Ok(clf)
}

/// Fraction of clips the classifier assigns to the given labels.
pub fn accuracy(outputs: &[&PoseSequence], labels: &[usize], clf: &Classifier) -> Result<f64> {
    if outputs.len() != labels.len() {
        return Err(Error::LengthMismatch(outputs.len(), labels.len()));
    }
    if outputs.is_empty() {
        return Err(Error::TooFew { needed: 1, actual: 0 });
    }
    let pred = clf.predict(outputs)?;
    Ok(pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64)
}

fn mean_cov(x: &Array2<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = x.dim();
    let m = DMatrix::from_row_iterator(n, d, x.iter().copied());
    let mean = DVector::from_iterator(d, m.column_iter().map(|c| c.mean()));
    let mut centered = m;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (mean, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| if v > FID_EIG_CLAMP { v.sqrt() } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of two feature sets (rows are samples).
pub fn fid(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    let d = a.ncols();
    if d == 0 || b.ncols() != d || a.nrows() < 2 || b.nrows() < 2 {
        return Err(Error::DegenerateFeatures(format!("feature sets {:?} and {:?}", a.dim(), b.dim())));
    }
    let (ma, ca) = mean_cov(a);
    let (mb, cb) = mean_cov(b);
    // tr((Σa Σb)^½) = tr((Σa^½ Σb Σa^½)^½), which keeps the product symmetric.
    let ra = sym_sqrt(&ca);
    let inner = &ra * &cb * &ra;
    let cross = SymmetricEigen::new((&inner + inner.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .map(|&v| if v > FID_EIG_CLAMP { v.sqrt() } else { 0.0 })
        .sum::<f64>();
    let diff = (&ma - &mb).norm_squared();
    Ok((diff + ca.trace() + cb.trace() - 2.0 * cross).max(0.0))
}

/// Mean geodesic angle between local joint rotations of two equally long clips (raw features).
pub fn geodesic_distance(a: &PoseSequence, b: &PoseSequence) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(a.dim(), b.dim()));
    }
    a.require_raw()?;
    b.require_raw()?;
    let mut total = 0.0;
    let j = a.layout().joints;
    for t in 0..a.len() {
        let (ra, rb) = (local_rotations(a, t), local_rotations(b, t));
        total += ra.iter().zip(&rb).map(|(x, y)| geodesic_angle(x, y)).sum::<f64>();
    }
    Ok(total / (a.len() * j) as f64)
}

/// Mean pairwise Euclidean distance between classifier features of `k ≥ 2` outputs.
pub fn diversity(outputs: &[&PoseSequence], clf: &Classifier) -> Result<f64> {
    if outputs.len() < 2 {
        return Err(Error::TooFew { needed: 2, actual: outputs.len() });
    }
    let f = clf.features(outputs)?;
    let k = outputs.len();
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            total += (&f.row(i) - &f.row(j)).mapv(|v| v * v).sum().sqrt();
        }
    }
    Ok(total / (k * (k - 1) / 2) as f64)
}

/// Mean planar speed (m/s) of foot joints over frames where their contact label is set.
pub fn foot_skating(seq: &PoseSequence) -> Result<f64> {
    let pos = forward_kinematics(seq)?;
    let contacts = seq.layout().contacts();
    let feet = seq.skeleton.foot_joints;
    let (mut total, mut count) = (0.0, 0usize);
    for t in 0..seq.len().saturating_sub(1) {
        for (k, &j) in feet.iter().enumerate() {
            if seq.frames[[t, contacts.start + k]] > 0.5 {
                let dx = pos[[t + 1, j, 0]] - pos[[t, j, 0]];
                let dz = pos[[t + 1, j, 2]] - pos[[t, j, 2]];
                total += (dx * dx + dz * dz).sqrt() * seq.fps;
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub median_ms: f64,
    pub iqr_ms: f64,
    pub samples_ms: Vec<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Times `f` after `warmup` untimed calls.
pub fn benchmark(mut f: impl FnMut() -> Result<()>, warmup: usize, repeats: usize) -> Result<BenchResult> {
    if repeats == 0 {
        return Err(Error::TooFew { needed: 1, actual: 0 });
    }
    for _ in 0..warmup.max(3) {
        f()?;
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        f()?;
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchResult { median_ms: quantile(&sorted, 0.5), iqr_ms: quantile(&sorted, 0.75) - quantile(&sorted, 0.25), samples_ms: samples })
}

/// Full single-clip forward pass (encode, stylize, decode, root prediction) on a `frames`-long input.
pub fn benchmark_forward(bundle: &ModelBundle, clip: &PoseSequence, frames: usize, warmup: usize, repeats: usize) -> Result<BenchResult> {
    let content = clip.edge_padded(frames).slice(0, frames);
    let label = bundle.supervised().then_some(0);
    let opts = StylizeOptions { contacts: ContactSource::Decoded, ..Default::default() };
    benchmark(|| bundle.stylize_motion_based(&content, &content, label, &opts).map(|_| ()), warmup, repeats)
}

/// Mean with a two-sided 95% Student-t half-width (`None` for fewer than two values).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub ci95: Option<f64>,
    pub values: Vec<f64>,
}

impl Stat {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n.max(1) as f64;
        let ci95 = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid t").inverse_cdf(0.975);
            t * (var / n as f64).sqrt()
        });
        Self { mean, ci95, values }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub repeats: usize,
    pub style_acc: Stat,
    pub content_acc: Stat,
    pub style_fid: Stat,
    pub content_fid: Stat,
    pub geo_dis: Stat,
    pub diversity: Stat,
    pub foot_skating: Stat,
}

impl MetricReport {
    pub fn metrics(&self) -> [(&'static str, &Stat); 7] {
        [
            ("style_acc", &self.style_acc),
            ("content_acc", &self.content_acc),
            ("style_fid", &self.style_fid),
            ("content_fid", &self.content_fid),
            ("geo_dis", &self.geo_dis),
            ("diversity", &self.diversity),
            ("foot_skating", &self.foot_skating),
        ]
    }

    /// Writes `<stem>.json` and `<stem>.csv` (metric, mean, ci95).
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, serde_json::to_string_pretty(self).map_err(Error::json(&json))?).map_err(Error::io(&json))?;
        let mut csv = String::from("metric,mean,ci95\n");
        for (name, s) in self.metrics() {
            let ci = s.ci95.map_or(String::new(), |c| c.to_string());
            csv.push_str(&format!("{name},{},{ci}\n", s.mean));
        }
        let path = dir.join(format!("{stem}.csv"));
        std::fs::write(&path, csv).map_err(Error::io(&path))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub repeats: usize,
    pub seed: u64,
    /// Content clips per repeat that also get `diversity_samples` stochastic outputs.
    pub diversity_clips: usize,
    pub diversity_samples: usize,
    pub use_gmp: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { repeats: 30, seed: 0, diversity_clips: 2, diversity_samples: 3, use_gmp: true }
    }
}

/// Repeated stylization of every test clip with randomly assigned style sources, scored by the classifiers.
pub fn evaluate_protocol(
    bundle: &ModelBundle,
    test: &[&PoseSequence],
    style_sources: &[&PoseSequence],
    style_clf: &Classifier,
    content_clf: &Classifier,
    cfg: &ProtocolConfig,
) -> Result<MetricReport> {
    if test.is_empty() || style_sources.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.repeats == 0 {
        return Err(Error::TooFew { needed: 1, actual: 0 });
    }
    let norm = |s: &PoseSequence| if s.normalized { Ok(s.clone()) } else { bundle.stats.znormalize(s) };
    let real_styles: Vec<PoseSequence> = style_sources.iter().map(|s| norm(s)).collect::<Result<_>>()?;
    let real_contents: Vec<PoseSequence> = test.iter().map(|s| norm(s)).collect::<Result<_>>()?;
    let style_real_feat = style_clf.features(&real_styles.iter().collect::<Vec<_>>())?;
    let content_real_feat = content_clf.features(&real_contents.iter().collect::<Vec<_>>())?;
    let opts = StylizeOptions { use_gmp: cfg.use_gmp, contacts: ContactSource::Decoded, sample_seed: None };
    let mut rows: [Vec<f64>; 7] = Default::default();
    for r in 0..cfg.repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64).wrapping_mul(0x9E37_79B9));
        let mut outputs = Vec::with_capacity(test.len());
        let (mut style_y, mut content_y) = (Vec::new(), Vec::new());
        let (mut geo, mut skate) = (0.0, 0.0);
        for content in test {
            let src = style_sources[rng.random_range(0..style_sources.len())];
            let label = if bundle.supervised() { Some(src.style_label.ok_or(Error::LabelRequired)?) } else { None };
            let out = bundle.stylize_motion_based(content, src, label, &opts)?;
            let raw_content = if content.normalized { bundle.stats.denormalize(content)? } else { (*content).clone() };
            geo += geodesic_distance(&raw_content, &out)?;
            skate += foot_skating(&out)?;
            style_y.push(src.style_label.ok_or(Error::LabelRequired)?);
            content_y.push(content.content_label.ok_or(Error::LabelRequired)?);
            outputs.push(bundle.stats.znormalize(&out)?);
        }
        let refs: Vec<&PoseSequence> = outputs.iter().collect();
        rows[0].push(accuracy(&refs, &style_y, style_clf)?);
        rows[1].push(accuracy(&refs, &content_y, content_clf)?);
        rows[2].push(fid(&style_clf.features(&refs)?, &style_real_feat)?);
        rows[3].push(fid(&content_clf.features(&refs)?, &content_real_feat)?);
        rows[4].push(geo / test.len() as f64);
        rows[5].push(protocol_diversity(bundle, test, style_clf, cfg, &mut rng, &opts)?);
        rows[6].push(skate / test.len() as f64);
    }
    let [a, b, c, d, e, f, g] = rows.map(Stat::from_values);
    Ok(MetricReport {
        repeats: cfg.repeats,
        style_acc: a,
        content_acc: b,
        style_fid: c,
        content_fid: d,
        geo_dis: e,
        diversity: f,
        foot_skating: g,
    })
}

fn protocol_diversity(
    bundle: &ModelBundle,
    test: &[&PoseSequence],
    clf: &Classifier,
    cfg: &ProtocolConfig,
    rng: &mut ChaCha8Rng,
    opts: &StylizeOptions,
) -> Result<f64> {
    let k = cfg.diversity_samples.max(2);
    let n_labels = bundle.n_labels().unwrap_or(1);
    let mut total = 0.0;
    let clips = cfg.diversity_clips.max(1);
    for _ in 0..clips {
        let content = test[rng.random_range(0..test.len())];
        let label = rng.random_range(0..n_labels);
        let mut outs = Vec::with_capacity(k);
        for _ in 0..k {
            let seed = rng.random::<u64>();
            let out = if bundle.supervised() {
                bundle.stylize_label_based(content, label, seed, opts)?
            } else {
                bundle.stylize_prior_based(content, seed, opts)?
            };
            outs.push(bundle.stats.znormalize(&out)?);
        }
        total += diversity(&outs.iter().collect::<Vec<_>>(), clf)?;
    }
    Ok(total / clips as f64)
}
