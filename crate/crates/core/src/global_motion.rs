//! Global motion predictor: root channels regressed from local joint features.

use std::path::Path;

use motionstyle_tape::{Adam, ParamStore, Real, Tape, Var};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{load_params, sample_windows, save_params};
use crate::error::{Error, Result};
use crate::motion::integrate_root;
use crate::motion::layout::ROOT_CHANNELS;
use crate::motion::{FeatureLayout, NormStats, PoseSequence};
use crate::nn::{frames_to_tensor, lrelu, tensor_to_frames, Conv1d};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmpConfig {
    pub feature_dim: usize,
    pub hidden: usize,
    /// Root channels replaced by the prediction at inference.
    pub overwrite: Vec<usize>,
}

impl Default for GmpConfig {
    fn default() -> Self {
        Self { feature_dim: 260, hidden: 256, overwrite: vec![0, 1, 2] }
    }
}

impl GmpConfig {
    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new((self.feature_dim - 8) / 12)
    }

    pub fn input_dim(&self) -> usize {
        self.layout().local().len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.feature_dim < 20 || (self.feature_dim - 8) % 12 != 0 {
            return Err(Error::Config("invalid global motion predictor widths".into()));
        }
        if self.overwrite.iter().any(|&c| c >= ROOT_CHANNELS) {
            return Err(Error::Config("overwrite channels must be root channels 0..4".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GmpNet {
    pub config: GmpConfig,
    layers: [Conv1d; 3],
}

impl GmpNet {
    pub fn build<T: Real>(config: &GmpConfig, rng: &mut impl Rng) -> Result<(Self, ParamStore<T>)> {
        config.validate()?;
        let mut st = ParamStore::new();
        let h = config.hidden;
        let layers = [
            Conv1d::new(&mut st, "gmp.conv1", config.input_dim(), h, 3, 1, rng),
            Conv1d::new(&mut st, "gmp.conv2", h, h, 3, 1, rng),
            Conv1d::new(&mut st, "gmp.conv3", h, ROOT_CHANNELS, 3, 1, rng),
        ];
        Ok((Self { config: config.clone(), layers }, st))
    }

    /// `local: [B, 12·J, T]` → `[B, 4, T]`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, local: Var) -> Var {
        let h = self.layers[0].forward(tape, store, local);
        let h = lrelu(tape, h);
        let h = self.layers[1].forward(tape, store, h);
        let h = lrelu(tape, h);
        self.layers[2].forward(tape, store, h)
    }
}

#[derive(Clone, Debug)]
pub struct GlobalMotion {
    pub net: GmpNet,
    pub params: ParamStore<f32>,
}

impl GlobalMotion {
    pub fn new(config: &GmpConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, mut params) = GmpNet::build(config, &mut rng)?;
        params.set_trainable(false);
        Ok(Self { net, params })
    }

    pub fn config(&self) -> &GmpConfig {
        &self.net.config
    }

    /// Normalized `T × 12·J` local features → normalized `T × 4` root channels.
    pub fn predict_root(&self, local: &Array2<f32>) -> Result<Array2<f32>> {
        if local.ncols() != self.config().input_dim() {
            return Err(Error::DimMismatch(local.ncols(), self.config().input_dim()));
        }
        let mut tape = Tape::inference();
        let x = tape.constant(frames_to_tensor(&[local]));
        let y = self.net.forward(&mut tape, &self.params, x);
        Ok(tensor_to_frames(tape.value(y), 0))
    }

    /// Predicts root channels of a normalized clip.
    pub fn predict_for(&self, seq: &PoseSequence) -> Result<Array2<f32>> {
        seq.require_normalized()?;
        let local = seq.frames.slice(s![.., seq.layout().local()]).to_owned();
        self.predict_root(&local)
    }

    /// Replaces the configured root channels of a normalized clip with the prediction.
    pub fn apply(&self, seq: &PoseSequence) -> Result<PoseSequence> {
        let pred = self.predict_for(seq)?;
        let mut out = seq.clone();
        for &c in &self.config().overwrite {
            out.frames.column_mut(c).assign(&pred.column(c));
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let path = dir.join("gmp.json");
        let meta = serde_json::json!({ "format_version": 1, "config": self.config() });
        std::fs::write(&path, serde_json::to_string_pretty(&meta).map_err(Error::json(&path))?)
            .map_err(Error::io(&path))?;
        save_params(&self.params, &dir.join("gmp.bin"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("gmp.json");
        let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
        let meta: serde_json::Value = serde_json::from_str(&text).map_err(Error::json(&path))?;
        let config: GmpConfig = serde_json::from_value(meta["config"].clone()).map_err(Error::json(&path))?;
        let mut g = Self::new(&config, 0)?;
        load_params(&mut g.params, &dir.join("gmp.bin"))?;
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmpTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub window: usize,
    pub lr: f64,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for GmpTrainConfig {
    fn default() -> Self {
        Self { steps: 5_000, batch: 32, window: 64, lr: 1e-4, warmup: 200, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GmpReport {
    pub curve: Vec<(usize, f64)>,
    pub heldout_mae_init: f64,
    pub heldout_mae_final: f64,
}

fn split_batch<T: Real>(tape: &mut Tape<T>, x: Var, layout: FeatureLayout) -> (Var, Var) {
    let local = tape.narrow(x, 1, layout.local().start, layout.local().len());
    let root = tape.narrow(x, 1, 0, ROOT_CHANNELS);
    (local, root)
}

fn heldout_mae(g: &GlobalMotion, clips: &[&PoseSequence]) -> f64 {
    let mut total = 0.0;
    for seq in clips {
        let mut tape = Tape::<f32>::inference();
        let x = tape.constant(frames_to_tensor(&[&seq.frames]));
        let (local, root) = split_batch(&mut tape, x, seq.layout());
        let y = g.net.forward(&mut tape, &g.params, local);
        let l = tape.l1(y, root);
        total += tape.value(l).item() as f64;
    }
    total / clips.len().max(1) as f64
}

/// Trains on normalized clips with a mean-absolute-error objective. Labels are not used.
pub fn train_gmp(
    train: &[&PoseSequence],
    heldout: &[&PoseSequence],
    config: &GmpConfig,
    opts: &GmpTrainConfig,
) -> Result<(GlobalMotion, GmpReport)> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for seq in train.iter().chain(heldout) {
        seq.require_normalized()?;
        if seq.dim() != config.feature_dim {
            return Err(Error::DimMismatch(seq.dim(), config.feature_dim));
        }
    }
    let mut g = GlobalMotion::new(config, opts.seed)?;
    let mut report = GmpReport { heldout_mae_init: heldout_mae(&g, heldout), ..Default::default() };
    g.params.set_trainable(true);
    let layout = config.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6A9);
    let mut adam = Adam::new(opts.lr, opts.warmup);
    for step in 0..opts.steps {
        let batch = sample_windows(train, opts.window, opts.batch, &mut rng);
        let refs: Vec<&Array2<f32>> = batch.iter().collect();
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(frames_to_tensor(&refs));
        let (local, root) = split_batch(&mut tape, x, layout);
        let y = g.net.forward(&mut tape, &g.params, local);
        let loss = tape.l1(y, root);
        let value = tape.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(Error::Diverged { step, what: "global motion loss".into() });
        }
        let grads = tape.backward(loss);
        adam.step(&mut g.params, &grads);
        if step % 25 == 0 || step + 1 == opts.steps {
            report.curve.push((step, value));
        }
    }
    g.params.set_trainable(false);
    report.heldout_mae_final = heldout_mae(&g, heldout);
    Ok((g, report))
}

/// Mean distance (mm) between the integrated planar root paths of two raw clips.
pub fn root_path_error_mm(a: &PoseSequence, b: &PoseSequence) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    a.require_raw()?;
    b.require_raw()?;
    let (ra, rb) = (integrate_root(a), integrate_root(b));
    let err: f64 = ra
        .position
        .iter()
        .zip(&rb.position)
        .map(|(p, q)| ((p.x - q.x).powi(2) + (p.z - q.z).powi(2)).sqrt())
        .sum();
    Ok(1000.0 * err / a.len() as f64)
}

/// Raw clip with the listed root channels taken from `root` (normalized `T × 4`).
pub fn with_predicted_root(raw: &PoseSequence, root: &Array2<f32>, stats: &NormStats, channels: &[usize]) -> Result<PoseSequence> {
    raw.require_raw()?;
    let mut out = raw.clone();
    for &c in channels {
        let (m, s) = (stats.mean[c], stats.std[c]);
        let col = root.column(c).mapv(|v| v * s + m);
        out.frames.column_mut(c).assign(&col);
    }
    Ok(out)
}
