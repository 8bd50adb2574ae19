//! Content encoder, probabilistic style encoder and AdaIN generator over motion codes.

use std::path::Path;

use motionstyle_tape::{ParamId, ParamStore, Real, Tape, Tensor, Var};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{load_params, save_params};
use crate::error::{Error, Result};
use crate::nn::{frames_to_tensor, lrelu, randn, reparameterize, tensor_to_frames, Conv1d, Linear, IN_EPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StylizerConfig {
    /// Motion-code width `D_z`.
    pub code_dim: usize,
    pub hidden: usize,
    pub content_dim: usize,
    pub style_dim: usize,
    pub label_embed: usize,
    /// `Some(n)` for a supervised model over `n` style labels.
    pub n_labels: Option<usize>,
    /// Deterministic style vector instead of a Gaussian.
    pub no_prob_style: bool,
    /// Gaussian content code.
    pub prob_content: bool,
}

impl Default for StylizerConfig {
    fn default() -> Self {
        Self {
            code_dim: 512,
            hidden: 512,
            content_dim: 512,
            style_dim: 512,
            label_embed: 64,
            n_labels: Some(4),
            no_prob_style: false,
            prob_content: false,
        }
    }
}

impl StylizerConfig {
    pub fn supervised(&self) -> bool {
        self.n_labels.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.code_dim, self.hidden, self.content_dim, self.style_dim];
        if dims.contains(&0) || (self.supervised() && self.label_embed == 0) || self.n_labels == Some(0) {
            return Err(Error::Config("stylizer dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Width of the vector fed to the AdaIN affine maps.
    fn cond_dim(&self) -> usize {
        self.style_dim + if self.supervised() { self.label_embed } else { 0 }
    }

    /// Validates a label against the training mode.
    pub fn check_label(&self, label: Option<usize>) -> Result<()> {
        match (self.n_labels, label) {
            (Some(_), None) => Err(Error::LabelRequired),
            (None, Some(_)) => Err(Error::LabelForbidden),
            (Some(n), Some(l)) if l >= n => Err(Error::LabelOutOfRange { label: l, n_labels: n }),
            _ => Ok(()),
        }
    }
}

/// Temporal length of the content code for a motion code of `t_z` steps.
pub fn content_len(t_z: usize) -> usize {
    t_z.div_ceil(2)
}

/// AdaIN: instance-normalize `x: [B, C, T]` over time, then scale by `gamma` and shift by `beta` (`[B, C]`).
pub fn adain<T: Real>(tape: &mut Tape<T>, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    let (xs, gs, bs) = (tape.shape(x), tape.shape(gamma), tape.shape(beta));
    if xs.len() != 3 || gs != [xs[0], xs[1]] || gs != bs {
        return Err(Error::ShapeMismatch(format!("adain x {xs:?} gamma {gs:?} beta {bs:?}")));
    }
    let n = tape.instance_norm(x, IN_EPS);
    Ok(tape.channel_affine(n, gamma, beta))
}

#[derive(Clone, Debug)]
struct AdaInMap {
    gamma: Linear,
    beta: Linear,
}

impl AdaInMap {
    fn apply<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, cond: Var) -> Var {
        let g = self.gamma.forward(tape, store, cond);
        let g = tape.add_scalar(g, 1.0);
        let b = self.beta.forward(tape, store, cond);
        adain(tape, x, g, b).expect("adain widths are fixed at build time")
    }
}

#[derive(Clone, Debug)]
struct Layers {
    c1: Conv1d,
    c2: Conv1d,
    c3: Conv1d,
    s1: Conv1d,
    s2: Conv1d,
    s_embed: Option<ParamId>,
    s_mu: Linear,
    s_logvar: Option<Linear>,
    g_embed: Option<ParamId>,
    g: [Conv1d; 3],
    g_adain: [AdaInMap; 3],
    g_out: Conv1d,
}

/// Stylizer architecture; weights live in a separate [`ParamStore`].
#[derive(Clone, Debug)]
pub struct StylizerNet {
    pub config: StylizerConfig,
    l: Layers,
}

/// Content encoder output. `mu`/`logvar` are set only with `prob_content`.
#[derive(Clone, Copy, Debug)]
pub struct ContentOut {
    pub code: Var,
    pub mu: Option<Var>,
    pub logvar: Option<Var>,
}

/// Style encoder output `[B, D_s]`; `logvar` is `None` for a deterministic style vector.
#[derive(Clone, Copy, Debug)]
pub struct StyleOut {
    pub mu: Var,
    pub logvar: Option<Var>,
}

impl StylizerNet {
    pub fn build<T: Real>(config: &StylizerConfig, rng: &mut impl Rng) -> Result<(Self, ParamStore<T>)> {
        config.validate()?;
        let c = config;
        let mut st = ParamStore::new();
        let h = c.hidden;
        let c_out = if c.prob_content { 2 * c.content_dim } else { c.content_dim };
        let embed = |st: &mut ParamStore<T>, name: &str, rng: &mut dyn rand::RngCore| {
            c.n_labels.map(|n| st.add(name, randn(&[n, c.label_embed], rng)))
        };
        let c1 = Conv1d::new(&mut st, "content.conv1", c.code_dim, h, 3, 1, rng);
        let c2 = Conv1d::new(&mut st, "content.conv2", h, h, 3, 2, rng);
        let c3 = Conv1d::new(&mut st, "content.conv3", h, c_out, 1, 1, rng);
        let s1 = Conv1d::new(&mut st, "style.conv1", c.code_dim, h, 3, 1, rng);
        let s2 = Conv1d::new(&mut st, "style.conv2", h, h, 3, 2, rng);
        let s_embed = embed(&mut st, "style.label_embed", rng);
        let s_in = h + if c.supervised() { c.label_embed } else { 0 };
        let s_mu = Linear::new(&mut st, "style.mu", s_in, c.style_dim, rng);
        let s_logvar = (!c.no_prob_style).then(|| Linear::new(&mut st, "style.logvar", s_in, c.style_dim, rng));
        let g_embed = embed(&mut st, "gen.label_embed", rng);
        let g = [
            Conv1d::new(&mut st, "gen.conv1", c.content_dim, h, 3, 1, rng),
            Conv1d::new(&mut st, "gen.conv2", h, h, 3, 1, rng),
            Conv1d::new(&mut st, "gen.conv3", h, h, 3, 1, rng),
        ];
        let g_adain = std::array::from_fn(|i| AdaInMap {
            gamma: Linear::new(&mut st, &format!("gen.adain{}.gamma", i + 1), c.cond_dim(), h, rng),
            beta: Linear::new(&mut st, &format!("gen.adain{}.beta", i + 1), c.cond_dim(), h, rng),
        });
        let g_out = Conv1d::new(&mut st, "gen.out", h, c.code_dim, 1, 1, rng);
        let l = Layers { c1, c2, c3, s1, s2, s_embed, s_mu, s_logvar, g_embed, g, g_adain, g_out };
        Ok((Self { config: config.clone(), l }, st))
    }

    fn labels_var<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        table: Option<ParamId>,
        labels: Option<&[usize]>,
        batch: usize,
    ) -> Result<Option<Var>> {
        match (table, labels) {
            (None, None) => Ok(None),
            (Some(_), None) => Err(Error::LabelRequired),
            (None, Some(_)) => Err(Error::LabelForbidden),
            (Some(t), Some(ls)) => {
                if ls.len() != batch {
                    return Err(Error::ShapeMismatch(format!("{} labels for batch {batch}", ls.len())));
                }
                for &l in ls {
                    self.config.check_label(Some(l))?;
                }
                let table = tape.param(store, t);
                Ok(Some(tape.embedding(table, ls)))
            }
        }
    }

    /// `z: [B, D_z, T_z]` → content code `[B, D_c, ⌈T_z/2⌉]`.
    pub fn encode_content<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        z: Var,
        noise: Option<&mut dyn rand::RngCore>,
    ) -> ContentOut {
        let l = &self.l;
        let mut h = tape.instance_norm(z, IN_EPS);
        for conv in [&l.c1, &l.c2] {
            h = conv.forward(tape, store, h);
            h = tape.instance_norm(h, IN_EPS);
            h = lrelu(tape, h);
        }
        let out = l.c3.forward(tape, store, h);
        if !self.config.prob_content {
            return ContentOut { code: tape.instance_norm(out, IN_EPS), mu: None, logvar: None };
        }
        let d = self.config.content_dim;
        let mu = tape.narrow(out, 1, 0, d);
        let mu = tape.instance_norm(mu, IN_EPS);
        let logvar = tape.narrow(out, 1, d, d);
        let code = match noise {
            Some(rng) => {
                let eps = randn(tape.shape(mu), rng);
                reparameterize(tape, mu, logvar, eps)
            }
            None => mu,
        };
        ContentOut { code, mu: Some(mu), logvar: Some(logvar) }
    }

    pub fn encode_style<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        z: Var,
        labels: Option<&[usize]>,
    ) -> Result<StyleOut> {
        let l = &self.l;
        let batch = tape.shape(z)[0];
        let emb = self.labels_var(tape, store, l.s_embed, labels, batch)?;
        let h = l.s1.forward(tape, store, z);
        let h = lrelu(tape, h);
        let h = l.s2.forward(tape, store, h);
        let h = lrelu(tape, h);
        let mut pooled = tape.mean_time(h);
        if let Some(e) = emb {
            pooled = tape.concat(pooled, e, 1);
        }
        let mu = l.s_mu.forward(tape, store, pooled);
        let logvar = l.s_logvar.as_ref().map(|lv| lv.forward(tape, store, pooled));
        Ok(StyleOut { mu, logvar })
    }

    /// Style code from a distribution: reparameterized with `noise`, the mean otherwise.
    pub fn style_code<T: Real>(&self, tape: &mut Tape<T>, s: &StyleOut, noise: Option<&mut dyn rand::RngCore>) -> Var {
        match (s.logvar, noise) {
            (Some(lv), Some(rng)) => {
                let eps = randn(tape.shape(s.mu), rng);
                reparameterize(tape, s.mu, lv, eps)
            }
            _ => s.mu,
        }
    }

    /// Generates a motion code of `t_out` steps from `content: [B, D_c, T_c]` and `style: [B, D_s]`.
    pub fn generate<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        content: Var,
        style: Var,
        labels: Option<&[usize]>,
        t_out: usize,
    ) -> Result<Var> {
        let l = &self.l;
        let batch = tape.shape(content)[0];
        if tape.shape(style) != [batch, self.config.style_dim] {
            return Err(Error::ShapeMismatch(format!("style code {:?}", tape.shape(style))));
        }
        let emb = self.labels_var(tape, store, l.g_embed, labels, batch)
            .map_err(|e| Error::ModeMismatch(e.to_string()))?;
        let cond = match emb {
            Some(e) => tape.concat(style, e, 1),
            None => style,
        };
        let mut h = content;
        for i in 0..3 {
            if i == 1 {
                h = tape.upsample(h, 2);
            }
            h = l.g[i].forward(tape, store, h);
            h = l.g_adain[i].apply(tape, store, h, cond);
            h = lrelu(tape, h);
        }
        let out = l.g_out.forward(tape, store, h);
        let t = tape.shape(out)[2];
        Ok(if t == t_out { out } else { tape.narrow(out, 2, 0, t_out.min(t)) })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StyleProvenance {
    Encoded,
    SampledPrior,
    Interpolated,
}

/// A `D_s` style vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleCode {
    pub values: Array1<f32>,
    pub provenance: StyleProvenance,
}

/// Diagonal Gaussian over style codes.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleDistribution {
    pub mu: Array1<f32>,
    pub logvar: Array1<f32>,
}

impl StyleDistribution {
    pub fn sigma(&self) -> Array1<f32> {
        self.logvar.mapv(|v| (0.5 * v).exp())
    }

    pub fn mean_code(&self) -> StyleCode {
        StyleCode { values: self.mu.clone(), provenance: StyleProvenance::Encoded }
    }
}

/// A `T_c × D_c` content code.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentCode {
    pub values: Array2<f32>,
}

/// Reparameterized sample from `dist`.
pub fn sample_style(dist: &StyleDistribution, rng: &mut impl Rng) -> StyleCode {
    let eps: Tensor<f32> = randn(&[dist.mu.len()], rng);
    let values = Array1::from_iter(
        dist.mu.iter().zip(dist.sigma().iter()).zip(eps.data()).map(|((m, s), e)| m + s * e),
    );
    StyleCode { values, provenance: StyleProvenance::Encoded }
}

/// Draw from the `N(0, I)` style prior.
pub fn sample_prior(dim: usize, rng: &mut impl Rng) -> StyleCode {
    let eps: Tensor<f32> = randn(&[dim], rng);
    StyleCode { values: Array1::from(eps.into_data()), provenance: StyleProvenance::SampledPrior }
}

/// `(1−α)·a + α·b`.
pub fn interpolate(a: &StyleCode, b: &StyleCode, alpha: f64) -> Result<StyleCode> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange(format!("alpha {alpha} outside [0, 1]")));
    }
    if a.values.len() != b.values.len() {
        return Err(Error::DimMismatch(a.values.len(), b.values.len()));
    }
    let values = if alpha == 0.0 {
        a.values.clone()
    } else if alpha == 1.0 {
        b.values.clone()
    } else {
        let al = alpha as f32;
        &a.values * (1.0 - al) + &b.values * al
    };
    Ok(StyleCode { values, provenance: StyleProvenance::Interpolated })
}

/// A stylizer with trained weights.
#[derive(Clone, Debug)]
pub struct Stylizer {
    pub net: StylizerNet,
    pub params: ParamStore<f32>,
}

#[derive(Serialize, Deserialize)]
struct StylizerFile {
    pub format_version: u32,
    pub mode: String,
    pub config: StylizerConfig,
    pub ablations: serde_json::Value,
    pub crate_version: String,
}

impl Stylizer {
    pub fn new(config: &StylizerConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, mut params) = StylizerNet::build(config, &mut rng)?;
        params.set_trainable(false);
        Ok(Self { net, params })
    }

    pub fn config(&self) -> &StylizerConfig {
        &self.net.config
    }

    fn code_tensor(&self, values: &Array2<f32>) -> Result<Tensor<f32>> {
        if values.ncols() != self.config().code_dim {
            return Err(Error::DimMismatch(values.ncols(), self.config().code_dim));
        }
        Ok(frames_to_tensor(&[values]))
    }

    /// `code: T_z × D_z`; deterministic (content mean when probabilistic).
    pub fn encode_content(&self, code: &Array2<f32>) -> Result<ContentCode> {
        let mut tape = Tape::inference();
        let z = tape.constant(self.code_tensor(code)?);
        let c = self.net.encode_content(&mut tape, &self.params, z, None);
        Ok(ContentCode { values: tensor_to_frames(tape.value(c.code), 0) })
    }

    pub fn encode_style(&self, code: &Array2<f32>, label: Option<usize>) -> Result<StyleDistribution> {
        if code.nrows() < 2 {
            return Err(Error::TooShort { needed: 2, actual: code.nrows() });
        }
        self.config().check_label(label)?;
        let mut tape = Tape::inference();
        let z = tape.constant(self.code_tensor(code)?);
        let labels = label.map(|l| vec![l]);
        let s = self.net.encode_style(&mut tape, &self.params, z, labels.as_deref())?;
        let mu = Array1::from(tape.value(s.mu).data().to_vec());
        let logvar = match s.logvar {
            Some(lv) => Array1::from(tape.value(lv).data().to_vec()),
            None => Array1::zeros(mu.len()),
        };
        Ok(StyleDistribution { mu, logvar })
    }

    /// Motion code of `t_out` steps (`2·T_c` when `None`).
    pub fn generate(
        &self,
        content: &ContentCode,
        style: &StyleCode,
        label: Option<usize>,
        t_out: Option<usize>,
    ) -> Result<Array2<f32>> {
        self.config().check_label(label).map_err(|e| Error::ModeMismatch(e.to_string()))?;
        if style.values.len() != self.config().style_dim {
            return Err(Error::DimMismatch(style.values.len(), self.config().style_dim));
        }
        let mut tape = Tape::inference();
        let c = tape.constant(frames_to_tensor(&[&content.values]));
        let s = tape.constant(Tensor::from_vec(&[1, style.values.len()], style.values.to_vec())?);
        let labels = label.map(|l| vec![l]);
        let t_out = t_out.unwrap_or(2 * content.values.nrows());
        let out = self.net.generate(&mut tape, &self.params, c, s, labels.as_deref(), t_out)?;
        Ok(tensor_to_frames(tape.value(out), 0))
    }

    pub fn save(&self, dir: &Path, ablations: serde_json::Value) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let meta = StylizerFile {
            format_version: 1,
            mode: if self.config().supervised() { "supervised" } else { "unsupervised" }.into(),
            config: self.config().clone(),
            ablations,
            crate_version: env!("CARGO_PKG_VERSION").into(),
        };
        let path = dir.join("stylizer.json");
        std::fs::write(&path, serde_json::to_string_pretty(&meta).map_err(Error::json(&path))?)
            .map_err(Error::io(&path))?;
        save_params(&self.params, &dir.join("stylizer.bin"))
    }

    pub fn load(dir: &Path) -> Result<(Self, serde_json::Value)> {
        let path = dir.join("stylizer.json");
        let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
        let meta: StylizerFile = serde_json::from_str(&text).map_err(Error::json(&path))?;
        let mut s = Self::new(&meta.config, 0)?;
        load_params(&mut s.params, &dir.join("stylizer.bin"))?;
        Ok((s, meta.ablations))
    }
}
