#![allow(dead_code)]

use std::sync::OnceLock;

use motionstyle::codec::{train_codec, CodecConfig, CodecTrainConfig};
use motionstyle::global_motion::{train_gmp, GmpConfig, GmpTrainConfig};
use motionstyle::inference::ModelBundle;
use motionstyle::motion::{ContactConfig, NormStats, PoseSequence};
use motionstyle::stylizer::StylizerConfig;
use motionstyle::synthetic::{Corpus, CorpusSpec};
use motionstyle::trainer::{chain_by_style, train_stylizer, Ablations, Mode, TrainConfig};
use motionstyle_tape::{ParamStore, Tape, Var};
use rand::Rng;

/// Central-difference check of `grad` on randomly chosen scalars of `store`.
/// Returns the worst relative error over the probed entries.
pub fn param_gradcheck(
    store: &mut ParamStore<f64>,
    probes: usize,
    rng: &mut impl Rng,
    loss: impl Fn(&mut Tape<f64>, &ParamStore<f64>) -> Var,
) -> f64 {
    store.set_trainable(true);
    let mut tape = Tape::new();
    let l = loss(&mut tape, store);
    let grads = tape.backward(l);
    let ids: Vec<_> = store.ids().collect();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let id = ids[rng.random_range(0..ids.len())];
        let n = store.get(id).numel();
        let k = rng.random_range(0..n);
        let analytic = grads.param(store, id).map_or(0.0, |g| g.data()[k]);
        let orig = store.get(id).data()[k];
        let eval = |v: f64, store: &mut ParamStore<f64>| {
            store.get_mut(id).data_mut()[k] = v;
            let mut t = Tape::inference();
            let l = loss(&mut t, store);
            t.value(l).item()
        };
        let up = eval(orig + h, store);
        let down = eval(orig - h, store);
        store.get_mut(id).data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
        worst = worst.max(err);
    }
    worst
}

/// Briefly trained supervised and unsupervised bundles over a 2 × 2 corpus of raw 64-frame clips.
pub struct Fixture {
    pub supervised: ModelBundle,
    pub unsupervised: ModelBundle,
    pub clips: Vec<PoseSequence>,
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = Corpus::generate(&CorpusSpec { n_styles: 2, n_contents: 2, clips_per_cell: 4, length: 64, seed: 5 }).unwrap();
        let clips: Vec<PoseSequence> = corpus.clips.iter().map(|c| c.seq.clone()).collect();
        let stats = NormStats::fit(clips.iter()).unwrap();
        let norm: Vec<PoseSequence> = clips.iter().map(|s| stats.znormalize(s).unwrap()).collect();
        let refs: Vec<&PoseSequence> = norm.iter().collect();
        let (codec, _) = train_codec(
            &refs,
            &refs[..2],
            &stats,
            &CodecConfig { hidden: 32, latent_dim: 16, ..Default::default() },
            &CodecTrainConfig { steps: 40, batch: 8, window: 32, lr: 1e-3, warmup: 5, seed: 1 },
        )
        .unwrap();
        let (gmp, _) = train_gmp(
            &refs,
            &refs[..2],
            &GmpConfig { hidden: 16, ..Default::default() },
            &GmpTrainConfig { steps: 20, batch: 8, window: 32, lr: 1e-3, warmup: 5, seed: 2 },
        )
        .unwrap();
        let chained = chain_by_style(&refs, 4, 0).unwrap();
        let crefs: Vec<&PoseSequence> = chained.iter().collect();
        let bundle = |mode| {
            let mut cfg = TrainConfig::new(mode);
            cfg.model = StylizerConfig { hidden: 16, content_dim: 8, style_dim: 4, label_embed: 4, ..Default::default() };
            cfg.steps = 20;
            cfg.batch = 4;
            cfg.window = 32;
            cfg.lr = 1e-3;
            cfg.warmup = 5;
            let out = train_stylizer(&crefs, Some(&codec), &cfg).unwrap();
            ModelBundle {
                codec: out.codec,
                stylizer: out.stylizer,
                gmp: Some(gmp.clone()),
                stats: stats.clone(),
                skeleton: clips[0].skeleton.clone(),
                contact: ContactConfig::default(),
                ablations: Ablations::default(),
            }
        };
        Fixture { supervised: bundle(Mode::Supervised), unsupervised: bundle(Mode::Unsupervised), clips }
    })
}

