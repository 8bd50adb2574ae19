//! Desk-scale training settings and the corpus preparation shared by the CLI and the acceptance run.

use serde::{Deserialize, Serialize};

use crate::codec::{train_codec, Codec, CodecConfig, CodecReport, CodecTrainConfig};
use crate::error::Result;
use crate::evaluation::ClassifierTrainConfig;
use crate::global_motion::{train_gmp, GlobalMotion, GmpConfig, GmpReport, GmpTrainConfig};
use crate::inference::ModelBundle;
use crate::motion::{ContactConfig, NormStats, PoseSequence};
use crate::stylizer::StylizerConfig;
use crate::synthetic::Corpus;
use crate::trainer::{chain_by_style, train_stylizer, Ablations, Mode, TrainConfig, TrainOutcome};

/// Frames blended between consecutive clips of a chained training sequence.
pub const CHAIN_FADE: usize = 8;

/// Widths and schedules sized for a single CPU core.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeskScale {
    pub codec: CodecConfig,
    pub codec_train: CodecTrainConfig,
    pub gmp: GmpConfig,
    pub gmp_train: GmpTrainConfig,
    pub stylizer: StylizerConfig,
    pub stylizer_steps: usize,
    pub stylizer_batch: usize,
    pub stylizer_lr: f64,
    pub classifier_train: ClassifierTrainConfig,
}

impl Default for DeskScale {
    fn default() -> Self {
        Self {
            codec: CodecConfig { hidden: 128, latent_dim: 64, ..CodecConfig::default() },
            codec_train: CodecTrainConfig { steps: 2_000, batch: 32, window: 64, lr: 1e-3, warmup: 50, seed: 0 },
            gmp: GmpConfig { hidden: 64, ..GmpConfig::default() },
            gmp_train: GmpTrainConfig { steps: 600, batch: 16, window: 64, lr: 1e-3, warmup: 20, seed: 0 },
            stylizer: StylizerConfig { hidden: 128, content_dim: 64, style_dim: 16, label_embed: 16, ..StylizerConfig::default() },
            stylizer_steps: 1_500,
            stylizer_batch: 16,
            stylizer_lr: 1e-3,
            classifier_train: ClassifierTrainConfig::default(),
        }
    }
}

impl DeskScale {
    pub fn train_config(&self, mode: Mode, ablations: Ablations, seed: u64) -> TrainConfig {
        TrainConfig {
            ablations,
            model: self.stylizer.clone(),
            lr: self.stylizer_lr,
            warmup: 50,
            batch: self.stylizer_batch,
            steps: self.stylizer_steps,
            seed,
            log_every: 50,
            ..TrainConfig::new(mode)
        }
    }
}

/// A corpus split into raw and normalized clips, plus same-style training chains.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub stats: NormStats,
    pub train_raw: Vec<PoseSequence>,
    pub test_raw: Vec<PoseSequence>,
    pub train: Vec<PoseSequence>,
    pub test: Vec<PoseSequence>,
    /// Training clips of one style joined across contents, one sequence per clip index.
    pub chained: Vec<PoseSequence>,
}

impl Prepared {
    /// Fits normalization statistics on the training split.
    pub fn new(corpus: &Corpus, seed: u64) -> Result<Self> {
        let stats = NormStats::fit(corpus.train().iter().map(|c| &c.seq))?;
        Self::with_stats(corpus, stats, seed)
    }

    pub fn with_stats(corpus: &Corpus, stats: NormStats, seed: u64) -> Result<Self> {
        let train_raw: Vec<PoseSequence> = corpus.train().iter().map(|c| c.seq.clone()).collect();
        let test_raw: Vec<PoseSequence> = corpus.test().iter().map(|c| c.seq.clone()).collect();
        let train = train_raw.iter().map(|s| stats.znormalize(s)).collect::<Result<Vec<_>>>()?;
        let test = test_raw.iter().map(|s| stats.znormalize(s)).collect::<Result<Vec<_>>>()?;
        let chained = chain_by_style(&train.iter().collect::<Vec<_>>(), CHAIN_FADE, seed)?;
        Ok(Self { stats, train_raw, test_raw, train, test, chained })
    }

    pub fn train_refs(&self) -> Vec<&PoseSequence> {
        self.train.iter().collect()
    }

    pub fn test_refs(&self) -> Vec<&PoseSequence> {
        self.test.iter().collect()
    }

    pub fn chained_refs(&self) -> Vec<&PoseSequence> {
        self.chained.iter().collect()
    }

    pub fn fit_codec(&self, desk: &DeskScale) -> Result<(Codec, CodecReport)> {
        train_codec(&self.train_refs(), &self.test_refs(), &self.stats, &desk.codec, &desk.codec_train)
    }

    pub fn fit_gmp(&self, desk: &DeskScale) -> Result<(GlobalMotion, GmpReport)> {
        train_gmp(&self.train_refs(), &self.test_refs(), &desk.gmp, &desk.gmp_train)
    }

    /// Trains a stylizer on the chained sequences.
    pub fn fit_stylizer(&self, codec: Option<&Codec>, cfg: &TrainConfig) -> Result<TrainOutcome> {
        train_stylizer(&self.chained_refs(), codec, cfg)
    }

    pub fn bundle(&self, outcome: TrainOutcome, gmp: Option<GlobalMotion>, ablations: Ablations) -> ModelBundle {
        ModelBundle {
            codec: outcome.codec,
            stylizer: outcome.stylizer,
            gmp,
            stats: self.stats.clone(),
            skeleton: self.train_raw[0].skeleton.clone(),
            contact: ContactConfig::default(),
            ablations,
        }
    }
}
