use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::factors::{ContentFactor, StyleFactor};
use super::gait::generate_clip;
use crate::error::{Error, Result};
use crate::motion::io::{load_manifest, load_motion_with, save_motion};
use crate::motion::{PoseSequence, Skeleton};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_styles: usize,
    pub n_contents: usize,
    pub clips_per_cell: usize,
    pub length: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { n_styles: 4, n_contents: 4, clips_per_cell: 25, length: 160, seed: 7 }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_styles == 0 || self.n_contents == 0 || self.clips_per_cell == 0 {
            return Err(Error::Config("style, content and per-cell counts must be at least 1".into()));
        }
        if self.length < 2 {
            return Err(Error::TooShort { needed: 2, actual: self.length });
        }
        Ok(())
    }

    /// Held-out clips per cell: a tenth, at least one when the cell has two or more.
    pub fn test_per_cell(&self) -> usize {
        if self.clips_per_cell < 2 {
            0
        } else {
            (self.clips_per_cell / 10).max(1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug)]
pub struct LabeledClip {
    pub name: String,
    pub style: usize,
    pub content: usize,
    pub split: Split,
    pub seq: PoseSequence,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub style_names: Vec<String>,
    pub content_names: Vec<String>,
    pub clips: Vec<LabeledClip>,
}

#[derive(Serialize, Deserialize)]
struct LabelEntry {
    style: usize,
    content: usize,
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    spec: CorpusSpec,
    style_names: Vec<String>,
    content_names: Vec<String>,
    train: Vec<String>,
    test: Vec<String>,
    labels: BTreeMap<String, LabelEntry>,
}

/// Per-clip seed derived from the corpus seed (splitmix64 finaliser).
pub fn clip_seed(corpus_seed: u64, index: u64) -> u64 {
    let mut z = corpus_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Corpus {
    /// Balanced style × content grid; the last tenth of each cell is held out.
    pub fn generate(spec: &CorpusSpec) -> Result<Self> {
        spec.validate()?;
        let skeleton = Arc::new(Skeleton::default21());
        let styles: Vec<StyleFactor> = (0..spec.n_styles).map(StyleFactor::preset).collect();
        let contents: Vec<ContentFactor> = (0..spec.n_contents).map(ContentFactor::preset).collect();
        let n_test = spec.test_per_cell();
        let mut jobs = Vec::new();
        for (si, _) in styles.iter().enumerate() {
            for (ci, _) in contents.iter().enumerate() {
                for k in 0..spec.clips_per_cell {
                    jobs.push((si, ci, k));
                }
            }
        }
        let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(8);
        let chunk = jobs.len().div_ceil(workers);
        let results: Vec<Result<LabeledClip>> = std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .chunks(chunk.max(1))
                .enumerate()
                .map(|(w, part)| {
                    let (styles, contents, skeleton) = (&styles, &contents, skeleton.clone());
                    scope.spawn(move || {
                        part.iter()
                            .enumerate()
                            .map(|(i, &(si, ci, k))| {
                                let index = (w * chunk + i) as u64;
                                let clip = generate_clip(
                                    &contents[ci],
                                    &styles[si],
                                    spec.length,
                                    clip_seed(spec.seed, index),
                                    skeleton.clone(),
                                )?;
                                Ok(LabeledClip {
                                    name: format!("s{si}_c{ci}_{k:03}"),
                                    style: si,
                                    content: ci,
                                    split: if k + n_test >= spec.clips_per_cell { Split::Test } else { Split::Train },
                                    seq: clip.seq,
                                })
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("corpus worker panicked")).collect()
        });
        let clips = results.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            style_names: styles.iter().map(|s| s.name.clone()).collect(),
            content_names: contents.iter().map(|c| format!("{}-{}", c.gait.name(), c.content_id)).collect(),
            clips,
        })
    }

    pub fn n_styles(&self) -> usize {
        self.style_names.len()
    }

    pub fn n_contents(&self) -> usize {
        self.content_names.len()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledClip> {
        self.clips.iter().filter(move |c| c.split == split)
    }

    pub fn train(&self) -> Vec<&LabeledClip> {
        self.split(Split::Train).collect()
    }

    pub fn test(&self) -> Vec<&LabeledClip> {
        self.split(Split::Test).collect()
    }

    /// Writes one motion file pair per clip plus `corpus.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let mut labels = BTreeMap::new();
        for clip in &self.clips {
            save_motion(&clip.seq, &dir.join(&clip.name))?;
            labels.insert(clip.name.clone(), LabelEntry { style: clip.style, content: clip.content });
        }
        let names = |s: Split| self.split(s).map(|c| c.name.clone()).collect();
        let file = CorpusFile {
            spec: self.spec.clone(),
            style_names: self.style_names.clone(),
            content_names: self.content_names.clone(),
            train: names(Split::Train),
            test: names(Split::Test),
            labels,
        };
        let path = dir.join("corpus.json");
        let text = serde_json::to_string_pretty(&file).map_err(Error::json(&path))?;
        std::fs::write(&path, text).map_err(Error::io(&path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("corpus.json");
        let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
        let file: CorpusFile = serde_json::from_str(&text).map_err(Error::json(&path))?;
        let skeleton = Arc::new(Skeleton::default21());
        let mut clips = Vec::new();
        for (names, split) in [(&file.train, Split::Train), (&file.test, Split::Test)] {
            for name in names {
                let label = file
                    .labels
                    .get(name)
                    .ok_or_else(|| Error::ShapeMismatch(format!("corpus.json: no labels for {name}")))?;
                let stem = dir.join(name);
                let manifest = load_manifest(&stem)?;
                let seq = load_motion_with(&stem, &manifest, skeleton.clone())?;
                clips.push(LabeledClip { name: name.clone(), style: label.style, content: label.content, split, seq });
            }
        }
        Ok(Self { spec: file.spec, style_names: file.style_names, content_names: file.content_names, clips })
    }
}
