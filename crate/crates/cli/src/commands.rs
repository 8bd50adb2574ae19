use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use motionstyle::codec::{Codec, CodecConfig, CodecTrainConfig};
use motionstyle::evaluation::{
    benchmark_forward, evaluate_protocol, train_classifier, Classifier, ClassifierTrainConfig, ProtocolConfig, Target,
};
use motionstyle::global_motion::{train_gmp, GlobalMotion, GmpConfig, GmpTrainConfig};
use motionstyle::inference::{ContactSource, ModelBundle, StylizeOptions};
use motionstyle::motion::io::{import_npy, load_manifest, motion_stem};
use motionstyle::motion::{load_motion, save_motion, NormStats, PoseSequence, Skeleton};
use motionstyle::pipeline::{DeskScale, Prepared};
use motionstyle::stylizer::{Stylizer, StylizerConfig};
use motionstyle::synthetic::{generate_clip, ContentFactor, Corpus, CorpusSpec, StyleFactor};
use motionstyle::trainer::{write_curve_csv, Ablations, Mode, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{read_file, resolve, snapshot, snapshot_path, Overrides};
use crate::{Cli, CliError, Command, ContactsArg, ModeArg, StylizeMode};

const ABLATIONS: [&str; 7] =
    ["no_latent", "no_prob_style", "no_homo_style", "no_autoencoding", "no_cycle", "prob_content", "end_to_end"];

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CodecRun {
    codec: CodecConfig,
    train: CodecTrainConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GmpRun {
    gmp: GmpConfig,
    train: GmpTrainConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct StylizerRun {
    train: TrainConfig,
    /// Train on same-style clips joined across contents rather than on single clips.
    chain: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EvalRun {
    protocol: ProtocolConfig,
    classifier: ClassifierTrainConfig,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value).expect("json"))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_motion(path: &Path) -> Result<PoseSequence, CliError> {
    if path.extension().and_then(|e| e.to_str()) == Some("npy") {
        Ok(import_npy(path, 30.0)?)
    } else {
        Ok(load_motion(path)?)
    }
}

fn or_data(dir: &Path, given: Option<PathBuf>, name: &str) -> PathBuf {
    given.unwrap_or_else(|| dir.join(name))
}

fn stats_for(corpus: &Corpus, codec_dir: Option<&Path>) -> Result<NormStats, CliError> {
    match codec_dir.map(|d| d.join("norm.json")).filter(|p| p.exists()) {
        Some(p) => Ok(NormStats::load(&p)?),
        None => Ok(NormStats::fit(corpus.train().iter().map(|c| &c.seq))?),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let threads = cli.threads;
    let data = cli.data_dir;
    let desk = DeskScale::default();
    match cli.command {
        Command::GenCorpus { styles, contents, per_cell, length, seed, config, out } => {
            let mut flags = Overrides::new();
            flags
                .set("n_styles", styles)
                .set("n_contents", contents)
                .set("clips_per_cell", per_cell)
                .set("length", length)
                .set("seed", seed);
            let spec: CorpusSpec = resolve(&CorpusSpec::default(), config.as_deref(), flags)?;
            let out = or_data(&data, out, "corpus");
            let corpus = Corpus::generate(&spec)?;
            corpus.save(&out)?;
            snapshot(&snapshot_path(&out, true), "gen-corpus", threads, &spec)?;
            info!("wrote {} clips to {}", corpus.clips.len(), out.display());
            println!("{}", serde_json::json!({ "clips": corpus.clips.len(), "out": out }));
        }
        Command::TrainCodec { corpus, config, out, seed, steps, batch, lr, variant, latent_dim, hidden } => {
            let defaults = CodecRun { codec: desk.codec.clone(), train: desk.codec_train.clone() };
            let mut flags = Overrides::new();
            flags
                .set("train.seed", seed)
                .set("train.steps", steps)
                .set("train.batch", batch)
                .set("train.lr", lr)
                .set("codec.variant", variant)
                .set("codec.latent_dim", latent_dim)
                .set("codec.hidden", hidden);
            let run: CodecRun = resolve(&defaults, config.as_deref(), flags)?;
            let corpus = Corpus::load(&or_data(&data, corpus, "corpus"))?;
            let out = or_data(&data, out, "codec");
            let prep = Prepared::new(&corpus, run.train.seed)?;
            let desk = DeskScale { codec: run.codec.clone(), codec_train: run.train.clone(), ..desk };
            let (codec, report) = prep.fit_codec(&desk)?;
            codec.save(&out)?;
            prep.stats.save(&out.join("norm.json"))?;
            write_json(&out.join("report.json"), &report)?;
            snapshot(&snapshot_path(&out, true), "train-codec", threads, &run)?;
            info!("codec held-out MPJPE {:.2} mm", report.heldout_mpjpe_mm);
        }
        Command::TrainGmp { corpus, codec, config, out, seed, steps, hidden } => {
            let defaults = GmpRun { gmp: desk.gmp.clone(), train: desk.gmp_train.clone() };
            let mut flags = Overrides::new();
            flags.set("train.seed", seed).set("train.steps", steps).set("gmp.hidden", hidden);
            let run: GmpRun = resolve(&defaults, config.as_deref(), flags)?;
            let corpus = Corpus::load(&or_data(&data, corpus, "corpus"))?;
            let stats = stats_for(&corpus, codec.as_deref())?;
            let prep = Prepared::with_stats(&corpus, stats, run.train.seed)?;
            let out = or_data(&data, out, "gmp");
            let (gmp, report) = train_gmp(&prep.train_refs(), &prep.test_refs(), &run.gmp, &run.train)?;
            gmp.save(&out)?;
            prep.stats.save(&out.join("norm.json"))?;
            write_json(&out.join("report.json"), &report)?;
            snapshot(&snapshot_path(&out, true), "train-gmp", threads, &run)?;
            info!("gmp held-out MAE {:.4} -> {:.4}", report.heldout_mae_init, report.heldout_mae_final);
        }
        Command::TrainStylizer { corpus, codec, gmp, config, out, mode, seed, steps, batch, lr, ablation } => {
            let file = config.as_deref().map(read_file).transpose()?;
            let file_mode = file
                .as_ref()
                .and_then(|v| v.pointer("/train/mode").cloned())
                .map(serde_json::from_value::<Mode>)
                .transpose()
                .map_err(|e| CliError::Usage(format!("train.mode: {e}")))?;
            let mode = match mode {
                Some(ModeArg::Supervised) => Mode::Supervised,
                Some(ModeArg::Unsupervised) => Mode::Unsupervised,
                None => file_mode.unwrap_or(Mode::Supervised),
            };
            let defaults = StylizerRun { train: desk.train_config(mode, Ablations::default(), 0), chain: true };
            let mut flags = Overrides::new();
            flags
                .set("train.mode", Some(mode))
                .set("train.seed", seed)
                .set("train.steps", steps)
                .set("train.batch", batch)
                .set("train.lr", lr);
            for name in &ablation {
                let key = name.replace('-', "_");
                if !ABLATIONS.contains(&key.as_str()) {
                    return Err(CliError::Usage(format!("unknown ablation {name}; expected one of {}", ABLATIONS.join(", "))));
                }
                flags.set(&format!("train.ablations.{key}"), Some(true));
            }
            let mut merged = serde_json::to_value(&defaults).expect("json");
            if let Some(v) = file {
                crate::config::merge(&mut merged, v);
            }
            let with_file: StylizerRun = serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("configuration: {e}")))?;
            let run: StylizerRun = resolve(&with_file, None, flags)?;
            let corpus = Corpus::load(&or_data(&data, corpus, "corpus"))?;
            let codec_model = match &codec {
                Some(dir) if !run.train.ablations.no_latent => Some(Codec::load(dir)?),
                _ => None,
            };
            let stats = stats_for(&corpus, codec.as_deref())?;
            let prep = Prepared::with_stats(&corpus, stats, run.train.seed)?;
            let seqs = if run.chain { prep.chained_refs() } else { prep.train_refs() };
            let outcome = motionstyle::trainer::train_stylizer(&seqs, codec_model.as_ref(), &run.train)?;
            let curve = outcome.curve.clone();
            let gmp_model = gmp.as_deref().map(GlobalMotion::load).transpose()?;
            let bundle = prep.bundle(outcome, gmp_model, run.train.ablations);
            let out = or_data(&data, out, "model");
            bundle.save(&out)?;
            write_curve_csv(&curve, &out.join("curve.csv"))?;
            snapshot(&snapshot_path(&out, true), "train-stylizer", threads, &run)?;
            info!("bundle written to {}", out.display());
        }
        Command::Stylize { model, mode, content, style, label, seed, sample, style_b, alpha, no_gmp, contacts, out } => {
            let bundle = ModelBundle::load(&model)?;
            let content_seq = read_motion(&content)?;
            let opts = StylizeOptions {
                use_gmp: !no_gmp,
                contacts: match contacts {
                    ContactsArg::Recompute => ContactSource::Recompute,
                    ContactsArg::Decoded => ContactSource::Decoded,
                },
                sample_seed: sample.then_some(seed),
            };
            let result = match mode {
                StylizeMode::Motion => {
                    let style = style.ok_or_else(|| CliError::Usage("--mode motion needs --style".into()))?;
                    let style_seq = read_motion(&style)?;
                    match (style_b, alpha) {
                        (Some(b), Some(a)) => {
                            let sa = bundle.style_of(&style_seq, label, opts.sample_seed)?;
                            let sb = bundle.style_of(&read_motion(&b)?, label, opts.sample_seed)?;
                            bundle.interpolate_styles(&sa, &sb, a, &content_seq, label, &opts)?
                        }
                        _ => bundle.stylize_motion_based(&content_seq, &style_seq, label, &opts)?,
                    }
                }
                StylizeMode::Label => {
                    let label = label.ok_or_else(|| CliError::Usage("--mode label needs --label".into()))?;
                    bundle.stylize_label_based(&content_seq, label, seed, &opts)?
                }
                StylizeMode::Prior => bundle.stylize_prior_based(&content_seq, seed, &opts)?,
            };
            save_motion(&result, &out)?;
            let resolved = serde_json::json!({
                "mode": format!("{mode:?}").to_lowercase(),
                "model": model,
                "content": content,
                "label": label,
                "seed": seed,
                "options": opts,
                "alpha": alpha,
            });
            snapshot(&snapshot_path(&motion_stem(&out), false), "stylize", threads, &resolved)?;
        }
        Command::Interpolate { model, content, style_a, style_b, alpha, label, no_gmp, out } => {
            let bundle = ModelBundle::load(&model)?;
            let opts = StylizeOptions { use_gmp: !no_gmp, ..Default::default() };
            let sa = bundle.style_of(&read_motion(&style_a)?, label, None)?;
            let sb = bundle.style_of(&read_motion(&style_b)?, label, None)?;
            let result = bundle.interpolate_styles(&sa, &sb, alpha, &read_motion(&content)?, label, &opts)?;
            save_motion(&result, &out)?;
            let resolved = serde_json::json!({ "model": model, "alpha": alpha, "label": label, "options": opts });
            snapshot(&snapshot_path(&motion_stem(&out), false), "interpolate", threads, &resolved)?;
        }
        Command::Evaluate { model, test, styles, repeats, seed, classifiers, config, no_gmp, dump_features, out } => {
            let defaults = EvalRun { protocol: ProtocolConfig::default(), classifier: desk.classifier_train.clone() };
            let mut flags = Overrides::new();
            flags
                .set("protocol.repeats", repeats)
                .set("protocol.seed", seed)
                .set("protocol.use_gmp", no_gmp.then_some(false));
            let run: EvalRun = resolve(&defaults, config.as_deref(), flags)?;
            let bundle = ModelBundle::load(&model)?;
            let test_dir = or_data(&data, test, "corpus");
            let test_corpus = Corpus::load(&test_dir)?;
            let style_corpus = match &styles {
                Some(dir) if dir != &test_dir => Corpus::load(dir)?,
                _ => test_corpus.clone(),
            };
            let out_dir = out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
            let (style_clf, content_clf) = classifiers_for(&bundle, &test_corpus, classifiers.as_deref(), &out_dir, &run.classifier)?;
            let test_clips: Vec<&PoseSequence> = test_corpus.test().iter().map(|c| &c.seq).collect();
            let sources: Vec<&PoseSequence> = style_corpus.test().iter().map(|c| &c.seq).collect();
            let report = evaluate_protocol(&bundle, &test_clips, &sources, &style_clf, &content_clf, &run.protocol)?;
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
            report.write(&out_dir, stem)?;
            if let Some(path) = dump_features {
                dump(&bundle, &test_clips, &sources, &style_clf, &run.protocol, &path)?;
            }
            snapshot(&snapshot_path(&out, false), "evaluate", threads, &run)?;
            let summary: serde_json::Map<String, Value> = report
                .metrics()
                .iter()
                .map(|(n, s)| (n.to_string(), serde_json::json!({ "mean": s.mean, "ci95": s.ci95 })))
                .collect();
            println!("{}", Value::Object(summary));
        }
        Command::Bench { model, frames, repeats, warmup, no_latent_baseline, clip, seed, out } => {
            let bundle = ModelBundle::load(&model)?;
            let clip = match clip {
                Some(p) => read_motion(&p)?,
                None => generate_clip(
                    &ContentFactor::preset(0),
                    &StyleFactor::preset(0),
                    frames,
                    seed,
                    Arc::new(Skeleton::default21()),
                )?
                .seq,
            };
            let latent = benchmark_forward(&bundle, &clip, frames, warmup, repeats)?;
            let baseline = if no_latent_baseline {
                let pose = ModelBundle {
                    codec: Codec::identity(bundle.stats.dim()),
                    stylizer: Stylizer::new(
                        &StylizerConfig { code_dim: bundle.stats.dim(), ..bundle.stylizer.config().clone() },
                        seed,
                    )?,
                    ..bundle.clone()
                };
                Some(benchmark_forward(&pose, &clip, frames, warmup, repeats)?)
            } else {
                None
            };
            let ratio = baseline.as_ref().map(|b| latent.median_ms / b.median_ms);
            let body = serde_json::json!({ "frames": frames, "latent": latent, "no_latent": baseline, "ratio": ratio });
            println!("{}", serde_json::to_string(&body).expect("json"));
            if let Some(path) = out {
                write_json(&path, &body)?;
                snapshot(&snapshot_path(&path, false), "bench", threads, &serde_json::json!({ "frames": frames, "repeats": repeats, "warmup": warmup, "seed": seed }))?;
            }
        }
        Command::Inspect { path } => {
            let info = inspect(&path)?;
            println!("{}", serde_json::to_string_pretty(&info).expect("json"));
        }
    }
    Ok(())
}

fn classifiers_for(
    bundle: &ModelBundle,
    corpus: &Corpus,
    dir: Option<&Path>,
    out_dir: &Path,
    opts: &ClassifierTrainConfig,
) -> Result<(Classifier, Classifier), CliError> {
    if let Some(dir) = dir.filter(|d| d.join("style_clf.json").exists()) {
        return Ok((Classifier::load(dir, "style_clf")?, Classifier::load(dir, "content_clf")?));
    }
    let norm = |split: Vec<&motionstyle::synthetic::LabeledClip>| {
        split.iter().map(|c| bundle.stats.znormalize(&c.seq)).collect::<motionstyle::Result<Vec<_>>>()
    };
    let train = norm(corpus.train())?;
    let held = norm(corpus.test())?;
    let (tr, he): (Vec<&PoseSequence>, Vec<&PoseSequence>) = (train.iter().collect(), held.iter().collect());
    let style = train_classifier(&tr, &he, Target::Style, opts)?;
    let content = train_classifier(&tr, &he, Target::Content, opts)?;
    info!("classifier held-out accuracy: style {:?}, content {:?}", style.heldout_accuracy, content.heldout_accuracy);
    let save_dir = dir.map(Path::to_path_buf).unwrap_or_else(|| out_dir.join("classifiers"));
    style.save(&save_dir, "style_clf")?;
    content.save(&save_dir, "content_clf")?;
    Ok((style, content))
}

/// One motion-based pass over the test clips; writes real and stylized style features as CSV rows.
fn dump(
    bundle: &ModelBundle,
    test: &[&PoseSequence],
    sources: &[&PoseSequence],
    clf: &Classifier,
    protocol: &ProtocolConfig,
    path: &Path,
) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
    let opts = StylizeOptions { use_gmp: protocol.use_gmp, contacts: ContactSource::Decoded, sample_seed: None };
    let mut rows = Vec::new();
    for content in test {
        let src = sources[rng.random_range(0..sources.len())];
        let label = if bundle.supervised() { src.style_label } else { None };
        let out = bundle.stylize_motion_based(content, src, label, &opts)?;
        rows.push(("real", content.style_label, content.content_label, bundle.stats.znormalize(content)?));
        rows.push(("stylized", src.style_label, content.content_label, bundle.stats.znormalize(&out)?));
    }
    let seqs: Vec<&PoseSequence> = rows.iter().map(|r| &r.3).collect();
    let feats = clf.features(&seqs)?;
    let mut file = std::fs::File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = (0..feats.ncols()).map(|i| format!("f{i}")).collect();
    let mut text = format!("kind,style,content,{}\n", header.join(","));
    for (row, (kind, s, c, _)) in feats.rows().into_iter().zip(&rows) {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let opt = |v: &Option<usize>| v.map_or(String::new(), |x| x.to_string());
        text.push_str(&format!("{kind},{},{},{}\n", opt(s), opt(c), vals.join(",")));
    }
    file.write_all(text.as_bytes()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_value(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn inspect(path: &Path) -> Result<Value, CliError> {
    let mut info = serde_json::Map::new();
    if path.is_dir() {
        for name in ["bundle", "codec", "stylizer", "gmp", "corpus", "resolved_config", "report"] {
            let file = path.join(format!("{name}.json"));
            if file.exists() {
                let mut v = read_value(&file)?;
                if name == "corpus" {
                    if let Some(obj) = v.as_object_mut() {
                        let count = |k: &str| obj.get(k).and_then(Value::as_array).map_or(0, Vec::len);
                        let summary = serde_json::json!({ "train": count("train"), "test": count("test") });
                        obj.remove("labels");
                        obj.insert("train".into(), summary["train"].clone());
                        obj.insert("test".into(), summary["test"].clone());
                    }
                }
                info.insert(name.into(), v);
            }
        }
        if info.is_empty() {
            return Err(CliError::Data(format!("{}: no checkpoint or corpus metadata", path.display())));
        }
    } else {
        let manifest = load_manifest(&motion_stem(path))?;
        info.insert("motion".into(), serde_json::to_value(manifest).expect("json"));
    }
    Ok(Value::Object(info))
}
