use std::path::Path;
use std::process::{Command, Output};

fn motionstyle(args: &[&str], data: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motionstyle"))
        .args(args)
        .env("MOTIONSTYLE_DATA", data)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const CODEC: &str = r#"{"codec": {"hidden": 16, "latent_dim": 8}, "train": {"steps": 4, "batch": 4, "window": 32}}"#;
const GMP: &str = "[gmp]\nhidden = 8\n[train]\nsteps = 4\nbatch = 4\nwindow = 32\n";
const STYLIZER: &str = r#"{"train": {"steps": 7, "batch": 2, "window": 32, "log_every": 1,
  "model": {"hidden": 8, "content_dim": 4, "style_dim": 3, "label_embed": 2}}}"#;

/// Small corpus, codec, predictor and one bundle per mode under `data`.
fn pipeline(data: &Path) {
    ok(&motionstyle(&["gen-corpus", "--styles", "2", "--contents", "2", "--per-cell", "3", "--length", "48", "--seed", "3"], data));
    for (name, text) in [("codec.json", CODEC), ("gmp.toml", GMP), ("stylizer.json", STYLIZER)] {
        std::fs::write(data.join(name), text).unwrap();
    }
    let p = |n: &str| data.join(n).to_str().unwrap().to_owned();
    ok(&motionstyle(&["train-codec", "--config", &p("codec.json"), "--seed", "1"], data));
    ok(&motionstyle(&["train-gmp", "--config", &p("gmp.toml"), "--codec", &p("codec")], data));
    for (mode, out) in [("supervised", "sup"), ("unsupervised", "uns")] {
        ok(&motionstyle(
            &["train-stylizer", "--config", &p("stylizer.json"), "--codec", &p("codec"), "--gmp", &p("gmp"), "--mode", mode, "--steps", "3", "--out", &p(out)],
            data,
        ));
    }
}

#[test]
fn default_corpus_has_four_hundred_clips() {
    let dir = tempfile::tempdir().unwrap();
    let out = motionstyle(&["gen-corpus", "--styles", "4", "--contents", "4", "--per-cell", "25", "--seed", "7"], dir.path());
    ok(&out);
    let manifest = json(&dir.path().join("corpus/corpus.json"));
    let count = |k: &str| manifest[k].as_array().unwrap().len();
    assert_eq!(count("train") + count("test"), 400);
    assert_eq!(manifest["labels"].as_object().unwrap().len(), 400);
    assert!(dir.path().join("corpus/resolved_config.json").exists());
}

#[test]
fn end_to_end_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    pipeline(data);
    let p = |n: &str| data.join(n).to_str().unwrap().to_owned();

    // Flags beat the file, the file beats the defaults.
    let snap = json(&data.join("sup/resolved_config.json"));
    assert_eq!(snap["config"]["train"]["steps"], 3);
    assert_eq!(snap["config"]["train"]["batch"], 2);
    assert_eq!(snap["config"]["train"]["lr"], 1e-3);
    assert_eq!(snap["config"]["train"]["mode"], "supervised");
    assert_eq!(json(&data.join("codec/resolved_config.json"))["config"]["codec"]["variant"], "vae");
    assert_eq!(std::fs::read_to_string(data.join("sup/curve.csv")).unwrap().lines().count(), 4);

    let corpus = json(&data.join("corpus/corpus.json"));
    let clip = |i: usize| p(&format!("corpus/{}", corpus["test"][i].as_str().unwrap()));
    ok(&motionstyle(&["stylize", "--model", &p("sup"), "--mode", "motion", "--content", &clip(0), "--style", &clip(1), "--label", "1", "--out", &p("out/a")], data));
    let m = json(&data.join("out/a.json"));
    assert_eq!(m["frame_count"], 48);
    assert!(data.join("out/a.resolved_config.json").exists());
    ok(&motionstyle(&["stylize", "--model", &p("sup"), "--mode", "label", "--content", &clip(0), "--label", "0", "--seed", "4", "--out", &p("out/b")], data));
    ok(&motionstyle(&["stylize", "--model", &p("uns"), "--mode", "prior", "--content", &clip(0), "--seed", "4", "--out", &p("out/c")], data));
    ok(&motionstyle(
        &["stylize", "--model", &p("uns"), "--mode", "motion", "--content", &clip(0), "--style", &clip(1), "--style-b", &clip(2), "--alpha", "0.5", "--out", &p("out/d")],
        data,
    ));
    ok(&motionstyle(
        &["interpolate", "--model", &p("uns"), "--content", &clip(0), "--style-a", &clip(1), "--style-b", &clip(2), "--alpha", "0.5", "--out", &p("out/e")],
        data,
    ));
    assert_eq!(std::fs::read(data.join("out/d.f32")).unwrap(), std::fs::read(data.join("out/e.f32")).unwrap());

    std::fs::write(data.join("eval.toml"), "[classifier]\nsteps = 10\nbatch = 4\nwindow = 32\n").unwrap();
    let eval = motionstyle(&["evaluate", "--model", &p("uns"), "--config", &p("eval.toml"), "--repeats", "2", "--dump-features", &p("eval/features.csv"), "--out", &p("eval/report.json")], data);
    ok(&eval);
    let report = json(&data.join("eval/report.json"));
    assert_eq!(report["repeats"], 2);
    assert!(report["geo_dis"]["ci95"].is_number());
    assert!(data.join("eval/report.csv").exists());
    assert!(data.join("eval/classifiers/style_clf.json").exists());
    let features = std::fs::read_to_string(data.join("eval/features.csv")).unwrap();
    assert!(features.starts_with("kind,style,content,f0,"));
    let summary: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert!(summary["style_acc"]["mean"].is_number());

    let bench = motionstyle(&["bench", "--model", &p("sup"), "--repeats", "2", "--no-latent-baseline", "--out", &p("bench.json")], data);
    ok(&bench);
    let b = json(&data.join("bench.json"));
    assert_eq!(b["latent"]["samples_ms"].as_array().unwrap().len(), 2);
    assert!(b["ratio"].is_number());

    let inspect = motionstyle(&["inspect", &p("uns")], data);
    ok(&inspect);
    let info: serde_json::Value = serde_json::from_slice(&inspect.stdout).unwrap();
    assert_eq!(info["stylizer"]["mode"], "unsupervised");
    assert_eq!(info["bundle"]["has_gmp"], true);
    let inspect = motionstyle(&["inspect", &p("out/a.json")], data);
    ok(&inspect);
}

#[test]
fn exit_codes_name_the_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    pipeline(data);
    let p = |n: &str| data.join(n).to_str().unwrap().to_owned();
    let corpus = json(&data.join("corpus/corpus.json"));
    let clip = p(&format!("corpus/{}", corpus["test"][0].as_str().unwrap()));

    let out = motionstyle(&["stylize", "--model", &p("uns"), "--mode", "label", "--content", &clip, "--label", "0", "--out", &p("x")], data);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.lines().last().unwrap().starts_with("error: category=mode_mismatch"), "{err}");

    let out = motionstyle(&["stylize", "--model", &p("sup"), "--mode", "prior", "--content", &clip, "--out", &p("x")], data);
    assert_eq!(out.status.code(), Some(4));
    let out = motionstyle(&["stylize", "--model", &p("missing"), "--mode", "prior", "--content", &clip, "--out", &p("x")], data);
    assert_eq!(out.status.code(), Some(3));
    let out = motionstyle(&["stylize", "--model", &p("sup"), "--mode", "sideways", "--content", &clip, "--out", &p("x")], data);
    assert_eq!(out.status.code(), Some(2));
    let out = motionstyle(&["stylize", "--model", &p("sup"), "--mode", "label", "--content", &clip, "--label", "9", "--out", &p("x")], data);
    assert_eq!(out.status.code(), Some(2));
    let out = motionstyle(&["train-stylizer", "--ablation", "no_brain", "--codec", &p("codec")], data);
    assert_eq!(out.status.code(), Some(2));
    let out = motionstyle(&["train-stylizer", "--config", &p("stylizer.json"), "--steps", "1"], data);
    assert_eq!(out.status.code(), Some(3), "no codec: {}", String::from_utf8_lossy(&out.stderr));
    let out = motionstyle(&["train-codec", "--config", &p("codec.json"), "--lr", "1e30", "--out", &p("bad")], data);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn training_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    ok(&motionstyle(&["gen-corpus", "--styles", "2", "--contents", "2", "--per-cell", "3", "--length", "48"], data));
    std::fs::write(data.join("codec.json"), CODEC).unwrap();
    let cfg = data.join("codec.json");
    for out in ["a", "b"] {
        let target = data.join(out);
        ok(&motionstyle(&["--threads", "1", "train-codec", "--config", cfg.to_str().unwrap(), "--out", target.to_str().unwrap()], data));
    }
    assert_eq!(std::fs::read(data.join("a/codec.bin")).unwrap(), std::fs::read(data.join("b/codec.bin")).unwrap());
    assert_eq!(std::fs::read(data.join("a/report.json")).unwrap(), std::fs::read(data.join("b/report.json")).unwrap());
}
