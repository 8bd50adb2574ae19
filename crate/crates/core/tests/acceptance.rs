//! Acceptance run: eight criteria, one PASS/FAIL line each. Exits nonzero if any fail.
//!
//! Criteria 4 to 8 train the desk-scale models from scratch on the default
//! synthetic corpus (about a quarter of an hour on one core).

use std::sync::Arc;
use std::time::Instant;

use motionstyle::codec::{Codec, CodecConfig};
use motionstyle::evaluation::*;
use motionstyle::inference::{ContactSource, ModelBundle, StylizeOptions};
use motionstyle::motion::kinematics::rest_sequence;
use motionstyle::motion::{homo_pair, matrix_to_sixd, sixd_to_matrix, PoseSequence, Skeleton};
use motionstyle::pipeline::{DeskScale, Prepared};
use motionstyle::stylizer::{adain, Stylizer, StylizerConfig};
use motionstyle::synthetic::{generate_clip, ContentFactor, Corpus, CorpusSpec, StyleFactor};
use motionstyle::trainer::*;
use motionstyle_tape::{Tape, Tensor};
use nalgebra::{DMatrix, DVector, Quaternion, UnitQuaternion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

#[path = "common/mod.rs"]
mod common;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(results: &mut Vec<Outcome>, id: usize, name: &'static str, pass: bool, detail: String) {
    println!("criterion {id} [{name}]: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    results.push(Outcome { id, name, pass, detail });
}

// ---------------------------------------------------------------- criterion 1

fn random_quaternion(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let v: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]))
}

fn sixd_round_trip_error(rng: &mut impl Rng) -> f64 {
    (0..10_000)
        .map(|_| {
            let m = *random_quaternion(rng).to_rotation_matrix().matrix();
            (sixd_to_matrix(&matrix_to_sixd(&m).unwrap()).unwrap() - m).amax()
        })
        .fold(0.0, f64::max)
}

fn geodesic_oracle_error(rng: &mut impl Rng) -> f64 {
    let skel = Arc::new(Skeleton::default21());
    let mut a = rest_sequence(skel.clone(), 8, 30.0, 0.9);
    let mut b = a.clone();
    let layout = a.layout();
    let mut oracle = 0.0;
    for t in 0..a.len() {
        for j in 0..layout.joints {
            let (qa, qb) = (random_quaternion(rng), random_quaternion(rng));
            oracle += 2.0 * qa.coords.dot(&qb.coords).abs().min(1.0).acos();
            for (seq, q) in [(&mut a, qa), (&mut b, qb)] {
                let r = matrix_to_sixd(q.to_rotation_matrix().matrix()).unwrap();
                for k in 0..6 {
                    seq.frames[[t, layout.rotation(j) + k]] = r.0[k] as f32;
                }
            }
        }
    }
    oracle /= (a.len() * layout.joints) as f64;
    (geodesic_distance(&a, &b).unwrap() - oracle).abs()
}

fn kl_monte_carlo_rel_error(rng: &mut impl Rng) -> f64 {
    use motionstyle::stylizer::StyleDistribution;
    let mut draw = |lo: f32, hi: f32| ndarray::Array1::from_shape_fn(8, |_| rng.random_range(lo..hi));
    let a = StyleDistribution { mu: draw(-1.0, 1.0), logvar: draw(-1.0, 0.5) };
    let b = StyleDistribution { mu: draw(-1.0, 1.0), logvar: draw(-1.0, 0.5) };
    let closed = kl_gaussians(&a, &b).unwrap();
    let n = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let mut lp = 0.0;
        for i in 0..8 {
            let (ma, va) = (a.mu[i] as f64, (a.logvar[i] as f64).exp());
            let (mb, vb) = (b.mu[i] as f64, (b.logvar[i] as f64).exp());
            let x = Normal::new(ma, va.sqrt()).unwrap().sample(rng);
            lp += -0.5 * ((x - ma).powi(2) / va + va.ln()) + 0.5 * ((x - mb).powi(2) / vb + vb.ln());
        }
        acc += lp;
    }
    (acc / n as f64 - closed).abs() / closed
}

fn fid_closed_form_rel_error(rng: &mut impl Rng) -> f64 {
    let (d, n) = (8, 10_000);
    let draw_set = |rng: &mut ChaCha8Rng| {
        let mean = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.5);
        let mut samples = Array2::zeros((n, d));
        for i in 0..n {
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &mean + &b * z;
            for k in 0..d {
                samples[[i, k]] = x[k];
            }
        }
        let cov = &b * b.transpose();
        (mean, cov, samples)
    };
    let mut local = ChaCha8Rng::seed_from_u64(rng.random());
    let (ma, ca, xa) = draw_set(&mut local);
    let (mb, cb, xb) = draw_set(&mut local);
    let cross: f64 = (&ca * &cb).complex_eigenvalues().iter().map(|e| e.re.max(0.0).sqrt()).sum();
    let truth = (&ma - &mb).norm_squared() + ca.trace() + cb.trace() - 2.0 * cross;
    (fid(&xa, &xb).unwrap() - truth).abs() / truth
}

fn adain_identity_error(rng: &mut impl Rng) -> f64 {
    let (c, t) = (6, 32);
    let x: Vec<f64> = (0..c * t).map(|_| rng.random_range(-3.0..3.0)).collect();
    let run = |gamma: Vec<f64>, beta: Vec<f64>| {
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(Tensor::from_vec(&[1, c, t], x.clone()).unwrap());
        let g = tape.constant(Tensor::from_vec(&[1, c], gamma).unwrap());
        let b = tape.constant(Tensor::from_vec(&[1, c], beta).unwrap());
        let y = adain(&mut tape, xv, g, b).unwrap();
        tape.value(y).data().to_vec()
    };
    let gamma: Vec<f64> = (0..c).map(|_| rng.random_range(0.5..2.0)).collect();
    let beta: Vec<f64> = (0..c).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = run(gamma.clone(), beta.clone());
    let mut worst: f64 = 0.0;
    for ch in 0..c {
        let row = &y[ch * t..(ch + 1) * t];
        let m = row.iter().sum::<f64>() / t as f64;
        let sd = (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64).sqrt();
        worst = worst.max((m - beta[ch]).abs()).max((sd - gamma[ch]).abs());
    }
    worst
}

fn criterion_1(results: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let sixd = sixd_round_trip_error(&mut rng);
    let geo = geodesic_oracle_error(&mut rng);
    let kl = kl_monte_carlo_rel_error(&mut rng);
    let fid = fid_closed_form_rel_error(&mut rng);
    let ada = adain_identity_error(&mut rng);
    let pass = sixd < 1e-6 && geo < 1e-6 && kl < 0.01 && fid < 0.05 && ada < 1e-5;
    let detail = format!("6D {sixd:.1e} < 1e-6; geodesic {geo:.1e} < 1e-6; KL rel {kl:.4} < 0.01; FID rel {fid:.4} < 0.05; AdaIN {ada:.1e} < 1e-5");
    report(results, 1, "math oracles", pass, detail);
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2(results: &mut Vec<Outcome>) {
    use motionstyle::codec::CodecNet;
    use motionstyle::stylizer::StylizerNet;
    let mut worst: f64 = 0.0;
    let probes = 30;
    for (k, mode) in [Mode::Supervised, Mode::Unsupervised].into_iter().enumerate() {
        let supervised = mode == Mode::Supervised;
        let mut rng = ChaCha8Rng::seed_from_u64(200 + k as u64);
        let ccfg = CodecConfig { latent_dim: 3, hidden: 4, feature_dim: 20, ..CodecConfig::default() };
        let (codec, mut cstore) = CodecNet::build::<f64>(&ccfg, &mut rng).unwrap();
        cstore.set_trainable(false);
        let scfg = StylizerConfig {
            code_dim: 3,
            hidden: 4,
            content_dim: 3,
            style_dim: 2,
            label_embed: 2,
            n_labels: supervised.then_some(2),
            ..Default::default()
        };
        let (net, mut store) = StylizerNet::build::<f64>(&scfg, &mut rng).unwrap();
        let triplets: Vec<Triplet> = (0..2)
            .map(|i| Triplet {
                seq_ids: [0, 0, 1],
                clips: std::array::from_fn(|_| Array2::from_shape_fn((32, 20), |_| rng.random_range(-1.0..1.0))),
                labels: [Some(i), Some(i), Some(1 - i)],
            })
            .collect();
        let batch = TripletBatch::<f64>::from_triplets(&triplets, supervised).unwrap();
        let cfg = TrainConfig::new(mode);
        let err = common::param_gradcheck(&mut store, probes, &mut rng, |tape, s| {
            let mut noise = ChaCha8Rng::seed_from_u64(7);
            loss_graph(tape, &net, s, &codec, &cstore, &batch, &cfg, &mut noise).unwrap().total
        });
        worst = worst.max(err);
    }
    report(
        results,
        2,
        "gradient correctness",
        worst < 1e-3,
        format!("{probes} parameters per mode, both modes, f64: worst relative error {worst:.2e} < 1e-3"),
    );
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3(results: &mut Vec<Outcome>, codec_frozen: bool, trained: &ModelBundle) {
    let skel = Arc::new(Skeleton::default21());
    let clip = |len| generate_clip(&ContentFactor::preset(0), &StyleFactor::preset(2), len, 5, skel.clone()).unwrap().seq;
    let stats = &trained.stats;
    let default_codec = Codec::new(&CodecConfig::default(), 0).unwrap();
    let x = stats.znormalize(&clip(160)).unwrap();
    let code = default_codec.encode(&x).unwrap();
    let back = default_codec.decode(&code).unwrap();
    let compression = code.values.nrows() == 40 && back.len() == 160;

    let default_stylizer = Stylizer::new(&StylizerConfig::default(), 0).unwrap();
    let content = default_stylizer.encode_content(&code.values).unwrap();
    let style = default_stylizer.encode_style(&code.values, Some(0)).unwrap();
    let dims = content.values.ncols() == 512 && style.mu.len() == 512;

    let mut lengths = Vec::new();
    for len in [37, 160, 500] {
        let c = clip(len);
        let out = trained.stylize_motion_based(&c, &clip(64), Some(1), &StylizeOptions::default()).unwrap();
        lengths.push((len, out.len()));
    }
    let lengths_ok = lengths.iter().all(|(a, b)| a == b);
    let pass = compression && dims && codec_frozen && lengths_ok;
    let detail = format!(
        "160 -> {} code steps -> {} frames; content/style dims {}/{}; codec bit-identical after training: {codec_frozen}; lengths (in, out) {lengths:?}",
        code.values.nrows(),
        back.len(),
        content.values.ncols(),
        style.mu.len()
    );
    report(results, 3, "shape and structure contracts", pass, detail);
}

// ---------------------------------------------------------- evaluation helpers

struct Judges {
    style: Classifier,
    content: Classifier,
}

/// Every held-out clip transferred to every style, with a held-out clip of that style as the source.
fn transfer_set(prep: &Prepared) -> Vec<(usize, usize, usize)> {
    let n_styles = prep.test.iter().filter_map(|s| s.style_label).max().unwrap() + 1;
    let mut out = Vec::new();
    for i in 0..prep.test_raw.len() {
        for target in 0..n_styles {
            let sources: Vec<usize> = (0..prep.test_raw.len())
                .filter(|&j| j != i && prep.test_raw[j].style_label == Some(target))
                .collect();
            out.push((i, sources[i % sources.len()], target));
        }
    }
    out
}

struct TransferScores {
    style_acc: f64,
    content_acc: f64,
    foot_skating: f64,
}

fn score_transfers(bundle: &ModelBundle, prep: &Prepared, judges: &Judges, opts: &StylizeOptions) -> TransferScores {
    let (mut outs, mut sy, mut cy) = (Vec::new(), Vec::new(), Vec::new());
    let mut skate = 0.0;
    let pairs = transfer_set(prep);
    for &(c, s, target) in &pairs {
        let label = bundle.supervised().then_some(target);
        let out = bundle.stylize_motion_based(&prep.test_raw[c], &prep.test_raw[s], label, opts).unwrap();
        skate += foot_skating(&out).unwrap();
        outs.push(bundle.stats.znormalize(&out).unwrap());
        sy.push(target);
        cy.push(prep.test_raw[c].content_label.unwrap());
    }
    let refs: Vec<&PoseSequence> = outs.iter().collect();
    TransferScores {
        style_acc: accuracy(&refs, &sy, &judges.style).unwrap(),
        content_acc: accuracy(&refs, &cy, &judges.content).unwrap(),
        foot_skating: skate / pairs.len() as f64,
    }
}

fn label_based(bundle: &ModelBundle, prep: &Prepared, judges: &Judges, opts: &StylizeOptions) -> (f64, f64) {
    let n_labels = bundle.n_labels().unwrap();
    let (mut outs, mut ys) = (Vec::new(), Vec::new());
    for (i, c) in prep.test_raw.iter().enumerate() {
        for label in 0..n_labels {
            let out = bundle.stylize_label_based(c, label, (i * n_labels + label) as u64, opts).unwrap();
            outs.push(bundle.stats.znormalize(&out).unwrap());
            ys.push(label);
        }
    }
    let refs: Vec<&PoseSequence> = outs.iter().collect();
    let acc = accuracy(&refs, &ys, &judges.style).unwrap();
    let mut div = 0.0;
    let clips = 4;
    for (i, c) in prep.test_raw.iter().take(clips).enumerate() {
        let samples: Vec<PoseSequence> = (0..10)
            .map(|k| bundle.stats.znormalize(&bundle.stylize_label_based(c, i % n_labels, 1000 + k, opts).unwrap()).unwrap())
            .collect();
        div += diversity(&samples.iter().collect::<Vec<_>>(), &judges.style).unwrap();
    }
    (acc, div / clips as f64)
}

/// Mean KL between style distributions of two windows, over same-clip pairs and different-style pairs.
fn homo_style_kl(bundle: &ModelBundle, prep: &Prepared) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let window = 64;
    let dist = |seq: &PoseSequence| {
        let code = bundle.encode(seq).unwrap();
        bundle.stylizer.encode_style(&code.values, None).unwrap()
    };
    let (mut same, mut diff) = (Vec::new(), Vec::new());
    for (i, seq) in prep.test.iter().enumerate() {
        let (a, b) = homo_pair(seq, window, &mut rng).unwrap();
        same.push(kl_gaussians(&dist(&a), &dist(&b)).unwrap());
        let others: Vec<&PoseSequence> = prep.test.iter().filter(|o| o.style_label != seq.style_label).collect();
        let other = others[(i * 7) % others.len()];
        let s0 = rng.random_range(0..=seq.len() - window);
        let s1 = rng.random_range(0..=other.len() - window);
        diff.push(kl_gaussians(&dist(&seq.slice(s0, window)), &dist(&other.slice(s1, window))).unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&same), mean(&diff))
}

fn main() {
    let started = Instant::now();
    let mut results = Vec::new();
    println!("acceptance: math and gradient checks");
    criterion_1(&mut results);
    criterion_2(&mut results);

    println!("acceptance: generating the 4 x 4 x 25 synthetic corpus and training desk-scale models");
    let desk = DeskScale::default();
    let corpus = Corpus::generate(&CorpusSpec::default()).unwrap();
    let prep = Prepared::new(&corpus, 1).unwrap();
    println!("  {} clips, {} training chains of {} frames", corpus.clips.len(), prep.chained.len(), prep.chained[0].len());

    let t = Instant::now();
    let (codec, codec_report) = prep.fit_codec(&desk).unwrap();
    let codec_secs = t.elapsed().as_secs_f64();
    println!("  codec: {codec_secs:.0} s, held-out MPJPE {:.2} mm", codec_report.heldout_mpjpe_mm);
    let t = Instant::now();
    let (gmp, gmp_report) = prep.fit_gmp(&desk).unwrap();
    let gmp_secs = t.elapsed().as_secs_f64();
    println!("  gmp: {gmp_secs:.0} s, held-out MAE {:.3} -> {:.3}", gmp_report.heldout_mae_init, gmp_report.heldout_mae_final);
    let judges = Judges {
        style: train_classifier(&prep.train_refs(), &prep.test_refs(), Target::Style, &desk.classifier_train).unwrap(),
        content: train_classifier(&prep.train_refs(), &prep.test_refs(), Target::Content, &desk.classifier_train).unwrap(),
    };
    let (style_judge, content_judge) = (judges.style.heldout_accuracy.unwrap(), judges.content.heldout_accuracy.unwrap());
    println!("  oracle classifiers: style {style_judge:.3}, content {content_judge:.3} held-out accuracy");

    let seed = 11;
    let train = |mode, ablations: Ablations| {
        let t = Instant::now();
        let out = prep.fit_stylizer(Some(&codec), &desk.train_config(mode, ablations, seed)).unwrap();
        let secs = t.elapsed().as_secs_f64();
        println!("  stylizer {mode:?} {ablations:?}: {secs:.0} s, {} steps", out.steps_run);
        (out, secs)
    };
    let (sup_out, sup_secs) = train(Mode::Supervised, Ablations::default());
    let codec_frozen = sup_out.codec.params.bit_identical(&codec.params);
    let sup = prep.bundle(sup_out, Some(gmp.clone()), Ablations::default());
    let (uns_out, uns_secs) = train(Mode::Unsupervised, Ablations::default());
    let uns = prep.bundle(uns_out, Some(gmp.clone()), Ablations::default());
    let no_homo_abl = Ablations { no_homo_style: true, ..Default::default() };
    let (no_homo_out, _) = train(Mode::Unsupervised, no_homo_abl);
    let no_homo = prep.bundle(no_homo_out, Some(gmp.clone()), no_homo_abl);
    let e2e_abl = Ablations { end_to_end: true, ..Default::default() };
    let (e2e_out, _) = train(Mode::Unsupervised, e2e_abl);
    let e2e = prep.bundle(e2e_out, Some(gmp.clone()), e2e_abl);

    criterion_3(&mut results, codec_frozen, &sup);

    // ------------------------------------------------------------ criterion 4
    let opts = StylizeOptions { contacts: ContactSource::Decoded, ..Default::default() };
    let s = score_transfers(&sup, &prep, &judges, &opts);
    let (label_acc, label_div) = label_based(&sup, &prep, &judges, &opts);
    let u = score_transfers(&uns, &prep, &judges, &opts);
    let budget = codec_secs + gmp_secs + sup_secs;
    let pass = s.style_acc >= 0.85
        && s.content_acc >= 0.80
        && label_div > 0.0
        && label_acc >= 0.85
        && u.style_acc >= 0.75
        && budget <= 1800.0
        && style_judge >= 0.99
        && content_judge >= 0.99;
    report(
        &mut results,
        4,
        "desk-scale reproduction",
        pass,
        format!(
            "supervised motion-based style {:.3} >= 0.85, content {:.3} >= 0.80; label-based accuracy {label_acc:.3} >= 0.85, diversity {label_div:.3} > 0; unsupervised style {:.3} >= 0.75 (content {:.3}); codec+GMP+stylizer {budget:.0} s <= 1800 s (unsupervised stylizer {uns_secs:.0} s); judges {style_judge:.3}/{content_judge:.3} >= 0.99",
            s.style_acc, s.content_acc, u.style_acc, u.content_acc
        ),
    );

    // ------------------------------------------------------------ criterion 5
    let nh = score_transfers(&no_homo, &prep, &judges, &opts);
    let ee = score_transfers(&e2e, &prep, &judges, &opts);
    let off = score_transfers(&sup, &prep, &judges, &StylizeOptions { use_gmp: false, ..opts });
    let chance = 1.0 / corpus.n_styles() as f64;
    let pass = nh.content_acc < u.content_acc && ee.style_acc < u.style_acc && off.foot_skating > s.foot_skating;
    report(
        &mut results,
        5,
        "ablation directions",
        pass,
        format!(
            "unsupervised, seed {seed}: content accuracy without homo-style {:.3} < full {:.3}; end-to-end style accuracy {:.3} < separate {:.3} (chance {chance:.2}); foot skating GMP off {:.4} > on {:.4} m/s",
            nh.content_acc, u.content_acc, ee.style_acc, u.style_acc, off.foot_skating, s.foot_skating
        ),
    );

    // ------------------------------------------------------------ criterion 6
    let (same, diff) = homo_style_kl(&uns, &prep);
    let ratio = same / diff;
    report(
        &mut results,
        6,
        "homo-style property",
        ratio < 0.5,
        format!("unsupervised model: same-clip KL {same:.3}, different-style KL {diff:.3}, ratio {ratio:.3} < 0.5"),
    );

    // ------------------------------------------------------------ criterion 7
    let pose_space = ModelBundle {
        codec: Codec::identity(260),
        stylizer: Stylizer::new(&StylizerConfig { code_dim: 260, ..sup.stylizer.config().clone() }, 0).unwrap(),
        ..sup.clone()
    };
    let clip = &prep.test_raw[0];
    let latent_a = benchmark_forward(&sup, clip, 160, 3, 30).unwrap();
    let pose = benchmark_forward(&pose_space, clip, 160, 3, 30).unwrap();
    let latent_b = benchmark_forward(&sup, clip, 160, 3, 30).unwrap();
    let stability = (latent_a.median_ms - latent_b.median_ms).abs() / latent_a.median_ms;
    report(
        &mut results,
        7,
        "efficiency direction",
        latent_a.median_ms < pose.median_ms,
        format!(
            "160 frames: latent {:.2} ms (IQR {:.2}) < no_latent {:.2} ms (IQR {:.2}); ratio {:.2}; repeat-run median drift {:.1}%",
            latent_a.median_ms,
            latent_a.iqr_ms,
            pose.median_ms,
            pose.iqr_ms,
            latent_a.median_ms / pose.median_ms,
            100.0 * stability
        ),
    );

    // ------------------------------------------------------------ criterion 8
    let style_sources: Vec<&PoseSequence> = prep.test_raw.iter().collect();
    let test: Vec<&PoseSequence> = prep.test_raw.iter().collect();
    let protocol = |repeats| {
        let cfg = ProtocolConfig { repeats, seed: 808, ..Default::default() };
        evaluate_protocol(&sup, &test, &style_sources, &judges.style, &judges.content, &cfg).unwrap()
    };
    let r30 = protocol(30);
    let r120 = protocol(120);
    let dir = std::env::temp_dir().join("motionstyle-acceptance");
    r30.write(&dir, "protocol_30").unwrap();
    r120.write(&dir, "protocol_120").unwrap();
    let mut ratios = Vec::new();
    let mut all_ci = true;
    for ((name, a), (_, b)) in r30.metrics().into_iter().zip(r120.metrics()) {
        all_ci &= a.ci95.is_some() && b.ci95.is_some() && a.values.len() == 30;
        println!("  {name}: {:.4} ± {:.4} (30)  {:.4} ± {:.4} (120)", a.mean, a.ci95.unwrap_or(f64::NAN), b.mean, b.ci95.unwrap_or(f64::NAN));
        let continuous = !name.ends_with("_acc");
        if let (true, Some(ca), Some(cb)) = (continuous, a.ci95, b.ci95) {
            if ca > 0.0 && cb > 0.0 {
                ratios.push((name, ca / cb));
            }
        }
    }
    let within = !ratios.is_empty() && ratios.iter().all(|(_, r)| (r / 2.0 - 1.0).abs() <= 0.3);
    let shown: Vec<String> = ratios.iter().map(|(n, r)| format!("{n} {r:.2}")).collect();
    report(
        &mut results,
        8,
        "protocol machinery",
        all_ci && within,
        format!(
            "30 repeats give mean ± 95% CI for all 7 metrics: {all_ci}; CI(30)/CI(120) within 30% of 2 for continuous metrics: {}; reports in {}",
            shown.join(", "),
            dir.display()
        ),
    );

    println!("acceptance summary ({:.0} s):", started.elapsed().as_secs_f64());
    for r in &results {
        println!("  {} criterion {} {}", if r.pass { "PASS" } else { "FAIL" }, r.id, r.name);
    }
    let failed: Vec<&Outcome> = results.iter().filter(|r| !r.pass).collect();
    if !failed.is_empty() {
        for f in failed {
            eprintln!("FAIL criterion {}: {}", f.id, f.detail);
        }
        std::process::exit(1);
    }
}
