use motionstyle::stylizer::*;
use motionstyle::Error;
use motionstyle_tape::{Tape, Tensor};
use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(n_labels: Option<usize>) -> StylizerConfig {
    StylizerConfig { code_dim: 12, hidden: 16, content_dim: 10, style_dim: 6, label_embed: 4, n_labels, ..Default::default() }
}

fn random_code(t: usize, d: usize, rng: &mut impl Rng) -> Array2<f32> {
    Array2::from_shape_fn((t, d), |_| rng.random_range(-2.0..2.0))
}

#[test]
fn content_code_has_instance_norm_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = Stylizer::new(&small(Some(3)), 2).unwrap();
    let c = s.encode_content(&random_code(20, 12, &mut rng)).unwrap();
    assert_eq!(c.values.nrows(), content_len(20));
    for col in c.values.columns() {
        let m = col.mean().unwrap() as f64;
        let v = col.iter().map(|x| (*x as f64 - m).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(m.abs() < 1e-4 && (v - 1.0).abs() < 1e-2, "mean {m} var {v}");
    }
}

#[test]
fn content_code_ignores_per_channel_affine_input_changes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = Stylizer::new(&small(None), 4).unwrap();
    let z = random_code(16, 12, &mut rng);
    let scale: Vec<f32> = (0..12).map(|_| rng.random_range(0.5..2.0)).collect();
    let shift: Vec<f32> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
    let moved = Array2::from_shape_fn((16, 12), |(t, c)| z[[t, c]] * scale[c] + shift[c]);
    let a = s.encode_content(&z).unwrap();
    let b = s.encode_content(&moved).unwrap();
    let worst = (&a.values - &b.values).iter().fold(0f32, |m, v| m.max(v.abs()));
    assert!(worst < 1e-4, "{worst}");
    assert_eq!(s.encode_content(&z).unwrap(), a, "deterministic");
}

#[test]
fn default_dimensions_are_512() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = Stylizer::new(&StylizerConfig::default(), 0).unwrap();
    let z = random_code(40, 512, &mut rng);
    let d = s.encode_style(&z, Some(1)).unwrap();
    assert_eq!((d.mu.len(), d.logvar.len()), (512, 512));
    assert!(d.sigma().iter().all(|v| v.is_finite() && *v > 0.0));
    let c = s.encode_content(&z).unwrap();
    assert_eq!(c.values.dim(), (20, 512));
    let out = s.generate(&c, &d.mean_code(), Some(1), None).unwrap();
    assert_eq!(out.dim(), (40, 512));
}

#[test]
fn label_mode_is_enforced() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let z = random_code(8, 12, &mut rng);
    let sup = Stylizer::new(&small(Some(3)), 0).unwrap();
    let unsup = Stylizer::new(&small(None), 0).unwrap();
    assert!(matches!(sup.encode_style(&z, None), Err(Error::LabelRequired)));
    assert!(matches!(unsup.encode_style(&z, Some(0)), Err(Error::LabelForbidden)));
    assert!(matches!(sup.encode_style(&z, Some(3)), Err(Error::LabelOutOfRange { .. })));
    assert!(matches!(sup.encode_style(&z.slice(ndarray::s![..1, ..]).to_owned(), Some(0)), Err(Error::TooShort { .. })));
    let c = unsup.encode_content(&z).unwrap();
    let style = sample_prior(6, &mut rng);
    assert!(matches!(unsup.generate(&c, &style, Some(1), None), Err(Error::ModeMismatch(_))));
    assert!(matches!(sup.generate(&c, &style, None, None), Err(Error::ModeMismatch(_))));
    assert_eq!(unsup.generate(&c, &style, None, Some(7)).unwrap().nrows(), 7);
}

#[test]
fn style_sampling_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mu: Array1<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let logvar: Array1<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dist = StyleDistribution { mu: mu.clone(), logvar: logvar.clone() };
    let n = 100_000;
    let mut sum = vec![0f64; 8];
    for _ in 0..n {
        let s = sample_style(&dist, &mut rng);
        sum.iter_mut().zip(s.values.iter()).for_each(|(a, v)| *a += *v as f64);
    }
    for i in 0..8 {
        let sigma = (0.5 * logvar[i] as f64).exp();
        let err = (sum[i] / n as f64 - mu[i] as f64).abs();
        assert!(err < 3.0 * sigma / (n as f64).sqrt(), "coord {i}: {err}");
    }
    let sharp = StyleDistribution { mu: mu.clone(), logvar: Array1::from_elem(8, -80.0) };
    let s = sample_style(&sharp, &mut rng);
    assert!((&s.values - &mu).iter().all(|d| d.abs() < 1e-6));
    let a = sample_prior(16, &mut ChaCha8Rng::seed_from_u64(9));
    let b = sample_prior(16, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, b);
    assert_eq!(a.provenance, StyleProvenance::SampledPrior);
}

fn two_pass_reference(x: &[f64], t: usize, gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (c, (g, b)) in gamma.iter().zip(beta).enumerate() {
        let row = &x[c * t..(c + 1) * t];
        let m = row.iter().sum::<f64>() / t as f64;
        let v = row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64;
        for k in 0..t {
            out[c * t + k] = g * (row[k] - m) / (v + 1e-5).sqrt() + b;
        }
    }
    out
}

#[test]
fn adain_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (c, t) = (5, 24);
    let x: Vec<f64> = (0..c * t).map(|_| rng.random_range(-3.0..3.0)).collect();
    let stats: Vec<(f64, f64)> = (0..c)
        .map(|ch| {
            let row = &x[ch * t..(ch + 1) * t];
            let m = row.iter().sum::<f64>() / t as f64;
            (m, (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64).sqrt())
        })
        .collect();
    let run = |gamma: Vec<f64>, beta: Vec<f64>| {
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(Tensor::from_vec(&[1, c, t], x.clone()).unwrap());
        let g = tape.constant(Tensor::from_vec(&[1, c], gamma).unwrap());
        let b = tape.constant(Tensor::from_vec(&[1, c], beta).unwrap());
        let y = adain(&mut tape, xv, g, b).unwrap();
        tape.value(y).data().to_vec()
    };
    let ident = run(stats.iter().map(|s| s.1).collect(), stats.iter().map(|s| s.0).collect());
    assert!(ident.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-5));
    let unit = run(vec![1.0; c], vec![0.0; c]);
    for ch in 0..c {
        let row = &unit[ch * t..(ch + 1) * t];
        let m = row.iter().sum::<f64>() / t as f64;
        let v = row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64;
        assert!(m.abs() < 1e-5 && (v - 1.0).abs() < 1e-5);
    }
    let gamma: Vec<f64> = (0..c).map(|_| rng.random_range(-2.0..2.0)).collect();
    let beta: Vec<f64> = (0..c).map(|_| rng.random_range(-2.0..2.0)).collect();
    let got = run(gamma.clone(), beta.clone());
    let want = two_pass_reference(&x, t, &gamma, &beta);
    assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-6));

    let mut tape = Tape::<f64>::new();
    let xv = tape.constant(Tensor::zeros(&[1, c, t]));
    let g = tape.constant(Tensor::zeros(&[1, c + 1]));
    assert!(matches!(adain(&mut tape, xv, g, g), Err(Error::ShapeMismatch(_))));
}

/// Largest interior difference between `G(c)` and each half of `G([c, c])`.
fn seam_error(s: &Stylizer, t_c: usize, rng: &mut impl Rng) -> f32 {
    let content = ContentCode { values: random_code(t_c, 10, rng) };
    let doubled = ContentCode { values: concatenate![Axis(0), content.values, content.values] };
    let style = sample_prior(6, rng);
    let single = s.generate(&content, &style, Some(1), None).unwrap();
    let double = s.generate(&doubled, &style, Some(1), None).unwrap();
    assert_eq!((single.nrows(), double.nrows()), (2 * t_c, 4 * t_c));
    let margin = 6;
    let mut worst = 0f32;
    for t in margin..2 * t_c - margin {
        for offset in [0, 2 * t_c] {
            worst = (&single.row(t) - &double.row(t + offset)).iter().fold(worst, |m, v| m.max(v.abs()));
        }
    }
    worst
}

// Instance statistics are taken over the whole clip, so the zero-padded ends
// shift every frame by O(1/T); interior agreement improves with length.
#[test]
fn generator_is_fully_convolutional_up_to_instance_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let s = Stylizer::new(&small(Some(2)), 11).unwrap();
    let short = seam_error(&s, 12, &mut rng);
    let long = seam_error(&s, 96, &mut rng);
    println!("seam error T_c=12: {short}, T_c=96: {long}");
    assert!(long < short, "{long} vs {short}");
    assert!(long < 2e-2, "{long}");
}

#[test]
fn interpolation_endpoints_and_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (a, b) = (sample_prior(6, &mut rng), sample_prior(6, &mut rng));
    assert_eq!(interpolate(&a, &b, 0.0).unwrap().values, a.values);
    assert_eq!(interpolate(&a, &b, 1.0).unwrap().values, b.values);
    assert!(matches!(interpolate(&a, &b, 1.5), Err(Error::OutOfRange(_))));
}

#[test]
fn checkpoint_round_trip() {
    let s = Stylizer::new(&small(Some(3)), 13).unwrap();
    let dir = tempfile::tempdir().unwrap();
    s.save(dir.path(), serde_json::json!({"no_cycle": true})).unwrap();
    let (loaded, abl) = Stylizer::load(dir.path()).unwrap();
    assert!(loaded.params.bit_identical(&s.params));
    assert_eq!(loaded.config(), s.config());
    assert_eq!(abl["no_cycle"], true);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("stylizer.json")).unwrap()).unwrap();
    assert_eq!(meta["mode"], "supervised");
}
