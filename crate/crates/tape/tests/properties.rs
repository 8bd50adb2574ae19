use motionstyle_tape::{read_blob, write_blob, Tape, Tensor};
use proptest::prelude::*;

fn tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|i| ((i as u64 * 2654435761 + seed * 97) % 1000) as f64 / 500.0 - 1.0).collect();
    Tensor::from_vec(shape, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_output_length(b in 1usize..3, c in 1usize..4, t in 3usize..40, o in 1usize..4, stride in 1usize..3, seed in 0u64..100) {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(tensor(&[b, c, t], seed));
        let w = tape.constant(tensor(&[o, c, 3], seed + 1));
        let y = tape.conv1d(x, w, None, stride, 1);
        prop_assert_eq!(tape.shape(y).to_vec(), vec![b, o, (t + 2 - 3) / stride + 1]);
    }

    #[test]
    fn instance_norm_statistics(b in 1usize..3, c in 1usize..4, t in 4usize..40, seed in 0u64..100) {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(tensor(&[b, c, t], seed));
        let y = tape.instance_norm(x, 1e-9);
        let data = tape.value(y).data();
        for row in data.chunks(t) {
            let mean = row.iter().sum::<f64>() / t as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
            prop_assert!(mean.abs() < 1e-9);
            // Constant rows normalize to zero.
            prop_assert!((var - 1.0).abs() < 1e-5 || var < 1e-9);
        }
    }

    #[test]
    fn blob_round_trip(dims in proptest::collection::vec(1usize..5, 1..4), seed in 0u64..100) {
        let a = tensor(&dims, seed);
        let mut buf = Vec::new();
        write_blob(&mut buf, [("w".to_string(), a.clone())]).unwrap();
        let back = read_blob::<f64>(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(&back[0].0, "w");
        prop_assert_eq!(back[0].1.shape(), a.shape());
        let expect: Vec<f64> = a.data().iter().map(|&v| v as f32 as f64).collect();
        prop_assert_eq!(back[0].1.data(), &expect[..]);
    }
}
