use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_map(rng: &mut ChaCha8Rng, n: usize, c: usize) -> FeatureMap3 {
    FeatureMap3::from_fn(n, c, |_, _, _| rng.random_range(-1.0..1.0))
}

fn rand_conv(rng: &mut ChaCha8Rng, v: usize, s: usize, p: usize, c_in: usize, c_out: usize) -> ConvSpec {
    let w = (0..c_out * v * v * c_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = (0..c_out).map(|_| rng.random_range(-1.0..1.0)).collect();
    ConvSpec::new(v, s, p, c_in, c_out, w, b).unwrap()
}

/// Direct evaluation of the convolution sum with implicit zero padding.
fn conv_oracle(input: &FeatureMap3, spec: &ConvSpec) -> Vec<f64> {
    let n = input.side();
    let n_out = (n + 2 * spec.pad - spec.v + spec.stride) / spec.stride;
    let mut out = vec![0.0; n_out * n_out * spec.c_out];
    for i in 0..n_out {
        for j in 0..n_out {
            for k in 0..spec.c_out {
                let mut sum = 0.0;
                for x in 0..spec.v {
                    for y in 0..spec.v {
                        for c in 0..spec.c_in {
                            let (pi, pj) = (spec.stride * i + x, spec.stride * j + y);
                            if pi < spec.pad || pj < spec.pad || pi >= n + spec.pad || pj >= n + spec.pad {
                                continue;
                            }
                            sum += input.get(pi - spec.pad, pj - spec.pad, c) * spec.weight(k, x, y, c);
                        }
                    }
                }
                out[(i * n_out + j) * spec.c_out + k] = spec.bias[k] + sum;
            }
        }
    }
    out
}

#[test]
fn conv_scalar_case() {
    let input = FeatureMap3::new(1, 1, vec![3.0]).unwrap();
    let spec = ConvSpec::new(1, 1, 0, 1, 1, vec![2.0], vec![1.0]).unwrap();
    assert_eq!(conv_forward(&input, &spec).unwrap().as_slice(), &[7.0]);
}

#[test]
fn conv_constant_input() {
    let input = FeatureMap3::new(3, 1, vec![1.0; 9]).unwrap();
    let spec = ConvSpec::new(2, 1, 0, 1, 1, vec![1.0; 4], vec![0.0]).unwrap();
    let out = conv_forward(&input, &spec).unwrap();
    assert_eq!(out.side(), 2);
    assert!(out.as_slice().iter().all(|&v| v == 4.0));
}

#[test]
fn conv_alexnet_first_layer_side() {
    // (227 + 0 − 11 + 4) / 4 = 55
    assert_eq!(conv_output_side(227, 11, 4, 0).unwrap(), 55);
}

#[test]
fn conv_rejects_bad_geometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let input = rand_map(&mut rng, 5, 2);
    let spec = rand_conv(&mut rng, 2, 2, 0, 2, 1);
    assert!(matches!(conv_forward(&input, &spec), Err(Error::InvalidGeometry { .. })));
    let big = rand_conv(&mut rng, 3, 1, 0, 2, 1);
    assert!(conv_forward(&rand_map(&mut rng, 2, 2), &big).is_err());
    let wrong_depth = rand_conv(&mut rng, 1, 1, 0, 3, 1);
    assert!(matches!(conv_forward(&input, &wrong_depth), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn conv_matches_oracle_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(1..=8);
        let v = rng.random_range(1..=3);
        let p = rng.random_range(0..=2);
        let s = rng.random_range(1..=3);
        let (ci, co) = (rng.random_range(1..=3), rng.random_range(1..=3));
        if conv_output_side(n, v, s, p).is_err() {
            continue;
        }
        let input = rand_map(&mut rng, n, ci);
        let spec = rand_conv(&mut rng, v, s, p, ci, co);
        let got = conv_forward(&input, &spec).unwrap();
        let want = conv_oracle(&input, &spec);
        assert!(got.as_slice().iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits()));
        checked += 1;
    }
}

#[test]
fn conv_is_linear_without_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut spec = rand_conv(&mut rng, 3, 1, 1, 2, 3);
        spec.bias = vec![0.0; 3];
        let x = rand_map(&mut rng, 6, 2);
        let y = rand_map(&mut rng, 6, 2);
        let (alpha, beta) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mix = FeatureMap3::from_fn(6, 2, |i, j, c| alpha * x.get(i, j, c) + beta * y.get(i, j, c));
        let lhs = conv_forward(&mix, &spec).unwrap();
        let fx = conv_forward(&x, &spec).unwrap();
        let fy = conv_forward(&y, &spec).unwrap();
        for (k, &l) in lhs.as_slice().iter().enumerate() {
            let r = alpha * fx.as_slice()[k] + beta * fy.as_slice()[k];
            assert!((l - r).abs() <= 1e-10);
        }
    }
}

#[test]
fn relu_examples() {
    let m = FeatureMap3::new(2, 1, vec![-2.0, 0.0, 5.0, -0.5]).unwrap();
    assert_eq!(relu_forward(&m).as_slice(), &[0.0, 0.0, 5.0, 0.0]);
    let neg = FeatureMap3::new(1, 1, vec![-1.0]).unwrap();
    assert_eq!(relu_forward(&neg).as_slice(), &[0.0]);
    let pos = FeatureMap3::new(1, 1, vec![3.0]).unwrap();
    assert_eq!(relu_forward(&pos).as_slice(), &[3.0]);
}

#[test]
fn maxpool_examples() {
    let m = FeatureMap3::new(2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let out = maxpool_forward(&m, &PoolSpec { q: 2, stride: 2 }).unwrap();
    assert_eq!(out.as_slice(), &[4.0]);

    let c = FeatureMap3::new(6, 2, vec![7.0; 72]).unwrap();
    for (q, s) in [(2, 2), (3, 3), (1, 1), (2, 1), (4, 2)] {
        let out = maxpool_forward(&c, &PoolSpec { q, stride: s }).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 7.0));
    }
    assert_eq!(pool_output_side(6, 2, 2).unwrap(), 3);
    assert!(pool_output_side(5, 2, 2).is_err());
    assert!(pool_output_side(2, 3, 1).is_err());
}

#[test]
fn unit_pool_and_relu_are_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = rand_map(&mut rng, 5, 3);
    let unit = PoolSpec { q: 1, stride: 1 };
    let once = maxpool_forward(&m, &unit).unwrap();
    assert_eq!(maxpool_forward(&once, &unit).unwrap(), once);
    let r = relu_forward(&m);
    assert_eq!(relu_forward(&r), r);
}

#[test]
fn maxpool_commutes_with_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = rand_map(&mut rng, 6, 2);
    let c = 0.75;
    let shifted = FeatureMap3::from_fn(6, 2, |i, j, k| m.get(i, j, k) + c);
    let spec = PoolSpec { q: 2, stride: 2 };
    let a = maxpool_forward(&shifted, &spec).unwrap();
    let b = maxpool_forward(&m, &spec).unwrap();
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert_eq!(*x, y + c);
    }
}

#[test]
fn dense_examples() {
    let id = DenseSpec::new(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], vec![0.0; 3], Activation::Identity).unwrap();
    let x = Vector1(vec![1.5, -2.0, 0.25]);
    assert_eq!(dense_forward(&x, &id).unwrap(), x);

    let s = DenseSpec::new(2, 1, vec![1.0, 1.0], vec![0.5], Activation::Identity).unwrap();
    assert_eq!(dense_forward(&Vector1(vec![2.0, 3.0]), &s).unwrap().as_slice(), &[5.5]);

    assert!(matches!(dense_forward(&Vector1(vec![1.0]), &s), Err(Error::LengthMismatch { .. })));
}

#[test]
fn dense_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let spec = DenseSpec::new(3, 4, w.clone(), b.clone(), Activation::Relu).unwrap();
    let y = dense_forward(&Vector1(x.clone()), &spec).unwrap();
    for o in 0..4 {
        let mut acc = b[o];
        for i in 0..3 {
            acc += w[o * 3 + i] * x[i];
        }
        assert!((y.as_slice()[o] - acc.max(0.0)).abs() <= 1e-12);
    }
}

#[test]
fn dropout_passthrough_cases() {
    let x = Vector1(vec![1.0, -2.0, 3.0]);
    let (y, mask) = dropout_apply(&x, &DropoutSpec { rate: 0.0, mode: DropoutMode::Training, seed: 1 }).unwrap();
    assert_eq!(y, x);
    assert!(mask.iter().all(|&m| m));
    for rate in [0.1, 0.5, 1.0] {
        let (y, _) = dropout_apply(&x, &DropoutSpec { rate, mode: DropoutMode::Inference, seed: 9 }).unwrap();
        assert_eq!(y, x);
    }
    let (y, mask) = dropout_apply(&x, &DropoutSpec { rate: 1.0, mode: DropoutMode::Training, seed: 1 }).unwrap();
    assert!(y.as_slice().iter().all(|&v| v == 0.0));
    assert!(mask.iter().all(|&m| !m));
    assert!(dropout_apply(&x, &DropoutSpec { rate: 1.5, mode: DropoutMode::Training, seed: 1 }).is_err());
}

#[test]
fn dropout_half_rate_statistics() {
    let n = 100_000;
    let x = Vector1((0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect());
    let (y, mask) = dropout_apply(&x, &DropoutSpec { rate: 0.5, mode: DropoutMode::Training, seed: 2024 }).unwrap();
    let kept = mask.iter().filter(|&&m| m).count() as f64 / n as f64;
    assert!((kept - 0.5).abs() <= 0.01, "kept fraction {kept}");
    let mean_in = x.as_slice().iter().sum::<f64>() / n as f64;
    let mean_out = y.as_slice().iter().sum::<f64>() / n as f64;
    assert!((mean_out - mean_in).abs() / mean_in <= 0.02);
}

#[test]
fn softmax_examples() {
    assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
    let p = softmax(&[1000.0, 0.0]);
    assert!(p.iter().all(|v| v.is_finite()));
    assert!(p[0] > 1.0 - 1e-12);
}

#[test]
fn cross_entropy_examples() {
    assert!(cross_entropy(&[0.0, 1.0, 0.0], 1).abs() <= 1e-12);
    for c in 0..4 {
        assert!((cross_entropy(&[0.25; 4], c) - 4f64.ln()).abs() < 1e-11);
    }
    // −ln 0.3 = 1.2039728043259361
    assert!((cross_entropy(&[0.7, 0.3], 1) - 1.2039728043259361).abs() < 1e-11);
}

#[test]
fn argmax_prefers_lowest_index() {
    assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    assert_eq!(argmax(&[2.0, 2.0]), 0);
}

#[test]
fn sgd_examples() {
    let mut w = vec![1.0];
    let mut v = vec![0.0];
    sgd_momentum_step(&mut w, &[3.0], &mut v, 0.1, 0.0);
    assert!((w[0] - 0.7).abs() < 1e-15);

    let mut w = vec![0.0];
    let mut v = vec![0.0];
    sgd_momentum_step(&mut w, &[1.0], &mut v, 0.001, 0.9);
    assert!((w[0] + 0.001).abs() < 1e-15);
    sgd_momentum_step(&mut w, &[1.0], &mut v, 0.001, 0.9);
    assert!((w[0] + 0.0029).abs() < 1e-15);
}

#[test]
fn output_gradient_is_softmax_minus_onehot() {
    let layer = DenseSpec::new(1, 2, vec![0.0, 0.0], vec![0.0, 0.0], Activation::Identity).unwrap();
    let head = Head::from_layers(vec![layer], 0.0).unwrap();
    let cache = head.forward_with_masks(&[1.0], vec![]).unwrap();
    let g = head_backward(&head, &cache, 0);
    assert_eq!(g.biases[0], vec![-0.5, 0.5]);
}

#[test]
fn zero_head_bias_gradient_closed_form() {
    let arch = HeadArchitecture { hidden: vec![5], dropout: 0.0 };
    let mut head = Head::init(6, &arch, 3, &mut ChaCha8Rng::seed_from_u64(0));
    for l in head.layers_mut() {
        l.weights.iter_mut().for_each(|w| *w = 0.0);
    }
    let cache = head.forward_with_masks(&[0.3; 6], vec![vec![1.0; 5]]).unwrap();
    let g = head_backward(&head, &cache, 2);
    let third = 1.0 / 3.0;
    let want = [third, third, third - 1.0];
    for (a, b) in g.biases[1].iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn zero_rate_dropout_equals_plain_head() {
    let arch = HeadArchitecture { hidden: vec![7, 5], dropout: 0.0 };
    let head = Head::init(4, &arch, 3, &mut ChaCha8Rng::seed_from_u64(8));
    let x = [0.2, -0.4, 0.9, 0.1];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let a = head.forward_train(&x, &mut rng).unwrap();
    let b = head.forward_with_masks(&x, vec![vec![1.0; 7], vec![1.0; 5]]).unwrap();
    assert_eq!(a.probs, b.probs);
    assert_eq!(a.probs, head.forward(&x).unwrap());
    assert_eq!(head_backward(&head, &a, 1), head_backward(&head, &b, 1));
}

proptest! {
    #[test]
    fn softmax_normalized_and_shift_invariant(
        xs in proptest::collection::vec(-50.0f64..50.0, 1..12),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&xs);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0));
        prop_assert_eq!(argmax(&p), argmax(&xs));
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let q = softmax(&shifted);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
