use avfield::nn::*;
use avfield::rng::seeded;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;

/// Straight-line re-evaluation of a block, written independently of the batched path.
fn reference_forward(block: &MlpBlock, input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    let mut skip = Vec::new();
    for (i, layer) in block.layers().iter().enumerate() {
        if block.residual().is_some_and(|s| s.from == i) {
            skip = x.clone();
        }
        let w = layer.weight();
        let mut y = vec![0.0; layer.out_dim()];
        for r in 0..layer.out_dim() {
            let mut acc = layer.bias()[r];
            for c in 0..layer.in_dim() {
                acc += w[[r, c]] * x[c];
            }
            y[r] = match layer.activation() {
                Activation::Relu => acc.max(0.0),
                Activation::Sigmoid => 1.0 / (1.0 + (-acc).exp()),
                Activation::Identity => acc,
            };
        }
        if block.residual().is_some_and(|s| s.to == i) {
            for (a, b) in y.iter_mut().zip(&skip) {
                *a += b;
            }
        }
        x = y;
    }
    x
}

fn random_block(seed: u64, act: Activation) -> MlpBlock {
    let mut rng = seeded(seed);
    four_layer_block(5, 7, 3, act, &mut rng).unwrap()
}

fn random_input(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = seeded(seed ^ 0xabcdef);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Smallest |pre-activation| over all ReLU units for this input.
fn min_relu_margin(block: &MlpBlock, input: &[f64]) -> f64 {
    let mut x = input.to_vec();
    let mut skip = Vec::new();
    let mut margin = f64::INFINITY;
    for (i, layer) in block.layers().iter().enumerate() {
        if block.residual().is_some_and(|s| s.from == i) {
            skip = x.clone();
        }
        let mut y = vec![0.0; layer.out_dim()];
        for r in 0..layer.out_dim() {
            let z: f64 = layer.bias()[r]
                + (0..layer.in_dim()).map(|c| layer.weight()[[r, c]] * x[c]).sum::<f64>();
            if layer.activation() == Activation::Relu {
                margin = margin.min(z.abs());
            }
            y[r] = layer.activation().apply(z);
        }
        if block.residual().is_some_and(|s| s.to == i) {
            for (a, b) in y.iter_mut().zip(&skip) {
                *a += b;
            }
        }
        x = y;
    }
    margin
}

#[test]
fn identity_layer_passes_input_through() {
    let block = MlpBlock::new(vec![DenseLayer::identity(2, Activation::Identity)], None).unwrap();
    let (y, _) = block.forward(&[1.0, 2.0]).unwrap();
    assert_eq!(y, vec![1.0, 2.0]);
}

#[test]
fn relu_clamps_negative() {
    let layer = DenseLayer::new(array![[-1.0]], array![0.0], Activation::Relu).unwrap();
    let block = MlpBlock::new(vec![layer], None).unwrap();
    assert_eq!(block.forward(&[3.0]).unwrap().0, vec![0.0]);
}

#[test]
fn forward_matches_straight_line_oracle() {
    for seed in 0..10 {
        let block = random_block(seed, Activation::Sigmoid);
        let x = random_input(seed, 5);
        let (y, _) = block.forward(&x).unwrap();
        let r = reference_forward(&block, &x);
        for (a, b) in y.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn scalar_product_rule() {
    let layer = DenseLayer::new(array![[2.0]], array![0.0], Activation::Identity).unwrap();
    let block = MlpBlock::new(vec![layer], None).unwrap();
    let (_, tape) = block.forward(&[3.0]).unwrap();
    let g = block.backward(&tape, &[1.0]).unwrap();
    assert_eq!(g.weights[0][[0, 0]], 3.0);
    assert_eq!(g.input[[0, 0]], 2.0);
}

#[test]
fn sigmoid_gradient_at_zero() {
    let layer = DenseLayer::new(array![[1.0]], array![0.0], Activation::Sigmoid).unwrap();
    let block = MlpBlock::new(vec![layer], None).unwrap();
    let (_, tape) = block.forward(&[0.0]).unwrap();
    let g = block.backward(&tape, &[1.0]).unwrap();
    assert_eq!(g.input[[0, 0]], 0.25);
}

#[test]
fn residual_block_gradients_match_finite_differences() {
    let mut checked = 0;
    for seed in 0..40 {
        let block = random_block(seed, Activation::Identity);
        let x = random_input(seed, 5);
        if min_relu_margin(&block, &x) < 1e-4 {
            continue;
        }
        let err = finite_difference_check(&block, &x, 1e-5).unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
        checked += 1;
    }
    assert!(checked >= 20);
}

#[test]
fn linear_block_gradients_are_exact() {
    let mut rng = seeded(3);
    let block = MlpBlock::init(
        &[4, 6, 2],
        &[Activation::Identity, Activation::Identity],
        None,
        &mut rng,
    )
    .unwrap();
    let err = finite_difference_check(&block, &[0.3, -0.2, 0.9, 0.1], 1e-3).unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn sigmoid_only_block_gradients() {
    let mut rng = seeded(11);
    let block = MlpBlock::init(
        &[3, 5, 5, 2],
        &[Activation::Sigmoid; 3],
        None,
        &mut rng,
    )
    .unwrap();
    let err = finite_difference_check(&block, &[0.5, -0.7, 0.2], 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn input_and_injection_gradients_match_finite_differences() {
    let block = random_block(5, Activation::Sigmoid);
    let x = Array2::from_shape_vec((3, 5), random_input(5, 15)).unwrap();
    let inj = Array2::from_shape_vec((1, 7), random_input(6, 7)).unwrap();
    let loss = |x: &Array2<f64>, inj: &Array2<f64>| {
        let y = block
            .infer_batch(x.view(), &[Injection { layer: 2, values: inj.view() }])
            .unwrap();
        0.5 * y.iter().map(|v| v * v).sum::<f64>()
    };
    let (y, tape) = block
        .forward_batch(x.view(), &[Injection { layer: 2, values: inj.view() }])
        .unwrap();
    let g = block.backward_batch(&tape, y.view()).unwrap();

    let num_x = numeric_gradient(
        |p| loss(&Array2::from_shape_vec((3, 5), p.to_vec()).unwrap(), &inj),
        x.as_slice().unwrap(),
        1e-6,
    );
    assert!(max_relative_error(g.input.as_slice().unwrap(), &num_x) < 1e-5);
    let num_inj = numeric_gradient(
        |p| loss(&x, &Array2::from_shape_vec((1, 7), p.to_vec()).unwrap()),
        inj.as_slice().unwrap(),
        1e-6,
    );
    assert_eq!(g.injections[0].dim(), (1, 7));
    assert!(max_relative_error(g.injections[0].as_slice().unwrap(), &num_inj) < 1e-5);
}

#[test]
fn zeroed_hidden_path_is_identity_over_residual_span() {
    let mut rng = seeded(9);
    let mut block = four_layer_block(3, 4, 2, Activation::Identity, &mut rng).unwrap();
    for i in 1..=2 {
        let l = block.layer_mut(i);
        *l = DenseLayer::zeros(4, 4, Activation::Relu);
    }
    // With layers 1 and 2 zeroed, layer 3 sees exactly layer 0's output.
    let x = [0.2, -0.4, 0.7];
    let (h0, _) = MlpBlock::new(vec![block.layers()[0].clone()], None)
        .unwrap()
        .forward(&x)
        .unwrap();
    let (expect, _) = MlpBlock::new(vec![block.layers()[3].clone()], None)
        .unwrap()
        .forward(&h0)
        .unwrap();
    assert_eq!(block.forward(&x).unwrap().0, expect);
}

#[test]
fn stale_tape_is_rejected() {
    let mut block = random_block(1, Activation::Identity);
    let (_, tape) = block.forward(&random_input(1, 5)).unwrap();
    block.layer_mut(0).bias_mut()[0] += 1.0;
    assert!(matches!(
        block.backward(&tape, &[1.0, 1.0, 1.0]),
        Err(avfield::Error::Usage(_))
    ));
}

#[test]
fn dimension_mismatch_is_config_error() {
    let block = random_block(1, Activation::Identity);
    assert!(matches!(block.forward(&[1.0]), Err(avfield::Error::Config(_))));
    assert!(MlpBlock::new(
        vec![
            DenseLayer::zeros(2, 3, Activation::Relu),
            DenseLayer::zeros(4, 1, Activation::Relu)
        ],
        None
    )
    .is_err());
    assert!(MlpBlock::new(
        vec![DenseLayer::zeros(2, 3, Activation::Relu)],
        Some(ResidualSpan { from: 0, to: 0 })
    )
    .is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let block = random_block(21, Activation::Sigmoid);
    let mut adam = AdamState::new(block.num_params(), AdamConfig::default()).unwrap();
    let mut p = block.flat_params();
    let g: Vec<f64> = (0..p.len()).map(|i| (i as f64).sin() * 1e-3).collect();
    adam_step(&mut p, &g, &mut adam, 100, &block.param_segments()).unwrap();
    let ckpt = Checkpoint::from_model("mlp", &block, Some(adam.clone()), serde_json::json!({"note": 1}));
    let text = ckpt.to_json().unwrap();
    let back = Checkpoint::from_json(&text).unwrap();
    assert_eq!(back, ckpt);
    let mut restored = random_block(22, Activation::Sigmoid);
    back.restore_into(&mut restored).unwrap();
    let a: Vec<u64> = restored.flat_params().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = block.flat_params().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
    assert_eq!(back.adam.unwrap(), adam);
}

#[test]
fn checkpoint_rejects_wrong_layout_and_version() {
    let block = random_block(1, Activation::Identity);
    let ckpt = Checkpoint::from_model("mlp", &block, None, serde_json::Value::Null);
    let mut other = MlpBlock::init(&[2, 2], &[Activation::Relu], None, &mut seeded(0)).unwrap();
    assert!(matches!(ckpt.restore_into(&mut other), Err(avfield::Error::Schema(_))));
    let text = ckpt.to_json().unwrap().replacen("\"format_version\": 1", "\"format_version\": 99", 1);
    assert!(matches!(Checkpoint::from_json(&text), Err(avfield::Error::Schema(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_and_gradients_are_deterministic(seed in 0u64..1000) {
        let a = random_block(seed, Activation::Sigmoid);
        let b = random_block(seed, Activation::Sigmoid);
        let x = random_input(seed, 5);
        let (ya, ta) = a.forward(&x).unwrap();
        let (yb, tb) = b.forward(&x).unwrap();
        prop_assert_eq!(&ya, &yb);
        let ga = a.backward(&ta, &ya).unwrap().flat();
        let gb = b.backward(&tb, &yb).unwrap().flat();
        prop_assert_eq!(ga, gb);
    }

    #[test]
    fn output_is_finite_for_finite_input(seed in 0u64..1000, scale in 0.0f64..50.0) {
        let block = random_block(seed, Activation::Identity);
        let x: Vec<f64> = random_input(seed, 5).iter().map(|v| v * scale).collect();
        prop_assert!(block.forward(&x).unwrap().0.iter().all(|v| v.is_finite()));
    }
}
