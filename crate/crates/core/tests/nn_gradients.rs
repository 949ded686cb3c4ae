use arena_core::nn::gradcheck::{analytic_gradient, compare_gradients, numeric_gradient};
use arena_core::nn::{
    gradient_check, read_checkpoint, write_checkpoint, Activation, AdamState, GradSample, LayerSpec, ModelGraph, Padding,
    Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn samples(model: &ModelGraph, n: usize, seed: u64) -> Vec<GradSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let in_len: usize = model.input_shape().iter().product();
    let out_len: usize = model.output_shape().iter().product();
    (0..n)
        .map(|_| GradSample {
            input: Tensor::new(model.input_shape().to_vec(), (0..in_len).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap(),
            side: (model.side_dim() > 0).then(|| (0..model.side_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            target: (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect()
}

fn check(name: &str, shape: Vec<usize>, side: usize, specs: Vec<LayerSpec>, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let mut m = ModelGraph::new(shape.clone(), side, specs.clone(), seed).unwrap();
        let s = samples(&m, 2, seed);
        let r = gradient_check(&mut m, &s, H, TOL).unwrap();
        assert!(r.passed, "{name} seed {seed}: max rel error {} at {:?} ({:?})", r.max_rel_error, r.worst_index, r.blocks);
        assert!(r.checked > 0, "{name} seed {seed}: everything skipped");
    }
}

#[test]
fn dense_every_activation() {
    for act in Activation::ALL {
        check(&format!("dense {act:?}"), vec![4], 0, vec![LayerSpec::dense(3, act)], 0..20);
    }
}

#[test]
fn conv2d_both_paddings() {
    for act in Activation::ALL {
        for padding in [Padding::Valid, Padding::Same] {
            let specs = vec![LayerSpec::Conv2D { filters: 2, kernel: (3, 3), padding, activation: act }, LayerSpec::Flatten];
            check(&format!("conv {act:?} {padding:?}"), vec![2, 4, 5], 0, specs, 0..20);
        }
    }
}

#[test]
fn lstm_sequences_and_channels() {
    check("lstm seq", vec![5, 3], 0, vec![LayerSpec::lstm(3, true), LayerSpec::Flatten], 0..20);
    check("lstm last", vec![5, 3], 0, vec![LayerSpec::lstm(2, false)], 0..20);
    check("lstm rank3", vec![2, 4, 3], 0, vec![LayerSpec::lstm(3, false)], 0..20);
}

#[test]
fn convlstm_cells() {
    let seq = vec![LayerSpec::ConvLstm { filters: 2, kernel: (3, 3), return_sequences: true }, LayerSpec::Flatten];
    check("convlstm seq", vec![3, 1, 2, 3], 0, seq, 0..20);
    let last = vec![LayerSpec::ConvLstm { filters: 2, kernel: (1, 3), return_sequences: false }, LayerSpec::Flatten];
    check("convlstm last", vec![3, 2, 1, 4], 0, last, 0..20);
}

#[test]
fn standalone_activation_and_side_input() {
    for act in Activation::ALL {
        let specs = vec![LayerSpec::dense(4, Activation::Linear), LayerSpec::Activation { activation: act }];
        check(&format!("activation {act:?}"), vec![3], 0, specs, 0..20);
    }
    let specs = vec![
        LayerSpec::dense(3, Activation::Tanh),
        LayerSpec::ConcatSide,
        LayerSpec::dense(2, Activation::Sigmoid),
    ];
    check("concat side", vec![3], 2, specs, 0..20);
}

#[test]
fn four_layer_compositions() {
    let cnn_lstm = vec![
        LayerSpec::Conv2D { filters: 2, kernel: (3, 3), padding: Padding::Same, activation: Activation::Relu },
        LayerSpec::Conv2D { filters: 2, kernel: (3, 3), padding: Padding::Same, activation: Activation::Relu },
        LayerSpec::lstm(3, false),
        LayerSpec::dense(4, Activation::Linear),
    ];
    check("cnn-lstm toy", vec![1, 3, 3], 0, cnn_lstm, 0..20);
    let mlp = vec![
        LayerSpec::Conv2D { filters: 3, kernel: (3, 3), padding: Padding::Same, activation: Activation::Relu },
        LayerSpec::Dropout { p: 0.3 },
        LayerSpec::Flatten,
        LayerSpec::dense(2, Activation::Tanh),
    ];
    check("conv-dropout-dense", vec![1, 3, 4], 0, mlp, 0..20);
    let stack = vec![
        LayerSpec::lstm(3, true),
        LayerSpec::lstm(2, false),
        LayerSpec::dense(3, Activation::Relu),
        LayerSpec::dense(2, Activation::Linear),
    ];
    check("stacked lstm", vec![4, 2], 0, stack, 0..20);
}

#[test]
fn linear_model_is_exact() {
    let mut m = ModelGraph::new(vec![3], 0, vec![LayerSpec::dense(2, Activation::Linear)], 1).unwrap();
    let s = samples(&m, 3, 1);
    let r = gradient_check(&mut m, &s, H, 1e-8).unwrap();
    assert!(r.passed, "{}", r.max_rel_error);
    assert_eq!(r.skipped_kinks, 0);
}

#[test]
fn corrupted_gradient_fails() {
    let mut m = ModelGraph::new(vec![4], 0, vec![LayerSpec::dense(3, Activation::Tanh)], 2).unwrap();
    let s = samples(&m, 2, 2);
    let mut a = analytic_gradient(&mut m, &s).unwrap();
    let idx: Vec<usize> = (0..m.n_params()).collect();
    let (num, kinks) = numeric_gradient(&m, &s, H, &idx);
    assert!(compare_gradients(&m.param_blocks(), &idx, &a, &num, &kinks, TOL).passed);
    a[5] *= 1.1;
    let r = compare_gradients(&m.param_blocks(), &idx, &a, &num, &kinks, TOL);
    assert!(!r.passed);
    assert_eq!(r.worst_index, Some(5));
}

#[test]
fn eval_forward_is_deterministic() {
    let specs = vec![
        LayerSpec::Conv2D { filters: 4, kernel: (3, 3), padding: Padding::Same, activation: Activation::Relu },
        LayerSpec::Dropout { p: 0.5 },
        LayerSpec::Flatten,
        LayerSpec::dense(5, Activation::Linear),
    ];
    let mut m = ModelGraph::new(vec![1, 3, 6], 0, specs, 4).unwrap();
    let x = samples(&m, 1, 4).remove(0).input;
    let a = m.predict(&x, None).unwrap();
    let b = m.forward(&x, None, false).unwrap();
    let _ = m.forward(&x, None, true).unwrap();
    let c = m.predict(&x, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn dropout_expectation_matches_eval_output() {
    let specs = vec![LayerSpec::Dropout { p: 0.4 }, LayerSpec::dense(2, Activation::Linear)];
    let mut m = ModelGraph::new(vec![6], 0, specs, 8).unwrap();
    let x = Tensor::vector(vec![0.9, -0.4, 0.7, 1.2, -0.8, 0.5]);
    let eval = m.predict(&x, None).unwrap();
    let n = 100_000;
    let mut acc = [0.0; 2];
    for _ in 0..n {
        let y = m.forward(&x, None, true).unwrap();
        acc[0] += y.data()[0];
        acc[1] += y.data()[1];
    }
    for k in 0..2 {
        let mean = acc[k] / n as f64;
        let rel = (mean - eval.data()[k]).abs() / eval.data()[k].abs();
        assert!(rel <= 0.02, "output {k}: mean {mean} vs {} ({rel})", eval.data()[k]);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let specs = vec![
        LayerSpec::Conv2D { filters: 2, kernel: (3, 3), padding: Padding::Same, activation: Activation::Relu },
        LayerSpec::Dropout { p: 0.2 },
        LayerSpec::Flatten,
        LayerSpec::ConcatSide,
        LayerSpec::dense(3, Activation::Sigmoid),
    ];
    let m = ModelGraph::new(vec![1, 3, 4], 2, specs, 13).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&m, &mut buf).unwrap();
    let back = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(back.specs(), m.specs());
    assert_eq!(back.input_shape(), m.input_shape());
    assert!(back.params().iter().zip(m.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
    let mut again = Vec::new();
    write_checkpoint(&back, &mut again).unwrap();
    assert_eq!(buf, again);
    buf[0] ^= 1;
    assert!(read_checkpoint(buf.as_slice()).is_err());
}

#[test]
fn training_reduces_loss() {
    let specs = vec![LayerSpec::lstm(4, false), LayerSpec::dense(3, Activation::Linear)];
    let mut m = ModelGraph::new(vec![6, 2], 0, specs, 21).unwrap();
    let data = samples(&m, 8, 21);
    let mut adam = AdamState::new(m.n_params(), 1e-2);
    let loss = |m: &ModelGraph| {
        data.iter().map(|s| arena_core::nn::mse(m.predict(&s.input, None).unwrap().data(), &s.target).unwrap()).sum::<f64>()
    };
    let before = loss(&m);
    for _ in 0..200 {
        m.zero_grad();
        for s in &data {
            let y = m.forward(&s.input, None, true).unwrap();
            m.backward(&arena_core::nn::mse_grad(y.data(), &s.target).unwrap()).unwrap();
        }
        m.adam_step(&mut adam).unwrap();
    }
    assert!(loss(&m) < 0.5 * before, "{} -> {}", before, loss(&m));
}
