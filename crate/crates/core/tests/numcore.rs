mod common;

use common::{rng, uniform};
use fastdoc_core::error::Error;
use fastdoc_core::numcore::{
    adamw_step, AdamWConfig, AdamWState, ParamStore, Tape, Tensor, Var, LAYER_NORM_EPS,
};
use proptest::prelude::*;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

/// Central-difference check of `f` with respect to the leaf `x` built from `data`.
fn check_unary(
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    f: impl Fn(&mut Tape<f64>, Var) -> Var,
) -> f64 {
    let eval = |d: Vec<f64>| {
        let mut t: Tape<f64> = Tape::new();
        let x = t.input(rows, cols, d).unwrap();
        let y = f(&mut t, x);
        t.scalar(y)
    };
    let mut t: Tape<f64> = Tape::new();
    let x = t.input(rows, cols, data.clone()).unwrap();
    let y = f(&mut t, x);
    let g = t.backward(y).unwrap().of(x).unwrap().to_vec();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..data.len() {
        let mut p = data.clone();
        p[i] += h;
        let mut m = data.clone();
        m[i] -= h;
        let num = (eval(p) - eval(m)) / (2.0 * h);
        worst = worst.max((num - g[i]).abs() / (1.0 + num.abs()));
    }
    worst
}

/// A fixed random weighting turns any matrix output into a scalar.
fn weighted_sum(t: &mut Tape<f64>, y: Var, seed: u64) -> Var {
    let (r, c) = t.shape(y);
    let w = t.constant(r, c, uniform(&mut rng(seed), r * c, 1.0)).unwrap();
    let p = t.mul(y, w).unwrap();
    t.sum(p)
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(1);
    for (m, k, n) in [(1, 1, 1), (2, 3, 4), (5, 1, 3), (7, 6, 2)] {
        let a = uniform(&mut r, m * k, 2.0);
        let b = uniform(&mut r, k * n, 2.0);
        let mut t: Tape<f64> = Tape::new();
        let va = t.constant(m, k, a.clone()).unwrap();
        let vb = t.constant(k, n, b.clone()).unwrap();
        let c = t.matmul(va, vb).unwrap();
        assert!(close(t.value(c), &common::matmul(&a, &b, m, k, n), 1e-12));
    }
}

#[test]
fn f32_tensor_ops_match_oracles() {
    let mut r = rng(2);
    let a = uniform(&mut r, 6, 1.0);
    let b = uniform(&mut r, 12, 1.0);
    let ta = Tensor::matrix(2, 3, a.iter().map(|&v| v as f32).collect()).unwrap();
    let tb = Tensor::matrix(3, 4, b.iter().map(|&v| v as f32).collect()).unwrap();
    let c = fastdoc_core::numcore::matmul(&ta, &tb).unwrap();
    let c64: Vec<f64> = c.data().iter().map(|&v| f64::from(v)).collect();
    assert!(close(&c64, &common::matmul(&a, &b, 2, 3, 4), 1e-6));

    let row = [0.3f32, -1.2, 2.0, 0.0];
    let row64: Vec<f64> = row.iter().map(|&v| f64::from(v)).collect();
    let s = fastdoc_core::numcore::softmax(&Tensor::matrix(1, 4, row.to_vec()).unwrap()).unwrap();
    let s64: Vec<f64> = s.data().iter().map(|&v| f64::from(v)).collect();
    assert!(close(&s64, &common::softmax(&row64), 1e-6));

    let ce = fastdoc_core::numcore::cross_entropy(&Tensor::matrix(1, 4, row.to_vec()).unwrap(), 2).unwrap();
    assert!((f64::from(ce) - common::cross_entropy(&row64, 2)).abs() < 1e-6);

    let gain = Tensor::matrix(1, 4, vec![1.0, 2.0, 0.5, -1.0]).unwrap();
    let bias = Tensor::matrix(1, 4, vec![0.1, 0.0, -0.2, 0.3]).unwrap();
    let ln = fastdoc_core::numcore::layer_norm(
        &Tensor::matrix(1, 4, row.to_vec()).unwrap(),
        &gain,
        &bias,
        LAYER_NORM_EPS as f32,
    )
    .unwrap();
    let oracle = common::layer_norm(
        &row64,
        &[1.0, 2.0, 0.5, -1.0],
        &[0.1, 0.0, -0.2, 0.3],
        LAYER_NORM_EPS,
    );
    let ln64: Vec<f64> = ln.data().iter().map(|&v| f64::from(v)).collect();
    assert!(close(&ln64, &oracle, 1e-5));
}

#[test]
fn uniform_two_class_cross_entropy_is_ln2() {
    let mut t: Tape<f64> = Tape::new();
    let x = t.constant(1, 2, vec![0.7, 0.7]).unwrap();
    let ce = t.cross_entropy(x, &[1]).unwrap();
    assert!((t.scalar(ce) - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn cross_entropy_out_of_range_target() {
    let mut t: Tape<f64> = Tape::new();
    let x = t.constant(1, 3, vec![0.0; 3]).unwrap();
    assert!(matches!(t.cross_entropy(x, &[3]), Err(Error::Index { .. })));
}

#[test]
fn shape_mismatch_is_reported() {
    let mut t: Tape<f64> = Tape::new();
    let a = t.constant(2, 3, vec![0.0; 6]).unwrap();
    let b = t.constant(2, 3, vec![0.0; 6]).unwrap();
    assert!(matches!(t.matmul(a, b), Err(Error::Dimension { .. })));
}

#[test]
fn elementwise_and_reduction_gradients() {
    let data = uniform(&mut rng(3), 12, 1.5);
    type Op = Box<dyn Fn(&mut Tape<f64>, Var) -> Var>;
    let cases: Vec<(&str, Op)> = vec![
        ("gelu", Box::new(|t, x| {
            let y = t.gelu(x);
            weighted_sum(t, y, 10)
        })),
        ("softmax", Box::new(|t, x| {
            let y = t.softmax(x).unwrap();
            weighted_sum(t, y, 11)
        })),
        ("mean_rows", Box::new(|t, x| {
            let y = t.mean_rows(x).unwrap();
            weighted_sum(t, y, 12)
        })),
        ("transpose", Box::new(|t, x| {
            let y = t.transpose(x);
            weighted_sum(t, y, 13)
        })),
        ("l2_norm", Box::new(|t, x| t.l2_norm(x))),
        ("cross_entropy", Box::new(|t, x| t.cross_entropy(x, &[0, 3, 2]).unwrap())),
        ("slices", Box::new(|t, x| {
            let a = t.slice_cols(x, 1, 2).unwrap();
            let b = t.slice_rows(x, 1, 2).unwrap();
            let sa = weighted_sum(t, a, 14);
            let sb = weighted_sum(t, b, 15);
            t.add(sa, sb).unwrap()
        })),
        ("self_matmul", Box::new(|t, x| {
            let xt = t.transpose(x);
            let y = t.matmul(x, xt).unwrap();
            weighted_sum(t, y, 16)
        })),
        ("gather", Box::new(|t, x| {
            let y = t.gather_rows(x, &[2, 0, 2]).unwrap();
            weighted_sum(t, y, 17)
        })),
    ];
    for (name, f) in cases {
        let err = check_unary(3, 4, data.clone(), f);
        assert!(err < 1e-7, "{name}: {err}");
    }
}

#[test]
fn layer_norm_gradient_through_gain_and_bias() {
    let data = uniform(&mut rng(4), 12, 1.5);
    let gain = uniform(&mut rng(5), 4, 1.0);
    let bias = uniform(&mut rng(6), 4, 1.0);
    let err = check_unary(3, 4, data, move |t, x| {
        let g = t.constant(1, 4, gain.clone()).unwrap();
        let b = t.constant(1, 4, bias.clone()).unwrap();
        let y = t.layer_norm(x, g, b, LAYER_NORM_EPS).unwrap();
        weighted_sum(t, y, 18)
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn frozen_parameters_receive_no_gradient() {
    let mut store = ParamStore::new();
    let a = store.add("a", "a.w", Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
    let b = store.add("b", "b.w", Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap()).unwrap();
    store.set_frozen("b", true).unwrap();
    let grads = {
        let mut t: Tape<f32> = Tape::with_params(&store);
        let va = t.param(a);
        let vb = t.param(b);
        let p = t.mul(va, vb).unwrap();
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        assert!(g.of(vb).is_none());
        g
    };
    grads.accumulate_into(&mut store).unwrap();
    assert_eq!(store.tensor(a).grad.as_deref(), Some(&[3.0f32, 4.0][..]));
    assert!(store.tensor(b).grad.is_none());
}

#[test]
fn adamw_first_step_matches_hand_update() {
    let mut store = ParamStore::new();
    let id = store.add("w", "w", Tensor::matrix(1, 2, vec![1.0, -2.0]).unwrap()).unwrap();
    store.accumulate_grad(id, &[0.5, -0.25]).unwrap();
    let cfg = AdamWConfig::default();
    let mut state = AdamWState::default();
    let lr = 0.1f64;
    adamw_step(&mut store, &mut state, lr as f32, &cfg).unwrap();
    // bias-corrected first step moves each weight by lr·sign(g) after decay
    for (i, (p0, g)) in [(1.0f64, 0.5f64), (-2.0, -0.25)].into_iter().enumerate() {
        let decayed = p0 * (1.0 - lr * 0.01);
        let expected = decayed - lr * g / (g.abs() + 1e-8);
        let got = f64::from(store.tensor(id).data()[i]);
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    }
    assert_eq!(state.step, 1);
}

#[test]
fn adamw_requires_gradients() {
    let mut store = ParamStore::new();
    store.add("w", "w", Tensor::matrix(1, 1, vec![1.0]).unwrap()).unwrap();
    let mut state = AdamWState::default();
    let err = adamw_step(&mut store, &mut state, 0.1, &AdamWConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_agrees_with_oracle(m in 1usize..6, k in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = uniform(&mut r, m * k, 3.0);
        let b = uniform(&mut r, k * n, 3.0);
        let mut t: Tape<f64> = Tape::new();
        let va = t.constant(m, k, a.clone()).unwrap();
        let vb = t.constant(k, n, b.clone()).unwrap();
        let c = t.matmul(va, vb).unwrap();
        prop_assert!(close(t.value(c), &common::matmul(&a, &b, m, k, n), 1e-12));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_are_shift_invariant(
        row in prop::collection::vec(-30.0f64..30.0, 1..10),
        shift in -50.0f64..50.0,
    ) {
        let n = row.len();
        let mut t: Tape<f64> = Tape::new();
        let x = t.constant(1, n, row.clone()).unwrap();
        let shifted = t.constant(1, n, row.iter().map(|v| v + shift).collect()).unwrap();
        let s = t.softmax(x).unwrap();
        let s2 = t.softmax(shifted).unwrap();
        prop_assert!((t.value(s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(close(t.value(s), t.value(s2), 1e-9));
        prop_assert!(close(t.value(s), &common::softmax(&row), 1e-12));
    }

    #[test]
    fn layer_norm_matches_oracle(row in prop::collection::vec(-5.0f64..5.0, 2..12)) {
        let n = row.len();
        let gain = vec![1.0; n];
        let bias = vec![0.0; n];
        let mut t: Tape<f64> = Tape::new();
        let x = t.constant(1, n, row.clone()).unwrap();
        let g = t.constant(1, n, gain.clone()).unwrap();
        let b = t.constant(1, n, bias.clone()).unwrap();
        let y = t.layer_norm(x, g, b, LAYER_NORM_EPS).unwrap();
        prop_assert!(close(t.value(y), &common::layer_norm(&row, &gain, &bias, LAYER_NORM_EPS), 1e-10));
    }
}
