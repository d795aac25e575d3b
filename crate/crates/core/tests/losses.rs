mod common;

use common::{rng, uniform};
use fastdoc_core::datapipe::HierarchyLabels;
use fastdoc_core::error::Error;
use fastdoc_core::losses::{
    hierarchical_loss, hierarchical_loss_on, total_loss, triplet_loss, triplet_loss_on, LossFlags,
    TripletBatch, MARGIN,
};
use fastdoc_core::numcore::{Tape, Var};
use rand::seq::SliceRandom;
use rand::Rng;

fn f32s(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn f64s(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

#[test]
fn triplet_anchor_values() {
    assert_eq!(MARGIN, 1.0);
    assert_eq!(triplet_loss(&[0.0, 0.0], &[0.0, 0.0], &[2.0, 0.0]).unwrap(), 0.0);
    assert_eq!(triplet_loss(&[0.5, -1.0], &[0.5, -1.0], &[0.5, -1.0]).unwrap(), 1.0);
    assert_eq!(triplet_loss(&[0.0, 0.0], &[3.0, 0.0], &[1.0, 0.0]).unwrap(), 3.0);
    assert!(matches!(triplet_loss(&[0.0], &[0.0, 1.0], &[0.0]), Err(Error::Dimension { .. })));
}

#[test]
fn triplet_matches_oracle_on_random_cases() {
    let mut r = rng(100);
    for case in 0..100 {
        let d = r.random_range(1..10);
        let scale = if case % 3 == 0 { 0.3 } else { 2.0 };
        let a = f32s(&uniform(&mut r, d, scale));
        let p = f32s(&uniform(&mut r, d, scale));
        let n = f32s(&uniform(&mut r, d, scale));
        let got = triplet_loss(&a, &p, &n).unwrap();
        let want = common::triplet(&f64s(&a), &f64s(&p), &f64s(&n));
        assert!((got - want).abs() < 1e-6, "case {case}: {got} vs {want}");
        assert!(got >= 0.0);
        let zero = common::euclid(&f64s(&a), &f64s(&p)) + 1.0 <= common::euclid(&f64s(&a), &f64s(&n));
        assert_eq!(got == 0.0, zero);
    }
}

#[test]
fn batch_mean_is_permutation_invariant() {
    let mut r = rng(101);
    let mk = |r: &mut rand_chacha::ChaCha8Rng| (0..16).map(|_| f32s(&uniform(r, 6, 1.0))).collect::<Vec<_>>();
    let batch = TripletBatch {
        anchors: mk(&mut r),
        positives: mk(&mut r),
        negatives: mk(&mut r),
    };
    let mut order: Vec<usize> = (0..16).collect();
    order.shuffle(&mut r);
    let pick = |v: &Vec<Vec<f32>>| order.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
    let shuffled = TripletBatch {
        anchors: pick(&batch.anchors),
        positives: pick(&batch.positives),
        negatives: pick(&batch.negatives),
    };
    let mean = (0..16)
        .map(|i| common::triplet(&f64s(&batch.anchors[i]), &f64s(&batch.positives[i]), &f64s(&batch.negatives[i])))
        .sum::<f64>()
        / 16.0;
    assert!((batch.loss().unwrap() - mean).abs() < 1e-6);
    assert!((batch.loss().unwrap() - shuffled.loss().unwrap()).abs() < 1e-6);
}

/// Random orthogonal matrix by Gram-Schmidt on a random square matrix.
fn random_rotation(r: &mut rand_chacha::ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < d {
        let mut v = uniform(r, d, 1.0);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

#[test]
fn triplet_is_invariant_to_rotation_and_translation() {
    let mut r = rng(102);
    for _ in 0..50 {
        let d = r.random_range(2..8);
        let q = random_rotation(&mut r, d);
        let shift = uniform(&mut r, d, 3.0);
        let v: Vec<Vec<f64>> = (0..3).map(|_| uniform(&mut r, d, 1.5)).collect();
        let moved: Vec<Vec<f32>> = v
            .iter()
            .map(|x| {
                (0..d)
                    .map(|i| (q[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + shift[i]) as f32)
                    .collect()
            })
            .collect();
        let base = triplet_loss(&f32s(&v[0]), &f32s(&v[1]), &f32s(&v[2])).unwrap();
        let after = triplet_loss(&moved[0], &moved[1], &moved[2]).unwrap();
        assert!((base - after).abs() < 1e-5, "{base} vs {after}");
    }
}

fn oracle_hier(logits: &[Vec<Vec<f32>>], targets: &[HierarchyLabels]) -> f64 {
    let mut total = 0.0;
    for (i, doc) in logits.iter().enumerate() {
        for (j, row) in doc.iter().enumerate() {
            total += common::cross_entropy(&f64s(row), targets[i].levels[j]);
        }
    }
    total
}

#[test]
fn hierarchical_anchor_values() {
    let one = hierarchical_loss(&[vec![vec![0.0, 0.0]]], &[HierarchyLabels { levels: vec![0] }]).unwrap();
    assert!((one - std::f64::consts::LN_2).abs() < 1e-12);

    let doc = vec![vec![0.3f32, -0.2, 1.0], vec![2.0, 0.0]];
    let lab = HierarchyLabels { levels: vec![2, 1] };
    let single = hierarchical_loss(std::slice::from_ref(&doc), std::slice::from_ref(&lab)).unwrap();
    let triple = hierarchical_loss(&[doc.clone(), doc.clone(), doc], &[lab.clone(), lab.clone(), lab]).unwrap();
    assert!((triple - 3.0 * single).abs() < 1e-12);

    let confident = hierarchical_loss(
        &[vec![vec![10.0, 0.0], vec![10.0, 0.0]]],
        &[HierarchyLabels { levels: vec![0, 0] }],
    )
    .unwrap();
    let want = 2.0 * (1.0 + (-10.0f64).exp()).ln();
    assert!((confident - want).abs() < 1e-12);
    assert!((confident - 9.08e-5).abs() < 1e-7);

    let err = hierarchical_loss(&[vec![vec![0.0, 0.0]]], &[HierarchyLabels { levels: vec![2] }]);
    assert!(matches!(err, Err(Error::Index { .. })));
}

#[test]
fn hierarchical_matches_oracle_on_random_cases() {
    let mut r = rng(103);
    for case in 0..100 {
        let h = r.random_range(1..5);
        let widths: Vec<usize> = (0..h).map(|_| r.random_range(2..7)).collect();
        let logits: Vec<Vec<Vec<f32>>> = (0..3)
            .map(|_| widths.iter().map(|&w| f32s(&uniform(&mut r, w, 4.0))).collect())
            .collect();
        let targets: Vec<HierarchyLabels> = (0..3)
            .map(|_| HierarchyLabels {
                levels: widths.iter().map(|&w| r.random_range(0..w)).collect(),
            })
            .collect();
        let got = hierarchical_loss(&logits, &targets).unwrap();
        let want = oracle_hier(&logits, &targets);
        assert!((got - want).abs() < 1e-6, "case {case}: {got} vs {want}");

        let mut tape: Tape<f64> = Tape::new();
        let vars: Vec<Vec<Var>> = logits
            .iter()
            .map(|doc| doc.iter().map(|row| tape.constant_f32(1, row.len(), row).unwrap()).collect())
            .collect();
        let refs: Vec<&HierarchyLabels> = targets.iter().collect();
        let on = hierarchical_loss_on(&mut tape, &vars, &refs).unwrap();
        assert!((tape.scalar(on) - want).abs() < 1e-6);
    }
}

#[test]
fn total_loss_adds_and_rejects_non_finite() {
    assert_eq!(total_loss(0.0, 0.0).unwrap(), 0.0);
    assert_eq!(total_loss(1.0, 0.0).unwrap(), 1.0);
    assert!((total_loss(0.7, 2.1).unwrap() - 2.8).abs() < 1e-12);
    assert!(matches!(total_loss(f64::NAN, 0.0), Err(Error::Numeric(_))));
    assert!(matches!(total_loss(0.0, f64::INFINITY), Err(Error::Numeric(_))));
}

#[test]
fn loss_flags_parse() {
    assert_eq!("both".parse::<LossFlags>().unwrap(), LossFlags::Both);
    assert!(!"triplet".parse::<LossFlags>().unwrap().hier());
    assert!(!"hier".parse::<LossFlags>().unwrap().triplet());
    assert!(matches!("quad".parse::<LossFlags>(), Err(Error::Config(_))));
}

#[test]
fn total_loss_gradients_match_finite_differences() {
    let mut r = rng(104);
    let d = 5;
    let widths = [3usize, 4];
    let heads: Vec<(Vec<f64>, Vec<f64>)> = widths
        .iter()
        .map(|&w| (uniform(&mut r, d * w, 1.0), uniform(&mut r, w, 0.5)))
        .collect();
    let targets = [
        HierarchyLabels { levels: vec![0, 3] },
        HierarchyLabels { levels: vec![0, 1] },
        HierarchyLabels { levels: vec![2, 2] },
    ];
    let build = |tape: &mut Tape<f64>, docs: &[Vec<f64>]| -> (Vec<Var>, Var) {
        let vs: Vec<Var> = docs.iter().map(|x| tape.input(1, d, x.clone()).unwrap()).collect();
        let lt = triplet_loss_on(tape, vs[0], vs[1], vs[2]).unwrap();
        let logits: Vec<Vec<Var>> = vs
            .iter()
            .map(|&v| {
                heads
                    .iter()
                    .zip(widths)
                    .map(|((w, b), wd)| {
                        let wv = tape.constant(d, wd, w.clone()).unwrap();
                        let bv = tape.constant(1, wd, b.clone()).unwrap();
                        let xw = tape.matmul(v, wv).unwrap();
                        tape.add_row(xw, bv).unwrap()
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&HierarchyLabels> = targets.iter().collect();
        let lh = hierarchical_loss_on(tape, &logits, &refs).unwrap();
        (vs, tape.add(lt, lh).unwrap())
    };
    let docs: Vec<Vec<f64>> = (0..3).map(|_| uniform(&mut r, d, 1.0)).collect();
    let mut tape: Tape<f64> = Tape::new();
    let (vs, loss) = build(&mut tape, &docs);
    let base = tape.scalar(loss);
    assert!(base > 0.0);
    let grads = tape.backward(loss).unwrap();
    let h = 1e-6;
    for (i, v) in vs.iter().enumerate() {
        let g = grads.of(*v).unwrap().to_vec();
        for k in 0..d {
            let eval = |delta: f64| {
                let mut p = docs.clone();
                p[i][k] += delta;
                let mut t: Tape<f64> = Tape::new();
                let (_, l) = build(&mut t, &p);
                t.scalar(l)
            };
            let num = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (num - g[k]).abs() / num.abs().max(g[k].abs()).max(1e-8);
            assert!(rel < 1e-4, "doc {i} coord {k}: {num} vs {}", g[k]);
        }
    }
}
