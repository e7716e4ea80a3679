use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

#[test]
fn identity_tape_returns_input() {
    let mut tape = Tape::new();
    let x = tape.input("x", &[3]);
    tape.mark_output("y", x);
    let xv = Tensor::vector(vec![1.0, 2.0, 3.0]);
    let b = Bindings::new().with("x", &xv);
    let out = tape.eval(&b).unwrap().outputs();
    assert_eq!(out["y"].data(), &[1.0, 2.0, 3.0]);
}

fn matmul_tape() -> (Tape, NodeId) {
    let mut tape = Tape::new();
    let a = tape.input("a", &[2, 2]);
    let b = tape.input("b", &[2, 2]);
    let c = tape.matmul(a, b).unwrap();
    tape.mark_output("c", c);
    (tape, c)
}

#[test]
fn matmul_by_identity() {
    let (tape, _) = matmul_tape();
    let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let b = Bindings::new().with("a", &a).with("b", &eye);
    assert_eq!(tape.eval(&b).unwrap().output("c").unwrap(), &a);
}

#[test]
fn matmul_matches_hand_multiplication() {
    let (tape, _) = matmul_tape();
    let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let m = Tensor::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
    let b = Bindings::new().with("a", &a).with("b", &m);
    // 1·5+2·7, 1·6+2·8, 3·5+4·7, 3·6+4·8
    assert_eq!(tape.eval(&b).unwrap().output("c").unwrap().data(), &[19.0, 22.0, 43.0, 50.0]);
}

#[test]
fn eval_is_bit_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut tape = Tape::new();
    let x = tape.input("x", &[5, 8]);
    let w = tape.input("w", &[8, 8]);
    let h = tape.matmul(x, w).unwrap();
    let s = tape.silu(h).unwrap();
    let p = tape.softmax(s).unwrap();
    tape.mark_output("p", p);
    let (xv, wv) = (random(&mut rng, &[5, 8], 1.0), random(&mut rng, &[8, 8], 1.0));
    let b = Bindings::new().with("x", &xv).with("w", &wv);
    let first = tape.eval(&b).unwrap().outputs();
    let second = tape.eval(&b).unwrap().outputs();
    assert!(first["p"].bit_eq(&second["p"]));
}

#[test]
fn shape_mismatch_names_the_node() {
    let mut tape = Tape::new();
    let a = tape.input("a", &[2, 3]);
    let b = tape.input("b", &[2, 3]);
    let err = tape.matmul(a, b).unwrap_err();
    assert!(matches!(err, Error::Shape { node: 2, op: "matmul", .. }), "{err}");

    let c = tape.add(a, b).unwrap();
    tape.mark_output("c", c);
    let wrong = Tensor::zeros(&[3, 2]);
    let right = Tensor::zeros(&[2, 3]);
    let bind = Bindings::new().with("a", &wrong).with("b", &right);
    assert!(matches!(tape.eval(&bind), Err(Error::Shape { node: 0, .. })));
}

#[test]
fn unbound_input_is_reported() {
    let mut tape = Tape::new();
    tape.input("missing", &[1]);
    assert!(matches!(tape.eval(&Bindings::new()), Err(Error::UnboundInput(n)) if n == "missing"));
}

#[test]
fn non_finite_intermediate_names_the_op() {
    let mut tape = Tape::new();
    let a = tape.input("a", &[1]);
    let sq = tape.mul(a, a).unwrap();
    tape.mark_output("sq", sq);
    let huge = Tensor::vector(vec![1e200]);
    let err = tape.eval(&Bindings::new().with("a", &huge)).err().unwrap();
    assert!(matches!(err, Error::NonFinite { node: 1, op: "mul" }), "{err}");
}

#[test]
fn backward_of_linear_map() {
    let mut tape = Tape::new();
    let x = tape.input("x", &[1]);
    let three = tape.constant(Tensor::vector(vec![3.0]));
    let y = tape.mul(x, three).unwrap();
    let xv = Tensor::vector(vec![2.0]);
    let b = Bindings::new().with("x", &xv);
    let ev = tape.eval(&b).unwrap();
    let g = ev.backward(y, 1.0, &[x]).unwrap();
    assert_eq!(g[0].data(), &[3.0]);
}

#[test]
fn softmax_sum_has_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.input("x", &[1, 6]);
    let p = tape.softmax(x).unwrap();
    let y = tape.sum_all(p).unwrap();
    let xv = Tensor::new(vec![1, 6], vec![0.3, -1.2, 2.5, 0.0, 4.0, -0.7]).unwrap();
    let b = Bindings::new().with("x", &xv);
    let ev = tape.eval(&b).unwrap();
    let g = ev.backward(y, 1.0, &[x]).unwrap();
    assert!(g[0].data().iter().all(|v| v.abs() < 1e-15), "{:?}", g[0]);
}

#[test]
fn product_rule() {
    let mut tape = Tape::new();
    let x0 = tape.input("x0", &[1]);
    let x1 = tape.input("x1", &[1]);
    let y = tape.mul(x0, x1).unwrap();
    let (a, b) = (Tensor::vector(vec![2.0]), Tensor::vector(vec![5.0]));
    let bind = Bindings::new().with("x0", &a).with("x1", &b);
    let ev = tape.eval(&bind).unwrap();
    let g = ev.backward(y, 1.0, &[x0, x1]).unwrap();
    assert_eq!((g[0].data()[0], g[1].data()[0]), (5.0, 2.0));
}

#[test]
fn backward_errors() {
    let mut tape = Tape::new();
    let x = tape.input("x", &[2]);
    let y = tape.mul(x, x).unwrap();
    let xv = Tensor::vector(vec![1.0, 2.0]);
    let b = Bindings::new().with("x", &xv);
    let ev = tape.eval(&b).unwrap();
    assert!(matches!(ev.backward(y, 1.0, &[x]), Err(Error::NonScalarSeed { .. })));
    assert!(matches!(ev.backward(x, 1.0, &[NodeId(99)]), Err(Error::UnknownNode(99))));
}

#[test]
fn reverse_mode_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tape = Tape::new();
    let x = tape.input("x", &[3, 4]);
    let w = tape.input("w", &[4, 4]);
    let h = tape.matmul(x, w).unwrap();
    let a = tape.silu(h).unwrap();
    let y1 = tape.sum_all(a).unwrap();
    let p = tape.softmax(h).unwrap();
    let sq = tape.mul(p, h).unwrap();
    let y2 = tape.sum_all(sq).unwrap();
    let y = tape.add(y1, y2).unwrap();
    let (xv, wv) = (random(&mut rng, &[3, 4], 1.0), random(&mut rng, &[4, 4], 1.0));
    let b = Bindings::new().with("x", &xv).with("w", &wv);
    let ev = tape.eval(&b).unwrap();
    let g = ev.backward(y, 1.0, &[x, w]).unwrap();
    let g1 = ev.backward(y1, 1.0, &[x, w]).unwrap();
    let g2 = ev.backward(y2, 1.0, &[x, w]).unwrap();
    for k in 0..2 {
        for ((t, a), b) in g[k].data().iter().zip(g1[k].data()).zip(g2[k].data()) {
            assert!((t - (a + b)).abs() <= 1e-12);
        }
    }
}

#[test]
fn grad_check_of_linear_map_is_exact() {
    // Power-of-two step and small integers keep every operation exact.
    let mut tape = Tape::new();
    let x = tape.input("x", &[1, 3]);
    let w = tape.constant(Tensor::from_rows(&[vec![1.0], vec![3.0], vec![-2.0]]).unwrap());
    let y = tape.matmul(x, w).unwrap();
    let xv = Tensor::new(vec![1, 3], vec![2.0, -1.0, 4.0]).unwrap();
    let b = Bindings::new().with("x", &xv);
    let check = grad_check(&tape, &b, y, x, 2f64.powi(-20)).unwrap();
    assert_eq!(check.max_rel_error, 0.0);
    assert_eq!(check.analytic, vec![1.0, 3.0, -2.0]);
}

#[test]
fn grad_check_rejects_degenerate_step() {
    let mut tape = Tape::new();
    let x = tape.input("x", &[1]);
    let y = tape.mul(x, x).unwrap();
    let xv = Tensor::vector(vec![1.0]);
    let b = Bindings::new().with("x", &xv);
    assert!(matches!(grad_check(&tape, &b, y, x, 0.0), Err(Error::Precondition(_))));
    assert!(matches!(grad_check(&tape, &b, y, x, 1e-2), Err(Error::Precondition(_))));
}

/// Builds `sum(c ∘ f(...))` with a fixed random weighting `c`, so the scalar has
/// a non-trivial gradient through every output element.
fn weighted_sum(tape: &mut Tape, rng: &mut ChaCha8Rng, node: NodeId) -> NodeId {
    let shape = tape.shape(node).to_vec();
    let c = tape.constant(random(rng, &shape, 1.0));
    let prod = tape.mul(node, c).unwrap();
    tape.sum_all(prod).unwrap()
}

fn assert_primitive_gradients(build: impl Fn(&mut Tape, &mut ChaCha8Rng) -> (NodeId, Vec<(String, Tensor)>)) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut tape = Tape::new();
    let (y, inputs) = build(&mut tape, &mut rng);
    let mut b = Bindings::new();
    for (name, t) in &inputs {
        b.bind(name.clone(), t);
    }
    for i in 0..tape.len() {
        let id = NodeId(i);
        if matches!(tape.op(id), Op::Input { .. }) {
            let check = grad_check(&tape, &b, y, id, 1e-6).unwrap();
            assert!(
                check.max_rel_error < 1e-5,
                "node {id}: rel error {} at {} (analytic {}, numeric {})",
                check.max_rel_error,
                check.worst_index,
                check.analytic[check.worst_index],
                check.numeric[check.worst_index]
            );
        }
    }
}

#[test]
fn primitive_gradients_match_finite_differences() {
    assert_primitive_gradients(|tape, rng| {
        let a = tape.input("a", &[3, 4]);
        let b = tape.input("b", &[4, 5]);
        let c = tape.input("c", &[3, 5]);
        let m = tape.matmul(a, b).unwrap();
        let s = tape.add(m, c).unwrap();
        let p = tape.mul(s, c).unwrap();
        let y = weighted_sum(tape, rng, p);
        let inputs = vec![
            ("a".into(), random(rng, &[3, 4], 1.0)),
            ("b".into(), random(rng, &[4, 5], 1.0)),
            ("c".into(), random(rng, &[3, 5], 1.0)),
        ];
        (y, inputs)
    });
}

#[test]
fn nonlinear_primitive_gradients_match_finite_differences() {
    assert_primitive_gradients(|tape, rng| {
        let x = tape.input("x", &[4, 6]);
        let g = tape.input("g", &[6]);
        let n = tape.rms_norm(x, g, 1e-5).unwrap();
        let s = tape.silu(n).unwrap();
        let p = tape.softmax(s).unwrap();
        let y = weighted_sum(tape, rng, p);
        let mut gain = random(rng, &[6], 0.5);
        gain.data_mut().iter_mut().for_each(|v| *v += 1.0);
        (y, vec![("x".into(), random(rng, &[4, 6], 1.5)), ("g".into(), gain)])
    });
}

#[test]
fn gather_attention_and_cross_entropy_gradients() {
    assert_primitive_gradients(|tape, rng| {
        let table = tape.input("table", &[7, 8]);
        let h = tape.gather(table, vec![3, 1, 3, 6, 0]).unwrap();
        let wq = tape.input("wq", &[8, 8]);
        let wk = tape.input("wk", &[8, 8]);
        let q = tape.matmul(h, wq).unwrap();
        let k = tape.matmul(h, wk).unwrap();
        let z = tape.attention(q, k, h, 2).unwrap();
        let wu = tape.input("wu", &[8, 5]);
        let logits = tape.matmul(z, wu).unwrap();
        let y = tape.cross_entropy(logits, vec![Some(1), None, Some(4), Some(0), Some(2)]).unwrap();
        let inputs = vec![
            ("table".into(), random(rng, &[7, 8], 1.0)),
            ("wq".into(), random(rng, &[8, 8], 1.0)),
            ("wk".into(), random(rng, &[8, 8], 1.0)),
            ("wu".into(), random(rng, &[8, 5], 1.0)),
        ];
        (y, inputs)
    });
}

#[test]
fn replay_reproduces_recorded_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tape = Tape::new();
    let x = tape.input("x", &[3, 4]);
    let w = tape.input("w", &[4, 4]);
    let h = tape.matmul(x, w).unwrap();
    let s = tape.silu(h).unwrap();
    let y = tape.sum_all(s).unwrap();
    let (xv, wv) = (random(&mut rng, &[3, 4], 1.0), random(&mut rng, &[4, 4], 1.0));
    let b = Bindings::new().with("x", &xv).with("w", &wv);
    let ev = tape.eval(&b).unwrap();
    let same = ev.replay_with(h, ev.value(h), y).unwrap();
    assert!(same.bit_eq(ev.value(y)));
}

#[test]
fn hooks_edit_values_before_downstream_reads() {
    let mut tape = Tape::new();
    let x = tape.input("x", &[1, 2]);
    let s = tape.silu(x).unwrap();
    let y = tape.sum_all(s).unwrap();
    let xv = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
    let b = Bindings::new().with("x", &xv);
    let ev = tape
        .eval_hooked(&b, &mut |id, v| {
            if id == s {
                v.data_mut()[1] = 10.0;
            }
        })
        .unwrap();
    assert_eq!(ev.value(y).item(), Some(10.0));
}
