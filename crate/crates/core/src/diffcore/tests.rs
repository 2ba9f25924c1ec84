use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Result;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Registers `inputs` as parameters, contracts the op output with a fixed
/// random tensor, and gradient-checks every input.
fn check_op<F>(inputs: &[&[usize]], op: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    for (i, shape) in inputs.iter().enumerate() {
        store
            .insert(format!("in{i}"), random(shape, &mut rng))
            .unwrap();
    }
    let probe_shape = {
        let tape = Tape::new();
        let vars: Vec<Var> = store.iter().map(|(id, _)| tape.param(&store, id)).collect();
        op(&tape, &vars).unwrap().shape()
    };
    let weights = random(&probe_shape, &mut rng);
    let objective = objective(|tape, s| {
        let vars: Vec<Var> = s.iter().map(|(id, _)| tape.param(s, id)).collect();
        let out = op(tape, &vars)?;
        let w = tape.constant(weights.clone());
        Ok(out.mul(w)?.sum())
    });
    let report = check_gradients(&store, objective, None, &GradCheckConfig::default()).unwrap();
    for r in report {
        assert!(
            r.max_rel_err < 1e-4,
            "{} rel err {:e} ({} vs {})",
            r.name,
            r.max_rel_err,
            r.analytic,
            r.numeric
        );
    }
}

#[test]
fn grad_matmul() {
    check_op(&[&[3, 4], &[4, 2]], |_, v| v[0].matmul(v[1]));
}

#[test]
fn grad_elementwise_binary() {
    check_op(&[&[2, 3], &[2, 3]], |_, v| v[0].add(v[1]));
    check_op(&[&[2, 3], &[2, 3]], |_, v| v[0].sub(v[1]));
    check_op(&[&[2, 3], &[2, 3]], |_, v| v[0].mul(v[1]));
}

#[test]
fn grad_broadcasts() {
    check_op(&[&[3, 4], &[4]], |_, v| v[0].add_bias(v[1]));
    check_op(&[&[3, 4], &[3, 1]], |_, v| v[0].mul_col(v[1]));
}

#[test]
fn grad_activations() {
    check_op(&[&[3, 3]], |_, v| Ok(v[0].tanh()));
    check_op(&[&[3, 3]], |_, v| Ok(v[0].sigmoid()));
    check_op(&[&[3, 3]], |_, v| Ok(v[0].relu()));
    check_op(&[&[3, 3]], |_, v| Ok(v[0].leaky_relu(0.01)));
    check_op(&[&[3, 3]], |_, v| Ok(v[0].exp()));
    check_op(&[&[3, 3]], |_, v| Ok(v[0].square()));
    check_op(&[&[3, 3]], |_, v| Ok(v[0].scale(-2.5)));
    // keep the argument of recip/ln away from zero
    check_op(&[&[3, 3]], |_, v| Ok(v[0].exp().recip()));
    check_op(&[&[3, 3]], |_, v| Ok(v[0].exp().ln_clamped()));
}

#[test]
fn grad_softmax_both_axes() {
    check_op(&[&[3, 4]], |_, v| v[0].softmax(1));
    check_op(&[&[3, 4]], |_, v| v[0].softmax(0));
}

#[test]
fn grad_structural() {
    check_op(&[&[2, 3], &[2, 1]], |t, v| t.concat(&[v[0], v[1]], 1));
    check_op(&[&[2, 3], &[1, 3]], |t, v| t.concat(&[v[0], v[1]], 0));
    check_op(&[&[4, 3]], |_, v| v[0].slice(0, 1, 2));
    check_op(&[&[4, 3]], |_, v| v[0].slice(1, 1, 2));
    check_op(&[&[2, 3]], |_, v| v[0].transpose());
    check_op(&[&[2, 3]], |_, v| Ok(v[0].sum()));
    check_op(&[&[2, 3]], |_, v| Ok(v[0].mean()));
    check_op(&[&[2, 3]], |_, v| v[0].sum_axis(0));
    check_op(&[&[2, 3]], |_, v| v[0].sum_axis(1));
    check_op(&[&[2, 3]], |_, v| v[0].reshape(&[3, 2]));
}

#[test]
fn grad_index_ops() {
    check_op(&[&[3, 2]], |_, v| v[0].gather_rows(vec![2, 0, 2]));
    check_op(&[&[4, 2]], |_, v| {
        v[0].scatter_add_rows(vec![1, 1, 0, 2], 3)
    });
    check_op(&[&[3, 3]], |_, v| {
        v[0].gather_elems(vec![(0, 1), (2, 2), (0, 1)])
    });
    check_op(&[&[3, 1]], |t, v| {
        t.scatter_dense(v[0], vec![(0, 0), (1, 2), (2, 1)], [3, 3])
    });
}

#[test]
fn grad_dropout_with_fixed_mask() {
    check_op(&[&[4, 4]], |_, v| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        v[0].dropout(0.5, true, &mut rng)
    });
}

#[test]
fn elementwise_values() {
    let tape = Tape::new();
    let x = tape.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap());
    assert_eq!(x.relu().value().data(), &[0.0, 0.0, 2.0]);
    let y = tape.constant(Tensor::vector(vec![-1.0]).unwrap());
    assert_eq!(y.leaky_relu(0.01).value().data(), &[-0.01]);
    let z = tape.constant(Tensor::vector(vec![0.0]).unwrap());
    assert_eq!(z.tanh().value().data(), &[0.0]);
}

#[test]
fn backward_hand_case() {
    // loss = sum(W x) with x = [1, 2]ᵀ; every row of W gets gradient [1, 2].
    let mut store = ParamStore::new();
    let w = store
        .insert(
            "w",
            Tensor::from_rows(&[vec![0.3, -0.2], vec![1.0, 4.0]]).unwrap(),
        )
        .unwrap();
    let unused = store.insert("unused", Tensor::full(&[2], 5.0)).unwrap();
    let tape = Tape::new();
    let x = tape.constant(Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
    let loss = tape.param(&store, w).matmul(x).unwrap().sum();
    tape.backward(loss, &mut store).unwrap();
    assert_eq!(store.get(w).grad().data(), &[1.0, 2.0, 1.0, 2.0]);
    assert_eq!(store.get(unused).grad().data(), &[0.0, 0.0]);
}

#[test]
fn backward_accumulates_across_uses_and_rejects_non_scalar() {
    let mut store = ParamStore::new();
    let a = store.insert("a", Tensor::scalar(3.0)).unwrap();
    let tape = Tape::new();
    let p = tape.param(&store, a);
    let loss = p.mul(p).unwrap().add(p).unwrap(); // a² + a
    tape.backward(loss, &mut store).unwrap();
    assert_eq!(store.get(a).grad().item(), 7.0);

    let tape = Tape::new();
    let v = tape.constant(Tensor::full(&[2], 1.0));
    assert!(tape.backward(v, &mut store).is_err());
}

#[test]
fn dropout_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let tape = Tape::new();
    let x = tape.constant(Tensor::full(&[4], 2.0));
    assert_eq!(
        x.dropout(0.0, true, &mut rng).unwrap().value().data(),
        &[2.0; 4]
    );
    assert_eq!(
        x.dropout(0.5, false, &mut rng).unwrap().value().data(),
        &[2.0; 4]
    );
    assert!(x.dropout(1.0, true, &mut rng).is_err());
    assert!(x.dropout(-0.1, true, &mut rng).is_err());

    let ones = tape.constant(Tensor::full(&[100_000], 1.0));
    let mean = ones.dropout(0.5, true, &mut rng).unwrap().value().sum() / 100_000.0;
    assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
}

#[test]
fn dropout_masks_are_seed_deterministic() {
    let tape = Tape::new();
    let x = tape.constant(Tensor::full(&[64], 1.0));
    let a = x
        .dropout(0.5, true, &mut ChaCha8Rng::seed_from_u64(9))
        .unwrap()
        .value();
    let b = x
        .dropout(0.5, true, &mut ChaCha8Rng::seed_from_u64(9))
        .unwrap()
        .value();
    assert_eq!(a.data(), b.data());
}

#[test]
fn fault_hook_breaks_gradient_check() {
    let mut store = ParamStore::new();
    store
        .insert("x", Tensor::from_rows(&[vec![0.3, -0.7]]).unwrap())
        .unwrap();
    let objective = objective(|t, s| Ok(t.param_named(s, "x")?.tanh().sum()));
    let clean = check_gradients(&store, objective, None, &GradCheckConfig::default()).unwrap();
    assert!(clean[0].max_rel_err < 1e-6);
    let cfg = GradCheckConfig {
        fault: Some(OpKind::Tanh),
        ..GradCheckConfig::default()
    };
    let broken = check_gradients(&store, objective, None, &cfg).unwrap();
    assert!(broken[0].max_rel_err > 0.1);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_are_permutation_equivariant(
        rows in prop::collection::vec(prop::collection::vec(-30.0f64..30.0, 5), 1..4),
        shift in 0usize..5,
    ) {
        let t = Tensor::from_rows(&rows).unwrap();
        let s = t.softmax(1).unwrap();
        for r in 0..s.rows() {
            let total: f64 = s.row(r).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(s.row(r).iter().all(|&v| v >= 0.0));
        }
        let rotated: Vec<Vec<f64>> = rows.iter().map(|r| {
            let mut r = r.clone();
            r.rotate_left(shift);
            r
        }).collect();
        let sr = Tensor::from_rows(&rotated).unwrap().softmax(1).unwrap();
        for r in 0..s.rows() {
            let mut expect = s.row(r).to_vec();
            expect.rotate_left(shift);
            for (a, b) in sr.row(r).iter().zip(&expect) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_then_split_is_identity(
        widths in prop::collection::vec(1usize..4, 1..4),
        rows in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts: Vec<Tensor> = widths.iter().map(|&w| random(&[rows, w], &mut rng)).collect();
        let refs: Vec<&Tensor> = parts.iter().collect();
        let cat = Tensor::concat(&refs, 1).unwrap();
        let back = cat.split(1, &widths).unwrap();
        prop_assert_eq!(back, parts);
    }
}
