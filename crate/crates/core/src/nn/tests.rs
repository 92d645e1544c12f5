use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{check_inputs, check_params};
use super::*;

fn random(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// `sum(x R)` for a fixed random column `R`: a scalar that depends on every
/// output entry with a distinct weight.
fn project(tape: &mut Tape<f64>, x: Var, seed: u64) -> Var {
    let r = tape.constant(random(tape.value(x).cols(), 1, seed));
    let y = tape.matmul(x, r).unwrap();
    tape.sum(y)
}

fn assert_all_below(reports: &[gradcheck::GradReport], tol: f64) {
    for r in reports {
        if r.name.ends_with(".k.bias") {
            // a shared key offset shifts every score in a row equally
            assert!(r.analytic_norm < 1e-12 && r.numeric_norm < 1e-8, "{r:?}");
            continue;
        }
        assert!(r.rel_error < tol, "{}: {:e}", r.name, r.rel_error);
        assert!(r.analytic_norm > 0.0, "{} received no gradient", r.name);
    }
}

#[test]
fn linear_identity_and_scalar_affine() {
    let mut store = ParameterStore::<f64>::new(0);
    store.insert("w", Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
    store.insert("b", Tensor::zeros(&[2])).unwrap();
    let lin = Linear {
        weight: "w".into(),
        bias: "b".into(),
        fan_in: 2,
        fan_out: 2,
    };
    let mut tape = Tape::new();
    let x = tape.constant(random(3, 2, 1));
    let y = lin.forward(&mut tape, &store, x).unwrap();
    assert_eq!(tape.value(y).data(), tape.value(x).data());

    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
    let w = tape.constant(Tensor::matrix(1, 1, vec![3.0]).unwrap());
    let b = tape.constant(Tensor::new(vec![1], vec![1.0]).unwrap());
    let y = tape.linear(x, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[7.0]);
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(random(4, 3, 0));
    let b = tape.constant(random(2, 2, 0));
    let err = tape.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("[4, 3]") && err.contains("[2, 2]"), "{err}");
}

#[test]
fn linear_weight_gradient() {
    let mut store = ParameterStore::<f64>::new(5);
    let lin = Linear::register(&mut store, "lin", 3, 2).unwrap();
    let x = random(4, 3, 11);
    let reports = check_params(&store, 1e-5, |tape, store| {
        let xv = tape.constant(x.clone());
        let y = lin.forward(tape, store, xv)?;
        Ok(tape.sum(y))
    })
    .unwrap();
    assert!(reports[0].rel_error < 1e-6, "{:?}", reports);
    assert!(reports[1].rel_error < 1e-6, "{:?}", reports);
}

#[test]
fn every_op_passes_finite_differences() {
    let inputs = [random(5, 4, 1), random(4, 3, 2), random(5, 3, 3), random(1, 3, 4)];
    // matmul, add_bias, add, scale, relu
    let r = check_inputs(&inputs, 1e-5, |t, v| {
        let m = t.matmul(v[0], v[1])?;
        let m = t.add_bias(m, v[3])?;
        let s = t.add(m, v[2])?;
        let s = t.scale(s, 0.7);
        let s = t.relu(s);
        Ok(project(t, s, 9))
    })
    .unwrap();
    assert_all_below(&r, 1e-4);

    // concat, slice, gather (with repeats), mean/max pooling
    let r = check_inputs(&inputs[..1], 1e-5, |t, v| {
        let a = t.slice_cols(v[0], 1, 2)?;
        let c = t.concat_cols(&[v[0], a])?;
        let g = t.gather_rows(c, &[4, 0, 0, 2, 3, 1])?;
        let mean = t.pool_rows(g, 2, PoolMode::Mean)?;
        let max = t.pool_rows(g, 3, PoolMode::Max)?;
        let p1 = project(t, mean, 1);
        let p2 = project(t, max, 2);
        t.add(p1, p2)
    })
    .unwrap();
    assert_all_below(&r, 1e-4);

    // layer norm with affine
    let gamma = random(1, 4, 7);
    let beta = random(1, 4, 8);
    let r = check_inputs(&[inputs[0].clone(), gamma, beta], 1e-5, |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2], 1e-9)?;
        Ok(project(t, y, 3))
    })
    .unwrap();
    assert_all_below(&r, 1e-4);

    // blocked attention
    let (q, k, vv) = (random(6, 4, 21), random(9, 4, 22), random(9, 4, 23));
    let r = check_inputs(&[q, k, vv], 1e-5, |t, v| {
        let o = t.attention(v[0], v[1], v[2], 2, 3)?;
        Ok(project(t, o, 4))
    })
    .unwrap();
    assert_all_below(&r, 1e-4);

    // bce on logits
    let targets = [1.0, 0.0, 1.0, 1.0, 0.0];
    let r = check_inputs(&[random(5, 1, 31)], 1e-5, |t, v| t.bce_with_logits(v[0], &targets)).unwrap();
    assert_all_below(&r, 1e-6);
}

#[test]
fn bce_values() {
    let (l, g) = bce_with_logits(0.0f64, 1.0);
    assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((g + 0.5).abs() < 1e-15);
    let (l, _) = bce_with_logits(20.0f64, 1.0);
    let oracle = (-20.0f64).exp().ln_1p();
    assert!(l.is_finite() && (l - oracle).abs() < 1e-20 && (l - 2.06e-9).abs() < 1e-11);
    let (l, g) = bce_with_logits(-800.0f64, 1.0);
    assert!(l.is_finite() && (l - 800.0).abs() < 1e-9 && (g + 1.0).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let z: f64 = rng.gen_range(-6.0..6.0);
        let y = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        let h = 1e-5;
        let fd = (bce_with_logits(z + h, y).0 - bce_with_logits(z - h, y).0) / (2.0 * h);
        let g = bce_with_logits(z, y).1;
        assert!((fd - g).abs() / g.abs().max(1e-12) < 1e-6, "z={z} y={y}");
    }
}

#[test]
fn single_token_attention_weight_is_one() {
    let mut store = ParameterStore::<f64>::new(3);
    let mha = MultiHeadAttention::register(&mut store, "a", 4, 2).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(random(1, 4, 5));
    let out = mha.forward(&mut tape, &store, x, x).unwrap();
    for &h in &out.heads {
        assert_eq!(tape.attention_probs(h).unwrap(), &[1.0]);
    }
    // output = o(v(x)) when the only weight is 1
    let mut t2 = Tape::new();
    let x2 = t2.constant(tape.value(x).clone());
    let v = mha.v.forward(&mut t2, &store, x2).unwrap();
    let o = mha.o.forward(&mut t2, &store, v).unwrap();
    for (a, b) in tape.value(out.out).data().iter().zip(t2.value(o).data()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let mut store = ParameterStore::<f64>::new(3);
    let mha = MultiHeadAttention::register(&mut store, "a", 8, 4).unwrap();
    let mut tape = Tape::new();
    let q = tape.constant(random(7, 8, 1).clone());
    let kv = tape.constant(random(5, 8, 2));
    let out = mha.forward(&mut tape, &store, q, kv).unwrap();
    assert_eq!(tape.value(out.out).shape(), &[7, 8]);
    for &h in &out.heads {
        for row in tape.attention_probs(h).unwrap().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    assert!(MultiHeadAttention::register(&mut store, "b", 8, 3).is_err());
}

#[test]
fn mha_gradients() {
    let mut store = ParameterStore::<f64>::new(8);
    let mha = MultiHeadAttention::register(&mut store, "a", 8, 2).unwrap();
    let x = random(5, 8, 4);
    let r = check_params(&store, 1e-5, |t, s| {
        let xv = t.constant(x.clone());
        let o = mha.forward(t, s, xv, xv)?.out;
        Ok(project(t, o, 6))
    })
    .unwrap();
    assert_all_below(&r, 1e-5);
    let r = check_inputs(&[x.clone()], 1e-5, |t, v| {
        let o = mha.forward(t, &store, v[0], v[0])?.out;
        Ok(project(t, o, 6))
    })
    .unwrap();
    assert_all_below(&r, 1e-5);
}

#[test]
fn gathered_attention_matches_separate_calls() {
    let mut store = ParameterStore::<f64>::new(8);
    let mha = MultiHeadAttention::register(&mut store, "a", 4, 2).unwrap();
    let src = random(6, 4, 4);
    let qi = [0, 2, 4, 1, 3, 5];
    let ki = [1, 3, 5, 0, 2, 4];
    let mut tape = Tape::new();
    let s = tape.constant(src.clone());
    let batched = mha.forward_gathered(&mut tape, &store, s, &qi, s, &ki, 3, 3).unwrap().out;
    for b in 0..2 {
        let mut t = Tape::new();
        let s = t.constant(src.clone());
        let q = t.gather_rows(s, &qi[b * 3..b * 3 + 3]).unwrap();
        let k = t.gather_rows(s, &ki[b * 3..b * 3 + 3]).unwrap();
        let o = mha.forward(&mut t, &store, q, k).unwrap().out;
        for (x, y) in t.value(o).data().iter().zip(&tape.value(batched).data()[b * 12..b * 12 + 12]) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}

#[test]
fn layer_norm_standardizes_rows() {
    let mut store = ParameterStore::<f64>::new(0);
    let ln = LayerNorm::register(&mut store, "ln", 16).unwrap();
    let mut x = random(6, 16, 3);
    x.data_mut().iter_mut().for_each(|v| *v = *v * 40.0 + 3.0);
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let y = ln.forward(&mut tape, &store, xv).unwrap();
    for r in 0..6 {
        let row = tape.value(y).row(r);
        let mean = row.iter().sum::<f64>() / 16.0;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-8);
    }
}

fn zero(store: &mut ParameterStore<f64>, name: &str) {
    store.get_mut(name).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
}

#[test]
fn pre_norm_encoder_is_identity_with_zero_output_projections() {
    let cfg = EncoderConfig {
        dim: 8,
        heads: 2,
        ffn_dim: 16,
        norm_first: true,
    };
    let mut store = ParameterStore::<f64>::new(1);
    let enc = EncoderLayer::register(&mut store, "enc", cfg).unwrap();
    zero(&mut store, &enc.attn.o.weight);
    zero(&mut store, &enc.ffn.down.weight);
    let mut tape = Tape::new();
    let z = tape.constant(random(5, 8, 2));
    let out = enc.forward(&mut tape, &store, z).unwrap();
    assert_eq!(tape.value(out), tape.value(z));
}

#[test]
fn encoder_gradients_both_orders() {
    for norm_first in [true, false] {
        let cfg = EncoderConfig {
            dim: 16,
            heads: 2,
            ffn_dim: 32,
            norm_first,
        };
        let mut store = ParameterStore::<f64>::new(2);
        let enc = EncoderLayer::register(&mut store, "enc", cfg).unwrap();
        // give the affine parts of layer norm non-trivial values
        for name in [&enc.ln1.gamma, &enc.ln2.gamma, &enc.ln1.beta, &enc.ln2.beta] {
            let t = store.get_mut(name).unwrap();
            let noise = random(1, 16, name.len() as u64);
            t.data_mut().iter_mut().zip(noise.data()).for_each(|(v, n)| *v += 0.3 * n);
        }
        let z = random(6, 16, 3);
        let r = check_params(&store, 1e-5, |t, s| {
            let zv = t.constant(z.clone());
            let o = enc.forward(t, s, zv)?;
            assert_eq!(t.value(o).shape(), &[6, 16]);
            Ok(project(t, o, 4))
        })
        .unwrap();
        assert_all_below(&r, 1e-5);
    }
}

#[test]
fn forward_is_bit_deterministic() {
    let run = || {
        let cfg = EncoderConfig {
            dim: 8,
            heads: 2,
            ffn_dim: 8,
            norm_first: false,
        };
        let mut store = ParameterStore::<f64>::new(42);
        let enc = EncoderLayer::register(&mut store, "enc", cfg).unwrap();
        let mut tape = Tape::new();
        let z = tape.constant(random(4, 8, 9));
        let o = enc.forward(&mut tape, &store, z).unwrap();
        tape.value(o).data().to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn backward_requires_scalar_and_skips_constants() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(random(2, 2, 0));
    let b = tape.variable(random(2, 2, 1));
    let c = tape.matmul(a, b).unwrap();
    assert!(tape.backward(c).is_err());
    let s = tape.sum(c);
    tape.backward(s).unwrap();
    assert!(tape.grad(a).is_none());
    assert!(tape.grad(b).is_some());
}

#[test]
fn f32_forward_runs() {
    let mut store = ParameterStore::<f32>::new(0);
    let enc = EncoderLayer::register(
        &mut store,
        "enc",
        EncoderConfig {
            dim: 4,
            heads: 1,
            ffn_dim: 4,
            norm_first: true,
        },
    )
    .unwrap();
    let mut tape = Tape::<f32>::new();
    let z = tape.constant(Tensor::full(&[3, 4], 0.5f32));
    let o = enc.forward(&mut tape, &store, z).unwrap();
    assert!(tape.value(o).data().iter().all(|v| v.is_finite()));
}
