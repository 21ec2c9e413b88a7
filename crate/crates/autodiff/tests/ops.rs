use cdbin_autodiff::{AutodiffError, BnMode, ParamStore, Tape, Tensor};

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, data).unwrap()
}

fn empty() -> ParamStore<f64> {
    ParamStore::new()
}

#[test]
fn conv_identity_kernel() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let data: Vec<f64> = (0..9).map(|v| v as f64).collect();
    let x = tape.constant(t(&[1, 1, 3, 3], &data));
    let k = tape.constant(t(&[1, 1, 1, 1], &[1.0]));
    let y = tape.conv2d(x, k, None, 1, 0).unwrap();
    assert_eq!(tape.value(y).data(), &data[..]);
}

#[test]
fn conv_sums_window() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let x = tape.constant(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let k = tape.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
    let y = tape.conv2d(x, k, None, 1, 0).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 1, 1]);
    assert_eq!(tape.value(y).item(), 10.0);
}

#[test]
fn conv_strided_shape_and_errors() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let x = tape.constant(Tensor::zeros(&[1, 1, 32, 32]));
    let k = tape.constant(Tensor::zeros(&[4, 1, 3, 3]));
    let y = tape.conv2d(x, k, None, 2, 1).unwrap();
    assert_eq!(tape.shape(y), &[1, 4, 16, 16]);
    let bad = tape.constant(Tensor::zeros(&[4, 2, 3, 3]));
    assert!(matches!(tape.conv2d(x, bad, None, 1, 1), Err(AutodiffError::Shape { .. })));
}

#[test]
fn transposed_conv_doubles_and_stamps() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let x = tape.constant(Tensor::zeros(&[1, 1, 16, 16]));
    let k = tape.constant(Tensor::zeros(&[1, 1, 2, 2]));
    let y = tape.conv_transpose2d(x, k, None, 2, 0).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 32, 32]);

    let mut delta = vec![0.0; 9];
    delta[4] = 1.0;
    let x = tape.constant(t(&[1, 1, 3, 3], &delta));
    let kv = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
    let k = tape.constant(t(&[1, 1, 3, 3], &kv));
    let y = tape.conv_transpose2d(x, k, None, 1, 0).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 5, 5]);
    let out = tape.value(y).data();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(out[(1 + i) * 5 + 1 + j], kv[i * 3 + j]);
        }
    }
    assert_eq!(out.iter().sum::<f64>(), 45.0);
}

#[test]
fn transposed_conv_is_conv_adjoint() {
    // <conv(x), y> == <x, conv_t(y)> for the same kernel
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let s = empty();
    let mut tape = Tape::new(&s);
    let xv = Tensor::<f64>::uniform(&[2, 3, 7, 9], 1.0, &mut rng);
    let kv = Tensor::<f64>::uniform(&[4, 3, 3, 3], 1.0, &mut rng);
    let x = tape.constant(xv.clone());
    let k = tape.constant(kv);
    let cx = tape.conv2d(x, k, None, 2, 1).unwrap();
    let yv = Tensor::<f64>::uniform(tape.shape(cx), 1.0, &mut rng);
    let y = tape.constant(yv.clone());
    let ty = tape.conv_transpose2d(y, k, None, 2, 1).unwrap();
    assert_eq!(tape.shape(ty), xv.shape());
    let lhs: f64 = tape.value(cx).data().iter().zip(yv.data()).map(|(a, b)| a * b).sum();
    let rhs: f64 = tape.value(ty).data().iter().zip(xv.data()).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
}

#[test]
fn pooling_examples() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let x = tape.input(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let m = tape.max_pool2(x).unwrap();
    let a = tape.avg_pool2(x).unwrap();
    assert_eq!(tape.value(m).item(), 4.0);
    assert_eq!(tape.value(a).item(), 2.5);
    let c = tape.constant(Tensor::full(&[1, 2, 4, 4], 7.0));
    let mc = tape.max_pool2(c).unwrap();
    let ac = tape.avg_pool2(c).unwrap();
    assert!(tape.value(mc).data().iter().chain(tape.value(ac).data()).all(|&v| v == 7.0));
    let odd = tape.constant(Tensor::zeros(&[1, 1, 3, 4]));
    assert!(matches!(tape.max_pool2(odd), Err(AutodiffError::OddDimensions { .. })));
    assert!(matches!(tape.avg_pool2(odd), Err(AutodiffError::OddDimensions { .. })));
}

#[test]
fn max_pool_ties_go_to_first_element() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let x = tape.input(Tensor::full(&[1, 1, 2, 2], 3.0));
    let m = tape.max_pool2(x).unwrap();
    let loss = tape.sum(m).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn batch_norm_examples() {
    let mut store = ParamStore::new();
    let bn = cdbin_autodiff::BatchNorm2d::new(&mut store, "bn", 2).unwrap();
    store.get_mut(bn.beta).value = t(&[2], &[0.5, -3.0]);
    {
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::full(&[2, 2, 3, 3], 4.0));
        let y = bn.forward(&mut tape, x, BnMode::Train).unwrap();
        let out = tape.value(y).data();
        assert!(out[..9].iter().all(|&v| v == 0.5));
        assert!(out[9..18].iter().all(|&v| v == -3.0));
    }
    store.get_mut(bn.beta).value = Tensor::zeros(&[2]);
    let data: Vec<f64> = (0..36).map(|i| ((i * 37) % 17) as f64 * 0.3 - 1.0).collect();
    let mut tape = Tape::new(&store);
    let x = tape.constant(t(&[2, 2, 3, 3], &data));
    let y = bn.forward(&mut tape, x, BnMode::Train).unwrap();
    let out = tape.value(y).data().to_vec();
    for c in 0..2 {
        let vals: Vec<f64> = (0..2).flat_map(|n| out[(n * 2 + c) * 9..(n * 2 + c + 1) * 9].to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / 18.0;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 18.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-3);
    }
    let updates = tape.into_stat_updates();
    assert_eq!(updates.len(), 1);
    store.apply_stat_updates(&updates, 0.9);
    assert!(store.value(bn.running_mean).data().iter().any(|&v| v != 0.0));

    let mut tape = Tape::new(&store);
    let one = tape.constant(Tensor::zeros(&[1, 2, 1, 1]));
    assert!(matches!(bn.forward(&mut tape, one, BnMode::Train), Err(AutodiffError::DegenerateBatch)));
    assert!(bn.forward(&mut tape, one, BnMode::Eval).is_ok());
}

#[test]
fn activation_examples() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let x = tape.constant(t(&[4], &[-1.0, 3.0, 0.0, -2.5]));
    let l = tape.leaky_relu(x, 0.2).unwrap();
    assert_eq!(tape.value(l).data(), &[-0.2, 3.0, 0.0, -0.5]);
    let id = tape.leaky_relu(x, 1.0).unwrap();
    assert_eq!(tape.value(id).data(), tape.value(x).data());
    let z = tape.constant(t(&[3], &[0.0, 1.7, -1.7]));
    let s = tape.sigmoid(z).unwrap();
    let sv = tape.value(s).data();
    assert_eq!(sv[0], 0.5);
    assert!((sv[1] + sv[2] - 1.0).abs() < 1e-15);
}

#[test]
fn dense_examples() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let x = tape.constant(t(&[1, 1], &[3.0]));
    let w = tape.constant(t(&[1, 1], &[2.0]));
    let b = tape.constant(t(&[1], &[1.0]));
    let y = tape.dense(x, w, Some(b)).unwrap();
    assert_eq!(tape.value(y).item(), 7.0);
    let x = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let eye = tape.constant(t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
    let y = tape.dense(x, eye, None).unwrap();
    assert_eq!(tape.value(y).data(), tape.value(x).data());
    let wrong = tape.constant(Tensor::zeros(&[2, 4]));
    assert!(tape.dense(x, wrong, None).is_err());
}

#[test]
fn concat_examples() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let a = tape.input(Tensor::zeros(&[2, 4, 3, 3]));
    let b = tape.input(Tensor::zeros(&[2, 6, 3, 3]));
    let c = tape.concat_channels(a, b).unwrap();
    assert_eq!(tape.shape(c), &[2, 10, 3, 3]);
    let loss = tape.sum(c).unwrap();
    let g = tape.backward(loss).unwrap();
    assert!(g.wrt(a).unwrap().data().iter().chain(g.wrt(b).unwrap().data()).all(|&v| v == 1.0));
    let e = tape.constant(Tensor::zeros(&[2, 0, 3, 3]));
    let same = tape.concat_channels(a, e).unwrap();
    assert_eq!(tape.value(same), tape.value(a));
    let other = tape.constant(Tensor::zeros(&[2, 1, 4, 3]));
    assert!(tape.concat_channels(a, other).is_err());
}

#[test]
fn patches_tile_row_major() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let data: Vec<f64> = (0..64).map(|v| v as f64).collect();
    let x = tape.constant(t(&[1, 1, 8, 8], &data));
    let p = tape.patches(x, 4).unwrap();
    assert_eq!(tape.shape(p), &[4, 1, 4, 4]);
    let pv = tape.value(p).data();
    assert_eq!(&pv[..4], &[0.0, 1.0, 2.0, 3.0]);
    assert_eq!(&pv[16..20], &[4.0, 5.0, 6.0, 7.0]);
    assert_eq!(pv[32], 32.0);
    assert!(tape.patches(x, 3).is_err());
}

#[test]
fn backward_examples() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let x = tape.input(t(&[3], &[1.5, -2.0, 0.25]));
    let sq = tape.square(x).unwrap();
    let loss = tape.sum(sq).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[3.0, -4.0, 0.5]);

    let mut tape = Tape::new(&s);
    let x = tape.input(t(&[2], &[1.0, 2.0]));
    let c = tape.constant(Tensor::scalar(5.0));
    let loss = tape.sum(c).unwrap();
    let g = tape.backward(loss).unwrap();
    assert!(g.wrt(x).is_none());

    let y = tape.scale(x, 2.0).unwrap();
    assert!(matches!(tape.backward(y), Err(AutodiffError::NonScalarLoss(_))));
}

#[test]
fn repeated_use_accumulates() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let x = tape.input(t(&[2], &[1.0, 2.0]));
    let y = tape.add(x, x).unwrap();
    let z = tape.mul(y, x).unwrap();
    let loss = tape.sum(z).unwrap();
    // loss = 2 x^2, gradient 4x
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[4.0, 8.0]);
}

#[test]
fn backward_is_deterministic_and_inputs_untouched() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::<f32>::new();
    let conv = cdbin_autodiff::Conv2d::new(&mut store, "c", 1, 4, 3, 1, 1, true, &mut rng).unwrap();
    let before = store.clone();
    let xv = Tensor::<f32>::uniform(&[2, 1, 8, 8], 1.0, &mut rng);
    let run = || {
        let mut tape = Tape::new(&store);
        let x = tape.input(xv.clone());
        let y = conv.forward(&mut tape, x).unwrap();
        let y = tape.leaky_relu(y, 0.2).unwrap();
        let y = tape.max_pool2(y).unwrap();
        let loss = tape.mean(y).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(tape.value(x), &xv);
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        (bits(g.wrt(x).unwrap()), bits(g.param(conv.weight).unwrap()))
    };
    assert_eq!(run(), run());
    for (id, p) in before.iter() {
        assert_eq!(&p.value, store.value(id));
    }
}

#[test]
fn frozen_params_pass_gradient_through() {
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", cdbin_autodiff::Role::Kernel, t(&[1, 1], &[3.0])).unwrap();
    let mut tape = Tape::new(&store);
    tape.freeze([w]);
    let x = tape.input(t(&[1, 1], &[2.0]));
    let wv = tape.param(w);
    let y = tape.dense(x, wv, None).unwrap();
    let loss = tape.sum(y).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[3.0]);
    assert!(g.param(w).is_none());
}

#[test]
fn loss_examples() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let half = tape.constant(t(&[1], &[0.5]));
    let one = t(&[1], &[1.0]);
    let f = tape.focal_loss(half, &one, 0.25, 2.0).unwrap();
    assert!((tape.value(f).item() - 0.25 * 0.25 * std::f64::consts::LN_2).abs() < 1e-12);
    let b = tape.bce_loss(half, &one).unwrap();
    assert!((tape.value(b).item() - std::f64::consts::LN_2).abs() < 1e-12);

    let p = tape.constant(t(&[4], &[0.1, 0.7, 0.99, 0.4]));
    let target = t(&[4], &[1.0, 0.0, 1.0, 0.0]);
    let fl = tape.focal_loss(p, &target, 1.0, 0.0).unwrap();
    let bl = tape.bce_loss(p, &target).unwrap();
    assert!((tape.value(fl).item() - tape.value(bl).item()).abs() < 1e-12);

    let q: Vec<f64> = vec![0.2, 0.35, 0.9];
    let flipped: Vec<f64> = q.iter().map(|v| 1.0 - v).collect();
    let pq = tape.constant(t(&[3], &q));
    let pf = tape.constant(t(&[3], &flipped));
    let a = tape.bce_loss(pq, &Tensor::full(&[3], 1.0)).unwrap();
    let z = tape.bce_loss(pf, &Tensor::zeros(&[3])).unwrap();
    assert!((tape.value(a).item() - tape.value(z).item()).abs() < 1e-12);

    let perfect = tape.constant(t(&[2], &[1.0, 0.0]));
    let l = tape.focal_loss(perfect, &t(&[2], &[1.0, 0.0]), 0.25, 2.0).unwrap();
    assert!(tape.value(l).item() < 1e-12);
    let saturated = tape.bce_loss(perfect, &t(&[2], &[0.0, 1.0])).unwrap();
    assert!(tape.value(saturated).item().is_finite());

    assert!(matches!(tape.bce_loss(half, &t(&[1], &[0.5])), Err(AutodiffError::Target)));
    assert!(tape.focal_loss(half, &t(&[2], &[1.0, 0.0]), 0.25, 2.0).is_err());
}

#[test]
fn logit_losses_match_probability_losses() {
    let s = empty();
    let mut tape = Tape::new(&s);
    let logits = [-30.0, -3.0, -0.4, 0.0, 1.5, 8.0, 25.0];
    let target = t(&[7], &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    let z = tape.constant(t(&[7], &logits));
    let p = tape.constant(t(&[7], &logits.map(|v: f64| 1.0 / (1.0 + (-v).exp()))));
    let fz = tape.focal_loss_logits(z, &target, 0.25, 2.0).unwrap();
    let fp = tape.focal_loss(p, &target, 0.25, 2.0).unwrap();
    assert!((tape.value(fz).item() - tape.value(fp).item()).abs() < 1e-12);
    let bz = tape.bce_loss_logits(z, &target).unwrap();
    let bp = tape.bce_loss(p, &target).unwrap();
    assert!((tape.value(bz).item() - tape.value(bp).item()).abs() < 1e-12);
}

#[test]
fn saturated_wrong_logits_keep_their_gradient() {
    let mut store = ParamStore::new();
    let id = store.add("z", cdbin_autodiff::Role::Kernel, t(&[2], &[-40.0, 40.0])).unwrap();
    let target = t(&[2], &[1.0, 0.0]);
    let mut tape = Tape::new(&store);
    let z = tape.param(id);
    let l = tape.focal_loss_logits(z, &target, 0.25, 2.0).unwrap();
    let g = tape.backward(l).unwrap();
    let gz = g.param(id).unwrap().data().to_vec();
    assert!((gz[0] + 0.125).abs() < 1e-9 && (gz[1] - 0.125).abs() < 1e-9, "{gz:?}");

    let mut tape = Tape::new(&store);
    let z = tape.param(id);
    let p = tape.sigmoid(z).unwrap();
    let l = tape.focal_loss(p, &target, 0.25, 2.0).unwrap();
    let g = tape.backward(l).unwrap();
    assert!(g.param(id).unwrap().data().iter().all(|v| v.abs() < 1e-6));
}

/// Runs `op` on the whole batch and on each sample alone; values and gradients must agree.
fn batched_matches_per_sample(
    x: &Tensor<f64>,
    k: &Tensor<f64>,
    op: impl Fn(&mut Tape<f64>, cdbin_autodiff::Var, cdbin_autodiff::Var) -> cdbin_autodiff::Var,
) {
    let s = empty();
    let n = x.shape()[0];
    let per = x.len() / n;
    let weights = |len: usize| Tensor::from_f64(&[len], &(0..len).map(|i| ((i * 31) % 17) as f64 - 8.0).collect::<Vec<_>>()).unwrap();

    let mut tape = Tape::new(&s);
    let xv = tape.input(x.clone());
    let kv = tape.input(k.clone());
    let y = op(&mut tape, xv, kv);
    let ylen = tape.value(y).len();
    let flat = tape.reshape(y, &[ylen]).unwrap();
    let wv = tape.constant(weights(ylen));
    let prod = tape.mul(flat, wv).unwrap();
    let loss = tape.sum(prod).unwrap();
    let g = tape.backward(loss).unwrap();
    let (all_y, all_dx, all_dk) = (tape.value(y).clone(), g.wrt(xv).unwrap().clone(), g.wrt(kv).unwrap().clone());

    let out_per = ylen / n;
    let w_all = weights(ylen);
    let mut dk_sum = vec![0.0; k.len()];
    for i in 0..n {
        let mut shape = x.shape().to_vec();
        shape[0] = 1;
        let xi = Tensor::new(&shape, x.data()[i * per..(i + 1) * per].to_vec()).unwrap();
        let mut tape = Tape::new(&s);
        let xv = tape.input(xi);
        let kv = tape.input(k.clone());
        let y = op(&mut tape, xv, kv);
        let flat = tape.reshape(y, &[out_per]).unwrap();
        let wv = tape.constant(Tensor::new(&[out_per], w_all.data()[i * out_per..(i + 1) * out_per].to_vec()).unwrap());
        let prod = tape.mul(flat, wv).unwrap();
        let loss = tape.sum(prod).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(tape.value(y).data(), &all_y.data()[i * out_per..(i + 1) * out_per]);
        let dx = g.wrt(xv).unwrap().data();
        for (a, b) in dx.iter().zip(&all_dx.data()[i * per..(i + 1) * per]) {
            assert!((a - b).abs() < 1e-9);
        }
        dk_sum.iter_mut().zip(g.wrt(kv).unwrap().data()).for_each(|(a, b)| *a += b);
    }
    for (a, b) in dk_sum.iter().zip(all_dk.data()) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
    }
}

#[test]
fn convolutions_split_large_batches_consistently() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    // 18 rows by 256 columns per sample: 28 samples per chunk, so 40 samples span two chunks
    let x = Tensor::<f64>::uniform(&[40, 2, 16, 16], 1.0, &mut rng);
    let k = Tensor::<f64>::uniform(&[3, 2, 3, 3], 0.5, &mut rng);
    batched_matches_per_sample(&x, &k, |t, x, k| t.conv2d(x, k, None, 1, 1).unwrap());
    // 16 rows by 256 input positions per sample: 32 per chunk
    let x = Tensor::<f64>::uniform(&[40, 2, 16, 16], 1.0, &mut rng);
    let k = Tensor::<f64>::uniform(&[2, 4, 2, 2], 0.5, &mut rng);
    batched_matches_per_sample(&x, &k, |t, x, k| t.conv_transpose2d(x, k, None, 2, 0).unwrap());
}
