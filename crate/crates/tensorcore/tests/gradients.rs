use lesionkit_tensor::gradcheck::check_param_gradients;
use lesionkit_tensor::{Graph, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Project an output onto fixed random weights so every element matters.
fn project(g: &mut Graph<f64>, y: Var, rng_seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let w = rand_tensor(&mut rng, g.value(y).shape());
    let wv = g.input(w);
    let p = g.mul(y, wv).unwrap();
    g.sum(p)
}

fn assert_close(store: &mut ParamStore<f64>, build: impl Fn(&mut Graph<f64>, &ParamStore<f64>) -> lesionkit_tensor::Result<Var>) {
    let r = check_param_gradients(store, build, H, 1000).unwrap();
    assert!(r.checked > 0);
    assert!(r.max_rel_error < TOL, "max rel error {} at {}", r.max_rel_error, r.worst);
}

#[test]
fn conv2d_input_and_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (stride, pad, k, size) in [(1, 1, 3, 6), (2, 1, 4, 8), (2, 0, 2, 8)] {
        let mut s = ParamStore::new();
        let x = s.add("x", rand_tensor(&mut rng, &[2, 2, size, size])).unwrap();
        let w = s.add("w", rand_tensor(&mut rng, &[3, 2, k, k])).unwrap();
        assert_close(&mut s, |g, st| {
            let (xv, wv) = (g.param(st, x), g.param(st, w));
            let y = g.conv2d(xv, wv, stride, pad)?;
            Ok(project(g, y, 7))
        });
    }
}

#[test]
fn conv2d_transpose_input_and_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (stride, pad, k) in [(2, 1, 4), (2, 0, 2), (1, 1, 3)] {
        let mut s = ParamStore::new();
        let x = s.add("x", rand_tensor(&mut rng, &[1, 3, 4, 4])).unwrap();
        let w = s.add("w", rand_tensor(&mut rng, &[3, 2, k, k])).unwrap();
        assert_close(&mut s, |g, st| {
            let (xv, wv) = (g.param(st, x), g.param(st, w));
            let y = g.conv2d_transpose(xv, wv, stride, pad)?;
            Ok(project(g, y, 8))
        });
    }
}

#[test]
fn bias_activations_pool_concat() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = ParamStore::new();
    let x = s.add("x", rand_tensor(&mut rng, &[2, 2, 8, 8])).unwrap();
    let y = s.add("y", rand_tensor(&mut rng, &[2, 1, 4, 4])).unwrap();
    let b = s.add("b", rand_tensor(&mut rng, &[2])).unwrap();
    assert_close(&mut s, |g, st| {
        let (xv, yv, bv) = (g.param(st, x), g.param(st, y), g.param(st, b));
        let h = g.channel_bias(xv, bv)?;
        let h = g.leaky_relu(h, 0.2)?;
        let h = g.max_pool2(h)?;
        let h = g.concat_channels(h, yv)?;
        let h = g.sigmoid(h);
        let h2 = g.relu(h)?;
        let h = g.add(h, h2)?;
        let h = g.scale(h, 1.5);
        Ok(project(g, h, 9))
    });
}

#[test]
fn instance_norm_all_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = ParamStore::new();
    let x = s.add("x", rand_tensor(&mut rng, &[2, 3, 5, 5])).unwrap();
    let gain = s.add("gain", rand_tensor(&mut rng, &[3])).unwrap();
    let bias = s.add("bias", rand_tensor(&mut rng, &[3])).unwrap();
    assert_close(&mut s, |g, st| {
        let (xv, gv, bv) = (g.param(st, x), g.param(st, gain), g.param(st, bias));
        let y = g.instance_norm(xv, gv, bv)?;
        Ok(project(g, y, 10))
    });
}

#[test]
fn dropout_uses_its_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = ParamStore::new();
    let x = s.add("x", rand_tensor(&mut rng, &[1, 2, 6, 6])).unwrap();
    assert_close(&mut s, |g, st| {
        // identical mask on every evaluation
        let mut drng = ChaCha8Rng::seed_from_u64(99);
        let xv = g.param(st, x);
        let y = g.dropout(xv, 0.5, &mut drng)?;
        Ok(project(g, y, 11))
    });
}

#[test]
fn losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut s = ParamStore::new();
    let logits = s.add("logits", rand_tensor(&mut rng, &[2, 1, 4, 4]).map(|v| 3.0 * v)).unwrap();
    let pred = s.add("pred", rand_tensor(&mut rng, &[2, 1, 4, 4])).unwrap();
    let target = rand_tensor(&mut rng, &[2, 1, 4, 4]);
    let gt = Tensor::from_fn(&[2, 1, 4, 4], |i| ((i * 7) % 3 == 0) as u8 as f64);
    assert_close(&mut s, |g, st| {
        let (lv, pv) = (g.param(st, logits), g.param(st, pred));
        let a = g.bce_with_logits(lv, 1.0);
        let b = g.bce_with_logits(lv, 0.0);
        let c = g.l1_loss(pv, &target)?;
        let c = g.scale(c, 100.0);
        let p = g.sigmoid(pv);
        let d = g.soft_dice(p, &gt, 1.0)?;
        let m = g.mean(pv);
        let t = g.add(a, b)?;
        let t = g.add(t, c)?;
        let t = g.add(t, d)?;
        g.add(t, m)
    });
}

#[test]
fn two_layer_conv_net() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut s = ParamStore::new();
    let w1 = s.add("w1", rand_tensor(&mut rng, &[4, 1, 3, 3])).unwrap();
    let w2 = s.add("w2", rand_tensor(&mut rng, &[1, 4, 3, 3])).unwrap();
    let input = rand_tensor(&mut rng, &[1, 1, 8, 8]);
    let target = rand_tensor(&mut rng, &[1, 1, 8, 8]);
    assert_close(&mut s, |g, st| {
        let x = g.input(input.clone());
        let (a, b) = (g.param(st, w1), g.param(st, w2));
        let h = g.conv2d(x, a, 1, 1)?;
        let h = g.leaky_relu(h, 0.2)?;
        let y = g.conv2d(h, b, 1, 1)?;
        let y = g.sigmoid(y);
        let t = g.input(target.clone());
        let neg = g.scale(t, -1.0);
        let d = g.add(y, neg)?;
        let sq = g.mul(d, d)?;
        Ok(g.mean(sq))
    });
}
