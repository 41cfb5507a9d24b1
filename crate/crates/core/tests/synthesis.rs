mod common;

use common::*;
use lesionkit::condmap::{compose_conditional, ConditionalMap};
use lesionkit::synthesis::*;
use lesionkit::{seed, Grid};
use lesionkit_tensor::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

#[test]
fn discriminator_loss_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let real = random_tensor(&mut rng, &[2, 1, 4, 4], -6.0, 6.0);
        let fake = random_tensor(&mut rng, &[2, 1, 4, 4], -6.0, 6.0);
        let n = real.len() as f64;
        // -log σ(r) = softplus(-r), -log(1 - σ(f)) = softplus(f)
        let oracle = real.data().iter().map(|&r| softplus(-r)).sum::<f64>() / n
            + fake.data().iter().map(|&f| softplus(f)).sum::<f64>() / n;
        let mut g = Graph::new();
        let (r, f) = (g.input(real), g.input(fake));
        let loss = discriminator_loss(&mut g, r, f).unwrap();
        assert!((g.value(loss).item().unwrap() - oracle).abs() < 1e-9);
    }
}

#[test]
fn generator_loss_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let fake = random_tensor(&mut rng, &[2, 1, 4, 4], -6.0, 6.0);
        let generated = random_tensor(&mut rng, &[2, 1, 8, 8], 0.0, 1.0);
        let target = random_tensor(&mut rng, &[2, 1, 8, 8], 0.0, 1.0);
        let (gw, lw) = (rng.random_range(0.0..2.0), rng.random_range(0.0..200.0));
        let adv = fake.data().iter().map(|&f| softplus(-f)).sum::<f64>() / fake.len() as f64;
        let l1 = generated.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum::<f64>()
            / generated.len() as f64;
        let oracle = gw * adv + lw * l1;
        let mut g = Graph::new();
        let (f, gen) = (g.input(fake), g.input(generated));
        let loss = generator_loss(&mut g, f, gen, &target, gw, lw).unwrap();
        assert!((g.value(loss).item().unwrap() - oracle).abs() < 1e-9);
    }
}

fn tiny_config() -> SynthTrainConfig {
    SynthTrainConfig { net: NetShape { patch_size: 16, base_channels: 4, dropout: 0.5 }, batch_size: 2, ..Default::default() }
}

#[test]
fn each_step_touches_only_its_own_network() {
    let corpus = phantom(6, 64, 3);
    let ps = pairs(&corpus, 16);
    let cfg = tiny_config();
    let mut t = GanTrainer::<f64>::new(&cfg).unwrap();
    let refs: Vec<_> = ps.iter().take(2).collect();
    let (x, y) = batch_tensors::<f64>(&refs, 16).unwrap();
    for step in 0..3 {
        let g0 = fingerprint(&t.generator.store);
        let d0 = fingerprint(&t.discriminator.store);
        let mut gg = Graph::new();
        let xg = gg.input(x.clone());
        let mut noise = seed::stream(step, &[]);
        let fake = t.generator.forward(&mut gg, xg, Some(&mut noise)).unwrap();
        t.discriminator_step(&x, &y, &gg.value(fake).clone(), (0, step as usize)).unwrap();
        assert_eq!(fingerprint(&t.generator.store), g0, "D step moved G");
        let d1 = fingerprint(&t.discriminator.store);
        assert_ne!(d1, d0, "D step did not move D");
        t.generator_step(&mut gg, xg, fake, &y, (0, step as usize)).unwrap();
        assert_eq!(fingerprint(&t.discriminator.store), d1, "G step moved D");
        assert_ne!(fingerprint(&t.generator.store), g0, "G step did not move G");
    }
}

#[test]
fn zero_objective_leaves_generator_unchanged() {
    let corpus = phantom(6, 64, 3);
    let ps = pairs(&corpus, 16);
    let cfg = SynthTrainConfig { epochs: 3, gan_weight: 0.0, l1_weight: 0.0, ..tiny_config() };
    let fresh = GanTrainer::<f64>::new(&cfg).unwrap();
    let trained = train::<f64>(&ps, &[], &cfg, None).unwrap();
    assert_eq!(fingerprint(&trained.generator.store), fingerprint(&fresh.generator.store));
}

#[test]
fn training_is_deterministic_per_seed() {
    let corpus = phantom(6, 64, 3);
    let ps = pairs(&corpus, 16);
    let cfg = SynthTrainConfig { epochs: 2, ..tiny_config() };
    let a = train::<f64>(&ps, &ps, &cfg, None).unwrap();
    let b = train::<f64>(&ps, &ps, &cfg, None).unwrap();
    assert_eq!(fingerprint(&a.generator.store), fingerprint(&b.generator.store));
    assert_eq!(a.log, b.log);
    let c = train::<f64>(&ps, &ps, &SynthTrainConfig { seed: 1, ..cfg }, None).unwrap();
    assert_ne!(fingerprint(&a.generator.store), fingerprint(&c.generator.store));
}

#[test]
fn nan_loss_aborts_with_step_named() {
    let corpus = phantom(6, 64, 3);
    let mut ps = pairs(&corpus, 16);
    ps[0].target.set(3, 3, f64::NAN);
    let cfg = SynthTrainConfig { epochs: 2, ..tiny_config() };
    let err = train::<f64>(&ps, &[], &cfg, None).err().expect("NaN target must abort");
    let msg = err.to_string();
    assert!(matches!(err, lesionkit::Error::TrainingAborted(_)), "{msg}");
    assert!(msg.contains("epoch 0 batch") && msg.contains("discriminator loss is NaN"), "{msg}");
}

fn smoothed(v: &[f64], k: usize) -> (f64, f64) {
    let head = v[..k].iter().sum::<f64>() / k as f64;
    let tail = v[v.len() - k..].iter().sum::<f64>() / k as f64;
    (head, tail)
}

#[test]
fn held_out_l1_improves_over_thirty_epochs() {
    let corpus = phantom(60, 128, 7);
    let mut ps = pairs(&corpus, 64);
    assert!(ps.len() >= 60);
    let held = ps.split_off(50);
    let cfg = SynthTrainConfig { epochs: 30, seed: 7, ..Default::default() };
    let log = train::<f64>(&ps, &held, &cfg, None).unwrap().log;
    let val: Vec<f64> = log.epochs.iter().map(|e| e.val_l1.unwrap()).collect();
    let (head, tail) = smoothed(&val, 5);
    assert!(val[29] < val[0], "final {} vs first {}", val[29], val[0]);
    assert!(tail < head, "smoothed {tail} vs {head}");
}

#[test]
fn pure_l1_regression_improves_held_out_l1() {
    let corpus = phantom(60, 64, 8);
    let mut ps = pairs(&corpus, 32);
    let held = ps.split_off(ps.len() - 12);
    let cfg = SynthTrainConfig {
        epochs: 20,
        gan_weight: 0.0,
        net: NetShape { patch_size: 32, base_channels: 8, dropout: 0.5 },
        ..Default::default()
    };
    let log = train::<f64>(&ps, &held, &cfg, None).unwrap().log;
    let val: Vec<f64> = log.epochs.iter().map(|e| e.val_l1.unwrap()).collect();
    let (head, tail) = smoothed(&val, 5);
    assert!(tail < head, "smoothed {tail} vs {head}");
}

#[test]
fn synthesize_stays_in_open_unit_interval_and_is_seeded() {
    let gen = GeneratorNet::<f64>::new(NetShape { patch_size: 16, base_channels: 4, dropout: 0.5 }, 3).unwrap();
    let synth = NeuralSynthesizer::new(gen);
    let zero = ConditionalMap::blank(16);
    let out = synth.synthesize(&zero, &mut seed::stream(1, &[])).unwrap();
    assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0 && v.is_finite()));
    let ps = pairs(&phantom(4, 64, 2), 16);
    let a = synth.synthesize(&ps[0].source, &mut seed::stream(5, &[])).unwrap();
    let b = synth.synthesize(&ps[0].source, &mut seed::stream(5, &[])).unwrap();
    assert_eq!(a, b);
    assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn procedural_mean_tracks_conditional_mean() {
    let corpus = phantom(80, 128, 11);
    let ps = pairs(&corpus, 64);
    assert!(ps.len() >= 100, "only {} pairs", ps.len());
    let synth = ProceduralSynthesizer::default();
    for (i, p) in ps.iter().take(100).enumerate() {
        let out = synth.synthesize(&p.source, &mut seed::stream(i as u64, &[])).unwrap();
        let m = p.source.mask();
        let mean = m.data().iter().zip(out.data()).filter(|(&k, _)| k == 1).map(|(_, &v)| v).sum::<f64>()
            / m.count(1) as f64;
        assert!((mean - p.source.mean()).abs() <= 0.03, "pair {i}: {mean} vs {}", p.source.mean());
    }
}

#[test]
fn masked_mse_examples() {
    let region = Grid::filled(4, 4, 1u8);
    let t = Grid::filled(4, 4, 0.1);
    assert!((masked_mse(&Grid::filled(4, 4, 0.0), &t, &region).unwrap() - 0.01).abs() < 1e-15);
    assert_eq!(masked_mse(&t, &t, &region).unwrap(), 0.0);
}

#[test]
fn echo_synthesizer_scores_zero_mse() {
    struct Echo(Vec<(ConditionalMap, lesionkit::SliceImage)>);
    impl Synthesizer for Echo {
        fn name(&self) -> &'static str {
            "echo"
        }
        fn synthesize(&self, map: &ConditionalMap, _: &mut dyn rand::RngCore) -> lesionkit::Result<lesionkit::SliceImage> {
            Ok(self.0.iter().find(|(m, _)| m == map).unwrap().1.clone())
        }
    }
    let ps = pairs(&phantom(4, 64, 2), 16);
    let echo = Echo(ps.iter().map(|p| (p.source.clone(), p.target.clone())).collect());
    assert_eq!(eval_mse(&echo, &ps, 0).unwrap(), 0.0);
    let mask = Grid::filled(16, 16, 1u8);
    let map = compose_conditional(&mask, 0.5, &Grid::filled(16, 16, 0u8)).unwrap();
    let out = procedural_synthesize(&map, &ProceduralParams { noise_sd: 0.0, edge_darken: 0.0, ..Default::default() }, &mut seed::stream(0, &[])).unwrap();
    assert!(out.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
}
