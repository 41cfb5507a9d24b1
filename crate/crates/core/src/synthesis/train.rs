//! Alternating adversarial training of the generator and discriminator.

use std::fs;
use std::path::Path;

use lesionkit_tensor::{AdamConfig, AdamState, Graph, Scalar, Tensor, TensorError, Var};
use rand::RngCore;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::losses::{discriminator_loss, generator_loss};
use super::nets::{DiscriminatorNet, GeneratorNet, NetShape};
use crate::condmap::LesionPair;
use crate::error::{io_err, Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gan_weight: f64,
    pub l1_weight: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub net: NetShape,
    /// Save a generator checkpoint every this many epochs; 0 saves only the
    /// final one.
    pub checkpoint_every: usize,
}

impl Default for SynthTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            gan_weight: 1.0,
            l1_weight: 100.0,
            batch_size: 4,
            seed: 0,
            net: NetShape::default(),
            checkpoint_every: 0,
        }
    }
}

impl SynthTrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("/epochs: must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("/batch_size: must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("/learning_rate: {} must be > 0", self.learning_rate)));
        }
        for (name, v) in [("/beta1", self.beta1), ("/beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name}: {v} must lie in [0, 1)")));
            }
        }
        for (name, v) in [("/gan_weight", self.gan_weight), ("/l1_weight", self.l1_weight)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name}: {v} must be >= 0")));
            }
        }
        self.net.validate().map_err(|e| e.nest("/net"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Unweighted training L1 between generated and target patches.
    pub l1: f64,
    /// Held-out L1, when a validation set was supplied.
    pub val_l1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "d_loss", "g_loss", "l1", "val_l1"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:.9}", e.d_loss),
                format!("{:.9}", e.g_loss),
                format!("{:.9}", e.l1),
                e.val_l1.map(|v| format!("{v:.9}")).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(io_err(path))
    }
}

pub struct Trained<T> {
    pub generator: GeneratorNet<T>,
    pub discriminator: DiscriminatorNet<T>,
    pub log: TrainLog,
}

/// Stack pairs into `[B, 3, P, P]` conditional maps and `[B, 1, P, P]`
/// targets.
pub fn batch_tensors<T: Scalar>(pairs: &[&LesionPair], patch: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut x = Vec::with_capacity(pairs.len() * 3 * patch * patch);
    let mut y = Vec::with_capacity(pairs.len() * patch * patch);
    for p in pairs {
        if p.source.size() != patch || p.target.dims() != (patch, patch) {
            return Err(Error::Dimension(format!(
                "pair {:?} is not {patch}x{patch}",
                p.provenance
            )));
        }
        x.extend(p.source.planes().into_iter().map(T::lit));
        y.extend(p.target.data().iter().map(|&v| T::lit(v)));
    }
    let n = pairs.len();
    Ok((Tensor::new(vec![n, 3, patch, patch], x)?, Tensor::new(vec![n, 1, patch, patch], y)?))
}

fn mean_abs_diff<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    let s: f64 = a.data().iter().zip(b.data()).map(|(&u, &v)| (u - v).abs().to_f64_lossy()).sum();
    s / a.len() as f64
}

fn aborted(epoch: usize, batch: usize, what: &str) -> impl Fn(TensorError) -> Error + '_ {
    move |e| Error::TrainingAborted(format!("epoch {epoch} batch {batch}: {what}: {e}"))
}

fn finite(v: f64, epoch: usize, batch: usize, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::TrainingAborted(format!("epoch {epoch} batch {batch}: {what} is {v}")))
    }
}

/// Mean held-out L1 with seeded dropout noise.
pub fn held_out_l1<T: Scalar>(generator: &GeneratorNet<T>, pairs: &[LesionPair], noise_seed: u64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Usage("held-out L1 of an empty pair set".into()));
    }
    let mut noise = seed::stream(noise_seed, &[seed::tag("held-out-l1")]);
    let mut total = 0.0;
    for chunk in pairs.chunks(8) {
        let refs: Vec<&LesionPair> = chunk.iter().collect();
        let (x, y) = batch_tensors::<T>(&refs, generator.shape.patch_size)?;
        let mut g = Graph::new();
        let xv = g.input(x);
        let out = generator.forward(&mut g, xv, Some(&mut noise))?;
        total += mean_abs_diff(g.value(out), &y) * chunk.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

/// Both networks with their optimizer states.
pub struct GanTrainer<T> {
    pub generator: GeneratorNet<T>,
    pub discriminator: DiscriminatorNet<T>,
    adam_g: AdamState<T>,
    adam_d: AdamState<T>,
    gan_weight: f64,
    l1_weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_loss: f64,
    pub l1: f64,
}

impl<T: Scalar> GanTrainer<T> {
    pub fn new(config: &SynthTrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = GeneratorNet::<T>::new(config.net, seed::derive(config.seed, &[seed::tag("generator")]))?;
        let discriminator =
            DiscriminatorNet::<T>::new(config.net, seed::derive(config.seed, &[seed::tag("discriminator")]))?;
        let adam_g = AdamState::for_store(config.adam(), &generator.store)?;
        let adam_d = AdamState::for_store(config.adam(), &discriminator.store)?;
        Ok(Self { generator, discriminator, adam_g, adam_d, gan_weight: config.gan_weight, l1_weight: config.l1_weight })
    }

    /// Updates only the discriminator, on the real pair and a fake that
    /// enters as a constant.
    pub fn discriminator_step(&mut self, x: &Tensor<T>, y: &Tensor<T>, fake: &Tensor<T>, at: (usize, usize)) -> Result<f64> {
        let (epoch, b) = at;
        let mut gd = Graph::new();
        let xd = gd.input(x.clone());
        let real_img = gd.input(y.clone());
        let fake_img = gd.input(fake.clone());
        let real_logits = self.discriminator.forward(&mut gd, xd, real_img)?;
        let fake_logits = self.discriminator.forward(&mut gd, xd, fake_img)?;
        let d_loss = discriminator_loss(&mut gd, real_logits, fake_logits)?;
        let d_val = finite(gd.value(d_loss).item()?.to_f64_lossy(), epoch, b, "discriminator loss")?;
        self.discriminator.store.zero_grad();
        gd.backward(d_loss, &mut self.discriminator.store).map_err(aborted(epoch, b, "discriminator backward"))?;
        self.adam_d.step_store(&mut self.discriminator.store)?;
        Ok(d_val)
    }

    /// Updates only the generator, whose forward pass `fake` was recorded
    /// in `gg`, against the current discriminator.
    pub fn generator_step(
        &mut self,
        gg: &mut Graph<T>,
        x: Var,
        fake: Var,
        y: &Tensor<T>,
        at: (usize, usize),
    ) -> Result<f64> {
        let (epoch, b) = at;
        let judged = self.discriminator.forward(gg, x, fake)?;
        let g_loss = generator_loss(gg, judged, fake, y, self.gan_weight, self.l1_weight)?;
        let g_val = finite(gg.value(g_loss).item()?.to_f64_lossy(), epoch, b, "generator loss")?;
        self.generator.store.zero_grad();
        gg.backward(g_loss, &mut self.generator.store).map_err(aborted(epoch, b, "generator backward"))?;
        self.adam_g.step_store(&mut self.generator.store)?;
        Ok(g_val)
    }

    /// One discriminator step on the detached fake, then one generator
    /// step against the updated discriminator.
    pub fn step(&mut self, x: &Tensor<T>, y: &Tensor<T>, noise: &mut dyn RngCore, at: (usize, usize)) -> Result<StepLosses> {
        let mut gg = Graph::new();
        let xg = gg.input(x.clone());
        let fake = self.generator.forward(&mut gg, xg, Some(noise))?;
        let d_loss = self.discriminator_step(x, y, gg.value(fake), at)?;
        let g_loss = self.generator_step(&mut gg, xg, fake, y, at)?;
        Ok(StepLosses { d_loss, g_loss, l1: mean_abs_diff(gg.value(fake), y) })
    }
}

/// Per batch: one discriminator step on the real pair and the detached
/// fake, then one generator step against the updated discriminator.
pub fn train<T: Scalar>(
    pairs: &[LesionPair],
    held_out: &[LesionPair],
    config: &SynthTrainConfig,
    checkpoints: Option<&Path>,
) -> Result<Trained<T>> {
    config.validate()?;
    if pairs.len() < 2 {
        return Err(Error::Usage(format!("synthesizer training needs >= 2 pairs, got {}", pairs.len())));
    }
    let patch = config.net.patch_size;
    let mut trainer = GanTrainer::<T>::new(config)?;
    let mut log = TrainLog::default();
    let hyper = serde_json::to_value(config).expect("config serializes");

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut seed::stream(config.seed, &[seed::tag("synth-order"), epoch as u64]));
        let (mut d_sum, mut g_sum, mut l1_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&LesionPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let (x, y) = batch_tensors::<T>(&refs, patch)?;
            let mut noise = seed::stream(config.seed, &[seed::tag("synth-noise"), epoch as u64, b as u64]);
            let losses = trainer.step(&x, &y, &mut noise, (epoch, b))?;
            d_sum += losses.d_loss;
            g_sum += losses.g_loss;
            l1_sum += losses.l1;
            batches += 1;
        }
        let val_l1 = if held_out.is_empty() {
            None
        } else {
            Some(held_out_l1(&trainer.generator, held_out, seed::derive(config.seed, &[seed::tag("val"), epoch as u64]))?)
        };
        let n = batches as f64;
        let entry = EpochLog { epoch, d_loss: d_sum / n, g_loss: g_sum / n, l1: l1_sum / n, val_l1 };
        log::info!(
            "synth epoch {epoch}: d_loss {:.4} g_loss {:.4} l1 {:.4}",
            entry.d_loss,
            entry.g_loss,
            entry.l1
        );
        log.epochs.push(entry);
        if let Some(dir) = checkpoints {
            if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
                trainer.generator.save(&dir.join(format!("epoch_{:04}", epoch + 1)), hyper.clone())?;
            }
        }
    }
    if let Some(dir) = checkpoints {
        trainer.generator.save(&dir.join("final"), hyper)?;
        log.write_csv(&dir.join("train_log.csv"))?;
    }
    Ok(Trained { generator: trainer.generator, discriminator: trainer.discriminator, log })
}
