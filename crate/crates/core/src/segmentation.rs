//! Depth-3 U-Net lesion segmenter trained with a soft-Dice loss.

use std::fs;
use std::path::Path;

use lesionkit_tensor::checkpoint::{load_into, read_manifest, save_checkpoint};
use lesionkit_tensor::nn::{Conv2d, ConvTranspose2d, Init, InstanceNorm};
use lesionkit_tensor::{AdamConfig, AdamState, Graph, ParamStore, Scalar, Tensor, TensorError, Var};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusSlice;
use crate::error::{io_err, Error, Result};
use crate::grid::{Grid, Mask, SliceImage, LESION};
use crate::seed;

/// `1 - (2Σpg + ε) / (Σp + Σg + ε)` over one probability map.
pub fn soft_dice_loss(prob: &Grid<f64>, gt: &Mask, eps: f64) -> Result<f64> {
    prob.expect_dims(gt, "soft_dice_loss")?;
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for (&p, &g) in prob.data().iter().zip(gt.data()) {
        let g = f64::from(g);
        inter += p * g;
        sp += p;
        sg += g;
    }
    Ok(1.0 - (2.0 * inter + eps) / (sp + sg + eps))
}

pub fn binarize(prob: &Grid<f64>, threshold: f64) -> Mask {
    prob.map(|p| (p >= threshold) as u8)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegShape {
    /// Channels of the first level; deeper levels use 2×, 4× and a 8×
    /// bottleneck.
    pub base_channels: usize,
}

impl Default for SegShape {
    fn default() -> Self {
        Self { base_channels: 16 }
    }
}

struct Block {
    conv: Conv2d,
    norm: InstanceNorm,
}

impl Block {
    fn new<T: Scalar>(s: &mut ParamStore<T>, name: &str, i: usize, o: usize, rng: &mut seed::Rng) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(s, name, i, o, 3, 1, 1, false, Init::He, rng)?,
            norm: InstanceNorm::new(s, &format!("{name}.norm"), o)?,
        })
    }

    fn forward<T: Scalar>(&self, g: &mut Graph<T>, s: &ParamStore<T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(g, s, x)?;
        let y = self.norm.forward(g, s, y)?;
        Ok(g.relu(y)?)
    }
}

/// U-Net: three pooled encoder levels, a bottleneck, and a decoder of
/// transposed-conv upsampling with skip concatenation.
/// Input `[N, 1, H, W]` with `H, W` divisible by 8.
pub struct SegNet<T> {
    pub shape: SegShape,
    pub store: ParamStore<T>,
    enc: [Block; 3],
    bottleneck: Block,
    up: [ConvTranspose2d; 3],
    dec: [Block; 3],
    head: Conv2d,
}

impl<T: Scalar> SegNet<T> {
    pub fn new(shape: SegShape, init_seed: u64) -> Result<Self> {
        if shape.base_channels == 0 {
            return Err(Error::Config("/net/base_channels: must be >= 1".into()));
        }
        let mut rng = seed::stream(init_seed, &[seed::tag("segnet-init")]);
        let r = &mut rng;
        let mut store = ParamStore::new();
        let s = &mut store;
        let b = shape.base_channels;
        let enc = [
            Block::new(s, "seg.enc1", 1, b, r)?,
            Block::new(s, "seg.enc2", b, 2 * b, r)?,
            Block::new(s, "seg.enc3", 2 * b, 4 * b, r)?,
        ];
        let bottleneck = Block::new(s, "seg.bottleneck", 4 * b, 8 * b, r)?;
        let up = [
            ConvTranspose2d::new(s, "seg.up3", 8 * b, 4 * b, 2, 2, 0, true, Init::He, r)?,
            ConvTranspose2d::new(s, "seg.up2", 4 * b, 2 * b, 2, 2, 0, true, Init::He, r)?,
            ConvTranspose2d::new(s, "seg.up1", 2 * b, b, 2, 2, 0, true, Init::He, r)?,
        ];
        let dec = [
            Block::new(s, "seg.dec3", 8 * b, 4 * b, r)?,
            Block::new(s, "seg.dec2", 4 * b, 2 * b, r)?,
            Block::new(s, "seg.dec1", 2 * b, b, r)?,
        ];
        let head = Conv2d::new(s, "seg.head", b, 1, 1, 1, 0, true, Init::He, r)?;
        Ok(Self { shape, store, enc, bottleneck, up, dec, head })
    }

    /// Lesion probabilities, same spatial size as the input.
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.forward_with(g, &self.store, x)
    }

    /// [`Self::forward`] with parameters read from `s`, which must share
    /// this network's layout.
    pub fn forward_with(&self, g: &mut Graph<T>, s: &ParamStore<T>, x: Var) -> Result<Var> {
        let (_, c, h, w) = g.value(x).dims4()?;
        if c != 1 || h % 8 != 0 || w % 8 != 0 || h < 16 || w < 16 {
            return Err(Error::Dimension(format!(
                "segmenter expects [N, 1, H, W] with H, W multiples of 8 and >= 16, got {:?}",
                g.value(x).shape()
            )));
        }
        let e1 = self.enc[0].forward(g, s, x)?;
        let p = g.max_pool2(e1)?;
        let e2 = self.enc[1].forward(g, s, p)?;
        let p = g.max_pool2(e2)?;
        let e3 = self.enc[2].forward(g, s, p)?;
        let p = g.max_pool2(e3)?;
        let mut y = self.bottleneck.forward(g, s, p)?;
        for (i, skip) in [e3, e2, e1].into_iter().enumerate() {
            y = self.up[i].forward(g, s, y)?;
            y = g.concat_channels(y, skip)?;
            y = self.dec[i].forward(g, s, y)?;
        }
        let logits = self.head.forward(g, s, y)?;
        Ok(g.sigmoid(logits))
    }

    pub fn save(&self, dir: &Path, training: serde_json::Value) -> Result<()> {
        let hyper = serde_json::json!({ "kind": "segnet", "shape": self.shape, "training": training });
        Ok(save_checkpoint(&self.store, dir, hyper)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        let hyper = &manifest.hyperparameters;
        if hyper.get("kind").and_then(|k| k.as_str()) != Some("segnet") {
            return Err(Error::Usage(format!("{} is not a segmenter checkpoint", dir.display())));
        }
        let shape: SegShape = serde_json::from_value(hyper["shape"].clone())
            .map_err(|e| Error::Usage(format!("{}: bad segmenter shape: {e}", dir.display())))?;
        let mut net = Self::new(shape, 0)?;
        load_into(&mut net.store, dir)?;
        Ok(net)
    }
}

/// Probability map for one slice; no state is touched.
pub fn predict<T: Scalar>(net: &SegNet<T>, image: &SliceImage) -> Result<Grid<f64>> {
    let (h, w) = image.dims();
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 1, h, w], image.data().iter().map(|&v| T::lit(v)).collect())?);
    let y = net.forward(&mut g, x)?;
    Ok(Grid::new(h, w, g.value(y).data().iter().map(|v| v.to_f64_lossy()).collect())?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegTrainConfig {
    pub epochs: usize,
    /// Batches per epoch; `None` makes one pass over the training set.
    /// Fixing it equalizes optimizer steps across training sets of
    /// different size.
    pub steps_per_epoch: Option<usize>,
    pub learning_rate: f64,
    /// The rate follows a cosine from `learning_rate` down to
    /// `learning_rate · final_lr_fraction` at the last step; 1 keeps it
    /// constant.
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub dice_epsilon: f64,
    pub threshold: f64,
    pub seed: u64,
    pub net: SegShape,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            steps_per_epoch: None,
            learning_rate: 1e-3,
            final_lr_fraction: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 4,
            dice_epsilon: 1.0,
            threshold: 0.5,
            seed: 0,
            net: SegShape::default(),
        }
    }
}

impl SegTrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() }
    }

    /// Rate for optimizer step `step` of `total`.
    pub fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        let f = self.final_lr_fraction;
        let progress = step as f64 / total.saturating_sub(1).max(1) as f64;
        self.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("/epochs: must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("/batch_size: must be >= 1".into()));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Config("/steps_per_epoch: must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("/learning_rate: {} must be > 0", self.learning_rate)));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::Config(format!("/final_lr_fraction: {} must lie in (0, 1]", self.final_lr_fraction)));
        }
        for (name, v) in [("/beta1", self.beta1), ("/beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name}: {v} must lie in [0, 1)")));
            }
        }
        if !(self.dice_epsilon > 0.0) {
            return Err(Error::Config("/dice_epsilon: must be > 0".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("/threshold: {} must lie in (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegEpochLog {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SegTrainLog {
    pub epochs: Vec<SegEpochLog>,
}

impl SegTrainLog {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "loss"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), format!("{:.9}", e.loss)])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(io_err(path))
    }
}

pub struct SegTrained<T> {
    pub net: SegNet<T>,
    pub log: SegTrainLog,
}

fn epoch_order(n: usize, config: &SegTrainConfig, epoch: usize) -> Vec<usize> {
    let wanted = config.steps_per_epoch.map_or(n, |s| s * config.batch_size);
    let mut order = Vec::with_capacity(wanted + n);
    let mut round = 0u64;
    while order.len() < wanted {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut seed::stream(config.seed, &[seed::tag("seg-order"), epoch as u64, round]));
        order.extend(perm);
        round += 1;
    }
    order.truncate(wanted);
    order
}

fn seg_batch<T: Scalar>(slices: &[CorpusSlice], idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
    let (h, w) = slices[idx[0]].image.dims();
    let mut x = Vec::with_capacity(idx.len() * h * w);
    let mut y = Vec::with_capacity(idx.len() * h * w);
    for &i in idx {
        let s = &slices[i];
        if s.image.dims() != (h, w) || s.label.dims() != (h, w) {
            return Err(Error::Dimension(format!("slice {} is not {h}x{w}", s.id)));
        }
        x.extend(s.image.data().iter().map(|&v| T::lit(v)));
        y.extend(s.label.data().iter().map(|&l| if l == LESION { T::one() } else { T::zero() }));
    }
    let n = idx.len();
    Ok((Tensor::new(vec![n, 1, h, w], x)?, Tensor::new(vec![n, 1, h, w], y)?))
}

pub fn train_seg<T: Scalar>(slices: &[CorpusSlice], config: &SegTrainConfig, checkpoints: Option<&Path>) -> Result<SegTrained<T>> {
    config.validate()?;
    if slices.is_empty() {
        return Err(Error::Usage("segmenter training needs at least one slice".into()));
    }
    if !slices.iter().any(|s| s.label.count(LESION) > 0) {
        return Err(Error::Usage("no training slice carries a lesion label".into()));
    }
    let mut net = SegNet::<T>::new(config.net, seed::derive(config.seed, &[seed::tag("segnet")]))?;
    let mut adam = AdamState::for_store(config.adam(), &net.store)?;
    let mut log = SegTrainLog::default();
    let per_epoch = config.steps_per_epoch.unwrap_or_else(|| slices.len().div_ceil(config.batch_size));
    let total = config.epochs * per_epoch;
    let mut step = 0;
    for epoch in 0..config.epochs {
        let order = epoch_order(slices.len(), config, epoch);
        let (mut sum, mut batches) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            adam.config.learning_rate = config.learning_rate_at(step, total);
            step += 1;
            let (x, y) = seg_batch::<T>(slices, chunk)?;
            let mut g = Graph::new();
            let xv = g.input(x);
            let p = net.forward(&mut g, xv)?;
            let loss = g.soft_dice(p, &y, T::lit(config.dice_epsilon))?;
            let v = g.value(loss).item()?.to_f64_lossy();
            if !v.is_finite() {
                return Err(Error::TrainingAborted(format!("epoch {epoch} batch {b}: soft-Dice loss is {v}")));
            }
            net.store.zero_grad();
            g.backward(loss, &mut net.store).map_err(|e: TensorError| {
                Error::TrainingAborted(format!("epoch {epoch} batch {b}: backward: {e}"))
            })?;
            adam.step_store(&mut net.store)?;
            if !net.store.iter().all(|p| p.value.all_finite()) {
                return Err(Error::TrainingAborted(format!("epoch {epoch} batch {b}: parameters became non-finite")));
            }
            sum += v;
            batches += 1;
        }
        let entry = SegEpochLog { epoch, loss: sum / batches as f64 };
        log::info!("seg epoch {epoch}: loss {:.4}", entry.loss);
        log.epochs.push(entry);
    }
    if let Some(dir) = checkpoints {
        net.save(&dir.join("final"), serde_json::to_value(config).expect("config serializes"))?;
        log.write_csv(&dir.join("train_log.csv"))?;
    }
    Ok(SegTrained { net, log })
}
