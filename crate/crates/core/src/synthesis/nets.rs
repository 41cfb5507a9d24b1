//! Encoder-decoder generator and patch discriminator.

use std::path::Path;

use lesionkit_tensor::checkpoint::{load_into, read_manifest, save_checkpoint};
use lesionkit_tensor::nn::{Conv2d, ConvTranspose2d, Init, InstanceNorm};
use lesionkit_tensor::{Graph, ParamStore, Scalar, Tensor, Var};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const LEAK: f64 = 0.2;
const INIT: Init = Init::Normal(0.02);

/// Shape hyperparameters shared by both networks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetShape {
    pub patch_size: usize,
    /// Width of the first block; deeper blocks use 2× and 4×.
    pub base_channels: usize,
    pub dropout: f64,
}

impl Default for NetShape {
    fn default() -> Self {
        Self { patch_size: 64, base_channels: 32, dropout: 0.5 }
    }
}

impl NetShape {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 16 || self.patch_size % 16 != 0 {
            return Err(Error::Config(format!(
                "/patch_size: {} must be a multiple of 16 and >= 16",
                self.patch_size
            )));
        }
        if self.base_channels == 0 {
            return Err(Error::Config("/base_channels: must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("/dropout: {} must lie in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Four stride-2 down blocks, four transposed-conv up blocks with skip
/// concatenation, sigmoid output. Input `[N, 3, P, P]`, output `[N, 1, P, P]`.
pub struct GeneratorNet<T> {
    pub shape: NetShape,
    pub store: ParamStore<T>,
    d1: Conv2d,
    d2: Conv2d,
    n2: InstanceNorm,
    d3: Conv2d,
    n3: InstanceNorm,
    d4: Conv2d,
    u1: ConvTranspose2d,
    m1: InstanceNorm,
    u2: ConvTranspose2d,
    m2: InstanceNorm,
    u3: ConvTranspose2d,
    m3: InstanceNorm,
    u4: ConvTranspose2d,
}

impl<T: Scalar> GeneratorNet<T> {
    pub fn new(shape: NetShape, init_seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = seed::stream(init_seed, &[seed::tag("generator-init")]);
        let rng = &mut rng;
        let mut store = ParamStore::new();
        let s = &mut store;
        let b = shape.base_channels;
        let down = |s: &mut ParamStore<T>, name: &str, i, o, bias, rng: &mut seed::Rng| {
            Conv2d::new(s, name, i, o, 4, 2, 1, bias, INIT, rng)
        };
        let up = |s: &mut ParamStore<T>, name: &str, i, o, bias, rng: &mut seed::Rng| {
            ConvTranspose2d::new(s, name, i, o, 4, 2, 1, bias, INIT, rng)
        };
        let d1 = down(s, "g.down1", 3, b, true, rng)?;
        let d2 = down(s, "g.down2", b, 2 * b, false, rng)?;
        let n2 = InstanceNorm::new(s, "g.down2.norm", 2 * b)?;
        let d3 = down(s, "g.down3", 2 * b, 4 * b, false, rng)?;
        let n3 = InstanceNorm::new(s, "g.down3.norm", 4 * b)?;
        let d4 = down(s, "g.down4", 4 * b, 4 * b, true, rng)?;
        let u1 = up(s, "g.up1", 4 * b, 4 * b, false, rng)?;
        let m1 = InstanceNorm::new(s, "g.up1.norm", 4 * b)?;
        let u2 = up(s, "g.up2", 8 * b, 2 * b, false, rng)?;
        let m2 = InstanceNorm::new(s, "g.up2.norm", 2 * b)?;
        let u3 = up(s, "g.up3", 4 * b, b, false, rng)?;
        let m3 = InstanceNorm::new(s, "g.up3.norm", b)?;
        let u4 = up(s, "g.up4", 2 * b, 1, true, rng)?;
        Ok(Self { shape, store, d1, d2, n2, d3, n3, d4, u1, m1, u2, m2, u3, m3, u4 })
    }

    /// Output probabilities. Dropout runs only when `noise` is given; it is
    /// the generator's source of stochasticity.
    pub fn forward(&self, g: &mut Graph<T>, x: Var, mut noise: Option<&mut dyn RngCore>) -> Result<Var> {
        let p = self.shape.patch_size;
        let (_, c, h, w) = g.value(x).dims4()?;
        if (c, h, w) != (3, p, p) {
            return Err(Error::Dimension(format!("generator expects [N, 3, {p}, {p}], got {:?}", g.value(x).shape())));
        }
        let st = &self.store;
        let leak = T::lit(LEAK);
        let e1 = self.d1.forward(g, st, x)?;
        let e1 = g.leaky_relu(e1, leak)?;
        let e2 = self.d2.forward(g, st, e1)?;
        let e2 = self.n2.forward(g, st, e2)?;
        let e2 = g.leaky_relu(e2, leak)?;
        let e3 = self.d3.forward(g, st, e2)?;
        let e3 = self.n3.forward(g, st, e3)?;
        let e3 = g.leaky_relu(e3, leak)?;
        let e4 = self.d4.forward(g, st, e3)?;
        let e4 = g.relu(e4)?;

        let rate = self.shape.dropout;
        let mut drop = |g: &mut Graph<T>, v: Var| -> Result<Var> {
            match noise.as_deref_mut() {
                Some(rng) if rate > 0.0 => Ok(g.dropout(v, rate, rng)?),
                _ => Ok(v),
            }
        };
        let y = self.u1.forward(g, st, e4)?;
        let y = self.m1.forward(g, st, y)?;
        let y = g.relu(y)?;
        let y = drop(g, y)?;
        let y = g.concat_channels(y, e3)?;
        let y = self.u2.forward(g, st, y)?;
        let y = self.m2.forward(g, st, y)?;
        let y = g.relu(y)?;
        let y = drop(g, y)?;
        let y = g.concat_channels(y, e2)?;
        let y = self.u3.forward(g, st, y)?;
        let y = self.m3.forward(g, st, y)?;
        let y = g.relu(y)?;
        let y = g.concat_channels(y, e1)?;
        let y = self.u4.forward(g, st, y)?;
        Ok(g.sigmoid(y))
    }

    /// One-shot inference on a single `[3, P, P]` plane stack.
    pub fn infer(&self, planes: Vec<T>, noise: Option<&mut dyn RngCore>) -> Result<Vec<T>> {
        let p = self.shape.patch_size;
        if planes.len() != 3 * p * p {
            return Err(Error::Dimension(format!("generator expects 3x{p}x{p} planes, got {} values", planes.len())));
        }
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 3, p, p], planes)?);
        let y = self.forward(&mut g, x, noise)?;
        Ok(g.value(y).data().to_vec())
    }
}

impl<T: Scalar> GeneratorNet<T> {
    pub fn save(&self, dir: &Path, training: serde_json::Value) -> Result<()> {
        let hyper = serde_json::json!({ "kind": "generator", "shape": self.shape, "training": training });
        Ok(save_checkpoint(&self.store, dir, hyper)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        let hyper = &manifest.hyperparameters;
        if hyper.get("kind").and_then(|k| k.as_str()) != Some("generator") {
            return Err(Error::Usage(format!("{} is not a generator checkpoint", dir.display())));
        }
        let shape: NetShape = serde_json::from_value(hyper["shape"].clone())
            .map_err(|e| Error::Usage(format!("{}: bad generator shape: {e}", dir.display())))?;
        let mut net = Self::new(shape, 0)?;
        load_into(&mut net.store, dir)?;
        Ok(net)
    }
}

/// Patch discriminator over `(conditional map, image)`: three stride-2
/// blocks and a 1×1 conv to one logit per receptive field.
pub struct DiscriminatorNet<T> {
    pub shape: NetShape,
    pub store: ParamStore<T>,
    c1: Conv2d,
    c2: Conv2d,
    n2: InstanceNorm,
    c3: Conv2d,
    n3: InstanceNorm,
    head: Conv2d,
}

impl<T: Scalar> DiscriminatorNet<T> {
    pub fn new(shape: NetShape, init_seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = seed::stream(init_seed, &[seed::tag("discriminator-init")]);
        let rng = &mut rng;
        let mut store = ParamStore::new();
        let s = &mut store;
        let b = shape.base_channels;
        let c1 = Conv2d::new(s, "d.conv1", 4, b, 4, 2, 1, true, INIT, rng)?;
        let c2 = Conv2d::new(s, "d.conv2", b, 2 * b, 4, 2, 1, false, INIT, rng)?;
        let n2 = InstanceNorm::new(s, "d.conv2.norm", 2 * b)?;
        let c3 = Conv2d::new(s, "d.conv3", 2 * b, 4 * b, 4, 2, 1, false, INIT, rng)?;
        let n3 = InstanceNorm::new(s, "d.conv3.norm", 4 * b)?;
        let head = Conv2d::new(s, "d.head", 4 * b, 1, 1, 1, 0, true, INIT, rng)?;
        Ok(Self { shape, store, c1, c2, n2, c3, n3, head })
    }

    /// Logit map `[N, 1, P/8, P/8]`.
    pub fn forward(&self, g: &mut Graph<T>, map: Var, image: Var) -> Result<Var> {
        let st = &self.store;
        let leak = T::lit(LEAK);
        let x = g.concat_channels(map, image)?;
        let x = self.c1.forward(g, st, x)?;
        let x = g.leaky_relu(x, leak)?;
        let x = self.c2.forward(g, st, x)?;
        let x = self.n2.forward(g, st, x)?;
        let x = g.leaky_relu(x, leak)?;
        let x = self.c3.forward(g, st, x)?;
        let x = self.n3.forward(g, st, x)?;
        let x = g.leaky_relu(x, leak)?;
        Ok(self.head.forward(g, st, x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetShape {
        NetShape { patch_size: 16, base_channels: 2, dropout: 0.5 }
    }

    #[test]
    fn generator_and_discriminator_shapes() {
        let shape = NetShape { patch_size: 64, base_channels: 4, dropout: 0.5 };
        let gnet = GeneratorNet::<f64>::new(shape, 1).unwrap();
        let dnet = DiscriminatorNet::<f64>::new(shape, 1).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, 3, 64, 64]));
        let y = gnet.forward(&mut g, x, None).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 1, 64, 64]);
        assert!(g.value(y).data().iter().all(|&v| v > 0.0 && v < 1.0));
        let logits = dnet.forward(&mut g, x, y).unwrap();
        assert_eq!(g.value(logits).shape(), &[2, 1, 8, 8]);
        assert!(g.value(logits).all_finite());
    }

    #[test]
    fn dropout_noise_changes_output_and_is_seeded() {
        let net = GeneratorNet::<f64>::new(tiny(), 3).unwrap();
        let planes: Vec<f64> = (0..3 * 256).map(|i| (i % 7) as f64 / 7.0).collect();
        let run = |s| net.infer(planes.clone(), Some(&mut seed::stream(s, &[]))).unwrap();
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
        assert_eq!(net.infer(planes.clone(), None).unwrap(), net.infer(planes, None).unwrap());
    }

    #[test]
    fn wrong_input_size_is_a_dimension_error() {
        let net = GeneratorNet::<f64>::new(tiny(), 3).unwrap();
        assert!(matches!(net.infer(vec![0.0; 3 * 32 * 32], None), Err(Error::Dimension(_))));
        assert!(NetShape { patch_size: 40, ..tiny() }.validate().is_err());
    }
}
