//! Parameterized layers over [`Graph`] ops.

use rand::Rng;

use crate::error::Result;
use crate::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
    /// He/Kaiming normal scaled by fan-in.
    He,
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn init_tensor<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, init: Init, rng: &mut R) -> Tensor<T> {
    let sd = match init {
        Init::Normal(sd) => sd,
        Init::He => (2.0 / fan_in as f64).sqrt(),
    };
    Tensor::from_fn(shape, |_| T::lit(sd * standard_normal(rng)))
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let w = init_tensor(&[out_c, in_c, kernel, kernel], in_c * kernel * kernel, init, rng);
        let weight = store.add(format!("{name}.weight"), w)?;
        let bias = if bias {
            Some(store.add(format!("{name}.bias"), Tensor::zeros(&[out_c]))?)
        } else {
            None
        };
        Ok(Self { weight, bias, stride, pad })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let y = g.conv2d(x, w, self.stride, self.pad)?;
        match self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.channel_bias(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        // Each output pixel sees roughly in_c·(k/stride)² inputs.
        let fan_in = (in_c * kernel * kernel / (stride * stride)).max(1);
        let w = init_tensor(&[in_c, out_c, kernel, kernel], fan_in, init, rng);
        let weight = store.add(format!("{name}.weight"), w)?;
        let bias = if bias {
            Some(store.add(format!("{name}.bias"), Tensor::zeros(&[out_c]))?)
        } else {
            None
        };
        Ok(Self { weight, bias, stride, pad })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let y = g.conv2d_transpose(x, w, self.stride, self.pad)?;
        match self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.channel_bias(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct InstanceNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl InstanceNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[channels], T::one()))?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[channels]))?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.instance_norm(x, gain, bias)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layer_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::<f64>::new();
        let down = Conv2d::new(&mut store, "d", 3, 8, 4, 2, 1, true, Init::Normal(0.02), &mut rng).unwrap();
        let up = ConvTranspose2d::new(&mut store, "u", 8, 2, 4, 2, 1, false, Init::He, &mut rng).unwrap();
        let norm = InstanceNorm::new(&mut store, "n", 8).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::full(&[2, 3, 16, 16], 0.5));
        let y = down.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 8, 8, 8]);
        let y = norm.forward(&mut g, &store, y).unwrap();
        let z = up.forward(&mut g, &store, y).unwrap();
        assert_eq!(g.value(z).shape(), &[2, 2, 16, 16]);
        assert_eq!(store.len(), 5);
    }

    #[test]
    fn init_is_seeded() {
        let make = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut store = ParamStore::<f64>::new();
            Conv2d::new(&mut store, "c", 2, 2, 3, 1, 1, false, Init::He, &mut rng).unwrap();
            store.fingerprint()
        };
        assert_eq!(make(), make());
    }
}
