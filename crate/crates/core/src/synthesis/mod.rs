//! Lesion synthesizers: a conditional adversarial generator and a
//! procedural backend behind one [`Synthesizer`] interface.

pub mod losses;
pub mod nets;
pub mod procedural;
pub mod train;

use rand::RngCore;

use crate::condmap::{ConditionalMap, LesionPair};
use crate::error::{Error, Result};
use crate::grid::{Grid, SliceImage};
use crate::imgproc::dilate;
use crate::seed;

pub use losses::{discriminator_loss, generator_loss};
pub use nets::{DiscriminatorNet, GeneratorNet, NetShape};
pub use procedural::{procedural_synthesize, ProceduralParams, ProceduralSynthesizer};
pub use train::{batch_tensors, held_out_l1, train, EpochLog, GanTrainer, StepLosses, SynthTrainConfig, TrainLog, Trained};

/// Sigmoid outputs are kept strictly inside `(0, 1)` after rounding.
const OPEN_UNIT: f64 = 1e-9;

/// Maps a conditional map to a lesion patch of the same size.
pub trait Synthesizer {
    fn name(&self) -> &str;
    fn synthesize(&self, map: &ConditionalMap, rng: &mut dyn RngCore) -> Result<SliceImage>;
}

pub struct NeuralSynthesizer {
    pub generator: GeneratorNet<f64>,
}

impl NeuralSynthesizer {
    pub fn new(generator: GeneratorNet<f64>) -> Self {
        Self { generator }
    }
}

/// Dropout stays active, so `rng` is the generator's noise source.
pub fn synthesize(generator: &GeneratorNet<f64>, map: &ConditionalMap, rng: &mut dyn RngCore) -> Result<SliceImage> {
    let p = generator.shape.patch_size;
    if map.size() != p {
        return Err(Error::Dimension(format!("map is {}x{0}, generator expects {p}x{p}", map.size())));
    }
    let out = generator.infer(map.planes(), Some(rng))?;
    Ok(Grid::new(p, p, out.into_iter().map(|v| v.clamp(OPEN_UNIT, 1.0 - OPEN_UNIT)).collect())?)
}

impl Synthesizer for NeuralSynthesizer {
    fn name(&self) -> &str {
        "neural"
    }

    fn synthesize(&self, map: &ConditionalMap, rng: &mut dyn RngCore) -> Result<SliceImage> {
        synthesize(&self.generator, map, rng)
    }
}

/// Pixels scored by [`eval_mse`]: the lesion mask plus a 2-pixel ring.
pub fn mse_region(map: &ConditionalMap) -> crate::grid::Mask {
    dilate(map.mask(), 2)
}

/// Mean over pairs of the per-pixel squared error on [`mse_region`].
pub fn eval_mse(synth: &dyn Synthesizer, pairs: &[LesionPair], noise_seed: u64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Usage("MSE over an empty pair set".into()));
    }
    let mut total = 0.0;
    for (i, pair) in pairs.iter().enumerate() {
        let mut rng = seed::stream(noise_seed, &[seed::tag("eval-mse"), i as u64]);
        let out = synth.synthesize(&pair.source, &mut rng)?;
        total += masked_mse(&out, &pair.target, &mse_region(&pair.source))?;
    }
    Ok(total / pairs.len() as f64)
}

pub fn masked_mse(a: &SliceImage, b: &SliceImage, region: &crate::grid::Mask) -> Result<f64> {
    a.expect_dims(b, "masked_mse")?;
    a.expect_dims(region, "masked_mse")?;
    let (sum, n) = a
        .data()
        .iter()
        .zip(b.data())
        .zip(region.data())
        .filter(|(_, &m)| m != 0)
        .fold((0.0, 0usize), |(s, n), ((&x, &y), _)| (s + (x - y) * (x - y), n + 1));
    if n == 0 {
        return Ok(0.0);
    }
    Ok(sum / n as f64)
}
