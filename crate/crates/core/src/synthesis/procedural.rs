//! Image-processing lesion synthesizer: mean fill, smooth noise, darkened
//! edges and an outward feather.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::Synthesizer;
use crate::condmap::ConditionalMap;
use crate::error::{Error, Result};
use crate::grid::{Grid, SliceImage};
use crate::imgproc::{band_limited_noise, feather};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProceduralParams {
    pub noise_sd: f64,
    pub noise_sigma: f64,
    pub edge_darken: f64,
    pub feather_sigma: f64,
}

impl Default for ProceduralParams {
    fn default() -> Self {
        Self { noise_sd: 0.05, noise_sigma: 1.5, edge_darken: 0.1, feather_sigma: 1.0 }
    }
}

impl ProceduralParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("/noise_sd", self.noise_sd >= 0.0 && self.noise_sd.is_finite()),
            ("/noise_sigma", self.noise_sigma > 0.0 && self.noise_sigma.is_finite()),
            ("/edge_darken", self.edge_darken.is_finite()),
            ("/feather_sigma", self.feather_sigma > 0.0 && self.feather_sigma.is_finite()),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::Config(format!("{name}: out of range in {self:?}"))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ProceduralSynthesizer {
    pub params: ProceduralParams,
}

pub fn procedural_synthesize(map: &ConditionalMap, params: &ProceduralParams, rng: &mut dyn RngCore) -> Result<SliceImage> {
    params.validate()?;
    let n = map.size();
    let mask = map.mask();
    if mask.count(1) == 0 {
        return Ok(Grid::filled(n, n, 0.0));
    }
    let noise = if params.noise_sd > 0.0 {
        band_limited_noise(n, n, params.noise_sd, params.noise_sigma, rng)
    } else {
        Grid::filled(n, n, 0.0)
    };
    // alpha is 1 on the shape and decays outward over the blurred ring
    let ring = feather(mask, params.feather_sigma);
    let edges = map.edges();
    Ok(Grid::from_fn(n, n, |r, c| {
        let alpha = if mask.get(r, c) != 0 { 1.0 } else { ring.get(r, c) };
        let fill = map.mean() + noise.get(r, c) - params.edge_darken * f64::from(edges.get(r, c));
        (alpha * fill).clamp(0.0, 1.0)
    }))
}

impl Synthesizer for ProceduralSynthesizer {
    fn name(&self) -> &str {
        "procedural"
    }

    fn synthesize(&self, map: &ConditionalMap, rng: &mut dyn RngCore) -> Result<SliceImage> {
        procedural_synthesize(map, &self.params, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condmap::compose_conditional;
    use crate::seed;

    #[test]
    fn empty_mask_gives_zero_patch() {
        let map = ConditionalMap::blank(16);
        let out = procedural_synthesize(&map, &ProceduralParams::default(), &mut seed::stream(1, &[])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noiseless_full_mask_is_constant() {
        let map = compose_conditional(&Grid::filled(16, 16, 1), 0.5, &Grid::filled(16, 16, 0)).unwrap();
        let params = ProceduralParams { noise_sd: 0.0, ..Default::default() };
        let out = procedural_synthesize(&map, &params, &mut seed::stream(1, &[])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }
}
