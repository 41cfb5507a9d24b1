//! Procedural liver-slice phantoms with known liver and lesion labels.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{quantize, Corpus, CorpusManifest, CorpusSlice};
use crate::error::{Error, Result};
use crate::grid::{Grid, LabelMask, Mask, SliceImage, BACKGROUND, LESION, LIVER};
use crate::imgproc::{band_limited_noise, dilate};
use crate::seed;

/// Intensity of tissue outside the liver.
const BACKGROUND_LEVEL: f64 = 0.15;
const PLACEMENT_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    pub image_size: usize,
    pub liver_area_fraction: [f64; 2],
    pub lesions_per_slice: [usize; 2],
    pub lesion_radius_px: [f64; 2],
    pub liver_intensity: MeanSd,
    pub lesion_intensity: MeanSd,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            image_size: 128,
            liver_area_fraction: [0.25, 0.45],
            lesions_per_slice: [0, 3],
            lesion_radius_px: [3.0, 12.0],
            liver_intensity: MeanSd { mean: 0.55, sd: 0.03 },
            lesion_intensity: MeanSd { mean: 0.35, sd: 0.05 },
            noise_sd: 0.02,
            seed: 0,
        }
    }
}

fn ordered<T: PartialOrd + std::fmt::Debug>(r: &[T; 2], pointer: &str) -> Result<()> {
    if r[0] <= r[1] {
        Ok(())
    } else {
        Err(Error::Config(format!("{pointer}: range {r:?} is not ordered (min > max)")))
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 32 {
            return Err(Error::Config(format!("/image_size: {} must be >= 32", self.image_size)));
        }
        ordered(&self.liver_area_fraction, "/liver_area_fraction")?;
        ordered(&self.lesions_per_slice, "/lesions_per_slice")?;
        ordered(&self.lesion_radius_px, "/lesion_radius_px")?;
        let [lo, hi] = self.liver_area_fraction;
        if !(lo > 0.0 && hi < 0.8) {
            return Err(Error::Config("/liver_area_fraction: must lie within (0, 0.8)".into()));
        }
        if !(self.lesion_radius_px[0] >= 1.0) {
            return Err(Error::Config("/lesion_radius_px: minimum radius must be >= 1".into()));
        }
        for (name, ms) in [("/liver_intensity", self.liver_intensity), ("/lesion_intensity", self.lesion_intensity)] {
            if !(ms.mean > 0.0 && ms.mean < 1.0) || !(ms.sd >= 0.0) {
                return Err(Error::Config(format!("{name}: mean must be in (0,1) and sd >= 0")));
            }
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::Config("/noise_sd: must be >= 0".into()));
        }
        Ok(())
    }
}

/// Star-shaped blob: an ellipse whose radius is modulated by a few
/// low-frequency harmonics.
struct Blob {
    center: (f64, f64),
    base: f64,
    aspect: f64,
    angle: f64,
    harmonics: Vec<(f64, f64, f64)>,
}

impl Blob {
    /// Normalized radial position (≤ 1 inside).
    fn radial(&self, r: f64, c: f64) -> f64 {
        let (dy, dx) = (r - self.center.0, c - self.center.1);
        let (s, co) = self.angle.sin_cos();
        let u = (dx * co + dy * s) / self.aspect.sqrt();
        let v = (-dx * s + dy * co) * self.aspect.sqrt();
        let theta = v.atan2(u);
        let edge: f64 = 1.0 + self.harmonics.iter().map(|&(k, a, p)| a * (k * theta + p).cos()).sum::<f64>();
        u.hypot(v) / (self.base * edge)
    }

    fn max_extent(&self) -> f64 {
        let amp: f64 = self.harmonics.iter().map(|h| h.1.abs()).sum();
        self.base * (1.0 + amp) * self.aspect.max(1.0 / self.aspect).sqrt() + 1.0
    }

    fn rasterize(&self, size: usize) -> Mask {
        let e = self.max_extent();
        let lo = |c: f64| ((c - e).floor().max(0.0)) as usize;
        let hi = |c: f64| ((c + e).ceil() as usize).min(size - 1);
        let mut m = Grid::filled(size, size, 0u8);
        for r in lo(self.center.0)..=hi(self.center.0) {
            for c in lo(self.center.1)..=hi(self.center.1) {
                if self.radial(r as f64, c as f64) <= 1.0 {
                    m.set(r, c, 1);
                }
            }
        }
        m
    }
}

fn harmonics<R: Rng>(rng: &mut R, ks: &[f64], amp: f64) -> Vec<(f64, f64, f64)> {
    ks.iter()
        .map(|&k| (k, rng.random_range(-amp..=amp), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect()
}

fn draw_range<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn draw_normal<R: Rng>(rng: &mut R, ms: MeanSd) -> f64 {
    if ms.sd == 0.0 {
        ms.mean
    } else {
        Normal::new(ms.mean, ms.sd).expect("sd validated").sample(rng)
    }
}

fn liver_blob<R: Rng>(spec: &PhantomSpec, rng: &mut R) -> (Mask, f64) {
    let s = spec.image_size as f64;
    let [lo, hi] = spec.liver_area_fraction;
    let slack = ((hi - lo) / 4.0).min(0.01);
    let target = draw_range(rng, [lo + slack, hi - slack]);
    let jitter = 0.03 * s;
    let mut blob = Blob {
        center: (
            (s - 1.0) / 2.0 + rng.random_range(-jitter..=jitter),
            (s - 1.0) / 2.0 + rng.random_range(-jitter..=jitter),
        ),
        base: (target * s * s / std::f64::consts::PI).sqrt(),
        aspect: rng.random_range(0.8..=1.2),
        angle: rng.random_range(0.0..std::f64::consts::PI),
        harmonics: harmonics(rng, &[2.0, 3.0, 4.0], 0.06),
    };
    let mut mask = blob.rasterize(spec.image_size);
    for _ in 0..12 {
        let frac = mask.count(1) as f64 / (s * s);
        if (frac - target).abs() < 0.002 {
            break;
        }
        blob.base *= (target / frac.max(1e-6)).sqrt();
        mask = blob.rasterize(spec.image_size);
    }
    (mask, target)
}

/// Liver pixels whose whole 8-neighbourhood is liver.
fn interior(liver: &Mask) -> Mask {
    let (h, w) = liver.dims();
    Grid::from_fn(h, w, |r, c| {
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                if liver.at(r as isize + dr, c as isize + dc).unwrap_or(0) == 0 {
                    return 0;
                }
            }
        }
        1
    })
}

/// One phantom slice, deterministic in `(spec.seed, index)`. Intensities
/// are snapped to whole HU so they survive a disk round trip unchanged.
pub fn gen_slice(spec: &PhantomSpec, index: usize) -> Result<(SliceImage, LabelMask)> {
    spec.validate()?;
    let mut rng = seed::stream(spec.seed, &[seed::tag("phantom"), index as u64]);
    let n = spec.image_size;
    let (liver, _) = liver_blob(spec, &mut rng);
    let inner = interior(&liver);
    let candidates: Vec<(usize, usize)> = (0..n * n)
        .filter(|&i| inner.data()[i] != 0)
        .map(|i| (i / n, i % n))
        .collect();

    let liver_mean = draw_normal(&mut rng, spec.liver_intensity).clamp(0.2, 0.95);
    let mut image = Grid::from_fn(n, n, |r, c| if liver.get(r, c) != 0 { liver_mean } else { BACKGROUND_LEVEL });
    let mut label = liver.map(|v| if v != 0 { LIVER } else { BACKGROUND });

    let [kmin, kmax] = spec.lesions_per_slice;
    let wanted = rng.random_range(kmin..=kmax);
    let mut lesions = Grid::filled(n, n, 0u8);
    for _ in 0..wanted {
        if candidates.is_empty() {
            break;
        }
        let blocked = dilate(&lesions, 2);
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let (cr, cc) = candidates[rng.random_range(0..candidates.len())];
            let blob = Blob {
                center: (cr as f64, cc as f64),
                base: draw_range(&mut rng, spec.lesion_radius_px),
                aspect: 1.0,
                angle: 0.0,
                harmonics: harmonics(&mut rng, &[2.0, 3.0], 0.15),
            };
            let m = blob.rasterize(n);
            let fits = m
                .data()
                .iter()
                .zip(inner.data().iter().zip(blocked.data()))
                .all(|(&v, (&inside, &taken))| v == 0 || (inside != 0 && taken == 0));
            if fits && m.count(1) > 0 {
                placed = Some((blob, m));
                break;
            }
        }
        let Some((blob, m)) = placed else { continue };
        let mean = draw_normal(&mut rng, spec.lesion_intensity).clamp(0.05, liver_mean - 0.08);
        // radial texture with zero mean over a disk
        let texture = rng.random_range(-0.06..=0.06);
        for r in 0..n {
            for c in 0..n {
                if m.get(r, c) != 0 {
                    let rho = blob.radial(r as f64, c as f64).min(1.0);
                    image.set(r, c, mean + texture * (rho - 2.0 / 3.0));
                    label.set(r, c, LESION);
                    lesions.set(r, c, 1);
                }
            }
        }
    }

    if spec.noise_sd > 0.0 {
        let noise = band_limited_noise(n, n, spec.noise_sd, 1.0, &mut rng);
        for (v, e) in image.data_mut().iter_mut().zip(noise.data()) {
            *v += e;
        }
    }
    let image = quantize(&image.map(|v| v.clamp(0.0, 1.0)));
    Ok((image, label))
}

pub fn slice_id(index: usize) -> String {
    format!("{index:04}")
}

pub fn gen_corpus_in_memory(spec: &PhantomSpec, n_slices: usize) -> Result<Corpus> {
    if n_slices == 0 {
        return Err(Error::Usage("corpus needs at least one slice".into()));
    }
    spec.validate()?;
    let slices = (0..n_slices)
        .map(|i| {
            let (image, label) = gen_slice(spec, i)?;
            Ok(CorpusSlice { id: slice_id(i), image, label })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { slices })
}

/// Generate and write a corpus; returns the manifest written.
pub fn gen_corpus(spec: &PhantomSpec, n_slices: usize, dir: &Path) -> Result<CorpusManifest> {
    let corpus = gen_corpus_in_memory(spec, n_slices)?;
    let source = serde_json::json!({ "phantom": spec, "n_slices": n_slices });
    corpus.save(dir, source)
}
