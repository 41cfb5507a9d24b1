//! Conditional maps (shape, mean intensity, edges) and the lesion pair
//! dataset built from a labelled corpus.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canny::{canny_with, CannyParams};
use crate::corpus::Corpus;
use crate::error::{io_err, json_err, Error, Result};
use crate::grid::{Grid, Mask, SliceImage, LESION};
use crate::imgproc::components;
use crate::volume::{crop_patch, load_float_volume, save_float_volume, FloatVolume};

pub const PAIRS_FILE: &str = "pairs.json";

/// Three-plane conditioning image: `c0` shape, `c1 = mean·c0`, `c2` edges
/// inside the shape. `c1` is derived, so only the mean is stored.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMap {
    mask: Mask,
    mean: f64,
    edges: Mask,
}

impl ConditionalMap {
    /// Map with an empty shape; every channel is zero.
    pub fn blank(size: usize) -> Self {
        Self { mask: Grid::filled(size, size, 0), mean: 0.0, edges: Grid::filled(size, size, 0) }
    }

    pub fn size(&self) -> usize {
        self.mask.height()
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn edges(&self) -> &Mask {
        &self.edges
    }

    pub fn c0(&self) -> Grid<f64> {
        self.mask.map(f64::from)
    }

    pub fn c1(&self) -> Grid<f64> {
        self.mask.map(|m| f64::from(m) * self.mean)
    }

    pub fn c2(&self) -> Grid<f64> {
        self.edges.map(f64::from)
    }

    /// Channels stacked plane-major: c0, c1, c2.
    pub fn planes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.mask.len());
        for g in [self.c0(), self.c1(), self.c2()] {
            out.extend_from_slice(g.data());
        }
        out
    }
}

pub fn mean_intensity(patch: &SliceImage, mask: &Mask) -> Result<f64> {
    patch.expect_dims(mask, "mean_intensity")?;
    let (sum, n) = patch
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m != 0)
        .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v, n + 1));
    if n == 0 {
        return Err(Error::Usage("mean intensity of an empty mask".into()));
    }
    Ok(sum / n as f64)
}

pub fn compose_conditional(mask: &Mask, mean: f64, edges: &Mask) -> Result<ConditionalMap> {
    mask.expect_dims(edges, "compose_conditional")?;
    if mask.height() != mask.width() {
        return Err(Error::Dimension(format!("conditional map must be square, got {:?}", mask.dims())));
    }
    mask.check_binary()?;
    edges.check_binary()?;
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::Config(format!("conditional mean {mean} must lie in (0, 1)")));
    }
    let edges = Grid::new(
        mask.height(),
        mask.width(),
        edges.data().iter().zip(mask.data()).map(|(&e, &m)| e & m).collect(),
    )?;
    Ok(ConditionalMap { mask: mask.clone(), mean, edges })
}

/// Single-image view: mean inside the shape, 1.0 on edges, 0 elsewhere.
pub fn render_sketch(map: &ConditionalMap) -> SliceImage {
    let (h, w) = map.mask.dims();
    Grid::from_fn(h, w, |r, c| {
        if map.edges.get(r, c) != 0 {
            1.0
        } else if map.mask.get(r, c) != 0 {
            map.mean
        } else {
            0.0
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub corpus_id: String,
    pub slice_id: String,
    pub slice_index: usize,
    /// Component index within the slice, in raster order.
    pub lesion_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LesionPair {
    pub source: ConditionalMap,
    pub target: SliceImage,
    pub provenance: Provenance,
    /// Side, in slice pixels, of the square region the patch was cut from.
    pub region_side: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairParams {
    pub patch_size: usize,
    pub min_area: usize,
    /// Margin around the lesion box, as a fraction of its longer side.
    pub margin_fraction: f64,
    pub canny: CannyParams,
}

impl Default for PairParams {
    fn default() -> Self {
        Self { patch_size: 64, min_area: 9, margin_fraction: 0.25, canny: CannyParams::default() }
    }
}

impl PairParams {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 8 {
            return Err(Error::Config(format!("/patch_size: {} must be >= 8", self.patch_size)));
        }
        if !(self.margin_fraction >= 0.0 && self.margin_fraction.is_finite()) {
            return Err(Error::Config("/margin_fraction: must be >= 0".into()));
        }
        self.canny.validate().map_err(|e| e.nest("/canny"))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<LesionPair>,
    pub skipped_small: usize,
}

impl PairSet {
    /// A corpus without usable lesions yields an empty set, flagged here.
    pub fn is_warning(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// One pair per 8-connected lesion component of at least `min_area` pixels,
/// in slice then raster order.
pub fn build_pairs(corpus: &Corpus, corpus_id: &str, params: &PairParams) -> Result<PairSet> {
    params.validate()?;
    let mut set = PairSet::default();
    for (slice_index, slice) in corpus.slices.iter().enumerate() {
        let lesions = slice.label.select(LESION);
        for (lesion_index, comp) in components(&lesions).into_iter().enumerate() {
            if comp.area() < params.min_area {
                set.skipped_small += 1;
                continue;
            }
            let own = comp.to_mask(slice.label.height(), slice.label.width());
            let longer = comp.bbox.height().max(comp.bbox.width());
            let margin = (params.margin_fraction * longer as f64).ceil() as usize;
            let patch = crop_patch(&slice.image, &own, comp.bbox, margin, params.patch_size)?;
            if patch.mask.count(1) == 0 {
                set.skipped_small += 1;
                continue;
            }
            let mean = mean_intensity(&patch.image, &patch.mask)?;
            let edges = canny_with(&patch.image, &params.canny)?;
            let source = compose_conditional(&patch.mask, mean.clamp(1e-6, 1.0 - 1e-6), &edges)?;
            set.pairs.push(LesionPair {
                source,
                target: patch.image,
                provenance: Provenance {
                    corpus_id: corpus_id.to_string(),
                    slice_id: slice.id.clone(),
                    slice_index,
                    lesion_index,
                },
                region_side: patch.region.side,
            });
        }
    }
    if set.is_warning() {
        log::warn!("corpus {corpus_id} produced no lesion pairs");
    }
    Ok(set)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub file: String,
    pub provenance: Provenance,
    pub mean: f64,
    pub region_side: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairIndex {
    pub patch_size: usize,
    pub skipped_small: usize,
    pub pairs: Vec<PairRecord>,
}

/// Writes `pair_NNNNN.volj` tensors (c0, c1, c2, target) and `pairs.json`.
pub fn save_pairs(set: &PairSet, patch_size: usize, dir: &Path) -> Result<PairIndex> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut records = Vec::with_capacity(set.pairs.len());
    for (i, pair) in set.pairs.iter().enumerate() {
        if pair.source.size() != patch_size || !pair.target.same_dims(pair.source.mask()) {
            return Err(Error::Dimension(format!("pair {i} is not {patch_size}x{patch_size}")));
        }
        let file = format!("pair_{i:05}.volj");
        let mut data = pair.source.planes();
        data.extend_from_slice(pair.target.data());
        save_float_volume(&FloatVolume { dims: [4, patch_size, patch_size], data }, &dir.join(&file))?;
        records.push(PairRecord {
            file,
            provenance: pair.provenance.clone(),
            mean: pair.source.mean(),
            region_side: pair.region_side,
        });
    }
    let index = PairIndex { patch_size, skipped_small: set.skipped_small, pairs: records };
    let path = dir.join(PAIRS_FILE);
    fs::write(&path, serde_json::to_string_pretty(&index).map_err(json_err(&path))?).map_err(io_err(&path))?;
    Ok(index)
}

pub fn load_pairs(dir: &Path) -> Result<PairSet> {
    let path = dir.join(PAIRS_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let index: PairIndex = serde_json::from_str(&text).map_err(json_err(&path))?;
    let p = index.patch_size;
    let mut pairs = Vec::with_capacity(index.pairs.len());
    for rec in index.pairs {
        let vol = load_float_volume(&dir.join(&rec.file))?;
        if vol.dims != [4, p, p] {
            return Err(Error::Dimension(format!("{}: dims {:?}, expected [4, {p}, {p}]", rec.file, vol.dims)));
        }
        let plane = |k: usize| vol.data[k * p * p..(k + 1) * p * p].to_vec();
        let mask = Grid::new(p, p, plane(0).iter().map(|&v| (v != 0.0) as u8).collect())?;
        let edges = Grid::new(p, p, plane(2).iter().map(|&v| (v != 0.0) as u8).collect())?;
        let source = if mask.count(1) == 0 {
            ConditionalMap::blank(p)
        } else {
            compose_conditional(&mask, rec.mean, &edges)?
        };
        pairs.push(LesionPair {
            source,
            target: Grid::new(p, p, plane(3))?,
            provenance: rec.provenance,
            region_side: rec.region_side,
        });
    }
    Ok(PairSet { pairs, skipped_small: index.skipped_small })
}
