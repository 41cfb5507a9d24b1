//! Randomized lesion implantation: warp a lesion shape, synthesize its
//! appearance and blend it into a liver slice while updating the labels.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::condmap::{compose_conditional, ConditionalMap, LesionPair};
use crate::corpus::{Corpus, CorpusSlice};
use crate::error::{Error, Result};
use crate::grid::{Grid, LabelMask, Mask, SliceImage, LESION, LIVER};
use crate::imgproc::{bilinear, bilinear_mask, components, feather, BBox};
use crate::seed;
use crate::synthesis::Synthesizer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImplantRanges {
    /// Radians, half-open `[min, max)`.
    pub rotation: [f64; 2],
    pub scale: [f64; 2],
    pub mean_shift: [f64; 2],
    pub max_attempts: usize,
    pub feather_sigma: f64,
}

impl Default for ImplantRanges {
    fn default() -> Self {
        Self { rotation: [0.0, TAU], scale: [0.5, 1.5], mean_shift: [-0.1, 0.1], max_attempts: 50, feather_sigma: 1.0 }
    }
}

fn check_range(r: [f64; 2], pointer: &str) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] {
        return Err(Error::Config(format!("{pointer}: range {r:?} is not ordered (min > max)")));
    }
    Ok(())
}

impl ImplantRanges {
    pub fn validate(&self) -> Result<()> {
        check_range(self.rotation, "/rotation")?;
        check_range(self.scale, "/scale")?;
        check_range(self.mean_shift, "/mean_shift")?;
        if !(self.scale[0] > 0.0) {
            return Err(Error::Config("/scale: factors must be > 0".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("/max_attempts: must be >= 1".into()));
        }
        if !(self.feather_sigma > 0.0) {
            return Err(Error::Config("/feather_sigma: must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplantSpec {
    pub rotation: f64,
    /// Size relative to the source lesion in slice pixels.
    pub scale: f64,
    /// `(row, col)` where the source lesion's centroid lands.
    pub center: [usize; 2],
    pub mean_shift: f64,
    /// Index of the source pair in the pair set.
    pub source_pair: usize,
}

/// Similarity warp about a source point: destination `q` samples source
/// `pivot_src + R(-θ)·(q - pivot_dst) / scale`.
#[derive(Clone, Copy, Debug)]
struct Warp {
    pivot_src: (f64, f64),
    pivot_dst: (f64, f64),
    cos: f64,
    sin: f64,
    scale: f64,
}

impl Warp {
    fn new(pivot_src: (f64, f64), pivot_dst: (f64, f64), rotation: f64, scale: f64) -> Self {
        let (sin, cos) = rotation.sin_cos();
        Self { pivot_src, pivot_dst, cos, sin, scale }
    }

    fn source(&self, r: f64, c: f64) -> (f64, f64) {
        let (dr, dc) = ((r - self.pivot_dst.0) / self.scale, (c - self.pivot_dst.1) / self.scale);
        (
            self.pivot_src.0 + self.cos * dr + self.sin * dc,
            self.pivot_src.1 - self.sin * dr + self.cos * dc,
        )
    }

    /// Destination offsets (relative to `pivot_dst`) spanned by a source box.
    fn extent(&self, bbox: BBox) -> (f64, f64, f64, f64) {
        let (mut rmin, mut rmax, mut cmin, mut cmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for r in [bbox.row0 as f64 - 1.0, bbox.row1 as f64 + 1.0] {
            for c in [bbox.col0 as f64 - 1.0, bbox.col1 as f64 + 1.0] {
                let (dr, dc) = (r - self.pivot_src.0, c - self.pivot_src.1);
                // forward map is the inverse of `source`
                let fr = (self.cos * dr - self.sin * dc) * self.scale;
                let fc = (self.sin * dr + self.cos * dc) * self.scale;
                rmin = rmin.min(fr);
                rmax = rmax.max(fr);
                cmin = cmin.min(fc);
                cmax = cmax.max(fc);
            }
        }
        (rmin, rmax, cmin, cmax)
    }
}

fn support_bbox(mask: &Mask) -> Option<BBox> {
    let (h, w) = mask.dims();
    let mut b: Option<BBox> = None;
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) != 0 {
                b = Some(match b {
                    None => BBox { row0: r, col0: c, row1: r, col1: c },
                    Some(b) => BBox {
                        row0: b.row0.min(r),
                        col0: b.col0.min(c),
                        row1: b.row1.max(r),
                        col1: b.col1.max(c),
                    },
                });
            }
        }
    }
    b
}

/// Result of [`transform_mask`]: the warped shape on a canvas fitted to its
/// support, and where the source centroid sits on that canvas.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedMask {
    pub mask: Mask,
    pub pivot: (f64, f64),
}

/// Rotate and scale a binary mask about its centroid by inverse-mapped
/// bilinear sampling thresholded at 0.5.
pub fn transform_mask(mask: &Mask, rotation: f64, scale: f64) -> Result<WarpedMask> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Usage(format!("scale {scale} must be > 0")));
    }
    let centroid = mask.centroid().ok_or_else(|| Error::Degenerate("cannot transform an empty mask".into()))?;
    let bbox = support_bbox(mask).expect("nonempty mask has a support box");
    let probe = Warp::new(centroid, (0.0, 0.0), rotation, scale);
    let (rmin, rmax, cmin, cmax) = probe.extent(bbox);
    // keep the centroid's sub-pixel phase so the identity warp is exact
    let pivot = (
        centroid.0.fract() + (-rmin).ceil().max(0.0),
        centroid.1.fract() + (-cmin).ceil().max(0.0),
    );
    let height = (pivot.0 + rmax).ceil().max(0.0) as usize + 1;
    let width = (pivot.1 + cmax).ceil().max(0.0) as usize + 1;
    let warp = Warp::new(centroid, pivot, rotation, scale);
    let canvas = Grid::from_fn(height, width, |r, c| {
        let (sr, sc) = warp.source(r as f64, c as f64);
        (bilinear_mask(mask, sr, sc) >= 0.5) as u8
    });
    let Some(fit) = support_bbox(&canvas) else {
        return Err(Error::Degenerate(format!("mask vanishes under scale {scale}")));
    };
    let cropped = Grid::from_fn(fit.height(), fit.width(), |r, c| canvas.get(r + fit.row0, c + fit.col0));
    Ok(WarpedMask { mask: cropped, pivot: (pivot.0 - fit.row0 as f64, pivot.1 - fit.col0 as f64) })
}

/// Slice-space pixels covered by the warped source lesion.
#[derive(Clone, Debug, PartialEq)]
pub struct Footprint {
    pub mask: Mask,
    pub area: usize,
    /// Some covered pixel fell outside the slice (and was dropped).
    pub clipped: bool,
}

fn slice_warp(pair: &LesionPair, spec: &ImplantSpec) -> Result<Warp> {
    let centroid = pair
        .source
        .mask()
        .centroid()
        .ok_or_else(|| Error::Degenerate("source pair has an empty mask".into()))?;
    // slice pixels per patch pixel
    let s = spec.scale * pair.region_side as f64 / pair.source.size() as f64;
    Ok(Warp::new(centroid, (spec.center[0] as f64, spec.center[1] as f64), spec.rotation, s))
}

pub fn footprint(pair: &LesionPair, spec: &ImplantSpec, height: usize, width: usize) -> Result<Footprint> {
    let warp = slice_warp(pair, spec)?;
    let src = pair.source.mask();
    let bbox = support_bbox(src).expect("centroid implies support");
    let (rmin, rmax, cmin, cmax) = warp.extent(bbox);
    let (cr, cc) = (spec.center[0] as isize, spec.center[1] as isize);
    let mut mask = Grid::filled(height, width, 0u8);
    let (mut area, mut clipped) = (0, false);
    for r in cr + rmin.floor() as isize..=cr + rmax.ceil() as isize {
        for c in cc + cmin.floor() as isize..=cc + cmax.ceil() as isize {
            let (sr, sc) = warp.source(r as f64, c as f64);
            if bilinear_mask(src, sr, sc) < 0.5 {
                continue;
            }
            if r < 0 || c < 0 || r as usize >= height || c as usize >= width {
                clipped = true;
            } else {
                mask.set(r as usize, c as usize, 1);
                area += 1;
            }
        }
    }
    Ok(Footprint { mask, area, clipped })
}

/// Whether a footprint is nonempty, unclipped and entirely on label 1.
pub fn contained(fp: &Footprint, label: &LabelMask) -> bool {
    fp.area > 0
        && !fp.clipped
        && fp.mask.data().iter().zip(label.data()).all(|(&m, &l)| m == 0 || l == LIVER)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Rejection-sample a placement whose footprint lies on liver pixels
/// currently labelled 1. `None` after `ranges.max_attempts` rejections.
pub fn sample_spec(
    rng: &mut dyn RngCore,
    label: &LabelMask,
    pair: &LesionPair,
    pair_index: usize,
    ranges: &ImplantRanges,
) -> Result<Option<(ImplantSpec, Footprint)>> {
    ranges.validate()?;
    let (h, w) = label.dims();
    let liver: Vec<usize> = (0..label.len()).filter(|&i| label.data()[i] == LIVER).collect();
    if liver.is_empty() {
        return Err(Error::Usage("slice has no liver pixels to implant into".into()));
    }
    for _ in 0..ranges.max_attempts {
        let rotation = uniform(rng, ranges.rotation);
        let scale = uniform(rng, ranges.scale);
        let mean_shift = uniform(rng, ranges.mean_shift);
        let at = liver[rng.random_range(0..liver.len())];
        let spec = ImplantSpec { rotation, scale, center: [at / w, at % w], mean_shift, source_pair: pair_index };
        let fp = footprint(pair, &spec, h, w)?;
        if contained(&fp, label) {
            return Ok(Some((spec, fp)));
        }
    }
    Ok(None)
}

/// Patch-space conditional map for a spec: the source shape and edges
/// rotated about the patch center, with the shifted mean.
pub fn implant_map(pair: &LesionPair, spec: &ImplantSpec) -> Result<(ConditionalMap, Warp2)> {
    let n = pair.source.size();
    let centroid = pair
        .source
        .mask()
        .centroid()
        .ok_or_else(|| Error::Degenerate("source pair has an empty mask".into()))?;
    let mid = (n as f64 - 1.0) / 2.0;
    let warp = Warp::new(centroid, (mid, mid), spec.rotation, 1.0);
    let sample = |m: &Mask| {
        Grid::from_fn(n, n, |r, c| {
            let (sr, sc) = warp.source(r as f64, c as f64);
            (bilinear_mask(m, sr, sc) >= 0.5) as u8
        })
    };
    let mask = sample(pair.source.mask());
    let edges = sample(pair.source.edges());
    let mean = (pair.source.mean() + spec.mean_shift).clamp(0.05, 0.95);
    let map = if mask.count(1) == 0 { ConditionalMap::blank(n) } else { compose_conditional(&mask, mean, &edges)? };
    // slice pixel q ↦ patch point mid + (q - center)·k
    let k = n as f64 / (spec.scale * pair.region_side as f64);
    Ok((map, Warp2 { mid, center: (spec.center[0] as f64, spec.center[1] as f64), k }))
}

/// Affine map from slice pixels to synthesized-patch coordinates.
#[derive(Clone, Copy, Debug)]
pub struct Warp2 {
    mid: f64,
    center: (f64, f64),
    k: f64,
}

impl Warp2 {
    pub fn patch_point(&self, r: usize, c: usize) -> (f64, f64) {
        (self.mid + (r as f64 - self.center.0) * self.k, self.mid + (c as f64 - self.center.1) * self.k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSlice {
    pub image: SliceImage,
    pub label: LabelMask,
    pub implanted: Vec<ImplantSpec>,
}

/// Blend one synthesized lesion into a slice. Pixels with zero feather
/// weight are returned unchanged.
pub fn implant(
    image: &SliceImage,
    label: &LabelMask,
    spec: &ImplantSpec,
    synth: &dyn Synthesizer,
    pair: &LesionPair,
    feather_sigma: f64,
    rng: &mut dyn RngCore,
) -> Result<AugmentedSlice> {
    image.expect_dims(label, "implant")?;
    let (h, w) = image.dims();
    if spec.center[0] >= h || spec.center[1] >= w {
        return Err(Error::Containment(format!("center {:?} outside {h}x{w} slice", spec.center)));
    }
    let fp = footprint(pair, spec, h, w)?;
    if !contained(&fp, label) {
        return Err(Error::Containment(format!(
            "footprint of {spec:?} leaves the liver or overlaps a lesion"
        )));
    }
    let (map, to_patch) = implant_map(pair, spec)?;
    let patch = synth.synthesize(&map, rng)?;
    let alpha = feather(&fp.mask, feather_sigma);
    let mut out = image.clone();
    let mut lab = label.clone();
    for r in 0..h {
        for c in 0..w {
            let a = alpha.get(r, c);
            if a > 0.0 {
                let (pr, pc) = to_patch.patch_point(r, c);
                let v = bilinear(&patch, pr, pc);
                out.set(r, c, (a * v + (1.0 - a) * image.get(r, c)).clamp(0.0, 1.0));
            }
            if fp.mask.get(r, c) != 0 {
                lab.set(r, c, LESION);
            }
        }
    }
    Ok(AugmentedSlice { image: out, label: lab, implanted: vec![spec.clone()] })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPolicy {
    /// Synthetic lesions to add; `None` matches the corpus' real lesion
    /// count.
    pub target: Option<usize>,
    pub lesions_per_slice: [usize; 2],
    pub ranges: ImplantRanges,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self { target: None, lesions_per_slice: [1, 3], ranges: ImplantRanges::default() }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.lesions_per_slice;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!(
                "/lesions_per_slice: range {:?} must be ordered with min >= 1",
                self.lesions_per_slice
            )));
        }
        self.ranges.validate().map_err(|e| e.nest("/ranges"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub id: String,
    /// Slice the copy was made from; `None` for original slices.
    pub source_id: Option<String>,
    /// Real lesions, as `<slice id>/<component index>`.
    pub real_lesions: Vec<String>,
    pub implants: Vec<ImplantSpec>,
    pub skips: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentManifest {
    pub seed: u64,
    pub target: usize,
    pub real_total: usize,
    pub synthetic_total: usize,
    pub skipped: usize,
    /// The target was not reached before placement attempts ran out.
    pub unreachable: bool,
    pub slices: Vec<AugmentRecord>,
}

pub struct AugmentedCorpus {
    pub corpus: Corpus,
    pub manifest: AugmentManifest,
}

fn real_lesion_ids(slice: &CorpusSlice) -> Vec<String> {
    (0..components(&slice.label.select(LESION)).len()).map(|i| format!("{}/{i}", slice.id)).collect()
}

/// The input slices followed by implanted copies of liver-bearing slices,
/// until `target` synthetic lesions have been placed.
pub fn augment_corpus(
    corpus: &Corpus,
    pairs: &[LesionPair],
    synth: &dyn Synthesizer,
    seed_value: u64,
    policy: &AugmentPolicy,
) -> Result<AugmentedCorpus> {
    policy.validate()?;
    let mut records: Vec<AugmentRecord> = corpus
        .slices
        .iter()
        .map(|s| AugmentRecord {
            id: s.id.clone(),
            source_id: None,
            real_lesions: real_lesion_ids(s),
            implants: Vec::new(),
            skips: 0,
        })
        .collect();
    let real_total: usize = records.iter().map(|r| r.real_lesions.len()).sum();
    let target = policy.target.unwrap_or(real_total);
    let mut out = corpus.clone();
    let mut manifest = AugmentManifest {
        seed: seed_value,
        target,
        real_total,
        synthetic_total: 0,
        skipped: 0,
        unreachable: false,
        slices: Vec::new(),
    };
    if target == 0 {
        manifest.slices = records;
        return Ok(AugmentedCorpus { corpus: out, manifest });
    }
    if pairs.is_empty() {
        return Err(Error::Usage("augmentation needs at least one lesion pair".into()));
    }
    let mut eligible: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.slices[i].label.count(LIVER) > 0).collect();
    if eligible.is_empty() {
        return Err(Error::Usage("corpus has no liver-bearing slices".into()));
    }
    eligible.shuffle(&mut seed::stream(seed_value, &[seed::tag("augment-order")]));

    let [lo, hi] = policy.lesions_per_slice;
    let max_copies = 10 * target + eligible.len();
    let mut barren_streak = 0;
    let mut copy = 0usize;
    while manifest.synthetic_total < target {
        if copy >= max_copies || barren_streak >= eligible.len() {
            manifest.unreachable = true;
            log::warn!(
                "augmentation placed {} of {target} lesions before running out of attempts",
                manifest.synthetic_total
            );
            break;
        }
        let src = &corpus.slices[eligible[copy % eligible.len()]];
        let mut rng = seed::stream(seed_value, &[seed::tag("augment-copy"), copy as u64]);
        let wanted = rng.random_range(lo..=hi).min(target - manifest.synthetic_total);
        let mut image = src.image.clone();
        let mut label = src.label.clone();
        let mut implants = Vec::new();
        let mut skips = 0;
        for _ in 0..wanted {
            let pi = rng.random_range(0..pairs.len());
            match sample_spec(&mut rng, &label, &pairs[pi], pi, &policy.ranges)? {
                Some((spec, _)) => {
                    let aug = implant(&image, &label, &spec, synth, &pairs[pi], policy.ranges.feather_sigma, &mut rng)?;
                    image = aug.image;
                    label = aug.label;
                    implants.push(spec);
                }
                None => skips += 1,
            }
        }
        manifest.skipped += skips;
        if implants.is_empty() {
            barren_streak += 1;
        } else {
            barren_streak = 0;
            manifest.synthetic_total += implants.len();
            let id = format!("aug{copy:05}_{}", src.id);
            records.push(AugmentRecord {
                id: id.clone(),
                source_id: Some(src.id.clone()),
                real_lesions: real_lesion_ids(src),
                implants,
                skips,
            });
            out.slices.push(CorpusSlice { id, image, label });
        }
        copy += 1;
    }
    manifest.slices = records;
    Ok(AugmentedCorpus { corpus: out, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condmap::Provenance;
    use std::f64::consts::FRAC_PI_2;

    fn disk(n: usize, radius: f64) -> Mask {
        let c = (n as f64 - 1.0) / 2.0;
        Grid::from_fn(n, n, |r, cc| (((r as f64 - c).powi(2) + (cc as f64 - c).powi(2)).sqrt() <= radius) as u8)
    }

    fn crop_to_support(m: &Mask) -> Mask {
        let b = support_bbox(m).unwrap();
        Grid::from_fn(b.height(), b.width(), |r, c| m.get(r + b.row0, c + b.col0))
    }

    #[test]
    fn identity_transform_is_exact() {
        let mut m = disk(21, 6.0);
        m.set(2, 10, 1);
        m.set(3, 10, 1);
        let out = transform_mask(&m, 0.0, 1.0).unwrap();
        assert_eq!(out.mask, crop_to_support(&m));
    }

    #[test]
    fn square_is_invariant_under_quarter_turn() {
        let mut m = Grid::filled(12, 12, 0u8);
        for r in 3..8 {
            for c in 4..9 {
                m.set(r, c, 1);
            }
        }
        assert_eq!(transform_mask(&m, FRAC_PI_2, 1.0).unwrap().mask, crop_to_support(&m));
    }

    #[test]
    fn disk_area_scales_quadratically() {
        let m = disk(31, 5.0);
        let out = transform_mask(&m, 0.3, 1.4).unwrap();
        let ratio = out.mask.count(1) as f64 / m.count(1) as f64;
        assert!((ratio / 1.96 - 1.0).abs() < 0.10, "area ratio {ratio}");
    }

    #[test]
    fn extreme_shrink_is_degenerate() {
        // two dots whose centroid is unset collapse onto it
        let mut m = Grid::filled(8, 8, 0u8);
        m.set(4, 1, 1);
        m.set(4, 7, 1);
        assert!(matches!(transform_mask(&m, 0.0, 0.1), Err(Error::Degenerate(_))));
        assert!(matches!(transform_mask(&m, 0.0, 0.0), Err(Error::Usage(_))));
    }

    pub(crate) fn toy_pair(radius: f64) -> LesionPair {
        let n = 32;
        let mask = disk(n, radius);
        let map = compose_conditional(&mask, 0.3, &Grid::filled(n, n, 0)).unwrap();
        LesionPair {
            source: map,
            target: mask.map(|m| if m != 0 { 0.3 } else { 0.55 }),
            provenance: Provenance { corpus_id: "t".into(), slice_id: "0".into(), slice_index: 0, lesion_index: 0 },
            region_side: n,
        }
    }

    #[test]
    fn unconstrained_placement_accepts_first_draw() {
        let label = Grid::filled(64, 64, LIVER);
        let pair = toy_pair(2.0);
        let ranges = ImplantRanges { scale: [1.0, 1.0], ..Default::default() };
        let mut rng = seed::stream(4, &[]);
        let mut accepted = 0;
        for _ in 0..20 {
            let ranges1 = ImplantRanges { max_attempts: 1, ..ranges.clone() };
            let center_ok = sample_spec(&mut rng, &label, &pair, 0, &ranges1).unwrap();
            if let Some((spec, fp)) = center_ok {
                accepted += 1;
                assert!(contained(&fp, &label));
                assert_eq!(spec.source_pair, 0);
            }
        }
        // a radius-2 lesion only fails when drawn within 3 px of the border
        assert!(accepted >= 15, "{accepted}");
    }

    #[test]
    fn oversized_lesion_cannot_be_placed() {
        let mut label = Grid::filled(64, 64, 0u8);
        for r in 20..30 {
            for c in 20..30 {
                label.set(r, c, LIVER);
            }
        }
        let pair = toy_pair(12.0);
        let ranges = ImplantRanges::default();
        let got = sample_spec(&mut seed::stream(1, &[]), &label, &pair, 0, &ranges).unwrap();
        assert!(got.is_none());
    }

    #[test]
    fn range_order_is_validated() {
        let r = ImplantRanges { scale: [1.5, 0.5], ..Default::default() };
        let err = r.validate().unwrap_err().to_string();
        assert!(err.contains("/scale"), "{err}");
    }
}
