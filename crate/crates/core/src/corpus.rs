//! On-disk slice corpora: `slices/NNNN.volj`, `masks/NNNN.volj` and a
//! `manifest.json` with per-slice lesion statistics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, json_err, Error, Result};
use crate::grid::{Grid, LabelMask, SliceImage, LESION, LIVER};
use crate::imgproc::components;
use crate::volume::{
    load_volume, save_volume, unit_to_hu, window_normalize, Volume, DEFAULT_WINDOW_CENTER,
    DEFAULT_WINDOW_WIDTH,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSlice {
    pub id: String,
    pub image: SliceImage,
    pub label: LabelMask,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub slices: Vec<CorpusSlice>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub id: String,
    /// Number of 8-connected lesion components.
    pub lesions: usize,
    pub lesion_pixels: usize,
    pub liver_pixels: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub slices: usize,
    pub lesion_bearing: usize,
    pub lesions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    /// Whatever produced the corpus (a phantom spec, an arm description).
    pub source: serde_json::Value,
    pub slices: Vec<SliceRecord>,
    pub totals: Totals,
}

impl CorpusManifest {
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub fn slice_record(id: &str, label: &LabelMask) -> SliceRecord {
    SliceRecord {
        id: id.to_string(),
        lesions: components(&label.select(LESION)).len(),
        lesion_pixels: label.count(LESION),
        liver_pixels: label.count(LIVER),
    }
}

/// Snap `[0, 1]` intensities onto the whole-HU grid used on disk.
pub fn quantize(image: &SliceImage) -> SliceImage {
    let hu = image.map(|v| unit_to_hu(v.clamp(0.0, 1.0)));
    window_normalize(&hu, DEFAULT_WINDOW_CENTER, DEFAULT_WINDOW_WIDTH).expect("default window is valid")
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn records(&self) -> Vec<SliceRecord> {
        self.slices.iter().map(|s| slice_record(&s.id, &s.label)).collect()
    }

    pub fn manifest(&self, source: serde_json::Value) -> CorpusManifest {
        let slices = self.records();
        let totals = Totals {
            slices: slices.len(),
            lesion_bearing: slices.iter().filter(|s| s.lesions > 0).count(),
            lesions: slices.iter().map(|s| s.lesions).sum(),
        };
        CorpusManifest { source, slices, totals }
    }

    /// Content hash over ids, intensities (as HU) and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.slices {
            h.update(s.id.as_bytes());
            for &v in s.image.data() {
                h.update(unit_to_hu(v).to_le_bytes());
            }
            h.update(s.label.data());
        }
        hex::encode(h.finalize())
    }

    pub fn quantized(mut self) -> Self {
        for s in &mut self.slices {
            s.image = quantize(&s.image);
        }
        self
    }

    pub fn save(&self, dir: &Path, source: serde_json::Value) -> Result<CorpusManifest> {
        for sub in ["slices", "masks"] {
            let d = dir.join(sub);
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        for s in &self.slices {
            let (h, w) = s.image.dims();
            let hu: Vec<i16> = s.image.data().iter().map(|&v| unit_to_hu(v.clamp(0.0, 1.0))).collect();
            save_volume(&Volume::from_plane(h, w, hu)?, &dir.join("slices").join(format!("{}.volj", s.id)))?;
            let labels: Vec<i16> = s.label.data().iter().map(|&v| v as i16).collect();
            save_volume(&Volume::from_plane(h, w, labels)?, &dir.join("masks").join(format!("{}.volj", s.id)))?;
        }
        let manifest = self.manifest(source);
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).map_err(json_err(&path))?;
        fs::write(&path, json).map_err(io_err(&path))?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<(Self, CorpusManifest)> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: CorpusManifest = serde_json::from_str(&text).map_err(json_err(&path))?;
        let mut slices = Vec::with_capacity(manifest.slices.len());
        for rec in &manifest.slices {
            let img = load_volume(&dir.join("slices").join(format!("{}.volj", rec.id)))?;
            let lab = load_volume(&dir.join("masks").join(format!("{}.volj", rec.id)))?;
            if img.dims != lab.dims || img.dims[0] != 1 {
                return Err(Error::Dimension(format!(
                    "slice {}: image {:?} / mask {:?}",
                    rec.id, img.dims, lab.dims
                )));
            }
            let (h, w) = (img.dims[1], img.dims[2]);
            let image = window_normalize(&Grid::new(h, w, img.hu)?, DEFAULT_WINDOW_CENTER, DEFAULT_WINDOW_WIDTH)?;
            let label = Grid::new(h, w, lab.hu.iter().map(|&v| v.clamp(0, 255) as u8).collect())?;
            label.check_labels()?;
            slices.push(CorpusSlice { id: rec.id.clone(), image, label });
        }
        Ok((Self { slices }, manifest))
    }
}
