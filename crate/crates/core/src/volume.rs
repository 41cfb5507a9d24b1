//! Volume files, intensity windowing, slice extraction and patch cropping.
//!
//! A volume is stored as `<name>.volj`, a JSON header, next to the raw
//! little-endian blob it names (conventionally `<name>.volb`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result, VolumeError};
use crate::grid::{Grid, Mask, SliceImage};
use crate::imgproc::{bilinear, BBox};

pub const DEFAULT_WINDOW_CENTER: f64 = 100.0;
pub const DEFAULT_WINDOW_WIDTH: f64 = 400.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "i16le")]
    I16Le,
    #[serde(rename = "f64le")]
    F64Le,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::I16Le => 2,
            Dtype::F64Le => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    /// `(z, y, x)` voxel counts.
    pub dims: [usize; 3],
    /// Voxel spacing in mm, same axis order.
    pub spacing: [f64; 3],
    pub dtype: Dtype,
    /// Blob file name, relative to the header's directory.
    pub blob: String,
}

/// CT-like volume of Hounsfield units, z-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub hu: Vec<i16>,
}

/// Same layout as [`Volume`] but with 64-bit float samples.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatVolume {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

fn validate_geometry(dims: [usize; 3], spacing: [f64; 3], len: usize) -> std::result::Result<(), String> {
    if dims.iter().any(|&d| d == 0) {
        return Err(format!("dims {dims:?} must all be >= 1"));
    }
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(format!("spacing {spacing:?} must be positive"));
    }
    let n = dims.iter().product::<usize>();
    if n != len {
        return Err(format!("dims {dims:?} need {n} samples, found {len}"));
    }
    Ok(())
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], hu: Vec<i16>) -> Result<Self> {
        validate_geometry(dims, spacing, hu.len()).map_err(Error::Usage)?;
        Ok(Self { dims, spacing, hu })
    }

    /// Single-slice volume holding a 2-D plane.
    pub fn from_plane(height: usize, width: usize, hu: Vec<i16>) -> Result<Self> {
        Self::new([1, height, width], [1.0; 3], hu)
    }

    pub fn plane(&self, z: usize) -> &[i16] {
        let n = self.dims[1] * self.dims[2];
        &self.hu[z * n..(z + 1) * n]
    }
}

/// Path of the blob that pairs with a header path (`x.volj` → `x.volb`).
pub fn blob_path_for(header: &Path) -> PathBuf {
    header.with_extension("volb")
}

fn write_pair(header_path: &Path, dims: [usize; 3], spacing: [f64; 3], dtype: Dtype, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = header_path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let blob_path = blob_path_for(header_path);
    let blob = blob_path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Usage(format!("bad volume path {}", header_path.display())))?
        .to_string();
    let header = VolumeHeader { dims, spacing, dtype, blob };
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(header_path, json).map_err(io_err(header_path))?;
    let mut f = fs::File::create(&blob_path).map_err(io_err(&blob_path))?;
    f.write_all(bytes).map_err(io_err(&blob_path))?;
    Ok(())
}

fn read_pair(header_path: &Path, want: Dtype) -> Result<(VolumeHeader, Vec<u8>)> {
    if !header_path.exists() {
        return Err(VolumeError::Missing(header_path.to_path_buf()).into());
    }
    let text = fs::read_to_string(header_path).map_err(io_err(header_path))?;
    let header: VolumeHeader = serde_json::from_str(&text).map_err(|e| VolumeError::MalformedHeader {
        path: header_path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if header.dtype != want {
        return Err(VolumeError::MalformedHeader {
            path: header_path.to_path_buf(),
            reason: format!("dtype {:?}, expected {want:?}", header.dtype),
        }
        .into());
    }
    let blob_path = header_path.with_file_name(&header.blob);
    if !blob_path.exists() {
        return Err(VolumeError::Missing(blob_path).into());
    }
    let bytes = fs::read(&blob_path).map_err(io_err(&blob_path))?;
    let width = header.dtype.width();
    let inconsistent = |reason: String| VolumeError::Inconsistent {
        path: header_path.to_path_buf(),
        reason,
    };
    if bytes.len() % width != 0 {
        return Err(inconsistent(format!("blob length {} not a multiple of {width}", bytes.len())).into());
    }
    validate_geometry(header.dims, header.spacing, bytes.len() / width).map_err(inconsistent)?;
    Ok((header, bytes))
}

pub fn save_volume(volume: &Volume, header_path: &Path) -> Result<()> {
    let bytes: Vec<u8> = volume.hu.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(header_path, volume.dims, volume.spacing, Dtype::I16Le, &bytes)
}

pub fn load_volume(header_path: &Path) -> Result<Volume> {
    let (h, bytes) = read_pair(header_path, Dtype::I16Le)?;
    let hu = bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok(Volume { dims: h.dims, spacing: h.spacing, hu })
}

pub fn save_float_volume(volume: &FloatVolume, header_path: &Path) -> Result<()> {
    let bytes: Vec<u8> = volume.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(header_path, volume.dims, [1.0; 3], Dtype::F64Le, &bytes)
}

pub fn load_float_volume(header_path: &Path) -> Result<FloatVolume> {
    let (h, bytes) = read_pair(header_path, Dtype::F64Le)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(FloatVolume { dims: h.dims, data })
}

/// Linear display window: `clamp((hu - (center - width/2)) / width, 0, 1)`.
pub fn window_normalize(hu: &Grid<i16>, center: f64, width: f64) -> Result<SliceImage> {
    if !(width > 0.0) {
        return Err(Error::Config(format!("window width {width} must be > 0")));
    }
    let lo = center - width / 2.0;
    Ok(hu.map(|v| ((v as f64 - lo) / width).clamp(0.0, 1.0)))
}

/// Inverse of the default window for values inside it, rounded to whole HU.
pub fn unit_to_hu(v: f64) -> i16 {
    let lo = DEFAULT_WINDOW_CENTER - DEFAULT_WINDOW_WIDTH / 2.0;
    (v * DEFAULT_WINDOW_WIDTH + lo).round() as i16
}

/// Windowed slice `z` plus its raw HU plane.
pub fn extract_slice(volume: &Volume, z: usize) -> Result<(SliceImage, Grid<i16>)> {
    if z >= volume.dims[0] {
        return Err(Error::Usage(format!("slice {z} outside volume of depth {}", volume.dims[0])));
    }
    let raw = Grid::new(volume.dims[1], volume.dims[2], volume.plane(z).to_vec())?;
    let img = window_normalize(&raw, DEFAULT_WINDOW_CENTER, DEFAULT_WINDOW_WIDTH)?;
    Ok((img, raw))
}

/// Square source region `(row0, col0, side)` covering a bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub row0: usize,
    pub col0: usize,
    pub side: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub image: SliceImage,
    pub mask: Mask,
    pub region: Region,
}

/// Square region around `bbox` grown by `margin` on every side, shifted to
/// stay inside a `height × width` image.
pub fn patch_region(bbox: BBox, margin: usize, height: usize, width: usize) -> Result<Region> {
    if bbox.row0 > bbox.row1 || bbox.col0 > bbox.col1 {
        return Err(Error::Usage(format!("empty bounding box {bbox:?}")));
    }
    if bbox.row1 >= height || bbox.col1 >= width {
        return Err(Error::Usage(format!("bounding box {bbox:?} outside {height}x{width} image")));
    }
    let side = (bbox.height().max(bbox.width()) + 2 * margin).min(height.min(width));
    let place = |lo: usize, extent: usize, limit: usize| -> usize {
        // center the region on the box, then shift it inside [0, limit)
        let centre2 = 2 * lo + extent; // twice the box center, in pixel edges
        let start = (centre2 as isize - side as isize).div_euclid(2);
        start.clamp(0, (limit - side) as isize) as usize
    };
    Ok(Region {
        row0: place(bbox.row0, bbox.height(), height),
        col0: place(bbox.col0, bbox.width(), width),
        side,
    })
}

/// Crop a square region around `bbox` (plus `margin`) and resample it to
/// `out_size × out_size`: bilinear for intensities, nearest neighbour and a
/// re-threshold to `{0, 1}` for the mask.
pub fn crop_patch(image: &SliceImage, mask: &Mask, bbox: BBox, margin: usize, out_size: usize) -> Result<Patch> {
    image.expect_dims(mask, "crop_patch")?;
    if out_size < 8 {
        return Err(Error::Usage(format!("patch size {out_size} must be >= 8")));
    }
    let region = patch_region(bbox, margin, image.height(), image.width())?;
    let scale = region.side as f64 / out_size as f64;
    let src = |i: usize, origin: usize| origin as f64 + (i as f64 + 0.5) * scale - 0.5;
    let patch = Grid::from_fn(out_size, out_size, |r, c| {
        bilinear(image, src(r, region.row0), src(c, region.col0))
    });
    let nearest = |i: usize, origin: usize, limit: usize| {
        ((origin as f64 + (i as f64 + 0.5) * scale).floor() as usize).min(limit - 1)
    };
    let pmask = Grid::from_fn(out_size, out_size, |r, c| {
        (mask.get(
            nearest(r, region.row0, image.height()),
            nearest(c, region.col0, image.width()),
        ) != 0) as u8
    });
    Ok(Patch { image: patch, mask: pmask, region })
}

/// 8-bit binary PGM (P5) of a `[0, 1]` image, for eyeballing.
pub fn write_pgm(image: &SliceImage, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    bytes.extend(image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, bytes).map_err(io_err(path))
}

/// Labels rendered as gray levels 0 / 127 / 255.
pub fn write_label_pgm(labels: &Grid<u8>, path: &Path) -> Result<()> {
    write_pgm(&labels.map(|v| v as f64 / 2.0), path)
}
