//! Canny edge detection on `[0, 1]` intensity images.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, SliceImage};
use crate::imgproc::gaussian_blur;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self { sigma: 1.0, low: 0.1, high: 0.2 }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("/sigma: {} must be > 0", self.sigma)));
        }
        if !(self.low > 0.0 && self.low < self.high) {
            return Err(Error::Config(format!(
                "/low: thresholds need 0 < low < high, got low {} high {}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Intermediate products of the edge chain.
#[derive(Clone, Debug)]
pub struct CannyStages {
    pub smoothed: Grid<f64>,
    pub gx: Grid<f64>,
    pub gy: Grid<f64>,
    pub magnitude: Grid<f64>,
    /// Magnitude where it is a local maximum across the edge, else 0.
    pub suppressed: Grid<f64>,
}

/// Unnormalized 3×3 Sobel derivatives with replicated borders.
pub fn sobel(img: &Grid<f64>) -> (Grid<f64>, Grid<f64>) {
    let (h, w) = img.dims();
    let p = |r: usize, c: usize, dr: isize, dc: isize| img.clamped(r as isize + dr, c as isize + dc);
    let gx = Grid::from_fn(h, w, |r, c| {
        (p(r, c, -1, 1) + 2.0 * p(r, c, 0, 1) + p(r, c, 1, 1)) - (p(r, c, -1, -1) + 2.0 * p(r, c, 0, -1) + p(r, c, 1, -1))
    });
    let gy = Grid::from_fn(h, w, |r, c| {
        (p(r, c, 1, -1) + 2.0 * p(r, c, 1, 0) + p(r, c, 1, 1)) - (p(r, c, -1, -1) + 2.0 * p(r, c, -1, 0) + p(r, c, -1, 1))
    });
    (gx, gy)
}

/// Neighbour offset `(dr, dc)` along the gradient, quantized to 45°.
fn direction(gx: f64, gy: f64) -> (isize, isize) {
    let mut deg = gy.atan2(gx).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if !(22.5..157.5).contains(&deg) {
        (0, 1)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (1, 0)
    } else {
        (1, -1)
    }
}

/// Relative gap below which two gradient magnitudes are a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Non-maximum suppression. Ties resolve toward the pixel further along the
/// gradient, so a plateau of two equal maxima keeps exactly one. Magnitudes
/// within [`TIE_TOLERANCE`] (relative) count as equal.
pub fn non_max_suppression(magnitude: &Grid<f64>, gx: &Grid<f64>, gy: &Grid<f64>) -> Grid<f64> {
    let (h, w) = magnitude.dims();
    Grid::from_fn(h, w, |r, c| {
        let m = magnitude.get(r, c);
        if m <= 0.0 {
            return 0.0;
        }
        let (dr, dc) = direction(gx.get(r, c), gy.get(r, c));
        let ahead = magnitude.at(r as isize + dr, c as isize + dc).unwrap_or(0.0);
        let behind = magnitude.at(r as isize - dr, c as isize - dc).unwrap_or(0.0);
        let tol = TIE_TOLERANCE * m;
        if m >= behind - tol && m > ahead + tol {
            m
        } else {
            0.0
        }
    })
}

pub fn canny_stages(image: &SliceImage, sigma: f64) -> CannyStages {
    let smoothed = gaussian_blur(image, sigma);
    let (gx, gy) = sobel(&smoothed);
    let (h, w) = image.dims();
    let magnitude = Grid::from_fn(h, w, |r, c| gx.get(r, c).hypot(gy.get(r, c)));
    let suppressed = non_max_suppression(&magnitude, &gx, &gy);
    CannyStages { smoothed, gx, gy, magnitude, suppressed }
}

/// Keep pixels `≥ high`, plus pixels `≥ low` 8-connected to them through
/// other pixels `≥ low`.
pub fn hysteresis(suppressed: &Grid<f64>, low: f64, high: f64) -> Mask {
    let (h, w) = suppressed.dims();
    let mut out = Grid::filled(h, w, 0u8);
    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if suppressed.get(r, c) >= high {
                out.set(r, c, 1);
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if let Some(v) = suppressed.at(rr, cc) {
                    let (rr, cc) = (rr as usize, cc as usize);
                    if v >= low && out.get(rr, cc) == 0 {
                        out.set(rr, cc, 1);
                        queue.push_back((rr, cc));
                    }
                }
            }
        }
    }
    out
}

pub fn canny(image: &SliceImage, sigma: f64, low: f64, high: f64) -> Result<Mask> {
    CannyParams { sigma, low, high }.validate()?;
    Ok(hysteresis(&canny_stages(image, sigma).suppressed, low, high))
}

pub fn canny_with(image: &SliceImage, params: &CannyParams) -> Result<Mask> {
    canny(image, params.sigma, params.low, params.high)
}
