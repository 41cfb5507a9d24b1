//! Small raster utilities: Gaussian filtering, sampling, morphology and
//! connected components.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, Mask, SliceImage};

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl BBox {
    pub fn height(&self) -> usize {
        self.row1 + 1 - self.row0
    }

    pub fn width(&self) -> usize {
        self.col1 + 1 - self.col0
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self { row0: 0, col0: 0, row1: height - 1, col1: width - 1 }
    }
}

/// Normalized 1-D Gaussian truncated at `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &Grid<f64>, sigma: f64) -> Grid<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w) = img.dims();
    let tmp: Grid<f64> = Grid::from_fn(h, w, |y, x| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * img.clamped(y as isize, x as isize + i as isize - r))
            .sum()
    });
    Grid::<f64>::from_fn(h, w, |y, x| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * tmp.clamped(y as isize + i as isize - r, x as isize))
            .sum()
    })
}

/// 2-D Gaussian whose support is the Euclidean disk of radius `3σ`, so a
/// blur never reaches pixels farther than `3σ` from the source.
pub struct RadialKernel {
    pub radius: isize,
    /// `(dr, dc, weight)` taps.
    pub taps: Vec<(isize, isize, f64)>,
}

impl RadialKernel {
    pub fn new(sigma: f64) -> Self {
        let reach = 3.0 * sigma;
        let radius = reach.floor() as isize;
        let mut taps = Vec::new();
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                let d2 = (dr * dr + dc * dc) as f64;
                if d2.sqrt() <= reach {
                    taps.push((dr, dc, (-d2 / (2.0 * sigma * sigma)).exp()));
                }
            }
        }
        let s: f64 = taps.iter().map(|t| t.2).sum();
        for t in &mut taps {
            t.2 /= s;
        }
        Self { radius, taps }
    }
}

/// Soft alpha map: the binary mask blurred by a [`RadialKernel`], with
/// everything outside the grid treated as 0.
pub fn feather(mask: &Mask, sigma: f64) -> Grid<f64> {
    let k = RadialKernel::new(sigma);
    let (h, w) = mask.dims();
    let mut out = Grid::filled(h, w, 0.0);
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) == 0 {
                continue;
            }
            for &(dr, dc, wt) in &k.taps {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    let i = rr as usize * w + cc as usize;
                    out.data_mut()[i] += wt;
                }
            }
        }
    }
    out.data_mut().iter_mut().for_each(|v| *v = v.min(1.0));
    out
}

/// Bilinear sample at fractional `(r, c)`, replicating borders.
pub fn bilinear(img: &Grid<f64>, r: f64, c: f64) -> f64 {
    let r = r.clamp(0.0, (img.height() - 1) as f64);
    let c = c.clamp(0.0, (img.width() - 1) as f64);
    let (r0, c0) = (r.floor(), c.floor());
    let (fr, fc) = (r - r0, c - c0);
    let (r0, c0) = (r0 as isize, c0 as isize);
    let v00 = img.clamped(r0, c0);
    let v01 = img.clamped(r0, c0 + 1);
    let v10 = img.clamped(r0 + 1, c0);
    let v11 = img.clamped(r0 + 1, c0 + 1);
    (1.0 - fr) * ((1.0 - fc) * v00 + fc * v01) + fr * ((1.0 - fc) * v10 + fc * v11)
}

/// Bilinear sample of a binary mask, zero outside the grid.
pub fn bilinear_mask(mask: &Mask, r: f64, c: f64) -> f64 {
    let (r0, c0) = (r.floor(), c.floor());
    let (fr, fc) = (r - r0, c - c0);
    let (r0, c0) = (r0 as isize, c0 as isize);
    let v = |rr: isize, cc: isize| mask.at(rr, cc).map_or(0.0, |v| (v != 0) as u8 as f64);
    (1.0 - fr) * ((1.0 - fc) * v(r0, c0) + fc * v(r0, c0 + 1))
        + fr * ((1.0 - fc) * v(r0 + 1, c0) + fc * v(r0 + 1, c0 + 1))
}

/// Chebyshev dilation by `radius` pixels.
pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    let (h, w) = mask.dims();
    let r = radius as isize;
    Grid::from_fn(h, w, |y, x| {
        for dy in -r..=r {
            for dx in -r..=r {
                if mask.at(y as isize + dy, x as isize + dx).unwrap_or(0) != 0 {
                    return 1;
                }
            }
        }
        0
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BBox,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn to_mask(&self, height: usize, width: usize) -> Mask {
        let mut m = Grid::filled(height, width, 0u8);
        for &(r, c) in &self.pixels {
            m.set(r, c, 1);
        }
        m
    }
}

/// 8-connected components of the nonzero pixels, in raster order of their
/// first pixel.
pub fn components(mask: &Mask) -> Vec<Component> {
    let (h, w) = mask.dims();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for start in 0..h * w {
        if seen[start] || mask.data()[start] == 0 {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut pixels = Vec::new();
        let mut bbox = BBox { row0: usize::MAX, col0: usize::MAX, row1: 0, col1: 0 };
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            pixels.push((r, c));
            bbox.row0 = bbox.row0.min(r);
            bbox.col0 = bbox.col0.min(c);
            bbox.row1 = bbox.row1.max(r);
            bbox.col1 = bbox.col1.max(c);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr < 0 || cc < 0 || rr as usize >= h || cc as usize >= w {
                        continue;
                    }
                    let j = rr as usize * w + cc as usize;
                    if !seen[j] && mask.data()[j] != 0 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_unstable();
        out.push(Component { pixels, bbox });
    }
    out
}

/// Gaussian-smoothed white noise rescaled to standard deviation `sd`.
pub fn band_limited_noise<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    sd: f64,
    sigma: f64,
    rng: &mut R,
) -> SliceImage {
    let white = Grid::from_fn(height, width, |_, _| rng.sample::<f64, _>(StandardNormal));
    let smooth = gaussian_blur(&white, sigma);
    // A separable kernel k⊗k scales unit white noise by ‖k‖₂².
    let k = gaussian_kernel(sigma);
    let gain: f64 = k.iter().map(|v| v * v).sum::<f64>();
    smooth.map(|v| v * sd / gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn kernel_is_normalized_with_3_sigma_radius() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let rk = RadialKernel::new(1.0);
        assert!(rk.taps.iter().all(|&(dr, dc, _)| ((dr * dr + dc * dc) as f64) <= 9.0));
    }

    #[test]
    fn blur_preserves_constants() {
        let g = Grid::filled(9, 7, 0.3);
        for v in gaussian_blur(&g, 1.5).data() {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn feather_reaches_at_most_three_sigma() {
        let mut m = Grid::filled(21, 21, 0u8);
        m.set(10, 10, 1);
        let a = feather(&m, 1.0);
        for r in 0..21 {
            for c in 0..21 {
                let d = (((r as f64) - 10.0).powi(2) + ((c as f64) - 10.0).powi(2)).sqrt();
                if d > 3.0 {
                    assert_eq!(a.get(r, c), 0.0);
                }
            }
        }
        assert!(a.get(10, 10) > 0.0);
    }

    #[test]
    fn components_eight_connected() {
        let m = Grid::new(3, 5, vec![1, 0, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0]).unwrap();
        let cs = components(&m);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].area(), 2);
        assert_eq!(cs[1].bbox, BBox { row0: 0, col0: 4, row1: 1, col1: 4 });
    }

    #[test]
    fn noise_has_requested_sd() {
        let mut rng = seed::stream(3, &[]);
        let n = band_limited_noise(128, 128, 0.05, 1.5, &mut rng);
        let mean = n.data().iter().sum::<f64>() / n.len() as f64;
        let sd = (n.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.len() as f64).sqrt();
        assert!((sd - 0.05).abs() < 0.01, "sd {sd}");
    }

    #[test]
    fn bilinear_interpolates() {
        let g = Grid::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bilinear(&g, 0.5, 0.5), 1.5);
        assert_eq!(bilinear(&g, 1.0, 1.0), 3.0);
        let m = Grid::new(1, 2, vec![1u8, 1]).unwrap();
        assert_eq!(bilinear_mask(&m, 0.0, 1.5), 0.5);
    }
}
