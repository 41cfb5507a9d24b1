use crate::error::{Error, Result};

pub const BACKGROUND: u8 = 0;
pub const LIVER: u8 = 1;
pub const LESION: u8 = 2;

/// Row-major 2-D raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Intensity image with values in `[0, 1]`.
pub type SliceImage = Grid<f64>;
/// Per-pixel class: background, liver or lesion.
pub type LabelMask = Grid<u8>;
/// Binary `{0, 1}` mask.
pub type Mask = Grid<u8>;

impl<T: Copy> Grid<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height * width != data.len() {
            return Err(Error::Dimension(format!(
                "{height}x{width} grid given {} values",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.width + c] = v;
    }

    /// Value at a signed position, or `None` outside the grid.
    #[inline]
    pub fn at(&self, r: isize, c: isize) -> Option<T> {
        if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
            None
        } else {
            Some(self.data[r as usize * self.width + c as usize])
        }
    }

    /// Value with coordinates clamped into the grid (replicate border).
    #[inline]
    pub fn clamped(&self, r: isize, c: isize) -> T {
        let r = r.clamp(0, self.height as isize - 1) as usize;
        let c = c.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn expect_dims<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }
}

impl Grid<f64> {
    pub fn check_unit_range(&self) -> Result<()> {
        match self.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            Some(v) => Err(Error::Usage(format!("intensity {v} outside [0, 1]"))),
            None => Ok(()),
        }
    }
}

impl Grid<u8> {
    pub fn count(&self, value: u8) -> usize {
        self.data.iter().filter(|&&v| v == value).count()
    }

    /// Binary mask of pixels equal to `value`.
    pub fn select(&self, value: u8) -> Mask {
        self.map(|v| (v == value) as u8)
    }

    pub fn check_labels(&self) -> Result<()> {
        match self.data.iter().find(|&&v| v > LESION) {
            Some(v) => Err(Error::Usage(format!("label {v} outside {{0,1,2}}"))),
            None => Ok(()),
        }
    }

    pub fn check_binary(&self) -> Result<()> {
        match self.data.iter().find(|&&v| v > 1) {
            Some(v) => Err(Error::Usage(format!("mask value {v} is not binary"))),
            None => Ok(()),
        }
    }

    /// Centroid (row, col) of set pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sr, mut sc, mut n) = (0.0, 0.0, 0usize);
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) != 0 {
                    sr += r as f64;
                    sc += c as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sr / n as f64, sc / n as f64))
    }
}
