//! Dense row-major rasters and the handful of geometric operations the
//! pipelines need on them (mirror padding, cropping, pasting, PNG IO).

use std::path::Path;

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// A row-major `height × width` grid of cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (height, width),
                actual: (data.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// `(height, width)`.
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn map<U: Clone>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::DimensionMismatch {
                expected: shape,
                actual: self.shape(),
            });
        }
        Ok(())
    }

    /// Copies the `height × width` window starting at `(row, col)`.
    /// Panics if the window leaves the raster.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Self {
        assert!(row + height <= self.height && col + width <= self.width);
        let mut data = Vec::with_capacity(height * width);
        for r in row..row + height {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Writes `src` into `self` with its top-left corner at `(row, col)`,
    /// clipping whatever falls outside.
    pub fn paste(&mut self, src: &Raster<T>, row: usize, col: usize) {
        let h = src.height.min(self.height.saturating_sub(row));
        let w = src.width.min(self.width.saturating_sub(col));
        for r in 0..h {
            let dst = (row + r) * self.width + col;
            let s = r * src.width;
            self.data[dst..dst + w].clone_from_slice(&src.data[s..s + w]);
        }
    }

    /// Grows the raster to `height × width` (both at least the current
    /// size) by reflecting about the last row/column, without repeating the
    /// edge. Works for arbitrarily large pads.
    pub fn pad_reflect(&self, height: usize, width: usize) -> Self {
        assert!(height >= self.height && width >= self.width);
        Self::from_fn(height, width, |r, c| {
            self.get(reflect_index(r, self.height), reflect_index(c, self.width))
                .clone()
        })
    }

    /// Grows the raster to `height × width` filling the new area with `value`.
    pub fn pad_constant(&self, height: usize, width: usize, value: T) -> Self {
        assert!(height >= self.height && width >= self.width);
        let mut out = Self::filled(height, width, value);
        out.paste(self, 0, 0);
        out
    }
}

/// Maps an index past the end of a length-`len` axis back inside it by
/// mirror reflection (`… 2 1 0 1 2 … n-2 n-1 n-2 …`).
pub fn reflect_index(i: usize, len: usize) -> usize {
    if len <= 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let m = i % period;
    if m < len {
        m
    } else {
        period - m
    }
}

impl Raster<Rgb> {
    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| p.0).collect();
        Raster::from_vec(h as usize, w as usize, data)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let flat: Vec<u8> = self.data.iter().flat_map(|p| p.iter().copied()).collect();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, flat)
            .expect("buffer length matches dimensions");
        img.save(path)?;
        Ok(())
    }
}

impl Raster<u8> {
    pub fn read_gray_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        Raster::from_vec(h as usize, w as usize, img.into_raw())
    }

    pub fn write_gray_png(&self, path: &Path) -> Result<()> {
        let img =
            image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("buffer length matches dimensions");
        img.save(path)?;
        Ok(())
    }
}
