//! Hyperspectral frames, bounding boxes and the raw sequence file format.
//!
//! A [`HyperCube`] stores one frame band-sequentially: band planes are
//! contiguous and each plane is row-major. Coordinates are 0-based with the
//! origin at the top-left corner; `x` indexes columns and `y` indexes rows.
//! Every consumer in the crate, including ground-truth files, uses this
//! convention.

mod boxes;
mod io;

pub use boxes::{read_boxes, write_boxes, BoundingBox};
pub use io::{load_sequence, write_sequence, Dtype, SequenceHeader, SequenceReader};

use crate::error::{Error, Result};
use crate::plane::Plane;

#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f64>,
}

impl HyperCube {
    /// Builds a cube from band-sequential data. Values must be finite and
    /// lie in `[0, 1]`.
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        let cube = Self::new_unchecked_range(height, width, bands, data)?;
        if let Some(v) = cube.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidData(format!(
                "cube value {v} outside [0, 1]"
            )));
        }
        Ok(cube)
    }

    /// Like [`HyperCube::new`] but only checks the shape. Filters and other
    /// zero-mean cubes live outside the reflectance range.
    pub(crate) fn new_unchecked_range(
        height: usize,
        width: usize,
        bands: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::Shape(format!(
                "cube dimensions must be positive, got {height}x{width}x{bands}"
            )));
        }
        if data.len() != height * width * bands {
            return Err(Error::Shape(format!(
                "{height}x{width}x{bands} cube needs {} values, got {}",
                height * width * bands,
                data.len()
            )));
        }
        Ok(HyperCube {
            height,
            width,
            bands,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, spectrum: &[f64]) -> Result<Self> {
        let bands = spectrum.len();
        let plane = height * width;
        let mut data = Vec::with_capacity(plane * bands);
        for &v in spectrum {
            data.extend(std::iter::repeat_n(v, plane));
        }
        Self::new(height, width, bands, data)
    }

    /// Builds a cube by evaluating `f(row, col, band)` everywhere.
    pub fn from_fn(
        height: usize,
        width: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * bands);
        for b in 0..bands {
            for r in 0..height {
                for c in 0..width {
                    data.push(f(r, c, b));
                }
            }
        }
        Self::new(height, width, bands, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        self.data[(band * self.height + row) * self.width + col]
    }

    /// Band-sequential view of the whole cube.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Row-major slice of one band.
    pub fn plane(&self, band: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[band * n..(band + 1) * n]
    }

    pub fn spectrum_at(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.bands).map(|b| self.get(row, col, b)).collect()
    }

    /// Copies band `index` out as a 2D image.
    pub fn band(&self, index: usize) -> Result<Plane> {
        self.check_band(index)?;
        Plane::new(self.height, self.width, self.plane(index).to_vec())
    }

    /// Single-band cube holding band `index`.
    pub fn select_band(&self, index: usize) -> Result<HyperCube> {
        self.check_band(index)?;
        Ok(HyperCube {
            height: self.height,
            width: self.width,
            bands: 1,
            data: self.plane(index).to_vec(),
        })
    }

    fn check_band(&self, index: usize) -> Result<()> {
        if index >= self.bands {
            return Err(Error::BandOutOfRange {
                index,
                bands: self.bands,
            });
        }
        Ok(())
    }

    /// Extracts the `box.w × box.h` region under `bbox`. Pixels outside the
    /// frame take the value of the nearest edge pixel.
    pub fn crop_window(&self, bbox: &BoundingBox) -> HyperCube {
        let (h, w) = (bbox.h as usize, bbox.w as usize);
        let rows: Vec<usize> = (0..h)
            .map(|i| clamp_index(bbox.y as i64 + i as i64, self.height))
            .collect();
        let cols: Vec<usize> = (0..w)
            .map(|j| clamp_index(bbox.x as i64 + j as i64, self.width))
            .collect();
        let mut data = Vec::with_capacity(h * w * self.bands);
        for b in 0..self.bands {
            let plane = self.plane(b);
            for &r in &rows {
                let row = &plane[r * self.width..(r + 1) * self.width];
                data.extend(cols.iter().map(|&c| row[c]));
            }
        }
        HyperCube {
            height: h,
            width: w,
            bands: self.bands,
            data,
        }
    }

    /// Writes `patch` into the region under `bbox`, which must lie fully
    /// inside the cube.
    pub fn paste(&mut self, bbox: &BoundingBox, patch: &HyperCube) -> Result<()> {
        if patch.bands != self.bands
            || patch.height != bbox.h as usize
            || patch.width != bbox.w as usize
        {
            return Err(Error::Shape(format!(
                "patch {}x{}x{} does not fit box {bbox:?} on {} bands",
                patch.height, patch.width, patch.bands, self.bands
            )));
        }
        if bbox.x < 0
            || bbox.y < 0
            || bbox.x as usize + patch.width > self.width
            || bbox.y as usize + patch.height > self.height
        {
            return Err(Error::Shape(format!(
                "box {bbox:?} is not inside a {}x{} frame",
                self.height, self.width
            )));
        }
        let (x0, y0) = (bbox.x as usize, bbox.y as usize);
        for b in 0..self.bands {
            for r in 0..patch.height {
                let dst = (b * self.height + y0 + r) * self.width + x0;
                let src = (b * patch.height + r) * patch.width;
                self.data[dst..dst + patch.width]
                    .copy_from_slice(&patch.data[src..src + patch.width]);
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn clamp_index(i: i64, len: usize) -> usize {
    i.clamp(0, len as i64 - 1) as usize
}
