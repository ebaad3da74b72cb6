//! 2D discrete Fourier transforms, circulant products and the regression
//! label map.
//!
//! The forward transform is unnormalized and the inverse carries the
//! `1/(H·W)` factor, so `ifft2(fft2(x)) == x`. Sizes are arbitrary; rustfft
//! picks a mixed-radix or Bluestein plan as needed.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::plane::Plane;

thread_local! {
    // plans are cached per thread; rustfft plans are immutable once built
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Complex coefficients of a 2D transform, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl Spectrum2D {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} spectrum needs {} coefficients, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Spectrum2D {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Spectrum2D {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
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

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Elementwise `f(self[i], other[i])`.
    pub fn zip_map(
        &self,
        other: &Spectrum2D,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Spectrum2D> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "spectra {:?} and {:?} differ in size",
                self.dims(),
                other.dims()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Spectrum2D {
            height: self.height,
            width: self.width,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Spectrum2D {
        Spectrum2D {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn transform_in_place(height: usize, width: usize, data: &mut [Complex64], direction: FftDirection) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = planner.plan_fft(width, direction);
        let col_fft = planner.plan_fft(height, direction);

        row_fft.process(data);

        let mut column = vec![Complex64::new(0.0, 0.0); height * width];
        for r in 0..height {
            for c in 0..width {
                column[c * height + r] = data[r * width + c];
            }
        }
        col_fft.process(&mut column);
        for c in 0..width {
            for r in 0..height {
                data[r * width + c] = column[c * height + r];
            }
        }
    });
}

/// Unnormalized forward transform of a real array.
pub fn fft2(input: &Plane) -> Spectrum2D {
    let (height, width) = input.dims();
    let mut data: Vec<Complex64> = input
        .as_slice()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    transform_in_place(height, width, &mut data, FftDirection::Forward);
    Spectrum2D {
        height,
        width,
        data,
    }
}

/// Normalized inverse transform, keeping the complex result.
pub fn ifft2_complex(spectrum: &Spectrum2D) -> Spectrum2D {
    let (height, width) = spectrum.dims();
    let mut data = spectrum.data.clone();
    transform_in_place(height, width, &mut data, FftDirection::Inverse);
    let scale = 1.0 / (height * width) as f64;
    data.iter_mut().for_each(|v| *v *= scale);
    Spectrum2D {
        height,
        width,
        data,
    }
}

/// Normalized inverse transform, real part.
pub fn ifft2(spectrum: &Spectrum2D) -> Plane {
    let full = ifft2_complex(spectrum);
    let (h, w) = full.dims();
    Plane::new(h, w, full.data.iter().map(|v| v.re).collect()).expect("size preserved")
}

/// `C(x)·v` where `C(x)` is the circulant matrix whose first row is `x` and
/// whose row `i` is `x` cyclically shifted right by `i`:
/// `C[i][j] = x[(j - i) mod n]`. Computed in the frequency domain as
/// `ifft(conj(fft(x)) ⊙ fft(v))`.
pub fn circulant_apply(x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if x.len() != v.len() {
        return Err(Error::Shape(format!(
            "circulant base has length {}, vector has length {}",
            x.len(),
            v.len()
        )));
    }
    let n = x.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let to_complex = |s: &[f64]| -> Vec<Complex64> { s.iter().map(|&r| Complex64::new(r, 0.0)).collect() };
    let mut xf = to_complex(x);
    let mut vf = to_complex(v);
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let fwd = planner.plan_fft_forward(n);
        fwd.process(&mut xf);
        fwd.process(&mut vf);
        let mut prod: Vec<Complex64> = xf.iter().zip(&vf).map(|(a, b)| a.conj() * b).collect();
        planner.plan_fft_inverse(n).process(&mut prod);
        Ok(prod.iter().map(|c| c.re / n as f64).collect())
    })
}

/// Parameters of the regression target `y = b·exp(-(D/σ₁)^β)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LabelParams {
    /// Spatial scale σ₁ in pixels.
    pub sigma1: f64,
    /// Shape exponent β; 2 gives a Gaussian.
    pub beta: f64,
    /// Peak value b.
    pub b: f64,
}

impl LabelParams {
    /// Gaussian label with `σ₁ = √(w·h)/10` for a `w × h` target.
    pub fn for_target(w: u32, h: u32) -> Self {
        LabelParams {
            sigma1: ((w as f64) * (h as f64)).sqrt() / 10.0,
            beta: 2.0,
            b: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.beta > 0.0 && self.b > 0.0) {
            return Err(Error::Config(format!(
                "label parameters must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Regression label map with its peak at index `(0, 0)`. The distance to
/// the peak wraps around, so row `h-1` is one pixel away from row `0`.
pub fn gaussian_label(h: usize, w: usize, params: &LabelParams) -> Plane {
    Plane::from_fn(h, w, |r, c| {
        let dr = r.min(h - r) as f64;
        let dc = c.min(w - c) as f64;
        let dist = (dr * dr + dc * dc).sqrt();
        params.b * (-(dist / params.sigma1).powf(params.beta)).exp()
    })
}
