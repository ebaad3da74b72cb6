//! Multichannel kernelized correlation filter.
//!
//! Training solves kernel ridge regression over every cyclic shift of the
//! base sample. Because the Gaussian kernel matrix over cyclic shifts is
//! circulant, the dual coefficients come out of one elementwise division in
//! the Fourier domain:
//!
//! ```text
//! α̂ = ŷ / (k̂ˣˣ + λ)
//! ```
//!
//! Detection evaluates the learned regressor at every cyclic shift of a test
//! window at once, `f = F⁻¹(k̂ᶻˣ ⊙ α̂)`, and reads the displacement off the
//! argmax.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::convfeat::FeatureStack;
use crate::dft::{fft2, gaussian_label, ifft2, ifft2_complex, LabelParams, Spectrum2D};
use crate::error::{Error, Result};
use crate::plane::Plane;

/// Smallest admissible magnitude of `k̂ˣˣ + λ`.
const MIN_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KcfParams {
    /// Ridge regularization λ.
    pub lambda: f64,
    /// Gaussian kernel bandwidth σ, applied to squared distances divided by
    /// the feature element count.
    pub sigma: f64,
    /// Model update rate η.
    pub interp_factor: f64,
    pub label: LabelParams,
}

impl KcfParams {
    pub const DEFAULT_LAMBDA: f64 = 1e-4;
    pub const DEFAULT_SIGMA: f64 = 0.5;
    pub const DEFAULT_INTERP: f64 = 0.02;

    pub fn with_label(label: LabelParams) -> Self {
        KcfParams {
            lambda: Self::DEFAULT_LAMBDA,
            sigma: Self::DEFAULT_SIGMA,
            interp_factor: Self::DEFAULT_INTERP,
            label,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.interp_factor) {
            return Err(Error::Config(format!(
                "interp factor must lie in [0, 1], got {}",
                self.interp_factor
            )));
        }
        self.label.validate()
    }

    /// Raw bandwidth for stacks of `elements` values: `σ·√elements`, which
    /// is the same as dividing squared distances by the element count.
    pub fn bandwidth(&self, elements: usize) -> f64 {
        self.sigma * (elements as f64).sqrt()
    }
}

fn check_same_shape(x: &FeatureStack, z: &FeatureStack) -> Result<()> {
    if x.dims() != z.dims() || x.num_channels() != z.num_channels() {
        return Err(Error::Shape(format!(
            "feature stacks differ: {:?}x{} vs {:?}x{}",
            x.dims(),
            x.num_channels(),
            z.dims(),
            z.num_channels()
        )));
    }
    Ok(())
}

fn channel_spectra(x: &FeatureStack) -> Vec<Spectrum2D> {
    x.channels().iter().map(fft2).collect()
}

/// Gaussian kernel between `x` and every cyclic shift of `z`, from
/// precomputed channel spectra.
fn correlate_spectra(
    xf: &[Spectrum2D],
    zf: &[Spectrum2D],
    xx: f64,
    zz: f64,
    bandwidth: f64,
) -> Plane {
    let (h, w) = xf[0].dims();
    let mut acc = Spectrum2D::zeros(h, w);
    for (a, b) in xf.iter().zip(zf) {
        for ((dst, &p), &q) in acc.as_mut_slice().iter_mut().zip(a.as_slice()).zip(b.as_slice()) {
            *dst += p * q.conj();
        }
    }
    let corr = ifft2_complex(&acc);
    debug_assert!({
        let re = corr.as_slice().iter().map(|v| v.re.abs()).fold(0.0, f64::max);
        let im = corr.as_slice().iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        im <= 1e-6 * re.max(f64::MIN_POSITIVE)
    });
    let inv_bw2 = 1.0 / (bandwidth * bandwidth);
    let values = corr
        .as_slice()
        .iter()
        .map(|c| {
            // squared distance is non-negative; rounding can make it -ε
            let dist2 = (xx + zz - 2.0 * c.re).max(0.0);
            (-dist2 * inv_bw2).exp()
        })
        .collect();
    Plane::new(h, w, values).expect("size preserved")
}

/// Gaussian kernel correlation over all cyclic shifts:
///
/// `k(τ) = exp(-(‖x‖² + ‖z‖² - 2·c(τ)) / σ²)` with
/// `c = F⁻¹(Σ_d F(x_d) ⊙ conj(F(z_d)))`,
///
/// so `k(τ)` is the kernel value between `x` and `z` cyclically shifted by
/// `τ` (content moved by `τ`). `sigma` is used as given, without element
/// count scaling.
pub fn kernel_correlation(x: &FeatureStack, z: &FeatureStack, sigma: f64) -> Result<Plane> {
    check_same_shape(x, z)?;
    Ok(correlate_spectra(
        &channel_spectra(x),
        &channel_spectra(z),
        x.sum_squares(),
        z.sum_squares(),
        sigma,
    ))
}

/// Learned appearance and dual coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerModel {
    model_x: FeatureStack,
    model_xf: Vec<Spectrum2D>,
    alpha_hat: Spectrum2D,
    label_hat: Spectrum2D,
}

impl TrackerModel {
    pub fn model_x(&self) -> &FeatureStack {
        &self.model_x
    }

    /// Fourier-domain dual coefficients `F(α)`.
    pub fn alpha_hat(&self) -> &Spectrum2D {
        &self.alpha_hat
    }

    /// Fourier-domain regression target `F(y)`.
    pub fn label_hat(&self) -> &Spectrum2D {
        &self.label_hat
    }

    pub fn window_size(&self) -> (usize, usize) {
        self.model_x.dims()
    }
}

/// Result of evaluating a model on one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub response: Plane,
    /// Signed `(rows, cols)` shift of the target relative to the window.
    pub displacement: (i64, i64),
    pub peak: f64,
}

/// Solves for the dual coefficients on `features`.
pub fn train(features: &FeatureStack, params: &KcfParams) -> Result<TrackerModel> {
    let (h, w) = features.dims();
    let label_hat = fft2(&gaussian_label(h, w, &params.label));
    let xf = channel_spectra(features);
    let xx = features.sum_squares();
    let kxx = correlate_spectra(&xf, &xf, xx, xx, params.bandwidth(features.len()));
    let kxx_hat = fft2(&kxx);

    let lambda = params.lambda;
    if let Some(bad) = kxx_hat
        .as_slice()
        .iter()
        .map(|k| (k + lambda).norm())
        .find(|d| *d < MIN_DENOMINATOR)
    {
        return Err(Error::Degenerate(format!(
            "kernel spectrum denominator {bad:e} vanishes"
        )));
    }
    let alpha_hat = label_hat.zip_map(&kxx_hat, |y, k| y / (k + lambda))?;
    Ok(TrackerModel {
        model_x: features.clone(),
        model_xf: xf,
        alpha_hat,
        label_hat,
    })
}

/// Maps a bin index to a signed shift in `(-n/2, n/2]`.
fn signed_shift(index: usize, n: usize) -> i64 {
    if index > n / 2 {
        index as i64 - n as i64
    } else {
        index as i64
    }
}

/// Argmax of a response map as a signed displacement. Ties go to the
/// smallest displacement, then to the first bin in row-major order.
pub fn peak_displacement(response: &Plane) -> ((i64, i64), f64) {
    let (h, w) = response.dims();
    let mut best: Option<((i64, i64), f64)> = None;
    for r in 0..h {
        for c in 0..w {
            let v = response.get(r, c);
            let d = (signed_shift(r, h), signed_shift(c, w));
            let better = match best {
                None => true,
                Some((bd, bv)) => {
                    v > bv || (v == bv && d.0 * d.0 + d.1 * d.1 < bd.0 * bd.0 + bd.1 * bd.1)
                }
            };
            if better {
                best = Some((d, v));
            }
        }
    }
    best.expect("response map is non-empty")
}

/// Evaluates the model at every cyclic shift of `z`.
pub fn detect(model: &TrackerModel, z: &FeatureStack, params: &KcfParams) -> Result<Detection> {
    check_same_shape(&model.model_x, z)?;
    let zf = channel_spectra(z);
    // test sample first: k(τ) compares z with the model shifted by τ, so
    // the peak lands on the target's displacement
    let kzx = correlate_spectra(
        &zf,
        &model.model_xf,
        z.sum_squares(),
        model.model_x.sum_squares(),
        params.bandwidth(z.len()),
    );
    let response_hat = fft2(&kzx).zip_map(&model.alpha_hat, |k, a| k * a)?;
    let response = ifft2(&response_hat);
    let (displacement, peak) = peak_displacement(&response);
    Ok(Detection {
        response,
        displacement,
        peak,
    })
}

fn lerp_spectrum(a: &Spectrum2D, b: &Spectrum2D, rate: f64) -> Result<Spectrum2D> {
    a.zip_map(b, |x, y| x * (1.0 - rate) + y * rate)
}

/// Blends the model towards a model trained on `new_features` at rate
/// `params.interp_factor`.
pub fn update(
    model: &TrackerModel,
    new_features: &FeatureStack,
    params: &KcfParams,
) -> Result<TrackerModel> {
    check_same_shape(&model.model_x, new_features)?;
    let eta = params.interp_factor;
    if eta == 0.0 {
        return Ok(model.clone());
    }
    let fresh = train(new_features, params)?;
    if eta == 1.0 {
        return Ok(fresh);
    }
    let model_xf = model
        .model_xf
        .iter()
        .zip(&fresh.model_xf)
        .map(|(a, b)| lerp_spectrum(a, b, eta))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrackerModel {
        model_x: model.model_x.lerp(new_features, eta)?,
        model_xf,
        alpha_hat: lerp_spectrum(&model.alpha_hat, &fresh.alpha_hat, eta)?,
        label_hat: fresh.label_hat,
    })
}

/// Residual of `α̂ ⊙ (k̂ˣˣ + λ) - ŷ`, maximum magnitude over bins. Zero up to
/// rounding for a freshly trained model.
pub fn dual_residual(model: &TrackerModel, params: &KcfParams) -> f64 {
    let x = &model.model_x;
    let xx = x.sum_squares();
    let kxx_hat = fft2(&correlate_spectra(
        &model.model_xf,
        &model.model_xf,
        xx,
        xx,
        params.bandwidth(x.len()),
    ));
    model
        .alpha_hat
        .as_slice()
        .iter()
        .zip(kxx_hat.as_slice())
        .zip(model.label_hat.as_slice())
        .map(|((a, k), y)| (a * (k + Complex64::new(params.lambda, 0.0)) - y).norm())
        .fold(0.0, f64::max)
}
