//! Spectral-spatial convolutional features.
//!
//! A bank of `w × w × D` filters is cut from the first-frame target, each
//! filter normalized to zero mean and unit L2 norm. Every filter is
//! correlated with a `D`-band window over all bands at once, giving one
//! feature map per filter; the maps stacked together form the multichannel
//! representation fed to the correlation filter.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hypercube::{clamp_index, HyperCube};
use crate::plane::Plane;

/// Filters slide without being flipped (cross-correlation). Setting this to
/// `false` switches to true convolution.
pub const CROSS_CORRELATION: bool = true;

/// Patches whose norm after mean removal falls below this are treated as
/// zero-variance.
const DEGENERATE_NORM: f64 = 1e-9;

/// One `size × size × bands` filter, band-sequential like [`HyperCube`].
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    size: usize,
    bands: usize,
    weights: Vec<f64>,
}

impl Filter {
    pub fn new(size: usize, bands: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || bands == 0 || weights.len() != size * size * bands {
            return Err(Error::Shape(format!(
                "{size}x{size}x{bands} filter cannot hold {} weights",
                weights.len()
            )));
        }
        Ok(Filter {
            size,
            bands,
            weights,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, band: usize) -> f64 {
        self.weights[(band * self.size + i) * self.size + j]
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Copies the patch with top-left corner `(row, col)` and removes its
    /// mean; `None` when the patch has zero variance.
    fn normalized_patch(cube: &HyperCube, row: usize, col: usize, size: usize) -> Option<Filter> {
        let bands = cube.bands();
        let mut weights = Vec::with_capacity(size * size * bands);
        for b in 0..bands {
            for i in 0..size {
                for j in 0..size {
                    weights.push(cube.get(row + i, col + j, b));
                }
            }
        }
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        weights.iter_mut().for_each(|v| *v -= mean);
        let norm = weights.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= DEGENERATE_NORM {
            return None;
        }
        weights.iter_mut().for_each(|v| *v /= norm);
        Some(Filter {
            size,
            bands,
            weights,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    filters: Vec<Filter>,
    size: usize,
    bands: usize,
    seed: u64,
}

impl FilterBank {
    pub fn new(filters: Vec<Filter>, seed: u64) -> Result<Self> {
        let first = filters
            .first()
            .ok_or_else(|| Error::Config("filter bank needs at least one filter".into()))?;
        let (size, bands) = (first.size, first.bands);
        if filters.iter().any(|f| f.size != size || f.bands != bands) {
            return Err(Error::Shape("filters in a bank must share one shape".into()));
        }
        Ok(FilterBank {
            filters,
            size,
            bands,
            seed,
        })
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Spatial filter size `w`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same bank with filters reordered so that output channel `k` comes
    /// from filter `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<FilterBank> {
        let filters = order
            .iter()
            .map(|&i| {
                self.filters
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Shape(format!("filter index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        FilterBank::new(filters, self.seed)
    }

    /// Writes the text line `w,D,count,seed` followed by the weights as
    /// little-endian f32, filter after filter.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{},{},{},{}", self.size, self.bands, self.len(), self.seed)?;
        for f in &self.filters {
            for &v in &f.weights {
                out.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn read_from<R: BufRead>(mut input: R) -> Result<FilterBank> {
        let bad = |m: String| Error::InvalidData(format!("filter bank: {m}"));
        let mut line = String::new();
        input
            .read_line(&mut line)
            .map_err(|e| bad(e.to_string()))?;
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected `w,D,count,seed`, got {:?}", line.trim())));
        }
        let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad(format!("bad number {s:?}")));
        let size = num(fields[0])? as usize;
        let bands = num(fields[1])? as usize;
        let count = num(fields[2])? as usize;
        let seed = num(fields[3])?;

        let per_filter = size * size * bands;
        let mut bytes = vec![0u8; per_filter * count * 4];
        input
            .read_exact(&mut bytes)
            .map_err(|e| bad(format!("payload: {e}")))?;
        let filters = bytes
            .chunks_exact(per_filter * 4)
            .map(|chunk| {
                let weights = chunk
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect();
                Filter::new(size, bands, weights)
            })
            .collect::<Result<Vec<_>>>()?;
        FilterBank::new(filters, seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<FilterBank> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        FilterBank::read_from(BufReader::new(file))
    }
}

/// Draws `count` distinct `size × size` patches uniformly from all fully
/// interior stride-1 positions of `target`, skipping zero-variance patches,
/// and normalizes each to zero mean and unit norm.
pub fn sample_filter_bank(
    target: &HyperCube,
    size: usize,
    count: usize,
    seed: u64,
) -> Result<FilterBank> {
    if size == 0 || count == 0 {
        return Err(Error::Config(format!(
            "filter size and count must be positive, got size {size}, count {count}"
        )));
    }
    if target.height() < size || target.width() < size {
        return Err(Error::Config(format!(
            "target region {}x{} is smaller than the {size}x{size} filter",
            target.height(),
            target.width()
        )));
    }
    let rows = target.height() - size + 1;
    let cols = target.width() - size + 1;
    if rows * cols < count {
        return Err(Error::Config(format!(
            "target region has {} filter positions, {count} filters requested",
            rows * cols
        )));
    }

    let mut positions: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positions.shuffle(&mut rng);

    let filters: Vec<Filter> = positions
        .iter()
        .filter_map(|&(r, c)| Filter::normalized_patch(target, r, c, size))
        .take(count)
        .collect();
    if filters.is_empty() {
        return Err(Error::Degenerate("degenerate target region".into()));
    }
    if filters.len() < count {
        return Err(Error::Degenerate(format!(
            "degenerate target region: only {} of {count} filters have nonzero variance",
            filters.len()
        )));
    }
    FilterBank::new(filters, seed)
}

/// Window with each band padded by edge replication so that every filter
/// tap has a valid source pixel.
struct PaddedWindow {
    height: usize,
    width: usize,
    bands: usize,
    pad: usize,
    data: Vec<f64>,
}

impl PaddedWindow {
    fn new(window: &HyperCube, size: usize) -> Self {
        let pad = size / 2;
        let height = window.height() + size - 1;
        let width = window.width() + size - 1;
        let mut data = Vec::with_capacity(height * width * window.bands());
        for b in 0..window.bands() {
            let plane = window.plane(b);
            for r in 0..height {
                let src_r = clamp_index(r as i64 - pad as i64, window.height());
                let row = &plane[src_r * window.width()..(src_r + 1) * window.width()];
                data.extend(
                    (0..width).map(|c| row[clamp_index(c as i64 - pad as i64, window.width())]),
                );
            }
        }
        PaddedWindow {
            height,
            width,
            bands: window.bands(),
            pad,
            data,
        }
    }

    fn correlate(&self, filter: &Filter, out_h: usize, out_w: usize) -> Plane {
        let size = filter.size;
        debug_assert_eq!(self.pad, size / 2);
        let mut out = vec![0.0; out_h * out_w];
        for b in 0..self.bands {
            let band = &self.data[b * self.height * self.width..(b + 1) * self.height * self.width];
            for i in 0..size {
                for j in 0..size {
                    let wt = if CROSS_CORRELATION {
                        filter.get(i, j, b)
                    } else {
                        filter.get(size - 1 - i, size - 1 - j, b)
                    };
                    if wt == 0.0 {
                        continue;
                    }
                    for r in 0..out_h {
                        let src = &band[(r + i) * self.width + j..(r + i) * self.width + j + out_w];
                        let dst = &mut out[r * out_w..(r + 1) * out_w];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wt * s;
                        }
                    }
                }
            }
        }
        Plane::new(out_h, out_w, out).expect("output sized by construction")
    }
}

fn check_bands(window: &HyperCube, bands: usize) -> Result<()> {
    if window.bands() != bands {
        return Err(Error::Shape(format!(
            "window has {} bands, filter has {bands}",
            window.bands()
        )));
    }
    Ok(())
}

/// Same-size response of one filter over all bands:
/// `out(r, c) = Σ_{i,j,b} window(r + i - w/2, c + j - w/2, b) · filter(i, j, b)`
/// with edge-replicated borders.
pub fn convolve3d(window: &HyperCube, filter: &Filter) -> Result<Plane> {
    check_bands(window, filter.bands)?;
    let padded = PaddedWindow::new(window, filter.size);
    Ok(padded.correlate(filter, window.height(), window.width()))
}

/// Multichannel representation of an image window: one feature map per
/// filter, in bank order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    height: usize,
    width: usize,
    channels: Vec<Plane>,
}

impl FeatureStack {
    pub fn new(channels: Vec<Plane>) -> Result<Self> {
        let (height, width) = channels
            .first()
            .map(Plane::dims)
            .ok_or_else(|| Error::Shape("feature stack needs at least one channel".into()))?;
        if channels.iter().any(|c| c.dims() != (height, width)) {
            return Err(Error::Shape("feature channels differ in size".into()));
        }
        Ok(FeatureStack {
            height,
            width,
            channels,
        })
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

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Plane] {
        &self.channels
    }

    /// Total element count `h · w · channels`.
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sum_squares(&self) -> f64 {
        self.channels.iter().map(Plane::sum_squares).sum()
    }

    /// Multiplies every channel by `window`.
    pub fn windowed(&self, window: &Plane) -> Result<FeatureStack> {
        let channels = self
            .channels
            .iter()
            .map(|c| c.hadamard(window))
            .collect::<Result<Vec<_>>>()?;
        FeatureStack::new(channels)
    }

    pub fn scaled(&self, factor: f64) -> FeatureStack {
        self.map_values(|v| v * factor)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> FeatureStack {
        let channels = self
            .channels
            .iter()
            .map(|c| {
                Plane::new(c.height(), c.width(), c.as_slice().iter().map(|&v| f(v)).collect())
                    .expect("size preserved")
            })
            .collect();
        FeatureStack {
            height: self.height,
            width: self.width,
            channels,
        }
    }

    /// `(1 - rate) · self + rate · other`, elementwise.
    pub fn lerp(&self, other: &FeatureStack, rate: f64) -> Result<FeatureStack> {
        if self.dims() != other.dims() || self.num_channels() != other.num_channels() {
            return Err(Error::Shape(format!(
                "cannot blend {:?}x{} features with {:?}x{}",
                self.dims(),
                self.num_channels(),
                other.dims(),
                other.num_channels()
            )));
        }
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| {
                let data = a
                    .as_slice()
                    .iter()
                    .zip(b.as_slice())
                    .map(|(x, y)| (1.0 - rate) * x + rate * y)
                    .collect();
                Plane::new(a.height(), a.width(), data).expect("size preserved")
            })
            .collect();
        Ok(FeatureStack {
            height: self.height,
            width: self.width,
            channels,
        })
    }
}

/// Correlates `window` with every filter in `bank` and stacks the maps.
pub fn extract_features(window: &HyperCube, bank: &FilterBank) -> Result<FeatureStack> {
    check_bands(window, bank.bands)?;
    let padded = PaddedWindow::new(window, bank.size);
    let channels = bank
        .filters
        .iter()
        .map(|f| padded.correlate(f, window.height(), window.width()))
        .collect();
    FeatureStack::new(channels)
}
