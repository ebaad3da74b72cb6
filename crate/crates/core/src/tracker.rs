//! Frame-to-frame tracking loop.
//!
//! Frame 0 fixes the filter bank and trains the first model on a padded
//! search window around the given box. Each later frame crops the same
//! window size around the previous center, detects the displacement, moves
//! the box (its size never changes), then trains on the re-centered window
//! and blends that into the running model.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::convfeat::{extract_features, sample_filter_bank, FeatureStack, FilterBank};
use crate::dft::LabelParams;
use crate::error::{Error, Result};
use crate::hypercube::{BoundingBox, HyperCube};
use crate::kcf::{self, Detection, KcfParams, TrackerModel};
use crate::plane::Plane;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Spatial filter size `w`.
    pub filter_w: usize,
    pub filter_count: usize,
    /// Search window size relative to the target box.
    pub padding: f64,
    pub seed: u64,
    pub lambda: f64,
    pub sigma: f64,
    pub interp_factor: f64,
    /// Label scale as a fraction of `√(target_w · target_h)`.
    pub label_sigma_factor: f64,
    pub label_beta: f64,
    pub label_b: f64,
    /// Admissible range for `padding`.
    pub search_scale_min: f64,
    pub search_scale_max: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            filter_w: 6,
            filter_count: 10,
            padding: 2.5,
            seed: 0,
            lambda: KcfParams::DEFAULT_LAMBDA,
            sigma: KcfParams::DEFAULT_SIGMA,
            interp_factor: KcfParams::DEFAULT_INTERP,
            label_sigma_factor: 0.1,
            label_beta: 2.0,
            label_b: 1.0,
            search_scale_min: 0.2,
            search_scale_max: 3.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filter_w == 0 || self.filter_count == 0 {
            return Err(Error::Config("filter size and count must be >= 1".into()));
        }
        if !(self.search_scale_min <= 1.0 && 1.0 <= self.search_scale_max) {
            return Err(Error::Config(format!(
                "search scale range [{}, {}] must contain 1",
                self.search_scale_min, self.search_scale_max
            )));
        }
        let lo = self.search_scale_min.max(1.0);
        if !(lo..=self.search_scale_max).contains(&self.padding) {
            return Err(Error::Config(format!(
                "padding {} outside [{lo}, {}]",
                self.padding, self.search_scale_max
            )));
        }
        if !(self.label_sigma_factor > 0.0) {
            return Err(Error::Config("label sigma factor must be > 0".into()));
        }
        self.kcf_params(1, 1).validate()
    }

    /// Correlation filter parameters for a `w × h` target.
    pub fn kcf_params(&self, w: u32, h: u32) -> KcfParams {
        KcfParams {
            lambda: self.lambda,
            sigma: self.sigma,
            interp_factor: self.interp_factor,
            label: LabelParams {
                sigma1: self.label_sigma_factor * ((w as f64) * (h as f64)).sqrt(),
                beta: self.label_beta,
                b: self.label_b,
            },
        }
    }

    /// Search window `(h, w)` for a target box.
    pub fn window_size(&self, bbox: &BoundingBox) -> (u32, u32) {
        let scale = |v: u32| ((v as f64 * self.padding).round() as u32).max(self.filter_w as u32);
        (scale(bbox.h), scale(bbox.w))
    }
}

/// Hann window of length `n`; a single sample is 1.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Separable 2D Hann window.
pub fn cosine_window(h: usize, w: usize) -> Plane {
    let (wr, wc) = (hann(h), hann(w));
    Plane::from_fn(h, w, |r, c| wr[r] * wc[c])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    frame_index: usize,
    bbox: BoundingBox,
    model: TrackerModel,
    bank: FilterBank,
    cosine_window: Plane,
    params: KcfParams,
    frame_dims: (usize, usize, usize),
    last_detection: Option<Detection>,
}

impl TrackState {
    /// Samples the filter bank from `init_box` and trains the first model.
    pub fn init(first_frame: &HyperCube, init_box: BoundingBox, config: &TrackerConfig) -> Result<Self> {
        config.validate()?;
        let (fh, fw) = (first_frame.height() as i64, first_frame.width() as i64);
        let (cx, cy) = init_box.pixel_center();
        if !(0..fw).contains(&cx) || !(0..fh).contains(&cy) {
            return Err(Error::Config(format!(
                "initial box {init_box:?} is centered outside the {fw}x{fh} frame"
            )));
        }
        if (init_box.w as usize) < config.filter_w || (init_box.h as usize) < config.filter_w {
            return Err(Error::Config(format!(
                "initial box {}x{} is smaller than the {}x{} filter",
                init_box.w, init_box.h, config.filter_w, config.filter_w
            )));
        }

        let target = first_frame.crop_window(&init_box);
        let bank = sample_filter_bank(&target, config.filter_w, config.filter_count, config.seed)?;
        let (wh, ww) = config.window_size(&init_box);
        let cosine_window = cosine_window(wh as usize, ww as usize);
        let params = config.kcf_params(init_box.w, init_box.h);

        let mut state = TrackState {
            frame_index: 0,
            bbox: init_box,
            model: kcf::train(&FeatureStack::new(vec![Plane::zeros(1, 1)])?, &params)?,
            bank,
            cosine_window,
            params,
            frame_dims: (first_frame.height(), first_frame.width(), first_frame.bands()),
            last_detection: None,
        };
        let features = state.features_at(first_frame, cx, cy)?;
        state.model = kcf::train(&features, &params)?;
        Ok(state)
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn model(&self) -> &TrackerModel {
        &self.model
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn cosine_window(&self) -> &Plane {
        &self.cosine_window
    }

    pub fn params(&self) -> &KcfParams {
        &self.params
    }

    /// Detection from the most recent [`step`](Self::step).
    pub fn last_detection(&self) -> Option<&Detection> {
        self.last_detection.as_ref()
    }

    /// Windowed features of the search window centered at `(cx, cy)`.
    fn features_at(&self, frame: &HyperCube, cx: i64, cy: i64) -> Result<FeatureStack> {
        let (wh, ww) = self.cosine_window.dims();
        let window = frame.crop_window(&BoundingBox::centered_at(cx, cy, ww as u32, wh as u32));
        extract_features(&window, &self.bank)?.windowed(&self.cosine_window)
    }

    /// Locates the target in `frame` and updates the model.
    pub fn step(&mut self, frame: &HyperCube) -> Result<BoundingBox> {
        let dims = (frame.height(), frame.width(), frame.bands());
        if dims != self.frame_dims {
            return Err(Error::Shape(format!(
                "frame is {dims:?}, sequence started with {:?}",
                self.frame_dims
            )));
        }
        let (cx, cy) = self.bbox.pixel_center();
        let z = self.features_at(frame, cx, cy)?;
        let detection = kcf::detect(&self.model, &z, &self.params)?;
        let (dy, dx) = detection.displacement;
        let nx = (cx + dx).clamp(0, frame.width() as i64 - 1);
        let ny = (cy + dy).clamp(0, frame.height() as i64 - 1);
        debug!(
            "frame {}: displacement ({dy}, {dx}), peak {:.4}",
            self.frame_index + 1,
            detection.peak
        );

        let x = self.features_at(frame, nx, ny)?;
        self.model = kcf::update(&self.model, &x, &self.params)?;
        self.bbox = BoundingBox::centered_at(nx, ny, self.bbox.w, self.bbox.h);
        self.frame_index += 1;
        self.last_detection = Some(detection);
        Ok(self.bbox)
    }
}

/// Tracks through a whole sequence. The first output is `init_box`.
pub fn run<I>(frames: I, init_box: BoundingBox, config: &TrackerConfig) -> Result<Vec<BoundingBox>>
where
    I: IntoIterator<Item = Result<HyperCube>>,
{
    let mut frames = frames.into_iter();
    let first = frames
        .next()
        .ok_or_else(|| Error::InvalidData("empty sequence".into()))??;
    let mut state = TrackState::init(&first, init_box, config)?;
    let mut boxes = vec![init_box];
    for frame in frames {
        boxes.push(state.step(&frame?)?);
    }
    Ok(boxes)
}
