//! Deterministic synthetic hyperspectral sequences with ground truth.
//!
//! A scene is a flat background spectrum plus a list of hard-edged objects,
//! each with its own spectrum, shape, size and motion path. Objects are
//! painted in list order, so later objects occlude earlier ones. The object
//! at index `target` (default 0) is the tracked one: its box is written as
//! ground truth.
//!
//! Scenes are described in TOML:
//!
//! ```toml
//! width = 64
//! height = 64
//! bands = 8
//! frames = 100
//! noise_sigma = 0.01
//! seed = 7
//! background = [0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]
//!
//! [[objects]]
//! spectrum = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2]
//! shape = "disk"
//! size = [12, 12]
//! path = { kind = "linear", start = [20.0, 32.0], velocity = [2.0, 0.0], bounce = true }
//! ```
//!
//! `path` is either `linear` (center `start + t·velocity`, optionally
//! reflected off the frame edges so the object stays inside) or `waypoints`
//! (`centers = [[x, y], ...]`, one per frame, the last one held).
//! Optional top-level keys: `dtype` (`f32le` by default) and `wavelengths`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercube::{write_boxes, write_sequence, BoundingBox, Dtype, HyperCube, SequenceHeader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rect,
    /// Ellipse inscribed in the object's box.
    Disk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MotionPath {
    Linear {
        start: [f64; 2],
        #[serde(default)]
        velocity: [f64; 2],
        #[serde(default)]
        bounce: bool,
    },
    Waypoints {
        centers: Vec<[f64; 2]>,
    },
}

/// Reflects `v` into `[lo, hi]` (triangle wave).
fn fold(v: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let t = (v - lo).rem_euclid(2.0 * span);
    lo + if t > span { 2.0 * span - t } else { t }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub spectrum: Vec<f64>,
    pub shape: Shape,
    /// `[w, h]` in pixels.
    pub size: [u32; 2],
    pub path: MotionPath,
}

impl SceneObject {
    /// Center `(x, y)` at frame `t`.
    pub fn center(&self, t: usize, width: usize, height: usize) -> (f64, f64) {
        match &self.path {
            MotionPath::Linear {
                start,
                velocity,
                bounce,
            } => {
                let x = start[0] + velocity[0] * t as f64;
                let y = start[1] + velocity[1] * t as f64;
                if *bounce {
                    let (hw, hh) = (self.size[0] as f64 / 2.0, self.size[1] as f64 / 2.0);
                    (
                        fold(x, hw, width as f64 - hw),
                        fold(y, hh, height as f64 - hh),
                    )
                } else {
                    (x, y)
                }
            }
            MotionPath::Waypoints { centers } => {
                let c = centers[t.min(centers.len() - 1)];
                (c[0], c[1])
            }
        }
    }

    /// Box painted at frame `t`.
    pub fn bbox(&self, t: usize, width: usize, height: usize) -> BoundingBox {
        let (cx, cy) = self.center(t, width, height);
        let [w, h] = self.size;
        BoundingBox {
            x: (cx - w as f64 / 2.0).round() as i32,
            y: (cy - h as f64 / 2.0).round() as i32,
            w,
            h,
        }
    }

    fn covers(&self, bbox: &BoundingBox, r: i64, c: i64) -> bool {
        let inside = c >= bbox.x as i64
            && c < bbox.x as i64 + bbox.w as i64
            && r >= bbox.y as i64
            && r < bbox.y as i64 + bbox.h as i64;
        match self.shape {
            Shape::Rect => inside,
            Shape::Disk => {
                let (cx, cy) = bbox.center();
                let (rx, ry) = (bbox.w as f64 / 2.0, bbox.h as f64 / 2.0);
                let u = (c as f64 + 0.5 - cx) / rx;
                let v = (r as f64 + 0.5 - cy) / ry;
                inside && u * u + v * v <= 1.0
            }
        }
    }
}

fn default_dtype() -> String {
    "f32le".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub frames: usize,
    pub background: Vec<f64>,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub target: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dtype")]
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths: Option<Vec<f64>>,
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("scene spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn dtype(&self) -> Result<Dtype> {
        self.dtype.parse().map_err(Error::Config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.bands == 0 || self.frames == 0 {
            return Err(Error::Config("scene dimensions must all be >= 1".into()));
        }
        self.dtype()?;
        let check_spectrum = |what: &str, s: &[f64]| -> Result<()> {
            if s.len() != self.bands {
                return Err(Error::Config(format!(
                    "{what} has {} values for {} bands",
                    s.len(),
                    self.bands
                )));
            }
            if s.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config(format!("{what} has values outside [0, 1]")));
            }
            Ok(())
        };
        check_spectrum("background", &self.background)?;
        if !self.objects.is_empty() && self.target >= self.objects.len() {
            return Err(Error::Config(format!(
                "target index {} but only {} objects",
                self.target,
                self.objects.len()
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            check_spectrum(&format!("object {i} spectrum"), &obj.spectrum)?;
            if obj.size[0] == 0 || obj.size[1] == 0 {
                return Err(Error::Config(format!("object {i} has zero size")));
            }
            if let MotionPath::Waypoints { centers } = &obj.path {
                if centers.is_empty() {
                    return Err(Error::Config(format!("object {i} has no waypoints")));
                }
            }
            for t in 0..self.frames {
                let (x, y) = obj.center(t, self.width, self.height);
                if !(x >= 0.0 && x < self.width as f64 && y >= 0.0 && y < self.height as f64) {
                    return Err(Error::Config(format!(
                        "object {i} path leaves the frame at frame {t}: center ({x}, {y})"
                    )));
                }
            }
        }
        if let Some(wl) = &self.wavelengths {
            if wl.len() != self.bands || wl.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Config(
                    "wavelengths must be strictly increasing, one per band".into(),
                ));
            }
        }
        Ok(())
    }

    /// Ground-truth box of the target object at frame `t`.
    pub fn truth(&self, t: usize) -> Option<BoundingBox> {
        self.objects
            .get(self.target)
            .map(|o| o.bbox(t, self.width, self.height))
    }
}

/// Renders frame `t`. Values are rounded to f32 precision so they survive
/// an `f32le` round trip unchanged.
pub fn render_frame(spec: &SceneSpec, t: usize) -> Result<HyperCube> {
    let (h, w, d) = (spec.height, spec.width, spec.bands);
    let plane = h * w;
    let mut data = Vec::with_capacity(plane * d);
    for &v in &spec.background {
        data.extend(std::iter::repeat_n(v, plane));
    }
    for obj in &spec.objects {
        let bbox = obj.bbox(t, w, h);
        let r0 = (bbox.y as i64).max(0);
        let r1 = (bbox.y as i64 + bbox.h as i64).min(h as i64);
        let c0 = (bbox.x as i64).max(0);
        let c1 = (bbox.x as i64 + bbox.w as i64).min(w as i64);
        for r in r0..r1 {
            for c in c0..c1 {
                if obj.covers(&bbox, r, c) {
                    let idx = r as usize * w + c as usize;
                    for (b, &v) in obj.spectrum.iter().enumerate() {
                        data[b * plane + idx] = v;
                    }
                }
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::Config(format!("noise: {e}")))?;
        // independent substream per frame
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(t as u64);
        for v in data.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    for v in data.iter_mut() {
        *v = v.clamp(0.0, 1.0) as f32 as f64;
    }
    HyperCube::new(h, w, d, data)
}

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub header: SequenceHeader,
    pub frames: Vec<HyperCube>,
    /// Target box per frame; empty for a scene without objects.
    pub truth: Vec<BoundingBox>,
}

pub fn render(spec: &SceneSpec) -> Result<RenderedScene> {
    spec.validate()?;
    let frames = (0..spec.frames)
        .map(|t| render_frame(spec, t))
        .collect::<Result<Vec<_>>>()?;
    let truth = (0..spec.frames).filter_map(|t| spec.truth(t)).collect();
    Ok(RenderedScene {
        header: SequenceHeader {
            width: spec.width,
            height: spec.height,
            bands: spec.bands,
            frames: spec.frames,
            dtype: spec.dtype()?,
            data: String::new(),
            wavelengths: spec.wavelengths.clone(),
        },
        frames,
        truth,
    })
}

/// Output paths of [`RenderedScene::save`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SavedScene {
    pub header: PathBuf,
    pub payload: PathBuf,
    pub truth: Option<PathBuf>,
}

impl RenderedScene {
    /// Writes `<prefix>.hdr`, `<prefix>.raw` and, when the scene has a
    /// target, `<prefix>.gt.csv`.
    pub fn save(&self, prefix: &Path) -> Result<SavedScene> {
        let name = prefix
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Config(format!("bad output prefix {}", prefix.display())))?;
        let dir = prefix.parent().unwrap_or_else(|| Path::new(""));
        let header_path = dir.join(format!("{name}.hdr"));
        let payload = format!("{name}.raw");
        let header = SequenceHeader {
            data: payload.clone(),
            ..self.header.clone()
        };
        write_sequence(&header_path, &header, &self.frames)?;
        let truth = if self.truth.is_empty() {
            None
        } else {
            let path = dir.join(format!("{name}.gt.csv"));
            write_boxes(&path, &self.truth)?;
            Some(path)
        };
        Ok(SavedScene {
            header: header_path,
            payload: dir.join(payload),
            truth,
        })
    }
}

/// Two spectra that look the same to a panchromatic or single-band sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MetamerPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Band on which `a` and `b` agree exactly (`None` for two bands, where
    /// equal means and an equal band would force identical spectra).
    pub gray_band: Option<usize>,
}

/// Builds `a = m + p`, `b = m - p` with `p` zero-sum, zero at the gray band
/// (the middle band) and `max|p| = s`, where `s = max(0.15, 0.6·min(m, 1-m))`.
/// The spectra therefore share their mean and gray-band value and differ by
/// `2s ≥ 0.3` in max norm.
pub fn make_metamer_pair(bands: usize, band_mean: f64, seed: u64) -> Result<MetamerPair> {
    if bands < 2 {
        return Err(Error::Config("metamers need at least two bands".into()));
    }
    if !(band_mean > 0.0 && band_mean < 1.0) {
        return Err(Error::Config(format!(
            "band mean must lie in (0, 1), got {band_mean}"
        )));
    }
    let room = band_mean.min(1.0 - band_mean);
    let amplitude = (0.6 * room).max(0.15);
    if amplitude > room {
        return Err(Error::Config(format!(
            "band mean {band_mean} is too close to 0 or 1 for a 0.3 spectral separation"
        )));
    }

    let (gray_band, pattern) = if bands == 2 {
        (None, vec![-1.0, 1.0])
    } else {
        let gray = bands / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let free: Vec<usize> = (0..bands).filter(|&b| b != gray).collect();
        let pattern = loop {
            let mut p = vec![0.0; bands];
            for &b in &free {
                p[b] = rng.gen_range(-1.0..1.0);
            }
            let mean = free.iter().map(|&b| p[b]).sum::<f64>() / free.len() as f64;
            for &b in &free {
                p[b] -= mean;
            }
            let peak = p.iter().map(|v: &f64| v.abs()).fold(0.0, f64::max);
            if peak > 1e-6 {
                break p.iter().map(|v| v / peak).collect::<Vec<_>>();
            }
        };
        (Some(gray), pattern)
    };

    let a = pattern.iter().map(|p| band_mean + amplitude * p).collect();
    let b = pattern.iter().map(|p| band_mean - amplitude * p).collect();
    Ok(MetamerPair { a, b, gray_band })
}

/// 100-frame 64×64×8 scene: a 12 px disk moving 2 px/frame to the right,
/// bouncing off the frame edges, over a dim background.
pub fn moving_disk_scene(noise_sigma: f64, seed: u64) -> SceneSpec {
    SceneSpec {
        width: 64,
        height: 64,
        bands: 8,
        frames: 100,
        background: vec![0.1, 0.15, 0.2, 0.2, 0.25, 0.2, 0.15, 0.1],
        objects: vec![SceneObject {
            spectrum: vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.45, 0.4, 0.35],
            shape: Shape::Disk,
            size: [12, 12],
            path: MotionPath::Linear {
                start: [14.0, 20.0],
                velocity: [2.0, 0.0],
                bounce: true,
            },
        }],
        target: 0,
        noise_sigma,
        seed,
        dtype: default_dtype(),
        wavelengths: None,
    }
}

/// Metamer crossing: a static distractor `b` and a target `a` that starts
/// 12 px to its left, passes over it at frame 8 and keeps moving right at
/// 1.5 px/frame for 60 frames. The two spectra agree at the pair's gray
/// band, so in that band alone the blobs are indistinguishable.
pub fn metamer_crossing_scene(bands: usize, noise_sigma: f64, seed: u64) -> Result<(SceneSpec, MetamerPair)> {
    if bands < 3 {
        return Err(Error::Config("the crossing scene needs at least three bands".into()));
    }
    let pair = make_metamer_pair(bands, 0.5, seed)?;
    let disk = |spectrum: &[f64], start: [f64; 2], velocity: [f64; 2]| SceneObject {
        spectrum: spectrum.to_vec(),
        shape: Shape::Disk,
        size: [12, 12],
        path: MotionPath::Linear {
            start,
            velocity,
            bounce: false,
        },
    };
    let spec = SceneSpec {
        width: 128,
        height: 64,
        bands: pair.a.len(),
        frames: 60,
        background: vec![0.1; pair.a.len()],
        objects: vec![
            disk(&pair.b, [26.0, 32.0], [0.0, 0.0]),
            disk(&pair.a, [14.0, 32.0], [1.5, 0.0]),
        ],
        target: 1,
        noise_sigma,
        seed,
        dtype: default_dtype(),
        wavelengths: None,
    };
    Ok((spec, pair))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn base_spec() -> SceneSpec {
        SceneSpec {
            width: 32,
            height: 24,
            bands: 3,
            frames: 5,
            background: vec![0.1, 0.2, 0.3],
            objects: vec![],
            target: 0,
            noise_sigma: 0.0,
            seed: 1,
            dtype: "f32le".into(),
            wavelengths: None,
        }
    }

    fn disk(spectrum: Vec<f64>, start: [f64; 2], velocity: [f64; 2]) -> SceneObject {
        SceneObject {
            spectrum,
            shape: Shape::Disk,
            size: [8, 8],
            path: MotionPath::Linear {
                start,
                velocity,
                bounce: false,
            },
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let scene = render(&base_spec()).unwrap();
        assert!(scene.truth.is_empty());
        for f in &scene.frames {
            for b in 0..3 {
                let expected = [0.1f32, 0.2, 0.3][b] as f64;
                assert!(f.plane(b).iter().all(|&v| v == expected));
            }
        }
    }

    #[test]
    fn static_object_is_static() {
        let mut spec = base_spec();
        spec.objects.push(disk(vec![0.9, 0.5, 0.1], [10.0, 10.0], [0.0, 0.0]));
        let scene = render(&spec).unwrap();
        assert_eq!(scene.frames[0], scene.frames[4]);
        assert!(scene.truth.iter().all(|b| *b == scene.truth[0]));
    }

    #[test]
    fn truth_box_contains_the_object() {
        let mut spec = base_spec();
        spec.objects.push(disk(vec![0.9, 0.5, 0.1], [9.0, 8.0], [3.0, 2.0]));
        let scene = render(&spec).unwrap();
        for (t, f) in scene.frames.iter().enumerate() {
            let b = scene.truth[t];
            let mut painted = 0;
            for r in 0..24 {
                for c in 0..32 {
                    if f.get(r, c, 0) == 0.9f32 as f64 {
                        painted += 1;
                        assert!((b.x..b.x + b.w as i32).contains(&(c as i32)));
                        assert!((b.y..b.y + b.h as i32).contains(&(r as i32)));
                    }
                }
            }
            assert!(painted > 40);
            assert_eq!(b.center(), (9.0 + 3.0 * t as f64, 8.0 + 2.0 * t as f64));
        }
    }

    #[test]
    fn later_objects_occlude_earlier_ones() {
        let mut spec = base_spec();
        let mut a = disk(vec![0.9, 0.9, 0.9], [12.0, 12.0], [0.0, 0.0]);
        a.shape = Shape::Rect;
        let mut b = disk(vec![0.4, 0.4, 0.4], [12.0, 12.0], [0.0, 0.0]);
        b.shape = Shape::Rect;
        spec.objects = vec![a, b];
        let f = render_frame(&spec, 0).unwrap();
        assert_eq!(f.get(12, 12, 0), 0.4f32 as f64);
        spec.target = 1;
        assert_eq!(spec.truth(0), Some(spec.objects[1].bbox(0, 32, 24)));
        spec.target = 2;
        assert!(render(&spec).is_err());
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut spec = base_spec();
        spec.noise_sigma = 0.05;
        spec.objects.push(disk(vec![0.9, 0.5, 0.1], [10.0, 10.0], [1.0, 0.0]));
        let a = render(&spec).unwrap();
        let b = render(&spec).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_ne!(a.frames[0], render_frame(&SceneSpec { seed: 2, ..spec }, 0).unwrap());
        // noise differs between frames
        assert_ne!(a.frames[1].plane(1), a.frames[2].plane(1));
    }

    #[test]
    fn bounce_keeps_objects_inside() {
        let mut spec = base_spec();
        spec.frames = 60;
        let mut obj = disk(vec![0.9, 0.5, 0.1], [10.0, 10.0], [2.0, 1.5]);
        obj.path = MotionPath::Linear {
            start: [10.0, 10.0],
            velocity: [2.0, 1.5],
            bounce: true,
        };
        spec.objects.push(obj);
        let scene = render(&spec).unwrap();
        for b in &scene.truth {
            assert!(b.x >= 0 && b.x + b.w as i32 <= 32);
            assert!(b.y >= 0 && b.y + b.h as i32 <= 24);
        }
        assert_eq!(fold(5.0, 0.0, 4.0), 3.0);
        assert_eq!(fold(-1.0, 0.0, 4.0), 1.0);
        assert_eq!(fold(9.0, 0.0, 4.0), 1.0);
    }

    #[test]
    fn rejects_paths_leaving_the_frame() {
        let mut spec = base_spec();
        spec.objects.push(disk(vec![0.9, 0.5, 0.1], [28.0, 10.0], [2.0, 0.0]));
        assert!(matches!(render(&spec), Err(Error::Config(_))));
        let mut spec = base_spec();
        spec.background = vec![0.1, 1.2, 0.3];
        assert!(render(&spec).is_err());
    }

    #[test]
    fn waypoints_hold_the_last_center() {
        let obj = SceneObject {
            spectrum: vec![0.5; 3],
            shape: Shape::Rect,
            size: [4, 4],
            path: MotionPath::Waypoints {
                centers: vec![[5.0, 5.0], [6.0, 7.0]],
            },
        };
        assert_eq!(obj.center(0, 32, 24), (5.0, 5.0));
        assert_eq!(obj.center(9, 32, 24), (6.0, 7.0));
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            width = 32
            height = 24
            bands = 3
            frames = 5
            noise_sigma = 0.01
            seed = 3
            background = [0.1, 0.2, 0.3]

            [[objects]]
            spectrum = [0.9, 0.5, 0.1]
            shape = "disk"
            size = [8, 8]
            path = { kind = "linear", start = [10.0, 10.0], velocity = [1.0, 0.0] }

            [[objects]]
            spectrum = [0.2, 0.5, 0.8]
            shape = "rect"
            size = [6, 4]
            path = { kind = "waypoints", centers = [[20.0, 12.0]] }
        "#;
        let spec = SceneSpec::from_toml(text).unwrap();
        assert_eq!(spec.objects.len(), 2);
        assert_eq!(spec.dtype().unwrap(), Dtype::F32Le);
        assert_eq!(SceneSpec::from_toml(&spec.to_toml()).unwrap(), spec);
        assert!(SceneSpec::from_toml("width = 3\nheight = 3\nbands = 1\nframes = 1\nbackground = [0.0]\ncolour = 1\n").is_err());
    }

    #[test]
    fn presets_are_valid() {
        let disk = render(&moving_disk_scene(0.01, 1)).unwrap();
        assert_eq!(disk.frames.len(), 100);
        assert_eq!(disk.truth[1].x - disk.truth[0].x, 2);
        let (spec, pair) = metamer_crossing_scene(8, 0.01, 1).unwrap();
        let scene = render(&spec).unwrap();
        assert_eq!(scene.truth[8], spec.objects[0].bbox(8, 128, 64));
        let g = pair.gray_band.unwrap();
        assert_eq!(spec.objects[0].spectrum[g], spec.objects[1].spectrum[g]);
        assert!(metamer_crossing_scene(2, 0.0, 0).is_err());
    }

    #[test]
    fn metamer_pairs() {
        let pair = make_metamer_pair(2, 0.5, 0).unwrap();
        assert!((pair.a[0] - 0.2).abs() < 1e-12 && (pair.a[1] - 0.8).abs() < 1e-12);
        assert!((pair.b[0] - 0.8).abs() < 1e-12 && (pair.b[1] - 0.2).abs() < 1e-12);
        assert_eq!(pair.gray_band, None);

        for bands in [3, 8, 14] {
            for (seed, m) in [(0, 0.5), (1, 0.3), (2, 0.72)] {
                let p = make_metamer_pair(bands, m, seed).unwrap();
                assert!((mean(&p.a) - mean(&p.b)).abs() < 1e-12);
                let g = p.gray_band.unwrap();
                assert_eq!(p.a[g], p.b[g]);
                let sep = p.a.iter().zip(&p.b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(sep >= 0.3 - 1e-12);
                assert!(p.a.iter().chain(&p.b).all(|v| (0.0..=1.0).contains(v)));
            }
        }
        assert!(make_metamer_pair(1, 0.5, 0).is_err());
        assert!(make_metamer_pair(4, 0.1, 0).is_err());
        assert!(make_metamer_pair(4, 1.0, 0).is_err());
    }

    #[test]
    fn metamers_vanish_in_the_mean_band() {
        let pair = make_metamer_pair(4, 0.5, 9).unwrap();
        let mut spec = base_spec();
        spec.bands = 4;
        spec.background = vec![0.1; 4];
        spec.noise_sigma = 0.002;
        spec.objects.push(disk(pair.a.clone(), [8.0, 12.0], [0.0, 0.0]));
        spec.objects.push(disk(pair.b.clone(), [24.0, 12.0], [0.0, 0.0]));
        let f = render_frame(&spec, 0).unwrap();
        let mean_image = |r: usize, c: usize| (0..4).map(|b| f.get(r, c, b)).sum::<f64>() / 4.0;
        let mut band_diff: f64 = 0.0;
        let mut mean_diff: f64 = 0.0;
        for r in 9..16 {
            for c in 0..8 {
                let (ca, cb) = (5 + c, 21 + c);
                mean_diff = mean_diff.max((mean_image(r, ca) - mean_image(r, cb)).abs());
                for b in 0..4 {
                    band_diff = band_diff.max((f.get(r, ca, b) - f.get(r, cb, b)).abs());
                }
            }
        }
        assert!(band_diff > 0.25);
        // averaging four noisy bands: well under 5 sigma of the mean noise
        assert!(mean_diff < 0.01, "{mean_diff}");
    }

    #[test]
    fn saved_files_load_back_exactly() {
        let mut spec = base_spec();
        spec.noise_sigma = 0.02;
        spec.objects.push(disk(vec![0.9, 0.5, 0.1], [10.0, 10.0], [1.0, 1.0]));
        let scene = render(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let saved = scene.save(&dir.path().join("scene")).unwrap();
        let loaded: Vec<HyperCube> = crate::hypercube::load_sequence(&saved.header)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(loaded, scene.frames);
        let truth = crate::hypercube::read_boxes(saved.truth.as_ref().unwrap()).unwrap();
        assert_eq!(truth, scene.truth);
    }
}
