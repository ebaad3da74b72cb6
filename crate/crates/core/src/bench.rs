//! Center-error precision: the fraction of frames whose predicted box
//! center lies within a pixel threshold of the ground-truth center.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hypercube::BoundingBox;

/// Threshold reported as the headline number.
pub const HEADLINE_THRESHOLD: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionCurve {
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub n_frames: usize,
}

impl PrecisionCurve {
    /// Precision at a threshold on the grid.
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| t == threshold)
            .map(|i| self.precision[i])
    }

    /// `threshold,precision` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "threshold,precision")?;
        for (t, p) in self.thresholds.iter().zip(&self.precision) {
            writeln!(out, "{t},{p:.6}")?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// `1, 2, ..., max` pixels.
pub fn threshold_grid(max: u32) -> Vec<f64> {
    (1..=max).map(f64::from).collect()
}

pub fn default_thresholds() -> Vec<f64> {
    threshold_grid(50)
}

/// Euclidean distance between box centers.
pub fn center_error(pred: &BoundingBox, truth: &BoundingBox) -> f64 {
    let (px, py) = pred.center();
    let (tx, ty) = truth.center();
    (px - tx).hypot(py - ty)
}

fn check_lengths(preds: &[BoundingBox], truths: &[BoundingBox]) -> Result<()> {
    if preds.is_empty() || truths.is_empty() {
        return Err(Error::InvalidData("precision needs at least one frame".into()));
    }
    if preds.len() != truths.len() {
        return Err(Error::InvalidData(format!(
            "{} predictions for {} ground-truth frames",
            preds.len(),
            truths.len()
        )));
    }
    Ok(())
}

/// Fraction of frames with center error `<= threshold`.
pub fn precision_at(preds: &[BoundingBox], truths: &[BoundingBox], threshold: f64) -> Result<f64> {
    check_lengths(preds, truths)?;
    let hits = preds
        .iter()
        .zip(truths)
        .filter(|(p, t)| center_error(p, t) <= threshold)
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn precision_curve(
    preds: &[BoundingBox],
    truths: &[BoundingBox],
    thresholds: &[f64],
) -> Result<PrecisionCurve> {
    check_lengths(preds, truths)?;
    let mut errors: Vec<f64> = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| center_error(p, t))
        .collect();
    errors.sort_by(f64::total_cmp);
    let n = errors.len();
    let precision = thresholds
        .iter()
        .map(|&t| errors.partition_point(|&e| e <= t) as f64 / n as f64)
        .collect();
    Ok(PrecisionCurve {
        thresholds: thresholds.to_vec(),
        precision,
        n_frames: n,
    })
}

/// Per-threshold arithmetic mean over sequences.
pub fn mean_precision(curves: &[PrecisionCurve]) -> Result<PrecisionCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidData("no curves to average".into()))?;
    if curves.iter().any(|c| c.thresholds != first.thresholds) {
        return Err(Error::InvalidData("curves use different threshold grids".into()));
    }
    let k = curves.len() as f64;
    let precision = (0..first.thresholds.len())
        .map(|i| curves.iter().map(|c| c.precision[i]).sum::<f64>() / k)
        .collect();
    Ok(PrecisionCurve {
        thresholds: first.thresholds.clone(),
        precision,
        n_frames: curves.iter().map(|c| c.n_frames).sum(),
    })
}
