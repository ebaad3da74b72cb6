use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box: top-left corner `(x, y)` and extent `w × h` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: i32,
    pub y: i32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: i32, y: i32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::Config(format!(
                "bounding box extent must be at least 1x1, got {w}x{h}"
            )));
        }
        Ok(BoundingBox { x, y, w, h })
    }

    /// `(x + w/2, y + h/2)`, the point compared by the precision metric.
    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    /// Integer center, flooring for even extents.
    pub fn pixel_center(&self) -> (i64, i64) {
        (
            self.x as i64 + (self.w / 2) as i64,
            self.y as i64 + (self.h / 2) as i64,
        )
    }

    /// Box of size `w × h` whose [`pixel_center`](Self::pixel_center) is `(cx, cy)`.
    pub fn centered_at(cx: i64, cy: i64, w: u32, h: u32) -> Self {
        BoundingBox {
            x: (cx - (w / 2) as i64) as i32,
            y: (cy - (h / 2) as i64) as i32,
            w,
            h,
        }
    }
}

impl std::str::FromStr for BoundingBox {
    type Err = Error;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::Config(format!("expected four integers x,y,w,h, got {s:?}"));
        if parts.len() != 4 {
            return Err(bad());
        }
        let x = parts[0].parse().map_err(|_| bad())?;
        let y = parts[1].parse().map_err(|_| bad())?;
        let w = parts[2].parse().map_err(|_| bad())?;
        let h = parts[3].parse().map_err(|_| bad())?;
        BoundingBox::new(x, y, w, h)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxRecord {
    frame: usize,
    x: i32,
    y: i32,
    w: u32,
    h: u32,
}

/// Reads a `frame,x,y,w,h` CSV. Frame indices must run 0, 1, 2, ...
pub fn read_boxes(path: &Path) -> Result<Vec<BoundingBox>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_boxes(file, path)
}

pub(crate) fn parse_boxes<R: Read>(reader: R, path: &Path) -> Result<Vec<BoundingBox>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut boxes = Vec::new();
    for (i, record) in rdr.deserialize::<BoxRecord>().enumerate() {
        // line 1 is the header
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if record.frame != i {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected frame index {i}, found {}", record.frame),
            });
        }
        boxes.push(
            BoundingBox::new(record.x, record.y, record.w, record.h).map_err(|e| {
                Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: e.to_string(),
                }
            })?,
        );
    }
    Ok(boxes)
}

pub fn write_boxes(path: &Path, boxes: &[BoundingBox]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    emit_boxes(file, boxes).map_err(|e| Error::io(path, e))
}

pub(crate) fn emit_boxes<W: Write>(writer: W, boxes: &[BoundingBox]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (frame, b) in boxes.iter().enumerate() {
        wtr.serialize(BoxRecord {
            frame,
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        })?;
    }
    wtr.flush()
}
