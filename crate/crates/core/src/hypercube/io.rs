//! Raw sequence files: a `key = value` text header next to a single
//! band-sequential little-endian payload.
//!
//! ```text
//! width = 512
//! height = 272
//! bands = 14
//! frames = 182
//! dtype = u16le
//! data = apple.raw
//! wavelengths = 470, 481, 492
//! ```
//!
//! The payload holds the frames back to back; each frame holds its bands
//! back to back and each band is row-major.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::HyperCube;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8,
    U16Le,
    F32Le,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16Le => 2,
            Dtype::F32Le => 4,
        }
    }

    fn decode(self, bytes: &[u8], out: &mut Vec<f64>) {
        match self {
            Dtype::U8 => out.extend(bytes.iter().map(|&b| b as f64 / u8::MAX as f64)),
            Dtype::U16Le => out.extend(
                bytes
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64 / u16::MAX as f64),
            ),
            Dtype::F32Le => out.extend(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64),
            ),
        }
    }

    fn encode(self, values: &[f64], out: &mut Vec<u8>) {
        match self {
            Dtype::U8 => out.extend(
                values
                    .iter()
                    .map(|v| (v * u8::MAX as f64).round() as u8),
            ),
            Dtype::U16Le => {
                for v in values {
                    out.extend_from_slice(&((v * u16::MAX as f64).round() as u16).to_le_bytes());
                }
            }
            Dtype::F32Le => {
                for v in values {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::U8 => "u8",
            Dtype::U16Le => "u16le",
            Dtype::F32Le => "f32le",
        })
    }
}

impl FromStr for Dtype {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "u8" => Ok(Dtype::U8),
            "u16le" => Ok(Dtype::U16Le),
            "f32le" => Ok(Dtype::F32Le),
            other => Err(format!("unknown dtype {other:?} (expected u8, u16le or f32le)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub frames: usize,
    pub dtype: Dtype,
    /// Payload file name, relative to the header's directory.
    pub data: String,
    pub wavelengths: Option<Vec<f64>>,
}

impl SequenceHeader {
    pub fn frame_bytes(&self) -> u64 {
        (self.width * self.height * self.bands * self.dtype.size()) as u64
    }

    pub fn payload_bytes(&self) -> u64 {
        self.frame_bytes() * self.frames as u64
    }

    /// Parses header text. `path` is only used in error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };

        let mut width = None;
        let mut height = None;
        let mut bands = None;
        let mut frames = None;
        let mut dtype = None;
        let mut data = None;
        let mut wavelengths = None;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let count = || -> Result<usize> {
                value
                    .parse::<usize>()
                    .map_err(|_| err(line_no, format!("{key}: expected a count, got {value:?}")))
            };
            let slot_taken = match key {
                "width" => width.replace(count()?).is_some(),
                "height" => height.replace(count()?).is_some(),
                "bands" => bands.replace(count()?).is_some(),
                "frames" => frames.replace(count()?).is_some(),
                "dtype" => dtype
                    .replace(value.parse::<Dtype>().map_err(|m| err(line_no, m))?)
                    .is_some(),
                "data" => {
                    if value.is_empty() {
                        return Err(err(line_no, "data: empty file name".into()));
                    }
                    data.replace(value.to_string()).is_some()
                }
                "wavelengths" => {
                    let list = value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| err(line_no, format!("wavelengths: bad list {value:?}")))?;
                    if list.windows(2).any(|w| !(w[1] > w[0])) {
                        return Err(err(line_no, "wavelengths must be strictly increasing".into()));
                    }
                    wavelengths.replace((line_no, list)).is_some()
                }
                other => return Err(err(line_no, format!("unknown key {other:?}"))),
            };
            if slot_taken {
                return Err(err(line_no, format!("duplicate key {key:?}")));
            }
        }

        let end = text.lines().count().max(1);
        let missing = |k: &str| err(end, format!("missing required key {k:?}"));
        let width = width.ok_or_else(|| missing("width"))?;
        let height = height.ok_or_else(|| missing("height"))?;
        let bands = bands.ok_or_else(|| missing("bands"))?;
        let frames = frames.ok_or_else(|| missing("frames"))?;
        let dtype = dtype.ok_or_else(|| missing("dtype"))?;
        let data = data.ok_or_else(|| missing("data"))?;

        if width == 0 || height == 0 || bands == 0 || frames == 0 {
            return Err(err(end, "width, height, bands and frames must all be >= 1".into()));
        }
        let wavelengths = match wavelengths {
            Some((line, list)) if list.len() != bands => {
                return Err(err(
                    line,
                    format!("{} wavelengths for {bands} bands", list.len()),
                ))
            }
            Some((_, list)) => Some(list),
            None => None,
        };

        Ok(SequenceHeader {
            width,
            height,
            bands,
            frames,
            dtype,
            data,
            wavelengths,
        })
    }
}

impl fmt::Display for SequenceHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "width = {}", self.width)?;
        writeln!(f, "height = {}", self.height)?;
        writeln!(f, "bands = {}", self.bands)?;
        writeln!(f, "frames = {}", self.frames)?;
        writeln!(f, "dtype = {}", self.dtype)?;
        writeln!(f, "data = {}", self.data)?;
        if let Some(wl) = &self.wavelengths {
            let list: Vec<String> = wl.iter().map(|v| v.to_string()).collect();
            writeln!(f, "wavelengths = {}", list.join(", "))?;
        }
        Ok(())
    }
}

/// Lazy, single-consumer frame source over a sequence on disk.
#[derive(Debug)]
pub struct SequenceReader {
    header: SequenceHeader,
    data_path: PathBuf,
    reader: BufReader<File>,
    next: usize,
    buf: Vec<u8>,
}

/// Opens a sequence by its header path and checks the payload size.
pub fn load_sequence(header_path: &Path) -> Result<SequenceReader> {
    SequenceReader::open(header_path)
}

impl SequenceReader {
    pub fn open(header_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
        let header = SequenceHeader::parse(&text, header_path)?;
        let data_path = header_path
            .parent()
            .unwrap_or_else(|| Path::new(""))
            .join(&header.data);
        let file = File::open(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let actual = file
            .metadata()
            .map_err(|e| Error::io(&data_path, e))?
            .len();
        let expected = header.payload_bytes();
        if actual != expected {
            return Err(Error::Truncated {
                path: data_path,
                expected,
                actual,
            });
        }
        Ok(SequenceReader {
            buf: vec![0; header.frame_bytes() as usize],
            header,
            data_path,
            reader: BufReader::new(file),
            next: 0,
        })
    }

    pub fn header(&self) -> &SequenceHeader {
        &self.header
    }

    pub fn frame_count(&self) -> usize {
        self.header.frames
    }

    /// Random access to frame `index`; the iterator continues after it.
    pub fn read_frame(&mut self, index: usize) -> Result<HyperCube> {
        if index >= self.header.frames {
            return Err(Error::InvalidData(format!(
                "frame {index} requested from a {}-frame sequence",
                self.header.frames
            )));
        }
        if index != self.next {
            self.reader
                .seek(SeekFrom::Start(index as u64 * self.header.frame_bytes()))
                .map_err(|e| Error::io(&self.data_path, e))?;
        }
        self.reader
            .read_exact(&mut self.buf)
            .map_err(|e| Error::io(&self.data_path, e))?;
        self.next = index + 1;

        let h = &self.header;
        let mut values = Vec::with_capacity(h.width * h.height * h.bands);
        h.dtype.decode(&self.buf, &mut values);
        HyperCube::new(h.height, h.width, h.bands, values).map_err(|e| {
            Error::InvalidData(format!("{} frame {index}: {e}", self.data_path.display()))
        })
    }
}

impl Iterator for SequenceReader {
    type Item = Result<HyperCube>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.header.frames {
            return None;
        }
        Some(self.read_frame(self.next))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.header.frames - self.next;
        (left, Some(left))
    }
}

/// Writes `header` to `header_path` and the frames to the payload file named
/// by `header.data` in the same directory. Integer dtypes are quantized by
/// rounding `value × dtype max`.
pub fn write_sequence<'a, I>(header_path: &Path, header: &SequenceHeader, frames: I) -> Result<()>
where
    I: IntoIterator<Item = &'a HyperCube>,
{
    let data_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&header.data);
    let file = File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let mut out = BufWriter::new(file);
    let mut bytes = Vec::with_capacity(header.frame_bytes() as usize);
    let mut written = 0usize;
    for frame in frames {
        if (frame.height(), frame.width(), frame.bands())
            != (header.height, header.width, header.bands)
        {
            return Err(Error::Shape(format!(
                "frame {written} is {}x{}x{}, header says {}x{}x{}",
                frame.height(),
                frame.width(),
                frame.bands(),
                header.height,
                header.width,
                header.bands
            )));
        }
        bytes.clear();
        header.dtype.encode(frame.as_slice(), &mut bytes);
        out.write_all(&bytes).map_err(|e| Error::io(&data_path, e))?;
        written += 1;
    }
    out.flush().map_err(|e| Error::io(&data_path, e))?;
    if written != header.frames {
        return Err(Error::Shape(format!(
            "header declares {} frames but {written} were written",
            header.frames
        )));
    }
    fs::write(header_path, header.to_string()).map_err(|e| Error::io(header_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(dtype: Dtype, frames: usize) -> SequenceHeader {
        SequenceHeader {
            width: 4,
            height: 4,
            bands: 2,
            frames,
            dtype,
            data: "seq.raw".into(),
            wavelengths: None,
        }
    }

    fn write_raw(dir: &Path, h: &SequenceHeader, payload: &[u8]) -> PathBuf {
        let hdr = dir.join("seq.hdr");
        fs::write(&hdr, h.to_string()).unwrap();
        fs::write(dir.join(&h.data), payload).unwrap();
        hdr
    }

    #[test]
    fn loads_u8_frames_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let payload: Vec<u8> = (0..96u32).map(|i| (i * 2) as u8).collect();
        let hdr = write_raw(dir.path(), &header(Dtype::U8, 3), &payload);
        let frames: Vec<HyperCube> = load_sequence(&hdr)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(frames.len(), 3);
        for (i, f) in frames.iter().enumerate() {
            assert_eq!((f.height(), f.width(), f.bands()), (4, 4, 2));
            // second band, row 1, col 2 of frame i
            let offset = i * 32 + 16 + 4 + 2;
            assert_eq!(f.get(1, 2, 1), payload[offset] as f64 / 255.0);
        }
    }

    #[test]
    fn u8_max_maps_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = write_raw(dir.path(), &header(Dtype::U8, 1), &[255u8; 32]);
        let frame = load_sequence(&hdr).unwrap().next().unwrap().unwrap();
        assert!(frame.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = write_raw(dir.path(), &header(Dtype::U8, 5), &[0u8; 128]);
        match load_sequence(&hdr).unwrap_err() {
            Error::Truncated {
                expected, actual, ..
            } => assert_eq!((expected, actual), (160, 128)),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn missing_payload_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("seq.hdr");
        fs::write(&hdr, header(Dtype::U8, 1).to_string()).unwrap();
        let err = load_sequence(&hdr).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("seq.raw"));
    }

    #[test]
    fn header_errors_carry_line_numbers() {
        let p = Path::new("x.hdr");
        let text = "width = 4\nheight = 4\nbands = two\n";
        assert!(matches!(
            SequenceHeader::parse(text, p),
            Err(Error::Parse { line: 3, .. })
        ));
        let text = "width = 4\n\nnonsense\n";
        assert!(matches!(
            SequenceHeader::parse(text, p),
            Err(Error::Parse { line: 3, .. })
        ));
        let text = "width=4\nheight=4\nbands=2\nframes=1\ndtype=u8\ndata=a\nwavelengths=500,490\n";
        assert!(matches!(
            SequenceHeader::parse(text, p),
            Err(Error::Parse { line: 7, .. })
        ));
        let text = "width=4\nheight=4\nbands=3\nframes=1\ndtype=u8\ndata=a\nwavelengths=470,490\n";
        assert!(SequenceHeader::parse(text, p).is_err());
        let text = "width=4\nheight=4\nbands=2\nframes=0\ndtype=u8\ndata=a\n";
        assert!(SequenceHeader::parse(text, p).is_err());
        let text = "width=4\nheight=4\nbands=2\nframes=1\ndtype=u8\n";
        assert!(SequenceHeader::parse(text, p).is_err());
    }

    #[test]
    fn header_text_round_trips() {
        let mut h = header(Dtype::U16Le, 7);
        h.wavelengths = Some(vec![470.0, 480.5]);
        let parsed = SequenceHeader::parse(&h.to_string(), Path::new("h")).unwrap();
        assert_eq!(parsed, h);
    }

    #[test]
    fn random_access_matches_iteration() {
        let dir = tempfile::tempdir().unwrap();
        let payload: Vec<u8> = (0..96u32).map(|i| (i * 7 % 256) as u8).collect();
        let hdr = write_raw(dir.path(), &header(Dtype::U8, 3), &payload);
        let all: Vec<HyperCube> = load_sequence(&hdr).unwrap().map(|f| f.unwrap()).collect();
        let mut reader = load_sequence(&hdr).unwrap();
        assert_eq!(reader.read_frame(2).unwrap(), all[2]);
        assert_eq!(reader.read_frame(0).unwrap(), all[0]);
        assert_eq!(reader.next().unwrap().unwrap(), all[1]);
        assert!(reader.read_frame(3).is_err());
    }

    fn dtype_strategy() -> impl Strategy<Value = Dtype> {
        prop_oneof![Just(Dtype::U8), Just(Dtype::U16Le), Just(Dtype::F32Le)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn payload_round_trips_byte_for_byte(
            dtype in dtype_strategy(),
            frames in 1usize..4,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let h = header(dtype, frames);
            let n = (h.payload_bytes()) as usize;
            let payload: Vec<u8> = match dtype {
                Dtype::F32Le => (0..n / 4)
                    .flat_map(|_| rng.gen::<f32>().to_le_bytes())
                    .collect(),
                _ => (0..n).map(|_| rng.gen::<u8>()).collect(),
            };
            let src = tempfile::tempdir().unwrap();
            let hdr = write_raw(src.path(), &h, &payload);
            let loaded: Vec<HyperCube> = load_sequence(&hdr).unwrap().map(|f| f.unwrap()).collect();

            let dst = tempfile::tempdir().unwrap();
            let out_hdr = dst.path().join("copy.hdr");
            write_sequence(&out_hdr, &h, &loaded).unwrap();
            let copied = fs::read(dst.path().join("seq.raw")).unwrap();
            prop_assert_eq!(copied, payload);
        }
    }
}
