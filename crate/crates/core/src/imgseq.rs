//! Frame, sequence and flow-field containers plus file I/O.
//!
//! Coordinate convention, shared by every module: `x` is the column index
//! increasing rightward, `y` is the row index increasing downward, and all
//! buffers are row-major. Supported interchange formats are binary PGM (P5,
//! maxval 255) for frames, the Middlebury `.flo` layout for flow fields, and
//! a `x,y,dx,dy` CSV dump for human inspection.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImgError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("unsupported format: expected magic \"{expected}\", found \"{found}\"")]
    BadMagic { expected: String, found: String },
    #[error("malformed header: bad {field}")]
    MalformedHeader { field: &'static str },
    #[error("unsupported maxval {0} (only 255 is accepted)")]
    BadMaxval(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("sample buffer holds {got} values for {width}x{height}")]
    SizeMismatch {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("flow payload declares {width}x{height} but holds {got} bytes")]
    FloSizeMismatch {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("flow field contains non-finite values")]
    NonFiniteFlow,
    #[error("sequence needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    InhomogeneousSequence {
        index: usize,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

fn io_err(path: &Path, source: io::Error) -> ImgError {
    ImgError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A single 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self, ImgError> {
        if samples.len() != width * height {
            return Err(ImgError::SizeMismatch {
                width,
                height,
                got: samples.len(),
            });
        }
        Ok(Frame {
            width,
            height,
            samples,
        })
    }

    /// Frame filled with a constant intensity.
    pub fn constant(width: usize, height: usize, value: u8) -> Self {
        Frame {
            width,
            height,
            samples: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.samples[y * self.width + x]
    }

    /// Intensity as `f64`, the working precision of all arithmetic here.
    #[inline]
    pub fn getf(&self, x: usize, y: usize) -> f64 {
        f64::from(self.get(x, y))
    }

    /// Sample mean and (population) variance of the intensities.
    pub fn mean_variance(&self) -> (f64, f64) {
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var = self
            .samples
            .iter()
            .map(|&v| {
                let d = f64::from(v) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        (mean, var)
    }
}

/// An ordered list of same-sized frames, at least two.
#[derive(Debug, Clone)]
pub struct Sequence {
    frames: Vec<Frame>,
}

impl Sequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self, ImgError> {
        if frames.len() < 2 {
            return Err(ImgError::TooFewFrames(frames.len()));
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        for (index, f) in frames.iter().enumerate() {
            if f.width() != w || f.height() != h {
                return Err(ImgError::InhomogeneousSequence {
                    index,
                    got_w: f.width(),
                    got_h: f.height(),
                    want_w: w,
                    want_h: h,
                });
            }
        }
        Ok(Sequence { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false // K >= 2 by construction
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }
}

/// Dense per-pixel displacement field `(dx, dy)` in pixels, row-major.
///
/// The convention throughout: `d(r)` registers the current frame against the
/// previous one, `I_k(r) = I_{k-1}(r - d(r))` under perfect motion.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, dx: Vec<f64>, dy: Vec<f64>) -> Result<Self, ImgError> {
        if dx.len() != width * height || dy.len() != width * height {
            return Err(ImgError::SizeMismatch {
                width,
                height,
                got: dx.len().max(dy.len()),
            });
        }
        if dx.iter().chain(dy.iter()).any(|v| !v.is_finite()) {
            return Err(ImgError::NonFiniteFlow);
        }
        Ok(FlowField {
            width,
            height,
            dx,
            dy,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            dx: vec![0.0; width * height],
            dy: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, dx: f64, dy: f64) {
        let i = y * self.width + x;
        self.dx[i] = dx;
        self.dy[i] = dy;
    }
}

// ---------------------------------------------------------------------------
// PGM (P5)
// ---------------------------------------------------------------------------

/// Reads a binary PGM (P5) file with maxval 255. Comment lines starting with
/// `#` are tolerated between header tokens.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<Frame, ImgError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    parse_pgm(&bytes)
}

fn parse_pgm(bytes: &[u8]) -> Result<Frame, ImgError> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(ImgError::BadMagic {
            expected: "P5".into(),
            found,
        });
    }
    let mut pos = 2usize;
    let width = next_header_token(bytes, &mut pos, "width")?;
    let height = next_header_token(bytes, &mut pos, "height")?;
    let maxval = next_header_token(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(ImgError::BadMaxval(maxval as u32));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImgError::MalformedHeader { field: "separator" }),
    }
    let expected = width * height;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(ImgError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Frame::new(width, height, payload[..expected].to_vec())
}

/// Parses the next unsigned decimal header token, skipping whitespace and
/// `#` comment lines.
fn next_header_token(bytes: &[u8], pos: &mut usize, field: &'static str) -> Result<usize, ImgError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImgError::MalformedHeader { field });
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(ImgError::MalformedHeader { field })
}

/// Writes `frame` as binary PGM (P5), maxval 255. `load_pgm` of the result
/// is bit-identical to the input.
pub fn save_pgm(frame: &Frame, path: impl AsRef<Path>) -> Result<(), ImgError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(frame.samples().len() + 32);
    write!(
        &mut out,
        "P5\n{} {}\n255\n",
        frame.width(),
        frame.height()
    )
    .expect("write to Vec cannot fail");
    out.extend_from_slice(frame.samples());
    fs::write(path, out).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Middlebury .flo
// ---------------------------------------------------------------------------

const FLO_MAGIC: &[u8; 4] = b"PIEH";

/// Writes `flow` in the Middlebury `.flo` layout: the 4-byte tag `PIEH`,
/// little-endian i32 width and height, then row-major interleaved
/// little-endian f32 `(dx, dy)` pairs.
pub fn save_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<(), ImgError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(12 + flow.dx().len() * 8);
    out.extend_from_slice(FLO_MAGIC);
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for i in 0..flow.dx().len() {
        out.extend_from_slice(&(flow.dx()[i] as f32).to_le_bytes());
        out.extend_from_slice(&(flow.dy()[i] as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn load_flo(path: impl AsRef<Path>) -> Result<FlowField, ImgError> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;
    parse_flo(&bytes)
}

fn parse_flo(bytes: &[u8]) -> Result<FlowField, ImgError> {
    if bytes.len() < 12 || &bytes[0..4] != FLO_MAGIC {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(ImgError::BadMagic {
            expected: String::from_utf8_lossy(FLO_MAGIC).into_owned(),
            found,
        });
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width < 0 || height < 0 {
        return Err(ImgError::MalformedHeader { field: "dimensions" });
    }
    let (width, height) = (width as usize, height as usize);
    let payload = &bytes[12..];
    if payload.len() != width * height * 8 {
        return Err(ImgError::FloSizeMismatch {
            width,
            height,
            got: payload.len(),
        });
    }
    let mut dx = Vec::with_capacity(width * height);
    let mut dy = Vec::with_capacity(width * height);
    for pair in payload.chunks_exact(8) {
        dx.push(f32::from_le_bytes(pair[0..4].try_into().unwrap()) as f64);
        dy.push(f32::from_le_bytes(pair[4..8].try_into().unwrap()) as f64);
    }
    FlowField::new(width, height, dx, dy)
}

// ---------------------------------------------------------------------------
// CSV dump
// ---------------------------------------------------------------------------

/// Writes the flow as `x,y,dx,dy` lines in row-major order, header included.
pub fn save_flow_csv(flow: &FlowField, path: impl AsRef<Path>) -> Result<(), ImgError> {
    let path = path.as_ref();
    let mut out = String::with_capacity(flow.dx().len() * 24);
    out.push_str("x,y,dx,dy\n");
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            let (dx, dy) = flow.get(x, y);
            let _ = writeln!(&mut out, "{x},{y},{dx},{dy}");
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}
