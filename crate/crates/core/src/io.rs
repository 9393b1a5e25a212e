//! Image and field file formats: binary PGM/PPM input, PFM and .flo float
//! output, and colorization helpers for disparity and flow fields.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Grayscale image with intensities normalized to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v;
    }

    /// Clamped access (border replication).
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f32 {
        let xc = x.clamp(0, self.width as i64 - 1) as usize;
        let yc = y.clamp(0, self.height as i64 - 1) as usize;
        self.get(xc, yc)
    }
}

struct ByteParser<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteParser<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_whitespace_and_comments(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("unexpected end of header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn usize_token(&mut self, what: &str) -> Result<usize> {
        let t = self.token()?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(format!("invalid {what}")))
    }

    fn f32_token(&mut self, what: &str) -> Result<f32> {
        let t = self.token()?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(format!("invalid {what}")))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!("truncated {what}: need {n} bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    f.write_all(bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Read a binary PGM (`P5`) or PPM (`P6`) image; color inputs are converted
/// to grayscale, intensities are normalized to `[0, 1]`.  16-bit samples are
/// big-endian per the format specification.
pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut p = ByteParser {
        bytes: &bytes,
        pos: 0,
        path,
    };
    let magic = p.token()?;
    let channels = match magic {
        b"P5" => 1usize,
        b"P6" => 3usize,
        _ => return Err(p.err("expected binary PGM (P5) or PPM (P6) magic")),
    };
    let width = p.usize_token("width")?;
    let height = p.usize_token("height")?;
    let maxval = p.usize_token("maxval")?;
    if width == 0 || height == 0 {
        return Err(p.err("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(p.err(format!("maxval {maxval} out of range")));
    }
    // single whitespace byte after maxval
    if p.pos < p.bytes.len() && p.bytes[p.pos].is_ascii_whitespace() {
        p.pos += 1;
    } else {
        return Err(p.err("missing whitespace after maxval"));
    }
    let wide = maxval > 255;
    let sample_bytes = if wide { 2 } else { 1 };
    let data = p.take(width * height * channels * sample_bytes, "pixel data")?;
    let mut img = GrayImage::new(width, height);
    let scale = 1.0 / maxval as f32;
    for i in 0..width * height {
        let mut acc = 0.0f32;
        for c in 0..channels {
            let idx = (i * channels + c) * sample_bytes;
            let v = if wide {
                u16::from_be_bytes([data[idx], data[idx + 1]]) as f32
            } else {
                data[idx] as f32
            };
            acc += v * if channels == 3 { LUMA[c] } else { 1.0 };
        }
        img.pixels[i] = acc * scale;
    }
    Ok(img)
}

/// Write a grayscale PFM: `Pf` header, negative scale (little-endian
/// samples), rows stored bottom to top.
pub fn write_pfm(path: impl AsRef<Path>, width: usize, height: usize, data: &[f32]) -> Result<()> {
    assert_eq!(data.len(), width * height);
    let mut bytes = Vec::with_capacity(32 + data.len() * 4);
    bytes.extend_from_slice(format!("Pf\n{width} {height}\n-1.0\n").as_bytes());
    for y in (0..height).rev() {
        for x in 0..width {
            bytes.extend_from_slice(&data[y * width + x].to_le_bytes());
        }
    }
    write_file(path.as_ref(), &bytes)
}

/// Read a grayscale PFM written by [`write_pfm`] (or any conforming file;
/// positive scale means big-endian samples).
pub fn read_pfm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>)> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut p = ByteParser {
        bytes: &bytes,
        pos: 0,
        path,
    };
    let magic = p.token()?;
    if magic != b"Pf" {
        return Err(p.err("expected grayscale PFM magic `Pf`"));
    }
    let width = p.usize_token("width")?;
    let height = p.usize_token("height")?;
    let scale = p.f32_token("scale")?;
    if scale == 0.0 {
        return Err(p.err("zero PFM scale"));
    }
    if p.pos < p.bytes.len() && p.bytes[p.pos].is_ascii_whitespace() {
        p.pos += 1;
    }
    let little = scale < 0.0;
    let data = p.take(width * height * 4, "sample data")?;
    let mut out = vec![0.0f32; width * height];
    for y in 0..height {
        let src_row = height - 1 - y;
        for x in 0..width {
            let idx = (src_row * width + x) * 4;
            let quad = [data[idx], data[idx + 1], data[idx + 2], data[idx + 3]];
            out[y * width + x] = if little {
                f32::from_le_bytes(quad)
            } else {
                f32::from_be_bytes(quad)
            };
        }
    }
    Ok((width, height, out))
}

const FLO_MAGIC: f32 = 202021.25;

/// Write a two-component flow field in the Middlebury `.flo` layout:
/// magic, dimensions, then interleaved `(u, v)` float pairs row-major.
pub fn write_flo(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    u: &[f32],
    v: &[f32],
) -> Result<()> {
    assert_eq!(u.len(), width * height);
    assert_eq!(v.len(), width * height);
    let mut bytes = Vec::with_capacity(12 + u.len() * 8);
    bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    bytes.extend_from_slice(&(width as i32).to_le_bytes());
    bytes.extend_from_slice(&(height as i32).to_le_bytes());
    for i in 0..width * height {
        bytes.extend_from_slice(&u[i].to_le_bytes());
        bytes.extend_from_slice(&v[i].to_le_bytes());
    }
    write_file(path.as_ref(), &bytes)
}

/// Read a `.flo` flow field; returns `(width, height, u, v)`.
pub fn read_flo(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>, Vec<f32>)> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let fail = |pos: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        offset: pos,
        message: msg.into(),
    };
    if bytes.len() < 12 {
        return Err(fail(0, "truncated .flo header"));
    }
    let magic = f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if magic != FLO_MAGIC {
        return Err(fail(0, "bad .flo magic"));
    }
    let width = i32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    let height = i32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let need = 12 + width * height * 8;
    if bytes.len() < need {
        return Err(fail(bytes.len(), "truncated .flo data"));
    }
    let mut u = vec![0.0f32; width * height];
    let mut v = vec![0.0f32; width * height];
    for i in 0..width * height {
        let o = 12 + i * 8;
        u[i] = f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
        v[i] = f32::from_le_bytes([bytes[o + 4], bytes[o + 5], bytes[o + 6], bytes[o + 7]]);
    }
    Ok((width, height, u, v))
}

/// Write an 8-bit binary PGM.
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    assert_eq!(gray.len(), width * height);
    let mut bytes = Vec::with_capacity(32 + gray.len());
    bytes.extend_from_slice(format!("P5\n{width} {height}\n255\n").as_bytes());
    bytes.extend_from_slice(gray);
    write_file(path.as_ref(), &bytes)
}

/// Write an 8-bit binary PPM (RGB interleaved).
pub fn write_ppm(path: impl AsRef<Path>, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    assert_eq!(rgb.len(), width * height * 3);
    let mut bytes = Vec::with_capacity(32 + rgb.len());
    bytes.extend_from_slice(format!("P6\n{width} {height}\n255\n").as_bytes());
    bytes.extend_from_slice(rgb);
    write_file(path.as_ref(), &bytes)
}

/// Map a disparity field to a linear gray ramp over `[lo, hi]`; invalidated
/// pixels (non-finite values) become black.
pub fn colorize_disparity(field: &[f32], lo: f64, hi: f64) -> Vec<u8> {
    let span = (hi - lo).max(1e-12);
    field
        .iter()
        .map(|&d| {
            if !d.is_finite() {
                0u8
            } else {
                let t = ((d as f64 - lo) / span).clamp(0.0, 1.0);
                (t * 255.0).round() as u8
            }
        })
        .collect()
}

/// Map a flow field to the standard hue-wheel encoding: hue from the flow
/// direction, saturation from the magnitude relative to `max_mag`, full
/// value.  Zero flow is white; invalidated pixels are black.
pub fn colorize_flow(u: &[f32], v: &[f32], max_mag: f64) -> Vec<u8> {
    let cap = max_mag.max(1e-12);
    let mut rgb = Vec::with_capacity(u.len() * 3);
    for i in 0..u.len() {
        if !u[i].is_finite() || !v[i].is_finite() {
            rgb.extend_from_slice(&[0, 0, 0]);
            continue;
        }
        let mag = ((u[i] as f64).hypot(v[i] as f64) / cap).clamp(0.0, 1.0);
        let hue = (v[i] as f64).atan2(u[i] as f64); // [-pi, pi]
        let h6 = (hue / std::f64::consts::PI + 1.0) * 3.0; // [0, 6)
        let sector = (h6.floor() as i64).rem_euclid(6) as usize;
        let f = h6 - h6.floor();
        // HSV with s = mag, v = 1
        let p = 1.0 - mag;
        let q = 1.0 - mag * f;
        let t = 1.0 - mag * (1.0 - f);
        let (r, g, b) = match sector {
            0 => (1.0, t, p),
            1 => (q, 1.0, p),
            2 => (p, 1.0, t),
            3 => (p, q, 1.0),
            4 => (t, p, 1.0),
            _ => (1.0, p, q),
        };
        rgb.push((r * 255.0).round() as u8);
        rgb.push((g * 255.0).round() as u8);
        rgb.push((b * 255.0).round() as u8);
    }
    rgb
}
