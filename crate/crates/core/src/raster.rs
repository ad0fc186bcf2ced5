//! Row-major grids: binary road masks, real-valued fields and connectivity
//! class maps, plus their on-disk formats.
//!
//! Masks and connectivity maps are stored as binary PGM (`P5`). Scalar fields
//! use a raw little-endian `f32` grid behind a 16-byte header: magic `RGKF`,
//! width and height as `u32`, then four reserved zero bytes.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Largest connectivity class; node degrees above this are clamped.
pub const MAX_CONNECTIVITY: u8 = 5;

const FIELD_MAGIC: &[u8; 4] = b"RGKF";

/// Common access for the grid types, used by the tile stitcher.
pub trait Raster: Sized {
    type Value: Copy + Default;

    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn values(&self) -> &[Self::Value];
    fn from_values(width: usize, height: usize, data: Vec<Self::Value>) -> Result<Self>;

    fn get(&self, x: usize, y: usize) -> Self::Value {
        self.values()[y * self.width() + x]
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::argument(format!("grid dimensions must be positive, got {width}x{height}")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::shape(format!("{len} values for a {width}x{height} grid")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterMask {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height, width.saturating_mul(height))?;
        Ok(Self { width, height, data: vec![0; width * height] })
    }

    /// Any nonzero input value is road.
    pub fn from_bools(width: usize, height: usize, data: impl IntoIterator<Item = bool>) -> Result<Self> {
        let data: Vec<u8> = data.into_iter().map(u8::from).collect();
        check_dims(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn is_road(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    /// Bounds-checked lookup with signed coordinates; outside is background.
    pub fn road_at(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, road: bool) {
        self.data[y * self.width + x] = u8::from(road);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_blank(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn same_shape(&self, other: &RasterMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Road pixel coordinates in row-major order.
    pub fn road_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    pub fn write_pgm(&self, w: impl Write) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
        write_pgm(w, self.width, self.height, 255, &bytes)
    }

    /// Reads any 8-bit PGM; nonzero gray levels are road.
    pub fn read_pgm(r: impl Read) -> Result<Self> {
        let (width, height, _max, bytes) = read_pgm(r)?;
        Self::from_bools(width, height, bytes.into_iter().map(|v| v != 0))
    }
}

impl Raster for RasterMask {
    type Value = u8;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn values(&self) -> &[u8] {
        &self.data
    }
    fn from_values(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::from_bools(width, height, data.into_iter().map(|v| v != 0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        check_dims(width, height, width.saturating_mul(height))?;
        Ok(Self { width, height, data: vec![value; width * height] })
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn write_raw(&self, mut w: impl Write) -> Result<()> {
        let mut header = [0u8; 16];
        header[..4].copy_from_slice(FIELD_MAGIC);
        header[4..8].copy_from_slice(&dim_u32(self.width)?.to_le_bytes());
        header[8..12].copy_from_slice(&dim_u32(self.height)?.to_le_bytes());
        w.write_all(&header)?;
        let mut body = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            body.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&body)?;
        Ok(())
    }

    pub fn read_raw(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[..4] != FIELD_MAGIC {
            return Err(Error::Format("missing RGKF magic".into()));
        }
        let width = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let data = read_f32_body(&mut r, width.saturating_mul(height))?;
        Self::from_vec(width, height, data)
    }
}

impl Raster for ScalarField {
    type Value = f64;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
    fn from_values(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(width, height, data)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ConnectivityMap {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height, width.saturating_mul(height))?;
        Ok(Self { width, height, data: vec![0; width * height] })
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(v) = data.iter().find(|&&v| v > MAX_CONNECTIVITY) {
            return Err(Error::argument(format!("connectivity class {v} exceeds {MAX_CONNECTIVITY}")));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn class_at(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub(crate) fn set(&mut self, x: usize, y: usize, class: u8) {
        debug_assert!(class <= MAX_CONNECTIVITY);
        self.data[y * self.width + x] = class;
    }

    /// Pixel count per class 0..=5.
    pub fn histogram(&self) -> [usize; MAX_CONNECTIVITY as usize + 1] {
        let mut h = [0; MAX_CONNECTIVITY as usize + 1];
        for &v in &self.data {
            h[v as usize] += 1;
        }
        h
    }

    pub fn write_pgm(&self, w: impl Write) -> Result<()> {
        write_pgm(w, self.width, self.height, MAX_CONNECTIVITY, &self.data)
    }

    pub fn read_pgm(r: impl Read) -> Result<Self> {
        let (width, height, _max, bytes) = read_pgm(r)?;
        Self::from_vec(width, height, bytes)
    }
}

impl Raster for ConnectivityMap {
    type Value = u8;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn values(&self) -> &[u8] {
        &self.data
    }
    fn from_values(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::from_vec(width, height, data)
    }
}

pub(crate) fn dim_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::argument(format!("dimension {v} does not fit in u32")))
}

pub(crate) fn read_f32_body(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut body = vec![0u8; count.checked_mul(4).ok_or_else(|| Error::Format("grid too large".into()))?];
    r.read_exact(&mut body)
        .map_err(|e| Error::Format(format!("truncated grid body: {e}")))?;
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

fn write_pgm(mut w: impl Write, width: usize, height: usize, maxval: u8, bytes: &[u8]) -> Result<()> {
    write!(w, "P5\n{width} {height}\n{maxval}\n")?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_pgm(mut r: impl Read) -> Result<(usize, usize, u8, Vec<u8>)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    let mut token = |buf: &[u8]| -> Result<String> {
        loop {
            while pos < buf.len() && buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < buf.len() && buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&buf[start..pos]).into_owned())
    };
    if token(&buf)? != "P5" {
        return Err(Error::Format("expected binary PGM (P5)".into()));
    }
    let num = |s: String| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM header field `{s}`")));
    let width = num(token(&buf)?)?;
    let height = num(token(&buf)?)?;
    let maxval = num(token(&buf)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let len = width.saturating_mul(height);
    if buf.len() < start + len {
        return Err(Error::Format("truncated PGM raster".into()));
    }
    Ok((width, height, maxval as u8, buf[start..start + len].to_vec()))
}
