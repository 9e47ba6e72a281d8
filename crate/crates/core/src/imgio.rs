//! Raster types, image decoding, color conversion and label-map persistence.
//!
//! Color images enter as 8-bit sRGB (PNG or binary PPM) and are converted to
//! CIELAB (D65) for all color statistics. Label maps persist either as 16-bit
//! grayscale PNG or as a plain-text matrix:
//!
//! ```text
//! width height
//! l00 l01 ...
//! l10 l11 ...
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};

/// 8-bit sRGB raster, row-major RGB triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(Error::InvalidRaster(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
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

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }
}

/// CIELAB raster; each pixel is `[L, a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "expected {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRaster("non-finite LAB value".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }
}

/// Real-valued single-channel raster (0..255 luma).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "expected {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, data }
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

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Per-pixel region ids, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        check_dims(width, height)?;
        if labels.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "expected {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u32) -> Self {
        assert!(width >= 1 && height >= 1, "label map must be at least 1x1");
        let labels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, labels }
    }

    /// Parses a row-major nested slice, mostly for fixtures.
    pub fn from_rows(rows: &[&[u32]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidRaster("ragged rows".into()));
        }
        Self::new(width, height, rows.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Number of distinct labels present.
    pub fn region_count(&self) -> usize {
        let mut seen = vec![false; self.max_label() as usize + 1];
        self.labels.iter().for_each(|&l| seen[l as usize] = true);
        seen.into_iter().filter(|&s| s).count()
    }

    /// True when the ids are exactly `0..n` with every id present.
    pub fn is_compact(&self) -> bool {
        self.region_count() == self.max_label() as usize + 1
    }

    /// Relabels to `0..n` in order of first appearance (raster scan).
    pub fn compacted(&self) -> LabelMap {
        let mut map: HashMap<u32, u32> = HashMap::new();
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                let next = map.len() as u32;
                *map.entry(l).or_insert(next)
            })
            .collect();
        LabelMap {
            width: self.width,
            height: self.height,
            labels,
        }
    }

    /// Pixels with a 4-neighbor carrying a different label.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let (w, h) = (self.width, self.height);
        let mut mask = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let l = self.labels[i];
                if (x + 1 < w && self.labels[i + 1] != l) || (y + 1 < h && self.labels[i + w] != l) {
                    mask[i] = true;
                    if x + 1 < w && self.labels[i + 1] != l {
                        mask[i + 1] = true;
                    }
                    if y + 1 < h && self.labels[i + w] != l {
                        mask[i + w] = true;
                    }
                }
            }
        }
        mask
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidRaster(format!("empty raster {width}x{height}")));
    }
    Ok(())
}

/// Decodes a PNG or binary PPM (P6) file into 8-bit RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.starts_with(b"P6") {
        decode_ppm(&bytes, path)
    } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| {
            Error::CorruptPayload {
                path: path.to_path_buf(),
                reason: e.to_string(),
            }
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        RgbImage::new(w, h, rgb.into_raw())
    } else {
        Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
        })
    }
}

fn decode_ppm(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let header_err = |reason: &str| Error::CorruptHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and '#' comments may separate header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(header_err("expected a decimal number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| header_err("number out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(header_err("missing separator after maxval"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(header_err("zero dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(header_err("maxval must be in 1..=255"));
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| header_err("dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(Error::CorruptPayload {
            path: path.to_path_buf(),
            reason: format!("expected {need} bytes, found {}", payload.len()),
        });
    }
    let data = payload[..need]
        .iter()
        .map(|&v| {
            if maxval == 255 {
                v
            } else {
                ((v as u32 * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8
            }
        })
        .collect();
    RgbImage::new(width, height, data)
}

/// Writes an 8-bit RGB PNG.
pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, img.data.clone())
            .expect("buffer size checked at construction");
    write_png(DynamicImage::ImageRgb8(buf), path)
}

fn write_png(img: DynamicImage, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|e| Error::Write {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        })?;
    fs::write(path, bytes).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

// D65 reference white, Y normalized to 1.
const WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one sRGB pixel to CIELAB under D65.
pub fn srgb_pixel_to_lab(px: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = px.map(srgb_to_linear);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let fx = lab_f(x / WHITE[0]);
    let fy = lab_f(y / WHITE[1]);
    let fz = lab_f(z / WHITE[2]);
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    [l, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn rgb_to_lab(img: &RgbImage) -> LabImage {
    // 8-bit input has only 2^24 colors but natural images repeat heavily
    let mut cache: HashMap<[u8; 3], [f64; 3]> = HashMap::new();
    let data = img
        .pixels()
        .map(|px| *cache.entry(px).or_insert_with(|| srgb_pixel_to_lab(px)))
        .collect();
    LabImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Rec.601 luma in 0..=255.
pub fn luminance(img: &RgbImage) -> GrayImage {
    let data = img
        .pixels()
        .map(|[r, g, b]| 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Writes a label map; `.png` selects 16-bit PNG, anything else the text matrix.
pub fn write_label_map(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        write_label_png(labels, path)
    } else {
        fs::write(path, label_map_to_text(labels)).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Reads a label map written by [`write_label_map`] (format chosen by extension).
pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    if is_png(path) {
        read_label_png(path)
    } else {
        let text = fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        parse_label_text(&text).map_err(|reason| Error::MalformedLabels {
            path: path.to_path_buf(),
            reason,
        })
    }
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn write_label_png(labels: &LabelMap, path: &Path) -> Result<()> {
    let raw = labels
        .labels
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| Error::LabelOverflow { label: l }))
        .collect::<Result<Vec<u16>>>()?;
    let buf: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(labels.width as u32, labels.height as u32, raw)
            .expect("buffer size checked at construction");
    write_png(DynamicImage::ImageLuma16(buf), path)
}

fn read_label_png(path: &Path) -> Result<LabelMap> {
    let bytes = fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| {
        Error::CorruptPayload {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        _ => {
            return Err(Error::MalformedLabels {
                path: path.to_path_buf(),
                reason: "label PNG must be single-channel grayscale".into(),
            })
        }
    };
    LabelMap::new(w, h, labels)
}

pub fn label_map_to_text(labels: &LabelMap) -> String {
    let mut out = format!("{} {}\n", labels.width, labels.height);
    for row in labels.labels.chunks(labels.width) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_label_text(text: &str) -> std::result::Result<LabelMap, String> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or("empty input")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| format!("bad header token {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    let [width, height] = dims[..] else {
        return Err(format!("header must be 'width height', got {header:?}"));
    };
    if width == 0 || height == 0 {
        return Err("zero dimension".into());
    }
    let mut labels = Vec::with_capacity(width * height);
    let mut rows = 0;
    for line in lines {
        let before = labels.len();
        for tok in line.split_whitespace() {
            labels.push(tok.parse::<u32>().map_err(|_| format!("bad label {tok:?} on row {rows}"))?);
        }
        if labels.len() - before != width {
            return Err(format!("row {rows} has {} entries, expected {width}", labels.len() - before));
        }
        rows += 1;
    }
    if rows != height {
        return Err(format!("expected {height} rows, found {rows}"));
    }
    LabelMap::new(width, height, labels).map_err(|e| e.to_string())
}

/// Paints region boundaries red over the image.
pub fn overlay_boundaries(img: &RgbImage, labels: &LabelMap) -> Result<RgbImage> {
    if (img.width, img.height) != labels.dims() {
        return Err(Error::dims((img.width, img.height), labels.dims()));
    }
    let mut out = img.clone();
    for (i, on) in labels.boundary_mask().into_iter().enumerate() {
        if on {
            out.put(i % img.width, i / img.width, [255, 0, 0]);
        }
    }
    Ok(out)
}
