//! Image containers and lossless file I/O.
//!
//! Pixels are stored as `f64` so that downstream covariance math stays in
//! one numeric domain; quantization to bytes happens only on save, using
//! round-half-away-from-zero followed by a clamp to `[0, 255]`.
//!
//! Supported formats: PNG (RGB8 / Gray8) plus binary PPM (P6) and PGM (P5)
//! with maxval 255. Loads dispatch on magic bytes, saves on file extension.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unreadable file {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("unwritable path {path}: {source}")]
    Unwritable {
        path: String,
        source: std::io::Error,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("image dimensions overflow: {width}x{height}x{channels}")]
    DimensionOverflow {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("dimension mismatch: image is {image_dims:?}, mask is {mask_dims:?}")]
    DimensionMismatch {
        image_dims: (usize, usize),
        mask_dims: (usize, usize),
    },
    #[error("invalid image data: {0}")]
    InvalidData(String),
}

/// H x W x C grid of channel values, row-major, one `f64` per
/// (row, col, channel). Channels are 1 (gray) or 3 (RGB).
///
/// Immutable after construction; operations return new buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::InvalidData(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        let expected = checked_len(width, height, channels)?;
        if data.len() != expected {
            return Err(ImageError::InvalidData(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        ImageBuffer::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
        .expect("filled: valid dimensions")
    }

    /// 3-channel image with every pixel set to `rgb`.
    pub fn solid_rgb(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        ImageBuffer::new(width, height, 3, data).expect("solid_rgb: valid dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Channel values of the pixel at row-major index `idx`.
    #[inline]
    pub fn pixel(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }
}

/// One boolean per pixel; dimensions must match the image it masks.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImageError> {
        if bits.len() != width * height {
            return Err(ImageError::InvalidData(format!(
                "mask bit count {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    /// Mask that is true exactly at the given row-major pixel indices.
    pub fn from_indices(width: usize, height: usize, indices: &[usize]) -> Self {
        let mut bits = vec![false; width * height];
        for &i in indices {
            bits[i] = true;
        }
        BinaryMask {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set(&mut self, idx: usize, v: bool) {
        self.bits[idx] = v;
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn matches_dims(&self, img: &ImageBuffer) -> bool {
        self.width == img.width() && self.height == img.height()
    }
}

fn checked_len(width: usize, height: usize, channels: usize) -> Result<usize, ImageError> {
    width
        .checked_mul(height)
        .and_then(|px| px.checked_mul(channels))
        // Guards against pathological headers before we try to allocate.
        .filter(|&len| len <= (1usize << 31))
        .ok_or(ImageError::DimensionOverflow {
            width,
            height,
            channels,
        })
}

/// Round half away from zero, then clamp to the 8-bit range.
#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Loads a PNG, PPM (P6), or PGM (P5) file, dispatching on magic bytes.
///
/// Returns values in `[0, 255]`; 3 channels for color sources, 1 for gray.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer, ImageError> {
    let path = path.as_ref();
    let mut file = BufReader::new(File::open(path).map_err(|source| ImageError::Unreadable {
        path: path.display().to_string(),
        source,
    })?);
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|source| ImageError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;

    const PNG_MAGIC: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];
    if bytes.starts_with(&PNG_MAGIC) {
        decode_png(&bytes)
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P5") {
        decode_pnm(&bytes)
    } else {
        Err(ImageError::UnsupportedFormat(format!(
            "{}: not a PNG, P6 PPM, or P5 PGM file",
            path.display()
        )))
    }
}

/// Saves as PNG (default), or PPM/PGM when the extension says so.
///
/// Values are rounded half away from zero and clamped to `[0, 255]`.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();

    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize_u8(v)).collect();

    match ext.as_str() {
        "ppm" => {
            if img.channels() != 3 {
                return Err(ImageError::UnsupportedFormat(
                    "PPM requires a 3-channel image".into(),
                ));
            }
            write_pnm(img, &bytes, b"P6", path)
        }
        "pgm" => {
            if img.channels() != 1 {
                return Err(ImageError::UnsupportedFormat(
                    "PGM requires a 1-channel image".into(),
                ));
            }
            write_pnm(img, &bytes, b"P5", path)
        }
        _ => encode_png(img, &bytes, path),
    }
}

/// Zeroes masked-out pixels; masked-in pixels are copied verbatim.
pub fn apply_mask(img: &ImageBuffer, mask: &BinaryMask) -> Result<ImageBuffer, ImageError> {
    if !mask.matches_dims(img) {
        return Err(ImageError::DimensionMismatch {
            image_dims: (img.width(), img.height()),
            mask_dims: (mask.width(), mask.height()),
        });
    }
    let c = img.channels();
    let mut out = img.clone();
    for (idx, &keep) in mask.bits().iter().enumerate() {
        if !keep {
            out.data[idx * c..(idx + 1) * c].fill(0.0);
        }
    }
    Ok(out)
}

/// Bilinear resize with centered sampling; channels pass through unchanged.
pub fn resize_bilinear(img: &ImageBuffer, width: usize, height: usize) -> ImageBuffer {
    if width == img.width() && height == img.height() {
        return img.clone();
    }
    let c = img.channels();
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    let mut data = vec![0.0; width * height * c];
    for y in 0..height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).max(0.0);
        let y0 = (fy.floor() as usize).min(img.height() - 1);
        let y1 = (y0 + 1).min(img.height() - 1);
        let wy = fy - y0 as f64;
        for x in 0..width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).max(0.0);
            let x0 = (fx.floor() as usize).min(img.width() - 1);
            let x1 = (x0 + 1).min(img.width() - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let top = img.get(x0, y0, ch) * (1.0 - wx) + img.get(x1, y0, ch) * wx;
                let bot = img.get(x0, y1, ch) * (1.0 - wx) + img.get(x1, y1, ch) * wx;
                data[(y * width + x) * c + ch] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    ImageBuffer::new(width, height, c, data).expect("resize: valid dimensions")
}

fn decode_png(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::InvalidData(format!("PNG decode: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::InvalidData(format!("PNG decode: {e}")))?;

    if info.bit_depth != png::BitDepth::Eight {
        return Err(ImageError::UnsupportedFormat(format!(
            "PNG bit depth {:?} (only 8-bit supported)",
            info.bit_depth
        )));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(ImageError::UnsupportedFormat(format!(
                "PNG color type {other:?} (only Gray8 and RGB8 supported)"
            )))
        }
    };
    let width = info.width as usize;
    let height = info.height as usize;
    let len = checked_len(width, height, channels)?;
    let data = buf[..len].iter().map(|&b| b as f64).collect();
    ImageBuffer::new(width, height, channels, data)
}

fn encode_png(img: &ImageBuffer, bytes: &[u8], path: &Path) -> Result<(), ImageError> {
    let file = File::create(path).map_err(|source| ImageError::Unwritable {
        path: path.display().to_string(),
        source,
    })?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        img.width() as u32,
        img.height() as u32,
    );
    encoder.set_color(if img.channels() == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    });
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| ImageError::InvalidData(format!("PNG encode: {e}")))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| ImageError::InvalidData(format!("PNG encode: {e}")))?;
    Ok(())
}

fn write_pnm(img: &ImageBuffer, bytes: &[u8], magic: &[u8], path: &Path) -> Result<(), ImageError> {
    let file = File::create(path).map_err(|source| ImageError::Unwritable {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(magic)?;
        writeln!(w, "\n{} {}\n255", img.width(), img.height())?;
        w.write_all(bytes)
    };
    write(&mut w).map_err(|source| ImageError::Unwritable {
        path: path.display().to_string(),
        source,
    })
}

/// Parses binary PPM (P6) / PGM (P5) with maxval 255.
fn decode_pnm(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let channels = match &bytes[..2] {
        b"P6" => 3,
        b"P5" => 1,
        _ => unreachable!("dispatched on magic"),
    };
    let mut pos = 2;
    let width = parse_pnm_int(bytes, &mut pos)?;
    let height = parse_pnm_int(bytes, &mut pos)?;
    let maxval = parse_pnm_int(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedFormat(format!(
            "PNM maxval {maxval} (only 255 supported)"
        )));
    }
    // Exactly one whitespace byte separates the header from pixel data.
    pos += 1;
    let len = checked_len(width, height, channels)?;
    let pixel_bytes = bytes
        .get(pos..pos + len)
        .ok_or_else(|| ImageError::InvalidData("PNM pixel data truncated".into()))?;
    let data = pixel_bytes.iter().map(|&b| b as f64).collect();
    ImageBuffer::new(width, height, channels, data)
}

fn parse_pnm_int(bytes: &[u8], pos: &mut usize) -> Result<usize, ImageError> {
    // Skip whitespace and '#' comment lines.
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while matches!(bytes.get(*pos), Some(b) if b.is_ascii_digit()) {
        *pos += 1;
    }
    if *pos == start {
        return Err(ImageError::InvalidData(
            "PNM header: expected integer".into(),
        ));
    }
    let text = std::str::from_utf8(&bytes[start..*pos]).expect("digits are ascii");
    text.parse::<usize>()
        .map_err(|_| ImageError::DimensionOverflow {
            width: 0,
            height: 0,
            channels: 0,
        })
}
