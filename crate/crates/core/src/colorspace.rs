//! RGB <-> CIELAB conversion, grayscale approximation, and L/AB channel
//! recombination.
//!
//! Conventions: sRGB primaries, D65 white point, standard sRGB gamma.
//! The white point is taken from the conversion-matrix row sums so the
//! neutral axis (r = g = b) maps to a = b = 0 at machine precision.
//! `lab_to_rgb` clamps out-of-gamut results to `[0, 255]` rather than
//! erroring; recombined L/AB pairs routinely leave the sRGB gamut.

use crate::image::ImageBuffer;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ColorError {
    #[error("expected a {expected}-channel image, got {got}")]
    WrongChannelCount { expected: usize, got: usize },
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
}

/// Per-pixel CIELAB planes. L is in `[0, 100]` for in-gamut sources;
/// a and b are nominally in `[-128, 127]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub width: usize,
    pub height: usize,
    pub l: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl LabImage {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Linear-light sRGB -> XYZ matrix (IEC 61966-2-1 primaries, D65).
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.41239079926595934, 0.357584339383878, 0.1804807884018343],
    [0.21263900587151027, 0.715168678767756, 0.07219231536073371],
    [0.01933081871559182, 0.11919477979462598, 0.9505321522496607],
];

/// D65 white point as produced by the matrix itself (row sums), so that
/// equal-channel inputs normalize to exactly equal XYZ ratios.
fn white_point() -> [f64; 3] {
    let mut wp = [0.0; 3];
    for (i, row) in RGB_TO_XYZ.iter().enumerate() {
        wp[i] = row[0] + row[1] + row[2];
    }
    wp
}

/// Analytic inverse of `RGB_TO_XYZ`; computed rather than hard-coded so the
/// round trip is exact to rounding error regardless of constant precision.
fn xyz_to_rgb_matrix() -> [[f64; 3]; 3] {
    let m = &RGB_TO_XYZ;
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv_det = 1.0 / det;
    [
        [
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ]
}

#[inline]
fn srgb_decode(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn srgb_encode(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

const DELTA: f64 = 6.0 / 29.0;

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

#[inline]
fn lab_f_inv(f: f64) -> f64 {
    if f > DELTA {
        f * f * f
    } else {
        3.0 * DELTA * DELTA * (f - 4.0 / 29.0)
    }
}

/// Scalar sRGB (0..255 per channel) -> CIELAB.
pub fn rgb_to_lab_scalar(rgb: [f64; 3]) -> [f64; 3] {
    let wp = white_point();
    let lin = [
        srgb_decode(rgb[0] / 255.0),
        srgb_decode(rgb[1] / 255.0),
        srgb_decode(rgb[2] / 255.0),
    ];
    let mut f = [0.0; 3];
    for i in 0..3 {
        let t = (RGB_TO_XYZ[i][0] * lin[0] + RGB_TO_XYZ[i][1] * lin[1] + RGB_TO_XYZ[i][2] * lin[2])
            / wp[i];
        f[i] = lab_f(t);
    }
    [
        116.0 * f[1] - 16.0,
        500.0 * (f[0] - f[1]),
        200.0 * (f[1] - f[2]),
    ]
}

/// Scalar CIELAB -> sRGB (0..255 per channel), clamped to gamut.
pub fn lab_to_rgb_scalar(lab: [f64; 3]) -> [f64; 3] {
    let wp = white_point();
    let inv = xyz_to_rgb_matrix();
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [
        lab_f_inv(fx) * wp[0],
        lab_f_inv(fy) * wp[1],
        lab_f_inv(fz) * wp[2],
    ];
    let mut out = [0.0; 3];
    for i in 0..3 {
        let lin = inv[i][0] * xyz[0] + inv[i][1] * xyz[1] + inv[i][2] * xyz[2];
        out[i] = srgb_encode(lin.clamp(0.0, 1.0)) * 255.0;
    }
    out
}

/// CIE76 color difference between two Lab triples.
pub fn delta_e76(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dl = a[0] - b[0];
    let da = a[1] - b[1];
    let db = a[2] - b[2];
    (dl * dl + da * da + db * db).sqrt()
}

/// Converts a 3-channel image with values in `[0, 255]` to CIELAB planes.
pub fn rgb_to_lab(img: &ImageBuffer) -> Result<LabImage, ColorError> {
    if img.channels() != 3 {
        return Err(ColorError::WrongChannelCount {
            expected: 3,
            got: img.channels(),
        });
    }
    let n = img.pixel_count();
    let mut l = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let p = img.pixel(i);
        let lab = rgb_to_lab_scalar([p[0], p[1], p[2]]);
        l.push(lab[0]);
        a.push(lab[1]);
        b.push(lab[2]);
    }
    Ok(LabImage {
        width: img.width(),
        height: img.height(),
        l,
        a,
        b,
    })
}

/// Inverse of [`rgb_to_lab`]; out-of-gamut values clamp to `[0, 255]`.
pub fn lab_to_rgb(lab: &LabImage) -> ImageBuffer {
    let n = lab.pixel_count();
    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        let rgb = lab_to_rgb_scalar([lab.l[i], lab.a[i], lab.b[i]]);
        data.extend_from_slice(&rgb);
    }
    ImageBuffer::new(lab.width, lab.height, 3, data).expect("lab_to_rgb: valid dimensions")
}

/// L channel from `style_src`, a/b channels from `color_src`, all copied
/// exactly.
pub fn merge_l_ab(style_src: &LabImage, color_src: &LabImage) -> Result<LabImage, ColorError> {
    if style_src.dims() != color_src.dims() {
        return Err(ColorError::DimensionMismatch(
            style_src.dims(),
            color_src.dims(),
        ));
    }
    Ok(LabImage {
        width: style_src.width,
        height: style_src.height,
        l: style_src.l.clone(),
        a: color_src.a.clone(),
        b: color_src.b.clone(),
    })
}

/// Rec. 601 luma of a 3-channel image.
///
/// Written as `b + 0.299 (r - b) + 0.587 (g - b)` so neutral pixels
/// (r = g = b) map to their channel value exactly.
pub fn to_grayscale(img: &ImageBuffer) -> Result<ImageBuffer, ColorError> {
    if img.channels() != 3 {
        return Err(ColorError::WrongChannelCount {
            expected: 3,
            got: img.channels(),
        });
    }
    let n = img.pixel_count();
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let p = img.pixel(i);
        data.push(p[2] + 0.299 * (p[0] - p[2]) + 0.587 * (p[1] - p[2]));
    }
    Ok(ImageBuffer::new(img.width(), img.height(), 1, data).expect("grayscale dims"))
}

/// True CIELAB lightness of a 3-channel image, rescaled from `[0, 100]`
/// to the `[0, 255]` pixel range. The stricter alternative to
/// [`to_grayscale`] when an exact L channel is wanted.
pub fn lightness_image(img: &ImageBuffer) -> Result<ImageBuffer, ColorError> {
    let lab = rgb_to_lab(img)?;
    let data = lab.l.iter().map(|&l| l * 2.55).collect();
    Ok(ImageBuffer::new(img.width(), img.height(), 1, data).expect("lightness dims"))
}

/// Replicates a 1-channel image into 3 equal channels.
pub fn gray_to_rgb(img: &ImageBuffer) -> Result<ImageBuffer, ColorError> {
    if img.channels() != 1 {
        return Err(ColorError::WrongChannelCount {
            expected: 1,
            got: img.channels(),
        });
    }
    let mut data = Vec::with_capacity(img.pixel_count() * 3);
    for &v in img.data() {
        data.extend_from_slice(&[v, v, v]);
    }
    Ok(ImageBuffer::new(img.width(), img.height(), 3, data).expect("gray_to_rgb dims"))
}
