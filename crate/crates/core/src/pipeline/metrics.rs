//! Model-free evaluation helpers: dominant-palette extraction with a
//! proportion-weighted CIELAB distance, and edge-map comparison for
//! structural similarity.

use super::PipelineError;
use crate::clustering::kmeans_colors;
use crate::colorspace::{delta_e76, rgb_to_lab_scalar, to_grayscale};
use crate::image::{BinaryMask, ImageBuffer};

/// Sobel magnitude above which a pixel counts as an edge, on the 0..255
/// luma scale.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PaletteEntry {
    pub color: [f64; 3],
    pub proportion: f64,
}

/// Dominant colors of an image with their pixel proportions, sorted by
/// proportion descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub entries: Vec<PaletteEntry>,
}

impl Palette {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The highest-proportion color.
    pub fn dominant(&self) -> [f64; 3] {
        self.entries[0].color
    }
}

/// Two palettes with their distance, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct PaletteMetric {
    pub palette_a: Palette,
    pub palette_b: Palette,
    pub distance: f64,
}

impl PaletteMetric {
    pub fn new(palette_a: Palette, palette_b: Palette) -> Result<Self, PipelineError> {
        let distance = palette_distance(&palette_a, &palette_b)?;
        Ok(PaletteMetric {
            palette_a,
            palette_b,
            distance,
        })
    }
}

/// Top-n quantized colors of an image: k-means with k = n and a fixed
/// seed of 0, centroids sorted by proportion descending.
pub fn dominant_palette(img: &ImageBuffer, n: usize) -> Result<Palette, PipelineError> {
    let cs = kmeans_colors(img, n, None, 0)?;
    let total = cs.total_members() as f64;
    let mut entries: Vec<PaletteEntry> = cs
        .clusters
        .iter()
        .map(|c| PaletteEntry {
            color: c.centroid,
            proportion: c.member_count() as f64 / total,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.proportion
            .partial_cmp(&a.proportion)
            .unwrap()
            .then_with(|| {
                luminance(&a.color)
                    .partial_cmp(&luminance(&b.color))
                    .unwrap()
            })
    });
    Ok(Palette { entries })
}

fn luminance(rgb: &[f64; 3]) -> f64 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

/// Proportion-weighted mean CIE76 delta-E under the rank-matched pairing.
///
/// Weights are the mean of the two entries' proportions, so the distance
/// is symmetric for rank-aligned palettes; it is zero iff the palettes
/// are identical.
pub fn palette_distance(a: &Palette, b: &Palette) -> Result<f64, PipelineError> {
    if a.len() != b.len() {
        return Err(PipelineError::PaletteSizeMismatch(a.len(), b.len()));
    }
    let mut total = 0.0;
    let mut weight_sum = 0.0;
    for (ea, eb) in a.entries.iter().zip(&b.entries) {
        let de = delta_e76(rgb_to_lab_scalar(ea.color), rgb_to_lab_scalar(eb.color));
        let w = 0.5 * (ea.proportion + eb.proportion);
        total += w * de;
        weight_sum += w;
    }
    Ok(total / weight_sum)
}

/// Delta-E in the a/b plane only (lightness ignored): hue-and-chroma
/// distance between two RGB colors.
pub fn chroma_delta_e(rgb_a: [f64; 3], rgb_b: [f64; 3]) -> f64 {
    let la = rgb_to_lab_scalar(rgb_a);
    let lb = rgb_to_lab_scalar(rgb_b);
    let da = la[1] - lb[1];
    let db = la[2] - lb[2];
    (da * da + db * db).sqrt()
}

/// Binary edge map: Sobel gradient magnitude of the luma plane, thresholded.
pub fn edge_map(img: &ImageBuffer, threshold: f64) -> Result<BinaryMask, PipelineError> {
    let gray = if img.channels() == 3 {
        to_grayscale(img)?
    } else {
        img.clone()
    };
    let (w, h) = (gray.width(), gray.height());
    let at = |x: i64, y: i64| -> f64 {
        let xc = x.clamp(0, w as i64 - 1) as usize;
        let yc = y.clamp(0, h as i64 - 1) as usize;
        gray.get(xc, yc, 0)
    };
    let mut bits = vec![false; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x - 1, y)
                - at(x - 1, y + 1);
            let gy = at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x, y - 1)
                - at(x + 1, y - 1);
            bits[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt() > threshold;
        }
    }
    Ok(BinaryMask::new(w, h, bits).expect("edge map dims"))
}

/// Fraction of pixels on which two masks disagree.
pub fn changed_fraction(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let differing = a
        .bits()
        .iter()
        .zip(b.bits())
        .filter(|(x, y)| x != y)
        .count();
    differing as f64 / a.bits().len() as f64
}
