//! Shared fixtures for the criterion benchmarks.

use colorway::image::ImageBuffer;
use colorway::recolor::SampleMatrix;

/// Deterministic pseudo-random RGB image.
pub fn random_image(width: usize, height: usize, seed: u64) -> ImageBuffer {
    let mut state = seed | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % 256) as f64
    };
    let data = (0..width * height * 3).map(|_| next()).collect();
    ImageBuffer::new(width, height, 3, data).expect("bench image dims")
}

/// Deterministic pseudo-random sample matrix with mixed channels.
pub fn random_samples(n: usize, seed: u64) -> SampleMatrix {
    let mut state = seed | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % 2000) as f64 / 1000.0 - 1.0
    };
    let data: Vec<f64> = (0..n)
        .flat_map(|_| {
            let a = next();
            let b = next();
            let c = next();
            [a, b + 0.4 * a, c - 0.2 * b]
        })
        .collect();
    SampleMatrix::new(n, 3, data)
}
