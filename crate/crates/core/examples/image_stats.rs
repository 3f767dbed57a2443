//! Prints one line of summary statistics for an image file, for use by
//! shell checks: dimensions, distinct colors, channel means, and whether
//! every pixel is neutral (r = g = b).
//!
//! Usage: cargo run -p colorway --example image_stats -- <image>

use colorway::image::load_image;
use std::collections::BTreeSet;

fn main() {
    let path = std::env::args().nth(1).expect("usage: image_stats <image>");
    let img = load_image(&path).unwrap_or_else(|e| panic!("{path}: {e}"));

    let n = img.pixel_count();
    let c = img.channels();
    let mut means = vec![0.0f64; c];
    let mut distinct = BTreeSet::new();
    let mut neutral = true;
    for i in 0..n {
        let p = img.pixel(i);
        for (m, v) in means.iter_mut().zip(p) {
            *m += v;
        }
        distinct.insert(p.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if c == 3 && (p[0] != p[1] || p[1] != p[2]) {
            neutral = false;
        }
    }
    let means: Vec<String> = means
        .iter()
        .map(|m| format!("{:.1}", m / n as f64))
        .collect();
    println!(
        "{}x{} channels={} distinct={} mean=({}) neutral={}",
        img.width(),
        img.height(),
        c,
        distinct.len(),
        means.join(","),
        if c == 3 && neutral { "yes" } else { "no" }
    );
}
