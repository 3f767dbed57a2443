//! Writes the demo input images used by scripts/verify_cli.sh:
//! a gray structured content image, a warm two-tone color reference,
//! and a striped style reference.
//!
//! Usage: cargo run -p colorway --example make_fixtures -- <dir>

use colorway::image::{save_image, ImageBuffer};

fn build(side: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> ImageBuffer {
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            data.extend_from_slice(&f(x, y));
        }
    }
    ImageBuffer::new(side, side, 3, data).expect("fixture dims")
}

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| ".".into());
    let dir = std::path::PathBuf::from(dir);
    std::fs::create_dir_all(&dir).expect("create fixture dir");

    let content = build(32, |x, y| {
        let mut v = 40.0 + 170.0 * x as f64 / 31.0;
        if (6..14).contains(&x) && (6..14).contains(&y) {
            v = 25.0;
        }
        if (20..28).contains(&x) && (18..26).contains(&y) {
            v = 230.0;
        }
        [v, v, v]
    });
    // Warm two-tone with in-block variation so recoloring keeps texture.
    let warm = build(32, |x, y| {
        let j = ((x * 5 + y * 3) % 7) as f64 * 4.0;
        if (x / 8 + y / 8) % 2 == 0 {
            [205.0 + j / 2.0, 115.0 + j, 40.0 + j]
        } else {
            [155.0 + j, 60.0 + j / 2.0, 70.0 + j]
        }
    });
    let stripes = build(32, |x, y| {
        let v = if (x + y) % 8 < 4 { 200.0 } else { 70.0 };
        [v, v, v]
    });

    save_image(&content, dir.join("content.ppm")).expect("write content");
    save_image(&warm, dir.join("warm.ppm")).expect("write warm");
    save_image(&stripes, dir.join("stripes.ppm")).expect("write stripes");
    println!("fixtures written to {}", dir.display());
}
