//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured figure. Run with
//! `cargo test -p colorway --test acceptance -- --nocapture` to see them.

use colorway::attention::{attend, gated_attend, AttentionFeatures, InjectionGate};
use colorway::clustering::kmeans_colors;
use colorway::clustering::ClusterSpace;
use colorway::colorspace::{lab_to_rgb_scalar, rgb_to_lab_scalar};
use colorway::diffusion::{
    ddim_invert, ddim_sample, image_to_latent, latent_to_image, make_schedule,
    run_conditioned_denoise, ColorContext, InterventionSchedule, LatentCode, ToyDenoiser,
};
use colorway::image::{BinaryMask, ImageBuffer};
use colorway::linalg::Mat;
use colorway::pipeline::{
    changed_fraction, chroma_delta_e, dominant_palette, edge_map, lab_swap, run_full, ImageSource,
    JobMode, RunConfig, TransferJob, DEFAULT_EDGE_THRESHOLD,
};
use colorway::recolor::{masked_recolor, recolor_transform, SampleMatrix};
use colorway::Correspondence;
use std::time::Instant;

fn pass(name: &str, detail: String) {
    println!("ACCEPTANCE {name}: PASS ({detail})");
}

fn gaussian_matrix(n: usize, d: usize, seed: u64, spread: &[f64]) -> SampleMatrix {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        for s in spread.iter().take(d) {
            let g: f64 = rng.sample(rand_distr::StandardNormal);
            data.push(g * s);
        }
    }
    let mut m = SampleMatrix::new(n, d, data);
    // Cross-channel mixing so covariances are not diagonal.
    let vals: Vec<f64> = (0..n)
        .flat_map(|i| {
            let r = m.row(i).to_vec();
            [r[0], r[1] + 0.4 * r[0], r[2] - 0.3 * r[1]]
        })
        .collect();
    m = SampleMatrix::new(n, d, vals);
    m
}

fn stats(m: &SampleMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (n, d) = (m.n(), m.d());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (s, v) in mean.iter_mut().zip(m.row(i)) {
            *s += v / n as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..n {
        let r = m.row(i);
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / (n as f64 - 1.0);
            }
        }
    }
    (mean, cov)
}

#[test]
fn criterion_01_covariance_matching() {
    let x = gaussian_matrix(1000, 3, 11, &[1.0, 2.2, 0.6]);
    let reference = gaussian_matrix(1000, 3, 12, &[0.8, 0.4, 1.7]);

    let start = Instant::now();
    let out = recolor_transform(&x, &reference, 0.0).unwrap();
    let elapsed = start.elapsed();

    let (ref_mean, ref_cov) = stats(&reference);
    let (out_mean, out_cov) = stats(&out);
    let mut mean_err = 0.0f64;
    for c in 0..3 {
        mean_err = mean_err.max((out_mean[c] - ref_mean[c]).abs());
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            num += (out_cov[a][b] - ref_cov[a][b]).powi(2);
            den += ref_cov[a][b].powi(2);
        }
    }
    let rel_frob = (num / den).sqrt();

    assert!(
        rel_frob <= 1e-5,
        "relative Frobenius covariance error {rel_frob}"
    );
    assert!(mean_err <= 1e-8, "mean error {mean_err}");
    assert!(elapsed.as_millis() < 50, "runtime {elapsed:?}");
    pass(
        "covariance matching",
        format!("cov err {rel_frob:.2e}, mean err {mean_err:.2e}, {elapsed:?}"),
    );
}

#[test]
fn criterion_02_recolor_locality() {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut violations = 0usize;

    for _trial in 0..100 {
        let n = 120;
        let gen_data: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ref_data: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gen = SampleMatrix::new(n, 3, gen_data);
        let reference = SampleMatrix::new(n, 3, ref_data);

        // Random disjoint generation masks; remainder stays outside.
        let mut m0 = vec![false; n];
        let mut m1 = vec![false; n];
        for i in 0..n {
            match rng.random_range(0..3) {
                0 => m0[i] = true,
                1 => m1[i] = true,
                _ => {}
            }
        }
        let masks_gen = [
            BinaryMask::new(n, 1, m0).unwrap(),
            BinaryMask::new(n, 1, m1).unwrap(),
        ];
        // Random reference masks, re-rolled until both have 2+ samples.
        let masks_ref = loop {
            let r0: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            let r1: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            let a = BinaryMask::new(n, 1, r0).unwrap();
            let b = BinaryMask::new(n, 1, r1).unwrap();
            if a.count_true() >= 2 && b.count_true() >= 2 {
                break [a, b];
            }
        };
        let corr = Correspondence {
            pairs: vec![(0, 0), (1, 1)],
        };
        let out = masked_recolor(&gen, &reference, &masks_gen, &masks_ref, &corr, 1e-5).unwrap();

        for i in 0..n {
            if !masks_gen[0].get(i) && !masks_gen[1].get(i) {
                let same = out
                    .row(i)
                    .iter()
                    .zip(gen.row(i))
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                if !same {
                    violations += 1;
                }
            }
        }
    }
    assert_eq!(violations, 0, "{violations} outside-mask pixels changed");
    pass("recolor locality", "100 trials, 0 violations".into());
}

#[test]
fn criterion_03_lab_round_trip_grid() {
    let start = Instant::now();
    let mut max_err = 0.0f64;
    for ri in 0..32 {
        for gi in 0..32 {
            for bi in 0..32 {
                let rgb = [
                    ri as f64 * 255.0 / 31.0,
                    gi as f64 * 255.0 / 31.0,
                    bi as f64 * 255.0 / 31.0,
                ];
                let back = lab_to_rgb_scalar(rgb_to_lab_scalar(rgb));
                for c in 0..3 {
                    max_err = max_err.max((back[c] - rgb[c]).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(max_err <= 0.5, "max channel error {max_err}");
    assert!(elapsed.as_secs_f64() < 5.0, "runtime {elapsed:?}");
    pass(
        "lab round trip",
        format!("32768 grid points, max err {max_err:.2e}, {elapsed:?}"),
    );
}

#[test]
fn criterion_04_lab_swap_reproduction() {
    // Gray-textured style source: high-contrast checker over a ramp.
    let (w, h) = (48, 48);
    let mut data = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let base = if (x / 6 + y / 6) % 2 == 0 {
                100.0
            } else {
                170.0
            };
            let v = base + 15.0 * x as f64 / w as f64;
            data.extend_from_slice(&[v, v, v]);
        }
    }
    let texture = ImageBuffer::new(w, h, 3, data).unwrap();
    let source_color = [190.0, 130.0, 120.0];
    let solid = ImageBuffer::solid_rgb(16, 16, source_color);

    let out = lab_swap(&texture, &solid).unwrap();

    let edges_texture = edge_map(&texture, DEFAULT_EDGE_THRESHOLD).unwrap();
    let edges_out = edge_map(&out, DEFAULT_EDGE_THRESHOLD).unwrap();
    let changed = changed_fraction(&edges_texture, &edges_out);
    assert!(
        changed <= 0.02,
        "edge maps differ on {:.3}% of pixels",
        changed * 100.0
    );

    let palette = dominant_palette(&out, 1).unwrap();
    let hue_err = chroma_delta_e(palette.dominant(), source_color);
    assert!(hue_err <= 10.0, "dominant hue delta-E {hue_err}");
    pass(
        "lab swap reproduction",
        format!(
            "edge diff {:.2}%, hue delta-E {hue_err:.2}",
            changed * 100.0
        ),
    );
}

#[test]
fn criterion_05_ddim_round_trip() {
    let mut details = Vec::new();
    for (steps, tol) in [(50usize, 1e-4f64), (500, 1e-3)] {
        let sched = make_schedule(steps, 1e-4, 0.02).unwrap();
        let x = LatentCode::random_normal(24, 3, 31);
        let toy = ToyDenoiser::new(x.clone(), sched.clone());
        let z_t = ddim_invert(&x, &toy, &sched).unwrap();
        let back = ddim_sample(&z_t, &toy, &sched).unwrap();
        let err = back.max_abs_diff(&x);
        assert!(err <= tol, "T={steps}: round-trip error {err} above {tol}");
        details.push(format!("T={steps} err {err:.2e}"));
    }
    pass("ddim round trip", details.join(", "));
}

#[test]
fn criterion_06_gate_exactness() {
    let total = 50usize;
    let threshold = 4 * total / 5;

    let mk = |seed: u64| {
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 1000) as f64 / 500.0 - 1.0
        };
        Mat::from_vec(6, 4, (0..24).map(|_| next()).collect())
    };
    let gen = AttentionFeatures {
        q: mk(1),
        k: mk(2),
        v: mk(3),
    };
    let reference = AttentionFeatures {
        q: mk(4),
        k: mk(5),
        v: mk(6),
    };
    let own = attend(&gen.q, &gen.k, &gen.v).unwrap();
    let injected = attend(&gen.q, &reference.k, &reference.v).unwrap();
    assert_ne!(
        own.data(),
        injected.data(),
        "fixtures must distinguish the branches"
    );

    let mut switch_at = None;
    for t in 1..=total {
        let out = gated_attend(&gen, &reference, InjectionGate::new(threshold, t)).unwrap();
        let is_own = out.data() == own.data();
        let is_injected = out.data() == injected.data();
        assert!(
            is_own ^ is_injected,
            "t={t}: output must equal exactly one pure evaluation"
        );
        if is_injected && switch_at.is_none() {
            switch_at = Some(t);
        }
        assert_eq!(is_injected, t > threshold, "t={t}: wrong branch");
    }
    assert_eq!(switch_at, Some(threshold + 1));
    pass(
        "gate exactness",
        format!(
            "T={total}, switch at step {} (threshold {threshold})",
            threshold + 1
        ),
    );
}

#[test]
fn criterion_07_window_disjointness() {
    let err = InterventionSchedule::new(0.0, 0.9, 0.8, true, true);
    assert!(err.is_err(), "color end beyond style start must fail");

    let defaults = InterventionSchedule::defaults(true, true);
    let total = 50;
    let color_steps: Vec<usize> = (1..=total)
        .filter(|&s| defaults.color_active(s, total))
        .collect();
    let style_steps: Vec<usize> = (1..=total)
        .filter(|&s| defaults.style_gate(s, total).is_open())
        .collect();
    assert_eq!(color_steps, (1..=40).collect::<Vec<_>>());
    assert_eq!(style_steps, (41..=50).collect::<Vec<_>>());
    pass(
        "window disjointness",
        "overlap rejected; defaults: color steps 1-40, style steps 41-50 of 50".into(),
    );
}

#[test]
fn criterion_08_end_to_end_color_transfer() {
    let (w, h) = (12, 12);
    let steps = 40;
    let sched = make_schedule(steps, 1e-4, 0.02).unwrap();

    let gray = ImageBuffer::solid_rgb(w, h, [128.0, 128.0, 128.0]);
    let blue = [30.0, 60.0, 230.0];
    let blue_img = ImageBuffer::solid_rgb(w, h, blue);

    let content_latent = image_to_latent(&gray);
    let ref_latent = image_to_latent(&blue_img);
    let toy = ToyDenoiser::new(content_latent.clone(), sched.clone());
    let ref_toy = ToyDenoiser::new(ref_latent.clone(), sched.clone());
    let ref_start = ddim_invert(&ref_latent, &ref_toy, &sched).unwrap();
    let z_start = LatentCode::random_normal(w * h, 3, 0);

    // Color branch on, window through the final step (the analytic toy
    // denoiser pulls the prediction back to its target on every
    // unrecolored step, so persistence needs the window open to the end).
    let ctx = ColorContext {
        ref_denoiser: &ref_toy,
        ref_start,
        dims: (w, h),
        k: 1,
        kmeans_seed: 0,
        eps: 1e-5,
        stride: 1,
        space: ClusterSpace::Rgb,
        object_mask_gen: None,
        object_mask_ref: None,
    };
    let on = InterventionSchedule::new(0.0, 1.0, 1.0, true, false).unwrap();
    let run = run_conditioned_denoise(&z_start, &toy, &sched, &on, Some(&ctx), None).unwrap();
    let out = latent_to_image(&run.final_latent, (w, h)).unwrap();
    let palette = dominant_palette(&out, 1).unwrap();
    let lab_out = rgb_to_lab_scalar(palette.dominant());
    let lab_blue = rgb_to_lab_scalar(blue);
    let de = ((lab_out[0] - lab_blue[0]).powi(2)
        + (lab_out[1] - lab_blue[1]).powi(2)
        + (lab_out[2] - lab_blue[2]).powi(2))
    .sqrt();
    assert!(de <= 5.0, "dominant color delta-E {de} from reference blue");

    // Branch off: bit-transparent, lands exactly on the gray target.
    let off = InterventionSchedule::disabled();
    let run_off = run_conditioned_denoise(&z_start, &toy, &sched, &off, None, None).unwrap();
    let err = run_off.final_latent.max_abs_diff(&content_latent);
    assert!(err <= 1e-9, "disabled branch drifted {err} from the target");
    pass(
        "end-to-end color transfer",
        format!("on: delta-E {de:.2e} to blue; off: {err:.1e} from gray target"),
    );
}

#[test]
fn criterion_09_disentanglement() {
    let mk_pattern = |seed: u64, palette: [[f64; 3]; 2]| {
        let (w, h) = (12, 12);
        let mut data = Vec::new();
        for i in 0..w * h {
            let pick = (i as u64 * 2654435761 + seed) % 97 < 48;
            let c = if pick { palette[0] } else { palette[1] };
            data.extend_from_slice(&c);
        }
        ImageSource::Memory(ImageBuffer::new(w, h, 3, data).unwrap())
    };

    let cfg = RunConfig {
        k: 2,
        steps: 25,
        ..RunConfig::default()
    };
    let base_color = mk_pattern(1, [[220.0, 40.0, 30.0], [30.0, 40.0, 220.0]]);
    let base_style = mk_pattern(2, [[40.0, 40.0, 40.0], [210.0, 210.0, 210.0]]);

    let mut job = TransferJob::new(JobMode::ColorStyle, cfg);
    job.content = Some(ImageSource::Toy {
        width: 12,
        height: 12,
    });
    job.color_ref = Some(base_color.clone());
    job.style_ref = Some(base_style.clone());

    // Vary the style reference: merged a/b must not move by a single bit.
    let style_variants = [
        base_style.clone(),
        mk_pattern(7, [[90.0, 90.0, 90.0], [160.0, 160.0, 160.0]]),
        mk_pattern(8, [[10.0, 10.0, 10.0], [250.0, 250.0, 250.0]]),
    ];
    let mut ab_reference: Option<(Vec<u64>, Vec<u64>)> = None;
    for variant in &style_variants {
        let mut j = job.clone();
        j.style_ref = Some(variant.clone());
        let full = run_full(&j).unwrap();
        let a_bits: Vec<u64> = full.merged_lab.a.iter().map(|v| v.to_bits()).collect();
        let b_bits: Vec<u64> = full.merged_lab.b.iter().map(|v| v.to_bits()).collect();
        match &ab_reference {
            None => ab_reference = Some((a_bits, b_bits)),
            Some((a0, b0)) => {
                assert_eq!(&a_bits, a0, "a channel moved when style_ref changed");
                assert_eq!(&b_bits, b0, "b channel moved when style_ref changed");
            }
        }
    }

    // Vary the color reference: merged L must not move by a single bit.
    let color_variants = [
        base_color,
        mk_pattern(9, [[30.0, 200.0, 40.0], [200.0, 200.0, 30.0]]),
        mk_pattern(10, [[120.0, 30.0, 170.0], [20.0, 160.0, 160.0]]),
    ];
    let mut l_reference: Option<Vec<u64>> = None;
    for variant in &color_variants {
        let mut j = job.clone();
        j.color_ref = Some(variant.clone());
        let full = run_full(&j).unwrap();
        let l_bits: Vec<u64> = full.merged_lab.l.iter().map(|v| v.to_bits()).collect();
        match &l_reference {
            None => l_reference = Some(l_bits),
            Some(l0) => assert_eq!(&l_bits, l0, "L channel moved when color_ref changed"),
        }
    }
    pass(
        "disentanglement",
        "3 style variants: a/b bit-identical; 3 color variants: L bit-identical".into(),
    );
}

#[test]
fn criterion_10_kmeans_determinism_and_recovery() {
    // Three solid blocks.
    let (w, h) = (12, 6);
    let mut data = Vec::new();
    for _y in 0..h {
        for x in 0..w {
            let c = match x / 4 {
                0 => [255.0, 0.0, 0.0],
                1 => [0.0, 255.0, 0.0],
                _ => [0.0, 0.0, 255.0],
            };
            data.extend_from_slice(&c);
        }
    }
    let img = ImageBuffer::new(w, h, 3, data).unwrap();

    let first = kmeans_colors(&img, 3, None, 5).unwrap();
    let mut misassigned = 0;
    for cluster in &first.clusters {
        for &i in &cluster.member_indices {
            let p = img.pixel(i);
            if [p[0], p[1], p[2]] != cluster.centroid {
                misassigned += 1;
            }
        }
    }
    assert_eq!(misassigned, 0, "{misassigned} pixels in the wrong cluster");

    for _ in 0..9 {
        assert_eq!(kmeans_colors(&img, 3, None, 5).unwrap(), first);
    }
    pass(
        "kmeans determinism and recovery",
        "3 blocks recovered exactly, 10 identical seeded runs".into(),
    );
}
