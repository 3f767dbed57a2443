//! Whitening-recoloring covariance matching and its mask-aware, per-region
//! application.
//!
//! The transform works on any N x D sample matrix: D = 3 when driven from
//! the pixel path, D = latent channel count in the diffusion path. Whitening
//! maps the samples to zero mean and identity covariance via the symmetric
//! eigendecomposition of the covariance; recoloring then imposes a reference
//! set's covariance and mean. The masked variant applies the transform
//! independently per matched cluster region and leaves every sample outside
//! the union of generation masks bit-identical to its input.

use crate::clustering::Correspondence;
use crate::image::{BinaryMask, ImageBuffer};
use crate::linalg::{sym_eigen, Mat};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RecolorError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample matrix contains non-finite values")]
    NonFinite,
    #[error("channel count mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("reference covariance is rank-deficient and eps is zero")]
    DegenerateReference,
    #[error("generation masks overlap at pixel {0}")]
    MaskOverlap(usize),
    #[error("reference region for pair {0} has {1} samples (need at least 2)")]
    EmptyRefRegion(usize, usize),
    #[error(
        "mask list lengths differ from correspondence: gen {gen}, ref {reference}, pairs {pairs}"
    )]
    MaskListMismatch {
        gen: usize,
        reference: usize,
        pairs: usize,
    },
    #[error("mask pixel count {0} does not match sample count {1}")]
    MaskSampleMismatch(usize, usize),
}

/// N samples by D channels, row-major. Mean and covariance are derived
/// from the values on demand and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    values: Mat,
}

impl SampleMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Self {
        SampleMatrix {
            values: Mat::from_vec(n, d, values),
        }
    }

    pub fn from_mat(values: Mat) -> Self {
        SampleMatrix { values }
    }

    /// Pixels of an image as samples: N = width * height, D = channels.
    pub fn from_image(img: &ImageBuffer) -> Self {
        SampleMatrix {
            values: Mat::from_vec(img.pixel_count(), img.channels(), img.data().to_vec()),
        }
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn d(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn is_finite(&self) -> bool {
        self.values.is_finite()
    }

    /// Per-channel mean.
    pub fn mean(&self) -> Vec<f64> {
        let (n, d) = (self.n(), self.d());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        mean
    }

    /// Unbiased sample covariance (divisor n - 1).
    pub fn covariance(&self) -> Mat {
        let (n, d) = (self.n(), self.d());
        let mean = self.mean();
        let mut cov = Mat::zeros(d, d);
        for i in 0..n {
            let row = self.row(i);
            for a in 0..d {
                let da = row[a] - mean[a];
                for b in a..d {
                    let v = cov.get(a, b) + da * (row[b] - mean[b]);
                    cov.set(a, b, v);
                }
            }
        }
        let scale = 1.0 / (n as f64 - 1.0);
        for a in 0..d {
            for b in a..d {
                let v = cov.get(a, b) * scale;
                cov.set(a, b, v);
                cov.set(b, a, v);
            }
        }
        cov
    }

    /// Samples selected by a mask, in pixel order.
    pub fn gather(&self, mask: &BinaryMask) -> Result<SampleMatrix, RecolorError> {
        if mask.bits().len() != self.n() {
            return Err(RecolorError::MaskSampleMismatch(
                mask.bits().len(),
                self.n(),
            ));
        }
        let d = self.d();
        let mut data = Vec::new();
        for (i, &keep) in mask.bits().iter().enumerate() {
            if keep {
                data.extend_from_slice(self.row(i));
            }
        }
        Ok(SampleMatrix::new(data.len() / d, d, data))
    }

    /// Writes `src` rows back into the masked positions, in pixel order.
    fn scatter(&mut self, mask: &BinaryMask, src: &SampleMatrix) {
        let mut s = 0usize;
        for (i, &keep) in mask.bits().iter().enumerate() {
            if keep {
                let row = src.row(s).to_vec();
                for (c, v) in row.iter().enumerate() {
                    self.values.set(i, c, *v);
                }
                s += 1;
            }
        }
    }
}

/// Relative eigenvalue floor below which a direction counts as degenerate.
const DEGENERACY_REL: f64 = 1e-12;

struct EigenParts {
    vectors: Mat,
    values: Vec<f64>,
}

fn covariance_eigen(x: &SampleMatrix) -> Result<EigenParts, RecolorError> {
    let cov = x.covariance();
    let eig = sym_eigen(&cov).map_err(|_| RecolorError::NonFinite)?;
    // Negative eigenvalues are numerical noise; clamp before any sqrt.
    let values = eig.values.iter().map(|&v| v.max(0.0)).collect();
    Ok(EigenParts {
        vectors: eig.vectors,
        values,
    })
}

/// Maps the samples to zero mean and identity covariance (restricted to
/// the non-degenerate eigen-subspace when eps is zero).
///
/// Computed as `(Lambda + eps I)^(-1/2) U^T (x - mu)` from the
/// eigendecomposition `U Lambda U^T` of the covariance.
pub fn whiten(x: &SampleMatrix, eps: f64) -> Result<SampleMatrix, RecolorError> {
    let (n, d) = (x.n(), x.d());
    if n < 2 {
        return Err(RecolorError::TooFewSamples(n));
    }
    if !x.is_finite() {
        return Err(RecolorError::NonFinite);
    }
    let mean = x.mean();
    let parts = covariance_eigen(x)?;
    let lambda_max = parts.values.first().copied().unwrap_or(0.0);
    let floor = lambda_max * DEGENERACY_REL;

    // Rows of W: scale_j * u_j, so whitened = centered * W^T.
    let mut w = Mat::zeros(d, d);
    for j in 0..d {
        let t = parts.values[j] + eps;
        let scale = if t > floor && t > 0.0 {
            1.0 / t.sqrt()
        } else {
            0.0
        };
        for c in 0..d {
            w.set(j, c, scale * parts.vectors.get(c, j));
        }
    }

    let mut out = Mat::zeros(n, d);
    for i in 0..n {
        let row = x.row(i);
        for j in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += w.get(j, c) * (row[c] - mean[c]);
            }
            out.set(i, j, acc);
        }
    }
    Ok(SampleMatrix::from_mat(out))
}

/// Whitens `x`, then imposes the reference's covariance and mean:
/// `U_ref Lambda_ref^(1/2) whiten(x) + mu_ref`.
///
/// With eps = 0 a rank-deficient reference covariance is an error; a
/// positive eps tolerates it (the transform then collapses the degenerate
/// directions toward the reference mean).
pub fn recolor_transform(
    x: &SampleMatrix,
    reference: &SampleMatrix,
    eps: f64,
) -> Result<SampleMatrix, RecolorError> {
    if x.d() != reference.d() {
        return Err(RecolorError::DimMismatch(x.d(), reference.d()));
    }
    if reference.n() < 2 {
        return Err(RecolorError::TooFewSamples(reference.n()));
    }
    if !reference.is_finite() {
        return Err(RecolorError::NonFinite);
    }
    let d = x.d();
    let ref_mean = reference.mean();
    let parts = covariance_eigen(reference)?;
    let lambda_max = parts.values.first().copied().unwrap_or(0.0);
    if eps == 0.0 {
        let degenerate = parts
            .values
            .iter()
            .any(|&v| v <= lambda_max * DEGENERACY_REL || v == 0.0);
        if degenerate {
            return Err(RecolorError::DegenerateReference);
        }
    }

    let white = whiten(x, eps)?;

    // Coloring matrix B = U_ref Lambda_ref^(1/2); rows transform as y = B w + mu.
    let mut coloring = Mat::zeros(d, d);
    for r in 0..d {
        for j in 0..d {
            coloring.set(r, j, parts.vectors.get(r, j) * parts.values[j].sqrt());
        }
    }

    let n = x.n();
    let mut out = Mat::zeros(n, d);
    for i in 0..n {
        let w = white.row(i);
        for r in 0..d {
            let mut acc = ref_mean[r];
            for j in 0..d {
                acc += coloring.get(r, j) * w[j];
            }
            out.set(i, r, acc);
        }
    }
    Ok(SampleMatrix::from_mat(out))
}

/// Mask-aware recoloring: for each matched cluster pair, the samples under
/// the generation mask are replaced by the recolor transform of that region
/// against the matching reference region; samples outside the union of
/// generation masks are bit-identical to the input.
///
/// Generation masks must be pairwise disjoint and each matched reference
/// region needs at least 2 samples. A single-sample generation region
/// collapses to the reference region's mean.
pub fn masked_recolor(
    gen: &SampleMatrix,
    reference: &SampleMatrix,
    masks_gen: &[BinaryMask],
    masks_ref: &[BinaryMask],
    corr: &Correspondence,
    eps: f64,
) -> Result<SampleMatrix, RecolorError> {
    if gen.d() != reference.d() {
        return Err(RecolorError::DimMismatch(gen.d(), reference.d()));
    }
    let k = corr.pairs.len();
    if masks_gen.len() != k || masks_ref.len() != k {
        return Err(RecolorError::MaskListMismatch {
            gen: masks_gen.len(),
            reference: masks_ref.len(),
            pairs: k,
        });
    }
    for m in masks_gen {
        if m.bits().len() != gen.n() {
            return Err(RecolorError::MaskSampleMismatch(m.bits().len(), gen.n()));
        }
    }
    for m in masks_ref {
        if m.bits().len() != reference.n() {
            return Err(RecolorError::MaskSampleMismatch(
                m.bits().len(),
                reference.n(),
            ));
        }
    }
    // Disjointness keeps the per-pair writes independent.
    let mut seen = vec![false; gen.n()];
    for m in masks_gen {
        for (i, &b) in m.bits().iter().enumerate() {
            if b {
                if seen[i] {
                    return Err(RecolorError::MaskOverlap(i));
                }
                seen[i] = true;
            }
        }
    }

    let mut out = gen.clone();
    for (pair_idx, &(gi, ri)) in corr.pairs.iter().enumerate() {
        let m_gen = &masks_gen[gi];
        let m_ref = &masks_ref[ri];
        let ref_region = reference.gather(m_ref)?;
        if ref_region.n() < 2 {
            return Err(RecolorError::EmptyRefRegion(pair_idx, ref_region.n()));
        }
        let gen_region = gen.gather(m_gen)?;
        match gen_region.n() {
            0 => continue,
            1 => {
                let mean = ref_region.mean();
                out.scatter(m_gen, &SampleMatrix::new(1, gen.d(), mean));
            }
            _ => {
                let recolored = recolor_transform(&gen_region, &ref_region, eps)?;
                out.scatter(m_gen, &recolored);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::Correspondence;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Independent mean/covariance recomputation used as the oracle side.
    fn oracle_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = rows.len();
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n as f64;
            }
        }
        let mut cov = vec![vec![0.0; d]; d];
        for r in rows {
            for a in 0..d {
                for b in 0..d {
                    cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / (n as f64 - 1.0);
                }
            }
        }
        (mean, cov)
    }

    fn rows_of(m: &SampleMatrix) -> Vec<Vec<f64>> {
        (0..m.n()).map(|i| m.row(i).to_vec()).collect()
    }

    fn gaussian_samples(n: usize, d: usize, seed: u64, spread: &[f64]) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            for s in spread.iter().take(d) {
                let g: f64 = rng.sample(StandardNormal);
                data.push(g * s);
            }
        }
        // Mix channels so the covariance is not axis-aligned.
        let mut sm = SampleMatrix::new(n, d, data);
        if d >= 2 {
            for i in 0..n {
                let a = sm.values.get(i, 0);
                let b = sm.values.get(i, 1);
                sm.values.set(i, 1, b + 0.5 * a);
            }
        }
        sm
    }

    #[test]
    fn whiten_produces_identity_covariance() {
        let x = gaussian_samples(1000, 3, 1, &[2.0, 0.7, 1.3]);
        let w = whiten(&x, 0.0).unwrap();
        let (mean, cov) = oracle_stats(&rows_of(&w));
        for m in &mean {
            assert!(m.abs() < 1e-10, "mean {m}");
        }
        let mut frob = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let target = if a == b { 1.0 } else { 0.0 };
                frob += (cov[a][b] - target).powi(2);
            }
        }
        assert!(frob.sqrt() <= 1e-6, "Frobenius error {}", frob.sqrt());
    }

    #[test]
    fn whiten_of_identity_covariance_is_rotation() {
        // Build samples with exactly zero mean and identity sample covariance.
        let x = gaussian_samples(500, 3, 2, &[1.0, 1.0, 1.0]);
        let w1 = whiten(&x, 0.0).unwrap();
        // w1 has identity covariance by construction; whitening again must
        // keep covariance at identity (a pure rotation).
        let w2 = whiten(&w1, 0.0).unwrap();
        let (_, cov) = oracle_stats(&rows_of(&w2));
        for a in 0..3 {
            for b in 0..3 {
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((cov[a][b] - target).abs() < 1e-9);
            }
        }
        // Row norms are preserved under rotation.
        for i in 0..w1.n() {
            let n1: f64 = w1.row(i).iter().map(|v| v * v).sum();
            let n2: f64 = w2.row(i).iter().map(|v| v * v).sum();
            assert!((n1 - n2).abs() < 1e-9);
        }
    }

    #[test]
    fn whiten_constant_matrix_is_all_zeros() {
        let x = SampleMatrix::new(10, 3, vec![4.0; 30]);
        let w = whiten(&x, 1e-5).unwrap();
        assert!(w.values().data().iter().all(|&v| v == 0.0));
        let w0 = whiten(&x, 0.0).unwrap();
        assert!(w0.values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn whiten_rejects_tiny_and_non_finite_input() {
        let x = SampleMatrix::new(1, 3, vec![1.0, 2.0, 3.0]);
        assert_eq!(whiten(&x, 0.0), Err(RecolorError::TooFewSamples(1)));
        let bad = SampleMatrix::new(2, 2, vec![1.0, f64::NAN, 0.0, 1.0]);
        assert_eq!(whiten(&bad, 0.0), Err(RecolorError::NonFinite));
    }

    #[test]
    fn recolor_matches_reference_statistics() {
        let x = gaussian_samples(1000, 3, 3, &[1.0, 2.5, 0.4]);
        let r = gaussian_samples(1000, 3, 4, &[0.8, 0.3, 1.9]);
        let out = recolor_transform(&x, &r, 0.0).unwrap();

        let (ref_mean, ref_cov) = oracle_stats(&rows_of(&r));
        let (out_mean, out_cov) = oracle_stats(&rows_of(&out));
        for c in 0..3 {
            assert!((out_mean[c] - ref_mean[c]).abs() < 1e-8, "mean ch {c}");
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                num += (out_cov[a][b] - ref_cov[a][b]).powi(2);
                den += ref_cov[a][b].powi(2);
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 1e-5, "relative Frobenius error {rel}");
    }

    #[test]
    fn self_recolor_preserves_covariance() {
        let x = gaussian_samples(400, 3, 5, &[1.0, 0.6, 1.4]);
        let out = recolor_transform(&x, &x, 0.0).unwrap();
        let (x_mean, x_cov) = oracle_stats(&rows_of(&x));
        let (o_mean, o_cov) = oracle_stats(&rows_of(&out));
        for c in 0..3 {
            assert!((x_mean[c] - o_mean[c]).abs() < 1e-9);
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                num += (o_cov[a][b] - x_cov[a][b]).powi(2);
                den += x_cov[a][b].powi(2);
            }
        }
        assert!((num / den).sqrt() <= 1e-5);
    }

    #[test]
    fn solid_reference_collapses_to_its_mean() {
        let gray = SampleMatrix::new(6, 3, vec![128.0; 18]);
        let red = SampleMatrix::new(4, 3, [255.0, 0.0, 0.0].repeat(4));
        let out = recolor_transform(&gray, &red, 1e-5).unwrap();
        for i in 0..out.n() {
            assert_eq!(out.row(i), &[255.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn degenerate_reference_with_zero_eps_errors() {
        let x = gaussian_samples(50, 3, 6, &[1.0, 1.0, 1.0]);
        let solid = SampleMatrix::new(4, 3, vec![10.0; 12]);
        assert_eq!(
            recolor_transform(&x, &solid, 0.0),
            Err(RecolorError::DegenerateReference)
        );
        assert!(recolor_transform(&x, &solid, 1e-5).is_ok());
    }

    #[test]
    fn dim_mismatch_errors() {
        let a = SampleMatrix::new(4, 3, vec![0.0; 12]);
        let b = SampleMatrix::new(4, 2, vec![0.0; 8]);
        assert_eq!(
            recolor_transform(&a, &b, 0.0),
            Err(RecolorError::DimMismatch(3, 2))
        );
    }

    fn full_mask(n: usize, value: bool) -> BinaryMask {
        BinaryMask::filled(n, 1, value)
    }

    #[test]
    fn masked_k1_all_true_equals_plain_transform() {
        let gen = gaussian_samples(200, 3, 7, &[1.0, 0.5, 2.0]);
        let reference = gaussian_samples(200, 3, 8, &[0.4, 1.1, 0.9]);
        let corr = Correspondence {
            pairs: vec![(0, 0)],
        };
        let masked = masked_recolor(
            &gen,
            &reference,
            &[full_mask(200, true)],
            &[full_mask(200, true)],
            &corr,
            0.0,
        )
        .unwrap();
        let plain = recolor_transform(&gen, &reference, 0.0).unwrap();
        assert_eq!(masked, plain);
    }

    #[test]
    fn all_false_gen_masks_is_identity() {
        let gen = gaussian_samples(50, 3, 9, &[1.0, 1.0, 1.0]);
        let reference = gaussian_samples(50, 3, 10, &[1.0, 1.0, 1.0]);
        let corr = Correspondence {
            pairs: vec![(0, 0)],
        };
        let out = masked_recolor(
            &gen,
            &reference,
            &[full_mask(50, false)],
            &[full_mask(50, true)],
            &corr,
            0.0,
        )
        .unwrap();
        assert_eq!(out, gen);
    }

    #[test]
    fn two_region_means_follow_reference_regions() {
        // gen: two gray blocks (60 + 40 samples with tiny jitter to stay
        // non-degenerate); ref: red block (60) + blue block (40).
        let mut gen_data = Vec::new();
        for i in 0..100 {
            let base = if i < 60 { 100.0 } else { 160.0 };
            let j = (i % 7) as f64 * 0.5;
            gen_data.extend_from_slice(&[base + j, base - j, base + 0.25 * j]);
        }
        let gen = SampleMatrix::new(100, 3, gen_data);

        let mut ref_data = Vec::new();
        for i in 0..100 {
            let j = (i % 5) as f64;
            if i < 60 {
                ref_data.extend_from_slice(&[240.0 + j, 10.0 + 0.5 * j, 8.0 + 0.25 * j]);
            } else {
                ref_data.extend_from_slice(&[12.0 + 0.5 * j, 9.0 + 0.25 * j, 230.0 + j]);
            }
        }
        let reference = SampleMatrix::new(100, 3, ref_data);

        let gen_masks = [
            BinaryMask::from_indices(100, 1, &(0..60).collect::<Vec<_>>()),
            BinaryMask::from_indices(100, 1, &(60..100).collect::<Vec<_>>()),
        ];
        let ref_masks = [
            BinaryMask::from_indices(100, 1, &(0..60).collect::<Vec<_>>()),
            BinaryMask::from_indices(100, 1, &(60..100).collect::<Vec<_>>()),
        ];
        let corr = Correspondence {
            pairs: vec![(0, 0), (1, 1)],
        };
        let out = masked_recolor(&gen, &reference, &gen_masks, &ref_masks, &corr, 1e-5).unwrap();

        for (mask_idx, mask) in gen_masks.iter().enumerate() {
            let region = out.gather(mask).unwrap();
            let ref_region = reference.gather(&ref_masks[mask_idx]).unwrap();
            let got = region.mean();
            let want = ref_region.mean();
            for c in 0..3 {
                assert!(
                    (got[c] - want[c]).abs() < 1e-8,
                    "region {mask_idx} ch {c}: {} vs {}",
                    got[c],
                    want[c]
                );
            }
        }
    }

    #[test]
    fn untouched_samples_are_bit_identical() {
        let gen = gaussian_samples(120, 3, 11, &[1.0, 2.0, 0.5]);
        let reference = gaussian_samples(120, 3, 12, &[0.7, 0.9, 1.8]);
        let gen_mask = BinaryMask::from_indices(120, 1, &(10..40).collect::<Vec<_>>());
        let ref_mask = BinaryMask::from_indices(120, 1, &(50..110).collect::<Vec<_>>());
        let corr = Correspondence {
            pairs: vec![(0, 0)],
        };
        let out = masked_recolor(
            &gen,
            &reference,
            std::slice::from_ref(&gen_mask),
            &[ref_mask],
            &corr,
            1e-5,
        )
        .unwrap();
        for i in 0..120 {
            if !gen_mask.get(i) {
                assert_eq!(out.row(i), gen.row(i), "pixel {i} was touched");
            }
        }
    }

    #[test]
    fn overlapping_gen_masks_error() {
        let gen = gaussian_samples(20, 3, 13, &[1.0, 1.0, 1.0]);
        let reference = gaussian_samples(20, 3, 14, &[1.0, 1.0, 1.0]);
        let m1 = BinaryMask::from_indices(20, 1, &[1, 2, 3]);
        let m2 = BinaryMask::from_indices(20, 1, &[3, 4]);
        let corr = Correspondence {
            pairs: vec![(0, 0), (1, 1)],
        };
        let err = masked_recolor(
            &gen,
            &reference,
            &[m1, m2],
            &[full_mask(20, true), full_mask(20, true)],
            &corr,
            0.0,
        )
        .unwrap_err();
        assert_eq!(err, RecolorError::MaskOverlap(3));
    }

    #[test]
    fn empty_reference_region_errors() {
        let gen = gaussian_samples(20, 3, 15, &[1.0, 1.0, 1.0]);
        let reference = gaussian_samples(20, 3, 16, &[1.0, 1.0, 1.0]);
        let corr = Correspondence {
            pairs: vec![(0, 0)],
        };
        let err = masked_recolor(
            &gen,
            &reference,
            &[full_mask(20, true)],
            &[full_mask(20, false)],
            &corr,
            0.0,
        )
        .unwrap_err();
        assert_eq!(err, RecolorError::EmptyRefRegion(0, 0));
    }

    #[test]
    fn pair_order_does_not_change_output() {
        let gen = gaussian_samples(80, 3, 17, &[1.0, 0.8, 1.2]);
        let reference = gaussian_samples(80, 3, 18, &[0.5, 1.5, 0.9]);
        let gm = [
            BinaryMask::from_indices(80, 1, &(0..30).collect::<Vec<_>>()),
            BinaryMask::from_indices(80, 1, &(30..70).collect::<Vec<_>>()),
        ];
        let rm = [
            BinaryMask::from_indices(80, 1, &(0..40).collect::<Vec<_>>()),
            BinaryMask::from_indices(80, 1, &(40..80).collect::<Vec<_>>()),
        ];
        let fwd = Correspondence {
            pairs: vec![(0, 0), (1, 1)],
        };
        let rev = Correspondence {
            pairs: vec![(1, 1), (0, 0)],
        };
        let a = masked_recolor(&gen, &reference, &gm, &rm, &fwd, 1e-5).unwrap();
        let b = masked_recolor(&gen, &reference, &gm, &rm, &rev, 1e-5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn second_application_is_nearly_idempotent_on_statistics() {
        let gen = gaussian_samples(500, 3, 19, &[1.0, 2.0, 0.7]);
        let reference = gaussian_samples(500, 3, 20, &[0.9, 0.5, 1.6]);
        let corr = Correspondence {
            pairs: vec![(0, 0)],
        };
        let masks = [full_mask(500, true)];
        let once = masked_recolor(&gen, &reference, &masks, &masks, &corr, 0.0).unwrap();
        let twice = masked_recolor(&once, &reference, &masks, &masks, &corr, 0.0).unwrap();
        let (_, c1) = oracle_stats(&rows_of(&once));
        let (_, c2) = oracle_stats(&rows_of(&twice));
        let mut num = 0.0;
        let mut den = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                num += (c1[a][b] - c2[a][b]).powi(2);
                den += c1[a][b].powi(2);
            }
        }
        assert!((num / den).sqrt() < 1e-5);
    }
}
