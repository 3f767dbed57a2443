//! Deterministic DDIM sampling and inversion with a pluggable denoiser,
//! plus the timestep-windowed color and style interventions that run
//! inside the denoising loop.
//!
//! Timestep conventions: noise levels are indexed `t = T..1` (T is pure
//! noise, 0 is the clean latent); the loop processes them in that order,
//! so the step taking `z_t` to `z_{t-1}` has 1-based progress index
//! `s = T - t + 1`. Intervention windows are stored as progress fractions:
//! the color window covers early denoising (default: everything until a
//! fifth of the steps remain) and the style window the final fifth, and
//! the two may never overlap.

use crate::attention::{attend, gated_attend, AttentionError, AttentionFeatures, InjectionGate};
use crate::clustering::{
    correspond_by_proportion, kmeans_colors_in, masks_from_clusters, ClusterError, ClusterSpace,
};
use crate::image::{BinaryMask, ImageBuffer};
use crate::linalg::Mat;
use crate::recolor::{masked_recolor, RecolorError, SampleMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("timestep {t} outside [1, {t_max}]")]
    TimestepOutOfRange { t: usize, t_max: usize },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error(
        "intervention windows overlap: color ends at {color_end} but style starts at {style_start}"
    )]
    WindowOverlap { color_end: f64, style_start: f64 },
    #[error("invalid intervention window: {0}")]
    InvalidWindow(String),
    #[error("{0} conditioning enabled but no context supplied")]
    MissingContext(&'static str),
    #[error("latent shape {n}x{d} does not fit context dims {dims:?}")]
    ContextShapeMismatch {
        n: usize,
        d: usize,
        dims: (usize, usize),
    },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Recolor(#[from] RecolorError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
}

/// Cumulative noise-schedule coefficients: `alpha_bar[t]` for `t = 0..=T`,
/// with `alpha_bar[0] = 1` and strictly decreasing values in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self, DiffusionError> {
        if alpha_bar.len() < 2 {
            return Err(DiffusionError::InvalidSchedule(
                "need at least one step".into(),
            ));
        }
        if alpha_bar[0] != 1.0 {
            return Err(DiffusionError::InvalidSchedule(
                "alpha_bar[0] must be 1".into(),
            ));
        }
        for w in alpha_bar.windows(2) {
            if !(w[1] > 0.0 && w[1] < w[0]) {
                return Err(DiffusionError::InvalidSchedule(
                    "alpha_bar must be strictly decreasing within (0, 1]".into(),
                ));
            }
        }
        Ok(NoiseSchedule { alpha_bar })
    }

    pub fn total_steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    #[inline]
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    fn check_t(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.total_steps() {
            return Err(DiffusionError::TimestepOutOfRange {
                t,
                t_max: self.total_steps(),
            });
        }
        Ok(())
    }
}

/// Linear beta schedule; `alpha_bar_t` is the running product of `1 - beta_i`.
/// Defaults elsewhere: T = 50, beta in `[1e-4, 0.02]`.
pub fn make_schedule(
    total_steps: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<NoiseSchedule, DiffusionError> {
    if total_steps == 0 {
        return Err(DiffusionError::InvalidSchedule(
            "T must be at least 1".into(),
        ));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DiffusionError::InvalidSchedule(format!(
            "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let mut alpha_bar = Vec::with_capacity(total_steps + 1);
    alpha_bar.push(1.0);
    let mut acc = 1.0;
    for i in 0..total_steps {
        let beta = if total_steps == 1 {
            beta_start
        } else {
            beta_start + (beta_end - beta_start) * i as f64 / (total_steps - 1) as f64
        };
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    NoiseSchedule::from_alpha_bar(alpha_bar)
}

/// N samples by D channels of latent state; finite by invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    values: Mat,
}

impl LatentCode {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Self {
        LatentCode {
            values: Mat::from_vec(n, d, values),
        }
    }

    pub fn from_mat(values: Mat) -> Self {
        LatentCode { values }
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        LatentCode {
            values: Mat::zeros(n, d),
        }
    }

    /// Seeded standard-normal latent, the usual z_T initialization.
    pub fn random_normal(n: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        LatentCode::new(n, d, data)
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

    pub fn is_finite(&self) -> bool {
        self.values.is_finite()
    }

    pub fn max_abs_diff(&self, other: &LatentCode) -> f64 {
        self.values
            .data()
            .iter()
            .zip(other.values.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_samples(&self) -> SampleMatrix {
        SampleMatrix::from_mat(self.values.clone())
    }

    pub fn from_samples(samples: &SampleMatrix) -> Self {
        LatentCode {
            values: samples.values().clone(),
        }
    }

    fn map2(&self, other: &LatentCode, f: impl Fn(f64, f64) -> f64) -> LatentCode {
        let data = self
            .values
            .data()
            .iter()
            .zip(other.values.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        LatentCode::new(self.n(), self.d(), data)
    }
}

/// Maps latent values in `[-1, 1]` onto the `[0, 255]` pixel range; the toy
/// path's stand-in for decoding.
pub fn latent_to_image(
    z: &LatentCode,
    dims: (usize, usize),
) -> Result<ImageBuffer, DiffusionError> {
    let (w, h) = dims;
    if w * h != z.n() {
        return Err(DiffusionError::ContextShapeMismatch {
            n: z.n(),
            d: z.d(),
            dims,
        });
    }
    let data = z
        .values()
        .data()
        .iter()
        .map(|&v| (v + 1.0) * 127.5)
        .collect();
    ImageBuffer::new(w, h, z.d(), data).map_err(|_| DiffusionError::ContextShapeMismatch {
        n: z.n(),
        d: z.d(),
        dims,
    })
}

/// Inverse of [`latent_to_image`].
pub fn image_to_latent(img: &ImageBuffer) -> LatentCode {
    let data = img.data().iter().map(|&p| p / 127.5 - 1.0).collect();
    LatentCode::new(img.pixel_count(), img.channels(), data)
}

/// Reference features handed to a denoiser for one step of key/value
/// injection.
pub struct StyleFeed<'a> {
    /// Clean-latent prediction of the reference stream at the current step.
    pub ref_z0: &'a LatentCode,
    pub gate: InjectionGate,
}

/// Noise prediction plus optional attention diagnostics (the gated
/// attention map, when the denoiser ran one).
pub struct DenoiserOutput {
    pub eps: LatentCode,
    pub attention: Option<Mat>,
}

/// Pluggable noise predictor: deterministic for fixed inputs, output shape
/// equals input shape. `style` is opaque conditioning a denoiser may ignore.
pub trait Denoiser {
    fn predict_noise(
        &self,
        z: &LatentCode,
        t: usize,
        style: Option<&StyleFeed<'_>>,
    ) -> Result<DenoiserOutput, DiffusionError>;
}

/// `z0 = (z_t - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t)`.
pub fn predict_z0(
    z_t: &LatentCode,
    eps: &LatentCode,
    sched: &NoiseSchedule,
    t: usize,
) -> Result<LatentCode, DiffusionError> {
    sched.check_t(t)?;
    let ab = sched.alpha_bar(t);
    Ok(predict_z0_parts(z_t, eps, ab))
}

fn predict_z0_parts(z_t: &LatentCode, eps: &LatentCode, alpha_bar_t: f64) -> LatentCode {
    let a = alpha_bar_t.sqrt();
    let b = (1.0 - alpha_bar_t).sqrt();
    z_t.map2(eps, |z, e| (z - b * e) / a)
}

/// Deterministic DDIM update: `z_{t-1} = sqrt(alpha_bar_{t-1}) z0
/// + sqrt(1 - alpha_bar_{t-1}) eps` (the sigma = 0 case).
pub fn ddim_step(
    z_t: &LatentCode,
    eps: &LatentCode,
    sched: &NoiseSchedule,
    t: usize,
) -> Result<LatentCode, DiffusionError> {
    let z0 = predict_z0(z_t, eps, sched, t)?;
    ddim_step_from_z0(&z0, eps, sched, t)
}

/// The recombination half of [`ddim_step`], for callers that modify the
/// z0 prediction before stepping.
pub fn ddim_step_from_z0(
    z0: &LatentCode,
    eps: &LatentCode,
    sched: &NoiseSchedule,
    t: usize,
) -> Result<LatentCode, DiffusionError> {
    sched.check_t(t)?;
    Ok(ddim_step_parts(z0, eps, sched.alpha_bar(t - 1)))
}

fn ddim_step_parts(z0: &LatentCode, eps: &LatentCode, alpha_bar_prev: f64) -> LatentCode {
    let a = alpha_bar_prev.sqrt();
    let b = (1.0 - alpha_bar_prev).sqrt();
    z0.map2(eps, |z, e| a * z + b * e)
}

/// Plain deterministic DDIM sampling from `z_T` down to the clean latent.
pub fn ddim_sample(
    z_start: &LatentCode,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
) -> Result<LatentCode, DiffusionError> {
    let mut z = z_start.clone();
    for t in (1..=sched.total_steps()).rev() {
        let out = denoiser.predict_noise(&z, t, None)?;
        z = ddim_step(&z, &out.eps, sched, t)?;
        if !z.is_finite() {
            return Err(DiffusionError::NonFinite("ddim_sample latent"));
        }
    }
    Ok(z)
}

/// Runs the DDIM recurrence in reverse (`t = 1..T`), producing a `z_T`
/// that sampling forward with the same denoiser maps back to `z0`.
///
/// Each hop evaluates the denoiser at the source noise level; the first
/// hop starts at level 0 where epsilon prediction is undefined, so it
/// evaluates at level 1 instead (the usual first-order approximation).
pub fn ddim_invert(
    z0: &LatentCode,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
) -> Result<LatentCode, DiffusionError> {
    if !z0.is_finite() {
        return Err(DiffusionError::NonFinite("ddim_invert input"));
    }
    let mut z = z0.clone();
    for t in 1..=sched.total_steps() {
        let eval_t = (t - 1).max(1);
        let out = denoiser.predict_noise(&z, eval_t, None)?;
        let z0_pred = predict_z0_parts(&z, &out.eps, sched.alpha_bar(t - 1));
        z = z0_pred.map2(&out.eps, |z0v, e| {
            let ab = sched.alpha_bar(t);
            ab.sqrt() * z0v + (1.0 - ab).sqrt() * e
        });
        if !z.is_finite() {
            return Err(DiffusionError::NonFinite("ddim_invert latent"));
        }
    }
    Ok(z)
}

/// Analytic epsilon predictor that steers DDIM toward a fixed target:
/// `eps(z_t, t) = (z_t - sqrt(alpha_bar_t) target) / sqrt(1 - alpha_bar_t)`,
/// which makes the z0 prediction equal the target at every `t >= 1`.
#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    target: LatentCode,
    sched: NoiseSchedule,
}

impl ToyDenoiser {
    pub fn new(target: LatentCode, sched: NoiseSchedule) -> Self {
        ToyDenoiser { target, sched }
    }

    pub fn target(&self) -> &LatentCode {
        &self.target
    }

    fn base_eps(&self, z: &LatentCode, t: usize) -> Result<LatentCode, DiffusionError> {
        self.sched.check_t(t)?;
        let ab = self.sched.alpha_bar(t);
        let a = ab.sqrt();
        let b = (1.0 - ab).sqrt();
        Ok(z.map2(&self.target, |zv, x| (zv - a * x) / b))
    }
}

impl Denoiser for ToyDenoiser {
    fn predict_noise(
        &self,
        z: &LatentCode,
        t: usize,
        _style: Option<&StyleFeed<'_>>,
    ) -> Result<DenoiserOutput, DiffusionError> {
        Ok(DenoiserOutput {
            eps: self.base_eps(z, t)?,
            attention: None,
        })
    }
}

/// Width of the attention head used by [`AttentiveToyDenoiser`].
const TOY_HEAD_WIDTH: usize = 4;
/// Fixed seed for the toy projection weights; part of the model, not config.
const TOY_PROJECTION_SEED: u64 = 7;

/// Toy denoiser with one self-attention layer over luma tokens of the
/// clean-latent prediction.
///
/// When the style gate is open, the injected attention output (reference
/// keys and values, generation queries) is compared against the
/// generation's own attention, and the difference shifts the predicted
/// clean latent by `strength` in every channel. With the gate closed, or
/// when reference features equal the generation's, the prediction is the
/// plain toy trajectory bit for bit.
#[derive(Debug, Clone)]
pub struct AttentiveToyDenoiser {
    base: ToyDenoiser,
    w_q: Mat,
    w_k: Mat,
    w_v: Mat,
    w_o: Mat,
    strength: f64,
}

impl AttentiveToyDenoiser {
    pub fn new(target: LatentCode, sched: NoiseSchedule, strength: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(TOY_PROJECTION_SEED);
        let mut proj = |rows: usize, cols: usize| {
            let data = (0..rows * cols)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.6)
                .collect();
            Mat::from_vec(rows, cols, data)
        };
        AttentiveToyDenoiser {
            base: ToyDenoiser::new(target, sched),
            w_q: proj(1, TOY_HEAD_WIDTH),
            w_k: proj(1, TOY_HEAD_WIDTH),
            w_v: proj(1, TOY_HEAD_WIDTH),
            w_o: proj(TOY_HEAD_WIDTH, 1),
            strength,
        }
    }

    /// Clean-latent prediction of the unperturbed toy trajectory.
    pub fn base_z0(&self, z: &LatentCode, t: usize) -> Result<LatentCode, DiffusionError> {
        let eps = self.base.base_eps(z, t)?;
        Ok(predict_z0_parts(z, &eps, self.base.sched.alpha_bar(t)))
    }

    /// Luma tokens of a latent: one value per sample.
    pub fn tokens(&self, latent: &LatentCode) -> Mat {
        let n = latent.n();
        let mut tokens = Mat::zeros(n, 1);
        for i in 0..n {
            let row = latent.values().row(i);
            let v = if latent.d() == 3 {
                0.299 * row[0] + 0.587 * row[1] + 0.114 * row[2]
            } else {
                row.iter().sum::<f64>() / latent.d() as f64
            };
            tokens.set(i, 0, v);
        }
        tokens
    }

    /// Projects tokens to the attention feature triple.
    pub fn features(&self, tokens: &Mat) -> AttentionFeatures {
        AttentionFeatures {
            q: tokens.matmul(&self.w_q),
            k: tokens.matmul(&self.w_k),
            v: tokens.matmul(&self.w_v),
        }
    }
}

impl Denoiser for AttentiveToyDenoiser {
    fn predict_noise(
        &self,
        z: &LatentCode,
        t: usize,
        style: Option<&StyleFeed<'_>>,
    ) -> Result<DenoiserOutput, DiffusionError> {
        let feed = match style {
            Some(feed) if feed.gate.is_open() => feed,
            _ => return self.base.predict_noise(z, t, None),
        };
        let gen_tokens = self.tokens(&self.base_z0(z, t)?);
        let ref_tokens = self.tokens(feed.ref_z0);
        let gen_feats = self.features(&gen_tokens);
        let ref_feats = self.features(&ref_tokens);
        let injected = gated_attend(&gen_feats, &ref_feats, feed.gate)?;
        let own = attend(&gen_feats.q, &gen_feats.k, &gen_feats.v)?;

        // Per-token shift = w_o projection of the attention difference,
        // applied equally to every channel of the clean prediction.
        let n = z.n();
        let d = z.d();
        let mut shifted = Mat::zeros(n, d);
        for i in 0..n {
            let mut delta = 0.0;
            for j in 0..TOY_HEAD_WIDTH {
                delta += (injected.get(i, j) - own.get(i, j)) * self.w_o.get(j, 0);
            }
            let shift = self.strength * delta;
            for c in 0..d {
                shifted.set(i, c, self.base.target.values().get(i, c) + shift);
            }
        }
        let ab = self.base.sched.alpha_bar(t);
        let a = ab.sqrt();
        let b = (1.0 - ab).sqrt();
        let eps = z.map2(&LatentCode::from_mat(shifted), |zv, x| (zv - a * x) / b);
        Ok(DenoiserOutput {
            eps,
            attention: Some(injected),
        })
    }
}

/// The disjoint intervention windows, stored as progress fractions of the
/// denoising run. Color runs over `(t_start_color, t_end_color]`, style
/// strictly after `t_start_style`; `t_end_color <= t_start_style` is
/// enforced at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterventionSchedule {
    t_start_color: f64,
    t_end_color: f64,
    t_start_style: f64,
    pub color_enabled: bool,
    pub style_enabled: bool,
}

impl InterventionSchedule {
    pub fn new(
        t_start_color: f64,
        t_end_color: f64,
        t_start_style: f64,
        color_enabled: bool,
        style_enabled: bool,
    ) -> Result<Self, DiffusionError> {
        for (name, v) in [
            ("t_start_color", t_start_color),
            ("t_end_color", t_end_color),
            ("t_start_style", t_start_style),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DiffusionError::InvalidWindow(format!(
                    "{name} = {v} outside [0, 1]"
                )));
            }
        }
        if t_start_color > t_end_color {
            return Err(DiffusionError::InvalidWindow(format!(
                "color window starts at {t_start_color} after it ends at {t_end_color}"
            )));
        }
        if t_end_color > t_start_style {
            return Err(DiffusionError::WindowOverlap {
                color_end: t_end_color,
                style_start: t_start_style,
            });
        }
        Ok(InterventionSchedule {
            t_start_color,
            t_end_color,
            t_start_style,
            color_enabled,
            style_enabled,
        })
    }

    /// Standard windows: color through the first four fifths of denoising,
    /// style over the final fifth.
    pub fn defaults(color_enabled: bool, style_enabled: bool) -> Self {
        InterventionSchedule::new(0.0, 0.8, 0.8, color_enabled, style_enabled)
            .expect("default windows are valid")
    }

    pub fn disabled() -> Self {
        InterventionSchedule::defaults(false, false)
    }

    pub fn color_window(&self) -> (f64, f64) {
        (self.t_start_color, self.t_end_color)
    }

    pub fn style_start(&self) -> f64 {
        self.t_start_style
    }

    /// Style threshold as a progress-step index for a run of `total` steps.
    pub fn style_threshold_steps(&self, total: usize) -> usize {
        (self.t_start_style * total as f64).round() as usize
    }

    /// Whether the color intervention applies at 1-based progress step
    /// `step` of `total`.
    pub fn color_active(&self, step: usize, total: usize) -> bool {
        if !self.color_enabled {
            return false;
        }
        let start = (self.t_start_color * total as f64).round() as usize;
        let end = (self.t_end_color * total as f64).round() as usize;
        step > start && step <= end
    }

    /// The injection gate for 1-based progress step `step` of `total`.
    pub fn style_gate(&self, step: usize, total: usize) -> InjectionGate {
        InjectionGate::new(self.style_threshold_steps(total), step)
    }
}

/// Reference stream and clustering configuration for the color branch.
pub struct ColorContext<'a> {
    pub ref_denoiser: &'a dyn Denoiser,
    /// Inverted reference latent, advanced in lockstep with the generation.
    pub ref_start: LatentCode,
    /// Latent-as-image dimensions (width, height); `w * h` = sample count.
    pub dims: (usize, usize),
    pub k: usize,
    pub kmeans_seed: u64,
    /// Whitening regularizer for the per-region recolor transform.
    pub eps: f64,
    /// Apply the recolor every `stride`-th color-window step.
    pub stride: usize,
    pub space: ClusterSpace,
    /// Optional object masks standing in for attention-derived masks.
    pub object_mask_gen: Option<BinaryMask>,
    pub object_mask_ref: Option<BinaryMask>,
}

/// Reference stream for the style branch.
pub struct StyleContext<'a> {
    pub ref_denoiser: &'a dyn Denoiser,
    pub ref_start: LatentCode,
}

/// Everything one denoising step exposes for inspection.
pub struct StepTrace {
    /// Noise level consumed by this step (T down to 1).
    pub t: usize,
    /// 1-based progress index (1 = noisiest step).
    pub progress: usize,
    /// Latent entering the step.
    pub z_in: LatentCode,
    /// Clean-latent prediction after any color intervention.
    pub z0: LatentCode,
    /// Reference z0 handed to the denoiser when style was fed.
    pub ref_style_z0: Option<LatentCode>,
    pub color_applied: bool,
    pub style_open: bool,
    /// Gated attention output, when the denoiser ran one.
    pub attention: Option<Mat>,
}

pub struct DenoiseRun {
    pub final_latent: LatentCode,
    pub steps: Vec<StepTrace>,
}

/// The windowed DDIM loop. Inside the color window each step's z0
/// prediction is decoded, clustered against the reference z0, masked-
/// recolored, and recombined before the step proceeds; inside the style
/// window the denoiser sees reference features through an open gate.
/// Outside both windows every step is exactly the unconditioned update.
pub fn run_conditioned_denoise(
    z_start: &LatentCode,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    isched: &InterventionSchedule,
    color_ctx: Option<&ColorContext<'_>>,
    style_ctx: Option<&StyleContext<'_>>,
) -> Result<DenoiseRun, DiffusionError> {
    if isched.color_enabled && color_ctx.is_none() {
        return Err(DiffusionError::MissingContext("color"));
    }
    if isched.style_enabled && style_ctx.is_none() {
        return Err(DiffusionError::MissingContext("style"));
    }
    if let Some(ctx) = color_ctx {
        let (w, h) = ctx.dims;
        if w * h != z_start.n() {
            return Err(DiffusionError::ContextShapeMismatch {
                n: z_start.n(),
                d: z_start.d(),
                dims: ctx.dims,
            });
        }
    }
    if !z_start.is_finite() {
        return Err(DiffusionError::NonFinite("initial latent"));
    }

    let total = sched.total_steps();
    let mut z = z_start.clone();
    let mut ref_color = color_ctx.map(|c| c.ref_start.clone());
    let mut ref_style = style_ctx.map(|c| c.ref_start.clone());
    let mut steps = Vec::with_capacity(total);
    let mut color_ordinal = 0usize;

    for t in (1..=total).rev() {
        let progress = total - t + 1;
        let z_in = z.clone();

        // Advance the reference trajectories in lockstep, keeping their
        // current-step z0 predictions for injection and recoloring.
        let style_z0 = match (style_ctx, ref_style.as_mut()) {
            (Some(ctx), Some(rz)) => {
                let out = ctx.ref_denoiser.predict_noise(rz, t, None)?;
                let z0r = predict_z0(rz, &out.eps, sched, t)?;
                *rz = ddim_step_from_z0(&z0r, &out.eps, sched, t)?;
                Some(z0r)
            }
            _ => None,
        };
        let color_z0 = match (color_ctx, ref_color.as_mut()) {
            (Some(ctx), Some(rz)) => {
                let out = ctx.ref_denoiser.predict_noise(rz, t, None)?;
                let z0r = predict_z0(rz, &out.eps, sched, t)?;
                *rz = ddim_step_from_z0(&z0r, &out.eps, sched, t)?;
                Some(z0r)
            }
            _ => None,
        };

        let gate = isched.style_gate(progress, total);
        let style_open = isched.style_enabled && style_z0.is_some() && gate.is_open();
        let out = {
            let feed = match (&style_z0, isched.style_enabled) {
                (Some(z0r), true) => Some(StyleFeed { ref_z0: z0r, gate }),
                _ => None,
            };
            denoiser.predict_noise(&z, t, feed.as_ref())?
        };
        let mut z0 = predict_z0(&z, &out.eps, sched, t)?;

        let mut color_applied = false;
        if isched.color_active(progress, total) {
            let ctx = color_ctx.expect("validated above");
            color_ordinal += 1;
            if (color_ordinal - 1).is_multiple_of(ctx.stride.max(1)) {
                z0 = recolor_prediction(&z0, color_z0.as_ref().expect("color ref present"), ctx)?;
                color_applied = true;
            }
        }

        z = ddim_step_from_z0(&z0, &out.eps, sched, t)?;
        if !z.is_finite() {
            return Err(DiffusionError::NonFinite("denoising latent"));
        }

        steps.push(StepTrace {
            t,
            progress,
            z_in,
            z0,
            ref_style_z0: style_z0,
            color_applied,
            style_open,
            attention: out.attention,
        });
    }

    Ok(DenoiseRun {
        final_latent: z,
        steps,
    })
}

/// One color-window intervention: cluster the decoded generation and
/// reference predictions, rank-match the clusters, and recolor each
/// matched region of the generation latent.
fn recolor_prediction(
    z0_gen: &LatentCode,
    z0_ref: &LatentCode,
    ctx: &ColorContext<'_>,
) -> Result<LatentCode, DiffusionError> {
    let img_gen = latent_to_image(z0_gen, ctx.dims)?;
    let img_ref = latent_to_image(z0_ref, ctx.dims)?;
    let cs_gen = kmeans_colors_in(
        &img_gen,
        ctx.k,
        ctx.object_mask_gen.as_ref(),
        ctx.kmeans_seed,
        ctx.space,
    )?;
    let cs_ref = kmeans_colors_in(
        &img_ref,
        ctx.k,
        ctx.object_mask_ref.as_ref(),
        ctx.kmeans_seed,
        ctx.space,
    )?;
    let corr = correspond_by_proportion(&cs_gen, &cs_ref)?;
    let masks_gen = masks_from_clusters(&cs_gen);
    let masks_ref = masks_from_clusters(&cs_ref);
    let recolored = masked_recolor(
        &z0_gen.to_samples(),
        &z0_ref.to_samples(),
        &masks_gen,
        &masks_ref,
        &corr,
        ctx.eps,
    )?;
    Ok(LatentCode::from_samples(&recolored))
}
