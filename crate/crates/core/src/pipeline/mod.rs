//! Two-branch orchestration: the color branch recolors latents inside the
//! DDIM loop, the style branch injects reference attention features, and a
//! full run merges the two in LAB space (L from style, a/b from color).
//!
//! Each branch constructs its own intervention schedule with the other
//! branch's window collapsed; the no-overlap rule binds whenever color and
//! style act inside one denoising run. Note that under the analytic toy
//! denoiser the clean-latent prediction snaps back to the target, so color
//! interventions persist to the output only while the window is open —
//! `color_window_end = 1.0` keeps the transfer through the final step.

pub mod config;
pub mod metrics;

pub use config::{LumaMode, RunConfig};
pub use metrics::{
    changed_fraction, chroma_delta_e, dominant_palette, edge_map, palette_distance, Palette,
    PaletteEntry, PaletteMetric, DEFAULT_EDGE_THRESHOLD,
};

use crate::clustering::{
    correspond_by_proportion, kmeans_colors_in, masks_from_clusters, ClusterError,
};
use crate::colorspace::{
    gray_to_rgb, lab_to_rgb, lightness_image, merge_l_ab, rgb_to_lab, to_grayscale, ColorError,
    LabImage,
};
use crate::diffusion::{
    ddim_invert, image_to_latent, latent_to_image, make_schedule, run_conditioned_denoise,
    AttentiveToyDenoiser, ColorContext, DenoiseRun, DiffusionError, InterventionSchedule,
    LatentCode, StyleContext, ToyDenoiser,
};
use crate::image::{load_image, resize_bilinear, ImageBuffer, ImageError};
use crate::recolor::{masked_recolor, RecolorError, SampleMatrix};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Recolor(#[from] RecolorError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error("config error: {0}")]
    Config(String),
    #[error("mode requires {0}")]
    MissingReference(&'static str),
    #[error("palette sizes differ: {0} vs {1}")]
    PaletteSizeMismatch(usize, usize),
}

/// Where a job input comes from: a file, an in-memory buffer, or the
/// built-in procedural toy target.
#[derive(Debug, Clone)]
pub enum ImageSource {
    Path(PathBuf),
    Memory(ImageBuffer),
    Toy { width: usize, height: usize },
}

impl ImageSource {
    pub fn resolve(&self) -> Result<ImageBuffer, PipelineError> {
        match self {
            ImageSource::Path(p) => Ok(load_image(p)?),
            ImageSource::Memory(img) => Ok(img.clone()),
            ImageSource::Toy { width, height } => Ok(toy_target_image(*width, *height)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobMode {
    ColorOnly,
    StyleOnly,
    ColorStyle,
    LabSwap,
    RecolorImage,
}

/// One unit of CLI work: a mode, its inputs, and the run configuration.
#[derive(Debug, Clone)]
pub struct TransferJob {
    pub mode: JobMode,
    pub content: Option<ImageSource>,
    pub color_ref: Option<ImageSource>,
    pub style_ref: Option<ImageSource>,
    /// Optional object masks restricting where clustering and recoloring
    /// apply (generation / reference side).
    pub object_mask_gen: Option<ImageSource>,
    pub object_mask_ref: Option<ImageSource>,
    pub config: RunConfig,
}

impl TransferJob {
    pub fn new(mode: JobMode, config: RunConfig) -> Self {
        TransferJob {
            mode,
            content: None,
            color_ref: None,
            style_ref: None,
            object_mask_gen: None,
            object_mask_ref: None,
            config,
        }
    }
}

/// Output of one branch run: the decoded image plus the full step trace.
pub struct BranchResult {
    pub image: ImageBuffer,
    pub run: DenoiseRun,
    pub dims: (usize, usize),
}

/// Output of a full (color + style) run, keeping the pre-clamp LAB merge
/// for inspection.
pub struct FullResult {
    pub image: ImageBuffer,
    pub merged_lab: LabImage,
    pub color: BranchResult,
    pub style: BranchResult,
}

/// Neutral procedural content used by `toy:WxH` jobs: a horizontal
/// luminance ramp with one dark and one light rectangle, so there are
/// edges to track and plenty of distinct values to cluster.
pub fn toy_target_image(width: usize, height: usize) -> ImageBuffer {
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let ramp = 40.0 + 176.0 * x as f64 / (width.max(2) - 1) as f64;
            let in_dark =
                x >= width / 8 && x < 3 * width / 8 && y >= height / 8 && y < 3 * height / 8;
            let in_light = x >= 5 * width / 8
                && x < 7 * width / 8
                && y >= 5 * height / 8
                && y < 7 * height / 8;
            let v = if in_dark {
                25.0
            } else if in_light {
                235.0
            } else {
                ramp
            };
            data.extend_from_slice(&[v, v, v]);
        }
    }
    ImageBuffer::new(width, height, 3, data).expect("toy target dims")
}

/// The shared setup of both branches: content resolved to latent dims,
/// the schedule, and the seeded initial latent.
struct ToyRun {
    sched: crate::diffusion::NoiseSchedule,
    dims: (usize, usize),
    content_latent: LatentCode,
}

fn prepare_run(job: &TransferJob) -> Result<ToyRun, PipelineError> {
    let content_src = job
        .content
        .as_ref()
        .ok_or(PipelineError::MissingReference("content"))?;
    let dims = match content_src {
        ImageSource::Toy { width, height } => (*width, *height),
        _ => (job.config.latent_size, job.config.latent_size),
    };
    let content = content_src.resolve()?;
    let content = ensure_rgb(&content)?;
    let resized = resize_bilinear(&content, dims.0, dims.1);
    let sched = make_schedule(job.config.steps, job.config.beta_start, job.config.beta_end)?;
    Ok(ToyRun {
        sched,
        dims,
        content_latent: image_to_latent(&resized),
    })
}

fn ensure_rgb(img: &ImageBuffer) -> Result<ImageBuffer, PipelineError> {
    if img.channels() == 3 {
        Ok(img.clone())
    } else {
        Ok(gray_to_rgb(img)?)
    }
}

fn resolve_ref_latent(
    src: &ImageSource,
    dims: (usize, usize),
) -> Result<LatentCode, PipelineError> {
    let img = ensure_rgb(&src.resolve()?)?;
    let resized = resize_bilinear(&img, dims.0, dims.1);
    Ok(image_to_latent(&resized))
}

fn resolve_object_mask(
    src: &Option<ImageSource>,
    dims: (usize, usize),
) -> Result<Option<crate::image::BinaryMask>, PipelineError> {
    let Some(src) = src else { return Ok(None) };
    let img = src.resolve()?;
    let gray = if img.channels() == 3 {
        to_grayscale(&img)?
    } else {
        img
    };
    let resized = resize_bilinear(&gray, dims.0, dims.1);
    let bits = resized.data().iter().map(|&v| v > 127.0).collect();
    Ok(Some(crate::image::BinaryMask::new(dims.0, dims.1, bits)?))
}

/// Color conditioning: DDIM-invert the color reference, then denoise the
/// content with the masked recoloring active inside the color window.
pub fn run_color_branch(job: &TransferJob) -> Result<BranchResult, PipelineError> {
    let color_src = job
        .color_ref
        .as_ref()
        .ok_or(PipelineError::MissingReference("color-ref"))?;
    let setup = prepare_run(job)?;
    let cfg = &job.config;

    let ref_latent = resolve_ref_latent(color_src, setup.dims)?;
    let ref_toy = ToyDenoiser::new(ref_latent.clone(), setup.sched.clone());
    let ref_start = ddim_invert(&ref_latent, &ref_toy, &setup.sched)?;

    let gen_toy = ToyDenoiser::new(setup.content_latent.clone(), setup.sched.clone());
    let z_start = LatentCode::random_normal(setup.dims.0 * setup.dims.1, 3, cfg.seed_latent);

    let ctx = ColorContext {
        ref_denoiser: &ref_toy,
        ref_start,
        dims: setup.dims,
        k: cfg.k,
        kmeans_seed: cfg.seed_kmeans,
        eps: cfg.eps,
        stride: cfg.cluster_stride,
        space: cfg.kmeans_space,
        object_mask_gen: resolve_object_mask(&job.object_mask_gen, setup.dims)?,
        object_mask_ref: resolve_object_mask(&job.object_mask_ref, setup.dims)?,
    };
    // Style is off in this run, so its window collapses to the end.
    let isched = InterventionSchedule::new(0.0, cfg.color_window_end, 1.0, true, false)?;
    let run = run_conditioned_denoise(&z_start, &gen_toy, &setup.sched, &isched, Some(&ctx), None)?;
    let image = latent_to_image(&run.final_latent, setup.dims)?;
    Ok(BranchResult {
        image,
        run,
        dims: setup.dims,
    })
}

/// Style conditioning: grayscale the style reference, DDIM-invert it, and
/// denoise the content with gated attention injection over the final steps.
pub fn run_style_branch(job: &TransferJob) -> Result<BranchResult, PipelineError> {
    let style_src = job
        .style_ref
        .as_ref()
        .ok_or(PipelineError::MissingReference("style-ref"))?;
    let setup = prepare_run(job)?;
    let cfg = &job.config;

    // Approximate the reference's L channel, then feed it as a neutral image.
    let ref_img = ensure_rgb(&style_src.resolve()?)?;
    let luma = match cfg.luma_mode {
        LumaMode::Grayscale => to_grayscale(&ref_img)?,
        LumaMode::LabL => lightness_image(&ref_img)?,
    };
    let ref_gray = resize_bilinear(&gray_to_rgb(&luma)?, setup.dims.0, setup.dims.1);
    let ref_latent = image_to_latent(&ref_gray);
    let ref_toy = ToyDenoiser::new(ref_latent.clone(), setup.sched.clone());
    let ref_start = ddim_invert(&ref_latent, &ref_toy, &setup.sched)?;

    let gen_den = AttentiveToyDenoiser::new(
        setup.content_latent.clone(),
        setup.sched.clone(),
        cfg.style_strength,
    );
    let seed = if cfg.share_initial_latent {
        cfg.seed_latent
    } else {
        cfg.seed_latent.wrapping_add(1)
    };
    let z_start = LatentCode::random_normal(setup.dims.0 * setup.dims.1, 3, seed);

    let style_ctx = StyleContext {
        ref_denoiser: &ref_toy,
        ref_start,
    };
    // Color is off in this run, so its window collapses to the start.
    let isched = InterventionSchedule::new(0.0, 0.0, cfg.style_window_start, false, true)?;
    let run = run_conditioned_denoise(
        &z_start,
        &gen_den,
        &setup.sched,
        &isched,
        None,
        Some(&style_ctx),
    )?;
    let image = latent_to_image(&run.final_latent, setup.dims)?;
    Ok(BranchResult {
        image,
        run,
        dims: setup.dims,
    })
}

/// Runs both branches and merges them in LAB space: L from the style
/// branch, a/b from the color branch.
pub fn run_full(job: &TransferJob) -> Result<FullResult, PipelineError> {
    if job.color_ref.is_none() {
        return Err(PipelineError::MissingReference("color-ref"));
    }
    if job.style_ref.is_none() {
        return Err(PipelineError::MissingReference("style-ref"));
    }
    let color = run_color_branch(job)?;
    let style = run_style_branch(job)?;
    let merged_lab = merge_l_ab(&rgb_to_lab(&style.image)?, &rgb_to_lab(&color.image)?)?;
    let image = lab_to_rgb(&merged_lab);
    Ok(FullResult {
        image,
        merged_lab,
        color,
        style,
    })
}

/// Direct reproduction of the LAB-swap experiment: L channel from the
/// first image, a/b channels from the second. The color source is
/// bilinearly resized to the style source's dimensions when they differ.
pub fn lab_swap(
    style_img: &ImageBuffer,
    color_img: &ImageBuffer,
) -> Result<ImageBuffer, PipelineError> {
    let style_rgb = ensure_rgb(style_img)?;
    let color_rgb = ensure_rgb(color_img)?;
    let color_resized = resize_bilinear(&color_rgb, style_rgb.width(), style_rgb.height());
    let merged = merge_l_ab(&rgb_to_lab(&style_rgb)?, &rgb_to_lab(&color_resized)?)?;
    Ok(lab_to_rgb(&merged))
}

/// The diffusion-free pixel path: cluster both images, rank-match the
/// clusters, and recolor the content region by region.
pub fn recolor_image(
    content: &ImageBuffer,
    reference: &ImageBuffer,
    cfg: &RunConfig,
) -> Result<ImageBuffer, PipelineError> {
    let content_rgb = ensure_rgb(content)?;
    let reference_rgb = ensure_rgb(reference)?;
    let ref_resized = resize_bilinear(&reference_rgb, content_rgb.width(), content_rgb.height());

    let cs_gen = kmeans_colors_in(&content_rgb, cfg.k, None, cfg.seed_kmeans, cfg.kmeans_space)?;
    let cs_ref = kmeans_colors_in(&ref_resized, cfg.k, None, cfg.seed_kmeans, cfg.kmeans_space)?;
    let corr = correspond_by_proportion(&cs_gen, &cs_ref)?;
    let masks_gen = masks_from_clusters(&cs_gen);
    let masks_ref = masks_from_clusters(&cs_ref);
    let out = masked_recolor(
        &SampleMatrix::from_image(&content_rgb),
        &SampleMatrix::from_image(&ref_resized),
        &masks_gen,
        &masks_ref,
        &corr,
        cfg.eps,
    )?;
    Ok(ImageBuffer::new(
        content_rgb.width(),
        content_rgb.height(),
        3,
        out.values().data().to_vec(),
    )?)
}

/// Final image plus any per-timestep decoded z0 intermediates.
pub struct JobOutput {
    pub image: ImageBuffer,
    pub intermediates: Vec<(usize, ImageBuffer)>,
}

/// Dispatches a job by mode; the CLI wraps this.
pub fn execute(job: &TransferJob) -> Result<JobOutput, PipelineError> {
    match job.mode {
        JobMode::ColorOnly => {
            let out = run_color_branch(job)?;
            let intermediates = decode_trace(&out)?;
            Ok(JobOutput {
                image: out.image,
                intermediates,
            })
        }
        JobMode::StyleOnly => {
            let out = run_style_branch(job)?;
            let intermediates = decode_trace(&out)?;
            Ok(JobOutput {
                image: out.image,
                intermediates,
            })
        }
        JobMode::ColorStyle => {
            let out = run_full(job)?;
            let intermediates = decode_trace(&out.color)?;
            Ok(JobOutput {
                image: out.image,
                intermediates,
            })
        }
        JobMode::LabSwap => {
            let style = job
                .style_ref
                .as_ref()
                .ok_or(PipelineError::MissingReference("style-ref"))?
                .resolve()?;
            let color = job
                .color_ref
                .as_ref()
                .ok_or(PipelineError::MissingReference("color-ref"))?
                .resolve()?;
            Ok(JobOutput {
                image: lab_swap(&style, &color)?,
                intermediates: Vec::new(),
            })
        }
        JobMode::RecolorImage => {
            let content = job
                .content
                .as_ref()
                .ok_or(PipelineError::MissingReference("content"))?
                .resolve()?;
            let reference = job
                .color_ref
                .as_ref()
                .ok_or(PipelineError::MissingReference("color-ref"))?
                .resolve()?;
            Ok(JobOutput {
                image: recolor_image(&content, &reference, &job.config)?,
                intermediates: Vec::new(),
            })
        }
    }
}

fn decode_trace(branch: &BranchResult) -> Result<Vec<(usize, ImageBuffer)>, PipelineError> {
    branch
        .run
        .steps
        .iter()
        .map(|s| Ok((s.progress, latent_to_image(&s.z0, branch.dims)?)))
        .collect()
}
