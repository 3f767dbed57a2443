//! `cw` — disentangled color/style transfer from the command line.
//!
//! Exit codes: 0 success, 2 bad arguments or config, 3 I/O failure,
//! 4 numerical failure.

use clap::{Args, Parser, Subcommand};
use colorway::image::save_image;
use colorway::pipeline::{execute, ImageSource, JobMode, PipelineError, RunConfig, TransferJob};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cw",
    version,
    about = "Color/style conditioning toolkit: masked covariance recoloring, \
             LAB channel swaps, and a windowed DDIM toy harness"
)]
struct Cli {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Subcommand)]
enum Mode {
    /// Transfer reference colors via masked latent recoloring
    #[command(name = "color-only")]
    ColorOnly(JobArgs),
    /// Transfer reference style via gated attention injection
    #[command(name = "style-only")]
    StyleOnly(JobArgs),
    /// Both branches, merged in LAB space (L from style, a/b from color)
    #[command(name = "color+style")]
    ColorStyle(JobArgs),
    /// Merge the L channel of one image with the a/b channels of another
    #[command(name = "lab-swap")]
    LabSwap(JobArgs),
    /// Recolor an image directly in pixel space (no diffusion loop)
    #[command(name = "recolor-image")]
    RecolorImage(JobArgs),
}

impl Mode {
    fn job_mode(&self) -> JobMode {
        match self {
            Mode::ColorOnly(_) => JobMode::ColorOnly,
            Mode::StyleOnly(_) => JobMode::StyleOnly,
            Mode::ColorStyle(_) => JobMode::ColorStyle,
            Mode::LabSwap(_) => JobMode::LabSwap,
            Mode::RecolorImage(_) => JobMode::RecolorImage,
        }
    }

    fn args(&self) -> &JobArgs {
        match self {
            Mode::ColorOnly(a)
            | Mode::StyleOnly(a)
            | Mode::ColorStyle(a)
            | Mode::LabSwap(a)
            | Mode::RecolorImage(a) => a,
        }
    }
}

#[derive(Args)]
struct JobArgs {
    /// Content input: an image path or `toy:WxH` for the built-in pattern
    #[arg(long)]
    content: Option<String>,

    /// Color reference image
    #[arg(long = "color-ref")]
    color_ref: Option<PathBuf>,

    /// Style reference image
    #[arg(long = "style-ref")]
    style_ref: Option<PathBuf>,

    /// Flat key=value config file (CLI flags override file values)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output image path (.png, .ppm, or .pgm)
    #[arg(long)]
    out: PathBuf,

    /// Override the cluster count k
    #[arg(long)]
    k: Option<usize>,

    /// Override both the latent and k-means seeds
    #[arg(long)]
    seed: Option<u64>,

    /// Write per-timestep decoded z0 images into this directory
    #[arg(long = "dump-intermediates")]
    dump_intermediates: Option<PathBuf>,

    /// Object mask for the generation side (white = region of interest)
    #[arg(long = "mask-gen")]
    mask_gen: Option<PathBuf>,

    /// Object mask for the reference side
    #[arg(long = "mask-ref")]
    mask_ref: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("cw: {message}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), (u8, String)> {
    let args = cli.mode.args();

    let mut config = match &args.config {
        Some(path) => RunConfig::from_file(path).map_err(fail)?,
        None => RunConfig::default(),
    };
    if let Some(k) = args.k {
        config.k = k;
    }
    if let Some(seed) = args.seed {
        config.seed_latent = seed;
        config.seed_kmeans = seed;
    }
    config.validate().map_err(fail)?;

    let mut job = TransferJob::new(cli.mode.job_mode(), config);
    job.content = args
        .content
        .as_deref()
        .map(parse_content)
        .transpose()
        .map_err(fail)?;
    job.color_ref = args.color_ref.clone().map(ImageSource::Path);
    job.style_ref = args.style_ref.clone().map(ImageSource::Path);
    job.object_mask_gen = args.mask_gen.clone().map(ImageSource::Path);
    job.object_mask_ref = args.mask_ref.clone().map(ImageSource::Path);

    let output = execute(&job).map_err(fail)?;
    save_image(&output.image, &args.out).map_err(|e| fail(PipelineError::Image(e)))?;
    println!(
        "wrote {} ({}x{})",
        args.out.display(),
        output.image.width(),
        output.image.height()
    );

    if let Some(dir) = &args.dump_intermediates {
        if output.intermediates.is_empty() {
            eprintln!("cw: note: this mode has no per-timestep intermediates");
        } else {
            std::fs::create_dir_all(dir)
                .map_err(|e| (3u8, format!("cannot create {}: {e}", dir.display())))?;
            for (progress, img) in &output.intermediates {
                let path = dir.join(format!("step_{progress:03}.png"));
                save_image(img, &path).map_err(|e| fail(PipelineError::Image(e)))?;
            }
            println!(
                "wrote {} intermediates to {}",
                output.intermediates.len(),
                dir.display()
            );
        }
    }
    Ok(())
}

/// `toy:WxH` or an image path.
fn parse_content(spec: &str) -> Result<ImageSource, PipelineError> {
    if let Some(dims) = spec.strip_prefix("toy:") {
        let (w, h) = dims
            .split_once(['x', 'X'])
            .ok_or_else(|| PipelineError::Config(format!("bad toy spec {spec:?}, want toy:WxH")))?;
        let parse = |s: &str| {
            s.parse::<usize>()
                .ok()
                .filter(|&v| (2..=512).contains(&v))
                .ok_or_else(|| PipelineError::Config(format!("bad toy dimension {s:?}")))
        };
        Ok(ImageSource::Toy {
            width: parse(w)?,
            height: parse(h)?,
        })
    } else {
        Ok(ImageSource::Path(PathBuf::from(spec)))
    }
}

fn fail(err: PipelineError) -> (u8, String) {
    let code = match &err {
        PipelineError::Config(_) | PipelineError::MissingReference(_) => 2,
        PipelineError::Image(_) => 3,
        _ => 4,
    };
    (code, err.to_string())
}
