//! Disentangled color and style conditioning at desk scale: covariance-
//! matching masked recoloring, CIELAB color/style separation, and
//! timestep-gated attention injection inside a deterministic DDIM loop
//! with pluggable denoisers.
//!
//! The crate splits along the data flow:
//!
//! * [`image`] — pixel containers, masks, PNG/PNM I/O
//! * [`colorspace`] — RGB <-> CIELAB, grayscale, L/AB recombination
//! * [`clustering`] — k-means color clusters and proportion matching
//! * [`recolor`] — whitening-recoloring transform, masked per-region form
//! * [`attention`] — scaled dot-product attention with a gated KV switch
//! * [`diffusion`] — DDIM sampling/inversion and the windowed interventions
//! * [`pipeline`] — the two-branch jobs, palette metrics, config, CLI glue

// Index loops here usually walk several matrices in lockstep; iterator
// rewrites hide that.
#![allow(clippy::needless_range_loop)]

pub mod attention;
pub mod clustering;
pub mod colorspace;
pub mod diffusion;
pub mod image;
pub mod linalg;
pub mod pipeline;
pub mod recolor;

pub use attention::{attend, gated_attend, AttentionFeatures, InjectionGate};
pub use clustering::{
    correspond_by_proportion, kmeans_colors, masks_from_clusters, ClusterSet, Correspondence,
};
pub use colorspace::{lab_to_rgb, merge_l_ab, rgb_to_lab, to_grayscale, LabImage};
pub use diffusion::{
    ddim_invert, ddim_sample, ddim_step, make_schedule, predict_z0, run_conditioned_denoise,
    AttentiveToyDenoiser, Denoiser, InterventionSchedule, LatentCode, NoiseSchedule, ToyDenoiser,
};
pub use image::{apply_mask, load_image, save_image, BinaryMask, ImageBuffer};
pub use recolor::{masked_recolor, recolor_transform, whiten, SampleMatrix};
