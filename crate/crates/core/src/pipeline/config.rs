//! Flat key-value run configuration.
//!
//! One `key = value` pair per line, `#` starts a comment. Unknown keys are
//! errors so typos fail fast. CLI flags override file values.

use super::PipelineError;
use crate::clustering::ClusterSpace;
use std::path::Path;

/// How the style branch approximates the reference's L channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LumaMode {
    /// Rec. 601 grayscale of the reference.
    #[default]
    Grayscale,
    /// True CIELAB lightness, rescaled to pixel range.
    LabL,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Denoising step count T.
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Color cluster count.
    pub k: usize,
    /// Whitening regularizer.
    pub eps: f64,
    /// Color window end as a progress fraction.
    pub color_window_end: f64,
    /// Style window start as a progress fraction.
    pub style_window_start: f64,
    pub seed_latent: u64,
    pub seed_kmeans: u64,
    /// Recolor every n-th color-window step.
    pub cluster_stride: usize,
    /// Side length of the latent grid when the content is a file.
    pub latent_size: usize,
    /// Magnitude of the attention-driven shift in the style toy denoiser.
    pub style_strength: f64,
    pub luma_mode: LumaMode,
    pub kmeans_space: ClusterSpace,
    /// Use the same initial latent for both branches of a full run.
    pub share_initial_latent: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            steps: 50,
            beta_start: 1e-4,
            beta_end: 0.02,
            k: 3,
            eps: 1e-5,
            color_window_end: 0.8,
            style_window_start: 0.8,
            seed_latent: 0,
            seed_kmeans: 0,
            cluster_stride: 1,
            latent_size: 32,
            style_strength: 0.4,
            luma_mode: LumaMode::Grayscale,
            kmeans_space: ClusterSpace::Rgb,
            share_initial_latent: true,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            PipelineError::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| PipelineError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks that turn nonsense values into config errors instead
    /// of downstream numerical failures.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.steps == 0 {
            return bad("T must be at least 1".into());
        }
        if !(self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end < 1.0) {
            return bad(format!(
                "need 0 < beta_start <= beta_end < 1, got [{}, {}]",
                self.beta_start, self.beta_end
            ));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !self.eps.is_finite() || self.eps < 0.0 {
            return bad(format!(
                "eps must be a finite non-negative value, got {}",
                self.eps
            ));
        }
        for (name, v) in [
            ("color_window_end", self.color_window_end),
            ("style_window_start", self.style_window_start),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.cluster_stride == 0 {
            return bad("cluster_stride must be at least 1".into());
        }
        if !(2..=512).contains(&self.latent_size) {
            return bad(format!(
                "latent_size = {} outside [2, 512]",
                self.latent_size
            ));
        }
        if !self.style_strength.is_finite() {
            return bad("style_strength must be finite".into());
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("bad value for {key}: {value:?}"))
        }
        match key {
            "T" => self.steps = num(key, value)?,
            "beta_start" => self.beta_start = num(key, value)?,
            "beta_end" => self.beta_end = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "color_window_end" => self.color_window_end = num(key, value)?,
            "style_window_start" => self.style_window_start = num(key, value)?,
            "seed_latent" => self.seed_latent = num(key, value)?,
            "seed_kmeans" => self.seed_kmeans = num(key, value)?,
            "cluster_stride" => self.cluster_stride = num(key, value)?,
            "latent_size" => self.latent_size = num(key, value)?,
            "style_strength" => self.style_strength = num(key, value)?,
            "luma_mode" => {
                self.luma_mode = match value {
                    "grayscale" => LumaMode::Grayscale,
                    "lab-l" => LumaMode::LabL,
                    other => {
                        return Err(format!(
                            "luma_mode must be grayscale or lab-l, got {other:?}"
                        ))
                    }
                }
            }
            "kmeans_space" => {
                self.kmeans_space = match value {
                    "rgb" => ClusterSpace::Rgb,
                    "lab" => ClusterSpace::Lab,
                    other => return Err(format!("kmeans_space must be rgb or lab, got {other:?}")),
                }
            }
            "share_initial_latent" => {
                self.share_initial_latent = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => {
                        return Err(format!(
                            "share_initial_latent must be true or false, got {other:?}"
                        ))
                    }
                }
            }
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.steps, 50);
        assert_eq!(cfg.beta_start, 1e-4);
        assert_eq!(cfg.beta_end, 0.02);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.eps, 1e-5);
        assert_eq!(cfg.color_window_end, 0.8);
        assert_eq!(cfg.style_window_start, 0.8);
        assert_eq!(cfg.cluster_stride, 1);
        assert!(cfg.share_initial_latent);
    }

    #[test]
    fn parses_documented_keys_with_comments() {
        let text = "
# run length
T = 20
beta_start = 0.001
beta_end = 0.01
k = 4        # clusters
eps = 0.0001
color_window_end = 1.0
style_window_start = 1.0
seed_latent = 7
seed_kmeans = 9
cluster_stride = 2
latent_size = 16
style_strength = 0.25
luma_mode = lab-l
kmeans_space = lab
share_initial_latent = false
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.steps, 20);
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.seed_latent, 7);
        assert_eq!(cfg.seed_kmeans, 9);
        assert_eq!(cfg.cluster_stride, 2);
        assert_eq!(cfg.latent_size, 16);
        assert_eq!(cfg.luma_mode, LumaMode::LabL);
        assert_eq!(cfg.kmeans_space, ClusterSpace::Lab);
        assert!(!cfg.share_initial_latent);
    }

    #[test]
    fn unknown_key_and_bad_value_error() {
        assert!(matches!(
            RunConfig::parse("bogus = 1"),
            Err(PipelineError::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("T = soon"),
            Err(PipelineError::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("just a line"),
            Err(PipelineError::Config(_))
        ));
    }
}
