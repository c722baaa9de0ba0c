//! Flat key-value pipeline configuration shared by every subcommand.
//!
//! The file format is one `key = value` pair per line; blank lines and lines
//! starting with `#` are ignored. Unknown keys are rejected so typos never
//! silently fall back to defaults. [`PipelineConfig::dump`] writes the full
//! schema back out in a form [`PipelineConfig::apply_str`] accepts unchanged.

use std::fmt;
use std::path::Path;

use tatum_core::dsp::features::FeatureKind;
use tatum_core::dsp::plp::PlpConfig;
use tatum_core::hypothesis::{build_pool, HypothesisPool, TripletConfig};
use tatum_core::metrics::MetricsConfig;
use tatum_core::ssl::train::TrainConfig;

/// A configuration problem: bad file syntax, unknown key, unparsable or
/// out-of-range value. Mapped to exit code 2 by the binary.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn cfg_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(msg.into()))
}

/// How many lowest-mean hypotheses the selection step keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Wta,
    Wta2,
    Wta3,
}

impl SelectMode {
    pub fn n_winners(self) -> usize {
        match self {
            SelectMode::Wta => 1,
            SelectMode::Wta2 => 2,
            SelectMode::Wta3 => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SelectMode::Wta => "wta",
            SelectMode::Wta2 => "2wta",
            SelectMode::Wta3 => "3wta",
        }
    }

    fn parse(s: &str) -> anyhow::Result<Self> {
        match s {
            "wta" => Ok(SelectMode::Wta),
            "2wta" => Ok(SelectMode::Wta2),
            "3wta" => Ok(SelectMode::Wta3),
            other => Err(cfg_err(format!(
                "select mode {other:?} (expected wta|2wta|3wta)"
            ))),
        }
    }
}

/// Every tunable of the pipeline, loadable from a file with flag overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    // Pulse extraction.
    pub tempo_min_bpm: f64,
    pub tempo_max_bpm: f64,
    pub tempo_step_bpm: f64,
    pub plp_window_s: f64,
    pub plp_kernel_s: f64,
    pub peak_rel_threshold: f64,
    pub peak_min_dist: usize,
    // Chunk mining.
    pub chunk_s: f64,
    pub max_chunks_per_track: usize,
    pub max_rel_var: f64,
    // Hypothesis pool.
    pub omegas: Vec<usize>,
    // Triplet sampling.
    pub n_positives: usize,
    pub n_negatives: usize,
    pub hard_fraction: f64,
    // Scoring and selection.
    pub tau: f64,
    pub select: SelectMode,
    pub score_epochs: usize,
    // Features and encoder.
    pub features: FeatureKind,
    pub lags: Vec<usize>,
    pub d_hidden: usize,
    pub d_z: usize,
    pub d_head: usize,
    // Training loop.
    pub lr: f64,
    pub momentum: f64,
    pub grad_clip: f64,
    pub steps: usize,
    pub batch_size: usize,
    // Evaluation.
    pub trim_s: f64,
    pub f_tol_s: f64,
    pub theta: f64,
    pub downbeat: bool,
    // Misc.
    pub seed: u64,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let plp = PlpConfig::default();
        let trip = TripletConfig::default();
        let train = TrainConfig::default();
        let metrics = MetricsConfig::default();
        PipelineConfig {
            tempo_min_bpm: plp.tempo_min_bpm,
            tempo_max_bpm: plp.tempo_max_bpm,
            tempo_step_bpm: plp.tempo_step_bpm,
            plp_window_s: plp.window_s,
            plp_kernel_s: plp.kernel_s,
            peak_rel_threshold: plp.peak_rel_threshold,
            peak_min_dist: plp.peak_min_dist,
            chunk_s: 20.0,
            max_chunks_per_track: 5,
            max_rel_var: 0.2,
            omegas: vec![1, 2, 3, 4],
            n_positives: trip.n_positives,
            n_negatives: trip.n_negatives,
            hard_fraction: trip.hard_fraction,
            tau: train.tau,
            select: SelectMode::Wta,
            score_epochs: 8,
            features: FeatureKind::Mel,
            lags: vec![0, 1, 2],
            d_hidden: train.d_hidden,
            d_z: train.d_z,
            d_head: train.d_head,
            lr: train.lr,
            momentum: train.momentum,
            grad_clip: train.max_grad_norm,
            steps: train.steps,
            batch_size: train.batch_size,
            trim_s: metrics.trim_s,
            f_tol_s: metrics.f_tol_s,
            theta: metrics.theta,
            downbeat: false,
            seed: 0,
            workers: 0,
        }
    }
}

fn parse_num<T>(key: &str, value: &str) -> anyhow::Result<T>
where
    T: std::str::FromStr,
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| cfg_err(format!("key {key}: cannot parse {value:?}: {e}")))
}

fn parse_list(key: &str, value: &str) -> anyhow::Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num::<usize>(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> anyhow::Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(cfg_err(format!("key {key}: expected true|false, got {other:?}"))),
    }
}

fn list_str(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl PipelineConfig {
    /// Set one key from its text value. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        match key {
            "tempo_min_bpm" => self.tempo_min_bpm = parse_num(key, value)?,
            "tempo_max_bpm" => self.tempo_max_bpm = parse_num(key, value)?,
            "tempo_step_bpm" => self.tempo_step_bpm = parse_num(key, value)?,
            "plp_window_s" => self.plp_window_s = parse_num(key, value)?,
            "plp_kernel_s" => self.plp_kernel_s = parse_num(key, value)?,
            "peak_rel_threshold" => self.peak_rel_threshold = parse_num(key, value)?,
            "peak_min_dist" => self.peak_min_dist = parse_num(key, value)?,
            "chunk_s" => self.chunk_s = parse_num(key, value)?,
            "max_chunks_per_track" => self.max_chunks_per_track = parse_num(key, value)?,
            "max_rel_var" => self.max_rel_var = parse_num(key, value)?,
            "omegas" => self.omegas = parse_list(key, value)?,
            "n_positives" => self.n_positives = parse_num(key, value)?,
            "n_negatives" => self.n_negatives = parse_num(key, value)?,
            "hard_fraction" => self.hard_fraction = parse_num(key, value)?,
            "tau" => self.tau = parse_num(key, value)?,
            "select" => self.select = SelectMode::parse(value)?,
            "score_epochs" => self.score_epochs = parse_num(key, value)?,
            "features" => {
                self.features = value
                    .parse()
                    .map_err(|e| cfg_err(format!("key features: {e}")))?
            }
            "lags" => self.lags = parse_list(key, value)?,
            "d_hidden" => self.d_hidden = parse_num(key, value)?,
            "d_z" => self.d_z = parse_num(key, value)?,
            "d_head" => self.d_head = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "momentum" => self.momentum = parse_num(key, value)?,
            "grad_clip" => self.grad_clip = parse_num(key, value)?,
            "steps" => self.steps = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "trim_s" => self.trim_s = parse_num(key, value)?,
            "f_tol_s" => self.f_tol_s = parse_num(key, value)?,
            "theta" => self.theta = parse_num(key, value)?,
            "downbeat" => self.downbeat = parse_bool(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            other => return Err(cfg_err(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines from a config file's text.
    pub fn apply_str(&mut self, text: &str, origin: &str) -> anyhow::Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                cfg_err(format!(
                    "{origin}:{}: expected `key = value`, got {line:?}",
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| {
                cfg_err(format!("{origin}:{}: {e}", lineno + 1))
            })?;
        }
        Ok(())
    }

    /// Load a config file on top of the defaults.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_str(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Write the full schema back out; `apply_str(dump())` restores `self`.
    pub fn dump(&self) -> String {
        format!(
            "# pipeline configuration (key = value; # starts a comment line)\n\
             \n\
             # pulse extraction\n\
             tempo_min_bpm = {}\n\
             tempo_max_bpm = {}\n\
             tempo_step_bpm = {}\n\
             plp_window_s = {}\n\
             plp_kernel_s = {}\n\
             peak_rel_threshold = {}\n\
             peak_min_dist = {}\n\
             \n\
             # chunk mining\n\
             chunk_s = {}\n\
             max_chunks_per_track = {}\n\
             max_rel_var = {}\n\
             \n\
             # hypothesis pool (beat-to-pulse ratios)\n\
             omegas = {}\n\
             \n\
             # triplet sampling\n\
             n_positives = {}\n\
             n_negatives = {}\n\
             hard_fraction = {}\n\
             \n\
             # scoring and selection\n\
             tau = {}\n\
             select = {}\n\
             score_epochs = {}\n\
             \n\
             # features and encoder\n\
             features = {}\n\
             lags = {}\n\
             d_hidden = {}\n\
             d_z = {}\n\
             d_head = {}\n\
             \n\
             # training loop\n\
             lr = {}\n\
             momentum = {}\n\
             grad_clip = {}\n\
             steps = {}\n\
             batch_size = {}\n\
             \n\
             # evaluation\n\
             trim_s = {}\n\
             f_tol_s = {}\n\
             theta = {}\n\
             downbeat = {}\n\
             \n\
             # misc\n\
             seed = {}\n\
             workers = {}\n",
            self.tempo_min_bpm,
            self.tempo_max_bpm,
            self.tempo_step_bpm,
            self.plp_window_s,
            self.plp_kernel_s,
            self.peak_rel_threshold,
            self.peak_min_dist,
            self.chunk_s,
            self.max_chunks_per_track,
            self.max_rel_var,
            list_str(&self.omegas),
            self.n_positives,
            self.n_negatives,
            self.hard_fraction,
            self.tau,
            self.select.as_str(),
            self.score_epochs,
            self.features.as_str(),
            list_str(&self.lags),
            self.d_hidden,
            self.d_z,
            self.d_head,
            self.lr,
            self.momentum,
            self.grad_clip,
            self.steps,
            self.batch_size,
            self.trim_s,
            self.f_tol_s,
            self.theta,
            self.downbeat,
            self.seed,
            self.workers,
        )
    }

    /// Check every value against the preconditions of the module that
    /// consumes it, before any command does work.
    pub fn validate(&self) -> anyhow::Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(cfg_err(msg)) };
        check(
            self.tempo_min_bpm > 0.0 && self.tempo_min_bpm.is_finite(),
            "tempo_min_bpm must be positive",
        )?;
        check(
            self.tempo_max_bpm > self.tempo_min_bpm && self.tempo_max_bpm.is_finite(),
            "tempo_max_bpm must exceed tempo_min_bpm",
        )?;
        check(
            self.tempo_step_bpm > 0.0 && self.tempo_step_bpm.is_finite(),
            "tempo_step_bpm must be positive",
        )?;
        check(self.plp_window_s > 0.0, "plp_window_s must be positive")?;
        check(self.plp_kernel_s > 0.0, "plp_kernel_s must be positive")?;
        check(
            (0.0..=1.0).contains(&self.peak_rel_threshold),
            "peak_rel_threshold must lie in [0, 1]",
        )?;
        check(self.peak_min_dist >= 1, "peak_min_dist must be at least 1")?;
        check(self.chunk_s > 0.0, "chunk_s must be positive")?;
        check(
            self.max_chunks_per_track >= 1,
            "max_chunks_per_track must be at least 1",
        )?;
        check(
            self.max_rel_var >= 0.0 && self.max_rel_var.is_finite(),
            "max_rel_var must be non-negative",
        )?;
        check(!self.lags.is_empty(), "lags must name at least one lag")?;
        check(self.score_epochs >= 1, "score_epochs must be at least 1")?;
        check(self.trim_s >= 0.0, "trim_s must be non-negative")?;
        check(self.f_tol_s > 0.0, "f_tol_s must be positive")?;
        check(
            self.theta > 0.0 && self.theta < 1.0,
            "theta must lie strictly inside (0, 1)",
        )?;

        let pool = self.pool()?;
        check(
            self.select.n_winners() <= pool.len(),
            &format!(
                "select = {} needs {} hypotheses, pool has {}",
                self.select.as_str(),
                self.select.n_winners(),
                pool.len()
            ),
        )?;
        self.train_config()
            .validate()
            .map_err(|e| cfg_err(e.to_string()))?;
        Ok(())
    }

    pub fn pool(&self) -> anyhow::Result<HypothesisPool> {
        build_pool(&self.omegas).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn plp_config(&self) -> PlpConfig {
        PlpConfig {
            tempo_min_bpm: self.tempo_min_bpm,
            tempo_max_bpm: self.tempo_max_bpm,
            tempo_step_bpm: self.tempo_step_bpm,
            window_s: self.plp_window_s,
            kernel_s: self.plp_kernel_s,
            peak_rel_threshold: self.peak_rel_threshold,
            peak_min_dist: self.peak_min_dist,
        }
    }

    pub fn triplet_config(&self) -> TripletConfig {
        TripletConfig {
            n_positives: self.n_positives,
            n_negatives: self.n_negatives,
            hard_fraction: self.hard_fraction,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            d_hidden: self.d_hidden,
            d_z: self.d_z,
            d_head: self.d_head,
            tau: self.tau,
            n_winners: self.select.n_winners(),
            triplet: self.triplet_config(),
            lr: self.lr,
            momentum: self.momentum,
            max_grad_norm: self.grad_clip,
            steps: self.steps,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    pub fn metrics_config(&self) -> MetricsConfig {
        MetricsConfig {
            trim_s: self.trim_s,
            f_tol_s: self.f_tol_s,
            theta: self.theta,
            downbeat: self.downbeat,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn dump_then_load_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.tau = 0.25;
        cfg.omegas = vec![1, 3];
        cfg.select = SelectMode::Wta2;
        cfg.features = FeatureKind::Mfcc;
        cfg.downbeat = true;
        cfg.seed = 99;
        let mut reloaded = PipelineConfig::default();
        reloaded.apply_str(&cfg.dump(), "dump").unwrap();
        assert_eq!(reloaded, cfg);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut cfg = PipelineConfig::default();
        let err = cfg.apply_str("taw = 0.1\n", "test").unwrap_err();
        assert!(err.to_string().contains("unknown config key"));
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }

    #[test]
    fn bad_value_is_rejected() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.apply_str("tau = fast\n", "test").is_err());
        assert!(cfg.apply_str("select = 4wta\n", "test").is_err());
        assert!(cfg.apply_str("features = stems\n", "test").is_err());
        assert!(cfg.apply_str("downbeat = yes\n", "test").is_err());
        assert!(cfg.apply_str("no equals sign\n", "test").is_err());
    }

    #[test]
    fn validate_catches_out_of_range_values() {
        let mut cfg = PipelineConfig::default();
        cfg.tempo_max_bpm = cfg.tempo_min_bpm;
        assert!(cfg.validate().is_err());

        let mut cfg = PipelineConfig::default();
        cfg.omegas = vec![1];
        cfg.select = SelectMode::Wta3;
        assert!(cfg.validate().is_err());

        let mut cfg = PipelineConfig::default();
        cfg.tau = 0.0;
        assert!(cfg.validate().is_err());
    }
}
