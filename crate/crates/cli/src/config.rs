//! Run configuration: one TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trigwarn_core::baselines::TfidfGbtConfig;
use trigwarn_core::heads::{HeadConfig, WeightPolicy};
use trigwarn_core::segmenter::{CleaningConfig, SegmentationConfig};
use trigwarn_transformer::{EncoderConfig, TruncationBaselineConfig};

use crate::error::CliError;

pub const CACHE_ENV: &str = "TRIGWARN_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Labeled training corpus (line-delimited JSON).
    pub train: Option<PathBuf>,
    /// Labeled validation corpus. Without one, a holdout is split off `train`.
    pub valid: Option<PathBuf>,
    /// Optional corpus to predict on (labels not required).
    pub test: Option<PathBuf>,
    pub workdir: PathBuf,
    /// Root for pretrained checkpoints named by `model_name`; `$TRIGWARN_CACHE_DIR` wins.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Fine-tuned transformer, CLS vectors.
    Pretrained,
    /// Seeded feature hashing; no model weights.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    pub reference_dim: usize,
    pub fine_tune: EncoderConfig,
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection {
            kind: EncoderKind::Pretrained,
            reference_dim: 256,
            fine_tune: EncoderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadsSection {
    #[serde(flatten)]
    pub config: HeadConfig,
    /// Classes that get `pos_weight = n_neg / n_pos`, e.g. `"15-32"` or `"none"`.
    pub pos_weight_classes: String,
    pub allow_degenerate: bool,
}

impl Default for HeadsSection {
    fn default() -> Self {
        HeadsSection {
            config: HeadConfig::default(),
            pos_weight_classes: "15-32".into(),
            allow_degenerate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesSection {
    pub truncation: TruncationBaselineConfig,
    pub tfidf_gbt: TfidfGbtConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    /// Global seed; copied into every component seed.
    pub seed: u64,
    /// Validation fraction when `paths.valid` is absent.
    pub holdout_fraction: f64,
    pub cleaning: CleaningConfig,
    pub segmentation: SegmentationConfig,
    pub encoder: EncoderSection,
    pub heads: HeadsSection,
    pub baselines: BaselinesSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths {
                workdir: PathBuf::from("work"),
                ..Default::default()
            },
            seed: 42,
            holdout_fraction: 0.1,
            cleaning: CleaningConfig::default(),
            segmentation: SegmentationConfig::default(),
            encoder: EncoderSection::default(),
            heads: HeadsSection::default(),
            baselines: BaselinesSection::default(),
        }
    }
}

/// Flags that override the config file. Every field mirrors a config value.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding every stage output and the run manifest.
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    /// Labeled training corpus.
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    /// Labeled validation corpus.
    #[arg(long, global = true)]
    pub valid: Option<PathBuf>,
    /// Corpus to predict on; labels optional.
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    /// Words per segment.
    #[arg(long, global = true)]
    pub segment_length: Option<usize>,
    /// Words shared by consecutive segments; below the segment length.
    #[arg(long, global = true)]
    pub overlap: Option<usize>,
    /// Training epochs per head.
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    /// Classes receiving a positive-class weight, e.g. `15-32`, `1,3-5`, `none`.
    #[arg(long, global = true)]
    pub pos_weight_classes: Option<String>,
    /// Decision threshold for every class.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Global seed, copied into every component seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Give classes without training positives a constant-negative head instead of failing.
    #[arg(long, global = true)]
    pub allow_degenerate: bool,
    /// Segment encoder.
    #[arg(long, global = true, value_enum)]
    pub encoder: Option<EncoderKind>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Config file (if any), then flags, then seed propagation and validation.
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &o.workdir {
            cfg.paths.workdir = v.clone();
        }
        if let Some(v) = &o.train {
            cfg.paths.train = Some(v.clone());
        }
        if let Some(v) = &o.valid {
            cfg.paths.valid = Some(v.clone());
        }
        if let Some(v) = &o.test {
            cfg.paths.test = Some(v.clone());
        }
        if let Some(v) = o.segment_length {
            cfg.segmentation.segment_length = v;
        }
        if let Some(v) = o.overlap {
            cfg.segmentation.overlap = v;
        }
        if let Some(v) = o.max_epochs {
            cfg.heads.config.max_epochs = v;
        }
        if let Some(v) = &o.pos_weight_classes {
            cfg.heads.pos_weight_classes = v.clone();
        }
        if let Some(v) = o.threshold {
            cfg.heads.config.decision_threshold = v;
            cfg.baselines.truncation.threshold = v;
            cfg.baselines.tfidf_gbt.threshold = v;
        }
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if o.allow_degenerate {
            cfg.heads.allow_degenerate = true;
        }
        if let Some(v) = o.encoder {
            cfg.encoder.kind = v;
        }
        cfg.propagate_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn propagate_seed(&mut self) {
        let s = self.seed;
        self.encoder.fine_tune.seed = s;
        self.heads.config.seed = s;
        self.baselines.truncation.seed = s;
        self.baselines.tfidf_gbt.booster.seed = s;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: &dyn std::fmt::Display| CliError::Usage(e.to_string());
        self.segmentation.validate().map_err(|e| invalid(&e))?;
        self.heads.config.validate().map_err(|e| invalid(&e))?;
        self.policy()?;
        self.encoder.fine_tune.validate().map_err(|e| invalid(&e))?;
        self.baselines.truncation.validate().map_err(|e| invalid(&e))?;
        if self.encoder.reference_dim < 8 {
            return Err(CliError::Usage("encoder.reference_dim must be at least 8".into()));
        }
        if self.paths.valid.is_none() && !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(CliError::Usage(format!(
                "holdout_fraction {} outside (0, 1)",
                self.holdout_fraction
            )));
        }
        Ok(())
    }

    pub fn policy(&self) -> Result<WeightPolicy, CliError> {
        WeightPolicy::parse(&self.heads.pos_weight_classes).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .or_else(|| self.paths.cache_dir.clone())
    }

    /// Resolves a model name to a checkpoint directory: an existing path is used as is,
    /// otherwise it is looked up under the cache root.
    pub fn checkpoint_dir(&self, model_name: &str) -> PathBuf {
        let direct = PathBuf::from(model_name);
        if direct.is_dir() {
            return direct;
        }
        match self.cache_dir() {
            Some(root) => root.join(model_name),
            None => direct,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 3\n[segmentation]\nsegment_length = 100\noverlap = 10\n").unwrap();
        let o = Overrides {
            config: Some(path),
            overlap: Some(20),
            seed: Some(9),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&o).unwrap();
        assert_eq!(cfg.segmentation.segment_length, 100);
        assert_eq!(cfg.segmentation.overlap, 20);
        assert_eq!(cfg.heads.config.seed, 9);
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        let o = Overrides {
            segment_length: Some(10),
            overlap: Some(10),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&o), Err(CliError::Usage(_))));
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }
}
