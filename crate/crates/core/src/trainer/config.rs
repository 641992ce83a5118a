use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acw::AcwSchedule;
use crate::error::{Error, Result};
use crate::flownet::FlowNetConfig;
use crate::losses::LossWeights;
use crate::occlusion::OcclusionConfig;
use crate::pipeline::AugmentConfig;
use crate::warploss::{PhotoLossConfig, SmoothLossConfig};

/// Component switches. All `true` is the full method.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub source_supervision: bool,
    pub crop: bool,
    pub unsup_loss: bool,
    pub occ_mask: bool,
    pub acw: bool,
    pub ema: bool,
    /// Occlusion for the unsupervised loss from the student's own forward
    /// and backward flow; `false` reuses the teacher's cropped mask.
    pub student_occlusion: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            source_supervision: true,
            crop: true,
            unsup_loss: true,
            occ_mask: true,
            acw: true,
            ema: true,
            student_occlusion: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Fraction of steps spent warming up before cosine decay.
    pub warmup_fraction: f64,
    /// Global gradient-norm clip; `0` disables.
    pub grad_clip: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 2e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_fraction: 0.05,
            grad_clip: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    pub source: usize,
    pub target: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig { source: 4, target: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub total_steps: u64,
    /// Source-only steps before the target branch switches on.
    pub pretrain_steps: u64,
    pub batch: BatchConfig,
    pub net: FlowNetConfig,
    pub weights: LossWeights,
    pub ema_decay: f64,
    pub acw: AcwSchedule,
    pub occlusion: OcclusionConfig,
    pub photo: PhotoLossConfig,
    pub smooth: SmoothLossConfig,
    /// Crop side as a fraction of the frame side.
    pub crop_fraction: f64,
    pub augment: AugmentConfig,
    pub augment_source: bool,
    pub augment_target: bool,
    pub optimizer: OptimizerConfig,
    pub ablation: Ablation,
    /// Evaluate on the target eval split every this many steps; `0` only
    /// at the end.
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            total_steps: 2000,
            pretrain_steps: 0,
            batch: BatchConfig::default(),
            net: FlowNetConfig::default(),
            weights: LossWeights::default(),
            ema_decay: crate::meanteacher::DEFAULT_EMA_DECAY,
            acw: AcwSchedule {
                total_steps: 2000,
                ..AcwSchedule::default()
            },
            occlusion: OcclusionConfig::default(),
            photo: PhotoLossConfig::default(),
            smooth: SmoothLossConfig::default(),
            crop_fraction: 0.75,
            augment: AugmentConfig::default(),
            augment_source: true,
            augment_target: true,
            optimizer: OptimizerConfig::default(),
            ablation: Ablation::default(),
            eval_every: 250,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::invalid("total_steps", "must be at least 1"));
        }
        if self.pretrain_steps > self.total_steps {
            return Err(Error::invalid("pretrain_steps", "exceeds total_steps"));
        }
        if self.batch.source == 0 || self.batch.target == 0 {
            return Err(Error::invalid("batch", "batch sizes must be positive"));
        }
        self.net.validate()?;
        self.weights.validate()?;
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::invalid("ema_decay", "must lie in [0, 1]"));
        }
        self.acw.validate()?;
        self.occlusion.validate()?;
        self.photo.validate()?;
        self.smooth.validate()?;
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(Error::invalid("crop_fraction", "must lie in (0, 1]"));
        }
        self.augment.validate()?;
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(Error::invalid("optimizer.lr", "must be positive"));
        }
        if o.weight_decay < 0.0 || o.eps <= 0.0 || o.grad_clip < 0.0 {
            return Err(Error::invalid(
                "optimizer",
                "weight_decay, grad_clip >= 0 and eps > 0 required",
            ));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(Error::invalid("optimizer.beta1/beta2", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&o.warmup_fraction) {
            return Err(Error::invalid("optimizer.warmup_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Whether the target branch contributes anything at `step`.
    pub fn adapting(&self, step: u64) -> bool {
        step >= self.pretrain_steps && (self.pseudo_labels_active() || self.unsup_active())
    }

    /// The pseudo-label loss needs a teacher that differs from the student:
    /// either a moving average or a wider view. Without both, the target
    /// would be the student's own output on the same frames.
    pub fn pseudo_labels_active(&self) -> bool {
        self.weights.beta > 0.0 && (self.ablation.ema || self.ablation.crop)
    }

    pub fn unsup_active(&self) -> bool {
        self.weights.gamma > 0.0 && self.ablation.unsup_loss
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::invalid("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Invalid { field, reason } => Error::Invalid {
                field,
                reason: format!("{reason} (in {})", path.display()),
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies a `dotted.key=value` override; the value is parsed as TOML,
    /// falling back to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::invalid(assignment, "expected key=value"))?;
        let key = key.trim();
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let mut doc = toml::Value::try_from(&*self).expect("config serializes");
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .as_table_mut()
                .and_then(|t| t.get_mut(part))
                .ok_or_else(|| Error::invalid(key, "unknown config key"))?;
        }
        *slot = match (&*slot, value) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        let updated: TrainConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::invalid(key, e.message().to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        let back = TrainConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.weights.eps1, 0.9);
        assert_eq!(cfg.optimizer.lr, 2e-4);
    }

    #[test]
    fn partial_file_and_unknown_fields() {
        let cfg = TrainConfig::from_toml_str("total_steps = 10\n[ablation]\nema = false\n").unwrap();
        assert_eq!(cfg.total_steps, 10);
        assert!(!cfg.ablation.ema && cfg.ablation.crop);
        let err = TrainConfig::from_toml_str("total_stepz = 10\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("total_stepz"), "{err}");
        assert!(TrainConfig::from_toml_str("ema_decay = 2.0\n").is_err());
    }

    #[test]
    fn dotted_overrides() {
        let mut cfg = TrainConfig::default();
        cfg.set("optimizer.lr=1e-3").unwrap();
        cfg.set("weights.beta = 0").unwrap();
        cfg.set("ablation.crop=false").unwrap();
        cfg.set("batch.source=2").unwrap();
        assert_eq!(cfg.optimizer.lr, 1e-3);
        assert_eq!(cfg.weights.beta, 0.0);
        assert!(!cfg.ablation.crop);
        assert_eq!(cfg.batch.source, 2);
        assert!(cfg.set("optimizer.nope=1").is_err());
        assert!(cfg.set("crop_fraction=3").is_err());
        assert!(cfg.set("noequals").is_err());
    }

    #[test]
    fn activity_rules() {
        let mut cfg = TrainConfig {
            pretrain_steps: 5,
            ..Default::default()
        };
        assert!(!cfg.adapting(4));
        assert!(cfg.adapting(5));
        cfg.ablation = Ablation {
            crop: false,
            ema: false,
            unsup_loss: false,
            ..Default::default()
        };
        assert!(!cfg.adapting(10));
    }
}
