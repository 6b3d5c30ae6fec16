//! Run configuration: a flat JSON object with dotted keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use signenc::classifier::{Backend, TrainConfig};
use signenc::transforms::AugmentParams;
use signenc::{seed, Error, Result};

/// Keys that change where or how fast a run executes but not its results.
const UNHASHED: [&str; 3] = ["output", "workers", "splits.limit"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub output: PathBuf,
    pub seed: Option<u64>,
    #[serde(rename = "augment.enabled")]
    pub augment_enabled: bool,
    #[serde(rename = "augment.rotation_deg")]
    pub augment_rotation_deg: f64,
    #[serde(rename = "augment.zoom")]
    pub augment_zoom: f64,
    #[serde(rename = "augment.translate")]
    pub augment_translate: f64,
    #[serde(rename = "augment.flip_prob")]
    pub augment_flip_prob: f64,
    #[serde(rename = "augment.swap_lr")]
    pub augment_swap_lr: bool,
    #[serde(rename = "uniformize.enabled")]
    pub uniformize_enabled: bool,
    #[serde(rename = "model.backend")]
    pub model_backend: Backend,
    #[serde(rename = "model.epochs")]
    pub model_epochs: usize,
    #[serde(rename = "model.batch_size")]
    pub model_batch_size: usize,
    #[serde(rename = "model.learning_rate")]
    pub model_learning_rate: f64,
    #[serde(rename = "model.weight_decay")]
    pub model_weight_decay: f64,
    #[serde(rename = "model.dropout")]
    pub model_dropout: f64,
    #[serde(rename = "model.patience")]
    pub model_patience: usize,
    #[serde(rename = "model.head_units")]
    pub model_head_units: usize,
    #[serde(rename = "model.input_size")]
    pub model_input_size: usize,
    #[serde(rename = "model.pretrained_path")]
    pub model_pretrained_path: Option<PathBuf>,
    #[serde(rename = "splits.limit")]
    pub splits_limit: Option<usize>,
    /// Sections trained concurrently.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let a = AugmentParams::default();
        Self {
            dataset: PathBuf::new(),
            output: PathBuf::from("runs"),
            seed: None,
            augment_enabled: true,
            augment_rotation_deg: a.rotation_deg,
            augment_zoom: a.zoom,
            augment_translate: a.translate,
            augment_flip_prob: a.flip_prob,
            augment_swap_lr: a.swap_lr,
            uniformize_enabled: false,
            model_backend: t.backend,
            model_epochs: t.epochs,
            model_batch_size: t.batch_size,
            model_learning_rate: t.learning_rate,
            model_weight_decay: t.weight_decay,
            model_dropout: t.dropout,
            model_patience: t.patience,
            model_head_units: t.head_units,
            model_input_size: t.input_size,
            model_pretrained_path: None,
            splits_limit: None,
            workers: 1,
        }
    }
}

/// Parses a `key=value` override; the value is read as JSON when possible
/// and as a plain string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not of the form key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides in order, and validates.
    pub fn assemble(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self> {
        let mut obj = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(Error::Config(format!("{}: expected a JSON object", p.display()))),
                    Err(e) => return Err(Error::Config(format!("{}: {e}", p.display()))),
                }
            }
            None => Map::new(),
        };
        for (k, v) in overrides {
            obj.insert(k.clone(), v.clone());
        }
        let cfg: RunConfig = serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(Error::Config("`seed` is mandatory".into()));
        }
        if self.dataset.as_os_str().is_empty() {
            return Err(Error::Config("`dataset` is not set".into()));
        }
        if !self.dataset.is_dir() {
            return Err(Error::Config(format!("dataset {} does not exist", self.dataset.display())));
        }
        if self.workers == 0 {
            return Err(Error::Config("`workers` must be at least 1".into()));
        }
        if self.splits_limit == Some(0) {
            return Err(Error::Config("`splits.limit` must be positive".into()));
        }
        self.train_config(0).validate()?;
        if let Some(a) = self.augment_params() {
            a.validate()?;
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    /// Training settings for one section; each section gets its own seed.
    pub fn train_config(&self, section_id: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.model_epochs,
            batch_size: self.model_batch_size,
            learning_rate: self.model_learning_rate,
            weight_decay: self.model_weight_decay,
            dropout: self.model_dropout,
            patience: self.model_patience,
            seed: seed::derive(self.seed.unwrap_or(0), &[section_id as u64]),
            backend: self.model_backend,
            head_units: self.model_head_units,
            input_size: self.model_input_size,
            pretrained_path: self.model_pretrained_path.clone(),
        }
    }

    pub fn augment_params(&self) -> Option<AugmentParams> {
        self.augment_enabled.then(|| AugmentParams {
            rotation_deg: self.augment_rotation_deg,
            zoom: self.augment_zoom,
            translate: self.augment_translate,
            flip_prob: self.augment_flip_prob,
            swap_lr: self.augment_swap_lr,
            ..AugmentParams::default()
        })
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 over every key that influences results.
    pub fn hash(&self) -> String {
        let mut v = self.to_value();
        if let Value::Object(m) = &mut v {
            for k in UNHASHED {
                m.remove(k);
            }
        }
        let digest = Sha256::digest(serde_json::to_vec(&v).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(dir: &Path) -> Vec<(String, Value)> {
        vec![
            ("dataset".into(), Value::String(dir.display().to_string())),
            ("seed".into(), Value::from(7)),
        ]
    }

    #[test]
    fn defaults_follow_training_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::assemble(None, &base(dir.path())).unwrap();
        let t = cfg.train_config(0);
        assert_eq!((t.epochs, t.batch_size, t.patience, t.head_units), (20, 64, 5, 128));
        assert_eq!(t.learning_rate, 1e-4);
        assert!(cfg.augment_enabled && !cfg.uniformize_enabled);
    }

    #[test]
    fn seed_is_mandatory() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = base(dir.path());
        o.pop();
        assert!(matches!(RunConfig::assemble(None, &o), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_and_missing_dataset_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = base(dir.path());
        o.push(("model.epoch".into(), Value::from(3)));
        assert!(RunConfig::assemble(None, &o).is_err());
        let o = vec![
            ("dataset".into(), Value::String("/definitely/not/here".into())),
            ("seed".into(), Value::from(1)),
        ];
        assert!(RunConfig::assemble(None, &o).is_err());
    }

    #[test]
    fn overrides_parse_json_then_string() {
        assert_eq!(parse_override("model.epochs=3").unwrap().1, Value::from(3));
        assert_eq!(parse_override("model.backend=resnet18").unwrap().1, Value::from("resnet18"));
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn hash_ignores_output_and_workers() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunConfig::assemble(None, &base(dir.path())).unwrap();
        let mut b = a.clone();
        b.output = "elsewhere".into();
        b.workers = 4;
        b.splits_limit = Some(2);
        assert_eq!(a.hash(), b.hash());
        b.model_epochs = 3;
        assert_ne!(a.hash(), b.hash());
    }
}
