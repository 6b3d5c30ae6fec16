//! Image classifier: training loop, two network backends, prediction and
//! model files.
//!
//! Networks run on a small built-in tensor engine (im2col convolutions over
//! `matrixmultiply` GEMM). Inputs are `3 x S x S` images in `[0, 1]`; the
//! ResNet18 backend additionally standardizes with ImageNet channel
//! statistics, as its pretrained weights expect.

mod io;
pub mod layers;
pub mod network;
mod optim;
pub mod tensor;
mod train;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{NetworkInput, INPUT_SIZE};
use crate::{Error, Result};

pub use io::{load_model, load_pretrained, save_model, MODEL_FORMAT};
pub use network::{Architecture, Backend, Network};
pub use optim::Adam;
pub use train::{
    argmax, evaluate, run_epochs, softmax, softmax_cross_entropy, stack, train, EarlyStopping, EpochRunner, EpochStats,
    LoopOutcome, Pipeline, TrainOutcome,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// L2 penalty added to every parameter's gradient.
    pub weight_decay: f64,
    pub dropout: f64,
    pub patience: usize,
    pub seed: u64,
    pub backend: Backend,
    pub head_units: usize,
    /// Side length of the square network input.
    pub input_size: usize,
    /// ImageNet weights for the ResNet18 base, in safetensors format.
    pub pretrained_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            dropout: 0.5,
            patience: 5,
            seed: 0,
            backend: Backend::ReferenceCnn,
            head_units: 128,
            input_size: INPUT_SIZE,
            pretrained_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 || self.head_units == 0 {
            return bad("epochs, batch_size, patience and head_units must be positive".into());
        }
        if self.patience > self.epochs {
            return bad(format!("patience {} exceeds epochs {}", self.patience, self.epochs));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.input_size < 32 || (self.backend == Backend::ReferenceCnn && !self.input_size.is_multiple_of(32)) {
            return bad(format!("input_size {} unsupported by {}", self.input_size, self.backend.name()));
        }
        Ok(())
    }

    pub fn architecture(&self, classes: usize) -> Architecture {
        Architecture {
            backend: self.backend,
            classes,
            head_units: self.head_units,
            dropout: self.dropout,
            input_size: self.input_size,
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A trained network together with what is needed to interpret it.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub arch: Architecture,
    /// Output order of the probability vector.
    pub classes: Vec<String>,
    pub config: TrainConfig,
    pub network: Network<f32>,
    /// Epoch (1-based) the parameters were taken from.
    pub epoch: usize,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub argmax: usize,
}

impl ModelState {
    pub fn input_size(&self) -> usize {
        self.arch.input_size
    }

    pub fn label(&self, p: &Prediction) -> &str {
        &self.classes[p.argmax]
    }

    pub fn predict(&self, input: &NetworkInput) -> Result<Prediction> {
        Ok(self.predict_batch(std::slice::from_ref(input))?.remove(0))
    }

    /// Inference-mode predictions; each output depends only on its own input.
    pub fn predict_batch(&self, inputs: &[NetworkInput]) -> Result<Vec<Prediction>> {
        let logits = train::infer_logits(&self.network, inputs, self.input_size(), inputs.len().max(1))?;
        Ok(logits
            .into_iter()
            .map(|row| {
                let probabilities = softmax(&row);
                let argmax = argmax(&probabilities);
                Prediction { probabilities, argmax }
            })
            .collect())
    }
}

pub fn predict(state: &ModelState, input: &NetworkInput) -> Result<Prediction> {
    state.predict(input)
}
