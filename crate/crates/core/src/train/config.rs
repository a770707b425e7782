use super::TrainError;
use crate::formula::ActivationKind;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            other => Err(format!("unknown precision `{other}` (expected f32|f64)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// L2 coefficient; the loss gains `weight_decay/2 · Σ‖W‖²`.
    pub weight_decay: f64,
    /// Dropout after every hidden activation.
    pub dropout: f64,
    /// Dropout on the precomputed `S^k·X` rows before they enter the model.
    pub input_dropout: f64,
    pub batch_size: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub hidden_dim: usize,
    pub activation: ActivationKind,
    pub seed: u64,
    pub precision: Precision,
    /// `α` in the attention initialization `γ_k = α(1-α)^k`, `γ_K = (1-α)^K`.
    pub attention_init: f64,
    /// When false the attention coefficients stay at their initial values.
    pub train_attention: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            weight_decay: 1e-6,
            dropout: 0.5,
            input_dropout: 0.0,
            batch_size: 4096,
            patience: 300,
            max_epochs: 2000,
            hidden_dim: 256,
            activation: ActivationKind::Relu,
            seed: 0,
            precision: Precision::F64,
            attention_init: 0.1,
            train_attention: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        for (name, p) in [("dropout", self.dropout), ("input_dropout", self.input_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1), got {p}"));
            }
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("patience", self.patience),
            ("max_epochs", self.max_epochs),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v < 1 {
                return bad(format!("{name} must be >= 1, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.attention_init) {
            return bad(format!("attention_init must be in [0, 1], got {}", self.attention_init));
        }
        Ok(())
    }
}
