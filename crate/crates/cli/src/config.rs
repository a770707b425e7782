//! Run configuration: a TOML file whose sections mirror the flag groups.
//! Every field is optional in both places; a flag beats the file, the file
//! beats the built-in default.

use clap::Args;
use lcgnn_core::block::{BudgetModel, Coefficients, VolumeModel};
use lcgnn_core::formula::{ActivationKind, CombineKind, ModelFamily, ModelSpec};
use lcgnn_core::synthetic::{FeatureMode, SyntheticConfig};
use lcgnn_core::train::{Precision, TrainConfig};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

/// Bad flags or config values. Reported with exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Field-wise `self.or(other)`.
macro_rules! overlay {
    ($t:ident { $($f:ident),* $(,)? }) => {
        impl $t {
            pub fn overlay(self, other: Self) -> Self {
                Self { $($f: self.$f.or(other.$f)),* }
            }
        }
    };
}

fn parse_field<T: std::str::FromStr>(field: &str, raw: &Option<String>, default: T) -> anyhow::Result<T>
where
    T::Err: fmt::Display,
{
    match raw {
        None => Ok(default),
        Some(s) => s.parse().map_err(|e| usage(format!("{field}: {e}"))),
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataArgs {
    /// Directory holding edges.txt, features.bin, labels.txt and split.txt
    #[arg(id = "data_dir", long = "data")]
    pub dir: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Feature matrix (.bin, or .csv for text)
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
}
overlay!(DataArgs {
    dir,
    edges,
    features,
    labels,
    split
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticArgs {
    /// Generate a planted-partition dataset instead of reading files
    #[arg(long)]
    #[serde(skip)]
    pub synthetic: bool,
    #[arg(long = "nodes")]
    pub n: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub homophily: Option<f64>,
    /// linear | xor
    #[arg(long)]
    pub feature_mode: Option<String>,
    #[arg(long)]
    pub avg_degree: Option<f64>,
    /// Class signal strength (default depends on the feature mode)
    #[arg(long)]
    pub signal: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
}

impl SyntheticArgs {
    pub fn overlay(self, other: Self) -> Self {
        Self {
            synthetic: self.synthetic || other.synthetic,
            n: self.n.or(other.n),
            classes: self.classes.or(other.classes),
            feature_dim: self.feature_dim.or(other.feature_dim),
            homophily: self.homophily.or(other.homophily),
            feature_mode: self.feature_mode.or(other.feature_mode),
            avg_degree: self.avg_degree.or(other.avg_degree),
            signal: self.signal.or(other.signal),
            noise: self.noise.or(other.noise),
        }
    }

    /// True when any generator parameter was given.
    pub fn any_set(&self) -> bool {
        self.synthetic || *self != Self::default()
    }

    pub fn resolve(&self, seed: u64, default_n: usize) -> anyhow::Result<SyntheticConfig> {
        let mode: FeatureMode = parse_field("synthetic.feature_mode", &self.feature_mode, FeatureMode::Linear)?;
        let base = SyntheticConfig::for_mode(mode);
        Ok(SyntheticConfig {
            n: self.n.unwrap_or(default_n),
            classes: self.classes.unwrap_or(base.classes),
            feature_dim: self.feature_dim.unwrap_or(base.feature_dim),
            homophily: self.homophily.unwrap_or(base.homophily),
            feature_mode: mode,
            seed,
            avg_degree: self.avg_degree.unwrap_or(base.avg_degree),
            signal: self.signal.unwrap_or(base.signal),
            noise: self.noise.unwrap_or(base.noise),
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelArgs {
    /// gcn | sgc | jknet | gprgnn
    #[arg(long = "model")]
    pub family: Option<String>,
    /// Number of graph convolutions / propagation steps K
    #[arg(long)]
    pub layers: Option<usize>,
    /// MLP depth T (gprgnn)
    #[arg(long)]
    pub mlp_layers: Option<usize>,
    /// concat | max (jknet)
    #[arg(long)]
    pub combine: Option<String>,
    /// relu | identity
    #[arg(long)]
    pub activation: Option<String>,
}
overlay!(ModelArgs {
    family,
    layers,
    mlp_layers,
    combine,
    activation
});

impl ModelArgs {
    /// Spec with placeholder dimensions; callers set them from the data.
    pub fn resolve(&self) -> anyhow::Result<ModelSpec> {
        let family: ModelFamily = parse_field("model.family", &self.family, ModelFamily::Gcn)?;
        let combine: CombineKind = parse_field("model.combine", &self.combine, CombineKind::Concat)?;
        let activation: ActivationKind = parse_field("model.activation", &self.activation, ActivationKind::Relu)?;
        let mut spec = ModelSpec::new(family, self.layers.unwrap_or(2))
            .with_combine(combine)
            .with_activation(activation);
        if let Some(t) = self.mlp_layers {
            spec = spec.with_mlp_layers(t);
        }
        if spec.conv_layers == 0 {
            return Err(usage("model.layers must be >= 1"));
        }
        if spec.mlp_layers == 0 {
            return Err(usage("model.mlp_layers must be >= 1"));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Dropout on the precomputed S^k·X rows
    #[arg(long)]
    pub input_dropout: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// f32 | f64
    #[arg(long)]
    pub precision: Option<String>,
    /// Attention initialization parameter alpha (gprgnn)
    #[arg(long)]
    pub attention_init: Option<f64>,
    /// Keep the attention coefficients at their initial values
    #[arg(long)]
    pub freeze_attention: Option<bool>,
}
overlay!(TrainArgs {
    learning_rate,
    weight_decay,
    dropout,
    input_dropout,
    batch_size,
    patience,
    max_epochs,
    hidden_dim,
    precision,
    attention_init,
    freeze_attention,
});

impl TrainArgs {
    pub fn resolve(&self, seed: u64, activation: ActivationKind) -> anyhow::Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            dropout: self.dropout.unwrap_or(d.dropout),
            input_dropout: self.input_dropout.unwrap_or(d.input_dropout),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            patience: self.patience.unwrap_or(d.patience),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            activation,
            seed,
            precision: parse_field::<Precision>("train.precision", &self.precision, d.precision)?,
            attention_init: self.attention_init.unwrap_or(d.attention_init),
            train_attention: !self.freeze_attention.unwrap_or(false),
        };
        cfg.validate().map_err(|e| usage(format!("train: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BudgetArgs {
    /// Device memory budget in bytes (default: whatever the unblocked run needs)
    #[arg(long)]
    pub vol_gpu: Option<f64>,
    #[arg(long)]
    pub alpha_a: Option<f64>,
    #[arg(long)]
    pub alpha_s: Option<f64>,
    #[arg(long)]
    pub alpha_d: Option<f64>,
    #[arg(long)]
    pub beta_s: Option<f64>,
    #[arg(long)]
    pub beta_x: Option<f64>,
    /// Bytes per stored sparse entry
    #[arg(long)]
    pub triplet_bytes: Option<f64>,
    /// Bytes per dense entry
    #[arg(long)]
    pub scalar_bytes: Option<f64>,
}
overlay!(BudgetArgs {
    vol_gpu,
    alpha_a,
    alpha_s,
    alpha_d,
    beta_s,
    beta_x,
    triplet_bytes,
    scalar_bytes,
});

impl BudgetArgs {
    pub fn coefficients(&self) -> Coefficients {
        let d = Coefficients::default();
        Coefficients {
            alpha_a: self.alpha_a.unwrap_or(d.alpha_a),
            alpha_s: self.alpha_s.unwrap_or(d.alpha_s),
            alpha_d: self.alpha_d.unwrap_or(d.alpha_d),
            beta_s: self.beta_s.unwrap_or(d.beta_s),
            beta_x: self.beta_x.unwrap_or(d.beta_x),
        }
    }

    pub fn volumes(&self) -> anyhow::Result<VolumeModel> {
        let d = VolumeModel::default();
        let vm = VolumeModel {
            triplet_bytes: self.triplet_bytes.unwrap_or(d.triplet_bytes),
            scalar_bytes: self.scalar_bytes.unwrap_or(d.scalar_bytes),
        };
        for (name, v) in [
            ("budget.triplet_bytes", vm.triplet_bytes),
            ("budget.scalar_bytes", vm.scalar_bytes),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(usage(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(vm)
    }

    /// Budget model for a problem. Without `vol_gpu` the budget is set to
    /// the unblocked footprint divided by `default_shrink`.
    pub fn resolve(
        &self,
        problem: lcgnn_core::block::ProblemSize,
        default_shrink: f64,
    ) -> anyhow::Result<(BudgetModel, VolumeModel)> {
        let vm = self.volumes()?;
        let probe = BudgetModel::from_problem(self.coefficients(), &vm, problem, 1.0);
        let vol_gpu = self
            .vol_gpu
            .unwrap_or_else(|| probe.norm_load(1).max(probe.agg_load(1, 1)) / default_shrink);
        let bm = BudgetModel { vol_gpu, ..probe };
        bm.validate().map_err(|e| usage(format!("budget: {e}")))?;
        Ok((bm, vm))
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputArgs {
    /// Write outputs here instead of a fresh run directory
    #[arg(id = "out_dir", long = "out")]
    pub dir: Option<PathBuf>,
    /// Parent of generated run directories
    #[arg(long)]
    pub runs_root: Option<PathBuf>,
}
overlay!(OutputArgs { dir, runs_root });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BenchArgs {
    /// Timed repetitions per run (median reported)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: Option<u64>,
}
overlay!(BenchArgs { repeats });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CalibrateArgs {
    /// Probe graph sizes (cycle graphs)
    #[arg(long, value_delimiter = ',')]
    pub probe_sizes: Option<Vec<usize>>,
    /// Largest accepted relative fit residual
    #[arg(long)]
    pub tolerance: Option<f64>,
}
overlay!(CalibrateArgs { probe_sizes, tolerance });

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub data: DataArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub synthetic: SyntheticArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub model: ModelArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub train: TrainArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub budget: BudgetArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub output: OutputArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub bench: BenchArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub calibrate: CalibrateArgs,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        // relative data paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        let d = &mut cfg.data;
        for p in [&mut d.dir, &mut d.edges, &mut d.features, &mut d.labels, &mut d.split]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Canonical text of the effective configuration (output section excluded).
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output = OutputArgs::default();
        c.synthetic.synthetic = false;
        toml::to_string(&c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file = TrainArgs {
            learning_rate: Some(0.1),
            patience: Some(5),
            ..Default::default()
        };
        let flags = TrainArgs {
            learning_rate: Some(0.2),
            ..Default::default()
        };
        let merged = flags.overlay(file);
        assert_eq!(merged.learning_rate, Some(0.2));
        assert_eq!(merged.patience, Some(5));
    }

    #[test]
    fn out_of_range_values_name_their_field() {
        let t = TrainArgs {
            dropout: Some(1.5),
            ..Default::default()
        };
        let err = t.resolve(0, ActivationKind::Relu).unwrap_err().to_string();
        assert!(err.contains("dropout"), "{err}");

        let m = ModelArgs {
            family: Some("gat".into()),
            ..Default::default()
        };
        let err = m.resolve().unwrap_err().to_string();
        assert!(err.contains("model.family"), "{err}");
    }

    #[test]
    fn file_config_round_trips() {
        let text = "seed = 3\n[model]\nfamily = \"jknet\"\nlayers = 3\n[train]\nlearning_rate = 0.05\n";
        let cfg: FileConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.model.layers, Some(3));
        let again: FileConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert!(toml::from_str::<FileConfig>("[model]\nfamliy = \"gcn\"\n").is_err());
    }
}
