//! Planted-partition datasets for desk-scale experiments.

use crate::dense::DenseMatrix;
use crate::graph::{Graph, GraphError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// How node features relate to class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureMode {
    /// Gaussian class means; linearly separable once neighborhoods are averaged.
    Linear,
    /// Class is the XOR of the signs of two latent coordinates. Each class is
    /// split into two communities (one per sign pattern) so that aggregation
    /// keeps the XOR structure instead of averaging it away.
    Xor,
}

impl FeatureMode {
    /// Signal strength at which the mode's benchmark contrast is clear at
    /// n = 2000: aggregation vs none for `Linear`, non-linear vs linear
    /// models for `Xor`.
    pub fn default_signal(self) -> f64 {
        match self {
            Self::Linear => 0.35,
            Self::Xor => 0.7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Xor => "xor",
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Self::Linear),
            "xor" => Ok(Self::Xor),
            other => Err(format!("unknown feature mode `{other}` (expected linear|xor)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub classes: usize,
    pub feature_dim: usize,
    /// Expected fraction of a node's edges that stay inside its community.
    pub homophily: f64,
    pub feature_mode: FeatureMode,
    pub seed: u64,
    pub avg_degree: f64,
    /// Magnitude of the class-dependent feature component.
    pub signal: f64,
    /// Standard deviation of the per-node Gaussian noise.
    pub noise: f64,
}

impl SyntheticConfig {
    /// Defaults with the mode's own signal strength.
    pub fn for_mode(mode: FeatureMode) -> Self {
        Self {
            feature_mode: mode,
            signal: mode.default_signal(),
            ..Default::default()
        }
    }
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            classes: 4,
            feature_dim: 16,
            homophily: 0.8,
            feature_mode: FeatureMode::Linear,
            seed: 0,
            avg_degree: 10.0,
            signal: FeatureMode::Linear.default_signal(),
            noise: 1.0,
        }
    }
}

/// Role of a node in the train/validation/test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitRole {
    Train,
    Val,
    Test,
}

impl SplitRole {
    pub fn as_char(self) -> char {
        match self {
            Self::Train => 't',
            Self::Val => 'v',
            Self::Test => 's',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            't' => Some(Self::Train),
            'v' => Some(Self::Val),
            's' => Some(Self::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split(Vec<SplitRole>);

impl Split {
    pub fn new(roles: Vec<SplitRole>) -> Self {
        Self(roles)
    }

    pub fn roles(&self) -> &[SplitRole] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Node ids with the given role, ascending.
    pub fn indices(&self, role: SplitRole) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &r)| (r == role).then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }
}

/// Generates a planted-partition graph with class-dependent features and a
/// 60/20/20 split. Pure function of `cfg`.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<Dataset, GraphError> {
    let invalid = |msg: String| Err(GraphError::InvalidParameter(msg));
    if cfg.classes == 0 || cfg.classes > cfg.n {
        return invalid(format!(
            "classes must be in [1, n]; got classes={} n={}",
            cfg.classes, cfg.n
        ));
    }
    if cfg.feature_dim < 2 {
        return invalid(format!("feature_dim must be >= 2; got {}", cfg.feature_dim));
    }
    if !(0.0..=1.0).contains(&cfg.homophily) {
        return invalid(format!("homophily must be in [0, 1]; got {}", cfg.homophily));
    }
    let non_negative = |v: f64| v.is_finite() && v >= 0.0;
    if !non_negative(cfg.avg_degree) || !non_negative(cfg.noise) || !cfg.signal.is_finite() {
        return invalid("avg_degree and noise must be non-negative, signal finite".into());
    }

    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let communities = match cfg.feature_mode {
        FeatureMode::Linear => cfg.classes,
        FeatureMode::Xor => 2 * cfg.classes,
    };
    let mut community: Vec<usize> = (0..n).map(|i| i % communities).collect();
    community.shuffle(&mut rng);
    let labels: Vec<usize> = match cfg.feature_mode {
        FeatureMode::Linear => community.clone(),
        FeatureMode::Xor => community.iter().map(|&q| q / 2).collect(),
    };

    let mut sizes = vec![0usize; communities];
    for &q in &community {
        sizes[q] += 1;
    }
    let mean_size = n as f64 / communities as f64;
    let p_in = if mean_size > 1.0 {
        (cfg.homophily * cfg.avg_degree / (mean_size - 1.0)).min(1.0)
    } else {
        0.0
    };
    let outside = n as f64 - mean_size;
    let p_out = if outside > 0.0 {
        ((1.0 - cfg.homophily) * cfg.avg_degree / outside).min(1.0)
    } else {
        0.0
    };

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if community[u] == community[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = Graph::new(n, edges)?;

    let d = cfg.feature_dim;
    let mut features = DenseMatrix::zeros(n, d);
    match cfg.feature_mode {
        FeatureMode::Linear => {
            let means: Vec<Vec<f64>> = (0..cfg.classes)
                .map(|_| (0..d).map(|_| cfg.signal * gaussian(&mut rng)).collect())
                .collect();
            for i in 0..n {
                let mu = &means[labels[i]];
                for (j, x) in features.row_mut(i).iter_mut().enumerate() {
                    *x = mu[j] + cfg.noise * gaussian(&mut rng);
                }
            }
        }
        FeatureMode::Xor => {
            // dims 0,1 carry the XOR bit; the remaining dims separate class pairs
            let pair_means: Vec<Vec<f64>> = (0..cfg.classes.div_ceil(2))
                .map(|_| (2..d).map(|_| cfg.signal * gaussian(&mut rng)).collect())
                .collect();
            for (i, &q) in community.iter().enumerate() {
                let class = q / 2;
                let s1 = if q.is_multiple_of(2) { 1.0 } else { -1.0 };
                let s2 = if class.is_multiple_of(2) { s1 } else { -s1 };
                let row = features.row_mut(i);
                row[0] = s1 * cfg.signal + cfg.noise * gaussian(&mut rng);
                row[1] = s2 * cfg.signal + cfg.noise * gaussian(&mut rng);
                let mu = &pair_means[class / 2];
                for (j, x) in row.iter_mut().enumerate().skip(2) {
                    *x = if cfg.classes > 2 { mu[j - 2] } else { 0.0 } + cfg.noise * gaussian(&mut rng);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = n * 6 / 10;
    let n_val = n * 2 / 10;
    let mut roles = vec![SplitRole::Test; n];
    for (rank, &node) in order.iter().enumerate() {
        roles[node] = if rank < n_train {
            SplitRole::Train
        } else if rank < n_train + n_val {
            SplitRole::Val
        } else {
            SplitRole::Test
        };
    }

    Ok(Dataset {
        graph,
        features,
        labels,
        split: Split::new(roles),
    })
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}
