//! Expression trees for GNN architectures.
//!
//! A [`Formula`] is built bottom-up from the feature symbol `X`. Filters
//! left-multiply by powers of the normalized adjacency `S`, weights
//! right-multiply by a learnable matrix, and the remaining nodes are
//! activations, skip-combinations, attention sums and the output softmax.
//!
//! Canonical rendering grammar:
//!
//! ```text
//! X                       feature symbol
//! S^k·t                   filter power k applied to t
//! S^k·(t·W_i)             filter applied to a weighted term
//! t·W_i                   weight W_i (index 0 renders as plain `W`)
//! σ(t)   id(t)            ReLU / identity activation
//! COMB_concat[t, …]       concatenation skip-combination
//! COMB_max[t, …]          element-wise max skip-combination
//! Σγ[t_0, t_1, …]         attention sum, position k carries γ_k
//! softmax(t)              row-wise softmax
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("unsupported model family `{0}` (expected gcn|sgc|jknet|gprgnn)")]
    UnknownFamily(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("malformed formula: {0}")]
    Malformed(String),
    #[error("formula is not in LC form: {0}")]
    NotLc(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationKind {
    Relu,
    Identity,
}

impl FromStr for ActivationKind {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Self::Relu),
            "identity" | "linear" => Ok(Self::Identity),
            other => Err(FormulaError::InvalidSpec(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CombineKind {
    Concat,
    Max,
}

impl FromStr for CombineKind {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concat" => Ok(Self::Concat),
            "max" => Ok(Self::Max),
            other => Err(FormulaError::InvalidSpec(format!("unknown combine `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Feature,
    Filter(Box<Formula>),
    FilterPower(u32, Box<Formula>),
    WeightMul(usize, Box<Formula>),
    Activation(ActivationKind, Box<Formula>),
    Combine(CombineKind, Vec<Formula>),
    AttnSum(Vec<Formula>),
    Softmax(Box<Formula>),
}

impl Formula {
    pub fn x() -> Self {
        Self::Feature
    }

    pub fn filter(self) -> Self {
        Self::Filter(Box::new(self))
    }

    pub fn filter_pow(self, k: u32) -> Self {
        Self::FilterPower(k, Box::new(self))
    }

    pub fn weight(self, index: usize) -> Self {
        Self::WeightMul(index, Box::new(self))
    }

    pub fn act(self, kind: ActivationKind) -> Self {
        Self::Activation(kind, Box::new(self))
    }

    pub fn softmax(self) -> Self {
        Self::Softmax(Box::new(self))
    }

    /// Power of a filter node; `None` for any other variant.
    pub fn filter_power(&self) -> Option<u32> {
        match self {
            Self::Filter(_) => Some(1),
            Self::FilterPower(k, _) => Some(*k),
            _ => None,
        }
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Self::Feature => vec![],
            Self::Filter(c)
            | Self::FilterPower(_, c)
            | Self::WeightMul(_, c)
            | Self::Activation(_, c)
            | Self::Softmax(c) => vec![c],
            Self::Combine(_, cs) | Self::AttnSum(cs) => cs.iter().collect(),
        }
    }

    /// Replaces every `Filter(t)` by `FilterPower(1, t)`.
    pub fn canonical(&self) -> Self {
        match self {
            Self::Feature => Self::Feature,
            Self::Filter(c) => Self::FilterPower(1, Box::new(c.canonical())),
            Self::FilterPower(k, c) => Self::FilterPower(*k, Box::new(c.canonical())),
            Self::WeightMul(i, c) => Self::WeightMul(*i, Box::new(c.canonical())),
            Self::Activation(a, c) => Self::Activation(*a, Box::new(c.canonical())),
            Self::Softmax(c) => Self::Softmax(Box::new(c.canonical())),
            Self::Combine(k, cs) => Self::Combine(*k, cs.iter().map(Self::canonical).collect()),
            Self::AttnSum(cs) => Self::AttnSum(cs.iter().map(Self::canonical).collect()),
        }
    }

    /// Checks well-formedness: softmax only at the root, non-empty
    /// combinations, positive filter powers, and filters applied only to
    /// single multiplicative chains (no combinations beneath a filter).
    pub fn validate(&self) -> Result<(), FormulaError> {
        let root = match self {
            Self::Softmax(c) => c.as_ref(),
            other => other,
        };
        validate_body(root, false)
    }

    /// Every weight index in the formula, ascending and deduplicated.
    pub fn weight_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |f| {
            if let Self::WeightMul(i, _) = f {
                out.push(*i);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn count_nodes(&self, pred: impl Fn(&Formula) -> bool) -> usize {
        let mut n = 0;
        self.visit(&mut |f| {
            if pred(f) {
                n += 1;
            }
        });
        n
    }
}

fn validate_body(f: &Formula, under_filter: bool) -> Result<(), FormulaError> {
    match f {
        Formula::Feature => Ok(()),
        Formula::Softmax(_) => Err(FormulaError::Malformed("softmax below the root".into())),
        Formula::FilterPower(0, _) => Err(FormulaError::Malformed("filter power 0".into())),
        Formula::Filter(c) | Formula::FilterPower(_, c) => validate_body(c, true),
        Formula::WeightMul(_, c) | Formula::Activation(_, c) => validate_body(c, under_filter),
        Formula::Combine(_, cs) | Formula::AttnSum(cs) => {
            if under_filter {
                return Err(FormulaError::Malformed(
                    "filter applied to a combination of branches".into(),
                ));
            }
            if cs.is_empty() {
                return Err(FormulaError::Malformed("empty combination".into()));
            }
            cs.iter().try_for_each(|c| validate_body(c, false))
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Feature => f.write_str("X"),
            Self::Filter(c) | Self::FilterPower(_, c) => {
                let k = self.filter_power().unwrap();
                if matches!(**c, Self::WeightMul(..)) {
                    write!(f, "S^{k}·({c})")
                } else {
                    write!(f, "S^{k}·{c}")
                }
            }
            Self::WeightMul(0, c) => write!(f, "{c}·W"),
            Self::WeightMul(i, c) => write!(f, "{c}·W_{i}"),
            Self::Activation(ActivationKind::Relu, c) => write!(f, "σ({c})"),
            Self::Activation(ActivationKind::Identity, c) => write!(f, "id({c})"),
            Self::Softmax(c) => write!(f, "softmax({c})"),
            Self::Combine(kind, cs) => {
                let tag = match kind {
                    CombineKind::Concat => "concat",
                    CombineKind::Max => "max",
                };
                write!(f, "COMB_{tag}[")?;
                write_list(f, cs)?;
                f.write_str("]")
            }
            Self::AttnSum(cs) => {
                f.write_str("Σγ[")?;
                write_list(f, cs)?;
                f.write_str("]")
            }
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, items: &[Formula]) -> fmt::Result {
    for (i, c) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{c}")?;
    }
    Ok(())
}

/// Deterministic canonical string. Byte-equal renderings imply equal
/// canonical forms and vice versa.
pub fn render_formula(f: &Formula) -> String {
    f.to_string()
}

/// True when `f` is a filter sitting directly on a weight product or an
/// activation: `S^j·(t·W_a·…)` or `S^j·σ(t)`. Weight products associate,
/// so the filter can always be moved down the chain and past the first
/// activation it meets.
pub fn is_redex(f: &Formula) -> bool {
    match f {
        Formula::Filter(c) | Formula::FilterPower(_, c) => {
            matches!(**c, Formula::WeightMul(..) | Formula::Activation(..))
        }
        _ => false,
    }
}

pub fn count_redexes(f: &Formula) -> usize {
    f.count_nodes(is_redex)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    Gcn,
    Sgc,
    JkNet,
    GprGnn,
}

impl FromStr for ModelFamily {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Self::Gcn),
            "sgc" => Ok(Self::Sgc),
            "jknet" => Ok(Self::JkNet),
            "gprgnn" => Ok(Self::GprGnn),
            _ => Err(FormulaError::UnknownFamily(s.to_string())),
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gcn => "gcn",
            Self::Sgc => "sgc",
            Self::JkNet => "jknet",
            Self::GprGnn => "gprgnn",
        })
    }
}

/// Architecture hyperparameters that do not depend on the graph size.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub family: ModelFamily,
    /// Number of graph convolution (propagation) layers, `K`.
    pub conv_layers: usize,
    /// MLP depth `T`; only read for GPRGNN.
    pub mlp_layers: usize,
    /// Only read for JKNet.
    pub combine: CombineKind,
    pub activation: ActivationKind,
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, conv_layers: usize) -> Self {
        Self {
            family,
            conv_layers,
            mlp_layers: 2,
            combine: CombineKind::Concat,
            activation: ActivationKind::Relu,
            in_dim: 1,
            hidden_dim: 256,
            num_classes: 2,
        }
    }

    pub fn with_mlp_layers(mut self, t: usize) -> Self {
        self.mlp_layers = t;
        self
    }

    pub fn with_combine(mut self, c: CombineKind) -> Self {
        self.combine = c;
        self
    }

    pub fn with_activation(mut self, a: ActivationKind) -> Self {
        self.activation = a;
        self
    }

    pub fn with_dims(mut self, in_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        self.in_dim = in_dim;
        self.hidden_dim = hidden_dim;
        self.num_classes = num_classes;
        self
    }

    pub fn validate(&self) -> Result<(), FormulaError> {
        let bad = |m: &str| Err(FormulaError::InvalidSpec(m.to_string()));
        if self.conv_layers < 1 {
            return bad("conv_layers must be >= 1");
        }
        if self.family == ModelFamily::GprGnn && self.mlp_layers < 1 {
            return bad("mlp_layers must be >= 1 for gprgnn");
        }
        if self.in_dim == 0 || self.hidden_dim == 0 || self.num_classes == 0 {
            return bad("dims (in_dim, hidden_dim, num_classes) must be positive");
        }
        if self.family == ModelFamily::JkNet && self.num_classes > self.output_dim() {
            return bad("jknet emits its combined hidden representation; num_classes must not exceed it");
        }
        Ok(())
    }

    /// Shape `(rows, cols)` of every weight matrix the family uses.
    pub fn weight_shapes(&self) -> BTreeMap<usize, (usize, usize)> {
        let (d, h, y) = (self.in_dim, self.hidden_dim, self.num_classes);
        let chain = |layers: usize| {
            (1..=layers)
                .map(|i| {
                    let rows = if i == 1 { d } else { h };
                    let cols = if i == layers { y } else { h };
                    (i, (rows, cols))
                })
                .collect()
        };
        match self.family {
            ModelFamily::Gcn => chain(self.conv_layers),
            ModelFamily::GprGnn => chain(self.mlp_layers),
            ModelFamily::Sgc => BTreeMap::from([(0, (d, y))]),
            ModelFamily::JkNet => (1..=self.conv_layers)
                .map(|i| (i, (if i == 1 { d } else { h }, h)))
                .collect(),
        }
    }

    /// Width of the logits the formula produces.
    pub fn output_dim(&self) -> usize {
        match (self.family, self.combine) {
            (ModelFamily::JkNet, CombineKind::Concat) => self.conv_layers * self.hidden_dim,
            (ModelFamily::JkNet, CombineKind::Max) => self.hidden_dim,
            _ => self.num_classes,
        }
    }

    /// Number of attention coefficients (`K + 1` for GPRGNN, else 0).
    pub fn attention_len(&self) -> usize {
        match self.family {
            ModelFamily::GprGnn => self.conv_layers + 1,
            _ => 0,
        }
    }
}

/// `S·σ(…S·X·W_1…)·W_layers` with activations between layers but not after
/// the last one.
fn gcn_chain(layers: usize, act: ActivationKind) -> Formula {
    let mut h = Formula::x();
    for k in 1..=layers {
        if k > 1 {
            h = h.act(act);
        }
        h = h.filter().weight(k);
    }
    h
}

/// Builds the original (pre-LC) formulation of the given architecture.
pub fn build_formula(spec: &ModelSpec) -> Result<Formula, FormulaError> {
    spec.validate()?;
    let k = spec.conv_layers;
    let act = spec.activation;
    let body = match spec.family {
        ModelFamily::Gcn => gcn_chain(k, act),
        ModelFamily::Sgc => Formula::x().filter_pow(k as u32).weight(0),
        ModelFamily::JkNet => Formula::Combine(spec.combine, (1..=k).map(|i| gcn_chain(i, act)).collect()),
        ModelFamily::GprGnn => {
            let mut mlp = Formula::x();
            for t in 1..=spec.mlp_layers {
                if t > 1 {
                    mlp = mlp.act(act);
                }
                mlp = mlp.weight(t);
            }
            let terms = (0..=k)
                .map(|p| {
                    if p == 0 {
                        mlp.clone()
                    } else {
                        mlp.clone().filter_pow(p as u32)
                    }
                })
                .collect();
            Formula::AttnSum(terms)
        }
    };
    Ok(body.softmax())
}
