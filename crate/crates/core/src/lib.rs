//! Graph neural network training via the LC rewrite: every filter applied
//! after an activation is pushed down until it touches the input features,
//! so all graph propagation can be precomputed block by block under a
//! memory budget and weights are then learned with plain mini-batches.

pub mod block;
pub mod dense;
pub mod formula;
pub mod graph;
pub mod io;
pub mod oracle;
pub mod rewrite;
pub mod synthetic;
pub mod train;

pub use block::{BlockError, DecompositionPlan, PrecomputedFeatures};
pub use dense::DenseMatrix;
pub use formula::{build_formula, ActivationKind, CombineKind, Formula, FormulaError, ModelFamily, ModelSpec};
pub use graph::{normalized_adjacency, DegreeVector, Graph, GraphError, SparseMatrix, Triplet};
pub use rewrite::{lc_transform, PlanSpec};
pub use synthetic::{gen_synthetic, Dataset, Split, SplitRole, SyntheticConfig};
pub use train::{LcModel, TrainConfig, TrainError};
