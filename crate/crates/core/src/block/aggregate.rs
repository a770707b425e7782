use super::{BlockError, Executor};
use crate::dense::DenseMatrix;
use crate::graph::{add_self_loops, degree_vector, Graph, SparseMatrix};
use crate::rewrite::PlanSpec;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::ops::Range;

/// Contiguous, disjoint, size-balanced chunks of an edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBlockSet<'a, T> {
    pub blocks: Vec<&'a [T]>,
}

impl<T> EdgeBlockSet<'_, T> {
    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }
}

/// Splits into `m` chunks whose sizes are `⌈|E|/m⌉` (first `|E| mod m`
/// chunks) or `⌊|E|/m⌋`. `m > |E|` yields empty trailing chunks.
pub fn split_edges<T>(edges: &[T], m: usize) -> EdgeBlockSet<'_, T> {
    assert!(m >= 1, "block count must be positive");
    let base = edges.len() / m;
    let extra = edges.len() % m;
    let mut blocks = Vec::with_capacity(m);
    let mut start = 0;
    for i in 0..m {
        let len = base + usize::from(i < extra);
        blocks.push(&edges[start..start + len]);
        start += len;
    }
    EdgeBlockSet { blocks }
}

/// Column ranges of width `⌈d/c⌉`, the last one possibly narrower. Fewer
/// than `c` ranges come back when `⌈d/c⌉·(c-1) >= d`.
pub fn column_ranges(d: usize, c: usize) -> Vec<Range<usize>> {
    assert!(c >= 1, "column block count must be positive");
    let width = d.div_ceil(c).max(1);
    (0..c)
        .map(|i| (i * width).min(d)..((i + 1) * width).min(d))
        .filter(|r| !r.is_empty())
        .collect()
}

/// Normalizes `Ã` block by block; results are merged by disjoint union.
pub fn block_normalize(g: &Graph, a: usize, exec: &mut dyn Executor) -> Result<SparseMatrix, BlockError> {
    if a < 1 {
        return Err(BlockError::InvalidBudget("a must be >= 1".into()));
    }
    let a_tilde = add_self_loops(g);
    let inv = degree_vector(&a_tilde).inv_sqrt()?;
    let mut triplets = Vec::with_capacity(a_tilde.nnz());
    for block in split_edges(a_tilde.triplets(), a).blocks {
        triplets.extend(exec.normalize_block(block, &inv)?);
    }
    Ok(SparseMatrix::new(g.num_nodes(), g.num_nodes(), triplets)?)
}

/// Aggregated features `S^k·X`, keyed by `k`. Key 0 holds `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedFeatures {
    pub per_power: BTreeMap<u32, DenseMatrix>,
    pub n: usize,
    pub d: usize,
    pub k_max: u32,
    pub dataset_hash: String,
}

impl PrecomputedFeatures {
    pub fn get(&self, k: u32) -> Option<&DenseMatrix> {
        self.per_power.get(&k)
    }

    pub fn powers(&self) -> Vec<u32> {
        self.per_power.keys().copied().collect()
    }

    /// Keeps only the powers in `plan`; `None` names the first missing one.
    pub fn restrict_to(&self, plan: &PlanSpec) -> Result<Self, u32> {
        let mut per_power = BTreeMap::new();
        for k in plan.powers() {
            per_power.insert(k, self.per_power.get(&k).ok_or(k)?.clone());
        }
        Ok(Self {
            per_power,
            n: self.n,
            d: self.d,
            k_max: plan.max_power(),
            dataset_hash: self.dataset_hash.clone(),
        })
    }
}

/// Block-wise feature aggregation: `S` is cut into `b` edge blocks once,
/// then for each hop the current features are cut into `c` column blocks,
/// each column block accumulates `Σ_j S^(j)·X^(i)` in ascending `j`, and
/// the column results are concatenated to form the next hop's input.
pub fn block_feature_aggregation(
    s: &SparseMatrix,
    x: &DenseMatrix,
    k: u32,
    b: usize,
    c: usize,
    exec: &mut dyn Executor,
) -> Result<PrecomputedFeatures, BlockError> {
    let n = x.rows();
    if s.rows() != n || s.cols() != n {
        return Err(BlockError::Shape(format!(
            "S is {}x{} but X has {n} rows",
            s.rows(),
            s.cols()
        )));
    }
    if k < 1 || b < 1 || c < 1 {
        return Err(BlockError::InvalidBudget(format!(
            "K, b, c must be >= 1 (got {k}, {b}, {c})"
        )));
    }
    let s_blocks = split_edges(s.triplets(), b);
    let ranges = column_ranges(x.cols(), c);

    let mut per_power = BTreeMap::new();
    per_power.insert(0, x.clone());
    let mut prev = x.clone();
    for hop in 1..=k {
        let mut parts = Vec::with_capacity(ranges.len());
        for range in &ranges {
            let x_block = prev.column_block(range.start, range.end);
            let mut acc = DenseMatrix::zeros(n, x_block.cols());
            for s_block in &s_blocks.blocks {
                exec.aggregate_block(s_block, &x_block, &mut acc)?;
            }
            parts.push(acc);
        }
        let refs: Vec<&DenseMatrix> = parts.iter().collect();
        let next = if refs.is_empty() {
            DenseMatrix::zeros(n, 0)
        } else {
            DenseMatrix::hconcat(&refs).expect("column blocks share row count")
        };
        per_power.insert(hop, next.clone());
        prev = next;
    }
    Ok(PrecomputedFeatures {
        per_power,
        n,
        d: x.cols(),
        k_max: k,
        dataset_hash: String::new(),
    })
}

/// SHA-256 over the canonical edge list and the feature bits.
pub fn dataset_hash(g: &Graph, x: &DenseMatrix) -> String {
    let mut h = Sha256::new();
    h.update((g.num_nodes() as u64).to_le_bytes());
    h.update((g.num_edges() as u64).to_le_bytes());
    for &(u, v) in g.edges() {
        h.update((u as u64).to_le_bytes());
        h.update((v as u64).to_le_bytes());
    }
    h.update((x.rows() as u64).to_le_bytes());
    h.update((x.cols() as u64).to_le_bytes());
    for v in x.values() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}
