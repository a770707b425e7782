//! Undirected graphs, coordinate-format sparse matrices and the
//! symmetric normalization `S = D̃^{-1/2} Ã D̃^{-1/2}`.

use crate::dense::DenseMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node id {id} out of range for a graph with {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("entry ({row}, {col}) out of range for a {rows}x{cols} matrix")]
    EntryOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("node {node} has zero degree; add self-loops before normalizing")]
    ZeroDegree { node: usize },
    #[error("degree vector has length {got}, expected {expected}")]
    DegreeLength { got: usize, expected: usize },
    #[error("degree of node {node} is {given} but row sum is {row_sum}")]
    DegreeMismatch { node: usize, given: f64, row_sum: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// `(row, col, value)`.
pub type Triplet = (usize, usize, f64);

/// Simple undirected graph. Edges are stored once as `(src, dst)` with
/// `src < dst`, sorted and deduplicated; self-loops are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Canonicalizes `edges`: orients each pair, drops self-loops and
    /// duplicates. Fails on ids outside `[0, num_nodes)`.
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let mut canon = Vec::new();
        for (u, v) in edges {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(GraphError::NodeOutOfRange { id, n: num_nodes });
                }
            }
            if u != v {
                canon.push((u.min(v), u.max(v)));
            }
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self {
            num_nodes,
            edges: canon,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

/// Coordinate-format sparse matrix with triplets kept in `(row, col)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    triplets: Vec<Triplet>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize, mut triplets: Vec<Triplet>) -> Result<Self, GraphError> {
        for &(row, col, _) in &triplets {
            if row >= rows || col >= cols {
                return Err(GraphError::EntryOutOfRange { row, col, rows, cols });
            }
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = triplets.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(GraphError::DuplicateEntry {
                row: w[0].0,
                col: w[0].1,
            });
        }
        Ok(Self { rows, cols, triplets })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn into_triplets(self) -> Vec<Triplet> {
        self.triplets
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.triplets {
            m.set(r, c, v);
        }
        m
    }

    /// Largest `|M[i][j] - M[j][i]|` over stored entries (missing mirror
    /// entries count as zero). `None` for non-square matrices.
    pub fn max_asymmetry(&self) -> Option<f64> {
        if self.rows != self.cols {
            return None;
        }
        let lookup = |r: usize, c: usize| {
            self.triplets
                .binary_search_by_key(&(r, c), |&(r, c, _)| (r, c))
                .map_or(0.0, |i| self.triplets[i].2)
        };
        Some(
            self.triplets
                .iter()
                .map(|&(r, c, v)| (v - lookup(c, r)).abs())
                .fold(0.0, f64::max),
        )
    }

    /// Sparse-dense product. `None` on dimension mismatch.
    pub fn spmm(&self, x: &DenseMatrix) -> Option<DenseMatrix> {
        if self.cols != x.rows() {
            return None;
        }
        let mut out = DenseMatrix::zeros(self.rows, x.cols());
        accumulate_spmm(&self.triplets, x, &mut out);
        Some(out)
    }
}

/// `out += T · x` for the triplet list `T`. Indices must be in range.
pub(crate) fn accumulate_spmm(triplets: &[Triplet], x: &DenseMatrix, out: &mut DenseMatrix) {
    for &(r, c, v) in triplets {
        let src = x.row(c);
        for (o, &s) in out.row_mut(r).iter_mut().zip(src) {
            *o += v * s;
        }
    }
}

/// Per-node degrees of `Ã`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector(Vec<f64>);

impl DegreeVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `1/sqrt(d_i)` per node, rejecting non-positive degrees.
    pub fn inv_sqrt(&self) -> Result<Vec<f64>, GraphError> {
        self.0
            .iter()
            .enumerate()
            .map(|(node, &d)| {
                if d > 0.0 {
                    Ok(1.0 / d.sqrt())
                } else {
                    Err(GraphError::ZeroDegree { node })
                }
            })
            .collect()
    }
}

/// `Ã = A + I` as a symmetric 0/1 matrix with both orientations of every
/// edge and exactly `n` diagonal entries.
pub fn add_self_loops(g: &Graph) -> SparseMatrix {
    let n = g.num_nodes();
    let mut triplets = Vec::with_capacity(n + 2 * g.num_edges());
    triplets.extend((0..n).map(|i| (i, i, 1.0)));
    for &(u, v) in g.edges() {
        triplets.push((u, v, 1.0));
        triplets.push((v, u, 1.0));
    }
    triplets.sort_by_key(|&(r, c, _)| (r, c));
    SparseMatrix {
        rows: n,
        cols: n,
        triplets,
    }
}

pub fn degree_vector(a_tilde: &SparseMatrix) -> DegreeVector {
    let mut deg = vec![0.0; a_tilde.rows()];
    for &(r, _, v) in a_tilde.triplets() {
        deg[r] += v;
    }
    DegreeVector(deg)
}

/// Normalized value of a single `Ã` entry. Shared by the whole-matrix and
/// block-wise paths so both produce identical bits.
#[inline]
pub(crate) fn normalized_entry(value: f64, inv_sqrt_row: f64, inv_sqrt_col: f64) -> f64 {
    value * inv_sqrt_row * inv_sqrt_col
}

/// `S[i][j] = Ã[i][j] / sqrt(d[i]·d[j])`.
pub fn normalize_adjacency(a_tilde: &SparseMatrix, d: &DegreeVector) -> Result<SparseMatrix, GraphError> {
    if d.len() != a_tilde.rows() || a_tilde.rows() != a_tilde.cols() {
        return Err(GraphError::DegreeLength {
            got: d.len(),
            expected: a_tilde.rows(),
        });
    }
    let row_sums = degree_vector(a_tilde);
    for (node, (&given, &row_sum)) in d.values().iter().zip(row_sums.values()).enumerate() {
        if given <= 0.0 {
            return Err(GraphError::ZeroDegree { node });
        }
        if (given - row_sum).abs() > 1e-9 * given.max(1.0) {
            return Err(GraphError::DegreeMismatch { node, given, row_sum });
        }
    }
    let inv = d.inv_sqrt()?;
    let triplets = a_tilde
        .triplets()
        .iter()
        .map(|&(r, c, v)| (r, c, normalized_entry(v, inv[r], inv[c])))
        .collect();
    Ok(SparseMatrix {
        rows: a_tilde.rows(),
        cols: a_tilde.cols(),
        triplets,
    })
}

/// `S` for a graph in one call.
pub fn normalized_adjacency(g: &Graph) -> SparseMatrix {
    let a = add_self_loops(g);
    let d = degree_vector(&a);
    normalize_adjacency(&a, &d).expect("self-loops guarantee positive degrees")
}
