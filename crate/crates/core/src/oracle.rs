//! Dense reference evaluation of formulas. Slow and exact; used as ground
//! truth for the rewrite, the blocked precomputation and the trainer.

use crate::dense::DenseMatrix;
use crate::formula::{ActivationKind, CombineKind, Formula};
use std::collections::BTreeMap;
use thiserror::Error;

/// Largest node count the oracle accepts.
pub const MAX_ORACLE_NODES: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no weight matrix bound to index {0}")]
    MissingWeight(usize),
    #[error("attention sum has {terms} terms but only {given} coefficients were given")]
    MissingAttention { terms: usize, given: usize },
    #[error("oracle refuses n = {0} (limit {MAX_ORACLE_NODES})")]
    TooLarge(usize),
}

/// Parameter values bound to a formula's weight indices and attention slots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    pub weights: BTreeMap<usize, DenseMatrix>,
    pub attn: Vec<f64>,
}

fn mismatch(what: &str, a: (usize, usize), b: (usize, usize)) -> OracleError {
    OracleError::ShapeMismatch(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

fn check_size(s_dense: &DenseMatrix, x: &DenseMatrix) -> Result<(), OracleError> {
    let n = s_dense.rows();
    if n > MAX_ORACLE_NODES || x.rows() > MAX_ORACLE_NODES {
        return Err(OracleError::TooLarge(n.max(x.rows())));
    }
    if s_dense.cols() != n || x.rows() != n {
        return Err(mismatch("S vs X", s_dense.shape(), x.shape()));
    }
    Ok(())
}

/// Recursive dense evaluation of `f` with `S` given densely.
pub fn evaluate_formula(
    f: &Formula,
    p: &ParamSet,
    s_dense: &DenseMatrix,
    x: &DenseMatrix,
) -> Result<DenseMatrix, OracleError> {
    check_size(s_dense, x)?;
    eval(f, p, s_dense, x)
}

fn eval(f: &Formula, p: &ParamSet, s: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix, OracleError> {
    Ok(match f {
        Formula::Feature => x.clone(),
        Formula::Filter(c) | Formula::FilterPower(_, c) => {
            let mut h = eval(c, p, s, x)?;
            for _ in 0..f.filter_power().unwrap() {
                h = s.matmul(&h).ok_or_else(|| mismatch("S·H", s.shape(), h.shape()))?;
            }
            h
        }
        Formula::WeightMul(i, c) => {
            let h = eval(c, p, s, x)?;
            let w = p.weights.get(i).ok_or(OracleError::MissingWeight(*i))?;
            h.matmul(w)
                .ok_or_else(|| mismatch(&format!("H·W_{i}"), h.shape(), w.shape()))?
        }
        Formula::Activation(ActivationKind::Relu, c) => eval(c, p, s, x)?.map(|v| v.max(0.0)),
        Formula::Activation(ActivationKind::Identity, c) => eval(c, p, s, x)?,
        Formula::Combine(kind, cs) => {
            let parts = cs.iter().map(|c| eval(c, p, s, x)).collect::<Result<Vec<_>, _>>()?;
            match kind {
                CombineKind::Concat => {
                    let refs: Vec<&DenseMatrix> = parts.iter().collect();
                    DenseMatrix::hconcat(&refs)
                        .ok_or_else(|| OracleError::ShapeMismatch("concat row counts differ".into()))?
                }
                CombineKind::Max => {
                    let mut acc = parts[0].clone();
                    for part in &parts[1..] {
                        acc = acc
                            .zip_map(part, f64::max)
                            .ok_or_else(|| mismatch("max pooling", acc.shape(), part.shape()))?;
                    }
                    acc
                }
            }
        }
        Formula::AttnSum(cs) => {
            if p.attn.len() < cs.len() {
                return Err(OracleError::MissingAttention {
                    terms: cs.len(),
                    given: p.attn.len(),
                });
            }
            let mut acc: Option<DenseMatrix> = None;
            for (c, &gamma) in cs.iter().zip(&p.attn) {
                let term = eval(c, p, s, x)?.scale(gamma);
                match acc.as_mut() {
                    None => acc = Some(term),
                    Some(a) if a.shape() == term.shape() => a.add_assign(&term),
                    Some(a) => return Err(mismatch("attention sum", a.shape(), term.shape())),
                }
            }
            acc.expect("validated formulas have non-empty sums")
        }
        Formula::Softmax(c) => softmax_rows(&eval(c, p, s, x)?),
    })
}

/// `S·(S·(…·X))`, `k` times. `k = 0` returns `X`.
pub fn matrix_power_aggregate(s_dense: &DenseMatrix, x: &DenseMatrix, k: u32) -> Result<DenseMatrix, OracleError> {
    check_size(s_dense, x)?;
    let mut h = x.clone();
    for _ in 0..k {
        h = s_dense.matmul(&h).expect("shapes checked");
    }
    Ok(h)
}
