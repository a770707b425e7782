//! Reverse-mode differentiation over the handful of matrix ops LC models
//! need: products, ReLU, dropout masks, concatenation, element-wise max and
//! scalar-weighted sums.

use super::Scalar;
use crate::dense::DenseMatrix;

pub(crate) type NodeId = usize;

/// Parameter a leaf is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ParamRef {
    Weight(usize),
    Attn(usize),
}

enum Op<T> {
    Input,
    Param(ParamRef),
    MatMul(NodeId, NodeId),
    Relu(NodeId),
    Mask(NodeId, DenseMatrix<T>),
    Concat(Vec<NodeId>),
    Max(Vec<NodeId>),
    /// `Σ γ·term` with each `γ` a 1×1 node.
    WeightedSum(Vec<(NodeId, NodeId)>),
}

struct Node<T> {
    op: Op<T>,
    value: DenseMatrix<T>,
    needs_grad: bool,
}

#[derive(Default)]
pub(crate) struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op<T>, value: DenseMatrix<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        self.nodes.len() - 1
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix<T> {
        &self.nodes[id].value
    }

    pub fn input(&mut self, value: DenseMatrix<T>) -> NodeId {
        self.push(Op::Input, value, false)
    }

    pub fn param(&mut self, p: ParamRef, value: DenseMatrix<T>) -> NodeId {
        self.push(Op::Param(p), value, true)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Option<NodeId> {
        let v = self.nodes[a].value.matmul(&self.nodes[b].value)?;
        let g = self.needs(&[a, b]);
        Some(self.push(Op::MatMul(a, b), v, g))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| x.max(T::zero()));
        let g = self.needs(&[a]);
        self.push(Op::Relu(a), v, g)
    }

    /// Element-wise product with a fixed mask (dropout).
    pub fn mask(&mut self, a: NodeId, mask: DenseMatrix<T>) -> NodeId {
        let v = self.nodes[a].value.zip_map(&mask, |x, m| x * m).expect("mask shape");
        let g = self.needs(&[a]);
        self.push(Op::Mask(a, mask), v, g)
    }

    pub fn concat(&mut self, parts: Vec<NodeId>) -> Option<NodeId> {
        let refs: Vec<&DenseMatrix<T>> = parts.iter().map(|&p| &self.nodes[p].value).collect();
        let v = DenseMatrix::hconcat(&refs)?;
        let g = self.needs(&parts);
        Some(self.push(Op::Concat(parts), v, g))
    }

    pub fn max(&mut self, parts: Vec<NodeId>) -> Option<NodeId> {
        let mut v = self.nodes[parts[0]].value.clone();
        for &p in &parts[1..] {
            v = v.zip_map(&self.nodes[p].value, |a, b| a.max(b))?;
        }
        let g = self.needs(&parts);
        Some(self.push(Op::Max(parts), v, g))
    }

    pub fn weighted_sum(&mut self, terms: Vec<(NodeId, NodeId)>) -> Option<NodeId> {
        let first_term = terms[0].1;
        let shape = self.nodes[first_term].value.shape();
        let mut v = DenseMatrix::zeros(shape.0, shape.1);
        for &(gamma, term) in &terms {
            let t = &self.nodes[term].value;
            if t.shape() != shape {
                return None;
            }
            let gv = self.nodes[gamma].value.get(0, 0);
            for (o, &x) in v.values_mut().iter_mut().zip(t.values()) {
                *o = *o + gv * x;
            }
        }
        let ids: Vec<NodeId> = terms.iter().flat_map(|&(g, t)| [g, t]).collect();
        let g = self.needs(&ids);
        Some(self.push(Op::WeightedSum(terms), v, g))
    }

    /// Propagates `seed` (the gradient of the loss w.r.t. node `out`) back to
    /// every parameter leaf. Returns `(param, gradient)` pairs; a parameter
    /// used by several leaves appears once per leaf.
    pub fn backward(&self, out: NodeId, seed: DenseMatrix<T>) -> Vec<(ParamRef, DenseMatrix<T>)> {
        let mut grads: Vec<Option<DenseMatrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out] = Some(seed);
        let mut params = Vec::new();

        let add = |grads: &mut Vec<Option<DenseMatrix<T>>>, id: NodeId, g: DenseMatrix<T>| match &mut grads[id] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        };

        for id in (0..=out).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            match &node.op {
                Op::Input => {}
                Op::Param(p) => params.push((*p, g)),
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    if self.nodes[*a].needs_grad {
                        add(&mut grads, *a, g.matmul_t(bv).expect("shapes"));
                    }
                    if self.nodes[*b].needs_grad {
                        add(&mut grads, *b, av.t_matmul(&g).expect("shapes"));
                    }
                }
                Op::Relu(a) => {
                    let input = &self.nodes[*a].value;
                    let d = g
                        .zip_map(input, |gv, x| if x > T::zero() { gv } else { T::zero() })
                        .unwrap();
                    add(&mut grads, *a, d);
                }
                Op::Mask(a, mask) => add(&mut grads, *a, g.zip_map(mask, |gv, m| gv * m).unwrap()),
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.nodes[p].value.cols();
                        if self.nodes[p].needs_grad {
                            add(&mut grads, p, g.column_block(start, start + w));
                        }
                        start += w;
                    }
                }
                Op::Max(parts) => {
                    // ties route to the lowest branch index
                    let mut routed: Vec<DenseMatrix<T>> =
                        parts.iter().map(|_| DenseMatrix::zeros(g.rows(), g.cols())).collect();
                    for (e, &gv) in g.values().iter().enumerate() {
                        let mut best = 0;
                        let mut best_v = self.nodes[parts[0]].value.values()[e];
                        for (bi, &p) in parts.iter().enumerate().skip(1) {
                            let v = self.nodes[p].value.values()[e];
                            if v > best_v {
                                best = bi;
                                best_v = v;
                            }
                        }
                        routed[best].values_mut()[e] = gv;
                    }
                    for (&p, r) in parts.iter().zip(routed) {
                        if self.nodes[p].needs_grad {
                            add(&mut grads, p, r);
                        }
                    }
                }
                Op::WeightedSum(terms) => {
                    for &(gamma, term) in terms {
                        let tv = &self.nodes[term].value;
                        if self.nodes[gamma].needs_grad {
                            let dg = g
                                .values()
                                .iter()
                                .zip(tv.values())
                                .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                            add(&mut grads, gamma, DenseMatrix::from_vec(1, 1, vec![dg]).unwrap());
                        }
                        if self.nodes[term].needs_grad {
                            let gv = self.nodes[gamma].value.get(0, 0);
                            add(&mut grads, term, g.scale(gv));
                        }
                    }
                }
            }
        }
        params
    }
}
