use super::tape::{NodeId, ParamRef, Tape};
use super::{Scalar, TrainConfig, TrainError};
use crate::block::PrecomputedFeatures;
use crate::dense::DenseMatrix;
use crate::formula::{build_formula, ActivationKind, CombineKind, Formula, ModelSpec};
use crate::rewrite::{lc_transform, validate_lc, PlanSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// A model whose formula is in LC form, with the powers it consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct LcModel {
    spec: ModelSpec,
    formula: Formula,
    plan: PlanSpec,
}

impl LcModel {
    /// Builds the architecture's formula and rewrites it to LC form.
    pub fn new(spec: ModelSpec) -> Result<Self, TrainError> {
        let original = build_formula(&spec)?;
        let (formula, plan) = lc_transform(&original)?;
        Ok(Self { spec, formula, plan })
    }

    /// Wraps an existing formula, refusing anything not already in LC form.
    pub fn from_formula(spec: ModelSpec, formula: Formula) -> Result<Self, TrainError> {
        spec.validate()?;
        formula.validate()?;
        let plan = PlanSpec::from_lc(&formula)?;
        debug_assert!(validate_lc(&formula));
        Ok(Self { spec, formula, plan })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn plan(&self) -> &PlanSpec {
        &self.plan
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }
}

/// Precomputed `S^k·X` matrices converted to the training precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore<T> {
    per_power: BTreeMap<u32, DenseMatrix<T>>,
    n: usize,
}

impl<T: Scalar> FeatureStore<T> {
    pub fn from_precomputed(pf: &PrecomputedFeatures, plan: &PlanSpec) -> Result<Self, TrainError> {
        let mut per_power = BTreeMap::new();
        for k in plan.powers() {
            let m = pf.get(k).ok_or(TrainError::MissingPower(k))?;
            per_power.insert(k, m.cast());
        }
        Ok(Self { per_power, n: pf.n })
    }

    pub fn num_rows(&self) -> usize {
        self.n
    }

    fn get(&self, k: u32) -> Result<&DenseMatrix<T>, TrainError> {
        self.per_power.get(&k).ok_or(TrainError::MissingPower(k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub weights: BTreeMap<usize, DenseMatrix<T>>,
    pub attn: Vec<T>,
    m_weights: BTreeMap<usize, DenseMatrix<T>>,
    v_weights: BTreeMap<usize, DenseMatrix<T>>,
    m_attn: Vec<T>,
    v_attn: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> ModelParams<T> {
    /// Parameters with zeroed optimizer state.
    pub fn new(weights: BTreeMap<usize, DenseMatrix<T>>, attn: Vec<T>) -> Self {
        let zeros_like = |w: &BTreeMap<usize, DenseMatrix<T>>| {
            w.iter()
                .map(|(&i, m)| (i, DenseMatrix::zeros(m.rows(), m.cols())))
                .collect()
        };
        Self {
            m_weights: zeros_like(&weights),
            v_weights: zeros_like(&weights),
            m_attn: vec![T::zero(); attn.len()],
            v_attn: vec![T::zero(); attn.len()],
            weights,
            attn,
            step: 0,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights.values().all(DenseMatrix::all_finite) && self.attn.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T> {
    pub weights: BTreeMap<usize, DenseMatrix<T>>,
    pub attn: Vec<T>,
}

impl<T: Scalar> ModelGrads<T> {
    fn zeros_like(p: &ModelParams<T>) -> Self {
        Self {
            weights: p
                .weights
                .iter()
                .map(|(&i, m)| (i, DenseMatrix::zeros(m.rows(), m.cols())))
                .collect(),
            attn: vec![T::zero(); p.attn.len()],
        }
    }
}

fn cast<T: Scalar>(v: f64) -> T {
    T::from(v).expect("f64 converts to every Scalar")
}

/// Attention start values: `γ_k = α(1-α)^k` for `k < K`, `γ_K = (1-α)^K`.
pub(crate) fn attention_init(alpha: f64, len: usize) -> Vec<f64> {
    let Some(k_max) = len.checked_sub(1) else {
        return Vec::new();
    };
    (0..len)
        .map(|k| {
            if k < k_max {
                alpha * (1.0 - alpha).powi(k as i32)
            } else {
                (1.0 - alpha).powi(k as i32)
            }
        })
        .collect()
}

/// Uniform `±1/sqrt(fan_in)` weights and the attention start values.
pub fn init_params<T: Scalar>(model: &LcModel, cfg: &TrainConfig) -> ModelParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = model
        .spec
        .weight_shapes()
        .into_iter()
        .map(|(i, (rows, cols))| {
            let bound = 1.0 / (rows as f64).sqrt();
            let m = DenseMatrix::from_fn(rows, cols, |_, _| cast(rng.random_range(-bound..=bound)));
            (i, m)
        })
        .collect();
    let attn = attention_init(cfg.attention_init, model.spec.attention_len())
        .into_iter()
        .map(cast)
        .collect();
    ModelParams::new(weights, attn)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

struct Compiler<'a, T, R> {
    tape: Tape<T>,
    params: &'a ModelParams<T>,
    store: &'a FeatureStore<T>,
    rows: &'a [usize],
    mode: Mode,
    cfg: &'a TrainConfig,
    rng: &'a mut R,
    weight_leaves: BTreeMap<usize, NodeId>,
}

impl<T: Scalar, R: Rng> Compiler<'_, T, R> {
    fn dropout(&mut self, id: NodeId, p: f64) -> NodeId {
        if self.mode == Mode::Eval || p == 0.0 {
            return id;
        }
        let (r, c) = self.tape.value(id).shape();
        let keep = cast::<T>(1.0 / (1.0 - p));
        let mask = DenseMatrix::from_fn(r, c, |_, _| if self.rng.random::<f64>() < p { T::zero() } else { keep });
        self.tape.mask(id, mask)
    }

    fn weight(&mut self, i: usize) -> Result<NodeId, TrainError> {
        if let Some(&id) = self.weight_leaves.get(&i) {
            return Ok(id);
        }
        let w = self
            .params
            .weights
            .get(&i)
            .ok_or_else(|| TrainError::Shape(format!("no parameter for W_{i}")))?;
        let id = self.tape.param(ParamRef::Weight(i), w.clone());
        self.weight_leaves.insert(i, id);
        Ok(id)
    }

    fn compile(&mut self, f: &Formula) -> Result<NodeId, TrainError> {
        match f {
            Formula::Softmax(c) => self.compile(c),
            Formula::Feature | Formula::Filter(_) | Formula::FilterPower(..) => {
                let mut k = 0;
                let mut cur = f;
                while let Some(p) = cur.filter_power() {
                    k += p;
                    cur = cur.children()[0];
                }
                if !matches!(cur, Formula::Feature) {
                    return Err(TrainError::Formula(crate::formula::FormulaError::NotLc(f.to_string())));
                }
                let rows = self.store.get(k)?.select_rows(self.rows);
                let id = self.tape.input(rows);
                Ok(self.dropout(id, self.cfg.input_dropout))
            }
            Formula::WeightMul(i, c) => {
                let h = self.compile(c)?;
                let w = self.weight(*i)?;
                self.tape.matmul(h, w).ok_or_else(|| {
                    TrainError::Shape(format!(
                        "H is {:?} but W_{i} is {:?}",
                        self.tape.value(h).shape(),
                        self.tape.value(w).shape()
                    ))
                })
            }
            Formula::Activation(kind, c) => {
                let h = self.compile(c)?;
                let h = match kind {
                    ActivationKind::Relu => self.tape.relu(h),
                    ActivationKind::Identity => h,
                };
                Ok(self.dropout(h, self.cfg.dropout))
            }
            Formula::Combine(kind, cs) => {
                let parts = cs.iter().map(|c| self.compile(c)).collect::<Result<Vec<_>, _>>()?;
                let out = match kind {
                    CombineKind::Concat => self.tape.concat(parts),
                    CombineKind::Max => self.tape.max(parts),
                };
                out.ok_or_else(|| TrainError::Shape("combined branches disagree in shape".into()))
            }
            Formula::AttnSum(cs) => {
                let mut terms = Vec::with_capacity(cs.len());
                for (k, c) in cs.iter().enumerate() {
                    let gv = *self
                        .params
                        .attn
                        .get(k)
                        .ok_or_else(|| TrainError::Shape(format!("no attention coefficient γ_{k}")))?;
                    let gm = DenseMatrix::from_vec(1, 1, vec![gv]).unwrap();
                    let gamma = if self.cfg.train_attention {
                        self.tape.param(ParamRef::Attn(k), gm)
                    } else {
                        self.tape.input(gm)
                    };
                    terms.push((gamma, self.compile(c)?));
                }
                self.tape
                    .weighted_sum(terms)
                    .ok_or_else(|| TrainError::Shape("attention terms disagree in shape".into()))
            }
        }
    }
}

fn compile<'a, T: Scalar, R: Rng>(
    model: &LcModel,
    params: &'a ModelParams<T>,
    store: &'a FeatureStore<T>,
    rows: &'a [usize],
    mode: Mode,
    cfg: &'a TrainConfig,
    rng: &'a mut R,
) -> Result<(Tape<T>, NodeId), TrainError> {
    if let Some(&r) = rows.iter().find(|&&r| r >= store.num_rows()) {
        return Err(TrainError::Shape(format!(
            "row {r} outside {} feature rows",
            store.num_rows()
        )));
    }
    let mut c = Compiler {
        tape: Tape::new(),
        params,
        store,
        rows,
        mode,
        cfg,
        rng,
        weight_leaves: BTreeMap::new(),
    };
    let out = c.compile(&model.formula)?;
    Ok((c.tape, out))
}

/// Logits (pre-softmax) for the given rows.
pub fn forward<T: Scalar, R: Rng>(
    model: &LcModel,
    params: &ModelParams<T>,
    store: &FeatureStore<T>,
    rows: &[usize],
    mode: Mode,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<DenseMatrix<T>, TrainError> {
    let (tape, out) = compile(model, params, store, rows, mode, cfg, rng)?;
    Ok(tape.value(out).clone())
}

/// Mean cross-entropy of row-wise softmax and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &DenseMatrix<T>, labels: &[usize]) -> (T, DenseMatrix<T>) {
    assert_eq!(logits.rows(), labels.len(), "one label per row");
    let batch = cast::<T>(logits.rows().max(1) as f64);
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut loss = T::zero();
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum_exp = row.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
        let log_z = max + sum_exp.ln();
        loss = loss + (log_z - row[label]);
        let g = grad.row_mut(i);
        for (j, (gj, &v)) in g.iter_mut().zip(row).enumerate() {
            let p = (v - log_z).exp();
            let target = if j == label { T::one() } else { T::zero() };
            *gj = (p - target) / batch;
        }
    }
    (loss / batch, grad)
}

/// Loss (cross-entropy plus `weight_decay/2 · Σ‖W‖²`) and gradients of
/// every parameter, on the batch `rows`.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grads<T: Scalar, R: Rng>(
    model: &LcModel,
    params: &ModelParams<T>,
    store: &FeatureStore<T>,
    rows: &[usize],
    labels: &[usize],
    mode: Mode,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(T, ModelGrads<T>), TrainError> {
    let (tape, out) = compile(model, params, store, rows, mode, cfg, rng)?;
    let logits = tape.value(out);
    let classes = logits.cols();
    let batch_labels = rows
        .iter()
        .map(|&r| {
            let label = *labels
                .get(r)
                .ok_or_else(|| TrainError::Shape(format!("no label for row {r}")))?;
            if label >= classes {
                return Err(TrainError::LabelOutOfRange { row: r, label, classes });
            }
            Ok(label)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (mut loss, seed) = softmax_cross_entropy(logits, &batch_labels);

    let mut grads = ModelGrads::zeros_like(params);
    for (p, g) in tape.backward(out, seed) {
        match p {
            ParamRef::Weight(i) => grads.weights.get_mut(&i).expect("known weight").add_assign(&g),
            ParamRef::Attn(k) => grads.attn[k] = grads.attn[k] + g.get(0, 0),
        }
    }
    if cfg.weight_decay > 0.0 {
        let wd = cast::<T>(cfg.weight_decay);
        let half = cast::<T>(0.5);
        for (i, w) in &params.weights {
            loss = loss + half * wd * w.frobenius_sq();
            let g = grads.weights.get_mut(i).unwrap();
            for (gv, &wv) in g.values_mut().iter_mut().zip(w.values()) {
                *gv = *gv + wd * wv;
            }
        }
    }
    Ok((loss, grads))
}

fn adam_update<T: Scalar>(p: &mut [T], m: &mut [T], v: &mut [T], g: &[T], lr: T, bc1: T, bc2: T) {
    let (b1, b2, eps) = (cast::<T>(ADAM_BETA1), cast::<T>(ADAM_BETA2), cast::<T>(ADAM_EPS));
    for (((pv, mv), vv), &gv) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
        *mv = b1 * *mv + (T::one() - b1) * gv;
        *vv = b2 * *vv + (T::one() - b2) * gv * gv;
        let m_hat = *mv / bc1;
        let v_hat = *vv / bc2;
        *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One Adam step (β1 = 0.9, β2 = 0.999, ε = 1e-8) with bias correction.
/// Attention coefficients are skipped when `cfg.train_attention` is off.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelGrads<T>,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    for (i, g) in &grads.weights {
        if !g.all_finite() {
            return Err(TrainError::NonFiniteGradient(format!("W_{i}")));
        }
    }
    if let Some(k) = grads.attn.iter().position(|v| !v.is_finite()) {
        return Err(TrainError::NonFiniteGradient(format!("γ_{k}")));
    }
    params.step += 1;
    let t = params.step as i32;
    let bc1 = cast::<T>(1.0 - ADAM_BETA1.powi(t));
    let bc2 = cast::<T>(1.0 - ADAM_BETA2.powi(t));
    let lr = cast::<T>(cfg.learning_rate);
    for (i, g) in &grads.weights {
        let w = params.weights.get_mut(i).expect("gradient for known weight");
        let m = params.m_weights.get_mut(i).unwrap();
        let v = params.v_weights.get_mut(i).unwrap();
        adam_update(w.values_mut(), m.values_mut(), v.values_mut(), g.values(), lr, bc1, bc2);
    }
    if cfg.train_attention {
        adam_update(
            &mut params.attn,
            &mut params.m_attn,
            &mut params.v_attn,
            &grads.attn,
            lr,
            bc1,
            bc2,
        );
    }
    Ok(())
}
