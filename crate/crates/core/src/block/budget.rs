use super::BlockError;
use std::fmt;

/// Machine coefficients relating operand volumes to device memory use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub alpha_a: f64,
    pub alpha_s: f64,
    pub alpha_d: f64,
    pub beta_s: f64,
    pub beta_x: f64,
}

impl Default for Coefficients {
    /// What [`super::calibrate_budget`] measures for [`super::HostExecutor`]:
    /// one copy of every operand, except the feature side which holds the
    /// input block, the partial product and the accumulator.
    fn default() -> Self {
        Self {
            alpha_a: 1.0,
            alpha_s: 1.0,
            alpha_d: 1.0,
            beta_s: 1.0,
            beta_x: 3.0,
        }
    }
}

/// Bytes per stored element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeModel {
    pub triplet_bytes: f64,
    pub scalar_bytes: f64,
}

impl Default for VolumeModel {
    fn default() -> Self {
        // two u32 indices + f64 value; f64 dense entries
        Self {
            triplet_bytes: 16.0,
            scalar_bytes: 8.0,
        }
    }
}

impl VolumeModel {
    pub fn sparse(&self, nnz: usize) -> f64 {
        nnz as f64 * self.triplet_bytes
    }

    pub fn dense(&self, rows: usize, cols: usize) -> f64 {
        (rows * cols) as f64 * self.scalar_bytes
    }
}

/// Coefficients, operand volumes (bytes) and the device budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetModel {
    pub alpha_a: f64,
    pub alpha_s: f64,
    pub alpha_d: f64,
    pub beta_s: f64,
    pub beta_x: f64,
    pub vol_a: f64,
    pub vol_s: f64,
    pub vol_d: f64,
    pub vol_x: f64,
    pub vol_gpu: f64,
}

/// Sizes of the matrices involved in precomputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemSize {
    pub n: usize,
    /// Stored entries of `Ã` (equal to those of `S`).
    pub nnz: usize,
    pub d: usize,
}

impl BudgetModel {
    pub fn from_problem(c: Coefficients, vm: &VolumeModel, p: ProblemSize, vol_gpu: f64) -> Self {
        Self {
            alpha_a: c.alpha_a,
            alpha_s: c.alpha_s,
            alpha_d: c.alpha_d,
            beta_s: c.beta_s,
            beta_x: c.beta_x,
            vol_a: vm.sparse(p.nnz),
            vol_s: vm.sparse(p.nnz),
            vol_d: vm.dense(p.n, 1),
            vol_x: vm.dense(p.n, p.d),
            vol_gpu,
        }
    }

    pub fn coefficients(&self) -> Coefficients {
        Coefficients {
            alpha_a: self.alpha_a,
            alpha_s: self.alpha_s,
            alpha_d: self.alpha_d,
            beta_s: self.beta_s,
            beta_x: self.beta_x,
        }
    }

    pub fn validate(&self) -> Result<(), BlockError> {
        let fields = [
            ("alpha_a", self.alpha_a),
            ("alpha_s", self.alpha_s),
            ("alpha_d", self.alpha_d),
            ("beta_s", self.beta_s),
            ("beta_x", self.beta_x),
            ("vol_a", self.vol_a),
            ("vol_s", self.vol_s),
            ("vol_d", self.vol_d),
            ("vol_x", self.vol_x),
            ("vol_gpu", self.vol_gpu),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(BlockError::InvalidBudget(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Left-hand side of the normalization constraint at `a` blocks.
    pub fn norm_load(&self, a: usize) -> f64 {
        (self.alpha_a * self.vol_a + self.alpha_s * self.vol_s) / a as f64 + self.alpha_d * self.vol_d
    }

    /// Left-hand side of the aggregation constraint at `(b, c)` blocks.
    pub fn agg_load(&self, b: usize, c: usize) -> f64 {
        self.beta_s * self.vol_s / b as f64 + self.beta_x * self.vol_x / c as f64
    }
}

/// Smallest `a >= 1` with `(α_A·B_A + α_S·B_S)/a + α_D·B_D <= B_GPU`.
pub fn solve_norm_blocks(bm: &BudgetModel) -> Result<usize, BlockError> {
    bm.validate()?;
    let room = bm.vol_gpu - bm.alpha_d * bm.vol_d;
    if room <= 0.0 {
        return Err(BlockError::Infeasible(format!(
            "degree term alpha_d*vol_d = {} leaves no room in vol_gpu = {}",
            bm.alpha_d * bm.vol_d,
            bm.vol_gpu
        )));
    }
    let work = bm.alpha_a * bm.vol_a + bm.alpha_s * bm.vol_s;
    let closed = (work / room).ceil();
    if closed > usize::MAX as f64 / 2.0 {
        return Err(BlockError::Infeasible(format!("needs about {closed} blocks")));
    }
    // the closed form can land one off after rounding; settle on the exact constraint
    let mut a = (closed as usize).max(1);
    while bm.norm_load(a) > bm.vol_gpu {
        a += 1;
    }
    while a > 1 && bm.norm_load(a - 1) <= bm.vol_gpu {
        a -= 1;
    }
    Ok(a)
}

/// Exhaustive search over a grid, minimizing `b·c`; ties go to smaller `b`,
/// then smaller `c`.
fn min_product_pair(b_max: usize, c_max: usize, fits: impl Fn(usize, usize) -> bool) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for b in 1..=b_max {
        if let Some((bb, bc)) = best {
            if b > bb * bc {
                break;
            }
        }
        // for fixed b, feasibility is monotone in c: the first hit is the best
        if let Some(c) = (1..=c_max).find(|&c| fits(b, c)) {
            if best.is_none_or(|(bb, bc)| b * c < bb * bc) {
                best = Some((b, c));
            }
        }
    }
    best
}

/// `(b, c)` minimizing `b·c` subject to `β_S·B_S/b + β_X·B_X/c <= B_GPU`;
/// ties go to smaller `b`, then smaller `c`.
///
/// Every `b` is paired with its smallest feasible `c`, and the scan stops
/// once `b·c_inf` (with `c_inf` the bound as `b → ∞`) cannot beat the best
/// product, so the search is exhaustive.
pub fn solve_agg_blocks(bm: &BudgetModel) -> Result<(usize, usize), BlockError> {
    bm.validate()?;
    let (s_work, x_work, g) = (bm.beta_s * bm.vol_s, bm.beta_x * bm.vol_x, bm.vol_gpu);
    let too_many = |v: f64| v > usize::MAX as f64 / 4.0;
    let c_inf = (x_work / g).ceil().max(1.0);
    let b_first = (s_work / g).floor() + 1.0;
    if too_many(c_inf) || too_many(b_first) || too_many(c_inf * b_first) {
        return Err(BlockError::Infeasible(format!(
            "needs about {b_first} x {c_inf} blocks for budget {g}"
        )));
    }
    let c_inf = c_inf as usize;
    let min_c = |b: usize| -> Option<usize> {
        let room = g - s_work / b as f64;
        if room <= 0.0 {
            return None;
        }
        let est = (x_work / room).ceil();
        if too_many(est) {
            return None;
        }
        // settle rounding on the exact constraint
        let mut c = (est as usize).max(1);
        while bm.agg_load(b, c) > g {
            c += 1;
        }
        while c > 1 && bm.agg_load(b, c - 1) <= g {
            c -= 1;
        }
        Some(c)
    };
    let mut best: Option<(usize, usize)> = None;
    let mut b: usize = 1;
    loop {
        if let Some((bb, bc)) = best {
            if b.saturating_mul(c_inf) >= bb * bc {
                break;
            }
        }
        if let Some(c) = min_c(b) {
            if best.is_none_or(|(bb, bc)| b.saturating_mul(c) < bb * bc) {
                best = Some((b, c));
            }
        }
        b += 1;
    }
    Ok(best.expect("loop exits only after a feasible pair"))
}

/// Block counts for normalization (`a`), filter blocks (`b`) and feature
/// column blocks (`c`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecompositionPlan {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

impl DecompositionPlan {
    pub fn new(a: usize, b: usize, c: usize) -> Self {
        assert!(a >= 1 && b >= 1 && c >= 1, "block counts must be positive");
        Self { a, b, c }
    }

    pub fn single() -> Self {
        Self::new(1, 1, 1)
    }
}

impl fmt::Display for DecompositionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.a, self.b, self.c)
    }
}

/// Solver output for a concrete problem, with constraint slack.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanReport {
    pub budget: BudgetModel,
    pub problem: ProblemSize,
    pub plan: DecompositionPlan,
    /// Plan from the closed-form / exhaustive solvers before block-size rounding.
    pub solver_plan: DecompositionPlan,
    pub norm_peak: f64,
    pub agg_peak: f64,
}

impl PlanReport {
    pub fn norm_slack(&self) -> f64 {
        self.budget.vol_gpu - self.norm_peak
    }

    pub fn agg_slack(&self) -> f64 {
        self.budget.vol_gpu - self.agg_peak
    }
}

impl fmt::Display for PlanReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bm = &self.budget;
        writeln!(f, "[budget]")?;
        for (k, v) in [
            ("alpha_a", bm.alpha_a),
            ("alpha_s", bm.alpha_s),
            ("alpha_d", bm.alpha_d),
            ("beta_s", bm.beta_s),
            ("beta_x", bm.beta_x),
            ("vol_a", bm.vol_a),
            ("vol_s", bm.vol_s),
            ("vol_d", bm.vol_d),
            ("vol_x", bm.vol_x),
            ("vol_gpu", bm.vol_gpu),
        ] {
            writeln!(f, "{k} = {v:?}")?;
        }
        writeln!(f, "\n[problem]")?;
        writeln!(f, "n = {}", self.problem.n)?;
        writeln!(f, "nnz = {}", self.problem.nnz)?;
        writeln!(f, "d = {}", self.problem.d)?;
        writeln!(f, "\n[plan]")?;
        writeln!(f, "a = {}", self.plan.a)?;
        writeln!(f, "b = {}", self.plan.b)?;
        writeln!(f, "c = {}", self.plan.c)?;
        writeln!(f, "solver_plan = \"{}\"", self.solver_plan)?;
        writeln!(f, "norm_peak = {:?}", self.norm_peak)?;
        writeln!(f, "norm_slack = {:?}", self.norm_slack())?;
        writeln!(f, "agg_peak = {:?}", self.agg_peak)?;
        write!(f, "agg_slack = {:?}", self.agg_slack())
    }
}

/// Solves both problems for a concrete graph and feature matrix.
///
/// Blocks are `⌈nnz/a⌉` triplets and `⌈d/c⌉` columns wide, which can
/// exceed the balanced shares `B/a`, `B/c` the solvers assume. Starting from
/// the solver plan, counts are raised until the largest real block fits,
/// so running the returned plan never trips the executor's budget check.
pub fn plan_for_problem(bm: &BudgetModel, vm: &VolumeModel, p: ProblemSize) -> Result<PlanReport, BlockError> {
    let a0 = solve_norm_blocks(bm)?;
    let (b0, c0) = solve_agg_blocks(bm)?;

    let norm_block =
        |a: usize| (bm.alpha_a + bm.alpha_s) * vm.sparse(p.nnz.div_ceil(a)) + bm.alpha_d * vm.dense(p.n, 1);
    let agg_block = |b: usize, c: usize| {
        bm.beta_s * vm.sparse(p.nnz.div_ceil(b)) + bm.beta_x * vm.dense(p.n, p.d.div_ceil(c).max(1))
    };

    let mut a = a0;
    while norm_block(a) > bm.vol_gpu {
        if a >= p.nnz.max(1) {
            return Err(BlockError::Infeasible(format!(
                "a single-triplet normalization block needs {} bytes, budget {}",
                norm_block(a),
                bm.vol_gpu
            )));
        }
        a += 1;
    }

    let (b, c) = if agg_block(b0, c0) <= bm.vol_gpu {
        (b0, c0)
    } else {
        let b_max = p.nnz.max(1);
        let c_max = p.d.max(1);
        min_product_pair(b_max, c_max, |b, c| agg_block(b, c) <= bm.vol_gpu).ok_or_else(|| {
            BlockError::Infeasible(format!(
                "even single-triplet, single-column blocks need {} bytes, budget {}",
                agg_block(b_max, c_max),
                bm.vol_gpu
            ))
        })?
    };

    Ok(PlanReport {
        budget: *bm,
        problem: p,
        plan: DecompositionPlan::new(a, b, c),
        solver_plan: DecompositionPlan::new(a0, b0, c0),
        norm_peak: norm_block(a),
        agg_peak: agg_block(b, c),
    })
}
