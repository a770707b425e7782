//! Naive vs. block-wise precomputation timings.
//!
//! Both paths run through [`HostExecutor`]; the naive one with a single
//! block per operation and no budget, the blocked one with the plan solved
//! for the given budget. Outputs are compared before any timing is reported.

use lcgnn_core::block::{
    block_feature_aggregation, block_normalize, plan_for_problem, BlockError, BudgetModel, DecompositionPlan,
    HostExecutor, PrecomputedFeatures, ProblemSize, VolumeModel,
};
use lcgnn_core::dense::DenseMatrix;
use lcgnn_core::graph::{Graph, SparseMatrix};
use std::fmt;
use std::time::Instant;
use thiserror::Error;

/// Largest difference tolerated between naive and blocked outputs.
pub const EQUALITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("repeats must be >= 1")]
    NoRepeats,
    #[error("blocked {task} output differs from naive by {diff:e} (tolerance {EQUALITY_TOLERANCE:e})")]
    Mismatch { task: Task, diff: f64 },
    #[error(transparent)]
    Block(#[from] BlockError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Normalize,
    Aggregate,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Normalize => "normalize",
            Task::Aggregate => "aggregate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Naive,
    Blocked,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Naive => "naive",
            RunMode::Blocked => "blocked",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub task: Task,
    pub mode: RunMode,
    pub plan: DecompositionPlan,
    pub median_ms: f64,
    /// Largest per-operation volume estimate seen by the executor.
    pub peak_volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub budget: f64,
    pub repeats: usize,
    pub max_abs_diff: f64,
    pub environment: String,
}

impl BenchReport {
    /// Peak volume over all blocked runs.
    pub fn blocked_peak(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.mode == RunMode::Blocked)
            .map(|r| r.peak_volume)
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,mode,a,b,c,median_ms,peak_volume,budget\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{:.3},{},{}\n",
                r.task, r.mode, r.plan.a, r.plan.b, r.plan.c, r.median_ms, r.peak_volume, self.budget
            ));
        }
        out
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "environment = \"{}\"", self.environment)?;
        writeln!(f, "repeats = {}", self.repeats)?;
        writeln!(f, "budget = {:?}", self.budget)?;
        writeln!(f, "max_abs_diff = {:e}", self.max_abs_diff)?;
        for r in &self.records {
            write!(
                f,
                "\n[[run]]\ntask = \"{}\"\nmode = \"{}\"\nplan = \"{}\"\nmedian_ms = {:?}\npeak_volume = {:?}\n",
                r.task, r.mode, r.plan, r.median_ms, r.peak_volume
            )?;
        }
        Ok(())
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

struct Timed<T> {
    output: T,
    median_ms: f64,
    peak: f64,
}

fn timed<T>(repeats: usize, mut run: impl FnMut() -> Result<(T, f64), BlockError>) -> Result<Timed<T>, BlockError> {
    let mut times = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats {
        let start = Instant::now();
        let out = run()?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        last = Some(out);
    }
    let (output, peak) = last.expect("repeats >= 1");
    Ok(Timed {
        output,
        median_ms: median(times),
        peak,
    })
}

fn normalize_with(g: &Graph, a: usize, mut exec: HostExecutor) -> Result<(SparseMatrix, f64), BlockError> {
    let s = block_normalize(g, a, &mut exec)?;
    Ok((s, exec.stats().peak_estimate))
}

fn aggregate_with(
    s: &SparseMatrix,
    x: &DenseMatrix,
    k: u32,
    plan: DecompositionPlan,
    mut exec: HostExecutor,
) -> Result<(PrecomputedFeatures, f64), BlockError> {
    let pf = block_feature_aggregation(s, x, k, plan.b, plan.c, &mut exec)?;
    Ok((pf, exec.stats().peak_estimate))
}

fn environment() -> String {
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    format!(
        "host executor, {}-{}, {profile} build",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Times naive and solver-planned blocked precomputation of `S^1..S^k·X`,
/// after checking that both produce the same matrices.
pub fn run_bench(
    g: &Graph,
    x: &DenseMatrix,
    k: u32,
    bm: &BudgetModel,
    vm: &VolumeModel,
    repeats: usize,
) -> Result<BenchReport, BenchError> {
    if repeats == 0 {
        return Err(BenchError::NoRepeats);
    }
    let problem = ProblemSize {
        n: g.num_nodes(),
        nnz: g.num_nodes() + 2 * g.num_edges(),
        d: x.cols(),
    };
    let plan = plan_for_problem(bm, vm, problem)?.plan;
    let single = DecompositionPlan::single();
    let unbounded = || HostExecutor::unbounded(*vm);
    let budgeted = || HostExecutor::budgeted(*bm, *vm);

    // sequential on purpose: runs must not share the machine
    let naive_norm = timed(repeats, || normalize_with(g, 1, unbounded()))?;
    let blocked_norm = timed(repeats, || normalize_with(g, plan.a, budgeted()))?;
    let norm_diff = triplet_diff(&naive_norm.output, &blocked_norm.output);
    if norm_diff > EQUALITY_TOLERANCE {
        return Err(BenchError::Mismatch {
            task: Task::Normalize,
            diff: norm_diff,
        });
    }

    let s = &naive_norm.output;
    let naive_agg = timed(repeats, || aggregate_with(s, x, k, single, unbounded()))?;
    let blocked_agg = timed(repeats, || aggregate_with(s, x, k, plan, budgeted()))?;
    let mut agg_diff: f64 = 0.0;
    for (p, m) in &naive_agg.output.per_power {
        let other = blocked_agg.output.get(*p).expect("same powers");
        agg_diff = agg_diff.max(m.max_abs_diff(other).unwrap_or(f64::INFINITY));
    }
    if agg_diff > EQUALITY_TOLERANCE {
        return Err(BenchError::Mismatch {
            task: Task::Aggregate,
            diff: agg_diff,
        });
    }

    let record = |task, mode, plan, median_ms, peak_volume| BenchRecord {
        task,
        mode,
        plan,
        median_ms,
        peak_volume,
    };
    Ok(BenchReport {
        records: vec![
            record(
                Task::Normalize,
                RunMode::Naive,
                single,
                naive_norm.median_ms,
                naive_norm.peak,
            ),
            record(
                Task::Normalize,
                RunMode::Blocked,
                plan,
                blocked_norm.median_ms,
                blocked_norm.peak,
            ),
            record(
                Task::Aggregate,
                RunMode::Naive,
                single,
                naive_agg.median_ms,
                naive_agg.peak,
            ),
            record(
                Task::Aggregate,
                RunMode::Blocked,
                plan,
                blocked_agg.median_ms,
                blocked_agg.peak,
            ),
        ],
        budget: bm.vol_gpu,
        repeats,
        max_abs_diff: norm_diff.max(agg_diff),
        environment: environment(),
    })
}

fn triplet_diff(a: &SparseMatrix, b: &SparseMatrix) -> f64 {
    if a.rows() != b.rows() || a.nnz() != b.nnz() {
        return f64::INFINITY;
    }
    a.triplets()
        .iter()
        .zip(b.triplets())
        .map(|(p, q)| {
            if (p.0, p.1) == (q.0, q.1) {
                (p.2 - q.2).abs()
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
