use super::{BlockError, BudgetModel, VolumeModel};
use crate::dense::DenseMatrix;
use crate::graph::{accumulate_spmm, normalized_entry, Triplet};

/// Bytes an operation held per operand, as observed by the executor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MemoryUsage {
    pub adjacency: f64,
    pub normalized: f64,
    pub degree: f64,
    pub filter: f64,
    pub features: f64,
}

/// A device that runs block operations.
pub trait Executor {
    /// Normalizes one block of `Ã` entries: `Ã_ij · d_i^{-1/2} · d_j^{-1/2}`.
    fn normalize_block(&mut self, block: &[Triplet], inv_sqrt_deg: &[f64]) -> Result<Vec<Triplet>, BlockError>;

    /// `acc += S_block · x_block`.
    fn aggregate_block(
        &mut self,
        s_block: &[Triplet],
        x_block: &DenseMatrix,
        acc: &mut DenseMatrix,
    ) -> Result<(), BlockError>;

    /// Per-operand memory of the most recent operation, if the executor
    /// can observe it.
    fn last_usage(&self) -> Option<MemoryUsage>;
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExecStats {
    pub normalize_ops: usize,
    pub aggregate_ops: usize,
    /// Largest budget-model estimate among executed operations.
    pub peak_estimate: f64,
}

/// Runs block operations on the host while enforcing an optional budget.
#[derive(Debug, Clone)]
pub struct HostExecutor {
    budget: Option<BudgetModel>,
    volumes: VolumeModel,
    stats: ExecStats,
    last: Option<MemoryUsage>,
}

impl HostExecutor {
    pub fn budgeted(budget: BudgetModel, volumes: VolumeModel) -> Self {
        Self {
            budget: Some(budget),
            volumes,
            stats: ExecStats::default(),
            last: None,
        }
    }

    /// No budget check; estimates are still recorded using default coefficients.
    pub fn unbounded(volumes: VolumeModel) -> Self {
        Self {
            budget: None,
            volumes,
            stats: ExecStats::default(),
            last: None,
        }
    }

    pub fn stats(&self) -> ExecStats {
        self.stats
    }

    pub fn volumes(&self) -> VolumeModel {
        self.volumes
    }

    fn admit(&mut self, op: &'static str, estimate: f64) -> Result<(), BlockError> {
        if let Some(bm) = &self.budget {
            if estimate > bm.vol_gpu {
                return Err(BlockError::BudgetExceeded {
                    op,
                    estimate,
                    budget: bm.vol_gpu,
                });
            }
        }
        self.stats.peak_estimate = self.stats.peak_estimate.max(estimate);
        Ok(())
    }

    fn coefficients(&self) -> super::Coefficients {
        self.budget.map(|b| b.coefficients()).unwrap_or_default()
    }
}

impl Executor for HostExecutor {
    fn normalize_block(&mut self, block: &[Triplet], inv_sqrt_deg: &[f64]) -> Result<Vec<Triplet>, BlockError> {
        let c = self.coefficients();
        let vol_block = self.volumes.sparse(block.len());
        let vol_d = self.volumes.dense(inv_sqrt_deg.len(), 1);
        self.admit("normalize", (c.alpha_a + c.alpha_s) * vol_block + c.alpha_d * vol_d)?;
        let mut out = Vec::with_capacity(block.len());
        for &(r, col, v) in block {
            let (Some(&ir), Some(&ic)) = (inv_sqrt_deg.get(r), inv_sqrt_deg.get(col)) else {
                return Err(BlockError::Shape(format!(
                    "entry ({r}, {col}) outside degree vector of length {}",
                    inv_sqrt_deg.len()
                )));
            };
            out.push((r, col, normalized_entry(v, ir, ic)));
        }
        self.stats.normalize_ops += 1;
        self.last = Some(MemoryUsage {
            adjacency: vol_block,
            normalized: vol_block,
            degree: vol_d,
            ..Default::default()
        });
        Ok(out)
    }

    fn aggregate_block(
        &mut self,
        s_block: &[Triplet],
        x_block: &DenseMatrix,
        acc: &mut DenseMatrix,
    ) -> Result<(), BlockError> {
        if acc.shape() != x_block.shape() {
            return Err(BlockError::Shape(format!(
                "accumulator {:?} vs feature block {:?}",
                acc.shape(),
                x_block.shape()
            )));
        }
        let n = x_block.rows();
        if let Some(&(r, col, _)) = s_block.iter().find(|t| t.0 >= n || t.1 >= n) {
            return Err(BlockError::Shape(format!("filter entry ({r}, {col}) outside {n} rows")));
        }
        let c = self.coefficients();
        let vol_s = self.volumes.sparse(s_block.len());
        let vol_x = self.volumes.dense(n, x_block.cols());
        self.admit("aggregate", c.beta_s * vol_s + c.beta_x * vol_x)?;
        let mut partial = DenseMatrix::zeros(n, x_block.cols());
        accumulate_spmm(s_block, x_block, &mut partial);
        acc.add_assign(&partial);
        self.stats.aggregate_ops += 1;
        self.last = Some(MemoryUsage {
            filter: vol_s,
            // input block, partial product, accumulator
            features: 3.0 * vol_x,
            ..Default::default()
        });
        Ok(())
    }

    fn last_usage(&self) -> Option<MemoryUsage> {
        self.last
    }
}
