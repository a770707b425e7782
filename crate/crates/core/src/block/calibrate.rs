//! Estimates the budget coefficients by running small probe operations and
//! fitting `observed bytes = slope · operand volume + intercept` per operand.

use super::{BlockError, Coefficients, Executor, MemoryUsage, VolumeModel};
use crate::dense::DenseMatrix;
use crate::graph::{add_self_loops, degree_vector, Graph};

const PROBE_WIDTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual divided by the mean observation.
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub coefficients: Coefficients,
    pub alpha_a: LinearFit,
    pub alpha_s: LinearFit,
    pub alpha_d: LinearFit,
    pub beta_s: LinearFit,
    pub beta_x: LinearFit,
}

impl Calibration {
    pub fn fits(&self) -> [(&'static str, LinearFit); 5] {
        [
            ("alpha_a", self.alpha_a),
            ("alpha_s", self.alpha_s),
            ("alpha_d", self.alpha_d),
            ("beta_s", self.beta_s),
            ("beta_x", self.beta_x),
        ]
    }
}

fn fit(name: &str, points: &[(f64, f64)], tolerance: f64) -> Result<LinearFit, BlockError> {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(BlockError::CalibrationUnstable(format!(
            "{name}: probe volumes do not vary; need at least two distinct probe sizes"
        )));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    let relative_residual = if my.abs() > 0.0 { rms / my.abs() } else { rms };
    if relative_residual > tolerance {
        return Err(BlockError::CalibrationUnstable(format!(
            "{name}: relative residual {relative_residual:.3e} exceeds {tolerance:.3e}"
        )));
    }
    Ok(LinearFit {
        slope,
        intercept,
        relative_residual,
    })
}

fn probe_usage(exec: &dyn Executor) -> Result<MemoryUsage, BlockError> {
    exec.last_usage()
        .ok_or_else(|| BlockError::CalibrationUnstable("executor does not report memory usage".into()))
}

/// Runs one normalization and one aggregation probe per size (a cycle on
/// `size` nodes) and fits every coefficient.
pub fn calibrate_budget(
    exec: &mut dyn Executor,
    probe_sizes: &[usize],
    volumes: &VolumeModel,
    tolerance: f64,
) -> Result<Calibration, BlockError> {
    let mut pts: [Vec<(f64, f64)>; 5] = Default::default();
    for &size in probe_sizes {
        if size < 2 {
            return Err(BlockError::CalibrationUnstable(format!("probe size {size} < 2")));
        }
        let g = Graph::new(size, (0..size).map(|i| (i, (i + 1) % size)))?;
        let a_tilde = add_self_loops(&g);
        let inv = degree_vector(&a_tilde).inv_sqrt()?;
        let s_block = exec.normalize_block(a_tilde.triplets(), &inv)?;
        let u = probe_usage(exec)?;
        let vol_block = volumes.sparse(a_tilde.nnz());
        pts[0].push((vol_block, u.adjacency));
        pts[1].push((vol_block, u.normalized));
        pts[2].push((volumes.dense(size, 1), u.degree));

        let x = DenseMatrix::from_fn(size, PROBE_WIDTH, |i, j| (i + j) as f64);
        let mut acc = DenseMatrix::zeros(size, PROBE_WIDTH);
        exec.aggregate_block(&s_block, &x, &mut acc)?;
        let u = probe_usage(exec)?;
        pts[3].push((volumes.sparse(s_block.len()), u.filter));
        pts[4].push((volumes.dense(size, PROBE_WIDTH), u.features));
    }
    if probe_sizes.len() < 2 {
        return Err(BlockError::CalibrationUnstable(format!(
            "{} probe point(s); a line needs at least two",
            probe_sizes.len()
        )));
    }
    let alpha_a = fit("alpha_a", &pts[0], tolerance)?;
    let alpha_s = fit("alpha_s", &pts[1], tolerance)?;
    let alpha_d = fit("alpha_d", &pts[2], tolerance)?;
    let beta_s = fit("beta_s", &pts[3], tolerance)?;
    let beta_x = fit("beta_x", &pts[4], tolerance)?;
    Ok(Calibration {
        coefficients: Coefficients {
            alpha_a: alpha_a.slope,
            alpha_s: alpha_s.slope,
            alpha_d: alpha_d.slope,
            beta_s: beta_s.slope,
            beta_x: beta_x.slope,
        },
        alpha_a,
        alpha_s,
        alpha_d,
        beta_s,
        beta_x,
    })
}

#[cfg(test)]
mod tests {
    use super::super::HostExecutor;
    use super::*;
    use crate::graph::Triplet;

    /// Reports `slope · volume + intercept` for every operand.
    struct LinearCost {
        slope: f64,
        intercept: f64,
        volumes: VolumeModel,
        last: Option<MemoryUsage>,
    }

    impl Executor for LinearCost {
        fn normalize_block(&mut self, block: &[Triplet], inv: &[f64]) -> Result<Vec<Triplet>, BlockError> {
            let v = self.volumes.sparse(block.len());
            let cost = |vol: f64| self.slope * vol + self.intercept;
            self.last = Some(MemoryUsage {
                adjacency: cost(v),
                normalized: cost(v),
                degree: cost(self.volumes.dense(inv.len(), 1)),
                ..Default::default()
            });
            Ok(block.iter().map(|&(r, c, x)| (r, c, x * inv[r] * inv[c])).collect())
        }

        fn aggregate_block(
            &mut self,
            s: &[Triplet],
            x: &DenseMatrix,
            _acc: &mut DenseMatrix,
        ) -> Result<(), BlockError> {
            let cost = |vol: f64| self.slope * vol + self.intercept;
            self.last = Some(MemoryUsage {
                filter: cost(self.volumes.sparse(s.len())),
                features: cost(self.volumes.dense(x.rows(), x.cols())),
                ..Default::default()
            });
            Ok(())
        }

        fn last_usage(&self) -> Option<MemoryUsage> {
            self.last
        }
    }

    fn double(slope: f64, intercept: f64) -> LinearCost {
        LinearCost {
            slope,
            intercept,
            volumes: VolumeModel::default(),
            last: None,
        }
    }

    #[test]
    fn recovers_linear_slope() {
        let cal = calibrate_budget(&mut double(2.0, 512.0), &[8, 32, 128], &VolumeModel::default(), 0.05).unwrap();
        for (name, f) in cal.fits() {
            assert!((f.slope - 2.0).abs() < 0.02, "{name}: {}", f.slope);
        }
    }

    #[test]
    fn zero_overhead_gives_unit_coefficients() {
        let cal = calibrate_budget(&mut double(1.0, 0.0), &[4, 16], &VolumeModel::default(), 0.05).unwrap();
        let c = cal.coefficients;
        for v in [c.alpha_a, c.alpha_s, c.alpha_d, c.beta_s, c.beta_x] {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_probe_is_unstable() {
        let err = calibrate_budget(&mut double(1.0, 0.0), &[16], &VolumeModel::default(), 0.05);
        assert!(matches!(err, Err(BlockError::CalibrationUnstable(_))));
    }

    #[test]
    fn host_executor_matches_default_coefficients() {
        let vm = VolumeModel::default();
        let cal = calibrate_budget(&mut HostExecutor::unbounded(vm), &[8, 64, 256], &vm, 0.01).unwrap();
        let expected = Coefficients::default();
        assert!((cal.coefficients.alpha_a - expected.alpha_a).abs() < 1e-9);
        assert!((cal.coefficients.beta_x - expected.beta_x).abs() < 1e-9);
    }
}
