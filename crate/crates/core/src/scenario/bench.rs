//! Timing sweeps over team size.

use serde::Serialize;

use super::builtin;
use super::config::{GraphConfig, SolverKind};
use super::run::{max_local, run, Details};
use crate::error::{Error, Result};
use crate::parallel::Executor;

#[derive(Debug, Clone, Serialize)]
pub struct BenchPoint {
    pub agents: usize,
    /// Median joint-solve seconds of the centralized baseline.
    pub central_time: f64,
    /// Median over repeats of the largest per-agent mean local step time.
    pub md_local_time: f64,
    pub md_iterations: usize,
    pub central_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    pub central_slope: f64,
    pub md_local_slope: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Formation tasks of each size with neighborhoods of `neighborhood` agents.
///
/// The distributed time is per iteration, so it does not depend on how many
/// iterations a run happens to need. The centralized solve gets a fixed
/// budget instead: one penalty pass of `central_iterations` DDP steps with
/// the convergence tests switched off.
pub fn formation_sweep(
    sizes: &[usize],
    neighborhood: usize,
    md_iterations: usize,
    central_iterations: usize,
    repeats: usize,
    exec: &Executor,
) -> Result<BenchReport> {
    if sizes.len() < 2 || repeats == 0 {
        return Err(Error::Other(
            "need at least two sizes and one repeat".into(),
        ));
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &m in sizes {
        let mut cfg = builtin::formation(m);
        cfg.graph = GraphConfig::KNearest { size: neighborhood };
        cfg.md.iterations = md_iterations;
        cfg.central.al.max_outer = 1;
        cfg.central.ddp.max_iterations = central_iterations;
        cfg.central.ddp.abs_tolerance = 0.0;
        cfg.central.ddp.rel_tolerance = 0.0;
        let mut central = Vec::with_capacity(repeats);
        let mut local = Vec::with_capacity(repeats);
        let mut iterations = 0;
        let mut central_done = 0;
        for _ in 0..repeats {
            cfg.solver = SolverKind::Central;
            if let Details::Central(r) = run(&cfg, exec)?.details {
                central_done = r.ddp_iterations;
                central.push(r.solve_time);
            }
            cfg.solver = SolverKind::Md;
            if let Details::Md(r) = run(&cfg, exec)?.details {
                iterations = r.iterations;
                local.push(max_local(&r.local_times).unwrap_or(0.0) / r.iterations as f64);
            }
        }
        points.push(BenchPoint {
            agents: m,
            central_time: median(central),
            md_local_time: median(local),
            md_iterations: iterations,
            central_iterations: central_done,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.agents as f64).collect();
    let central_slope = loglog_slope(
        &xs,
        &points.iter().map(|p| p.central_time).collect::<Vec<_>>(),
    );
    let md_local_slope = loglog_slope(
        &xs,
        &points.iter().map(|p| p.md_local_time).collect::<Vec<_>>(),
    );
    Ok(BenchReport {
        points,
        central_slope,
        md_local_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [2.0, 4.0, 8.0, 16.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(2.5)).collect();
        assert!((loglog_slope(&x, &y) - 2.5).abs() < 1e-12);
    }
}
