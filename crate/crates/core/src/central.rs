//! Centralized AL-DDP baseline over the joint state of all agents.

use std::time::Instant;

use crate::al;
use crate::ddp::{ControlLaw, Trajectory};
use crate::error::Result;
use crate::parallel::Executor;
use crate::problem::MultiAgentProblem;
use crate::scenario::config::CentralSettings;

#[derive(Debug, Clone)]
pub struct CentralResult {
    pub trajectories: Vec<Trajectory>,
    /// Own-block slices of the joint feedback law.
    pub laws: Vec<ControlLaw>,
    pub violation: f64,
    pub outer_iterations: usize,
    pub ddp_iterations: usize,
    /// Seconds in the joint solve, excluding the warmstart.
    pub solve_time: f64,
}

/// Seeds with the single-agent solutions, then solves the joint problem.
pub fn solve(
    problem: &MultiAgentProblem,
    settings: &CentralSettings,
    exec: &Executor,
) -> Result<CentralResult> {
    problem.validate()?;
    let warm = problem.warmstart(&settings.warmstart, exec)?;
    let seeds: Vec<Trajectory> = warm.into_iter().map(|w| w.trajectory).collect();
    let central = problem.central();
    let initial = problem.join(&seeds);
    let start = Instant::now();
    let sol = al::solve_constrained(
        &initial,
        &central.cost,
        &central.dynamics,
        &central.stack,
        &settings.ddp,
        &settings.al,
        None,
    )?;
    let solve_time = start.elapsed().as_secs_f64();
    let laws = (0..problem.len())
        .map(|b| {
            sol.law.slice(
                central.dynamics.state_range(b),
                central.dynamics.control_range(b),
            )
        })
        .collect();
    Ok(CentralResult {
        trajectories: problem.split(&sol.trajectory),
        laws,
        violation: sol.violation,
        outer_iterations: sol.outer_iterations,
        ddp_iterations: sol.ddp_iterations,
        solve_time,
    })
}
