//! Solver dispatch and result files.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::config::{ScenarioConfig, SolverKind};
use crate::ddp::{ControlLaw, Trajectory};
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::network::write_message_log;
use crate::parallel::Executor;
use crate::problem::{MultiAgentProblem, Violations};
use crate::{central, md, nd};

/// Solver-specific output kept for log files.
#[derive(Debug, Clone)]
pub enum Details {
    Md(Box<md::MdResult>),
    Nd(Box<nd::NdResult>),
    Central(Box<central::CentralResult>),
}

#[derive(Clone)]
pub struct Outcome {
    pub config: ScenarioConfig,
    pub problem: MultiAgentProblem,
    pub trajectories: Vec<Trajectory>,
    pub laws: Vec<ControlLaw>,
    pub summary: Summary,
    pub details: Details,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub name: String,
    pub solver: SolverKind,
    pub agents: usize,
    pub horizon: usize,
    pub iterations: usize,
    pub converged: bool,
    pub cost: f64,
    pub max_terminal_error: f64,
    pub min_neighbor_distance: f64,
    pub violations: Violations,
    /// Wall time of the whole call, warmstart included.
    pub wall_time: f64,
    /// Largest per-agent sum of local solve times (distributed solvers).
    pub max_local_time: Option<f64>,
    pub messages: usize,
}

pub fn run(cfg: &ScenarioConfig, exec: &Executor) -> Result<Outcome> {
    let problem = cfg.problem()?;
    let start = Instant::now();
    let (trajectories, laws, iterations, converged, local, messages, details) = match cfg.solver {
        SolverKind::Md => {
            let r = md::solve(&problem, &cfg.md, exec)?;
            let local = max_local(&r.local_times);
            (
                r.trajectories.clone(),
                r.laws.clone(),
                r.iterations,
                r.converged,
                local,
                r.messages.len(),
                Details::Md(Box::new(r)),
            )
        }
        SolverKind::Nd => {
            let r = nd::solve(&problem, &cfg.nd, exec)?;
            let local = max_local(&r.local_times);
            (
                r.trajectories.clone(),
                r.laws.clone(),
                r.iterations,
                true,
                local,
                r.messages.len(),
                Details::Nd(Box::new(r)),
            )
        }
        SolverKind::Central => {
            let r = central::solve(&problem, &cfg.central, exec)?;
            (
                r.trajectories.clone(),
                r.laws.clone(),
                r.outer_iterations,
                r.violation <= cfg.central.al.tolerance,
                None,
                0,
                Details::Central(Box::new(r)),
            )
        }
    };
    let wall_time = start.elapsed().as_secs_f64();
    let summary = Summary {
        name: cfg.name.clone(),
        solver: cfg.solver,
        agents: problem.len(),
        horizon: problem.horizon,
        iterations,
        converged,
        cost: problem.total_cost(&trajectories),
        max_terminal_error: problem
            .terminal_errors(&trajectories)
            .into_iter()
            .fold(0.0, f64::max),
        min_neighbor_distance: problem.min_neighbor_distance(&trajectories),
        violations: problem.violations(&trajectories),
        wall_time,
        max_local_time: local,
        messages,
    };
    Ok(Outcome {
        config: cfg.clone(),
        problem,
        trajectories,
        laws,
        summary,
        details,
    })
}

/// `times[n][i]` is agent `i`'s local time in iteration `n`.
pub fn max_local(times: &[Vec<f64>]) -> Option<f64> {
    let m = times.first()?.len();
    (0..m)
        .map(|i| times.iter().map(|t| t[i]).sum::<f64>())
        .reduce(f64::max)
}

/// Writes trajectories, gains, logs and the JSON summary into `dir`.
pub fn write_outputs(outcome: &Outcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_trajectories(
        &outcome.trajectories,
        std::fs::File::create(dir.join("trajectories.csv"))?,
    )?;
    write_gains(&outcome.laws, std::fs::File::create(dir.join("gains.csv"))?)?;
    match &outcome.details {
        Details::Md(r) => {
            md::write_residual_log(r, std::fs::File::create(dir.join("residuals.csv"))?)?;
            write_message_log(
                &r.messages,
                std::fs::File::create(dir.join("messages.csv"))?,
            )?;
        }
        Details::Nd(r) => {
            nd::write_log(r, std::fs::File::create(dir.join("consensus.csv"))?)?;
            write_message_log(
                &r.messages,
                std::fs::File::create(dir.join("messages.csv"))?,
            )?;
        }
        Details::Central(_) => {}
    }
    std::fs::write(dir.join("scenario.toml"), outcome.config.to_toml())?;
    let f = std::fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(f, &outcome.summary)?;
    Ok(())
}

/// Long format: one row per agent, step and state entry, controls alongside.
pub fn write_trajectories<W: Write>(trajs: &[Trajectory], mut w: W) -> Result<()> {
    writeln!(
        w,
        "# value is x[index] for kind=state, u[index] for kind=control"
    )?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["agent", "step", "kind", "index", "value"])?;
    for (i, t) in trajs.iter().enumerate() {
        for (k, x) in t.states.iter().enumerate() {
            for (c, v) in x.iter().enumerate() {
                wr.write_record([
                    i.to_string(),
                    k.to_string(),
                    "state".into(),
                    c.to_string(),
                    v.to_string(),
                ])?;
            }
        }
        for (k, u) in t.controls.iter().enumerate() {
            for (c, v) in u.iter().enumerate() {
                wr.write_record([
                    i.to_string(),
                    k.to_string(),
                    "control".into(),
                    c.to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

/// Feedback gains `K_k[row, col]` plus feedforward terms (`col` empty).
pub fn write_gains<W: Write>(laws: &[ControlLaw], mut w: W) -> Result<()> {
    writeln!(
        w,
        "# u = u_ref + k + K (x - x_ref); col is empty for the feedforward k"
    )?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["agent", "step", "row", "col", "value"])?;
    for (i, law) in laws.iter().enumerate() {
        for (k, (ff, fb)) in law.feedforward.iter().zip(&law.feedback).enumerate() {
            for r in 0..ff.len() {
                wr.write_record([
                    i.to_string(),
                    k.to_string(),
                    r.to_string(),
                    String::new(),
                    ff[r].to_string(),
                ])?;
                for c in 0..fb.ncols() {
                    wr.write_record([
                        i.to_string(),
                        k.to_string(),
                        r.to_string(),
                        c.to_string(),
                        fb[(r, c)].to_string(),
                    ])?;
                }
            }
        }
    }
    wr.flush()?;
    Ok(())
}

fn reader<R: std::io::Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r)
}

fn bad(msg: &str) -> Error {
    Error::Parse(msg.to_string())
}

/// Inverse of [`write_trajectories`] given each agent's dimensions.
pub fn read_trajectories<R: std::io::Read>(
    r: R,
    dims: &[(usize, usize)],
    horizon: usize,
    dt: f64,
) -> Result<Vec<Trajectory>> {
    let mut out: Vec<Trajectory> = dims
        .iter()
        .map(|&(p, q)| Trajectory {
            states: vec![DVector::zeros(p); horizon + 1],
            controls: vec![DVector::zeros(q); horizon],
            dt,
        })
        .collect();
    for rec in reader(r).records() {
        let rec = rec?;
        let agent: usize = rec[0].parse().map_err(|_| bad("agent column"))?;
        let step: usize = rec[1].parse().map_err(|_| bad("step column"))?;
        let index: usize = rec[3].parse().map_err(|_| bad("index column"))?;
        let value: f64 = rec[4].parse().map_err(|_| bad("value column"))?;
        let t = out
            .get_mut(agent)
            .ok_or_else(|| bad("agent out of range"))?;
        let slot = match &rec[2] {
            "state" => t.states.get_mut(step),
            "control" => t.controls.get_mut(step),
            _ => return Err(bad("kind must be state or control")),
        };
        *slot
            .and_then(|v| v.get_mut(index))
            .ok_or_else(|| bad("step or index out of range"))? = value;
    }
    Ok(out)
}

/// Inverse of [`write_gains`]; the expected-reduction fields are zeroed.
pub fn read_gains<R: std::io::Read>(
    r: R,
    dims: &[(usize, usize)],
    horizon: usize,
) -> Result<Vec<ControlLaw>> {
    let mut out: Vec<ControlLaw> = dims
        .iter()
        .map(|&(p, q)| ControlLaw::zeros(horizon, p, q))
        .collect();
    for rec in reader(r).records() {
        let rec = rec?;
        let agent: usize = rec[0].parse().map_err(|_| bad("agent column"))?;
        let step: usize = rec[1].parse().map_err(|_| bad("step column"))?;
        let row: usize = rec[2].parse().map_err(|_| bad("row column"))?;
        let value: f64 = rec[4].parse().map_err(|_| bad("value column"))?;
        let law = out
            .get_mut(agent)
            .ok_or_else(|| bad("agent out of range"))?;
        if step >= horizon {
            return Err(bad("step out of range"));
        }
        if rec[3].is_empty() {
            *law.feedforward[step]
                .get_mut(row)
                .ok_or_else(|| bad("row out of range"))? = value;
        } else {
            let col: usize = rec[3].parse().map_err(|_| bad("col column"))?;
            let k = &mut law.feedback[step];
            if row >= k.nrows() || col >= k.ncols() {
                return Err(bad("gain index out of range"));
            }
            k[(row, col)] = value;
        }
    }
    Ok(out)
}

/// A finished run loaded back from its output directory.
pub struct SavedRun {
    pub config: ScenarioConfig,
    pub problem: MultiAgentProblem,
    pub trajectories: Vec<Trajectory>,
    pub laws: Vec<ControlLaw>,
}

pub fn load_run(dir: &Path) -> Result<SavedRun> {
    let config = ScenarioConfig::load(&dir.join("scenario.toml"))?;
    let problem = config.problem()?;
    let dims: Vec<(usize, usize)> = problem
        .agents
        .iter()
        .map(|a| (a.state_dim(), a.control_dim()))
        .collect();
    let trajectories = read_trajectories(
        std::fs::File::open(dir.join("trajectories.csv"))?,
        &dims,
        problem.horizon,
        problem.dt,
    )?;
    let laws = read_gains(
        std::fs::File::open(dir.join("gains.csv"))?,
        &dims,
        problem.horizon,
    )?;
    Ok(SavedRun {
        config,
        problem,
        trajectories,
        laws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = Trajectory {
            states: vec![DVector::from_vec(vec![1.5, -2.0]); 3],
            controls: vec![DVector::from_vec(vec![0.25]); 2],
            dt: 0.1,
        };
        t.states[2][1] = 1e-17;
        let mut law = ControlLaw::zeros(2, 2, 1);
        law.feedback[1][(0, 1)] = -3.75;
        law.feedforward[0][0] = 0.125;
        let mut buf = Vec::new();
        write_trajectories(std::slice::from_ref(&t), &mut buf).unwrap();
        let back = read_trajectories(&buf[..], &[(2, 1)], 2, 0.1).unwrap();
        assert_eq!(back[0], t);
        let mut buf = Vec::new();
        write_gains(std::slice::from_ref(&law), &mut buf).unwrap();
        let back = read_gains(&buf[..], &[(2, 1)], 2).unwrap();
        assert_eq!(back[0].feedback, law.feedback);
        assert_eq!(back[0].feedforward, law.feedforward);
    }
}
