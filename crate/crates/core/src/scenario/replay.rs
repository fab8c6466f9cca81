//! Noisy execution of planned trajectories, open- and closed-loop.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::ddp::{ControlLaw, Trajectory};
use crate::problem::MultiAgentProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplayStats {
    /// Mean over agents of the final position distance to the plan.
    pub mean_terminal_error: f64,
    pub min_distance: f64,
    /// `max(0, d_col − min_distance)`.
    pub collision_violation: f64,
    /// Neighbor pairs and steps closer than the collision distance.
    pub violation_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    pub open_loop: ReplayStats,
    pub closed_loop: ReplayStats,
}

/// Executes the plan under additive Gaussian noise on the position entries.
///
/// Closed loop applies `u = u* + K (x − x*)`; open loop replays `u*`. The
/// noise stream depends only on `seed`, so both modes see the same draws.
pub fn replay(
    problem: &MultiAgentProblem,
    plans: &[Trajectory],
    laws: &[ControlLaw],
    noise_std: f64,
    seed: u64,
    feedback: bool,
) -> (Vec<Trajectory>, ReplayStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std).expect("noise std must be finite and nonnegative");
    let kk = problem.horizon;
    let mut states: Vec<Vec<DVector<f64>>> =
        problem.agents.iter().map(|a| vec![a.x0.clone()]).collect();
    let mut controls: Vec<Vec<DVector<f64>>> = vec![Vec::with_capacity(kk); problem.len()];
    for k in 0..kk {
        for (i, a) in problem.agents.iter().enumerate() {
            let x = &states[i][k];
            let mut u = plans[i].controls[k].clone();
            if feedback {
                u += &laws[i].feedback[k] * (x - &plans[i].states[k]);
            }
            let mut next = a.dynamics.step(x, &u);
            for &c in &a.position {
                next[c] += normal.sample(&mut rng);
            }
            states[i].push(next);
            controls[i].push(u);
        }
    }
    let trajs: Vec<Trajectory> = states
        .into_iter()
        .zip(controls)
        .map(|(s, c)| Trajectory {
            states: s,
            controls: c,
            dt: problem.dt,
        })
        .collect();
    let mean_terminal_error = problem
        .agents
        .iter()
        .zip(&trajs)
        .zip(plans)
        .map(|((a, t), p)| (a.position_of(&t.states[kk]) - a.position_of(&p.states[kk])).norm())
        .sum::<f64>()
        / problem.len() as f64;
    let min_distance = problem.min_neighbor_distance(&trajs);
    let collision_violation = problem
        .collision
        .map_or(0.0, |d| (d - min_distance).max(0.0));
    let mut violation_count = 0;
    if let Some(d) = problem.collision {
        for (i, j) in problem.pairs() {
            let (ai, aj) = (&problem.agents[i], &problem.agents[j]);
            violation_count += (0..=kk)
                .filter(|&k| {
                    (ai.position_of(&trajs[i].states[k]) - aj.position_of(&trajs[j].states[k]))
                        .norm()
                        < d
                })
                .count();
        }
    }
    (
        trajs,
        ReplayStats {
            mean_terminal_error,
            min_distance,
            collision_violation,
            violation_count,
        },
    )
}

/// Runs both modes for each seed.
pub fn compare(
    problem: &MultiAgentProblem,
    plans: &[Trajectory],
    laws: &[ControlLaw],
    noise_std: f64,
    seeds: impl IntoIterator<Item = u64>,
) -> Vec<SeedReport> {
    seeds
        .into_iter()
        .map(|seed| SeedReport {
            seed,
            open_loop: replay(problem, plans, laws, noise_std, seed, false).1,
            closed_loop: replay(problem, plans, laws, noise_std, seed, true).1,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin;

    #[test]
    fn noiseless_replay_follows_plan() {
        let cfg = builtin::robot_swap(2);
        let problem = cfg.problem().unwrap();
        let plans: Vec<Trajectory> = (0..2).map(|i| problem.initial_trajectory(i)).collect();
        let laws: Vec<ControlLaw> = plans
            .iter()
            .map(|p| ControlLaw::zeros(p.horizon(), 3, 2))
            .collect();
        for fb in [false, true] {
            let (t, s) = replay(&problem, &plans, &laws, 0.0, 1, fb);
            assert_eq!(t[0].states, plans[0].states);
            assert_eq!(s.mean_terminal_error, 0.0);
        }
    }
}
