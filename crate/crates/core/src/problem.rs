//! Multi-agent problem description shared by all solvers.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::constraints::{
    BoxConstraint, Constraint, ConstraintStack, InterAgentConstraint, InterAgentKind,
    ObstacleConstraint,
};
use crate::cost::{BlockCost, Cost, QuadraticCost};
use crate::ddp::{self, DdpSettings, DdpSolution, Trajectory};
use crate::dynamics::{BlockDynamics, Dynamics};
use crate::error::{DdpError, ValidationError};
use crate::network::NeighborhoodGraph;
use crate::parallel::Executor;

/// One agent: model, objective, start state and local constraints.
#[derive(Clone)]
pub struct Agent {
    pub dynamics: Arc<dyn Dynamics>,
    pub cost: QuadraticCost,
    pub x0: DVector<f64>,
    /// State indices holding the position.
    pub position: Vec<usize>,
    pub control_box: Option<BoxConstraint>,
    pub state_boxes: Vec<BoxConstraint>,
    pub obstacles: Vec<ObstacleConstraint>,
    /// Constant control used to seed the first rollout (zeros otherwise).
    pub initial_control: Option<DVector<f64>>,
}

impl Agent {
    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    /// Box, state-box and obstacle rows in the agent's own coordinates.
    pub fn local_constraints(&self) -> Vec<Constraint> {
        let mut out = Vec::new();
        if let Some(b) = &self.control_box {
            out.push(Constraint::Box(b.clone()));
        }
        out.extend(self.state_boxes.iter().cloned().map(Constraint::Box));
        out.extend(self.obstacles.iter().cloned().map(Constraint::Obstacle));
        out
    }

    pub fn goal_position(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.position.len(),
            self.position.iter().map(|&i| self.cost.goal[i]),
        )
    }

    pub fn position_of(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.position.len(), self.position.iter().map(|&i| x[i]))
    }
}

#[derive(Clone)]
pub struct MultiAgentProblem {
    pub agents: Vec<Agent>,
    pub graph: NeighborhoodGraph,
    /// Minimum separation between neighbors.
    pub collision: Option<f64>,
    /// Maximum separation between neighbors.
    pub connectivity: Option<f64>,
    pub horizon: usize,
    pub dt: f64,
}

/// Worst violation per constraint family (0 when satisfied).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Violations {
    pub collision: f64,
    pub connectivity: f64,
    pub obstacle: f64,
    pub state_box: f64,
    pub control_box: f64,
}

impl Violations {
    pub fn max(&self) -> f64 {
        [
            self.collision,
            self.connectivity,
            self.obstacle,
            self.state_box,
            self.control_box,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Joint problem for the centralized baseline.
pub struct CentralProblem {
    pub dynamics: BlockDynamics,
    pub cost: BlockCost,
    pub stack: ConstraintStack,
    pub x0: DVector<f64>,
}

fn stack_vectors(parts: impl Iterator<Item = DVector<f64>>) -> DVector<f64> {
    let parts: Vec<_> = parts.collect();
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

impl MultiAgentProblem {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut errs = Vec::new();
        if self.agents.is_empty() {
            errs.push("at least one agent is required".to_string());
        }
        if self.graph.len() != self.agents.len() {
            errs.push(format!(
                "graph has {} agents, problem has {}",
                self.graph.len(),
                self.agents.len()
            ));
        }
        if self.horizon == 0 {
            errs.push("horizon must be positive".into());
        }
        if !(self.dt > 0.0) {
            errs.push("dt must be positive".into());
        }
        for (name, v) in [
            ("collision", self.collision),
            ("connectivity", self.connectivity),
        ] {
            if v.is_some_and(|d| !(d > 0.0)) {
                errs.push(format!("{name} distance must be positive"));
            }
        }
        if let (Some(c), Some(k)) = (self.collision, self.connectivity) {
            if c >= k {
                errs.push("collision distance must be below connectivity distance".into());
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.x0.len() != a.state_dim() || a.cost.goal.len() != a.state_dim() {
                errs.push(format!("agent {i}: start or goal has the wrong dimension"));
            }
            if a.position.iter().any(|&p| p >= a.state_dim()) || a.position.is_empty() {
                errs.push(format!("agent {i}: invalid position indices"));
            }
            if a.initial_control
                .as_ref()
                .is_some_and(|u| u.len() != a.control_dim())
            {
                errs.push(format!(
                    "agent {i}: initial control has the wrong dimension"
                ));
            }
        }
        for i in 0..self.agents.len().min(self.graph.len()) {
            for &j in &self.graph.neighbors(i)[1..] {
                if self.agents[i].position.len() != self.agents[j].position.len() {
                    errs.push(format!(
                        "agents {i} and {j} live in different position spaces"
                    ));
                    continue;
                }
                let d = (self.agents[i].position_of(&self.agents[i].x0)
                    - self.agents[j].position_of(&self.agents[j].x0))
                .norm();
                if self.collision.is_some_and(|c| d < c) {
                    errs.push(format!(
                        "agents {i} and {j} start closer than the collision distance"
                    ));
                }
                if self.connectivity.is_some_and(|c| d > c) {
                    errs.push(format!(
                        "agents {i} and {j} start farther apart than the connectivity distance"
                    ));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ValidationError(errs))
        }
    }

    /// Collision/connectivity rows between agent `i` (at `own_offset`) and
    /// agent `j` (at `other_offset`) inside a stacked state.
    pub fn pair_constraints(
        &self,
        i: usize,
        j: usize,
        own_offset: usize,
        other_offset: usize,
    ) -> Vec<InterAgentConstraint> {
        let own: Vec<usize> = self.agents[i]
            .position
            .iter()
            .map(|p| p + own_offset)
            .collect();
        let other: Vec<usize> = self.agents[j]
            .position
            .iter()
            .map(|p| p + other_offset)
            .collect();
        let mut out = Vec::new();
        for (kind, d) in [
            (InterAgentKind::Collision, self.collision),
            (InterAgentKind::Connectivity, self.connectivity),
        ] {
            if let Some(threshold) = d {
                out.push(InterAgentConstraint {
                    kind,
                    threshold,
                    own: own.clone(),
                    other: other.clone(),
                    neighbor: j,
                    window: None,
                });
            }
        }
        out
    }

    /// Unordered neighbor pairs, each once, ascending.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            for &j in &self.graph.neighbors(i)[1..] {
                let p = (i.min(j), i.max(j));
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Rollout of the agent's seed controls.
    pub fn initial_trajectory(&self, i: usize) -> Trajectory {
        let a = &self.agents[i];
        let u = a
            .initial_control
            .clone()
            .unwrap_or_else(|| DVector::zeros(a.control_dim()));
        Trajectory::rollout(a.dynamics.as_ref(), &a.x0, vec![u; self.horizon], self.dt)
    }

    /// Unconstrained single-agent solves used to seed every method.
    pub fn warmstart(
        &self,
        settings: &DdpSettings,
        exec: &Executor,
    ) -> Result<Vec<DdpSolution>, DdpError> {
        exec.map(self.len(), |i| {
            let a = &self.agents[i];
            ddp::solve(
                &self.initial_trajectory(i),
                &a.cost,
                a.dynamics.as_ref(),
                settings,
            )
        })
        .into_iter()
        .collect()
    }

    /// Block dynamics, summed cost and every constraint once.
    pub fn central(&self) -> CentralProblem {
        let dynamics = BlockDynamics::new(self.agents.iter().map(|a| a.dynamics.clone()).collect());
        let cost = BlockCost::new(
            self.agents
                .iter()
                .map(|a| (Arc::new(a.cost.clone()) as Arc<dyn Cost>, 1.0))
                .collect(),
        );
        let mut constraints = Vec::new();
        for (b, a) in self.agents.iter().enumerate() {
            let (so, co) = (
                dynamics.state_range(b).start,
                dynamics.control_range(b).start,
            );
            constraints.extend(a.local_constraints().iter().map(|c| c.shifted(so, co)));
        }
        for (i, j) in self.pairs() {
            let (oi, oj) = (dynamics.state_range(i).start, dynamics.state_range(j).start);
            constraints.extend(
                self.pair_constraints(i, j, oi, oj)
                    .into_iter()
                    .map(Constraint::InterAgent),
            );
        }
        let x0 = stack_vectors(self.agents.iter().map(|a| a.x0.clone()));
        CentralProblem {
            dynamics,
            cost,
            stack: ConstraintStack::new(constraints),
            x0,
        }
    }

    /// Joins per-agent trajectories into one block trajectory.
    pub fn join(&self, trajs: &[Trajectory]) -> Trajectory {
        let k = self.horizon;
        let states = (0..=k)
            .map(|t| stack_vectors(trajs.iter().map(|tr| tr.states[t].clone())))
            .collect();
        let controls = (0..k)
            .map(|t| stack_vectors(trajs.iter().map(|tr| tr.controls[t].clone())))
            .collect();
        Trajectory {
            states,
            controls,
            dt: self.dt,
        }
    }

    /// Splits a block trajectory into per-agent pieces.
    pub fn split(&self, joint: &Trajectory) -> Vec<Trajectory> {
        let mut so = 0;
        let mut co = 0;
        self.agents
            .iter()
            .map(|a| {
                let (p, q) = (a.state_dim(), a.control_dim());
                let t = joint.slice(so..so + p, co..co + q);
                so += p;
                co += q;
                t
            })
            .collect()
    }

    /// Sum of the agents' own objectives.
    pub fn total_cost(&self, trajs: &[Trajectory]) -> f64 {
        self.agents
            .iter()
            .zip(trajs)
            .map(|(a, t)| t.cost(&a.cost))
            .sum()
    }

    /// Final position error per agent.
    pub fn terminal_errors(&self, trajs: &[Trajectory]) -> Vec<f64> {
        self.agents
            .iter()
            .zip(trajs)
            .map(|(a, t)| {
                (a.position_of(t.states.last().expect("nonempty")) - a.goal_position()).norm()
            })
            .collect()
    }

    /// Smallest distance between any two neighbors over the horizon.
    pub fn min_neighbor_distance(&self, trajs: &[Trajectory]) -> f64 {
        let mut best = f64::INFINITY;
        for (i, j) in self.pairs() {
            for k in 0..=self.horizon {
                let d = (self.agents[i].position_of(&trajs[i].states[k])
                    - self.agents[j].position_of(&trajs[j].states[k]))
                .norm();
                best = best.min(d);
            }
        }
        best
    }

    /// Worst violation per family over all agents and neighbor pairs.
    pub fn violations(&self, trajs: &[Trajectory]) -> Violations {
        let mut v = Violations::default();
        for (a, t) in self.agents.iter().zip(trajs) {
            for k in 0..=self.horizon {
                let x = &t.states[k];
                for o in &a.obstacles {
                    if o.window.is_none_or(|w| w.contains(k)) {
                        let d = (a.position_of(x) - &o.center).norm();
                        v.obstacle = v.obstacle.max(o.radius + o.clearance - d);
                    }
                }
                for b in &a.state_boxes {
                    v.state_box = v.state_box.max(box_violation(b, x, k));
                }
                if k < self.horizon {
                    if let Some(b) = &a.control_box {
                        v.control_box = v.control_box.max(box_violation(b, &t.controls[k], k));
                    }
                }
            }
        }
        for (i, j) in self.pairs() {
            for k in 0..=self.horizon {
                let d = (self.agents[i].position_of(&trajs[i].states[k])
                    - self.agents[j].position_of(&trajs[j].states[k]))
                .norm();
                if let Some(c) = self.collision {
                    v.collision = v.collision.max(c - d);
                }
                if let Some(c) = self.connectivity {
                    v.connectivity = v.connectivity.max(d - c);
                }
            }
        }
        v
    }
}

fn box_violation(b: &BoxConstraint, v: &DVector<f64>, k: usize) -> f64 {
    if !b.window.is_none_or(|w| w.contains(k)) {
        return 0.0;
    }
    let m = b.mapped(v);
    m.iter()
        .enumerate()
        .map(|(c, &x)| (x - b.upper[c]).max(b.lower[c] - x))
        .fold(0.0, f64::max)
}
