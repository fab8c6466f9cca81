//! Nested distributed DDP: every agent solves an augmented problem over its
//! neighborhood with AL-DDP, then copies are reconciled by consensus ADMM.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::admm::{
    consensus_average, gap_norm, weighted_gap_norm, AdaptationSettings, CopyMessage, PenaltyMode,
    PenaltySettings, Residuals, WeightedCopy,
};
use crate::al::{self, AlSettings, AlState};
use crate::constraints::{Constraint, ConstraintStack};
use crate::cost::{BlockCost, Cost, ProximalCost};
use crate::ddp::{ControlLaw, DdpSettings, Trajectory};
use crate::dynamics::BlockDynamics;
use crate::error::{Error, Result, ValidationError};
use crate::network::{take_from, MessageRecord, NeighborhoodGraph, Network, PayloadKind, Phase};
use crate::parallel::Executor;
use crate::problem::MultiAgentProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NdSettings {
    /// ADMM iteration budget `N`.
    pub iterations: usize,
    pub ddp: DdpSettings,
    pub al: AlSettings,
    pub warmstart: DdpSettings,
    /// State consensus uses `state_scale`/`rho`, control consensus
    /// `control_scale`/`mu`.
    pub penalty: PenaltySettings,
    /// Restart AL multipliers at every ADMM iteration.
    pub reset_multipliers: bool,
    /// Residual balancing on the (control, state) blocks.
    pub adaptation: Option<AdaptationSettings>,
}

impl Default for NdSettings {
    fn default() -> Self {
        Self {
            iterations: 50,
            ddp: DdpSettings {
                max_iterations: 20,
                ..DdpSettings::default()
            },
            al: AlSettings {
                max_outer: 5,
                ..AlSettings::default()
            },
            warmstart: DdpSettings {
                max_iterations: 100,
                ..DdpSettings::default()
            },
            penalty: PenaltySettings {
                control_scale: 2.0,
                state_scale: 8.0,
                mu: 1.0,
                ..PenaltySettings::default()
            },
            reset_multipliers: false,
            adaptation: None,
        }
    }
}

impl NdSettings {
    pub fn validate(&self) -> std::result::Result<(), String> {
        self.ddp.validate()?;
        self.warmstart.validate()?;
        self.penalty.validate()?;
        if let Some(a) = &self.adaptation {
            a.validate()?;
            if self.penalty.mode == PenaltyMode::Scalar {
                return Err("penalty adaptation requires matrix penalties".into());
            }
        }
        Ok(())
    }
}

/// Agent `i`'s problem over its whole neighborhood.
pub struct AugmentedProblem {
    pub owner: usize,
    /// `N_i`, self first.
    pub members: Vec<usize>,
    pub dynamics: BlockDynamics,
    /// `Σ_j J_j / |P_j|` on the member blocks.
    pub cost: BlockCost,
    pub stack: ConstraintStack,
    pub x0: DVector<f64>,
}

impl AugmentedProblem {
    pub fn state_dim(&self) -> usize {
        self.cost.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.cost.control_dim()
    }
}

/// Assembles the augmented problem of `owner` in canonical member order.
pub fn assemble(
    problem: &MultiAgentProblem,
    graph: &NeighborhoodGraph,
    owner: usize,
) -> AugmentedProblem {
    let members = graph.neighbors(owner).to_vec();
    let dynamics = BlockDynamics::new(
        members
            .iter()
            .map(|&j| problem.agents[j].dynamics.clone())
            .collect(),
    );
    let cost = BlockCost::new(
        members
            .iter()
            .map(|&j| {
                (
                    Arc::new(problem.agents[j].cost.clone()) as Arc<dyn Cost>,
                    1.0 / graph.neighbor_of(j).len() as f64,
                )
            })
            .collect(),
    );
    let mut constraints = Vec::new();
    for (slot, &j) in members.iter().enumerate() {
        let (so, co) = (
            dynamics.state_range(slot).start,
            dynamics.control_range(slot).start,
        );
        constraints.extend(
            problem.agents[j]
                .local_constraints()
                .iter()
                .map(|c| c.shifted(so, co)),
        );
    }
    for (slot, &j) in members.iter().enumerate().skip(1) {
        let other = dynamics.state_range(slot).start;
        constraints.extend(
            problem
                .pair_constraints(owner, j, 0, other)
                .into_iter()
                .map(Constraint::InterAgent),
        );
    }
    let parts: Vec<&DVector<f64>> = members.iter().map(|&j| &problem.agents[j].x0).collect();
    let x0 = DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    );
    AugmentedProblem {
        owner,
        members,
        dynamics,
        cost,
        stack: ConstraintStack::new(constraints),
        x0,
    }
}

struct AgentState {
    aug: AugmentedProblem,
    traj: Trajectory,
    law: ControlLaw,
    za: Vec<DVector<f64>>,
    wa: Vec<DVector<f64>>,
    lam: Vec<DVector<f64>>,
    y: Vec<DVector<f64>>,
    p0: DVector<f64>,
    m0: DVector<f64>,
    p: DVector<f64>,
    m: DVector<f64>,
    scale: [f64; 2],
    al: Option<AlState>,
}

impl AgentState {
    fn state_block(&self, slot: usize, v: &DVector<f64>) -> DVector<f64> {
        let r = self.aug.dynamics.state_range(slot);
        v.rows(r.start, r.len()).into_owned()
    }

    fn control_block(&self, slot: usize, v: &DVector<f64>) -> DVector<f64> {
        let r = self.aug.dynamics.control_range(slot);
        v.rows(r.start, r.len()).into_owned()
    }
}

/// Per-iteration, per-agent consensus diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NdLogEntry {
    pub state_gap: f64,
    pub control_gap: f64,
    pub violation: f64,
    pub state_dual: f64,
    pub control_dual: f64,
}

#[derive(Debug, Clone)]
pub struct NdResult {
    pub trajectories: Vec<Trajectory>,
    pub laws: Vec<ControlLaw>,
    pub iterations: usize,
    pub log: Vec<Vec<NdLogEntry>>,
    pub messages: Vec<MessageRecord>,
    pub local_times: Vec<Vec<f64>>,
    /// Final consensus gaps `max_i ‖x_i^a − z_i^a‖∞`.
    pub final_gap: f64,
}

fn concat(parts: &[&DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

fn sup_gap(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}

type Globals = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Runs ND-DDP on `problem`.
pub fn solve(
    problem: &MultiAgentProblem,
    settings: &NdSettings,
    exec: &Executor,
) -> Result<NdResult> {
    problem.validate()?;
    settings
        .validate()
        .map_err(|e| Error::Validation(ValidationError(vec![e])))?;
    let m = problem.len();
    let kk = problem.horizon;
    let graph = problem.graph.clone();
    let mut net = Network::new(graph.clone());

    let warm = problem.warmstart(&settings.warmstart, exec)?;
    let shared: Vec<Globals> = warm
        .iter()
        .map(|w| (w.trajectory.states.clone(), w.trajectory.controls.clone()))
        .collect();
    let inbound =
        net.broadcast_to_dependents(Phase::WarmstartShare, PayloadKind::Trajectory, &shared)?;

    let pen = &settings.penalty;
    let mut agents = Vec::with_capacity(m);
    for i in 0..m {
        let aug = assemble(problem, &graph, i);
        let mut pieces: Vec<Globals> = Vec::new();
        let mut p_parts = Vec::new();
        let mut m_parts = Vec::new();
        for &j in &aug.members {
            pieces.push(if j == i {
                shared[i].clone()
            } else {
                take_from(&inbound[i], j, i)?
            });
            let a = &problem.agents[j];
            p_parts.push(pen.base(&a.cost.q.diagonal(), pen.state_scale, pen.rho));
            m_parts.push(pen.base(&a.cost.r.diagonal(), pen.control_scale, pen.mu));
        }
        let states: Vec<DVector<f64>> = (0..=kk)
            .map(|k| concat(&pieces.iter().map(|p| &p.0[k]).collect::<Vec<_>>()))
            .collect();
        let controls: Vec<DVector<f64>> = (0..kk)
            .map(|k| concat(&pieces.iter().map(|p| &p.1[k]).collect::<Vec<_>>()))
            .collect();
        let (pa, qa) = (aug.state_dim(), aug.control_dim());
        let p0 = concat(&p_parts.iter().collect::<Vec<_>>());
        let m0 = concat(&m_parts.iter().collect::<Vec<_>>());
        let traj = Trajectory {
            states: states.clone(),
            controls: controls.clone(),
            dt: problem.dt,
        };
        agents.push(AgentState {
            law: ControlLaw::zeros(kk, pa, qa),
            aug,
            traj,
            za: states,
            wa: controls,
            lam: vec![DVector::zeros(pa); kk + 1],
            y: vec![DVector::zeros(qa); kk],
            p: p0.clone(),
            m: m0.clone(),
            p0,
            m0,
            scale: [1.0; 2],
            al: None,
        });
    }

    let mut out = NdResult {
        trajectories: Vec::new(),
        laws: Vec::new(),
        iterations: 0,
        log: Vec::new(),
        messages: Vec::new(),
        local_times: Vec::new(),
        final_gap: 0.0,
    };

    for n in 1..=settings.iterations {
        net.set_iteration(n);
        let local = exec.map(m, |i| -> Result<_> {
            let st = &agents[i];
            let start = Instant::now();
            let cost = ProximalCost {
                base: &st.aug.cost,
                state_weight: st.p.clone(),
                state_target: st.za.clone(),
                state_dual: st.lam.clone(),
                control_weight: st.m.clone(),
                control_target: st.wa.clone(),
                control_dual: st.y.clone(),
            };
            let warm_al = if settings.reset_multipliers {
                None
            } else {
                st.al.clone()
            };
            let sol = al::solve_constrained(
                &st.traj,
                &cost,
                &st.aug.dynamics,
                &st.aug.stack,
                &settings.ddp,
                &settings.al,
                warm_al,
            )
            .map_err(|e| Error::Other(format!("agent {i}: {e}")))?;
            Ok((sol, start.elapsed().as_secs_f64()))
        });
        let mut times = Vec::with_capacity(m);
        let mut violations = Vec::with_capacity(m);
        for (st, r) in agents.iter_mut().zip(local) {
            let (sol, secs) = r?;
            st.traj = sol.trajectory;
            st.law = sol.law;
            st.al = Some(sol.state);
            violations.push(sol.violation);
            times.push(secs);
        }

        let outgoing = (0..m)
            .map(|i| {
                let st = &agents[i];
                (1..st.aug.members.len())
                    .map(|slot| {
                        let msg = CopyMessage {
                            states: st
                                .traj
                                .states
                                .iter()
                                .map(|x| st.state_block(slot, x))
                                .collect(),
                            state_duals: st.lam.iter().map(|l| st.state_block(slot, l)).collect(),
                            state_weight: st.state_block(slot, &st.p),
                            controls: st
                                .traj
                                .controls
                                .iter()
                                .map(|u| st.control_block(slot, u))
                                .collect(),
                            control_duals: st.y.iter().map(|y| st.control_block(slot, y)).collect(),
                            control_weight: st.control_block(slot, &st.m),
                        };
                        (st.aug.members[slot], msg)
                    })
                    .collect()
            })
            .collect();
        let copies = net.exchange(Phase::CopiesToOwner, PayloadKind::Copy, outgoing)?;

        let globals: Vec<Globals> = exec.map(m, |i| {
            let st = &agents[i];
            let xs: Vec<DVector<f64>> = st
                .traj
                .states
                .iter()
                .map(|x| st.state_block(0, x))
                .collect();
            let ls: Vec<DVector<f64>> = st.lam.iter().map(|l| st.state_block(0, l)).collect();
            let pw = st.state_block(0, &st.p);
            let us: Vec<DVector<f64>> = st
                .traj
                .controls
                .iter()
                .map(|u| st.control_block(0, u))
                .collect();
            let ys: Vec<DVector<f64>> = st.y.iter().map(|y| st.control_block(0, y)).collect();
            let mw = st.control_block(0, &st.m);
            let mut sp: Vec<WeightedCopy> = vec![(&xs, &ls, &pw)];
            let mut cp: Vec<WeightedCopy> = vec![(&us, &ys, &mw)];
            for (_, msg) in &copies[i] {
                sp.push((&msg.states, &msg.state_duals, &msg.state_weight));
                cp.push((&msg.controls, &msg.control_duals, &msg.control_weight));
            }
            (
                consensus_average(pen.mode, &sp),
                consensus_average(pen.mode, &cp),
            )
        });
        let inbound =
            net.broadcast_to_dependents(Phase::GlobalsToNeighbors, PayloadKind::Global, &globals)?;

        let mut entries = Vec::with_capacity(m);
        let mut residuals = Vec::with_capacity(m);
        for i in 0..m {
            let st = &mut agents[i];
            let mut blocks = vec![globals[i].clone()];
            for &j in &st.aug.members[1..] {
                blocks.push(take_from(&inbound[i], j, i)?);
            }
            let za: Vec<DVector<f64>> = (0..=kk)
                .map(|k| concat(&blocks.iter().map(|b| &b.0[k]).collect::<Vec<_>>()))
                .collect();
            let wa: Vec<DVector<f64>> = (0..kk)
                .map(|k| concat(&blocks.iter().map(|b| &b.1[k]).collect::<Vec<_>>()))
                .collect();
            for ((lam, x), z) in st.lam.iter_mut().zip(&st.traj.states).zip(&za) {
                *lam += (x - z).component_mul(&st.p);
            }
            for ((y, u), w) in st.y.iter_mut().zip(&st.traj.controls).zip(&wa) {
                *y += (u - w).component_mul(&st.m);
            }
            let r = Residuals {
                primal: [
                    gap_norm(&st.traj.controls, &wa),
                    gap_norm(&st.traj.states, &za),
                    0.0,
                ],
                dual: [
                    weighted_gap_norm(&st.m, &wa, &st.wa),
                    weighted_gap_norm(&st.p, &za, &st.za),
                    0.0,
                ],
            };
            entries.push(NdLogEntry {
                state_gap: r.primal[1],
                control_gap: r.primal[0],
                violation: violations[i],
                state_dual: r.dual[1],
                control_dual: r.dual[0],
            });
            residuals.push(r);
            st.za = za;
            st.wa = wa;
        }

        if let Some(ad) = &settings.adaptation {
            if n % ad.interval == 0 {
                for (st, r) in agents.iter_mut().zip(&residuals) {
                    for b in 0..2 {
                        st.scale[b] = ad.adapt(b, st.scale[b], r.primal[b], r.dual[b]);
                    }
                    st.m = &st.m0 * st.scale[0];
                    st.p = &st.p0 * st.scale[1];
                }
            }
        }
        out.log.push(entries);
        out.local_times.push(times);
        out.iterations = n;
    }

    out.messages = net.log().to_vec();
    out.final_gap = agents
        .iter()
        .map(|st| sup_gap(&st.traj.states, &st.za).max(sup_gap(&st.traj.controls, &st.wa)))
        .fold(0.0, f64::max);
    for (i, st) in agents.into_iter().enumerate() {
        let (p, q) = (
            problem.agents[i].state_dim(),
            problem.agents[i].control_dim(),
        );
        out.trajectories.push(st.traj.slice(0..p, 0..q));
        out.laws.push(st.law.slice(0..p, 0..q));
    }
    Ok(out)
}

/// Writes the consensus log: iteration, agent, gaps, violation.
pub fn write_log<W: std::io::Write>(
    result: &NdResult,
    w: W,
) -> std::result::Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "iteration",
        "agent",
        "state_gap",
        "control_gap",
        "max_violation",
        "state_dual",
        "control_dual",
    ])?;
    for (n, row) in result.log.iter().enumerate() {
        for (i, e) in row.iter().enumerate() {
            wr.write_record([
                (n + 1).to_string(),
                i.to_string(),
                format!("{:e}", e.state_gap),
                format!("{:e}", e.control_gap),
                format!("{:e}", e.violation),
                format!("{:e}", e.state_dual),
                format!("{:e}", e.control_dual),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}
