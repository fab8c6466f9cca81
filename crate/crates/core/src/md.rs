//! Merged distributed DDP: single-agent DDP steps, per-timestep safe-set
//! projections, consensus averaging and dual ascent, with optional momentum
//! and decentralized penalty adaptation.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::admm::{
    consensus_average, extrapolate, gap_norm, weighted_gap_norm, AdaptationSettings, CopyMessage,
    DivergenceGuard, Nesterov, PenaltyMode, PenaltySettings, Residuals, StopThresholds,
    WeightedCopy,
};
use crate::constraints::{
    connectivity_polytope, linearize_interagent, linearize_obstacle, HalfSpace, InterAgentKind,
    Target,
};
use crate::cost::ProximalCost;
use crate::ddp::{self, ControlLaw, DdpSettings, Trajectory};
use crate::error::{Error, Result};
use crate::network::{take_from, MessageRecord, Network, PayloadKind, Phase};
use crate::parallel::Executor;
use crate::problem::MultiAgentProblem;
use crate::projection::{blend, project_control, project_weighted};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdSettings {
    /// ADMM iteration budget `N`.
    pub iterations: usize,
    /// Local Step-1 DDP settings.
    pub ddp: DdpSettings,
    /// Settings for the initial single-agent solves.
    pub warmstart: DdpSettings,
    pub penalty: PenaltySettings,
    /// Momentum parameter `η ∈ [0, 1)`; 0 disables acceleration.
    pub nesterov_eta: f64,
    /// Reset momentum when the primal residual blows up.
    pub nesterov_restart: bool,
    pub adaptation: Option<AdaptationSettings>,
    pub stop: Option<StopThresholds>,
    /// Which Step-1 trajectories the coupling rows are linearized around.
    pub linearize_at: Linearization,
}

/// Reference for linearizing obstacle, collision and connectivity rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linearization {
    /// Trajectories from the previous iteration, shared before Step 1.
    #[default]
    Previous,
    /// This iteration's Step-1 trajectories, shared between Steps 1 and 2.
    Current,
}

impl Default for MdSettings {
    fn default() -> Self {
        Self {
            iterations: 200,
            ddp: DdpSettings {
                max_iterations: 10,
                ..DdpSettings::default()
            },
            warmstart: DdpSettings {
                max_iterations: 100,
                warmstart: true,
                ..DdpSettings::default()
            },
            penalty: PenaltySettings::default(),
            nesterov_eta: 0.0,
            nesterov_restart: false,
            adaptation: None,
            stop: None,
            linearize_at: Linearization::Previous,
        }
    }
}

impl MdSettings {
    pub fn validate(&self) -> std::result::Result<(), String> {
        self.ddp.validate()?;
        self.warmstart.validate()?;
        self.penalty.validate()?;
        if !(0.0..1.0).contains(&self.nesterov_eta) {
            return Err("nesterov eta must lie in [0, 1)".into());
        }
        if let Some(a) = &self.adaptation {
            a.validate()?;
            if self.penalty.mode == PenaltyMode::Scalar {
                return Err("penalty adaptation requires matrix penalties".into());
            }
        }
        Ok(())
    }
}

/// Diagonal penalties with their bases and scale factors.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrices {
    pub t0: DVector<f64>,
    pub p0: DVector<f64>,
    pub m0: DVector<f64>,
    pub scale: [f64; 3],
    pub t: DVector<f64>,
    pub p: DVector<f64>,
    pub m: DVector<f64>,
}

impl PenaltyMatrices {
    fn new(t0: DVector<f64>, p0: DVector<f64>, m0: DVector<f64>) -> Self {
        Self {
            t: t0.clone(),
            p: p0.clone(),
            m: m0.clone(),
            t0,
            p0,
            m0,
            scale: [1.0; 3],
        }
    }

    fn rescale(&mut self, scale: [f64; 3]) {
        self.scale = scale;
        self.t = &self.t0 * scale[0];
        self.p = &self.p0 * scale[1];
        self.m = &self.m0 * scale[2];
    }
}

/// Plain iterates of one agent.
#[derive(Debug, Clone, PartialEq)]
struct Iterate {
    /// Safe controls `ũ_i`.
    ut: Vec<DVector<f64>>,
    /// Safe copies `x̃_i^a`.
    xt: Vec<DVector<f64>>,
    /// Globals `z_i^a`.
    za: Vec<DVector<f64>>,
    xi: Vec<DVector<f64>>,
    lam: Vec<DVector<f64>>,
    y: Vec<DVector<f64>>,
}

impl Iterate {
    fn extrapolated(&self, prev: &Iterate, gamma: f64) -> Iterate {
        Iterate {
            ut: extrapolate(&self.ut, &prev.ut, gamma),
            xt: extrapolate(&self.xt, &prev.xt, gamma),
            za: extrapolate(&self.za, &prev.za, gamma),
            xi: extrapolate(&self.xi, &prev.xi, gamma),
            lam: extrapolate(&self.lam, &prev.lam, gamma),
            y: extrapolate(&self.y, &prev.y, gamma),
        }
    }
}

struct AgentState {
    members: Vec<usize>,
    /// State offset of each member inside the copy vector.
    offsets: Vec<usize>,
    p: usize,
    traj: Trajectory,
    law: ControlLaw,
    plain: Iterate,
    prev: Iterate,
    bar: Iterate,
    pen: PenaltyMatrices,
    /// Reference state trajectories of each member (self first).
    references: Vec<Vec<DVector<f64>>>,
}

impl AgentState {
    fn own_block(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(0, self.p).into_owned()
    }

    fn block(&self, slot: usize, v: &DVector<f64>) -> DVector<f64> {
        let len = if slot + 1 < self.offsets.len() {
            self.offsets[slot + 1]
        } else {
            v.len()
        } - self.offsets[slot];
        v.rows(self.offsets[slot], len).into_owned()
    }
}

/// Everything an MD-DDP run produces.
#[derive(Debug, Clone)]
pub struct MdResult {
    pub trajectories: Vec<Trajectory>,
    pub laws: Vec<ControlLaw>,
    pub safe_states: Vec<Vec<DVector<f64>>>,
    pub safe_controls: Vec<Vec<DVector<f64>>>,
    pub iterations: usize,
    /// Stopped by the residual thresholds.
    pub converged: bool,
    /// Per iteration, per agent.
    pub residuals: Vec<Vec<Residuals>>,
    pub totals: Vec<Residuals>,
    /// Per iteration, per agent scale factors `a_{1..3}`.
    pub scales: Vec<Vec<[f64; 3]>>,
    pub messages: Vec<MessageRecord>,
    /// Per iteration, per agent seconds spent in Steps 1–2.
    pub local_times: Vec<Vec<f64>>,
    /// `(iteration, agent, step)` of relaxed projections.
    pub relaxed: Vec<(usize, usize, usize)>,
    pub restarts: usize,
}

fn zeros(n: usize, dim: usize) -> Vec<DVector<f64>> {
    vec![DVector::zeros(dim); n]
}

fn concat(parts: &[&DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

/// Unit fallback used when two linearization points coincide.
fn nudge(v: &DVector<f64>, sign: f64) -> DVector<f64> {
    let mut w = v.clone();
    w[0] += sign * 1e-6;
    w
}

/// Half-spaces on the copy vector of agent `i` at step `k`.
fn state_rows(problem: &MultiAgentProblem, i: usize, st: &AgentState, k: usize) -> Vec<HalfSpace> {
    let agent = &problem.agents[i];
    let mut rows = Vec::new();
    let own_ref = agent.position_of(&st.references[0][k]);
    for o in &agent.obstacles {
        if !o.window.is_none_or(|w| w.contains(k)) {
            continue;
        }
        let h = linearize_obstacle(o, &own_ref, k)
            .or_else(|_| linearize_obstacle(o, &nudge(&own_ref, 1.0), k));
        rows.extend(h.ok());
    }
    for (slot, &j) in st.members.iter().enumerate().skip(1) {
        let other_ref = problem.agents[j].position_of(&st.references[slot][k]);
        let sign = if i > j { 1.0 } else { -1.0 };
        for c in problem.pair_constraints(i, j, 0, st.offsets[slot]) {
            let h = linearize_interagent(&c, &own_ref, &other_ref, k)
                .or_else(|_| linearize_interagent(&c, &nudge(&own_ref, sign), &other_ref, k));
            if c.kind == InterAgentKind::Connectivity {
                rows.extend(connectivity_polytope(&c, k));
            }
            rows.extend(h.ok());
        }
    }
    rows
}

/// Step 2 for one agent: safe controls and safe copies at every step.
#[allow(clippy::type_complexity)]
fn project_all(
    problem: &MultiAgentProblem,
    i: usize,
    st: &AgentState,
    traj: &Trajectory,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<usize>)> {
    let agent = &problem.agents[i];
    let bar = &st.bar;
    let pen = &st.pen;
    let mut relaxed = Vec::new();
    let mut ut = Vec::with_capacity(problem.horizon);
    for k in 0..problem.horizon {
        let target = &traj.controls[k] + bar.xi[k].component_div(&pen.t);
        let proj = project_control(&pen.t, &target, agent.control_box.as_ref())?;
        ut.push(proj.point);
    }
    let pa = st.offsets.last().copied().unwrap_or(0)
        + problem.agents[*st.members.last().unwrap()].state_dim();
    let m_own = st.own_block(&pen.m);
    let h_own = &pen.p + &m_own;
    let h = concat(&[&h_own, &pen.m.rows(st.p, pa - st.p).into_owned()]);
    let mut xt = Vec::with_capacity(problem.horizon + 1);
    for k in 0..=problem.horizon {
        let a = &traj.states[k] + bar.lam[k].component_div(&pen.p);
        let b = &bar.za[k] - bar.y[k].component_div(&pen.m);
        let own = blend(&pen.p, &a, &m_own, &st.own_block(&b));
        let target = concat(&[&own, &b.rows(st.p, pa - st.p).into_owned()]);
        let mut rows: Vec<(DVector<f64>, f64)> = state_rows(problem, i, st, k)
            .iter()
            .map(|hs| (hs.row(pa), hs.offset))
            .collect();
        for bx in &agent.state_boxes {
            if bx.window.is_none_or(|w| w.contains(k)) {
                rows.extend(bx.as_rows(pa));
            }
        }
        let proj = project_weighted(&h, &target, &rows)?;
        if proj.relaxed {
            relaxed.push(k);
        }
        let mut x = proj.point;
        let mut own = st.own_block(&x);
        for bx in &agent.state_boxes {
            if bx.map.is_none()
                && bx.target == Target::State
                && bx.window.is_none_or(|w| w.contains(k))
            {
                bx.clamp(&mut own);
            }
        }
        x.rows_mut(0, st.p).copy_from(&own);
        xt.push(x);
    }
    Ok((ut, xt, relaxed))
}

fn residuals(st: &AgentState, prev: &Iterate) -> Residuals {
    let own = |v: &[DVector<f64>]| v.iter().map(|x| st.own_block(x)).collect::<Vec<_>>();
    let xt_own = own(&st.plain.xt);
    let xt_own_prev = own(&prev.xt);
    Residuals {
        primal: [
            gap_norm(&st.traj.controls, &st.plain.ut),
            gap_norm(&st.traj.states, &xt_own),
            gap_norm(&st.plain.xt, &st.plain.za),
        ],
        dual: [
            weighted_gap_norm(&st.pen.t, &st.plain.ut, &prev.ut),
            weighted_gap_norm(&st.pen.p, &xt_own, &xt_own_prev),
            weighted_gap_norm(&st.pen.m, &st.plain.za, &prev.za),
        ],
    }
}

/// Sends each agent's latest Step-1 states to its dependents.
fn share_references(net: &mut Network, agents: &mut [AgentState]) -> Result<()> {
    let refs: Vec<Vec<DVector<f64>>> = agents.iter().map(|s| s.traj.states.clone()).collect();
    let inbound =
        net.broadcast_to_dependents(Phase::ReferenceShare, PayloadKind::Trajectory, &refs)?;
    for (i, st) in agents.iter_mut().enumerate() {
        st.references[0] = refs[i].clone();
        for slot in 1..st.members.len() {
            st.references[slot] = take_from(&inbound[i], st.members[slot], i)?;
        }
    }
    Ok(())
}

/// Runs MD-DDP on `problem`.
pub fn solve(
    problem: &MultiAgentProblem,
    settings: &MdSettings,
    exec: &Executor,
) -> Result<MdResult> {
    problem.validate()?;
    settings
        .validate()
        .map_err(|e| Error::Validation(crate::error::ValidationError(vec![e])))?;
    let m = problem.len();
    let kk = problem.horizon;
    let graph = problem.graph.clone();
    let mut net = Network::new(graph.clone());

    // single-agent solves and neighbor share
    let warm = problem.warmstart(&settings.warmstart, exec)?;
    let shared: Vec<Vec<DVector<f64>>> = warm.iter().map(|w| w.trajectory.states.clone()).collect();
    let inbound =
        net.broadcast_to_dependents(Phase::WarmstartShare, PayloadKind::Trajectory, &shared)?;

    let mut agents: Vec<AgentState> = Vec::with_capacity(m);
    for (i, w) in warm.into_iter().enumerate() {
        let members = graph.neighbors(i).to_vec();
        let mut offsets = Vec::with_capacity(members.len());
        let mut off = 0;
        let mut references = Vec::with_capacity(members.len());
        let mut m0_parts = Vec::new();
        for &j in &members {
            offsets.push(off);
            off += problem.agents[j].state_dim();
            let r = if j == i {
                w.trajectory.states.clone()
            } else {
                take_from(&inbound[i], j, i)?
            };
            references.push(r);
            m0_parts.push(settings.penalty.base(
                &problem.agents[j].cost.q.diagonal(),
                settings.penalty.copy_scale,
                settings.penalty.mu,
            ));
        }
        let a = &problem.agents[i];
        let t0 = settings.penalty.base(
            &a.cost.r.diagonal(),
            settings.penalty.control_scale,
            settings.penalty.tau,
        );
        let p0 = settings.penalty.base(
            &a.cost.q.diagonal(),
            settings.penalty.state_scale,
            settings.penalty.rho,
        );
        let m0 = concat(&m0_parts.iter().collect::<Vec<_>>());
        let xt: Vec<DVector<f64>> = (0..=kk)
            .map(|k| concat(&references.iter().map(|r| &r[k]).collect::<Vec<_>>()))
            .collect();
        let pa = off;
        let plain = Iterate {
            ut: w.trajectory.controls.clone(),
            za: xt.clone(),
            xt,
            xi: zeros(kk, a.control_dim()),
            lam: zeros(kk + 1, a.state_dim()),
            y: zeros(kk + 1, pa),
        };
        agents.push(AgentState {
            members,
            offsets,
            p: a.state_dim(),
            traj: w.trajectory,
            law: w.law,
            prev: plain.clone(),
            bar: plain.clone(),
            plain,
            pen: PenaltyMatrices::new(t0, p0, m0),
            references,
        });
    }

    let mut nesterov = Nesterov::new(settings.nesterov_eta);
    let mut guard = DivergenceGuard::default();
    let mut out = MdResult {
        trajectories: Vec::new(),
        laws: Vec::new(),
        safe_states: Vec::new(),
        safe_controls: Vec::new(),
        iterations: 0,
        converged: false,
        residuals: Vec::new(),
        totals: Vec::new(),
        scales: Vec::new(),
        messages: Vec::new(),
        local_times: Vec::new(),
        relaxed: Vec::new(),
        restarts: 0,
    };

    for n in 1..=settings.iterations {
        net.set_iteration(n);

        if settings.linearize_at == Linearization::Previous && n > 1 {
            share_references(&mut net, &mut agents)?;
        }

        // Step 1: local DDP on the proximal objective
        let step1 = exec.map(m, |i| -> Result<_> {
            let st = &agents[i];
            let a = &problem.agents[i];
            let start = Instant::now();
            let own_targets: Vec<DVector<f64>> =
                st.bar.xt.iter().map(|x| st.own_block(x)).collect();
            let cost = ProximalCost {
                base: &a.cost,
                state_weight: st.pen.p.clone(),
                state_target: own_targets,
                state_dual: st.bar.lam.clone(),
                control_weight: st.pen.t.clone(),
                control_target: st.bar.ut.clone(),
                control_dual: st.bar.xi.clone(),
            };
            let sol = ddp::solve(&st.traj, &cost, a.dynamics.as_ref(), &settings.ddp)?;
            Ok((sol, start.elapsed().as_secs_f64()))
        });
        let mut step1_times = Vec::with_capacity(m);
        for (st, r) in agents.iter_mut().zip(step1) {
            let (sol, secs) = r?;
            st.traj = sol.trajectory;
            st.law = sol.law;
            step1_times.push(secs);
        }
        match settings.linearize_at {
            Linearization::Current => share_references(&mut net, &mut agents)?,
            Linearization::Previous => {}
        }

        // Step 2: per-timestep projections
        let local = exec.map(m, |i| -> Result<_> {
            let st = &agents[i];
            let start = Instant::now();
            let (ut, xt, relaxed) = project_all(problem, i, st, &st.traj)?;
            Ok((
                ut,
                xt,
                relaxed,
                step1_times[i] + start.elapsed().as_secs_f64(),
            ))
        });
        let mut times = Vec::with_capacity(m);
        let mut next_plain: Vec<Iterate> = Vec::with_capacity(m);
        for (i, r) in local.into_iter().enumerate() {
            let (ut, xt, relaxed, secs) = r?;
            let st = &agents[i];
            let mut it = st.plain.clone();
            it.ut = ut;
            it.xt = xt;
            next_plain.push(it);
            out.relaxed.extend(relaxed.into_iter().map(|k| (n, i, k)));
            times.push(secs);
        }

        // copies to owners: block j of x̃_i^a and ȳ_i goes to j
        let outgoing = (0..m)
            .map(|i| {
                let st = &agents[i];
                (1..st.members.len())
                    .map(|slot| {
                        let msg = CopyMessage {
                            states: next_plain[i].xt.iter().map(|x| st.block(slot, x)).collect(),
                            state_duals: st.bar.y.iter().map(|y| st.block(slot, y)).collect(),
                            state_weight: st.block(slot, &st.pen.m),
                            ..CopyMessage::default()
                        };
                        (st.members[slot], msg)
                    })
                    .collect()
            })
            .collect();
        let copies = net.exchange(Phase::CopiesToOwner, PayloadKind::Copy, outgoing)?;

        // Step 3: global update of each agent's own trajectory
        let globals: Vec<Vec<DVector<f64>>> = exec.map(m, |i| {
            let st = &agents[i];
            let own_states: Vec<DVector<f64>> =
                next_plain[i].xt.iter().map(|x| st.own_block(x)).collect();
            let own_duals: Vec<DVector<f64>> = st.bar.y.iter().map(|y| st.own_block(y)).collect();
            let own_w = st.own_block(&st.pen.m);
            let mut parts: Vec<WeightedCopy> = vec![(&own_states, &own_duals, &own_w)];
            for (_, msg) in &copies[i] {
                parts.push((&msg.states, &msg.state_duals, &msg.state_weight));
            }
            consensus_average(settings.penalty.mode, &parts)
        });

        let inbound =
            net.broadcast_to_dependents(Phase::GlobalsToNeighbors, PayloadKind::Global, &globals)?;
        let mut per_agent = Vec::with_capacity(m);
        for i in 0..m {
            let st = &mut agents[i];
            let mut it = next_plain[i].clone();
            let mut blocks = vec![globals[i].clone()];
            for &j in &st.members[1..] {
                blocks.push(take_from(&inbound[i], j, i)?);
            }
            it.za = (0..=kk)
                .map(|k| concat(&blocks.iter().map(|b| &b[k]).collect::<Vec<_>>()))
                .collect();

            // dual ascent from the extrapolated duals
            it.xi = (0..kk)
                .map(|k| {
                    &st.bar.xi[k] + (&st.traj.controls[k] - &it.ut[k]).component_mul(&st.pen.t)
                })
                .collect();
            it.lam = (0..=kk)
                .map(|k| {
                    &st.bar.lam[k]
                        + (&st.traj.states[k] - it.xt[k].rows(0, st.p)).component_mul(&st.pen.p)
                })
                .collect();
            it.y = (0..=kk)
                .map(|k| &st.bar.y[k] + (&it.xt[k] - &it.za[k]).component_mul(&st.pen.m))
                .collect();

            let old = std::mem::replace(&mut st.plain, it);
            st.prev = old;
            per_agent.push(residuals(st, &st.prev));
        }
        let total = Residuals::total(&per_agent);

        // momentum
        let mut gamma = nesterov.next_gamma();
        if settings.nesterov_restart && guard.push(total.primal.iter().sum()) {
            nesterov.restart();
            gamma = 0.0;
            out.restarts += 1;
        }
        for st in agents.iter_mut() {
            st.bar = st.plain.extrapolated(&st.prev, gamma);
        }

        // decentralized adaptation
        if let Some(ad) = &settings.adaptation {
            if n % ad.interval == 0 {
                for (st, r) in agents.iter_mut().zip(&per_agent) {
                    let mut s = st.pen.scale;
                    for (b, v) in s.iter_mut().enumerate() {
                        *v = ad.adapt(b, *v, r.primal[b], r.dual[b]);
                    }
                    st.pen.rescale(s);
                }
            }
        }

        out.scales
            .push(agents.iter().map(|s| s.pen.scale).collect());
        out.residuals.push(per_agent);
        out.totals.push(total);
        out.local_times.push(times);
        out.iterations = n;
        if settings.stop.as_ref().is_some_and(|s| s.satisfied(&total)) {
            out.converged = true;
            break;
        }
    }

    out.messages = net.log().to_vec();
    for st in agents {
        out.safe_states
            .push(st.plain.xt.iter().map(|x| st.own_block(x)).collect());
        out.safe_controls.push(st.plain.ut.clone());
        out.trajectories.push(st.traj);
        out.laws.push(st.law);
    }
    Ok(out)
}

/// Writes the residual log: iteration, agent, six norms, three scales.
pub fn write_residual_log<W: std::io::Write>(
    result: &MdResult,
    w: W,
) -> std::result::Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "iteration",
        "agent",
        "primal_control",
        "primal_state",
        "primal_global",
        "dual_control",
        "dual_state",
        "dual_global",
        "scale_control",
        "scale_state",
        "scale_global",
    ])?;
    for (n, (rs, ss)) in result.residuals.iter().zip(&result.scales).enumerate() {
        for (i, (r, s)) in rs.iter().zip(ss).enumerate() {
            let mut rec = vec![(n + 1).to_string(), i.to_string()];
            rec.extend(
                r.primal
                    .iter()
                    .chain(&r.dual)
                    .chain(s)
                    .map(|v| format!("{v:e}")),
            );
            wr.write_record(rec)?;
        }
    }
    wr.flush()?;
    Ok(())
}
