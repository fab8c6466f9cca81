//! Augmented-Lagrangian treatment of inequality constraints on top of DDP.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintStack;
use crate::cost::{Cost, RunningExpansion, TerminalExpansion};
use crate::ddp::{self, ControlLaw, DdpSettings, Trajectory};
use crate::dynamics::Dynamics;
use crate::error::DdpError;

/// Multipliers `w ≥ 0` and penalties `β > 0`, one per row per timestep
/// (`K+1` entries; the last is the terminal step).
#[derive(Debug, Clone, PartialEq)]
pub struct AlState {
    pub multipliers: Vec<DVector<f64>>,
    pub penalties: Vec<DVector<f64>>,
    /// Outer iterations performed so far.
    pub outer: usize,
}

impl AlState {
    pub fn new(horizon: usize, rows: usize, penalty: f64) -> Self {
        Self {
            multipliers: vec![DVector::zeros(rows); horizon + 1],
            penalties: vec![DVector::from_element(rows, penalty); horizon + 1],
            outer: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.multipliers.first().map_or(0, |m| m.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlSettings {
    pub max_outer: usize,
    pub tolerance: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
}

impl Default for AlSettings {
    fn default() -> Self {
        Self {
            max_outer: 10,
            tolerance: 1e-3,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            penalty_max: 1e8,
        }
    }
}

/// Base cost plus `(β/2)max(0, s + w/β)² − w²/(2β)` per constraint row.
pub struct PenalizedCost<'a, C: ?Sized> {
    pub base: &'a C,
    pub stack: &'a ConstraintStack,
    pub state: &'a AlState,
}

/// Builds the penalized cost.
pub fn penalized_cost<'a, C: Cost + ?Sized>(
    base: &'a C,
    stack: &'a ConstraintStack,
    state: &'a AlState,
) -> PenalizedCost<'a, C> {
    assert_eq!(
        stack.rows(),
        state.rows(),
        "constraint stack and AL state disagree on row count"
    );
    PenalizedCost { base, stack, state }
}

fn penalty_value(s: &DVector<f64>, w: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for r in 0..s.len() {
        let shifted = (s[r] + w[r] / b[r]).max(0.0);
        total += 0.5 * b[r] * shifted * shifted - w[r] * w[r] / (2.0 * b[r]);
    }
    total
}

/// Per-row weights `(w + βs)` and `β` for rows in the active branch.
fn active_rows(s: &DVector<f64>, w: &DVector<f64>, b: &DVector<f64>) -> Vec<(usize, f64, f64)> {
    (0..s.len())
        .filter(|&r| s[r] + w[r] / b[r] > 0.0)
        .map(|r| (r, w[r] + b[r] * s[r], b[r]))
        .collect()
}

impl<C: Cost + ?Sized> Cost for PenalizedCost<'_, C> {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.base.control_dim()
    }
    fn running(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64 {
        let s = self.stack.eval(x, Some(u), k);
        self.base.running(x, u, k)
            + penalty_value(&s, &self.state.multipliers[k], &self.state.penalties[k])
    }
    fn terminal(&self, x: &DVector<f64>) -> f64 {
        let k = self.state.multipliers.len() - 1;
        let s = self.stack.eval(x, None, k);
        self.base.terminal(x)
            + penalty_value(&s, &self.state.multipliers[k], &self.state.penalties[k])
    }
    fn running_expansion(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> RunningExpansion {
        let mut e = self.base.running_expansion(x, u, k);
        let s = self.stack.eval(x, Some(u), k);
        let active = active_rows(&s, &self.state.multipliers[k], &self.state.penalties[k]);
        if active.is_empty() {
            return e;
        }
        let (jx, ju) = self.stack.jacobians(x, Some(u), k, u.len());
        for (r, g, beta) in active {
            let ax = jx.row(r).transpose();
            let au = ju.row(r).transpose();
            e.lx.axpy(g, &ax, 1.0);
            e.lu.axpy(g, &au, 1.0);
            e.lxx.ger(beta, &ax, &ax, 1.0);
            e.luu.ger(beta, &au, &au, 1.0);
            e.lux.ger(beta, &au, &ax, 1.0);
        }
        e
    }
    fn terminal_expansion(&self, x: &DVector<f64>) -> TerminalExpansion {
        let k = self.state.multipliers.len() - 1;
        let mut e = self.base.terminal_expansion(x);
        let s = self.stack.eval(x, None, k);
        let active = active_rows(&s, &self.state.multipliers[k], &self.state.penalties[k]);
        if active.is_empty() {
            return e;
        }
        let (jx, _) = self.stack.jacobians(x, None, k, 0);
        for (r, g, beta) in active {
            let ax = jx.row(r).transpose();
            e.lx.axpy(g, &ax, 1.0);
            e.lxx.ger(beta, &ax, &ax, 1.0);
        }
        e
    }
}

/// Constraint values along a trajectory, one vector per timestep.
pub fn evaluate(stack: &ConstraintStack, traj: &Trajectory) -> Vec<DVector<f64>> {
    traj.states
        .iter()
        .enumerate()
        .map(|(k, x)| stack.eval(x, traj.controls.get(k), k))
        .collect()
}

/// `max_k ‖max(0, s_k)‖₂`.
pub fn violation_norm(values: &[DVector<f64>]) -> f64 {
    values
        .iter()
        .map(|s| s.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `w ← max(0, w + βs)`; `β ← min(β·growth, β_max)` on rows with `s > tol`.
pub fn update_multipliers(
    state: &AlState,
    achieved: &[DVector<f64>],
    settings: &AlSettings,
) -> AlState {
    let mut next = state.clone();
    for (k, s) in achieved.iter().enumerate() {
        for r in 0..s.len() {
            let b = state.penalties[k][r];
            next.multipliers[k][r] = (state.multipliers[k][r] + b * s[r]).max(0.0);
            if s[r] > settings.tolerance {
                next.penalties[k][r] = (b * settings.penalty_growth).min(settings.penalty_max);
            }
        }
    }
    next.outer += 1;
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlSolution {
    pub trajectory: Trajectory,
    pub law: ControlLaw,
    pub state: AlState,
    /// Final `max_k ‖max(0, s_k)‖₂`.
    pub violation: f64,
    pub outer_iterations: usize,
    pub ddp_iterations: usize,
}

/// Alternates DDP on the penalized cost with multiplier updates.
///
/// `warm` continues from an existing multiplier state; otherwise all
/// multipliers start at zero with penalty `penalty_init`.
pub fn solve_constrained(
    initial: &Trajectory,
    base: &dyn Cost,
    dynamics: &dyn Dynamics,
    stack: &ConstraintStack,
    ddp_settings: &DdpSettings,
    settings: &AlSettings,
    warm: Option<AlState>,
) -> Result<AlSolution, DdpError> {
    let horizon = initial.horizon();
    let mut state =
        warm.unwrap_or_else(|| AlState::new(horizon, stack.rows(), settings.penalty_init));
    if stack.is_empty() {
        let sol = ddp::solve(initial, base, dynamics, ddp_settings)?;
        return Ok(AlSolution {
            trajectory: sol.trajectory,
            law: sol.law,
            state,
            violation: 0.0,
            outer_iterations: 1,
            ddp_iterations: sol.iterations,
        });
    }
    let mut traj = initial.clone();
    let mut inner = ddp_settings.clone();
    let mut ddp_iterations = 0;
    let mut last = None;
    for outer in 0..settings.max_outer.max(1) {
        let cost = penalized_cost(base, stack, &state);
        let sol = ddp::solve(&traj, &cost, dynamics, &inner)?;
        inner.warmstart = true;
        ddp_iterations += sol.iterations;
        traj = sol.trajectory;
        let values = evaluate(stack, &traj);
        let violation = violation_norm(&values);
        last = Some((sol.law, violation, outer + 1));
        if violation <= settings.tolerance {
            break;
        }
        state = update_multipliers(&state, &values, settings);
    }
    let (law, violation, outer_iterations) = last.expect("at least one outer iteration");
    Ok(AlSolution {
        trajectory: traj,
        law,
        state,
        violation,
        outer_iterations,
        ddp_iterations,
    })
}

/// Dense `(rows × dim)` helper used by tests and diagnostics.
pub fn stacked_jacobian(
    stack: &ConstraintStack,
    x: &DVector<f64>,
    u: &DVector<f64>,
    k: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    stack.jacobians(x, Some(u), k, u.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{BoxConstraint, Constraint, Target};
    use crate::cost::QuadraticCost;
    use crate::dynamics::LinearDynamics;

    fn one_row_stack() -> ConstraintStack {
        // s = x_0 − 1
        let b = BoxConstraint::new(
            Target::State,
            vec![0],
            vec![f64::NEG_INFINITY],
            vec![1.0],
            None,
            None,
        )
        .unwrap();
        ConstraintStack::new(vec![Constraint::Box(b)])
    }

    #[test]
    fn single_row_penalty_value_and_gradient() {
        let base = QuadraticCost::diagonal(&[0.0], &[0.0], &[0.0], DVector::zeros(1));
        let stack = one_row_stack();
        let mut st = AlState::new(1, 1, 2.0);
        st.multipliers[0][0] = 0.0;
        let c = penalized_cost(&base, &stack, &st);
        let x = DVector::from_element(1, 2.0);
        let u = DVector::zeros(1);
        assert_eq!(c.running(&x, &u, 0), 1.0);
        let e = c.running_expansion(&x, &u, 0);
        assert_eq!(e.lx[0], 2.0);
        assert_eq!(e.lxx[(0, 0)], 2.0);
    }

    #[test]
    fn inactive_rows_leave_cost_unchanged() {
        let base = QuadraticCost::diagonal(&[1.5], &[0.5], &[2.0], DVector::from_element(1, 0.2));
        let stack = one_row_stack();
        let st = AlState::new(1, 1, 10.0);
        let c = penalized_cost(&base, &stack, &st);
        let x = DVector::from_element(1, -3.0);
        let u = DVector::from_element(1, 0.7);
        assert_eq!(c.running(&x, &u, 0), base.running(&x, &u, 0));
        assert_eq!(
            c.running_expansion(&x, &u, 0),
            base.running_expansion(&x, &u, 0)
        );
    }

    #[test]
    fn multiplier_update_examples() {
        let settings = AlSettings::default();
        let mut st = AlState::new(0, 1, 2.0);
        let zero = vec![DVector::zeros(1)];
        assert_eq!(
            update_multipliers(&st, &zero, &settings).multipliers,
            st.multipliers
        );
        assert_eq!(
            update_multipliers(&st, &zero, &settings).penalties,
            st.penalties
        );
        let next = update_multipliers(&st, &[DVector::from_element(1, 0.5)], &settings);
        assert_eq!(next.multipliers[0][0], 1.0);
        assert_eq!(next.penalties[0][0], 20.0);
        st.multipliers[0][0] = 3.0;
        let next = update_multipliers(&st, &[DVector::from_element(1, -2.0)], &settings);
        assert_eq!(next.multipliers[0][0], 0.0);
    }

    #[test]
    fn empty_stack_matches_plain_ddp() {
        let dynamics = LinearDynamics::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 0.1]),
        );
        let cost = QuadraticCost::diagonal(
            &[1.0, 0.1],
            &[0.01],
            &[10.0, 1.0],
            DVector::from_vec(vec![1.0, 0.0]),
        );
        let init = Trajectory::zero_controls(&dynamics, &DVector::zeros(2), 30, 0.1);
        let s = DdpSettings::default();
        let plain = ddp::solve(&init, &cost, &dynamics, &s).unwrap();
        let al = solve_constrained(
            &init,
            &cost,
            &dynamics,
            &ConstraintStack::default(),
            &s,
            &AlSettings::default(),
            None,
        )
        .unwrap();
        assert_eq!(plain.trajectory, al.trajectory);
        assert_eq!(plain.law, al.law);
    }
}
